//! Unit-consistent sparse tensor completion.
//!
//! Observed entries of a positive sparse tensor are balanced so that every
//! `k`-dimensional subtensor multiplies to 1; the learned per-subtensor scales
//! then fill the unobserved cells. The crate also carries rating-dataset
//! loaders and a cross-validation harness for using the completion as a
//! recommender.

pub mod completion;
pub mod data;
pub mod eval;
pub mod recsys;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use completion::{check_consensus_ordering, check_full_support, mca, tca, unit_consistency_gap, CompletedTensor};
pub use solver::{lli, LatentModel, SolverConfig, SolverError, SweepOrder};
pub use tensor::{containing_keys, enumerate_subtensors, scale_apply, ScaleSet, SparseTensor, SubtensorKey};
