//! Latent scale learning by log-space subtensor balancing.
//!
//! Works in the log domain: every sweep visits each non-empty subtensor once,
//! subtracts the mean of its observed log entries and adds the removed amount
//! to that subtensor's log scale. At the fixed point every subtensor's
//! observed entries multiply to 1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{ScaleSet, SparseTensor, SubtensorIndex, TensorError};

/// Families with at least this many entries are updated with rayon.
const PARALLEL_THRESHOLD: usize = 1 << 15;

/// Order in which subtensor families are visited during a sweep. Keys within
/// a family are disjoint, so only the family order affects the iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    #[default]
    Canonical,
    Reversed,
    /// A seeded permutation of the families, fixed for the whole solve.
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once a sweep's summed squared update falls below this value.
    pub epsilon: f64,
    pub max_sweeps: usize,
    pub order: SweepOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            max_sweeps: 1000,
            order: SweepOrder::Canonical,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 || self.max_sweeps == 0 {
            return Err(SolverError::InvalidConfig {
                epsilon: self.epsilon,
                max_sweeps: self.max_sweeps,
            });
        }
        Ok(())
    }

    fn family_order(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        match self.order {
            SweepOrder::Canonical => {}
            SweepOrder::Reversed => order.reverse(),
            SweepOrder::Shuffled(seed) => order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
        }
        order
    }
}

/// Result of balancing a tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    /// Balanced tensor with the input's observed pattern.
    pub balanced: SparseTensor,
    /// One positive scale per non-empty subtensor.
    pub scales: ScaleSet,
    pub sweeps_run: usize,
    pub final_residual: f64,
    pub residual_trace: Vec<f64>,
}

impl LatentModel {
    pub fn k(&self) -> usize {
        self.scales.k()
    }

    pub fn converged(&self, epsilon: f64) -> bool {
        self.final_residual < epsilon || self.final_residual == 0.0
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("tensor has no observed entries")]
    EmptyTensor,
    #[error("invalid solver config (epsilon={epsilon}, max_sweeps={max_sweeps})")]
    InvalidConfig { epsilon: f64, max_sweeps: usize },
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    DidNotConverge {
        sweeps: usize,
        residual: f64,
        model: Box<LatentModel>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One Gauss-Seidel pass over every non-empty subtensor, family by family in
/// `family_order`. Returns the summed squared mean corrections.
pub fn sweep_once(
    log_entries: &mut [f64],
    log_scales: &mut [Vec<f64>],
    index: &SubtensorIndex,
    family_order: &[usize],
) -> f64 {
    let mut v = 0.0;
    for &fi in family_order {
        let fam = &index.families()[fi];
        let mean_of = |slot: usize| {
            let members = fam.members(slot);
            let sum: f64 = members.iter().map(|&e| log_entries[e]).sum();
            -sum / members.len() as f64
        };
        let rho: Vec<f64> = if log_entries.len() >= PARALLEL_THRESHOLD {
            (0..fam.len()).into_par_iter().map(mean_of).collect()
        } else {
            (0..fam.len()).map(mean_of).collect()
        };
        if log_entries.len() >= PARALLEL_THRESHOLD {
            log_entries
                .par_iter_mut()
                .zip(fam.entry_slot().par_iter())
                .for_each(|(x, &s)| *x += rho[s]);
        } else {
            for (x, &s) in log_entries.iter_mut().zip(fam.entry_slot()) {
                *x += rho[s];
            }
        }
        for (z, r) in log_scales[fi].iter_mut().zip(&rho) {
            *z += r;
        }
        v += rho.iter().map(|r| r * r).sum::<f64>();
    }
    v
}

/// Learns the balanced tensor and family-`k` scales of `tensor`.
pub fn lli(tensor: &SparseTensor, k: usize, config: &SolverConfig) -> Result<LatentModel, SolverError> {
    let index = SubtensorIndex::build(tensor, k)?;
    lli_with_index(tensor, &index, config)
}

pub fn lli_with_index(
    tensor: &SparseTensor,
    index: &SubtensorIndex,
    config: &SolverConfig,
) -> Result<LatentModel, SolverError> {
    config.validate()?;
    if tensor.is_empty() {
        return Err(SolverError::EmptyTensor);
    }
    let mut log_entries: Vec<f64> = tensor.values().iter().map(|v| v.ln()).collect();
    let mut log_scales: Vec<Vec<f64>> = index.families().iter().map(|f| vec![0.0; f.len()]).collect();
    let order = config.family_order(index.families().len());

    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_sweeps {
        let v = sweep_once(&mut log_entries, &mut log_scales, index, &order);
        trace.push(v);
        if v < config.epsilon || v == 0.0 {
            converged = true;
            break;
        }
    }

    let balanced = tensor.with_values(log_entries.iter().map(|x| x.exp().max(f64::MIN_POSITIVE)).collect());
    let scales = ScaleSet::from_index(
        index,
        log_scales
            .into_iter()
            .map(|zs| zs.into_iter().map(f64::exp).collect())
            .collect(),
    );
    let model = LatentModel {
        balanced,
        scales,
        sweeps_run: trace.len(),
        final_residual: *trace.last().expect("max_sweeps >= 1"),
        residual_trace: trace,
    };
    if converged {
        Ok(model)
    } else {
        Err(SolverError::DidNotConverge {
            sweeps: model.sweeps_run,
            residual: model.final_residual,
            model: Box::new(model),
        })
    }
}
