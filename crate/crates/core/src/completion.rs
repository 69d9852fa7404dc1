//! Tensor completion by inverse latent scaling, plus structural and
//! invariance checkers for completed tensors.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::solver::{lli, LatentModel, SolverConfig, SolverError};
use crate::tensor::{scale_apply, ScaleSet, SparseTensor, TensorError};

/// Largest index space [`CompletedTensor::materialize`] will expand.
pub const MAX_DENSE_CELLS: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum CompletionError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("matrix completion needs a 2-D tensor, got {ndim}-D")]
    NotAMatrix { ndim: usize },
    #[error("invalid ordering: {0}")]
    InvalidGamma(String),
    #[error("ordering checks need k = D - 1 (got k={k}, D={ndim})")]
    NotHyperplaneSlices { k: usize, ndim: usize },
    #[error("index space of {cells} cells is too large to expand")]
    TooLarge { cells: u64 },
}

pub type Result<T> = std::result::Result<T, CompletionError>;

/// Where a completed value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    /// Filled from the scales of non-empty subtensors only.
    Completed,
    /// Filled, but at least one containing subtensor had no observations and
    /// contributed the implicit scale 1.
    WeaklyDetermined,
}

/// The input tensor together with the latent model used to fill it. Fill
/// values are computed on demand.
#[derive(Debug, Clone)]
pub struct CompletedTensor {
    source: SparseTensor,
    model: LatentModel,
}

impl CompletedTensor {
    pub fn from_model(source: SparseTensor, model: LatentModel) -> Self {
        debug_assert_eq!(source.shape(), model.scales.shape());
        Self { source, model }
    }

    pub fn source(&self) -> &SparseTensor {
        &self.source
    }

    pub fn model(&self) -> &LatentModel {
        &self.model
    }

    pub fn shape(&self) -> &[usize] {
        self.source.shape()
    }

    pub fn k(&self) -> usize {
        self.model.k()
    }

    /// Completed value at `index`: the stored value if observed, otherwise
    /// the product of inverse scales of every containing subtensor.
    pub fn get(&self, index: &[usize]) -> Result<f64> {
        self.source.check_index(index)?;
        Ok(self.value_unchecked(index))
    }

    pub(crate) fn value_unchecked(&self, index: &[usize]) -> f64 {
        match self.source.get(index) {
            Some(v) => v,
            None => self.model.scales.inverse_factor(index),
        }
    }

    /// Fill value from the scales alone, ignoring whether `index` is observed.
    pub fn fill(&self, index: &[usize]) -> Result<f64> {
        self.source.check_index(index)?;
        Ok(self.model.scales.inverse_factor(index))
    }

    pub fn provenance(&self, index: &[usize]) -> Result<Provenance> {
        self.source.check_index(index)?;
        Ok(if self.source.is_observed(index) {
            Provenance::Observed
        } else if self.model.scales.covers(index) {
            Provenance::Completed
        } else {
            Provenance::WeaklyDetermined
        })
    }

    /// Dense row-major expansion, for small shapes only.
    pub fn materialize(&self) -> Result<Vec<f64>> {
        let cells = self.source.num_cells();
        if cells > MAX_DENSE_CELLS {
            return Err(CompletionError::TooLarge { cells });
        }
        Ok(CellIter::new(self.shape()).map(|i| self.value_unchecked(&i)).collect())
    }
}

/// Row-major iterator over every index of a shape.
pub struct CellIter {
    shape: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl CellIter {
    pub fn new(shape: &[usize]) -> Self {
        let next = (!shape.is_empty() && shape.iter().all(|&n| n > 0)).then(|| vec![0; shape.len()]);
        Self {
            shape: shape.to_vec(),
            next,
        }
    }
}

impl Iterator for CellIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for d in (0..succ.len()).rev() {
            succ[d] += 1;
            if succ[d] < self.shape[d] {
                self.next = Some(succ);
                break;
            }
            succ[d] = 0;
        }
        Some(current)
    }
}

/// Balances `tensor` with family-`k` subtensors and returns the completion.
pub fn tca(tensor: &SparseTensor, k: usize, config: &SolverConfig) -> Result<CompletedTensor> {
    let model = lli(tensor, k, config)?;
    Ok(CompletedTensor::from_model(tensor.clone(), model))
}

/// Matrix completion: rows and columns as the balanced subtensors.
pub fn mca(matrix: &SparseTensor, config: &SolverConfig) -> Result<CompletedTensor> {
    if matrix.ndim() != 2 {
        return Err(CompletionError::NotAMatrix { ndim: matrix.ndim() });
    }
    tca(matrix, 1, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    pub fully_supported: bool,
    /// Unobserved indices without any complete box of observed corners.
    pub violations: Vec<Vec<usize>>,
    /// Signed box diagonal found for each supported unobserved index.
    pub witness: BTreeMap<Vec<usize>, Vec<i64>>,
}

/// Signed offsets for one dimension in search order: -1, 1, -2, 2, ...
fn offsets_for(i: usize, n: usize, bound: usize) -> Vec<i64> {
    let mut out = Vec::new();
    for m in 1..=bound as i64 {
        for s in [-m, m] {
            let j = i as i64 + s;
            if j >= 0 && (j as usize) < n {
                out.push(s);
            }
        }
    }
    out
}

fn find_box(tensor: &SparseTensor, index: &[usize], max_offset: &[usize]) -> Option<Vec<i64>> {
    let d = index.len();
    let choices: Vec<Vec<i64>> = (0..d)
        .map(|dim| offsets_for(index[dim], tensor.shape()[dim], max_offset[dim]))
        .collect();
    if choices.iter().any(Vec::is_empty) {
        return None;
    }
    let mut pick = vec![0usize; d];
    let mut corner = vec![0usize; d];
    loop {
        let s: Vec<i64> = pick.iter().zip(&choices).map(|(&p, c)| c[p]).collect();
        let complete = (1u32..(1 << d)).all(|mask| {
            for dim in 0..d {
                let delta = if mask & (1 << dim) != 0 { s[dim] } else { 0 };
                corner[dim] = (index[dim] as i64 + delta) as usize;
            }
            tensor.is_observed(&corner)
        });
        if complete {
            return Some(s);
        }
        let mut dim = d;
        loop {
            if dim == 0 {
                return None;
            }
            dim -= 1;
            pick[dim] += 1;
            if pick[dim] < choices[dim].len() {
                break;
            }
            pick[dim] = 0;
        }
    }
}

/// Exhaustive box-corner support search. For each unobserved `i`, looks for a
/// signed offset vector `s` (`1 <= |s_d| <= max_offset[d]`) such that every
/// corner `i + delta`, `delta_d in {0, s_d}`, other than `i` itself is
/// observed. `max_offset` defaults to each dimension's full extent.
pub fn check_full_support(tensor: &SparseTensor, max_offset: Option<&[usize]>) -> SupportReport {
    let bounds: Vec<usize> = match max_offset {
        Some(b) => b.to_vec(),
        None => tensor.shape().iter().map(|&n| n.saturating_sub(1)).collect(),
    };
    let mut violations = Vec::new();
    let mut witness = BTreeMap::new();
    for index in CellIter::new(tensor.shape()) {
        if tensor.is_observed(&index) {
            continue;
        }
        match find_box(tensor, &index, &bounds) {
            Some(s) => {
                witness.insert(index, s);
            }
            None => violations.push(index),
        }
    }
    SupportReport {
        fully_supported: violations.is_empty(),
        violations,
        witness,
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative difference over the whole index space between
/// `Z *_k TCA(A, k)` and `TCA(Z *_k A, k)`.
pub fn unit_consistency_gap(tensor: &SparseTensor, scales: &ScaleSet, k: usize, config: &SolverConfig) -> Result<f64> {
    let cells = tensor.num_cells();
    if cells > MAX_DENSE_CELLS {
        return Err(CompletionError::TooLarge { cells });
    }
    let direct = tca(tensor, k, config)?;
    let rescaled = tca(&scale_apply(tensor, scales)?, k, config)?;
    Ok(CellIter::new(tensor.shape())
        .map(|i| {
            let lhs = scales.factor(&i) * direct.value_unchecked(&i);
            relative_gap(lhs, rescaled.value_unchecked(&i))
        })
        .fold(0.0, f64::max))
}

/// A ranking `gamma` over the indices of dimension `dim`: the completed
/// values should increase along `gamma`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingSpec {
    pub dim: usize,
    pub gamma: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingVerdict {
    /// No prefix has every gamma position observed in increasing order.
    PreconditionUnmet,
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingViolation {
    /// Full index of the first cell of the offending pair.
    pub prefix: Vec<usize>,
    pub lower: usize,
    pub upper: usize,
    pub lower_value: f64,
    pub upper_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusReport {
    pub verdict: OrderingVerdict,
    /// Prefixes with every gamma position observed and strictly increasing.
    pub known: usize,
    /// Prefixes with every gamma position unobserved.
    pub unknown: usize,
    /// Everything else (mixed, or fully observed but out of order).
    pub neither: usize,
    pub violations: Vec<OrderingViolation>,
}

fn with_coord(prefix: &[usize], dim: usize, value: usize) -> Vec<usize> {
    let mut full = Vec::with_capacity(prefix.len() + 1);
    full.extend_from_slice(&prefix[..dim]);
    full.push(value);
    full.extend_from_slice(&prefix[dim..]);
    full
}

/// Checks that every fully-unobserved prefix of `completed` follows `gamma`,
/// given that at least one fully-observed prefix does. Ties are violations.
pub fn check_consensus_ordering(completed: &CompletedTensor, spec: &OrderingSpec) -> Result<ConsensusReport> {
    let shape = completed.shape();
    let ndim = shape.len();
    if completed.k() + 1 != ndim {
        return Err(CompletionError::NotHyperplaneSlices { k: completed.k(), ndim });
    }
    if spec.dim >= ndim {
        return Err(CompletionError::InvalidGamma(format!(
            "dimension {} out of range for {ndim}-D tensor",
            spec.dim
        )));
    }
    if spec.gamma.is_empty() {
        return Err(CompletionError::InvalidGamma("empty ordering".into()));
    }
    if let Some(&g) = spec.gamma.iter().find(|&&g| g >= shape[spec.dim]) {
        return Err(CompletionError::InvalidGamma(format!(
            "index {g} out of range for dimension {} of size {}",
            spec.dim, shape[spec.dim]
        )));
    }
    let mut seen = spec.gamma.clone();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(CompletionError::InvalidGamma("repeated index".into()));
    }

    let prefix_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter_map(|(d, &n)| (d != spec.dim).then_some(n))
        .collect();
    let source = completed.source();
    let (mut known, mut unknown, mut neither) = (0, 0, 0);
    let mut violations = Vec::new();
    for prefix in CellIter::new(&prefix_shape) {
        let cells: Vec<Vec<usize>> = spec.gamma.iter().map(|&g| with_coord(&prefix, spec.dim, g)).collect();
        let observed: Vec<Option<f64>> = cells.iter().map(|c| source.get(c)).collect();
        if observed.iter().all(Option::is_some) {
            let increasing = observed.windows(2).all(|w| w[0].unwrap() < w[1].unwrap());
            if increasing {
                known += 1;
            } else {
                neither += 1;
            }
        } else if observed.iter().all(Option::is_none) {
            unknown += 1;
            let values: Vec<f64> = cells.iter().map(|c| completed.value_unchecked(c)).collect();
            for (a, w) in values.windows(2).enumerate() {
                if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less) {
                    violations.push(OrderingViolation {
                        prefix: cells[a].clone(),
                        lower: spec.gamma[a],
                        upper: spec.gamma[a + 1],
                        lower_value: w[0],
                        upper_value: w[1],
                    });
                }
            }
        } else {
            neither += 1;
        }
    }
    let verdict = if spec.gamma.len() == 1 {
        OrderingVerdict::Pass
    } else if known == 0 {
        OrderingVerdict::PreconditionUnmet
    } else if violations.is_empty() {
        OrderingVerdict::Pass
    } else {
        OrderingVerdict::Fail
    };
    Ok(ConsensusReport {
        verdict,
        known,
        unknown,
        neither,
        violations,
    })
}
