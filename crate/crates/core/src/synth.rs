//! Seeded synthetic instances for property checks: random sparse tensors,
//! fully supported patterns, rank-1 matrices and consensus-ordered tensors.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::completion::CellIter;
use crate::solver::SolverConfig;
use crate::tensor::{enumerate_subtensors, ScaleSet, SparseTensor};

/// Solver setting for checks of exact limit identities.
pub fn tight() -> SolverConfig {
    SolverConfig {
        epsilon: 1e-20,
        max_sweeps: 100_000,
        ..SolverConfig::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Every cell observed independently with probability `density`, values in
/// `[0.5, 5)`. At least one entry is always present.
pub fn random_sparse(rng: &mut ChaCha8Rng, shape: &[usize], density: f64) -> SparseTensor {
    let mut entries: Vec<(Vec<usize>, f64)> = CellIter::new(shape)
        .filter_map(|i| rng.gen_bool(density).then(|| (i, rng.gen_range(0.5..5.0))))
        .collect();
    if entries.is_empty() {
        let i = shape.iter().map(|&n| rng.gen_range(0..n)).collect();
        entries.push((i, rng.gen_range(0.5..5.0)));
    }
    SparseTensor::new(shape.to_vec(), entries).unwrap()
}

/// Cells with any zero coordinate are always observed; the rest with
/// probability `density`. Every unobserved cell then has a box reaching the
/// origin, and no subtensor of any family is empty.
pub fn supported_sparse(rng: &mut ChaCha8Rng, shape: &[usize], density: f64) -> SparseTensor {
    let entries: Vec<(Vec<usize>, f64)> = CellIter::new(shape)
        .filter_map(|i| (i.contains(&0) || rng.gen_bool(density)).then(|| (i, rng.gen_range(0.5..5.0))))
        .collect();
    SparseTensor::new(shape.to_vec(), entries).unwrap()
}

/// Positive rank-1 `m x n` matrix with `hidden` of its cells removed. Row 0
/// and column 0 stay observed, which keeps full support and leaves no row or
/// column empty.
pub struct RankOne {
    pub observed: SparseTensor,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

pub fn rank_one(rng: &mut ChaCha8Rng, m: usize, n: usize, hidden: f64) -> RankOne {
    let rows: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..5.0)).collect();
    let cols: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..5.0)).collect();
    let mut interior: Vec<(usize, usize)> = (1..m).flat_map(|i| (1..n).map(move |j| (i, j))).collect();
    interior.shuffle(rng);
    let n_hidden = (hidden * (m * n) as f64).round() as usize;
    let hide: HashSet<(usize, usize)> = interior.into_iter().take(n_hidden).collect();
    let entries = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|c| !hide.contains(c))
        .map(|(i, j)| (vec![i, j], rows[i] * cols[j]));
    RankOne {
        observed: SparseTensor::new(vec![m, n], entries).unwrap(),
        rows,
        cols,
    }
}

/// Random positive scales on every family-`k` subtensor of `shape`.
pub fn random_scales(rng: &mut ChaCha8Rng, shape: &[usize], k: usize) -> ScaleSet {
    let keys = enumerate_subtensors(shape, k).unwrap();
    ScaleSet::from_pairs(
        shape,
        k,
        keys.into_iter().map(|key| (key, rng.gen_range(-2.0f64..2.0).exp())),
    )
    .unwrap()
}

/// A tensor whose values rise along `gamma` in dimension `dim` for every
/// prefix, built as a rank-1 product (ratio 1.6 between consecutive gamma
/// positions) times noise in `[0.95, 1.05]`.
///
/// Prefixes with a zero coordinate are fully observed; prefix `(1, 1, ..)`
/// has none of its gamma positions observed; other prefixes are either
/// gamma-unobserved or observed at random.
pub struct OrderedCase {
    pub tensor: SparseTensor,
    pub dim: usize,
    pub gamma: Vec<usize>,
}

pub fn ordered_case(rng: &mut ChaCha8Rng, shape: &[usize], dim: usize) -> OrderedCase {
    let n = shape[dim];
    let mut gamma: Vec<usize> = (0..n).collect();
    gamma.shuffle(rng);
    gamma.truncate(rng.gen_range(2..=n));

    let mut factors: Vec<Vec<f64>> = shape
        .iter()
        .map(|&s| (0..s).map(|_| rng.gen_range(0.5..2.0)).collect())
        .collect();
    for (t, &g) in gamma.iter().enumerate() {
        factors[dim][g] = 0.3 * 1.6f64.powi(t as i32);
    }

    let prefix_shape: Vec<usize> = (0..shape.len()).filter(|&d| d != dim).map(|d| shape[d]).collect();
    let mut entries = Vec::new();
    for prefix in CellIter::new(&prefix_shape) {
        let known = prefix.contains(&0);
        let blank_gamma = !known && (prefix.iter().all(|&c| c == 1) || rng.gen_bool(0.5));
        for g in 0..n {
            let mut index = prefix.clone();
            index.insert(dim, g);
            let observe = if known {
                true
            } else if gamma.contains(&g) && blank_gamma {
                false
            } else {
                rng.gen_bool(0.5)
            };
            if observe {
                let clean: f64 = index.iter().enumerate().map(|(d, &c)| factors[d][c]).product();
                entries.push((index, clean * rng.gen_range(0.95..1.05)));
            }
        }
    }
    OrderedCase {
        tensor: SparseTensor::new(shape.to_vec(), entries).unwrap(),
        dim,
        gamma,
    }
}
