//! Seeded property suites run by `lli check`.

use clap::ValueEnum;
use lli_core::completion::{check_full_support, OrderingSpec, OrderingVerdict};
use lli_core::synth::{self, rel_err, tight};
use lli_core::tensor::SubtensorIndex;
use lli_core::{check_consensus_ordering, lli, mca, tca, unit_consistency_gap, SolverConfig, SparseTensor, SweepOrder};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Property {
    Constraints,
    TwoByTwo,
    RankOne,
    Uniqueness,
    UnitConsistency,
    ConsensusOrdering,
    FullSupport,
}

impl Property {
    pub const ALL: [Property; 7] = [
        Property::Constraints,
        Property::TwoByTwo,
        Property::RankOne,
        Property::Uniqueness,
        Property::UnitConsistency,
        Property::ConsensusOrdering,
        Property::FullSupport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Constraints => "constraints",
            Property::TwoByTwo => "two-by-two",
            Property::RankOne => "rank-one",
            Property::Uniqueness => "uniqueness",
            Property::UnitConsistency => "unit-consistency",
            Property::ConsensusOrdering => "consensus-ordering",
            Property::FullSupport => "full-support",
        }
    }
}

pub struct CheckSettings {
    pub seed: u64,
    pub cases: usize,
    /// Stopping tolerance for the constraint suite; the exact-identity
    /// suites always solve to the tight tolerance.
    pub epsilon: f64,
    pub max_sweeps: usize,
    pub fault: Option<Property>,
}

pub struct CheckResult {
    pub property: Property,
    pub passed: bool,
    pub detail: String,
}

/// Perturbation applied to a measured quantity when a fault is injected.
fn skew(settings: &CheckSettings, p: Property) -> f64 {
    if settings.fault == Some(p) {
        1.01
    } else {
        1.0
    }
}

fn constraints(s: &CheckSettings, rng: &mut rand_chacha::ChaCha8Rng) -> (bool, String) {
    let cfg = SolverConfig {
        epsilon: s.epsilon,
        max_sweeps: s.max_sweeps,
        ..SolverConfig::default()
    };
    let mut worst: f64 = 0.0;
    for n in 0..s.cases {
        let (shape, density, k): (&[usize], f64, usize) = match n % 3 {
            0 => (&[100, 80], 0.1, 1),
            1 => (&[20, 15, 10], 0.3, 1),
            _ => (&[20, 15, 10], 0.3, 2),
        };
        let t = synth::random_sparse(rng, shape, density);
        let m = match lli(&t, k, &cfg) {
            Ok(m) => m,
            Err(lli_core::SolverError::DidNotConverge { model, .. }) => *model,
            Err(e) => return (false, format!("solver failed: {e}")),
        };
        let index = SubtensorIndex::build(&m.balanced, k).unwrap();
        for fam in index.families() {
            for slot in 0..fam.len() {
                let log: f64 = fam.members(slot).iter().map(|&e| m.balanced.value(e).ln()).sum();
                worst = worst.max((log.exp() * skew(s, Property::Constraints) - 1.0).abs());
            }
        }
    }
    (
        worst <= 1e-4,
        format!("max |prod - 1| = {worst:.3e} at epsilon {:e} (limit 1e-4)", s.epsilon),
    )
}

fn two_by_two(s: &CheckSettings, rng: &mut rand_chacha::ChaCha8Rng) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for _ in 0..s.cases * 10 {
        let [a, b, c]: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-5.0f64..5.0).exp());
        let t = SparseTensor::new(vec![2, 2], vec![(vec![0, 0], a), (vec![0, 1], b), (vec![1, 0], c)]).unwrap();
        let v = mca(&t, &tight()).unwrap().get(&[1, 1]).unwrap() * skew(s, Property::TwoByTwo);
        worst = worst.max(rel_err(v, b * c / a));
    }
    (
        worst <= 1e-8,
        format!("max relative error {worst:.3e} vs b*c/a (limit 1e-8)"),
    )
}

fn rank_one(s: &CheckSettings, rng: &mut rand_chacha::ChaCha8Rng) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for _ in 0..s.cases {
        let case = synth::rank_one(rng, 30, 20, 0.2);
        let done = tca(&case.observed, 1, &tight()).unwrap();
        for i in 0..30 {
            for j in 0..20 {
                let v = done.get(&[i, j]).unwrap() * skew(s, Property::RankOne);
                worst = worst.max(rel_err(v, case.rows[i] * case.cols[j]));
            }
        }
    }
    (worst <= 1e-6, format!("max relative error {worst:.3e} (limit 1e-6)"))
}

fn uniqueness(s: &CheckSettings, rng: &mut rand_chacha::ChaCha8Rng) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for n in 0..s.cases {
        let (shape, k): (&[usize], usize) = match n % 3 {
            0 => (&[12, 10], 1),
            1 => (&[5, 4, 4], 1),
            _ => (&[5, 4, 4], 2),
        };
        let t = synth::supported_sparse(rng, shape, 0.3);
        let a = tca(&t, k, &tight()).unwrap().materialize().unwrap();
        let cfg = SolverConfig {
            order: SweepOrder::Shuffled(n as u64),
            ..tight()
        };
        let b = tca(&t, k, &cfg).unwrap().materialize().unwrap();
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x * skew(s, Property::Uniqueness) - y).abs());
        }
    }
    (
        worst <= 1e-8,
        format!("max completion difference across sweep orders {worst:.3e} (limit 1e-8)"),
    )
}

fn unit_consistency(s: &CheckSettings, rng: &mut rand_chacha::ChaCha8Rng) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for n in 0..s.cases {
        let (shape, k) = match n % 3 {
            0 => (vec![rng.gen_range(2..10), rng.gen_range(2..10)], 1),
            r => ((0..3).map(|_| rng.gen_range(2..6)).collect(), r),
        };
        let mut t = synth::supported_sparse(rng, &shape, 0.4);
        let z = synth::random_scales(rng, &shape, k);
        if s.fault == Some(Property::UnitConsistency) {
            // consistency needs every subtensor to be observed
            t = drop_first_slice(&t);
        }
        let gap = unit_consistency_gap(&t, &z, k, &tight()).unwrap();
        worst = worst.max(gap);
    }
    (worst < 1e-8, format!("max gap {worst:.3e} (limit 1e-8)"))
}

/// Removes every entry with first coordinate 0. Cells left in that slice
/// have no observed box, and the subtensors inside it become empty.
fn drop_first_slice(t: &SparseTensor) -> SparseTensor {
    SparseTensor::new(
        t.shape().to_vec(),
        t.iter().filter(|(i, _)| i[0] != 0).map(|(i, v)| (i.to_vec(), v)),
    )
    .unwrap()
}

fn consensus(s: &CheckSettings, rng: &mut rand_chacha::ChaCha8Rng) -> (bool, String) {
    let (mut unknown, mut violations, mut failed) = (0, 0, 0);
    for n in 0..s.cases {
        let (shape, dim): (Vec<usize>, usize) = match n % 4 {
            0 => (vec![rng.gen_range(3..9), rng.gen_range(3..9)], 1),
            d => ((0..3).map(|_| rng.gen_range(3..6)).collect(), d - 1),
        };
        let case = synth::ordered_case(rng, &shape, dim);
        let mut gamma = case.gamma.clone();
        if s.fault == Some(Property::ConsensusOrdering) {
            gamma.reverse();
        }
        let done = tca(&case.tensor, shape.len() - 1, &tight()).unwrap();
        let report = check_consensus_ordering(&done, &OrderingSpec { dim, gamma }).unwrap();
        unknown += report.unknown;
        violations += report.violations.len();
        failed += (report.verdict != OrderingVerdict::Pass) as usize;
    }
    (
        failed == 0,
        format!(
            "{} constructions, {unknown} unobserved prefixes, {violations} ordering violations, {failed} not passing",
            s.cases
        ),
    )
}

fn full_support(s: &CheckSettings, rng: &mut rand_chacha::ChaCha8Rng) -> (bool, String) {
    let mut supported = 0;
    for n in 0..s.cases {
        let shape: Vec<usize> = if n % 2 == 0 {
            vec![rng.gen_range(2..10), rng.gen_range(2..10)]
        } else {
            (0..3).map(|_| rng.gen_range(2..6)).collect()
        };
        let mut t = synth::supported_sparse(rng, &shape, 0.3);
        if s.fault == Some(Property::FullSupport) {
            t = drop_first_slice(&t);
        }
        supported += check_full_support(&t, None).fully_supported as usize;
    }
    // negative control: a 2x2 diagonal cannot be completed uniquely
    let diag = SparseTensor::new(vec![2, 2], vec![(vec![0, 0], 1.0), (vec![1, 1], 1.0)]).unwrap();
    let control = !check_full_support(&diag, None).fully_supported;
    (
        supported == s.cases && control,
        format!(
            "{supported}/{} constructed patterns certified, unsupported control rejected={control}",
            s.cases
        ),
    )
}

pub fn run(settings: &CheckSettings) -> Vec<CheckResult> {
    Property::ALL
        .iter()
        .enumerate()
        .map(|(n, &property)| {
            let mut rng = synth::rng(settings.seed.wrapping_mul(0x9e37_79b9).wrapping_add(n as u64));
            let (passed, detail) = match property {
                Property::Constraints => constraints(settings, &mut rng),
                Property::TwoByTwo => two_by_two(settings, &mut rng),
                Property::RankOne => rank_one(settings, &mut rng),
                Property::Uniqueness => uniqueness(settings, &mut rng),
                Property::UnitConsistency => unit_consistency(settings, &mut rng),
                Property::ConsensusOrdering => consensus(settings, &mut rng),
                Property::FullSupport => full_support(settings, &mut rng),
            };
            CheckResult {
                property,
                passed,
                detail,
            }
        })
        .collect()
}
