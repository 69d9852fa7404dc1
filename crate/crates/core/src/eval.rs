//! Error metrics, cross-validated experiments, mean baselines and
//! convergence traces.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::completion::CompletedTensor;
use crate::data::{self, Category, DataError, FoldPlan, RatingsDataset, Split};
use crate::recsys;
use crate::solver::{lli, LatentModel, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction/truth pairs to score")]
    EmptyInput,
    #[error("fold {0} has no training entries")]
    EmptyTrainingFold(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Recsys(#[from] recsys::RecsysError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let sq: f64 = pairs.iter().map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let abs: f64 = pairs.iter().map(|(p, t)| (p - t).abs()).sum();
    Ok(abs / pairs.len() as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mode {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD { categories: Vec<Category> },
}

impl Mode {
    pub fn k(&self) -> usize {
        match self {
            Mode::TwoD => 1,
            Mode::ThreeD { .. } => 2,
        }
    }
}

/// Which feature slices a 3-D prediction maximises over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMask {
    /// The held-out user's own feature indices.
    #[default]
    TestMask,
    /// Every index of the feature dimension.
    AllFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub solver: SolverConfig,
    pub n_folds: usize,
    pub seed: u64,
    /// Clamp predictions into the native rating range for the headline
    /// metrics. Clamped metrics are always reported alongside.
    pub clamp: bool,
    pub feature_mask: FeatureMask,
    /// Record per-fold solver wall time (makes reports run-dependent).
    pub record_timings: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            n_folds: 5,
            seed: 0,
            clamp: false,
            feature_mask: FeatureMask::TestMask,
            record_timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub rmse: f64,
    pub mae: f64,
    pub rmse_clamped: f64,
    pub mae_clamped: f64,
    pub sweeps: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub n_train: usize,
    pub n_test: usize,
    /// Test pairs whose fill used an empty (cold) subtensor.
    pub n_cold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub mode: String,
    pub per_fold: Vec<FoldResult>,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmse_clamped_mean: f64,
    pub mae_clamped_mean: f64,
    pub config: EvalConfig,
}

impl EvalReport {
    fn aggregate(dataset: &str, mode: String, mut per_fold: Vec<FoldResult>, config: EvalConfig) -> Self {
        per_fold.sort_by_key(|f| f.fold);
        let pick = |g: fn(&FoldResult) -> f64| per_fold.iter().map(g).collect::<Vec<_>>();
        let (rmse_mean, rmse_std) = mean_std(&pick(|f| f.rmse));
        let (mae_mean, mae_std) = mean_std(&pick(|f| f.mae));
        let (rmse_clamped_mean, _) = mean_std(&pick(|f| f.rmse_clamped));
        let (mae_clamped_mean, _) = mean_std(&pick(|f| f.mae_clamped));
        Self {
            dataset: dataset.to_string(),
            mode,
            per_fold,
            rmse_mean,
            rmse_std,
            mae_mean,
            mae_std,
            rmse_clamped_mean,
            mae_clamped_mean,
            config,
        }
    }

    pub fn max_sweeps(&self) -> usize {
        self.per_fold.iter().map(|f| f.sweeps).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn mode_label(mode: &Mode) -> String {
    match mode {
        Mode::TwoD => "2d".to_string(),
        Mode::ThreeD { categories } => {
            let names: Vec<&str> = categories.iter().map(|c| c.name()).collect();
            format!("3d({})", names.join(","))
        }
    }
}

fn split_for(dataset: &RatingsDataset, mode: &Mode, plan: &FoldPlan, fold: usize) -> Result<Split> {
    Ok(match mode {
        Mode::TwoD => data::build_tensor_2d(dataset, plan, fold)?,
        Mode::ThreeD { categories } => data::build_tensor_3d(dataset, categories, plan, fold)?.0,
    })
}

/// Solves one fold, keeping the model when the sweep cap was hit.
fn train(split: &Split, k: usize, config: &SolverConfig) -> Result<(LatentModel, bool)> {
    match lli(&split.train, k, config) {
        Ok(m) => Ok((m, true)),
        Err(SolverError::DidNotConverge { model, .. }) => Ok((*model, false)),
        Err(SolverError::EmptyTensor) => Err(EvalError::EmptyTrainingFold(0)),
        Err(e) => Err(e.into()),
    }
}

/// Predicted value (shifted scale) for a held-out point.
fn predict_point(model: &CompletedTensor, point: &data::TestPoint, mask: FeatureMask) -> Result<(f64, bool)> {
    let scales = &model.model().scales;
    if model.shape().len() == 2 {
        let idx = [point.user, point.product];
        let p = recsys::predict_2d(model, point.user, point.product)?;
        return Ok((p.rating, !scales.covers(&idx)));
    }
    let p = match mask {
        FeatureMask::TestMask => recsys::predict_3d_masked(model, point.user, point.product, &point.features)?,
        FeatureMask::AllFeatures => recsys::predict_3d(model, point.user, point.product)?,
    };
    let f = p.argmax_feature.expect("3-D prediction has a feature");
    Ok((p.rating, !scales.covers(&[point.user, f, point.product])))
}

fn run_fold(
    dataset: &RatingsDataset,
    mode: &Mode,
    plan: &FoldPlan,
    fold: usize,
    config: &EvalConfig,
) -> Result<FoldResult> {
    let split = split_for(dataset, mode, plan, fold)?;
    let started = Instant::now();
    let (model, converged) = train(&split, mode.k(), &config.solver).map_err(|e| match e {
        EvalError::EmptyTrainingFold(_) => EvalError::EmptyTrainingFold(fold),
        e => e,
    })?;
    let elapsed = started.elapsed().as_secs_f64();
    let (sweeps, final_residual) = (model.sweeps_run, model.final_residual);
    let n_train = split.train.nnz();
    let completed = CompletedTensor::from_model(split.train, model);

    let (lo, hi) = dataset.native_range;
    let mut raw = Vec::with_capacity(split.test.len());
    let mut clamped = Vec::with_capacity(split.test.len());
    let mut n_cold = 0;
    for point in &split.test {
        let (pred, cold) = predict_point(&completed, point, config.feature_mask)?;
        n_cold += cold as usize;
        let pred = dataset.unshift(pred);
        let truth = dataset.unshift(point.truth);
        raw.push((pred, truth));
        clamped.push((pred.clamp(lo, hi), truth));
    }
    let (rmse_raw, mae_raw) = (rmse(&raw)?, mae(&raw)?);
    let (rmse_c, mae_c) = (rmse(&clamped)?, mae(&clamped)?);
    let (rmse_h, mae_h) = if config.clamp {
        (rmse_c, mae_c)
    } else {
        (rmse_raw, mae_raw)
    };
    Ok(FoldResult {
        fold,
        rmse: rmse_h,
        mae: mae_h,
        rmse_clamped: rmse_c,
        mae_clamped: mae_c,
        sweeps,
        final_residual,
        converged,
        n_train,
        n_test: split.test.len(),
        n_cold,
        wall_time: config.record_timings.then_some(elapsed),
    })
}

/// k-fold cross-validation of latent completion on `dataset`.
pub fn run_experiment(dataset: &RatingsDataset, mode: &Mode, config: &EvalConfig) -> Result<EvalReport> {
    let plan = data::split_kfold(dataset, config.n_folds, config.seed)?;
    let per_fold = (0..config.n_folds)
        .map(|fold| run_fold(dataset, mode, &plan, fold, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::aggregate(
        &dataset.name,
        mode_label(mode),
        per_fold,
        *config,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    GlobalMean,
    ItemMean,
    UserMean,
}

/// Mean predictors scored exactly like [`run_experiment`] (2-D folds).
pub fn baseline_predict(
    dataset: &RatingsDataset,
    plan: &FoldPlan,
    kind: BaselineKind,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let (lo, hi) = dataset.native_range;
    let mut per_fold = Vec::with_capacity(plan.n_folds);
    for fold in 0..plan.n_folds {
        let split = data::build_tensor_2d(dataset, plan, fold)?;
        let n = split.train.nnz();
        if n == 0 {
            return Err(EvalError::EmptyTrainingFold(fold));
        }
        let global = split.train.values().iter().sum::<f64>() / n as f64;
        let axis = match kind {
            BaselineKind::GlobalMean => None,
            BaselineKind::UserMean => Some(0),
            BaselineKind::ItemMean => Some(1),
        };
        let mut sums: HashMap<usize, (f64, usize)> = HashMap::new();
        if let Some(axis) = axis {
            for (idx, v) in split.train.iter() {
                let e = sums.entry(idx[axis]).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        let mut raw = Vec::with_capacity(split.test.len());
        let mut n_cold = 0;
        for p in &split.test {
            let key = match axis {
                Some(0) => Some(p.user),
                Some(_) => Some(p.product),
                None => None,
            };
            let pred = match key.and_then(|k| sums.get(&k)) {
                Some(&(s, c)) => s / c as f64,
                None => {
                    n_cold += axis.is_some() as usize;
                    global
                }
            };
            raw.push((dataset.unshift(pred), dataset.unshift(p.truth)));
        }
        let clamped: Vec<(f64, f64)> = raw.iter().map(|&(p, t)| (p.clamp(lo, hi), t)).collect();
        let (rmse_c, mae_c) = (rmse(&clamped)?, mae(&clamped)?);
        let (rmse_h, mae_h) = if config.clamp {
            (rmse_c, mae_c)
        } else {
            (rmse(&raw)?, mae(&raw)?)
        };
        per_fold.push(FoldResult {
            fold,
            rmse: rmse_h,
            mae: mae_h,
            rmse_clamped: rmse_c,
            mae_clamped: mae_c,
            sweeps: 0,
            final_residual: 0.0,
            converged: true,
            n_train: n,
            n_test: split.test.len(),
            n_cold,
            wall_time: None,
        });
    }
    let label = match kind {
        BaselineKind::GlobalMean => "baseline(global_mean)",
        BaselineKind::ItemMean => "baseline(item_mean)",
        BaselineKind::UserMean => "baseline(user_mean)",
    };
    Ok(EvalReport::aggregate(
        &dataset.name,
        label.to_string(),
        per_fold,
        *config,
    ))
}

/// Per-sweep residuals of the first fold's solve.
pub fn convergence_trace(dataset: &RatingsDataset, mode: &Mode, config: &EvalConfig) -> Result<Vec<f64>> {
    let plan = data::split_kfold(dataset, config.n_folds, config.seed)?;
    let split = split_for(dataset, mode, &plan, 0)?;
    let (model, _) = train(&split, mode.k(), &config.solver)?;
    Ok(model.residual_trace)
}

/// Writes a trace as `sweep,residual` CSV, sweeps numbered from 1.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[f64]) -> std::io::Result<()> {
    writeln!(out, "sweep,residual")?;
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{},{:e}", i + 1, v)?;
    }
    Ok(())
}
