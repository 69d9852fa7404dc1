//! Versioned JSON document holding a trained model: observed entries,
//! latent scales, entity vocabularies and the solver settings used.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lli_core::data::Category;
use lli_core::{scale_apply, CompletedTensor, LatentModel, ScaleSet, SolverConfig, SparseTensor, SubtensorKey};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "lli-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub key: SubtensorKey,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEcho {
    pub config: SolverConfig,
    pub sweeps_run: usize,
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub dataset: String,
    pub shape: Vec<usize>,
    pub k: usize,
    /// Added to native ratings before training; subtract to report.
    pub shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<Category>>,
    /// Raw ids in dense-index order.
    pub users: Vec<u64>,
    pub products: Vec<u64>,
    /// Feature indices per raw user id (3-D models).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub user_features: BTreeMap<u64, Vec<usize>>,
    pub scales: Vec<ScaleEntry>,
    pub observed: Vec<(Vec<usize>, f64)>,
    pub solver: SolverEcho,
}

/// Entity ids and feature layout carried alongside a trained model.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub dataset: String,
    pub shift: f64,
    pub categories: Option<Vec<Category>>,
    pub users: Vec<u64>,
    pub products: Vec<u64>,
    pub user_features: BTreeMap<u64, Vec<usize>>,
}

impl ModelDocument {
    pub fn new(completed: &CompletedTensor, config: &SolverConfig, catalog: Catalog) -> Self {
        let model = completed.model();
        Self {
            format: FORMAT.to_string(),
            dataset: catalog.dataset,
            shape: completed.shape().to_vec(),
            k: completed.k(),
            shift: catalog.shift,
            categories: catalog.categories,
            users: catalog.users,
            products: catalog.products,
            user_features: catalog.user_features,
            scales: model
                .scales
                .iter()
                .map(|(key, scale)| ScaleEntry { key, scale })
                .collect(),
            observed: completed.source().iter().map(|(i, v)| (i.to_vec(), v)).collect(),
            solver: SolverEcho {
                config: *config,
                sweeps_run: model.sweeps_run,
                final_residual: model.final_residual,
            },
        }
    }

    pub fn to_completed(&self) -> Result<CompletedTensor> {
        let source = SparseTensor::new(self.shape.clone(), self.observed.iter().cloned())?;
        let scales = ScaleSet::from_pairs(
            &self.shape,
            self.k,
            self.scales.iter().map(|e| (e.key.clone(), e.scale)),
        )?;
        let balanced = scale_apply(&source, &scales)?;
        let model = LatentModel {
            balanced,
            scales,
            sweeps_run: self.solver.sweeps_run,
            final_residual: self.solver.final_residual,
            residual_trace: Vec::new(),
        };
        Ok(CompletedTensor::from_model(source, model))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let doc: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if doc.format != FORMAT {
            bail!("unsupported model format {:?} (expected {FORMAT:?})", doc.format);
        }
        Ok(doc)
    }
}
