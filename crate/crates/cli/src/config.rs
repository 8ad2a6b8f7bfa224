use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use turnover_core::balance::Resampling;
use turnover_core::models::{default_grid, Family, Hyperparameters};
use turnover_core::synthgen::{default_turnover_scenario, GeneratorConfig};

use crate::error::CliError;

/// Everything a pipeline run depends on. Relative paths resolve against the
/// working directory. Files left unset default to the names the `generate`
/// and `train` commands write into `output_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub prediction_set: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Generator settings for `generate`; its own seed is replaced by `seed`.
    pub generator: Option<GeneratorConfig>,
    /// Metadata column used to keep only voluntary exits. `None` trains on
    /// the labels as loaded.
    pub exit_reason_column: Option<String>,
    pub train_fraction: f64,
    pub bins: usize,
    pub keep_fraction: f64,
    pub k: usize,
    pub holdout_fraction: Option<f64>,
    /// Families searched with their default grids when `grid` is unset.
    pub families: Vec<Family>,
    pub grid: Option<Vec<Hyperparameters>>,
    pub resamplings: Vec<Resampling>,
    pub threshold: f64,
    pub importance_repetitions: usize,
    /// Extra policy documents simulated after the builtin programs.
    pub policies: Vec<PathBuf>,
    pub builtin_policies: bool,
    pub targeted: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            output_dir: PathBuf::from("out"),
            data: None,
            schema: None,
            prediction_set: None,
            model: None,
            generator: None,
            exit_reason_column: Some("exit_reason".into()),
            train_fraction: 0.8,
            bins: 4,
            keep_fraction: 0.6,
            k: 10,
            holdout_fraction: None,
            families: vec![
                Family::NaiveBayes,
                Family::Lda,
                Family::SvmRbf,
                Family::Tree,
                Family::TreeBag,
                Family::RandomForest,
            ],
            grid: None,
            resamplings: Resampling::all_defaults(),
            threshold: 0.5,
            importance_repetitions: 10,
            policies: vec![],
            builtin_policies: true,
            targeted: true,
        }
    }
}

pub const POPULATION_FILE: &str = "population.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const PREDICTION_FILE: &str = "prediction_set.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const MODEL_FILE: &str = "model.json";

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Range checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if self.bins < 2 {
            return bad(format!("bins must be at least 2, got {}", self.bins));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad(format!("keep_fraction {} outside (0, 1]", self.keep_fraction));
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if let Some(h) = self.holdout_fraction {
            if !(h > 0.0 && h < 1.0) {
                return bad(format!("holdout_fraction {h} outside (0, 1)"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.grid.as_ref().map_or(self.families.is_empty(), Vec::is_empty) {
            return bad("the model grid is empty".into());
        }
        if self.resamplings.is_empty() {
            return bad("the resampling menu is empty".into());
        }
        for r in &self.resamplings {
            r.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.importance_repetitions == 0 {
            return bad("importance_repetitions must be at least 1".into());
        }
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let mut g = self.generator.clone().unwrap_or_else(default_turnover_scenario);
        g.seed = self.seed;
        g
    }

    /// Explicit grid, or the default grids of `families` over `p` features.
    pub fn configs(&self, p: usize) -> Vec<Hyperparameters> {
        match &self.grid {
            Some(g) => g.clone(),
            None => self.families.iter().flat_map(|&f| default_grid(f, p)).collect(),
        }
    }

    fn in_output(&self, set: &Option<PathBuf>, name: &str) -> PathBuf {
        set.clone().unwrap_or_else(|| self.output_dir.join(name))
    }

    pub fn data_path(&self) -> PathBuf {
        self.in_output(&self.data, POPULATION_FILE)
    }

    pub fn schema_path(&self) -> PathBuf {
        self.in_output(&self.schema, SCHEMA_FILE)
    }

    pub fn prediction_path(&self) -> PathBuf {
        self.in_output(&self.prediction_set, PREDICTION_FILE)
    }

    pub fn model_path(&self) -> PathBuf {
        self.in_output(&self.model, MODEL_FILE)
    }
}
