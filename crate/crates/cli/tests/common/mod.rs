#![allow(dead_code)]

use std::path::Path;

use turnover_cli::RunConfig;
use turnover_core::balance::Resampling;
use turnover_core::models::{Hyperparameters, TreeParams};

/// Small, fast pipeline settings writing into `dir`.
pub fn quick_config(dir: &Path) -> RunConfig {
    RunConfig {
        output_dir: dir.to_path_buf(),
        k: 3,
        grid: Some(vec![
            Hyperparameters::NaiveBayes { laplace_alpha: 1.0 },
            Hyperparameters::RandomForest {
                n_trees: 25,
                mtry: 3,
                tree: TreeParams::default(),
            },
        ]),
        resamplings: vec![Resampling::None, Resampling::Up],
        importance_repetitions: 2,
        ..RunConfig::default()
    }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
