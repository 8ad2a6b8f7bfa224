use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use turnover_core::balance::{rebalance, Resampling};
use turnover_core::dataset::{curate_scope, load_dataset, split_stratified, Dataset, Schema, Strata};
use turnover_core::eval::{
    evaluate, grid_search, permutation_importance, ConfusionMetrics, CvReport, GridSpec,
    ImportanceReport, RocCurve,
};
use turnover_core::features::{discretize, rank_and_filter, BinningRule, Discretizer, FeatureRanking};
use turnover_core::models::{fingerprint, fit, Family, Hyperparameters, ModelError, TrainedModel};
use turnover_core::policy::{
    builtin_programs, mass_table, simulate_mass, simulate_targeted, Policy, PolicyImpactReport,
    TargetedReport,
};
use turnover_core::seeding::derive;
use turnover_core::synthgen::{as_prediction_set, generate_population, GeneratorConfig};

use crate::config::{RunConfig, PROVENANCE_FILE};
use crate::error::{CliError, StageContext};

/// Version of every machine-readable artifact this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

const SPLIT_STREAM: u64 = 1;
const GRID_STREAM: u64 = 2;
const REFIT_STREAM: u64 = 3;
const IMPORTANCE_STREAM: u64 = 4;
const PREDICTION_STREAM: u64 = 5;

/// Common wrapper of machine-readable reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub kind: String,
    pub seed: u64,
    pub config: RunConfig,
    pub report: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(kind: &str, config: &RunConfig, report: T) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            seed: config.seed,
            config: config.clone(),
            report,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub file: PathBuf,
    pub rows: usize,
    pub active: usize,
    pub terminated: usize,
    pub unknown: usize,
    pub year: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generator: GeneratorConfig,
    pub schema_file: PathBuf,
    pub population: PopulationSummary,
    pub prediction_set: PopulationSummary,
    pub prediction_seed: u64,
}

/// The winning grid cell as refit on the full training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    pub resampling: Resampling,
    pub cv_mean_auc: Option<f64>,
    pub cv_sd_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEvaluation {
    pub rows: usize,
    pub auc: f64,
    #[serde(flatten)]
    pub confusion: ConfusionMetrics,
    pub roc: RocCurve,
}

/// Persisted model plus everything needed to score raw data with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub seed: u64,
    pub config: RunConfig,
    pub discretizer: Discretizer,
    pub ranking: FeatureRanking,
    pub selection: Selection,
    pub test: TestEvaluation,
    pub importance: ImportanceReport,
    pub model: TrainedModel,
}

impl ModelArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let a: ModelArtifact = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        if a.schema_version != SCHEMA_VERSION {
            return Err(ModelError::Malformed(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                a.schema_version
            )));
        }
        if !(a.model.threshold > 0.0 && a.model.threshold < 1.0) {
            return Err(ModelError::InvalidThreshold(a.model.threshold));
        }
        if fingerprint(&a.model.features) != a.model.schema_fingerprint {
            return Err(ModelError::Malformed("fingerprint does not match features".into()));
        }
        Ok(a)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        Self::from_json(&text).map_err(|e| CliError::Artifact {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Discretizes raw rows with the training bin edges and checks the
    /// result against the model fingerprint.
    pub fn prepare(&self, raw: &Dataset) -> Result<Dataset, CliError> {
        let ds = self.discretizer.apply(raw).stage("discretize")?;
        self.model.check_compatible(&ds).stage("score")?;
        Ok(ds)
    }
}

/// In-memory results of the training pipeline.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub cv: CvReport,
    pub artifact: ModelArtifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    pub model_family: Family,
    pub prediction_rows: usize,
    pub warnings: Vec<String>,
    pub reports: Vec<PolicyImpactReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub mass: MassSummary,
    pub targeted: Option<TargetedReport>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: format!("malformed {what}: {e}"),
    })
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist", path.display())))
    }
}

/// Creates `dir` if needed and proves a file can be written into it.
pub fn ensure_writable(dir: &Path) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::NotWritable {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)
}

pub fn load_schema(path: &Path) -> Result<Arc<Schema>, CliError> {
    let schema = Schema::from_json(&read(path)?).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(Arc::new(schema))
}

pub fn load_csv(path: &Path, schema: Arc<Schema>) -> Result<Dataset, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    load_dataset(std::io::BufReader::new(file), schema).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn summarize(ds: &Dataset, file: &Path) -> PopulationSummary {
    let (active, terminated, unknown) = ds.class_counts();
    let first = ds.rows().first().map(|r| r.year);
    PopulationSummary {
        file: file.to_path_buf(),
        rows: ds.len(),
        active,
        terminated,
        unknown,
        year: first.filter(|y| ds.rows().iter().all(|r| r.year == *y)),
    }
}

/// Generates the labelled population and a same-sized unlabelled prediction
/// set for the following year.
pub fn cmd_generate(config: &RunConfig) -> Result<Envelope<GenerationReport>, CliError> {
    let generator = config.generator_config();
    generator.validate()?;
    config.validate()?;
    ensure_writable(&config.output_dir)?;

    let population = generate_population(&generator)?;
    let prediction_seed = derive(config.seed, PREDICTION_STREAM);
    let next_year = generator.years.iter().max().map_or(1, |y| y + 1);
    let future = generate_population(&GeneratorConfig {
        seed: prediction_seed,
        ..generator.clone()
    })?;
    let prediction = as_prediction_set(&future, next_year);

    let (data_path, schema_path, pred_path) = (config.data_path(), config.schema_path(), config.prediction_path());
    write(&data_path, &population.to_csv_string())?;
    write(&schema_path, &(population.schema().to_json() + "\n"))?;
    write(&pred_path, &prediction.to_csv_string())?;
    let envelope = Envelope::new(
        "generation",
        config,
        GenerationReport {
            generator,
            schema_file: schema_path,
            population: summarize(&population, &data_path),
            prediction_set: summarize(&prediction, &pred_path),
            prediction_seed,
        },
    );
    write(&config.output_dir.join(PROVENANCE_FILE), &envelope.to_json())?;
    Ok(envelope)
}

/// Curate, split, discretize, rank, grid search, refit, evaluate on the
/// test partition and measure permutation importance.
pub fn train_pipeline(config: &RunConfig, raw: &Dataset) -> Result<TrainOutcome, CliError> {
    config.validate()?;
    let seed = config.seed;
    let curated = match &config.exit_reason_column {
        Some(col) => curate_scope(raw, col).stage("curate")?,
        None => raw.clone(),
    };
    curated.require_known_labels().stage("curate")?;
    let (train, test) = split_stratified(&curated, config.train_fraction, Strata::LABEL_AND_YEAR, derive(seed, SPLIT_STREAM))
        .stage("split")?;
    let rules: Vec<BinningRule> = train
        .schema()
        .features
        .iter()
        .filter(|f| f.kind.is_numeric())
        .map(|f| BinningRule::equal_frequency(&f.name, config.bins))
        .collect();
    let (train, discretizer) = discretize(&train, &rules).stage("discretize")?;
    let test = discretizer.apply(&test).stage("discretize")?;
    let ranking = rank_and_filter(&train, config.keep_fraction).stage("rank")?;

    let spec = GridSpec {
        configs: config.configs(ranking.selected.len()),
        resamplings: config.resamplings.clone(),
        k: config.k,
        seed: derive(seed, GRID_STREAM),
        holdout_fraction: config.holdout_fraction,
        threshold: config.threshold,
    };
    let cv = grid_search(&train, &ranking.selected, &spec).stage("grid search")?;

    let (family, hyperparameters, method) = cv.best_config();
    let weighted = rebalance(&train, &method).stage("refit")?;
    let model = fit(&weighted, &hyperparameters, &ranking.selected, derive(seed, REFIT_STREAM))
        .and_then(|m| m.with_threshold(config.threshold))
        .stage("refit")?;

    let (roc, confusion) = evaluate(&model, &test).stage("test evaluation")?;
    let importance = permutation_importance(&model, &test, config.importance_repetitions, derive(seed, IMPORTANCE_STREAM))
        .stage("importance")?;

    let best = cv.best_cell();
    let artifact = ModelArtifact {
        schema_version: SCHEMA_VERSION,
        seed,
        config: config.clone(),
        discretizer,
        ranking,
        selection: Selection {
            family,
            hyperparameters,
            resampling: method.variant,
            cv_mean_auc: best.mean_auc,
            cv_sd_auc: best.sd_auc,
        },
        test: TestEvaluation {
            rows: test.len(),
            auc: roc.auc,
            confusion,
            roc,
        },
        importance,
        model,
    };
    Ok(TrainOutcome { cv, artifact })
}

/// Runs [`train_pipeline`] on the configured files and writes the model and
/// reports into the output directory.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome, CliError> {
    config.validate()?;
    let (data_path, schema_path) = (config.data_path(), config.schema_path());
    require_file(&data_path)?;
    require_file(&schema_path)?;
    ensure_writable(&config.output_dir)?;

    let raw = load_csv(&data_path, load_schema(&schema_path)?)?;
    let outcome = train_pipeline(config, &raw)?;
    let a = &outcome.artifact;
    let out = &config.output_dir;
    write(&config.model_path(), &a.to_json())?;
    write(&out.join("cv_report.json"), &Envelope::new("cv_report", config, &outcome.cv).to_json())?;
    write(&out.join("cv_table.txt"), &outcome.cv.to_table())?;
    write(&out.join("ranking.txt"), &a.ranking.to_text())?;
    write(&out.join("evaluation.json"), &Envelope::new("test_evaluation", config, &a.test).to_json())?;
    write(&out.join("roc.tsv"), &a.test.roc.to_tsv())?;
    write(&out.join("importance.json"), &Envelope::new("importance", config, &a.importance).to_json())?;
    write(&out.join("importance.txt"), &a.importance.to_table())?;
    Ok(outcome)
}

/// Builtin programs available in `schema` (when enabled) followed by the
/// configured policy documents, each validated against `schema`.
pub fn policy_menu(config: &RunConfig, schema: &Schema) -> Result<(Vec<Policy>, Vec<String>), CliError> {
    let (mut menu, warnings) = if config.builtin_policies {
        builtin_programs(schema)
    } else {
        (vec![], vec![])
    };
    for path in &config.policies {
        let origin = path.display().to_string();
        let policy = Policy::from_json(&read(path)?)
            .and_then(|p| p.validate(schema).map(|_| p))
            .map_err(|source| CliError::Policy { origin, source })?;
        menu.push(policy);
    }
    Ok((menu, warnings))
}

/// Mass simulation of every menu program and, when enabled, one targeted
/// run over the whole menu. `prediction` must already be discretized.
pub fn simulate_pipeline(
    config: &RunConfig,
    model: &TrainedModel,
    prediction: &Dataset,
    menu: &[Policy],
    warnings: Vec<String>,
) -> Result<SimulationOutcome, CliError> {
    let reports = menu
        .iter()
        .map(|p| simulate_mass(model, prediction, p))
        .collect::<Result<Vec<_>, _>>()
        .stage("mass simulation")?;
    let targeted = if config.targeted {
        Some(simulate_targeted(model, prediction, menu).stage("targeted simulation")?)
    } else {
        None
    };
    Ok(SimulationOutcome {
        mass: MassSummary {
            model_family: model.family,
            prediction_rows: prediction.len(),
            warnings,
            reports,
        },
        targeted,
    })
}

/// Scores the prediction set under every policy and writes the mass and
/// targeted reports in text and JSON form.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulationOutcome, CliError> {
    config.validate()?;
    let (model_path, schema_path, pred_path) = (config.model_path(), config.schema_path(), config.prediction_path());
    for p in [&model_path, &schema_path, &pred_path] {
        require_file(p)?;
    }
    ensure_writable(&config.output_dir)?;

    let artifact = ModelArtifact::load(&model_path)?;
    let raw = load_csv(&pred_path, load_schema(&schema_path)?)?;
    let prediction = artifact.prepare(&raw)?;
    let (menu, warnings) = policy_menu(config, prediction.schema())?;
    let outcome = simulate_pipeline(config, &artifact.model, &prediction, &menu, warnings)?;

    let out = &config.output_dir;
    write(&out.join("mass_report.json"), &Envelope::new("mass_simulation", config, &outcome.mass).to_json())?;
    write(&out.join("mass_table.txt"), &mass_table(&outcome.mass.reports))?;
    if let Some(t) = &outcome.targeted {
        write(&out.join("targeted_report.json"), &Envelope::new("targeted_simulation", config, t).to_json())?;
        write(&out.join("targeted_table.txt"), &t.to_table())?;
    }
    Ok(outcome)
}

/// Reads a JSON report written by this crate.
pub fn load_envelope<T: DeserializeOwned>(path: &Path) -> Result<Envelope<T>, CliError> {
    let e: Envelope<T> = load_json(path, "report")?;
    if e.schema_version != SCHEMA_VERSION {
        return Err(CliError::Artifact {
            path: path.to_path_buf(),
            message: format!("schema_version {} is not supported", e.schema_version),
        });
    }
    Ok(e)
}
