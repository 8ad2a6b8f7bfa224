//! Read-only HTTP JSON service over a frozen model and prediction set.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use turnover_core::balance::Resampling;
use turnover_core::dataset::Dataset;
use turnover_core::eval::{ConfusionMetrics, ImportanceReport};
use turnover_core::models::{Family, Hyperparameters};
use turnover_core::policy::{
    builtin_programs, employee_risk, simulate_mass, simulate_targeted, FieldIssue, Policy,
    PolicyError,
};

use crate::error::CliError;
use crate::pipeline::{ModelArtifact, SCHEMA_VERSION};

const HISTOGRAM_BINS: usize = 10;

/// JSON error body: machine-readable code, message and field-level issues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub fields: Vec<FieldIssue>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            fields: vec![],
        }
    }

    /// Maps a policy failure, prefixing field paths with `prefix`.
    fn from_policy(e: PolicyError, prefix: &str) -> Self {
        let message = e.to_string();
        match e {
            PolicyError::Invalid { issues, .. } => ApiError {
                fields: issues
                    .into_iter()
                    .map(|i| FieldIssue {
                        path: format!("{prefix}{}", i.path),
                        message: i.message,
                    })
                    .collect(),
                ..ApiError::new(StatusCode::BAD_REQUEST, "invalid_policy", message)
            },
            PolicyError::Malformed(_) => ApiError::new(StatusCode::BAD_REQUEST, "malformed_policy", message),
            PolicyError::DuplicateName(_) => ApiError::new(StatusCode::BAD_REQUEST, "duplicate_policy", message),
            PolicyError::UnknownId(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_id", message),
            PolicyError::Model(_) => ApiError::new(StatusCode::CONFLICT, "fingerprint_mismatch", message),
        }
    }

    /// Startup failures; fingerprint mismatches map to 409.
    pub fn from_startup(e: &CliError) -> Self {
        if e.is_fingerprint_mismatch() {
            ApiError::new(StatusCode::CONFLICT, "fingerprint_mismatch", e.to_string())
        } else {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "startup_failed", e.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub cv_mean_auc: Option<f64>,
    pub cv_sd_auc: Option<f64>,
    pub test_rows: usize,
    pub test_auc: f64,
    pub test_confusion: ConfusionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub schema_version: u32,
    pub seed: u64,
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    pub resampling: Resampling,
    pub threshold: f64,
    pub features: Vec<String>,
    pub schema_fingerprint: String,
    pub metrics: ModelMetrics,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    pub name: String,
    pub kind: String,
    pub actionable: bool,
    pub in_model: bool,
    pub levels: Vec<LevelCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskHistogram {
    /// `bins + 1` edges over [0, 1]; the last bin includes 1.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub rows: usize,
    pub threshold: f64,
    pub flagged: usize,
    pub baseline_leaver_share: f64,
    pub features: Vec<FeatureDistribution>,
    pub risk_histogram: RiskHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMenu {
    pub policies: Vec<Policy>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validated {
    pub valid: bool,
    pub policy: Policy,
}

/// Optional menu for targeted simulation; omitted means the builtin menu.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetedRequest {
    #[serde(default)]
    menu: Option<Vec<serde_json::Value>>,
}

/// Shared state, immutable after startup.
pub struct AppState {
    artifact: ModelArtifact,
    prediction: Dataset,
    menu: PolicyMenu,
    summary: PopulationSummary,
}

impl AppState {
    /// Discretizes the raw prediction set with the model's bin edges and
    /// fails if the result does not match the model fingerprint.
    pub fn new(artifact: ModelArtifact, raw_prediction: &Dataset) -> Result<Self, CliError> {
        let prediction = artifact.prepare(raw_prediction)?;
        let (policies, warnings) = builtin_programs(prediction.schema());
        let summary = population_summary(&artifact, &prediction)?;
        Ok(AppState {
            artifact,
            prediction,
            menu: PolicyMenu { policies, warnings },
            summary,
        })
    }

    fn model_info(&self) -> ModelInfo {
        let a = &self.artifact;
        ModelInfo {
            schema_version: SCHEMA_VERSION,
            seed: a.seed,
            family: a.model.family,
            hyperparameters: a.model.hyperparameters,
            resampling: a.selection.resampling,
            threshold: a.model.threshold,
            features: a.model.feature_names(),
            schema_fingerprint: a.model.schema_fingerprint.clone(),
            metrics: ModelMetrics {
                cv_mean_auc: a.selection.cv_mean_auc,
                cv_sd_auc: a.selection.cv_sd_auc,
                test_rows: a.test.rows,
                test_auc: a.test.auc,
                test_confusion: a.test.confusion,
            },
            warnings: a.model.warnings.clone(),
        }
    }
}

fn population_summary(artifact: &ModelArtifact, ds: &Dataset) -> Result<PopulationSummary, CliError> {
    use crate::error::StageContext;
    let model = &artifact.model;
    let probabilities = model.predict_proba(ds).stage("score")?;
    let in_model = model.feature_names();
    let features = ds
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(c, f)| {
            let levels = f.kind.levels().unwrap_or_default();
            let mut counts = vec![0usize; levels.len()];
            for r in ds.rows() {
                if let Some(l) = r.values[c].level() {
                    counts[l] += 1;
                }
            }
            let kind = serde_json::to_value(&f.kind).ok().and_then(|v| v["kind"].as_str().map(String::from));
            FeatureDistribution {
                name: f.name.clone(),
                kind: kind.unwrap_or_default(),
                actionable: f.actionable,
                in_model: in_model.contains(&f.name),
                levels: levels
                    .iter()
                    .zip(counts)
                    .map(|(level, count)| LevelCount {
                        level: level.clone(),
                        count,
                    })
                    .collect(),
            }
        })
        .collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for p in &probabilities {
        counts[((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let flagged = probabilities.iter().filter(|&&p| p >= model.threshold).count();
    Ok(PopulationSummary {
        rows: ds.len(),
        threshold: model.threshold,
        flagged,
        baseline_leaver_share: if ds.is_empty() { 0.0 } else { flagged as f64 / ds.len() as f64 },
        features,
        risk_histogram: RiskHistogram {
            edges: (0..=HISTOGRAM_BINS).map(|i| i as f64 / HISTOGRAM_BINS as f64).collect(),
            counts,
        },
    })
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/model", get(model))
        .route("/api/importance", get(importance))
        .route("/api/population/summary", get(population))
        .route("/api/policies", get(policies))
        .route("/api/policies/validate", post(validate))
        .route("/api/simulate/mass", post(mass))
        .route("/api/simulate/targeted", post(targeted))
        .route("/api/employees/{id}/risk", get(risk))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

/// Serves `state` on `listener` until the process stops.
pub async fn serve(state: Shared, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn model(State(s): State<Shared>) -> Json<ModelInfo> {
    Json(s.model_info())
}

async fn importance(State(s): State<Shared>) -> Json<ImportanceReport> {
    Json(s.artifact.importance.clone())
}

async fn population(State(s): State<Shared>) -> Json<PopulationSummary> {
    Json(s.summary.clone())
}

async fn policies(State(s): State<Shared>) -> Json<PolicyMenu> {
    Json(s.menu.clone())
}

fn parse_policy(text: &str, s: &AppState, prefix: &str) -> Result<Policy, ApiError> {
    let policy = Policy::from_json(text).map_err(|e| ApiError::from_policy(e, prefix))?;
    policy
        .validate(s.prediction.schema())
        .map_err(|e| ApiError::from_policy(e, prefix))?;
    Ok(policy)
}

fn utf8(body: &Bytes) -> Result<&str, ApiError> {
    std::str::from_utf8(body).map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", "body is not UTF-8"))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn validate(State(s): State<Shared>, body: Bytes) -> ApiResult<Validated> {
    let policy = parse_policy(utf8(&body)?, &s, "")?;
    Ok(Json(Validated { valid: true, policy }))
}

async fn mass(State(s): State<Shared>, body: Bytes) -> ApiResult<turnover_core::policy::PolicyImpactReport> {
    let policy = parse_policy(utf8(&body)?, &s, "")?;
    blocking(move || {
        simulate_mass(&s.artifact.model, &s.prediction, &policy).map_err(|e| ApiError::from_policy(e, ""))
    })
    .await
}

async fn targeted(State(s): State<Shared>, body: Bytes) -> ApiResult<turnover_core::policy::TargetedReport> {
    let text = utf8(&body)?;
    let request: TargetedRequest = if text.trim().is_empty() {
        TargetedRequest::default()
    } else {
        serde_json::from_str(text).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string()))?
    };
    let menu = match request.menu {
        None => s.menu.policies.clone(),
        Some(docs) => docs
            .iter()
            .enumerate()
            .map(|(i, d)| parse_policy(&d.to_string(), &s, &format!("menu[{i}].")))
            .collect::<Result<Vec<_>, _>>()?,
    };
    blocking(move || {
        simulate_targeted(&s.artifact.model, &s.prediction, &menu).map_err(|e| ApiError::from_policy(e, ""))
    })
    .await
}

async fn risk(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<turnover_core::policy::EmployeeRisk> {
    blocking(move || {
        employee_risk(&s.artifact.model, &s.prediction, &id, &s.menu.policies).map_err(|e| ApiError::from_policy(e, ""))
    })
    .await
}
