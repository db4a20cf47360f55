//! HTTP inference service. Stateless: the weights and threshold are loaded
//! once and shared read-only by every request.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use preopnet::baselines::{rcri_score, RcriResult};
use preopnet::explain::{explain_ecg, render_heatmap_data, ExplainConfig, HeatmapData, MaskMode};
use preopnet::model::{count_flops, ArchitectureConfig, ModelWeights, Predictor, TrainingMeta};
use preopnet::waveform::ClinicalProfile;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::payload::{ClinicalInput, EcgPayload, RequestError};

pub struct AppState {
    predictor: Predictor,
    config: ArchitectureConfig,
    meta: TrainingMeta,
    checksum: String,
    explain_pool: rayon::ThreadPool,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(weights: &ModelWeights, explain_workers: usize) -> anyhow::Result<Self> {
        Ok(Self {
            predictor: weights.predictor(),
            config: weights.config().clone(),
            meta: weights.meta.clone(),
            checksum: weights.checksum(),
            explain_pool: rayon::ThreadPoolBuilder::new().num_threads(explain_workers.max(1)).build()?,
            next_id: AtomicU64::new(1),
        })
    }

    fn request_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError(RequestError);

impl From<RequestError> for ApiError {
    fn from(e: RequestError) -> Self {
        Self(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self(RequestError::invalid("MalformedRequest", e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            RequestError::Invalid { .. } => StatusCode::BAD_REQUEST,
            RequestError::FeatureMismatch(_) => StatusCode::UNPROCESSABLE_ENTITY,
            RequestError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody { error: self.0.reason().into(), message: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictRequest {
    #[serde(flatten)]
    pub ecg: EcgPayload,
    #[serde(default)]
    pub clinical: Option<ClinicalInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub request_id: u64,
    pub probability: f64,
    pub high_risk: bool,
    pub threshold: f64,
    pub target: String,
    pub model_version: String,
    pub model_checksum: String,
    pub rcri: Option<RcriResult>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainRequest {
    #[serde(flatten)]
    pub ecg: EcgPayload,
    #[serde(default)]
    pub clinical: Option<ClinicalInput>,
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mask_mode: Option<MaskMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub request_id: u64,
    pub base_prediction: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub heatmap: HeatmapData,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
    pub weights_checksum: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub config: ArchitectureConfig,
    pub parameters: usize,
    pub flops: u64,
    pub uses_clinical: bool,
    pub threshold: f64,
    pub threshold_percentile: f64,
    pub target: String,
    pub training: TrainingMeta,
}

fn profile(input: &Option<ClinicalInput>) -> Result<Option<ClinicalProfile>, RequestError> {
    input.as_ref().map(ClinicalInput::to_profile).transpose()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, RequestError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| RequestError::Internal(e.to_string()))?.map_err(ApiError)
}

async fn predict(
    State(st): State<Arc<AppState>>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Json<PredictionResponse>, ApiError> {
    let Json(req) = body?;
    let request_id = st.request_id();
    let resp = blocking(move || {
        let t = Instant::now();
        let ecg = req.ecg.decode()?;
        let clinical = profile(&req.clinical)?;
        let probability = st.predictor.predict(&ecg, clinical.as_ref())?;
        Ok(PredictionResponse {
            request_id,
            probability,
            high_risk: st.predictor.is_high_risk(probability),
            threshold: st.predictor.threshold(),
            target: st.predictor.target().to_string(),
            model_version: env!("CARGO_PKG_VERSION").into(),
            model_checksum: st.checksum.clone(),
            rcri: clinical.as_ref().map(rcri_score),
            latency_ms: t.elapsed().as_secs_f64() * 1000.0,
        })
    })
    .await?;
    Ok(Json(resp))
}

async fn explain(
    State(st): State<Arc<AppState>>,
    body: Result<Json<ExplainRequest>, JsonRejection>,
) -> Result<Json<ExplainResponse>, ApiError> {
    let Json(req) = body?;
    let request_id = st.request_id();
    let resp = blocking(move || {
        let defaults = ExplainConfig::default();
        let cfg = ExplainConfig {
            n_samples: req.n_samples.unwrap_or(defaults.n_samples),
            seed: req.seed.unwrap_or(defaults.seed),
            mask_mode: req.mask_mode.unwrap_or_default(),
            ..defaults
        };
        if cfg.n_samples == 0 {
            return Err(RequestError::invalid("InvalidArgument", "n_samples must be at least 1"));
        }
        let ecg = req.ecg.decode()?;
        let clinical = profile(&req.clinical)?;
        let map = st.explain_pool.install(|| explain_ecg(&st.predictor, &ecg, clinical.as_ref(), &cfg))?;
        let heatmap = render_heatmap_data(&map)?;
        Ok(ExplainResponse { request_id, base_prediction: map.base_prediction, n_samples: cfg.n_samples, seed: cfg.seed, heatmap })
    })
    .await?;
    Ok(Json(resp))
}

async fn health(State(st): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into(), weights_checksum: st.checksum.clone() })
}

async fn model(State(st): State<Arc<AppState>>) -> Result<Json<ModelSummary>, ApiError> {
    let flops = count_flops(&st.config).map_err(|e| RequestError::Internal(e.to_string()))?;
    let parameters = preopnet::model::PreOpNet::<f32>::zeroed(&st.config)
        .map_err(|e| RequestError::Internal(e.to_string()))?
        .param_count();
    Ok(Json(ModelSummary {
        config: st.config.clone(),
        parameters,
        flops,
        uses_clinical: st.predictor.uses_clinical(),
        threshold: st.predictor.threshold(),
        threshold_percentile: st.meta.threshold_percentile,
        target: st.predictor.target().to_string(),
        training: st.meta.clone(),
    }))
}

/// Routes under `/v1`, plus static assets under `/ui/` when `ui_dir` is given.
pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/explain", post(explain))
        .route("/v1/health", get(health))
        .route("/v1/model", get(model))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Directory holding the bundled browser client.
pub fn default_ui_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/ui"))
}

pub async fn serve(state: AppState, host: &str, port: u16, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let app = router(Arc::new(state), ui_dir);
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
