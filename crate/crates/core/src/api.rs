//! HTTP JSON service over the library. Stateless apart from the simulation
//! job semaphore.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::cors::CorsLayer;

use crate::cli::{power_output, PowerArgs, PowerOutput};
use crate::datagen::CovariateDesign;
use crate::effectsize::{synthetic_effect_sizes, DispersionRule, EffectSizeReport, DEFAULT_MC_SIZE};
use crate::error::Error;
use crate::model::ModelSpec;
use crate::planner::{analyze_csv, default_delta_grid, PilotMapping, PilotOutput};
use crate::simharness::{find_preset, preset_families, run_scenario_with_progress, SimResult, SimScenario};

pub const DEFAULT_MAX_REPLICATES: usize = 2_000;
pub const MAX_PILOT_BYTES: usize = 10 * 1024 * 1024;
/// Largest Monte Carlo size accepted by /v1/effectsize and /v1/simulate.
pub const MAX_MC_SIZE: usize = 10_000_000;

#[derive(Clone, Debug)]
pub struct ApiConfig {
    pub max_replicates: usize,
    pub max_concurrent_simulations: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            max_replicates: DEFAULT_MAX_REPLICATES,
            max_concurrent_simulations: 2,
        }
    }
}

#[derive(Clone)]
struct AppState {
    config: ApiConfig,
    sims: Arc<Semaphore>,
}

/// Error body `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_input", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = if e.is_domain() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_REQUEST
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        if r.status() == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", r.body_text())
        } else {
            Self::new(StatusCode::BAD_REQUEST, "invalid_json", r.body_text())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, Error> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn default_alpha() -> f64 {
    0.05
}

fn default_power() -> f64 {
    0.8
}

/// Effect size in one of three forms, as in the `power` subcommand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_one: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRequest {
    #[serde(flatten)]
    pub effect: EffectInput,
    pub df: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRequest {
    #[serde(flatten)]
    pub effect: EffectInput,
    pub df: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
}

fn args(effect: &EffectInput, df: u32, alpha: f64, power: Option<f64>, n: Option<u64>) -> PowerArgs {
    PowerArgs {
        f2: effect.f2,
        phi: effect.phi,
        w_one: effect.w_one,
        r2: effect.r2,
        df,
        alpha,
        power,
        n,
    }
}

async fn power(body: Result<Json<PowerRequest>, JsonRejection>) -> ApiResult<PowerOutput> {
    let Json(req) = body?;
    Ok(Json(power_output(&args(
        &req.effect,
        req.df,
        req.alpha,
        None,
        Some(req.n),
    ))?))
}

async fn sample_size(body: Result<Json<SampleSizeRequest>, JsonRejection>) -> ApiResult<PowerOutput> {
    let Json(req) = body?;
    Ok(Json(power_output(&args(
        &req.effect,
        req.df,
        req.alpha,
        Some(req.power),
        None,
    ))?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeRequest {
    pub model: ModelSpec,
    pub design: CovariateDesign,
    #[serde(default)]
    pub mc_size: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Adds f²_s; `dispersion` selects its rule.
    #[serde(default)]
    pub score: bool,
    #[serde(default)]
    pub dispersion: DispersionRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeResponse {
    pub seed: u64,
    pub mc_size: usize,
    pub report: EffectSizeReport,
}

async fn effect_size(body: Result<Json<EffectSizeRequest>, JsonRejection>) -> ApiResult<EffectSizeResponse> {
    let Json(req) = body?;
    let mc_size = req.mc_size.unwrap_or(DEFAULT_MC_SIZE);
    if mc_size == 0 || mc_size > MAX_MC_SIZE {
        return Err(ApiError::bad_request(format!("mc_size must lie in [1, {MAX_MC_SIZE}]")));
    }
    let seed = req.seed.unwrap_or_else(rand::random);
    let score = req.score.then_some(req.dispersion);
    let report = blocking(move || {
        req.model.validate()?;
        req.design.validate()?;
        synthetic_effect_sizes(&req.model, &req.design, mc_size, seed, score)
    })
    .await?;
    Ok(Json(EffectSizeResponse { seed, mc_size, report }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotRequest {
    /// CSV text with a header row.
    pub csv: String,
    pub mapping: PilotMapping,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default)]
    pub delta_grid: Option<Vec<f64>>,
}

async fn pilot(body: Result<Json<PilotRequest>, JsonRejection>) -> ApiResult<PilotOutput> {
    let Json(req) = body?;
    let out = blocking(move || {
        let grid = req.delta_grid.unwrap_or_else(default_delta_grid);
        analyze_csv(req.csv.as_bytes(), &req.mapping, req.alpha, req.power, &grid)
    })
    .await?;
    Ok(Json(out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(default)]
    pub scenario: Option<SimScenario>,
    /// Preset family or scenario label.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub mc_size: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Events on the /v1/simulate stream, one JSON object per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimEvent {
    Progress { done: usize, total: usize },
    Result { seed: u64, results: Vec<SimResult> },
    Error { error: ErrorBody },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

fn resolve_simulation(req: &SimulateRequest, cap: usize) -> Result<Vec<SimScenario>, ApiError> {
    let mut scenarios = match (&req.scenario, &req.preset) {
        (Some(s), None) => vec![s.clone()],
        (None, Some(name)) => {
            find_preset(name).ok_or_else(|| ApiError::bad_request(format!("unknown preset {name:?}")))?
        }
        _ => return Err(ApiError::bad_request("give exactly one of scenario or preset")),
    };
    for s in &mut scenarios {
        if let Some(r) = req.replicates {
            s.replicates = r;
        } else if req.preset.is_some() {
            // presets default to the full study size; clamp to the server cap
            s.replicates = s.replicates.min(cap);
        }
        if let Some(m) = req.mc_size {
            s.mc_size = m;
        }
        if s.replicates > cap {
            return Err(ApiError::bad_request(format!(
                "{} replicates exceed the server cap of {cap}",
                s.replicates
            )));
        }
        if s.mc_size > MAX_MC_SIZE {
            return Err(ApiError::bad_request(format!("mc_size must not exceed {MAX_MC_SIZE}")));
        }
        s.validate()?;
    }
    Ok(scenarios)
}

fn ndjson_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).unwrap_or_else(|_| "{}".into());
    s.push('\n');
    s
}

async fn simulate(
    State(state): State<AppState>,
    body: Result<Json<SimulateRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let scenarios = resolve_simulation(&req, state.config.max_replicates)?;
    let permit = state.sims.clone().try_acquire_owned().map_err(|_| {
        ApiError::new(
            StatusCode::TOO_MANY_REQUESTS,
            "too_many_simulations",
            "the concurrent simulation limit is reached",
        )
    })?;
    let seed = req
        .seed
        .or_else(|| scenarios.iter().find_map(|s| s.seed))
        .unwrap_or_else(rand::random);
    let total: usize = scenarios.iter().map(|s| s.sweep.values().len()).sum();
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<String>();
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let mut results = Vec::with_capacity(scenarios.len());
        let mut offset = 0;
        for s in &scenarios {
            let progress = |done: usize, _: usize| {
                let _ = tx.send(ndjson_line(&SimEvent::Progress {
                    done: offset + done,
                    total,
                }));
            };
            match run_scenario_with_progress(s, seed, &progress) {
                Ok(r) => results.push(r),
                Err(e) => {
                    let _ = tx.send(ndjson_line(&SimEvent::Error {
                        error: ErrorBody {
                            code: e.code().into(),
                            message: e.to_string(),
                        },
                    }));
                    return;
                }
            }
            offset += s.sweep.values().len();
        }
        let _ = tx.send(ndjson_line(&SimEvent::Result { seed, results }));
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|line| (Ok::<_, Infallible>(line), rx))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        axum::body::Body::from_stream(stream),
    )
        .into_response())
}

async fn presets() -> Json<serde_json::Value> {
    Json(json!({ "families": preset_families() }))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(config: ApiConfig) -> Router {
    let state = AppState {
        sims: Arc::new(Semaphore::new(config.max_concurrent_simulations)),
        config,
    };
    Router::new()
        .route("/health", get(health))
        .route("/v1/power", post(power))
        .route("/v1/samplesize", post(sample_size))
        .route("/v1/effectsize", post(effect_size))
        .route("/v1/pilot", post(pilot).layer(DefaultBodyLimit::max(MAX_PILOT_BYTES)))
        .route("/v1/simulate", post(simulate))
        .route("/v1/presets", get(presets))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(host: &str, port: u16, config: ApiConfig) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    axum::serve(listener, router(config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Runs [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(host: &str, port: u16, config: ApiConfig) -> crate::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(host, port, config))
}
