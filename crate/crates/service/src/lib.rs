//! HTTP API over the analysis engine. Models are fitted once per analysis job;
//! every query endpoint is a cheap evaluation of the stored fits.

pub mod error;
pub mod state;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use aquitrend::analysis::{Analysis, AnalysisOptions};
use aquitrend::dataset::Diagnostic;
use aquitrend::export::{well_report, GridSpec};
use aquitrend::indicators::{parse_thresholds, IndicatorMatrix, IndicatorMode, TrendCutoffs};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;

pub use error::ApiError;
pub use state::{AppState, JobRecord, JobStatus, ServiceConfig};

type Params = Query<HashMap<String, String>>;

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn ok<T: Serialize>(value: &T) -> Response {
    json(StatusCode::OK, value)
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", post(upload))
        .route("/datasets/{id}/analyses", post(create_analysis))
        .route("/analyses/{id}", get(job_status))
        .route("/analyses/{id}/wells/{well}/trend", get(trend))
        .route("/analyses/{id}/slices/{k}", get(slice))
        .route("/analyses/{id}/flow/{k}", get(flow))
        .route("/analyses/{id}/indicators", get(indicators))
        .route("/analyses/{id}/frames", get(frames))
        .route("/analyses/{id}/snapshot", get(snapshot))
        .route("/analyses/{id}/report", get(report))
        .fallback(|| async { ApiError::not_found("NOT_FOUND", "no such route") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Runs `f` on the blocking pool.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Serialize)]
struct Uploaded {
    id: String,
    wells: usize,
    solutes: Vec<String>,
    intervals: usize,
    diagnostics: Vec<Diagnostic>,
}

async fn upload(State(st): State<Arc<AppState>>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut files: HashMap<&'static str, String> = HashMap::new();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::unprocessable("INVALID_UPLOAD", e.to_string()))?
    {
        let key = match field.name().unwrap_or("") {
            "monitoring.csv" | "monitoring" => "monitoring",
            "wells.csv" | "wells" => "wells",
            "overlays.json" | "overlays" => "overlays",
            other => return Err(ApiError::unprocessable("INVALID_UPLOAD", format!("unexpected field '{other}'"))),
        };
        let text = field.text().await.map_err(|e| ApiError::unprocessable("INVALID_UPLOAD", e.to_string()))?;
        files.insert(key, text);
    }
    let need = |k: &str| {
        files
            .get(k)
            .cloned()
            .ok_or_else(|| ApiError::unprocessable("MISSING_FILE", format!("upload lacks {k}")))
    };
    let (monitoring, wells) = (need("monitoring")?, need("wells")?);
    let overlays = files.get("overlays").cloned();
    let (id, dataset, diagnostics) =
        blocking(move || st.add_dataset(&monitoring, &wells, overlays.as_deref())).await?;
    Ok(json(
        StatusCode::CREATED,
        &Uploaded {
            id,
            wells: dataset.wells.len(),
            solutes: dataset.solutes,
            intervals: dataset.intervals.len(),
            diagnostics,
        },
    ))
}

async fn create_analysis(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let options: AnalysisOptions = if body.iter().all(u8::is_ascii_whitespace) {
        AnalysisOptions::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable("INVALID_OPTIONS", e.to_string()))?
    };
    let record = st.submit(&id, options)?;
    Ok(json(StatusCode::ACCEPTED, &record))
}

#[derive(Serialize)]
struct IntervalInfo<'a> {
    index: usize,
    label: &'a str,
    start: chrono::NaiveDate,
    end: chrono::NaiveDate,
}

#[derive(Serialize)]
struct SoluteInfo<'a> {
    solute: &'a str,
    units: Option<&'a str>,
    fitted: bool,
    lambda: Option<f64>,
    edf: Option<f64>,
}

#[derive(Serialize)]
struct JobView<'a> {
    #[serde(flatten)]
    record: &'a JobRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<Summary<'a>>,
}

#[derive(Serialize)]
struct Summary<'a> {
    wells: Vec<&'a aquitrend::dataset::WellLocation>,
    solutes: Vec<SoluteInfo<'a>>,
    intervals: Vec<IntervalInfo<'a>>,
    has_napl: bool,
    has_flow: bool,
    overlays: &'a [aquitrend::dataset::Overlay],
    trend_failures: &'a [aquitrend::analysis::FitFailure],
    model_failures: &'a [aquitrend::analysis::FitFailure],
}

fn summary(a: &Analysis) -> Summary<'_> {
    let ds = &a.dataset;
    let mut wells: Vec<_> = ds.wells.iter().collect();
    wells.sort_by(|x, y| x.well_id.cmp(&y.well_id));
    Summary {
        wells,
        solutes: ds
            .solutes
            .iter()
            .map(|s| {
                let m = a.models.get(s);
                SoluteInfo {
                    solute: s,
                    units: ds.units_of(s),
                    fitted: m.is_some(),
                    lambda: m.map(|m| m.model.lambda),
                    edf: m.map(|m| m.model.edf),
                }
            })
            .collect(),
        intervals: ds
            .intervals
            .iter()
            .map(|iv| IntervalInfo { index: iv.index, label: &iv.label, start: iv.start, end: iv.end })
            .collect(),
        has_napl: ds.has_napl(),
        has_flow: a.triangulation.is_some(),
        overlays: &ds.overlays,
        trend_failures: &a.trend_failures,
        model_failures: &a.model_failures,
    }
}

async fn job_status(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = st.job(&id).ok_or_else(|| ApiError::not_found("ANALYSIS_NOT_FOUND", format!("no analysis '{id}'")))?;
    let record = job.snapshot();
    let analysis = if record.status == JobStatus::Done { job.analysis.read().expect("job lock").clone() } else { None };
    Ok(ok(&JobView { record: &record, summary: analysis.as_deref().map(summary) }))
}

fn param<'a>(q: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    q.get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::unprocessable("MISSING_PARAMETER", format!("query parameter '{key}' is required")))
}

fn parse_opt<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    q.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| ApiError::unprocessable("INVALID_PARAMETER", format!("query parameter '{key}' is invalid: '{v}'")))
        })
        .transpose()
}

fn grid_spec(q: &HashMap<String, String>) -> Result<GridSpec, ApiError> {
    let d = GridSpec::default();
    let spec = GridSpec {
        nx: parse_opt(q, "nx")?.unwrap_or(d.nx),
        ny: parse_opt(q, "ny")?.unwrap_or(d.ny),
        mask_hull: parse_opt(q, "mask")?.unwrap_or(d.mask_hull),
    };
    spec.validate()?;
    Ok(spec)
}

fn interval_index(raw: &str) -> Result<usize, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::unprocessable("INVALID_PARAMETER", format!("interval index must be a nonnegative integer, got '{raw}'")))
}

fn thresholds(q: &HashMap<String, String>) -> Result<BTreeMap<String, f64>, ApiError> {
    match q.get("thresholds") {
        None => Ok(BTreeMap::new()),
        Some(t) => parse_thresholds(t).map_err(|m| ApiError::unprocessable("INVALID_THRESHOLDS", m)),
    }
}

async fn trend(
    State(st): State<Arc<AppState>>,
    Path((id, well)): Path<(String, String)>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let a = st.analysis(&id)?;
    let solute = param(&q, "solute")?;
    if a.dataset.well(&well).is_none() {
        return Err(ApiError::not_found("WELL_NOT_FOUND", format!("no well '{well}'")));
    }
    if !a.dataset.solutes.iter().any(|s| s == solute) {
        return Err(ApiError::not_found("SOLUTE_NOT_FOUND", format!("no solute '{solute}'")));
    }
    match a.trend(&well, solute) {
        Some(fit) => Ok(ok(fit)),
        None => {
            let reason = a
                .trend_failures
                .iter()
                .find(|f| f.well_id.as_deref() == Some(well.as_str()) && f.solute == solute)
                .map_or_else(|| "no samples".to_string(), |f| f.message.clone());
            Err(ApiError::not_found("TREND_NOT_AVAILABLE", format!("{well}/{solute}: {reason}")))
        }
    }
}

async fn slice(
    State(st): State<Arc<AppState>>,
    Path((id, k)): Path<(String, String)>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let a = st.analysis(&id)?;
    let k = interval_index(&k)?;
    let solute = param(&q, "solute")?.to_string();
    let spec = grid_spec(&q)?;
    blocking(move || Ok(ok(&a.slice(&solute, k, spec)?))).await
}

async fn flow(State(st): State<Arc<AppState>>, Path((id, k)): Path<(String, String)>) -> Result<Response, ApiError> {
    let a = st.analysis(&id)?;
    let k = interval_index(&k)?;
    Ok(ok(&a.flow(k)?))
}

#[derive(Serialize)]
struct MatrixView {
    #[serde(flatten)]
    matrix: IndicatorMatrix,
    cutoffs: TrendCutoffs,
    diagnostics: Vec<Diagnostic>,
}

async fn indicators(State(st): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> Result<Response, ApiError> {
    let a = st.analysis(&id)?;
    let n = a.dataset.intervals.len();
    let k = match q.get("k") {
        Some(raw) => interval_index(raw)?,
        None => n.saturating_sub(1),
    };
    let mode = match q.get("mode") {
        Some(m) => m.parse::<IndicatorMode>().map_err(|e| ApiError::unprocessable("INVALID_MODE", e))?,
        None => IndicatorMode::Trend,
    };
    let th = thresholds(&q)?;
    let defaults = a.options.trend_cutoffs;
    let cutoffs = TrendCutoffs {
        stable: parse_opt(&q, "stable")?.unwrap_or(defaults.stable),
        strong: parse_opt(&q, "strong")?.unwrap_or(defaults.strong),
    };
    cutoffs.validate().map_err(|m| ApiError::unprocessable("INVALID_CUTOFFS", m))?;
    let (matrix, diagnostics) = a.indicators(k, mode, &th, Some(&cutoffs))?;
    Ok(ok(&MatrixView { matrix, cutoffs, diagnostics }))
}

async fn frames(State(st): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> Result<Response, ApiError> {
    let a = st.analysis(&id)?;
    let solute = param(&q, "solute")?.to_string();
    let spec = grid_spec(&q)?;
    let offset: usize = parse_opt(&q, "offset")?.unwrap_or(0);
    let limit: usize = parse_opt(&q, "limit")?.unwrap_or(usize::MAX);
    blocking(move || Ok(ok(&a.frames(&solute, spec)?.page(offset, limit)))).await
}

async fn snapshot(State(st): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> Result<Response, ApiError> {
    let a = st.analysis(&id)?;
    let th = thresholds(&q)?;
    let spec = grid_spec(&q)?;
    blocking(move || Ok(ok(&a.latest_snapshot(&th, spec)?))).await
}

async fn report(State(st): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Params) -> Result<Response, ApiError> {
    let a = st.analysis(&id)?;
    let gw: bool = parse_opt(&q, "gw")?.unwrap_or(false);
    Ok(ok(&well_report(&a, gw)))
}
