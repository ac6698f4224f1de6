//! HTTP API over a finished drill output directory.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/mnos` | summary blocks plus committed demarcations |
//! | GET | `/api/mnos/{mnc}/cells` | top cells as a GeoJSON FeatureCollection |
//! | GET | `/api/mnos/{mnc}/grid?rows=&cols=` | density grid over the top cells |
//! | GET | `/api/mnos/{mnc}/suggest?fraction=` | minimal rectangle holding `fraction` of the samples |
//! | GET | `/api/mnos/{mnc}/demarcation` | committed demarcation or `null` |
//! | POST | `/api/mnos/{mnc}/demarcation` | evaluate a rectangle; persist it when `final` is true |
//!
//! Drill results are loaded once at startup and never change. All area math is
//! done here; clients only display what they receive.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use celldrill_core::geo::{bounding_box, density_grid, suggest_5gda, GeoRect, RectBounds, RectSource};
use celldrill_core::report::{to_geojson, DrillDocument, MnoSummary, SUMMARY_JSON};
use celldrill_core::{DemarcationRect, NddResult};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::run::CliError;
use crate::store::{DemarcationStore, StoredDemarcation};

pub struct AppState {
    pub doc: DrillDocument,
    pub store: DemarcationStore,
    pub grid: (usize, usize),
}

impl AppState {
    /// Loads `summary.json` and the demarcation store from `out`.
    pub fn load(out: &Path, grid: (usize, usize)) -> Result<Self, CliError> {
        let path = out.join(SUMMARY_JSON);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e} (run `celldrill drill` first)", path.display())))?;
        let doc: DrillDocument =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let store = DemarcationStore::open(out).map_err(|e| CliError::Other(e.into()))?;
        Ok(Self { doc, store, grid })
    }

    fn block(&self, mnc: u32) -> Result<&MnoSummary, ApiError> {
        self.doc
            .summary
            .mnos
            .iter()
            .find(|m| m.mnc == mnc)
            .ok_or(ApiError::NotFound(format!("unknown mnc {mnc}")))
    }

    fn result(&self, mnc: u32) -> Result<&NddResult, ApiError> {
        let block = self.block(mnc)?;
        self.doc.result(mnc).ok_or_else(|| {
            ApiError::NotFound(format!(
                "mnc {mnc} has no drill result: {}",
                block.error.as_deref().unwrap_or("missing")
            ))
        })
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Invalid(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Invalid(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

type Shared = Arc<AppState>;

#[derive(Serialize)]
struct MnoListing<'a> {
    #[serde(flatten)]
    summary: &'a MnoSummary,
    committed: Option<StoredDemarcation>,
}

async fn list_mnos(State(st): State<Shared>) -> Json<serde_json::Value> {
    let committed = st.store.all();
    let mnos: Vec<MnoListing> = st
        .doc
        .summary
        .mnos
        .iter()
        .map(|m| MnoListing {
            summary: m,
            committed: committed.get(&m.mnc).cloned(),
        })
        .collect();
    Json(json!({
        "mcc": st.doc.summary.mcc,
        "cbs": st.doc.summary.cbs,
        "n_c": st.doc.summary.n_c,
        "mnos": mnos,
    }))
}

async fn cells(State(st): State<Shared>, UrlPath(mnc): UrlPath<u32>) -> Result<Json<serde_json::Value>, ApiError> {
    Ok(Json(to_geojson(st.result(mnc)?, None)))
}

#[derive(Debug, Deserialize)]
pub struct GridQuery {
    rows: Option<usize>,
    cols: Option<usize>,
}

async fn grid(
    State(st): State<Shared>,
    UrlPath(mnc): UrlPath<u32>,
    Query(q): Query<GridQuery>,
) -> Result<Response, ApiError> {
    let result = st.result(mnc)?;
    let rows = q.rows.unwrap_or(st.grid.0);
    let cols = q.cols.unwrap_or(st.grid.1);
    let rect = bounding_box(&result.top_cells).map_err(|e| ApiError::NotFound(e.to_string()))?;
    let grid = density_grid(&result.top_cells, rect, rows, cols).map_err(|e| ApiError::Invalid(e.to_string()))?;
    Ok(Json(grid).into_response())
}

#[derive(Debug, Deserialize)]
pub struct SuggestQuery {
    fraction: Option<f64>,
}

async fn suggest(
    State(st): State<Shared>,
    UrlPath(mnc): UrlPath<u32>,
    Query(q): Query<SuggestQuery>,
) -> Result<Json<DemarcationRect>, ApiError> {
    let result = st.result(mnc)?;
    let fraction = q.fraction.unwrap_or(0.8);
    suggest_5gda(mnc, &result.top_cells, fraction)
        .map(Json)
        .map_err(|e| ApiError::Invalid(e.to_string()))
}

async fn get_demarcation(
    State(st): State<Shared>,
    UrlPath(mnc): UrlPath<u32>,
) -> Result<Json<Option<StoredDemarcation>>, ApiError> {
    st.block(mnc)?;
    Ok(Json(st.store.get(mnc)))
}

/// Candidate rectangle sent by the UI.
#[derive(Debug, Clone, Deserialize)]
pub struct DemarcationRequest {
    #[serde(flatten)]
    pub bounds: RectBounds,
    #[serde(default, rename = "final")]
    pub commit: bool,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemarcationResponse {
    pub rect: GeoRect,
    pub area_km2: f64,
    pub contained_cells: u64,
    pub contained_samples: u64,
    pub persisted: bool,
}

async fn post_demarcation(
    State(st): State<Shared>,
    UrlPath(mnc): UrlPath<u32>,
    Json(req): Json<DemarcationRequest>,
) -> Result<Json<DemarcationResponse>, ApiError> {
    let result = st.result(mnc)?;
    let rect = GeoRect::try_from(req.bounds).map_err(|e| ApiError::Invalid(e.to_string()))?;
    let d = DemarcationRect::evaluate(mnc, rect, &result.top_cells, RectSource::Manual);
    if req.commit {
        let entry = StoredDemarcation {
            demarcation: d.clone(),
            committed_at: Utc::now(),
            note: req.note,
        };
        let st2 = st.clone();
        tokio::task::spawn_blocking(move || st2.store.commit(entry))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))?
            .map_err(|e| ApiError::Internal(format!("could not persist demarcation: {e}")))?;
        log::info!("mnc {mnc}: committed {:.2} km2 demarcation", d.area_km2);
    }
    Ok(Json(DemarcationResponse {
        rect: d.rect,
        area_km2: d.area_km2,
        contained_cells: d.contained_cells,
        contained_samples: d.contained_samples,
        persisted: req.commit,
    }))
}

const PLACEHOLDER_INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>celldrill</title></head>\n<body><h1>celldrill</h1><p>The demarcation UI assets are not installed. Start the service with <code>--assets DIR</code>, or use the JSON API under <a href=\"/api/mnos\">/api/mnos</a>.</p></body></html>\n";

pub fn router(state: Shared, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/mnos", get(list_mnos))
        .route("/api/mnos/{mnc}/cells", get(cells))
        .route("/api/mnos/{mnc}/grid", get(grid))
        .route("/api/mnos/{mnc}/suggest", get(suggest))
        .route("/api/mnos/{mnc}/demarcation", get(get_demarcation).post(post_demarcation))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

pub async fn serve(
    out: &Path,
    grid: (usize, usize),
    listen: SocketAddr,
    assets: Option<PathBuf>,
) -> Result<(), CliError> {
    let state = Arc::new(AppState::load(out, grid)?);
    let app = router(state, assets);
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .map_err(|e| CliError::Usage(format!("cannot listen on {listen}: {e}")))?;
    println!("serving {} at http://{}", out.display(), listener.local_addr().map_err(anyhow::Error::from)?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Other(e.into()))
}
