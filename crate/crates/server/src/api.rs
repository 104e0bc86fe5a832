use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use scout_core::catalog::{catalog_stats, write_places_csv, Catalog, CatalogError, PlaceCategory};
use scout_core::geo::{grid_from_bbox, BoundingBox, GeoError};
use scout_core::scoring::{CriterionId, ProximityConfig, RankedApartment, Scorer, WeightVector};
use scout_core::submission::{
    FixtureGeocoder, Geocoder, MergeError, MergeReport, StorageError, Submission, SubmissionStore,
};

use crate::config::ServiceConfig;
use crate::geojson::{layer_feature, place_feature, FeatureCollection};

/// Upper bound on raster cells per score request.
pub const MAX_RASTER_CELLS: usize = 1_000_000;

pub type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("invalid anchor: {0}")]
    Anchor(#[from] GeoError),
    #[error("cannot load catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("cannot open submission store: {0}")]
    Storage(#[from] StorageError),
}

/// Shared service state. The scorer is an immutable snapshot replaced
/// whole on merge, so a reader sees either the old or the new catalog.
pub struct AppState {
    config: ServiceConfig,
    snapshot: RwLock<Arc<Scorer>>,
    store: SubmissionStore,
    geocoder: Box<dyn Geocoder + Send + Sync>,
    clock: Clock,
    merging: tokio::sync::Mutex<()>,
}

impl AppState {
    /// Loads the catalog and geocoder table from the data directory and
    /// opens the submission store under `<data_dir>/submissions`.
    pub fn load(config: ServiceConfig) -> Result<Self, StartupError> {
        let anchor = config.anchor()?;
        let catalog = Catalog::load_dir(&config.data_dir, anchor, config.ceiling)?;
        let geocoder_path = config.data_dir.join("geocoder.csv");
        let geocoder = if geocoder_path.exists() {
            let file = fs::File::open(&geocoder_path).map_err(CatalogError::from)?;
            FixtureGeocoder::from_csv(file)?
        } else {
            FixtureGeocoder::default()
        };
        Self::with_parts(config, catalog, Box::new(geocoder))
    }

    pub fn with_parts(
        config: ServiceConfig,
        catalog: Catalog,
        geocoder: Box<dyn Geocoder + Send + Sync>,
    ) -> Result<Self, StartupError> {
        let store = SubmissionStore::open(config.data_dir.join("submissions"))?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(Scorer::new(catalog, ProximityConfig::default()))),
            config,
            store,
            geocoder,
            clock: Box::new(Utc::now),
            merging: tokio::sync::Mutex::new(()),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &SubmissionStore {
        &self.store
    }

    pub fn snapshot(&self) -> Arc<Scorer> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn replace_snapshot(&self, scorer: Scorer) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(scorer);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/places", get(places))
        .route("/api/layers/:name", get(layer))
        .route("/api/score", post(score))
        .route("/api/stats", get(stats))
        .route("/api/apartments", post(submit_apartment))
        .route("/api/admin/merge", post(merge))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            field: None,
        }
    }

    fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        tracing::error!("{err}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            field: self.field.as_deref(),
        };
        (self.status, json_body(&body)).into_response()
    }
}

/// Serialized JSON with a fixed content type.
struct JsonBody(Vec<u8>);

impl IntoResponse for JsonBody {
    fn into_response(self) -> Response {
        ([(header::CONTENT_TYPE, "application/json")], self.0).into_response()
    }
}

fn json_body<T: Serialize>(value: &T) -> JsonBody {
    JsonBody(serde_json::to_vec(value).expect("response types serialize"))
}

fn parse_body<'a, T: Deserialize<'a>>(bytes: &'a Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| {
        let status = if e.is_data() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, format!("invalid request body: {e}"))
    })
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    catalog_loaded: bool,
    place_count: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> JsonBody {
    json_body(&Health {
        status: "ok",
        catalog_loaded: true,
        place_count: state.snapshot().catalog().places().len(),
    })
}

#[derive(Deserialize)]
struct PlacesQuery {
    category: Option<String>,
}

async fn places(State(state): State<Arc<AppState>>, Query(q): Query<PlacesQuery>) -> Result<JsonBody, ApiError> {
    let raw = q
        .category
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "category is required").field("category"))?;
    let category: PlaceCategory = raw.parse().map_err(|_| {
        ApiError::new(StatusCode::BAD_REQUEST, format!("unknown category {raw:?}")).field("category")
    })?;
    let scorer = state.snapshot();
    let features = scorer.catalog().places_in(category).map(place_feature).collect();
    Ok(json_body(&FeatureCollection::new(features)))
}

async fn layer(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> Result<JsonBody, ApiError> {
    let criterion = name
        .parse::<CriterionId>()
        .ok()
        .filter(CriterionId::is_area)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no data layer named {name:?}")))?;
    let scorer = state.snapshot();
    let features = scorer
        .catalog()
        .block_groups()
        .iter()
        .map(|bg| layer_feature(bg, criterion, scorer.tables()))
        .collect();
    Ok(json_body(&FeatureCollection::new(features)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRequest {
    /// Absent means the preset weights.
    weights: Option<BTreeMap<String, f64>>,
    cell_size: Option<f64>,
}

#[derive(Serialize)]
struct RasterBody<'a> {
    bbox: &'a BoundingBox,
    rows: usize,
    cols: usize,
    cell_size: f64,
    /// Row-major from the north-west cell; `null` where no criterion has data.
    values: &'a [Option<f64>],
}

#[derive(Serialize)]
struct ScoreResponse<'a> {
    raster: RasterBody<'a>,
    ranking: &'a [RankedApartment],
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> Result<JsonBody, ApiError> {
    let req: ScoreRequest = parse_body(&body)?;
    let weights = match &req.weights {
        None => WeightVector::preset(),
        Some(raw) => WeightVector::from_names(raw.iter().map(|(k, v)| (k.as_str(), *v))).map_err(|e| {
            let field = e.field().map_or_else(|| "weights".to_string(), |f| format!("weights.{f}"));
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()).field(field)
        })?,
    };
    let cell_size = req.cell_size.unwrap_or(state.config.cell_size);
    let invalid_cell = |msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg).field("cell_size");
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(invalid_cell(format!("cell_size must be positive, got {cell_size}")));
    }

    let scorer = state.snapshot();
    let spec = grid_from_bbox(scorer.catalog().extent(), cell_size).map_err(|e| invalid_cell(e.to_string()))?;
    if spec.len() > MAX_RASTER_CELLS {
        return Err(invalid_cell(format!(
            "cell_size {cell_size} gives {} cells, more than {MAX_RASTER_CELLS}",
            spec.len()
        )));
    }
    let body = tokio::task::spawn_blocking(move || {
        let raster = scorer.score_raster(&spec, &weights);
        let ranking = scorer.rank_catalog(&weights);
        json_body(&ScoreResponse {
            raster: RasterBody {
                bbox: spec.bbox(),
                rows: spec.rows(),
                cols: spec.cols(),
                cell_size: spec.cell_size(),
                values: raster.values(),
            },
            ranking: &ranking,
        })
    })
    .await
    .map_err(ApiError::internal)?;
    Ok(body)
}

#[derive(Serialize)]
struct StatsBody {
    count: usize,
    median_cost: f64,
    stddev_cost: f64,
}

async fn stats(State(state): State<Arc<AppState>>) -> Response {
    let scorer = state.snapshot();
    match catalog_stats(scorer.catalog().apartments()) {
        Ok(s) => json_body(&StatsBody {
            count: s.count,
            median_cost: s.median_cost,
            stddev_cost: s.stddev_cost,
        })
        .into_response(),
        Err(CatalogError::EmptyStatistics) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => ApiError::internal(e).into_response(),
    }
}

#[derive(Deserialize)]
struct ApartmentRequest {
    name: Option<String>,
    address: Option<String>,
    phone: Option<String>,
    website: Option<String>,
    rent: Option<f64>,
}

#[derive(Serialize)]
struct Created {
    filename: String,
}

async fn submit_apartment(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: ApartmentRequest = parse_body(&body)?;
    let submission = Submission::new(
        req.name.as_deref().unwrap_or(""),
        req.address.as_deref().unwrap_or(""),
        req.phone.as_deref(),
        req.website.as_deref(),
        req.rent,
    )
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()).field(e.field()))?;
    let now = (state.clock)();
    let state2 = state.clone();
    let filename = tokio::task::spawn_blocking(move || state2.store.save_submission(&submission, now))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok((StatusCode::CREATED, json_body(&Created { filename })).into_response())
}

#[derive(Serialize)]
struct MergeBody {
    #[serde(flatten)]
    report: MergeReport,
    place_count: usize,
}

/// Merges pending submissions, swaps in the new snapshot and rewrites
/// `places.csv` so merged listings survive a restart.
async fn merge(State(state): State<Arc<AppState>>) -> Result<JsonBody, ApiError> {
    let _guard = state.merging.lock().await;
    let state2 = state.clone();
    let (report, place_count) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let current = state2.snapshot();
        let (catalog, report) = state2
            .store
            .merge_pending(current.catalog(), state2.geocoder.as_ref())
            .map_err(|e| match e {
                MergeError::Storage(e) => ApiError::internal(e),
                MergeError::Catalog(e) => ApiError::internal(e),
            })?;
        let place_count = catalog.places().len();
        if !report.merged.is_empty() {
            persist_places(&state2.config.data_dir, &catalog).map_err(ApiError::internal)?;
            state2.replace_snapshot(Scorer::new(catalog, *current.proximity()));
        }
        Ok((report, place_count))
    })
    .await
    .map_err(ApiError::internal)??;
    Ok(json_body(&MergeBody { report, place_count }))
}

fn persist_places(data_dir: &Path, catalog: &Catalog) -> Result<(), CatalogError> {
    let target = data_dir.join("places.csv");
    let tmp = data_dir.join(".places.csv.tmp");
    let mut buf = Vec::new();
    write_places_csv(&mut buf, catalog.places())?;
    fs::write(&tmp, buf)?;
    fs::rename(&tmp, &target)?;
    Ok(())
}
