//! Read-only JSON API over a directory of hoopstat artifacts.
//!
//! The catalog is built once in the background; until it is ready (or if
//! loading failed) every `/api` route answers 503. All numbers served are
//! read from artifacts written by the CLI, never recomputed from draws
//! except for density binning.

pub mod catalog;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::extract::{Query, State};
use axum::http::{header, HeaderName, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use hoopstat::artifact::{decode_points, sha256_hex};
use hoopstat::report::EpaaRow;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::trace::TraceLayer;

pub use axum::http::HeaderValue;
pub use catalog::{load_catalog, Catalog, CatalogError, TrendRow};

/// Players per density or timeseries request.
pub const MAX_PLAYERS: usize = 4;
/// Above this many draws, densities are served as histograms.
pub const HISTOGRAM_THRESHOLD: usize = 20_000;
pub const HISTOGRAM_BINS: usize = 100;
pub const CONTENT_HASH_HEADER: &str = "x-content-sha256";

#[derive(Debug, Clone)]
enum LoadState {
    Ready(Arc<Catalog>),
    Failed(String),
}

#[derive(Debug, Clone, Default)]
pub struct AppState {
    slot: Arc<OnceLock<LoadState>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ready(catalog: Catalog) -> Self {
        let s = Self::new();
        s.set(Ok(catalog));
        s
    }

    /// Records the outcome of loading. Only the first call has an effect.
    pub fn set(&self, result: Result<Catalog, CatalogError>) {
        let state = match result {
            Ok(c) => LoadState::Ready(Arc::new(c)),
            Err(e) => LoadState::Failed(e.to_string()),
        };
        let _ = self.slot.set(state);
    }

    fn catalog(&self) -> Result<Arc<Catalog>, ApiError> {
        match self.slot.get() {
            Some(LoadState::Ready(c)) => Ok(c.clone()),
            Some(LoadState::Failed(e)) => Err(ApiError::Unavailable(format!("artifacts failed to load: {e}"))),
            None => Err(ApiError::Unavailable("artifacts are still loading".into())),
        }
    }
}

#[derive(Debug)]
enum ApiError {
    BadRequest(String),
    NotFound(String),
    Unavailable(String),
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match &self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Unavailable(m) => (StatusCode::SERVICE_UNAVAILABLE, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, json(&ErrorBody { error: msg })).into_response()
    }
}

fn json<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response types always serialise");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Builds the router. `cors_origin` of `None` allows any origin.
pub fn router(state: AppState, cors_origin: Option<HeaderValue>) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::HEAD])
        .allow_origin(match cors_origin {
            Some(o) => AllowOrigin::exact(o),
            None => AllowOrigin::any(),
        })
        .expose_headers([HeaderName::from_static(CONTENT_HASH_HEADER), header::CONTENT_DISPOSITION]);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/catalog", get(catalog_route))
        .route("/api/epaa/density", get(density))
        .route("/api/epaa/table", get(table))
        .route("/api/epaa/draws", get(draws))
        .route("/api/epaa/timeseries", get(timeseries))
        .route("/api/teams/trends", get(trends))
        .layer(cors)
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

/// Serves `router` on `listener`, loading the catalog from `root` in the
/// background, until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    root: PathBuf,
    cors_origin: Option<HeaderValue>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let state = AppState::new();
    let loader = state.clone();
    tokio::task::spawn_blocking(move || {
        let result = load_catalog(&root);
        match &result {
            Ok(c) => tracing::info!(seasons = c.seasons.len(), artifacts = c.artifacts.len(), "catalog loaded"),
            Err(e) => tracing::error!(error = %e, "catalog failed to load"),
        }
        loader.set(result);
    });
    axum::serve(listener, router(state, cors_origin))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn healthz() -> Response {
    json(&serde_json::json!({ "status": "ok" }))
}

#[derive(Serialize)]
struct CatalogSeason<'a> {
    season: i32,
    players: Vec<CatalogPlayer<'a>>,
    teams: Vec<&'a str>,
}

#[derive(Serialize)]
struct CatalogPlayer<'a> {
    entity_id: &'a str,
    label: &'a str,
}

#[derive(Serialize)]
struct CatalogBody<'a> {
    seasons: Vec<CatalogSeason<'a>>,
    artifacts: &'a [catalog::ArtifactEntry],
}

async fn catalog_route(State(state): State<AppState>) -> Result<Response, ApiError> {
    let c = state.catalog()?;
    let body = CatalogBody {
        seasons: c
            .seasons
            .iter()
            .map(|(&season, s)| CatalogSeason {
                season,
                players: s
                    .players
                    .values()
                    .map(|p| CatalogPlayer {
                        entity_id: &p.row.entity_id,
                        label: &p.row.label,
                    })
                    .collect(),
                teams: s.teams.iter().map(String::as_str).collect(),
            })
            .collect(),
        artifacts: &c.artifacts,
    };
    Ok(json(&body))
}

fn parse_season(raw: Option<&str>) -> Result<i32, ApiError> {
    let raw = raw.ok_or_else(|| ApiError::BadRequest("missing `season` parameter".into()))?;
    raw.trim()
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("invalid season `{raw}`")))
}

fn parse_players(raw: Option<&str>) -> Result<Vec<String>, ApiError> {
    let raw = raw.ok_or_else(|| ApiError::BadRequest("missing `players` parameter".into()))?;
    let mut seen = BTreeSet::new();
    let ids: Vec<String> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(s.to_string()))
        .map(str::to_string)
        .collect();
    if ids.is_empty() {
        return Err(ApiError::BadRequest("at least one player is required".into()));
    }
    if ids.len() > MAX_PLAYERS {
        return Err(ApiError::BadRequest(format!("at most {MAX_PLAYERS} players per request, got {}", ids.len())));
    }
    Ok(ids)
}

#[derive(Deserialize)]
struct SeasonPlayers {
    season: Option<String>,
    players: Option<String>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Density {
    Samples { values: Vec<i64> },
    Histogram { edges: Vec<f64>, counts: Vec<u64> },
}

#[derive(Serialize)]
struct DensityPlayer {
    entity_id: String,
    label: String,
    epaa_mean: f64,
    games_divisor: f64,
    draws: usize,
    #[serde(flatten)]
    density: Density,
}

#[derive(Serialize)]
struct DensityBody {
    season: i32,
    players: Vec<DensityPlayer>,
}

/// Equal-width bins spanning the sample range.
pub fn histogram(values: &[i64], bins: usize) -> (Vec<f64>, Vec<u64>) {
    let lo = values.iter().copied().min().unwrap_or(0) as f64;
    let mut hi = values.iter().copied().max().unwrap_or(0) as f64;
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = (((v as f64 - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    (edges, counts)
}

fn read_player_points(entry: &catalog::PlayerEntry) -> Result<Vec<u8>, ApiError> {
    let bytes = std::fs::read(&entry.points_path).map_err(|e| ApiError::Internal(format!("{}: {e}", entry.points_path.display())))?;
    if sha256_hex(&bytes) != entry.points_sha256 {
        return Err(ApiError::Internal(format!("{} changed on disk", entry.points_path.display())));
    }
    Ok(bytes)
}

async fn density(State(state): State<AppState>, Query(q): Query<SeasonPlayers>) -> Result<Response, ApiError> {
    let c = state.catalog()?;
    let season = parse_season(q.season.as_deref())?;
    let ids = parse_players(q.players.as_deref())?;
    if !c.seasons.contains_key(&season) {
        return Err(ApiError::NotFound(format!("unknown season {season}")));
    }
    let mut players = Vec::with_capacity(ids.len());
    for id in ids {
        let entry = c
            .player(season, &id)
            .ok_or_else(|| ApiError::BadRequest(format!("unknown player `{id}` in season {season}")))?;
        let lines = decode_points(&read_player_points(entry)?).map_err(|e| ApiError::Internal(e.to_string()))?;
        let values: Vec<i64> = lines.iter().map(|l| l.total).collect();
        let draws = values.len();
        let density = if draws > HISTOGRAM_THRESHOLD {
            let (edges, counts) = histogram(&values, HISTOGRAM_BINS);
            Density::Histogram { edges, counts }
        } else {
            Density::Samples { values }
        };
        players.push(DensityPlayer {
            entity_id: entry.row.entity_id.clone(),
            label: entry.row.label.clone(),
            epaa_mean: entry.row.epaa_mean,
            games_divisor: entry.games_divisor,
            draws,
            density,
        });
    }
    Ok(json(&DensityBody { season, players }))
}

#[derive(Deserialize)]
struct SeasonOnly {
    season: Option<String>,
}

#[derive(Serialize)]
struct TableBody<'a> {
    season: i32,
    rows: Vec<&'a EpaaRow>,
}

async fn table(State(state): State<AppState>, Query(q): Query<SeasonOnly>) -> Result<Response, ApiError> {
    let c = state.catalog()?;
    let season = parse_season(q.season.as_deref())?;
    let rows = c
        .table(season)
        .filter(|rows| !rows.is_empty())
        .ok_or_else(|| ApiError::NotFound(format!("no EPAA table for season {season}")))?;
    Ok(json(&TableBody { season, rows }))
}

#[derive(Deserialize)]
struct DrawsQuery {
    season: Option<String>,
    player: Option<String>,
}

async fn draws(State(state): State<AppState>, Query(q): Query<DrawsQuery>) -> Result<Response, ApiError> {
    let c = state.catalog()?;
    let season = parse_season(q.season.as_deref())?;
    let id = q.player.ok_or_else(|| ApiError::BadRequest("missing `player` parameter".into()))?;
    let entry = c
        .player(season, &id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown player `{id}` in season {season}")))?;
    let bytes = read_player_points(entry)?;
    let filename = format!("{}_{}_epaa.jsonl", hoopstat::artifact::entity_dir_name(&entry.row.entity_id), season);
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CONTENT_LENGTH, bytes.len())
        .header(CONTENT_HASH_HEADER, entry.points_sha256.as_str())
        .header(header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\""))
        .body(Body::from(bytes))
        .map_err(|e| ApiError::Internal(e.to_string()))
}

#[derive(Serialize)]
struct SeriesPoint {
    season: i32,
    epaa_mean: f64,
    mean: f64,
    rank: usize,
}

#[derive(Serialize)]
struct Series {
    entity_id: String,
    points: Vec<SeriesPoint>,
}

#[derive(Serialize)]
struct SeriesBody {
    series: Vec<Series>,
}

async fn timeseries(State(state): State<AppState>, Query(q): Query<SeasonPlayers>) -> Result<Response, ApiError> {
    let c = state.catalog()?;
    let ids = parse_players(q.players.as_deref())?;
    let mut series = Vec::with_capacity(ids.len());
    for id in ids {
        if !c.knows_player(&id) {
            return Err(ApiError::BadRequest(format!("unknown player `{id}`")));
        }
        let points = c
            .seasons
            .iter()
            .filter_map(|(&season, s)| {
                s.players.get(&id).map(|p| SeriesPoint {
                    season,
                    epaa_mean: p.row.epaa_mean,
                    mean: p.row.mean,
                    rank: p.row.rank,
                })
            })
            .collect();
        series.push(Series { entity_id: id, points });
    }
    Ok(json(&SeriesBody { series }))
}

#[derive(Deserialize)]
struct TrendsQuery {
    team: Option<String>,
}

#[derive(Serialize)]
struct TrendsBody<'a> {
    rows: Vec<&'a TrendRow>,
}

async fn trends(State(state): State<AppState>, Query(q): Query<TrendsQuery>) -> Result<Response, ApiError> {
    let c = state.catalog()?;
    let rows: Vec<&TrendRow> = match &q.team {
        Some(team) => {
            let rows: Vec<_> = c.trends.iter().filter(|r| &r.team == team).collect();
            if rows.is_empty() {
                return Err(ApiError::NotFound(format!("unknown team `{team}`")));
            }
            rows
        }
        None => c.trends.iter().collect(),
    };
    Ok(json(&TrendsBody { rows }))
}
