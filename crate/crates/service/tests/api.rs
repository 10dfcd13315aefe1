use std::path::Path;

use axum::body::Body;
use axum::http::{header, HeaderValue, Method, Request, StatusCode};
use axum::Router;
use hoopstat::artifact::{self, sha256_hex, write_posterior};
use hoopstat::ingest::{parse_aggregates, EntityKind};
use hoopstat::pipeline::{run_epaa, select_entities, ShotCount};
use hoopstat::predictive::PredictiveConfig;
use hoopstat::report::{rank_entities, RankBy, SummaryRow};
use hoopstat::sampler::{run_chain, ChainConfig, PosteriorDraws, Priors};
use hoopstat_service::{histogram, load_catalog, router, AppState, CONTENT_HASH_HEADER};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const TEAMS: &str = "entity_id,season,region,attempts,makes
BOS,2021,ATB,300,190
BOS,2021,LC3,60,25
BOS,2021,RC3,55,20
BOS,2021,ITP,150,60
BOS,2021,MID,120,50
BOS,2021,RA,260,95
BOS,2021,FT,200,160
NYK,2021,ATB,280,170
NYK,2021,LC3,40,14
NYK,2021,RC3,45,15
NYK,2021,ITP,170,70
NYK,2021,MID,200,80
NYK,2021,RA,200,70
NYK,2021,FT,180,140
NYK,2020,ATB,10,5
";

const PLAYERS: &str = "entity_id,season,region,attempts,makes
p1,2020,ATB,40,25
p1,2020,RA,30,12
p1,2021,ATB,50,30
p1,2021,MID,20,8
p2,2021,RA,60,25
p2,2021,FT,30,27
p3,2021,LC3,25,11
p3,2021,RC3,25,9
p3,2021,FT,10,9
p4,2019,MID,30,12
";

fn fit(csv: &str, kind: EntityKind, seed: u64) -> PosteriorDraws {
    let data = parse_aggregates(csv.as_bytes(), kind).unwrap();
    run_chain(&data, &Priors::new(2, 2, 5.0, 5.0, 5.0), &ChainConfig::new(80, 30, 1, seed)).unwrap()
}

fn build_fixture(root: &Path, samples_per_draw: usize) {
    let teams = fit(TEAMS, EntityKind::Team, 1);
    let players = fit(PLAYERS, EntityKind::Player, 2);
    write_posterior(&root.join("teams"), &teams).unwrap();
    write_posterior(&root.join("players-posterior"), &players).unwrap();
    let cfg = PredictiveConfig {
        seed: 9,
        samples_per_draw,
        ..PredictiveConfig::default()
    };
    let keys = select_entities(&players, "all").unwrap();
    run_epaa(&players, &teams, &keys, ShotCount::Observed, &cfg, &root.join("epaa")).unwrap();
}

fn app(root: &Path) -> Router {
    router(AppState::ready(load_catalog(root).unwrap()), Some(HeaderValue::from_static("http://ui.example")))
}

async fn send(app: &Router, method: Method, uri: &str) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header(header::ORIGIN, "http://ui.example").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, _, body) = send(app, Method::GET, uri).await;
    (status, serde_json::from_slice(&body).unwrap())
}

#[tokio::test]
async fn unavailable_until_loaded() {
    let state = AppState::new();
    let app = router(state.clone(), None);
    let (status, body) = get_json(&app, "/api/catalog").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].as_str().unwrap().contains("loading"));
    assert_eq!(send(&app, Method::GET, "/healthz").await.0, StatusCode::OK);

    let dir = tempfile::tempdir().unwrap();
    state.set(load_catalog(dir.path()));
    let (status, body) = get_json(&app, "/api/epaa/table?season=2021").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].as_str().unwrap().contains("no artifacts"));
}

#[tokio::test]
async fn missing_directory_is_reported() {
    let err = load_catalog(Path::new("/nonexistent/artifacts")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/artifacts"));
}

#[tokio::test]
async fn catalog_lists_seasons_and_entities() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let app = app(dir.path());
    let (status, body) = get_json(&app, "/api/catalog").await;
    assert_eq!(status, StatusCode::OK);
    let seasons: Vec<i64> = body["seasons"].as_array().unwrap().iter().map(|s| s["season"].as_i64().unwrap()).collect();
    assert_eq!(seasons, vec![2019, 2020, 2021]);
    let s2021 = &body["seasons"][2];
    let players: Vec<&str> = s2021["players"].as_array().unwrap().iter().map(|p| p["entity_id"].as_str().unwrap()).collect();
    assert_eq!(players, vec!["p1", "p2", "p3"]);
    assert_eq!(s2021["teams"], serde_json::json!(["BOS", "NYK"]));
    assert_eq!(body["seasons"][1]["teams"], serde_json::json!(["NYK"]));
    for a in body["artifacts"].as_array().unwrap() {
        let bytes = std::fs::read(dir.path().join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(sha256_hex(&bytes), a["sha256"].as_str().unwrap());
    }
}

#[tokio::test]
async fn table_ranks_match_shared_ranking() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let app = app(dir.path());
    let (status, body) = get_json(&app, "/api/epaa/table?season=2021").await;
    assert_eq!(status, StatusCode::OK);
    let rows = body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let ranks: Vec<u64> = rows.iter().map(|r| r["rank"].as_u64().unwrap()).collect();
    assert_eq!(ranks, vec![1, 2, 3]);

    // recompute from the per-player sidecars with the library ranking
    let summaries: Vec<SummaryRow> = ["p1_2021", "p2_2021", "p3_2021"]
        .iter()
        .map(|l| artifact::read_points_meta(&dir.path().join("epaa/players").join(l)).unwrap().summary)
        .collect();
    let expected = rank_entities(summaries, RankBy::Mean);
    for (row, exp) in rows.iter().zip(&expected) {
        assert_eq!(row["label"].as_str().unwrap(), exp.summary.label);
        assert_eq!(row["rank"].as_u64().unwrap() as usize, exp.rank);
        assert_eq!(row["mean"].as_f64().unwrap(), exp.summary.mean);
    }
    // matches the CLI-side table on disk exactly
    let table = artifact::decode_epaa_table(&std::fs::read(dir.path().join("epaa/epaa.json")).unwrap()).unwrap();
    let on_disk: Vec<Value> = table.rows.iter().filter(|r| r.season == 2021).map(|r| serde_json::to_value(r).unwrap()).collect();
    assert_eq!(rows, &on_disk);

    assert_eq!(get_json(&app, "/api/epaa/table?season=1999").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get_json(&app, "/api/epaa/table").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn density_shapes_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let app = app(dir.path());
    let (status, body) = get_json(&app, "/api/epaa/density?season=2021&players=p2").await;
    assert_eq!(status, StatusCode::OK);
    let p = &body["players"][0];
    assert_eq!(p["kind"], "samples");
    assert_eq!(p["values"].as_array().unwrap().len(), 50);
    let values: Vec<f64> = p["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!((mean - p["epaa_mean"].as_f64().unwrap()).abs() < 1e-9);

    let (status, body) = get_json(&app, "/api/epaa/density?season=2021&players=p1,p2,p3,p4,p5").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("at most 4"));
    assert_eq!(get_json(&app, "/api/epaa/density?season=2021&players=zz").await.0, StatusCode::BAD_REQUEST);
    let (_, body) = get_json(&app, "/api/epaa/density?season=2021&players=p3,p1").await;
    let order: Vec<&str> = body["players"].as_array().unwrap().iter().map(|p| p["entity_id"].as_str().unwrap()).collect();
    assert_eq!(order, vec!["p3", "p1"]);
}

#[tokio::test]
async fn large_samples_are_binned() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 500);
    let app = app(dir.path());
    let (status, body) = get_json(&app, "/api/epaa/density?season=2021&players=p1").await;
    assert_eq!(status, StatusCode::OK);
    let p = &body["players"][0];
    assert_eq!(p["kind"], "histogram");
    assert_eq!(p["draws"], 25_000);
    assert_eq!(p["edges"].as_array().unwrap().len(), 101);
    let counts: u64 = p["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(counts, 25_000);
}

#[test]
fn histogram_bins_cover_range() {
    let (edges, counts) = histogram(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10], 10);
    assert_eq!(edges.first(), Some(&0.0));
    assert_eq!(edges.last(), Some(&10.0));
    assert_eq!(counts, vec![1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
    let (edges, counts) = histogram(&[4, 4, 4], 5);
    assert_eq!((edges[0], edges[5]), (4.0, 5.0));
    assert_eq!(counts, vec![3, 0, 0, 0, 0]);
}

#[tokio::test]
async fn draws_download_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let app = app(dir.path());
    let disk = std::fs::read(dir.path().join("epaa/players/p1_2021/points.jsonl")).unwrap();
    let (status, headers, body) = send(&app, Method::GET, "/api/epaa/draws?season=2021&player=p1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, disk);
    assert_eq!(headers[CONTENT_HASH_HEADER].to_str().unwrap(), sha256_hex(&disk));
    assert!(headers[header::CONTENT_DISPOSITION].to_str().unwrap().contains("p1_2021_epaa.jsonl"));
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://ui.example");

    let (status, headers, body) = send(&app, Method::HEAD, "/api/epaa/draws?season=2021&player=p1").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.is_empty());
    assert_eq!(headers[header::CONTENT_LENGTH].to_str().unwrap(), disk.len().to_string());

    assert_eq!(send(&app, Method::GET, "/api/epaa/draws?season=2021&player=nobody").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn trends_come_from_ingested_counts() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let app = app(dir.path());
    let (status, body) = get_json(&app, "/api/teams/trends?team=BOS").await;
    assert_eq!(status, StatusCode::OK);
    let rows = body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    let share: f64 = rows.iter().map(|r| r["attempt_share"].as_f64().unwrap()).sum();
    assert!((share - 1.0).abs() < 1e-12);
    let atb = rows.iter().find(|r| r["region"] == "ATB").unwrap();
    assert_eq!(atb["make_rate"].as_f64().unwrap(), 190.0 / 300.0);
    let (_, body) = get_json(&app, "/api/teams/trends?team=NYK").await;
    let y2020: Vec<&Value> = body["rows"].as_array().unwrap().iter().filter(|r| r["season"] == 2020).collect();
    assert_eq!(y2020.len(), 7);
    assert!(y2020.iter().find(|r| r["region"] == "MID").unwrap()["make_rate"].is_null());
    assert_eq!(get_json(&app, "/api/teams/trends?team=XYZ").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get_json(&app, "/api/teams/trends").await.1["rows"].as_array().unwrap().len(), 21);
}

#[tokio::test]
async fn timeseries_follows_qualified_seasons() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let app = app(dir.path());
    let (status, body) = get_json(&app, "/api/epaa/timeseries?players=p1,p4").await;
    assert_eq!(status, StatusCode::OK);
    let p1 = &body["series"][0]["points"];
    assert_eq!(p1.as_array().unwrap().len(), 2);
    assert_eq!(p1[0]["season"], 2020);
    assert_eq!(p1[1]["season"], 2021);
    let (_, table) = get_json(&app, "/api/epaa/table?season=2021").await;
    let row = table["rows"].as_array().unwrap().iter().find(|r| r["entity_id"] == "p1").unwrap();
    assert_eq!(p1[1]["rank"], row["rank"]);
    assert_eq!(p1[1]["epaa_mean"], row["epaa_mean"]);
    assert_eq!(body["series"][1]["points"].as_array().unwrap().len(), 1);
    assert_eq!(get_json(&app, "/api/epaa/timeseries?players=a,b,c,d,e").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get_json(&app, "/api/epaa/timeseries?players=ghost").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn responses_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let app = app(dir.path());
    for uri in ["/api/catalog", "/api/epaa/table?season=2021", "/api/epaa/density?season=2021&players=p1,p2", "/api/teams/trends"] {
        let a = send(&app, Method::GET, uri).await.2;
        let b = send(&app, Method::GET, uri).await.2;
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn tampered_points_fail_to_load() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), 1);
    let path = dir.path().join("epaa/players/p2_2021/points.jsonl");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.push(b'\n');
    std::fs::write(&path, bytes).unwrap();
    let err = load_catalog(dir.path()).unwrap_err();
    assert!(err.to_string().contains("does not match"), "{err}");
}
