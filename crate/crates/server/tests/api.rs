mod common;

use std::fs;

use axum::http::StatusCode;
use common::*;
use regex::Regex;
use scout_core::catalog::{Catalog, PlaceCategory};
use scout_core::geo::haversine_distance;
use serde_json::{json, Value};

fn assert_feature_collection(v: &Value) {
    assert_eq!(v["type"], "FeatureCollection");
    for f in v["features"].as_array().unwrap() {
        assert_eq!(f["type"], "Feature");
        let g = &f["geometry"];
        let coords: Vec<&Value> = match g["type"].as_str().unwrap() {
            "Point" => vec![&g["coordinates"]],
            "Polygon" => {
                let ring = g["coordinates"][0].as_array().unwrap();
                assert!(ring.len() >= 4);
                assert_eq!(ring.first(), ring.last());
                ring.iter().collect()
            }
            other => panic!("unexpected geometry {other}"),
        };
        for c in coords {
            let (lon, lat) = (c[0].as_f64().unwrap(), c[1].as_f64().unwrap());
            // Atlanta: longitude first.
            assert!((-85.0..-83.0).contains(&lon) && (33.0..35.0).contains(&lat), "{c}");
        }
    }
}

#[tokio::test]
async fn health_reports_catalog() {
    let dir = copy_fixture("small");
    let (app, _) = app_for(dir.path());
    let first = get(&app, "/api/health").await;
    assert_eq!(first.status, StatusCode::OK);
    assert_eq!(first.json(), json!({"status": "ok", "catalog_loaded": true, "place_count": 12}));
    let second = get(&app, "/api/health").await;
    assert_eq!(first.body, second.body);

    let empty = tempfile::tempdir().unwrap();
    let (app, _) = app_for(empty.path());
    assert_eq!(get(&app, "/api/health").await.json()["place_count"], 0);
}

#[tokio::test]
async fn places_by_category() {
    let dir = copy_fixture("small");
    let (app, _) = app_for(dir.path());

    let r = get(&app, "/api/places?category=faith_center").await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_feature_collection(&v);
    let traditions: Vec<&str> = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["faith_tradition"].as_str().unwrap())
        .collect();
    assert_eq!(traditions, ["synagogue", "mosque"]);
    check_golden("places_faith_center.json", &r.body).unwrap();

    let r = get(&app, "/api/places?category=market").await;
    let v = r.json();
    let zamzam = &v["features"][0]["properties"];
    assert_eq!(zamzam["name"], "Zamzam International Foods");
    assert_eq!(zamzam["phone"], "(404) 294-0911");
    assert_eq!(v["features"][0]["geometry"]["coordinates"], json!([-84.229, 33.792]));

    let r = get(&app, "/api/places?category=school").await;
    let school = &r.json()["features"][0]["properties"];
    assert_eq!(school["free_reduced_lunch_pct"], 85.5);
    assert_eq!(school["is_public"], true);

    let r = get(&app, "/api/places?category=apartment").await;
    assert_feature_collection(&r.json());
    check_golden("places_apartment.json", &r.body).unwrap();
    let v = r.json();
    let parkview = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["properties"]["name"] == "Parkview Apartments")
        .unwrap();
    assert_eq!(parkview["properties"]["monthly_cost"], 500.0);
    let d = haversine_distance(&pt(33.745, -84.395), &pt(33.749, -84.388));
    assert_eq!(parkview["properties"]["anchor_distance"].as_f64().unwrap(), d);

    let r = get(&app, "/api/places?category=banana").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["error"].as_str().unwrap().contains("banana"));
    assert_eq!(get(&app, "/api/places").await.status, StatusCode::BAD_REQUEST);

    let empty = tempfile::tempdir().unwrap();
    let (app, _) = app_for(empty.path());
    let r = get(&app, "/api/places?category=transit_stop").await;
    assert_eq!(r.body, br#"{"type":"FeatureCollection","features":[]}"#);
}

#[tokio::test]
async fn layers() {
    let dir = copy_fixture("small");
    let (app, _) = app_for(dir.path());

    let r = get(&app, "/api/layers/jobs").await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_feature_collection(&v);
    let pct: Vec<f64> = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["percentile"].as_f64().unwrap())
        .collect();
    // The fourth group costs 4000 a month and is filtered out.
    assert_eq!(pct, [1.0 / 6.0, 0.5, 5.0 / 6.0]);
    check_golden("layer_jobs.json", &r.body).unwrap();

    let v = get(&app, "/api/layers/affordability").await.json();
    let rows: Vec<(f64, f64)> = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["properties"]["value"].as_f64().unwrap(), f["properties"]["percentile"].as_f64().unwrap()))
        .collect();
    assert_eq!(rows.len(), 3);
    for w in rows.windows(2) {
        assert!(w[0].0 < w[1].0 && w[0].1 > w[1].1, "{rows:?}");
    }

    let v = get(&app, "/api/layers/crime").await.json();
    let last = &v["features"][2]["properties"];
    assert!(last["value"].is_null() && last["percentile"].is_null());

    for name in ["streets", "default", "prox_transit", "nope"] {
        assert_eq!(get(&app, &format!("/api/layers/{name}")).await.status, StatusCode::NOT_FOUND, "{name}");
    }
}

#[tokio::test]
async fn score_contract() {
    let dir = copy_fixture("small");
    let (app, _) = app_for(dir.path());

    let body = r#"{"weights":{"affordability":2,"prox_transit":1,"jobs":1},"cell_size":0.02}"#;
    let r = post(&app, "/api/score", body).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    check_golden("score_small.json", &r.body).unwrap();
    let v = r.json();
    let raster = &v["raster"];
    let (rows, cols) = (raster["rows"].as_u64().unwrap(), raster["cols"].as_u64().unwrap());
    assert_eq!(raster["values"].as_array().unwrap().len() as u64, rows * cols);
    assert_eq!(raster["cell_size"], 0.02);
    assert_eq!(v["ranking"].as_array().unwrap().len(), 3);

    let scaled = r#"{"weights":{"affordability":20,"prox_transit":10,"jobs":10},"cell_size":0.02}"#;
    assert_eq!(post(&app, "/api/score", scaled).await.body, r.body);

    // Default cell size comes from the configuration.
    let r = post(&app, "/api/score", r#"{"weights":{"retail":1}}"#).await;
    assert_eq!(r.json()["raster"]["cell_size"], 0.005);

    // Omitted weights fall back to the preset.
    let preset = r#"{"weights":{"affordability":2,"prox_transit":2,"prox_schools":1,"prox_markets":1,"prox_anchor":1,"jobs":1,"retail":1,"crime":1}}"#;
    assert_eq!(post(&app, "/api/score", "{}").await.body, post(&app, "/api/score", preset).await.body);
}

#[tokio::test]
async fn score_one_hot_transit_follows_distance() {
    let dir = copy_fixture("small");
    let (app, state) = app_for(dir.path());
    let r = post(&app, "/api/score", r#"{"weights":{"prox_transit":5}}"#).await;
    let ids: Vec<String> = r.json()["ranking"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["id"].as_str().unwrap().to_string())
        .collect();

    let scorer = state.snapshot();
    let stops: Vec<_> = scorer.catalog().places_in(PlaceCategory::TransitStop).collect();
    let mut by_distance: Vec<(f64, String, String)> = scorer
        .catalog()
        .apartments()
        .map(|a| {
            let d = stops.iter().map(|s| haversine_distance(&a.location, &s.location)).fold(f64::INFINITY, f64::min);
            (d.min(1609.34), a.name.clone(), a.id.clone())
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    assert_eq!(ids, by_distance.into_iter().map(|t| t.2).collect::<Vec<_>>());
}

#[tokio::test]
async fn score_rejections() {
    let dir = copy_fixture("small");
    let (app, _) = app_for(dir.path());
    let cases = [
        (r#"{"weights":{"jobs":0,"retail":0}}"#, "weights"),
        (r#"{"weights":{}}"#, "weights"),
        (r#"{"weights":{"jobs":-1}}"#, "weights.jobs"),
        (r#"{"weights":{"bananas":1}}"#, "weights.bananas"),
        (r#"{"weights":{"jobs":1},"cell_size":0}"#, "cell_size"),
        (r#"{"weights":{"jobs":1},"cell_size":-0.1}"#, "cell_size"),
        (r#"{"weights":{"jobs":1},"cell_size":0.0000001}"#, "cell_size"),
    ];
    for (body, field) in cases {
        let r = post(&app, "/api/score", body).await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(r.json()["field"], field, "{body}");
    }
    assert_eq!(post(&app, "/api/score", "{not json").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(post(&app, "/api/score", r#"{"weights":{"jobs":"x"}}"#).await.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn score_raster_matches_engine() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = complete_catalog(7, 50);
    let state = scout_server::AppState::with_parts(
        scout_server::ServiceConfig::for_data_dir(dir.path()),
        catalog,
        Box::new(scout_core::submission::FixtureGeocoder::default()),
    )
    .unwrap();
    let state = std::sync::Arc::new(state);
    let app = scout_server::router(state.clone());
    let r = post(&app, "/api/score", r#"{"weights":{"crime":1,"prox_markets":3},"cell_size":0.003}"#).await;
    let v = r.json();
    assert_eq!((v["raster"]["rows"].as_u64(), v["raster"]["cols"].as_u64()), (Some(20), Some(20)));
    let scorer = state.snapshot();
    let spec = scout_core::geo::grid_from_bbox(scorer.catalog().extent(), 0.003).unwrap();
    let weights = scout_core::WeightVector::from_names([("crime", 1.0), ("prox_markets", 3.0)]).unwrap();
    let values = v["raster"]["values"].as_array().unwrap();
    for row in 0..20 {
        for col in 0..20 {
            let c = spec.cell_center(row, col).unwrap();
            let expected = scorer.composite_score(&c, &weights).composite;
            assert_eq!(values[row * 20 + col].as_f64(), expected);
        }
    }
}

#[tokio::test]
async fn stats_endpoint() {
    let dir = copy_fixture("small");
    let (app, _) = app_for(dir.path());
    let r = get(&app, "/api/stats").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, br#"{"count":2,"median_cost":1000.0,"stddev_cost":500.0}"#);

    let empty = tempfile::tempdir().unwrap();
    let (app, _) = app_for(empty.path());
    let r = get(&app, "/api/stats").await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    assert!(r.body.is_empty());
}

#[tokio::test]
async fn stats_match_oracle_on_200_apartments() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = complete_catalog(11, 200);
    let mut costs: Vec<f64> = catalog.apartments().map(|a| a.monthly_cost().unwrap()).collect();
    costs.sort_by(f64::total_cmp);
    let median = (costs[99] + costs[100]) / 2.0;
    let mean = costs.iter().sum::<f64>() / 200.0;
    let sd = (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 200.0).sqrt();

    let state = scout_server::AppState::with_parts(
        scout_server::ServiceConfig::for_data_dir(dir.path()),
        catalog,
        Box::new(scout_core::submission::FixtureGeocoder::default()),
    )
    .unwrap();
    let app = scout_server::router(std::sync::Arc::new(state));
    let v = get(&app, "/api/stats").await.json();
    assert_eq!(v["count"], 200);
    assert_eq!(v["median_cost"].as_f64().unwrap(), median);
    assert!((v["stddev_cost"].as_f64().unwrap() - sd).abs() < 1e-9 * sd);
}

#[tokio::test]
async fn submit_and_merge() {
    let dir = copy_fixture("small");
    let (app, state) = app_for(dir.path());
    let grammar = Regex::new(r"^[0-9]{8}T[0-9]{6}Z-[0-9a-f]{32}\.csv$").unwrap();

    let r = post(&app, "/api/apartments", r#"{"name":"X"}"#).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["field"], "address");
    assert!(r.json()["error"].as_str().unwrap().contains("address"));
    let r = post(&app, "/api/apartments", r#"{"address":"1 Main St"}"#).await;
    assert_eq!(r.json()["field"], "name");
    let r = post(&app, "/api/apartments", r#"{"name":"X","address":"Y","rent":3000}"#).await;
    assert_eq!(r.json()["field"], "rent");

    let body = r#"{"name":"Marietta Lofts","address":"55 Marietta St NW, Atlanta, GA","phone":"404-555-0101","rent":1150}"#;
    let first = post(&app, "/api/apartments", body).await;
    assert_eq!(first.status, StatusCode::CREATED);
    let filename = first.json()["filename"].as_str().unwrap().to_string();
    assert!(grammar.is_match(&filename));
    assert!(filename.starts_with("20161009T120000Z-"));
    let second = post(&app, "/api/apartments", body).await;
    assert_eq!(second.body, first.body);

    let lost = r#"{"name":"Nowhere Flats","address":"1 Unknown Rd"}"#;
    assert_eq!(post(&app, "/api/apartments", lost).await.status, StatusCode::CREATED);
    assert_eq!(state.store().pending().unwrap().len(), 2);

    let before = get(&app, "/api/places?category=apartment").await.json();
    assert_eq!(before["features"].as_array().unwrap().len(), 3);

    let r = post(&app, "/api/admin/merge", "").await;
    assert_eq!(r.status, StatusCode::OK);
    let report = r.json();
    assert_eq!(report["merged"].as_array().unwrap().len(), 1);
    assert_eq!(report["rejected"].as_array().unwrap().len(), 1);
    assert!(report["rejected"][0]["reason"].as_str().unwrap().contains("geocoded"));
    assert_eq!(report["place_count"], 13);

    let after = get(&app, "/api/places?category=apartment").await.json();
    let names: Vec<&str> = after["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"Marietta Lofts"));
    let lofts = after["features"].as_array().unwrap().iter().find(|f| f["properties"]["name"] == "Marietta Lofts").unwrap();
    assert_eq!(lofts["geometry"]["coordinates"], json!([-84.3903, 33.7555]));
    assert_eq!(lofts["properties"]["monthly_cost"], 1150.0);

    // Merged listings are persisted to places.csv.
    let reloaded = Catalog::load_dir(dir.path(), pt(33.749, -84.388), 3000.0).unwrap();
    assert_eq!(reloaded.places().len(), 13);
    assert_eq!(reloaded, *state.snapshot().catalog());
    assert!(fs::read_to_string(dir.path().join("places.csv")).unwrap().contains("Marietta Lofts"));

    // A second merge with nothing pending changes nothing.
    let r = post(&app, "/api/admin/merge", "").await;
    assert_eq!(r.json(), json!({"merged": [], "duplicates": [], "rejected": [], "place_count": 13}));
    assert_eq!(get(&app, "/api/places?category=apartment").await.json(), after);
}

#[tokio::test]
async fn concurrent_reads_during_merge_see_whole_snapshots() {
    let dir = copy_fixture("small");
    let (app, _) = app_for(dir.path());
    for i in 0..20 {
        let body = format!(r#"{{"name":"Tower {i}","address":"55 Marietta St NW, Atlanta, GA"}}"#);
        assert_eq!(post(&app, "/api/apartments", &body).await.status, StatusCode::CREATED);
    }
    let readers: Vec<_> = (0..8)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move {
                let mut counts = Vec::new();
                for _ in 0..10 {
                    let v = get(&app, "/api/places?category=apartment").await.json();
                    counts.push(v["features"].as_array().unwrap().len());
                }
                counts
            })
        })
        .collect();
    let merge = post(&app, "/api/admin/merge", "").await;
    assert_eq!(merge.json()["merged"].as_array().unwrap().len(), 20);
    for r in readers {
        for n in r.await.unwrap() {
            assert!(n == 3 || n == 23, "saw a partial snapshot with {n} apartments");
        }
    }
}
