#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, TimeZone, Utc};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

use scout_core::catalog::{BlockGroup, Catalog, Place, PlaceCategory};
use scout_core::geo::{GeoPoint, Ring};
use scout_server::{router, AppState, ServiceConfig};

pub const FIXED_NOW: (i32, u32, u32, u32, u32, u32) = (2016, 10, 9, 12, 0, 0);

pub fn fixed_now() -> DateTime<Utc> {
    let (y, mo, d, h, mi, s) = FIXED_NOW;
    Utc.with_ymd_and_hms(y, mo, d, h, mi, s).unwrap()
}

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("tests").join("fixtures").join(name)
}

/// Fresh copy of a fixture directory, since merges write into it.
pub fn copy_fixture(name: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(fixture(name)).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}

pub fn app_for(dir: &Path) -> (Router, Arc<AppState>) {
    let state = AppState::load(ServiceConfig::for_data_dir(dir))
        .unwrap()
        .with_clock(Box::new(fixed_now));
    let state = Arc::new(state);
    (router(state.clone()), state)
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: &str) -> Reply {
    call(app, "POST", uri, Some(body)).await
}

/// Compares `actual` with `tests/golden/<name>`. With `UPDATE_GOLDEN=1`
/// the file is rewritten instead.
pub fn check_golden(name: &str, actual: &[u8]) -> Result<(), String> {
    let path = manifest_dir().join("tests").join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!(
            "{name} differs from golden\n--- expected\n{}\n--- actual\n{}",
            String::from_utf8_lossy(&expected),
            String::from_utf8_lossy(actual)
        ))
    }
}

pub fn pt(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

pub fn square(lat0: f64, lon0: f64, size: f64) -> Ring {
    Ring::new(vec![
        pt(lat0, lon0),
        pt(lat0, lon0 + size),
        pt(lat0 + size, lon0 + size),
        pt(lat0 + size, lon0),
    ])
    .unwrap()
}

pub const STUDY_LAT: (f64, f64) = (33.70, 33.76);
pub const STUDY_LON: (f64, f64) = (-84.42, -84.36);

/// 6 x 6 block groups of 0.01° covering the study box, each with every
/// attribute, plus transit stops, schools and markets inside the box and
/// `apartments` priced apartments strictly inside it.
pub fn complete_catalog(seed: u64, apartments: usize) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = Vec::new();
    for r in 0..6 {
        for c in 0..6 {
            groups.push(
                BlockGroup::new(
                    format!("13121{r}{c}"),
                    square(STUDY_LAT.0 + 0.01 * r as f64, STUDY_LON.0 + 0.01 * c as f64, 0.01),
                    rng.gen_range(10..=40) as f64 / 100.0,
                    rng.gen_range(20..=90) as f64 * 1000.0,
                    rng.gen_range(0.0..100.0),
                    rng.gen_range(0.0..100.0),
                    Some(rng.gen_range(0.0..10.0)),
                )
                .unwrap(),
            );
        }
    }
    let mut places = Vec::new();
    for (cat, n) in [(PlaceCategory::TransitStop, 15), (PlaceCategory::School, 10), (PlaceCategory::Market, 10)] {
        for k in 0..n {
            places.push(Place::new(
                &format!("{cat} {k}"),
                cat,
                pt(rng.gen_range(STUDY_LAT.0..STUDY_LAT.1), rng.gen_range(STUDY_LON.0..STUDY_LON.1)),
                "",
            ));
        }
    }
    for k in 0..apartments {
        places.push(
            Place::new(
                &format!("Apartment {k:03}"),
                PlaceCategory::Apartment,
                pt(rng.gen_range(33.7005..33.7595), rng.gen_range(-84.4195..-84.3605)),
                "",
            )
            .with_monthly_cost(rng.gen_range(500..2500) as f64),
        );
    }
    Catalog::new(places, groups, pt(33.749, -84.388)).unwrap()
}

/// Rows of a block-group CSV with `n` rows; row 0 costs exactly 3000.
pub fn blockgroup_rows(seed: u64, n: usize) -> Vec<(String, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![("bg000".to_string(), 0.25, 144_000.0)];
    for i in 1..n {
        let pct = rng.gen_range(0.05..0.6);
        let income = rng.gen_range(15_000.0..160_000.0);
        rows.push((format!("bg{i:03}"), pct, income));
    }
    rows
}

pub fn blockgroup_csv(rows: &[(String, f64, f64)]) -> String {
    let mut out = String::from("GeoID,Boundary,PctIncomeHousing,MedianIncome,JobsIndex,RetailIndex,CrimeIndex\n");
    for (i, (id, pct, income)) in rows.iter().enumerate() {
        let lat = 33.0 + 0.01 * i as f64;
        out.push_str(&format!(
            "{id},\"{lat} -84.4;{lat} -84.39;{} -84.39\",{pct},{income},1,1,\n",
            lat + 0.01
        ));
    }
    out
}
