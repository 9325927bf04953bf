//! Shared fixtures: a small-budget bundle trained on the synthetic dataset.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pansim::artifacts::{self, Artifacts, SaveInfo};
use pansim::config::Config;
use pansim::ingest::Dataset;
use pansim::workflow;
use pansim_core::pipeline::Sequential;

/// Synthetic dataset with a training budget small enough for unit-speed tests.
pub fn small() -> (Dataset, Config) {
    let (ds, mut cfg) = workflow::synthetic_dataset(None).unwrap();
    cfg.reff.train.epochs = 150;
    cfg.correction.train.epochs = 150;
    cfg.correction.members = 3;
    cfg.collateral.train.epochs = 300;
    (ds, cfg)
}

pub fn small_artifacts() -> Artifacts {
    let (ds, cfg) = small();
    workflow::train(&ds, &cfg, true, &Sequential).unwrap()
}

/// Saves `art` as a bundle under `dir/artifacts`, returning the bundle dir.
pub fn save_bundle(dir: &Path, art: &Artifacts, cfg: &Config) -> PathBuf {
    let out = dir.join("artifacts");
    let info = SaveInfo {
        config_toml: cfg.to_toml(),
        config_hash: cfg.hash(),
        data_hash: "synthetic".into(),
        skipped_npis: Vec::new(),
        collateral_seed: cfg.collateral.seed,
        train_wall_time_ms: 0,
    };
    artifacts::save(&out, art, &info).unwrap();
    out
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub mod http {
    use axum::body::Body;
    use axum::http::{Request, StatusCode};
    use axum::Router;
    use http_body_util::BodyExt;
    use serde_json::Value;
    use tower::ServiceExt;

    /// One in-process request; the body is parsed as JSON when possible.
    pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, v)
    }

    /// Polls the result endpoint until it stops answering 425.
    pub async fn wait_result(app: &Router, id: &str) -> (StatusCode, Value) {
        let uri = format!("/api/scenarios/{id}/result");
        for _ in 0..6000 {
            let (s, v) = call(app, "GET", &uri, None).await;
            if s != StatusCode::TOO_EARLY {
                return (s, v);
            }
            std::thread::sleep(std::time::Duration::from_millis(10));
        }
        panic!("run {id} never finished");
    }

    /// Every forecast series of a result document, checked for shape and
    /// band ordering; returns the series count.
    pub fn ordered_series(result: &Value, days: usize) -> usize {
        let series = result["forecasts"]["series"].as_array().expect("series array");
        for f in series {
            let col = |k: &str| -> Vec<f64> { f[k].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect() };
            let (lo, mu, hi) = (col("lower"), col("mean"), col("upper"));
            assert_eq!(mu.len(), days);
            for i in 0..days {
                assert!(lo[i] <= mu[i] && mu[i] <= hi[i], "{} {} day {i}", f["band"], f["target"]);
            }
        }
        series.len()
    }
}
