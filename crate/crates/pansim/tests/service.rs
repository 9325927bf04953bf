//! HTTP contract through the in-process router.

mod common;

use axum::http::StatusCode;
use common::http::{call, ordered_series, wait_result};
use pansim::artifacts::DataDir;
use pansim::service::{router, AppState, RunStatus};

const TAKE_ONE_OUT: &str = r#"{"id":"no-masks","kind":"take-one-out","remove":["Facial coverings"]}"#;

#[tokio::test]
async fn submit_poll_result_and_errors() {
    let art = common::small_artifacts();
    let days = art.pipeline.days();
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::start(art, DataDir::new(dir.path()), 1).unwrap();
    let app = router(state.clone());

    let (s, v) = call(&app, "POST", "/api/scenarios", Some(TAKE_ONE_OUT)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    assert_eq!(v["status"], "queued");

    let (s, result) = wait_result(&app, &id).await;
    assert_eq!(s, StatusCode::OK, "{result}");
    assert_eq!(ordered_series(&result, days), 12);
    assert_eq!(result["metadata"]["config_hash"], v["config_hash"]);

    let (s, rec) = call(&app, "GET", &format!("/api/scenarios/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rec["status"], "done");
    assert!(rec["result"].as_str().unwrap().starts_with("runs/results/"));

    // reuse answers with the prior run instead of recomputing
    let (s, prior) = call(&app, "POST", "/api/scenarios?reuse=true", Some(TAKE_ONE_OUT)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(prior["id"], id.as_str());
    // without reuse a second run is queued and lands on the same content
    let (s, v2) = call(&app, "POST", "/api/scenarios", Some(TAKE_ONE_OUT)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let (_, again) = wait_result(&app, v2["id"].as_str().unwrap()).await;
    assert_eq!(again, result);

    let (s, v) = call(&app, "POST", "/api/scenarios", Some(r#"{"kind":"take-one-out","remove":["Curfew"]}"#)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["errors"][0]["field"], "remove[0]");

    let (s, v) = call(&app, "POST", "/api/scenarios", Some(r#"{"kind":"custom-npis","overrides":[{"npi":"Facial coverings","level":-2}]}"#)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["errors"][0]["field"], "overrides[0].level", "{v}");

    let (s, v) = call(&app, "POST", "/api/scenarios", Some(r#"{"kind":"sideways"}"#)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["errors"][0]["field"], "kind");

    let (s, _) = call(&app, "GET", "/api/scenarios/run-999999", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/api/scenarios/run-999999/result", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, list) = call(&app, "GET", "/api/scenarios", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 2);

    let (s, cat) = call(&app, "GET", "/api/npis", None).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = cat["npis"].as_array().unwrap().iter().map(|n| n["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"Facial coverings"), "{names:?}");
    for n in cat["npis"].as_array().unwrap() {
        assert!(n["min"].as_f64().unwrap() <= n["max"].as_f64().unwrap());
    }

    let (s, base) = call(&app, "GET", "/api/baseline", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ordered_series(&base, days), 12);
    state.shutdown();
}

#[tokio::test]
async fn queued_runs_survive_a_restart() {
    let art = common::small_artifacts();
    let dir = tempfile::tempdir().unwrap();

    let state = AppState::start(art.clone(), DataDir::new(dir.path()), 1).unwrap();
    state.shutdown();
    let app = router(state.clone());
    let (s, v) = call(&app, "POST", "/api/scenarios", Some(TAKE_ONE_OUT)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = v["id"].as_str().unwrap().to_string();
    // nobody is working the queue
    let (s, rec) = call(&app, "GET", &format!("/api/scenarios/{id}/result"), None).await;
    assert_eq!(s, StatusCode::TOO_EARLY);
    assert_eq!(rec["status"], "queued");
    drop(app);
    drop(state);

    let state = AppState::start(art, DataDir::new(dir.path()), 1).unwrap();
    let app = router(state.clone());
    let (s, result) = wait_result(&app, &id).await;
    assert_eq!(s, StatusCode::OK, "{result}");
    assert_eq!(state.record(&id).unwrap().status, RunStatus::Done);
    // ids keep counting after a restart
    let (_, v) = call(&app, "POST", "/api/scenarios", Some(r#"{"kind":"historical"}"#)).await;
    assert_ne!(v["id"], id.as_str());
    state.shutdown();
}
