use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;
use ufce_core::model::BlackBox;
use ufce_service::api::{router, AppState};
use ufce_service::registry::Registry;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn app() -> (Router, Arc<AppState>) {
    let state = AppState::new(Registry::new(data_dir()));
    (router(state.clone(), None), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_string())).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

/// A graduate row the trained model gives the label `label`, as a name → value map.
fn graduate_row(state: &AppState, label: u8) -> Value {
    let art = state.registry.get("graduate").unwrap();
    let row = art.dataset.rows.iter().find(|r| art.model.predict(r).unwrap() == label).unwrap();
    let map: serde_json::Map<String, Value> =
        art.dataset.schema.features.iter().zip(row.iter()).map(|(f, &v)| (f.name.clone(), json!(v))).collect();
    Value::Object(map)
}

fn request(instance: &Value, constraints: Value) -> String {
    json!({ "dataset": "graduate", "instance": instance, "constraints": constraints }).to_string()
}

/// Upper bounds one MAD above every unprotected numeric value.
fn wide_constraints(state: &AppState, instance: &Value) -> Value {
    let art = state.registry.get("graduate").unwrap();
    let mut c = serde_json::Map::new();
    for f in art.dataset.schema.features.iter().filter(|f| !f.protected && f.is_numeric()) {
        let v = instance[&f.name].as_f64().unwrap();
        c.insert(f.name.clone(), json!([v, v + f.mad.max(1.0)]));
    }
    Value::Object(c)
}

#[tokio::test]
async fn lists_datasets() {
    let (app, _) = app();
    let (status, body) = call(&app, "GET", "/datasets", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!(["bank", "bupa", "graduate", "movie", "wine"]));
}

#[tokio::test(flavor = "multi_thread")]
async fn summary_and_mi_pairs() {
    let (app, _) = app();
    let (status, body) = call(&app, "GET", "/datasets/graduate/summary", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["rows"], json!(500));
    assert_eq!(body["features"].as_array().unwrap().len(), 7);
    assert!(body["cv"]["mean_accuracy"].as_f64().unwrap() > 0.5);

    let (status, body) = call(&app, "GET", "/datasets/graduate/mi-pairs", None).await;
    assert_eq!(status, StatusCode::OK);
    let pairs = body.as_array().unwrap();
    assert_eq!(pairs.len(), 21);
    let scores: Vec<f64> = pairs.iter().map(|p| p["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let (status, _) = call(&app, "GET", "/datasets/nope/summary", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn explain_status_codes() {
    let (app, state) = app();
    let x = graduate_row(&state, 0);
    let c = wide_constraints(&state, &x);

    let (status, body) = call(&app, "POST", "/explain", Some(&request(&x, c.clone()))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    for cand in body["candidates"].as_array().unwrap() {
        assert!(cand["metrics"]["feasible"].as_bool().unwrap());
    }
    assert!(body.get("elapsed_seconds").is_none());

    let unknown = json!({ "dataset": "nope", "instance": x }).to_string();
    assert_eq!(call(&app, "POST", "/explain", Some(&unknown)).await.0, StatusCode::NOT_FOUND);

    let bad_feature = request(&x, json!({ "Nonexistent": [0.0, 1.0] }));
    assert_eq!(call(&app, "POST", "/explain", Some(&bad_feature)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    assert_eq!(call(&app, "POST", "/explain", Some("{not json")).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let approved = graduate_row(&state, 1);
    let (status, _) = call(&app, "POST", "/explain", Some(&request(&approved, json!({})))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn protected_constraint_is_rejected() {
    let (app, state) = app();
    let art = state.registry.get("bank").unwrap();
    let row = art.dataset.rows.iter().find(|r| art.model.predict(r).unwrap() == 0).unwrap();
    let x: serde_json::Map<String, Value> =
        art.dataset.schema.features.iter().zip(row.iter()).map(|(f, &v)| (f.name.clone(), json!(v))).collect();
    let family = x["Family"].as_f64().unwrap();
    let body = json!({ "dataset": "bank", "instance": x, "constraints": { "Family": [family, family + 1.0] } });
    let (status, err) = call(&app, "POST", "/explain", Some(&body.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(err["error"].as_str().unwrap().contains("protected"));
}

#[tokio::test(flavor = "multi_thread")]
async fn explain_is_reproducible_without_timing() {
    let (app, state) = app();
    let x = graduate_row(&state, 0);
    let body = request(&x, wide_constraints(&state, &x));
    let (_, a) = call(&app, "POST", "/explain", Some(&body)).await;
    let (_, b) = call(&app, "POST", "/explain", Some(&body)).await;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn bench_jobs() {
    let (app, _) = app();
    assert_eq!(call(&app, "POST", "/bench/rq9", Some("{}")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/jobs/999", None).await.0, StatusCode::NOT_FOUND);
    let missing = call(&app, "POST", "/bench/rq1", Some("{}")).await.0;
    assert_eq!(missing, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, created) = call(&app, "POST", "/bench/rq1", Some(r#"{"dataset": "bupa", "pool_size": 5}"#)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = created["job_id"].as_u64().unwrap();
    let mut last = Value::Null;
    for _ in 0..600 {
        let (status, job) = call(&app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if job["status"] != "running" {
            last = job;
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert_eq!(last["status"], "done", "{last}");
    assert_eq!(last["report"]["experiment"], "rq1");
    assert_eq!(last["report"]["rows"].as_array().unwrap().len(), 15);
}
