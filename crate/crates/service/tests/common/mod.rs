#![allow(dead_code)]

use std::sync::Arc;

use adlift_core::engine::ExperimentConfig;
use adlift_service::{router, Service};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const CASE_STUDY: &str = include_str!("../../../../scenarios/case_study.json");

pub fn case_study() -> Value {
    serde_json::from_str(CASE_STUDY).unwrap()
}

pub fn case_study_config(id: &str, seed: u64) -> ExperimentConfig {
    let mut cfg: ExperimentConfig = serde_json::from_str(CASE_STUDY).unwrap();
    cfg.experiment_id = id.to_owned();
    cfg.scenario.seed = seed;
    cfg
}

/// Case-study config with identical arms and a threshold out of reach.
pub fn flat(id: &str, max_batches: u64) -> Value {
    let mut cfg = case_study();
    cfg["experiment_id"] = json!(id);
    cfg["scenario"]["theta_star"] = json!(vec![vec![0.03; 3]; 3]);
    cfg["scenario"]["batch_size"] = json!(500);
    cfg["scenario"]["max_batches"] = json!(max_batches);
    cfg["draws"] = json!(1000);
    cfg["threshold"] = json!(0.99999);
    cfg
}

/// A config with `r` creatives and `k` audiences; the shapes stay
/// consistent so only the size limits can fail.
pub fn sized(id: &str, r: usize, k: usize) -> Value {
    let creatives: Vec<String> = (0..r).map(|i| format!("c{i}")).collect();
    let tas: Vec<Value> = (0..k)
        .map(|i| json!({"id": i + 1, "name": format!("ta{}", i + 1), "predicate": [{"feature": format!("f{i}"), "in": ["y"]}]}))
        .collect();
    let j = (1usize << k) - 1;
    json!({
        "experiment_id": id,
        "creatives": creatives,
        "target_audiences": tas,
        "scenario": {
            "theta_star": vec![vec![0.02; j]; r],
            "population": {"kind": "contexts", "weights": vec![1.0 / j as f64; j], "no_context": 0.0},
            "batch_size": 100,
            "max_batches": 5,
            "seed": 1
        }
    })
}

pub struct Api {
    pub svc: Arc<Service>,
}

impl Api {
    pub fn new() -> Self {
        Self { svc: Service::new(None) }
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<&Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(serde_json::to_vec(b).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = router(self.svc.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Option<&Value>) -> (StatusCode, Value) {
        self.call(Method::POST, uri, body).await
    }

    pub async fn create(&self, cfg: &Value) -> Value {
        let (status, body) = self.post("/experiments", Some(cfg)).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body
    }

    pub async fn advance(&self, id: &str, n: usize) {
        for _ in 0..n {
            self.svc.advance(id).await.unwrap();
        }
    }
}

pub fn assert_envelope(body: &Value) {
    for key in ["experiment_id", "status", "t"] {
        assert!(body.get(key).is_some(), "missing {key} in {body}");
    }
}

pub fn error_code(body: &Value) -> &str {
    assert_envelope(body);
    body["error"]["code"].as_str().unwrap()
}
