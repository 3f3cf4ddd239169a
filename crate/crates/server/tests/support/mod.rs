//! In-process client for the service router.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use georegion::advisor::{FeatureCatalog, Gazetteer};
use georegion::GridRaster;
use georegion_server::{router, SessionStore};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub struct App {
    pub router: Router,
    pub store: Arc<SessionStore>,
}

impl App {
    pub fn open(dir: &Path, grid: GridRaster) -> App {
        let store = Arc::new(SessionStore::open(dir, grid, Arc::new(FeatureCatalog::demo()), Gazetteer::demo()).unwrap());
        App { router: router(store.clone()), store }
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let text = body.map(|b| b.to_string());
        let (status, bytes) = self.raw(method, uri, text.as_deref()).await;
        let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, value)
    }

    /// Polls run status until it finishes; returns the final status body.
    pub async fn wait_run(&self, session: &str, run: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            let (status, body) = self.json(Method::GET, &format!("/sessions/{session}/runs/{run}"), None).await;
            assert_eq!(status, StatusCode::OK, "{body}");
            if body["status"] == "succeeded" || body["status"] == "failed" {
                return body;
            }
            assert!(Instant::now() < deadline, "run {run} did not finish");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}
