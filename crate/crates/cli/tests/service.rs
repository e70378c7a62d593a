use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use layerbench::synth::{generate, graded_models, write_dataset, write_predictions, SynthConfig};
use layerbench_cli::error::CliError;
use layerbench_cli::service::{router, AppState, Clock, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const MODELS: usize = 3;

struct Fixture {
    _dir: tempfile::TempDir,
    config: ServiceConfig,
    offset: Arc<AtomicI64>,
}

impl Fixture {
    fn new(k: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            samples: 2,
            height: 24,
            width: 24,
            foreground_pattern: vec![1],
            seed: 5,
        };
        let samples = generate(&cfg);
        write_dataset(&samples, &dir.path().join("ds")).unwrap();
        let models: Vec<_> = graded_models().into_iter().take(MODELS).collect();
        write_predictions(&samples, &dir.path().join("preds"), &models, k, 1).unwrap();
        let config = ServiceConfig {
            manifest: dir.path().join("ds/manifest.json"),
            pred_root: dir.path().join("preds"),
            ledger: dir.path().join("ledger.jsonl"),
            models: Vec::new(),
            lease_ttl: Duration::seconds(300),
            seed: Some(11),
        };
        Fixture {
            _dir: dir,
            config,
            offset: Arc::new(AtomicI64::new(0)),
        }
    }

    fn clock(&self) -> Clock {
        let offset = self.offset.clone();
        let t0: DateTime<Utc> = Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap();
        Arc::new(move || t0 + Duration::seconds(offset.load(Ordering::SeqCst)))
    }

    fn advance(&self, secs: i64) {
        self.offset.fetch_add(secs, Ordering::SeqCst);
    }

    fn open(&self) -> Result<Arc<AppState>, CliError> {
        AppState::open(&self.config, self.clock())
    }

    fn app(&self) -> Router {
        router(self.open().unwrap())
    }

    fn ledger(&self) -> &Path {
        &self.config.ledger
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => builder
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn session(app: &Router, who: &str) -> String {
    let (status, v) = call_json(app, "POST", "/api/session", Some(json!({"annotator_id": who}))).await;
    assert_eq!(status, StatusCode::OK);
    v["token"].as_str().unwrap().to_string()
}

async fn ratings(app: &Router) -> Vec<(String, f64, u64)> {
    let (status, v) = call_json(app, "GET", "/api/leaderboard", None).await;
    assert_eq!(status, StatusCode::OK);
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["model_id"].as_str().unwrap().to_string(),
                r["rating"].as_f64().unwrap(),
                r["matches"].as_u64().unwrap(),
            )
        })
        .collect()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn sidecar(ledger: &Path, suffix: &str) -> PathBuf {
    ledger.with_file_name(format!("ledger.{suffix}.jsonl"))
}

#[tokio::test]
async fn fresh_leaderboard_starts_everyone_at_1500() {
    let fx = Fixture::new(1);
    let app = fx.app();
    let rows = ratings(&app).await;
    assert_eq!(rows.len(), MODELS);
    assert!(rows.iter().all(|(_, r, m)| *r == 1500.0 && *m == 0));
    assert_eq!(lines(fx.ledger()), 1, "header only");
}

#[tokio::test]
async fn sessions_and_tokens() {
    let fx = Fixture::new(1);
    let app = fx.app();
    let (status, v) = call_json(&app, "POST", "/api/session", Some(json!({"annotator_id": "  "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "BadRequest");

    let token = session(&app, "ann").await;
    assert_eq!(token.len(), 32);
    assert_ne!(token, session(&app, "ann").await);

    let (status, v) = call_json(&app, "GET", "/api/match/next?token=nope", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(v["error"], "InvalidToken");
    let (status, _) = call_json(
        &app,
        "POST",
        "/api/match/result",
        Some(json!({"token": "nope", "match_id": "m000000", "outcome": "a"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn match_round_trip_moves_ratings_by_half_k() {
    let fx = Fixture::new(1);
    let app = fx.app();
    let token = session(&app, "ann").await;

    let (status, m) = call_json(&app, "GET", &format!("/api/match/next?token={token}"), None).await;
    assert_eq!(status, StatusCode::OK);
    // Blind presentation: the real model ids never reach the client.
    assert_eq!(m["a"]["model_id"], "A");
    assert_eq!(m["b"]["model_id"], "B");
    let match_id = m["match_id"].as_str().unwrap().to_string();
    for side in ["a", "b"] {
        let (status, png) = call(&app, "GET", m[side]["preview_url"].as_str().unwrap(), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(&png[1..4], b"PNG");
    }
    let (status, png) = call(&app, "GET", m["image_url"].as_str().unwrap(), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");

    let body = json!({"token": token, "match_id": match_id, "outcome": "a"});
    let (status, v) = call_json(&app, "POST", "/api/match/result", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["new_leaderboard_version"], 1);

    let rows = ratings(&app).await;
    let mut moved: Vec<f64> = rows.iter().filter(|r| r.2 == 1).map(|r| r.1).collect();
    moved.sort_by(f64::total_cmp);
    assert_eq!(moved, vec![1484.0, 1516.0]);
    assert_eq!(rows.iter().map(|r| r.1).sum::<f64>(), 1500.0 * MODELS as f64);
    assert_eq!(lines(fx.ledger()), 2);

    let (status, v) = call_json(&app, "POST", "/api/match/result", Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(v["error"] == "StaleLease" || v["error"] == "DuplicateMatchId", "{v}");
    assert_eq!(lines(fx.ledger()), 2);

    let (status, v) = call_json(
        &app,
        "POST",
        "/api/match/result",
        Some(json!({"token": token, "match_id": "m999999", "outcome": "b"})),
    )
    .await;
    assert!(status == StatusCode::NOT_FOUND || status == StatusCode::CONFLICT, "{status} {v}");
}

#[tokio::test]
async fn expired_lease_is_rejected() {
    let fx = Fixture::new(1);
    let app = fx.app();
    let token = session(&app, "ann").await;
    let (_, m) = call_json(&app, "GET", &format!("/api/match/next?token={token}"), None).await;
    fx.advance(301);
    let (status, v) = call_json(
        &app,
        "POST",
        "/api/match/result",
        Some(json!({"token": token, "match_id": m["match_id"], "outcome": "tie"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "StaleLease");
    assert!(ratings(&app).await.iter().all(|r| r.1 == 1500.0));
    assert_eq!(lines(fx.ledger()), 1);
}

#[tokio::test]
async fn another_annotators_lease_is_rejected() {
    let fx = Fixture::new(1);
    let app = fx.app();
    let alice = session(&app, "alice").await;
    let bob = session(&app, "bob").await;
    let (_, m) = call_json(&app, "GET", &format!("/api/match/next?token={alice}"), None).await;
    let (status, _) = call_json(
        &app,
        "POST",
        "/api/match/result",
        Some(json!({"token": bob, "match_id": m["match_id"], "outcome": "a"})),
    )
    .await;
    assert!(status.is_client_error());
    assert_eq!(lines(fx.ledger()), 1);
}

#[tokio::test]
async fn restart_loses_no_results() {
    let fx = Fixture::new(1);
    let before = {
        let app = fx.app();
        let token = session(&app, "ann").await;
        for outcome in ["a", "b", "tie", "a"] {
            let (_, m) = call_json(&app, "GET", &format!("/api/match/next?token={token}"), None).await;
            let (status, _) = call_json(
                &app,
                "POST",
                "/api/match/result",
                Some(json!({"token": token, "match_id": m["match_id"], "outcome": outcome})),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
        }
        ratings(&app).await
    };
    let app = fx.app();
    assert_eq!(ratings(&app).await, before);
    assert_eq!(lines(fx.ledger()), 5);

    // Match ids keep counting after a restart.
    let token = session(&app, "ann").await;
    let (_, m) = call_json(&app, "GET", &format!("/api/match/next?token={token}"), None).await;
    let (status, v) = call_json(
        &app,
        "POST",
        "/api/match/result",
        Some(json!({"token": token, "match_id": m["match_id"], "outcome": "b"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["new_leaderboard_version"], 5);
}

#[test]
fn ledger_is_locked_while_open() {
    let fx = Fixture::new(1);
    let first = fx.open().unwrap();
    assert!(matches!(fx.open(), Err(CliError::LedgerLocked(_))));
    drop(first);
    fx.open().unwrap();
}

#[test]
fn models_must_match_existing_ledger() {
    let mut fx = Fixture::new(1);
    drop(fx.open().unwrap());
    fx.config.models = vec!["model-0".into(), "model-1".into()];
    assert!(matches!(fx.open(), Err(CliError::InvalidArgument(_))));
}

#[tokio::test]
async fn passrate_round_trip() {
    let fx = Fixture::new(3);
    let app = fx.app();
    let token = session(&app, "ann").await;

    let (status, s) = call_json(&app, "GET", "/api/sample/s000", None).await;
    assert_eq!(status, StatusCode::OK);
    let layers = s["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 2);
    assert_eq!(layers[0]["candidates"]["model-0"], 3);

    let verdict = |sample: &str, layer: &str, k: usize, satisfied: bool| {
        json!({"token": token, "sample_id": sample, "layer_id": layer,
               "model_id": "model-1", "k": k, "satisfied": satisfied})
    };
    let (status, _) = call_json(&app, "POST", "/api/passrate", Some(verdict("s000", "bg", 4, true))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&app, "POST", "/api/passrate", Some(verdict("s000", "nope", 1, true))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // s000/bg: 2 of 3 satisfied (pass); s000/fg0: 1 of 2 (no strict majority).
    for (layer, satisfied) in [("bg", true), ("bg", true), ("bg", false), ("fg0", true), ("fg0", false)] {
        let (status, v) = call_json(&app, "POST", "/api/passrate", Some(verdict("s000", layer, 3, satisfied))).await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
    let (status, v) = call_json(&app, "GET", "/api/report/passrate?model_id=model-1&k=3", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["passrate"], 0.5);
    assert_eq!(v["samples"], 2);
    let (status, _) = call_json(&app, "GET", "/api/report/passrate?model_id=model-1&k=1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(lines(&sidecar(fx.ledger(), "passrate")), 5);

    let (status, png) = call(&app, "GET", "/api/asset/pred/model-1/s000/fg0/2", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let (status, _) = call(&app, "GET", "/api/asset/pred/model-1/s000/fg0/3", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    drop(app);
    let app = fx.app();
    let (_, v) = call_json(&app, "GET", "/api/report/passrate?model_id=model-1&k=3", None).await;
    assert_eq!(v["passrate"], 0.5, "verdicts survive a restart");
}

#[tokio::test]
async fn quality_review_is_logged() {
    let fx = Fixture::new(1);
    let app = fx.app();
    let token = session(&app, "ann").await;
    let (status, _) = call_json(
        &app,
        "POST",
        "/api/quality",
        Some(json!({"token": token, "sample_id": "s001", "layer_id": "fg0", "quality": "poor", "salient": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call_json(
        &app,
        "POST",
        "/api/quality",
        Some(json!({"token": token, "sample_id": "s001", "layer_id": "bg", "quality": "good", "occluded": true})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(
        &app,
        "POST",
        "/api/quality",
        Some(json!({"token": "x", "sample_id": "s001", "layer_id": "bg", "quality": "good"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let log = std::fs::read_to_string(sidecar(fx.ledger(), "quality")).unwrap();
    let rec: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(rec["quality"], "poor");
    assert_eq!(rec["annotator_id"], "ann");
    assert_eq!(log.lines().count(), 1);
}

#[tokio::test]
async fn ground_truth_previews_are_cached_pngs() {
    let fx = Fixture::new(1);
    let app = fx.app();
    let (s1, a) = call(&app, "GET", "/api/asset/layer/s000/fg0", None).await;
    let (s2, b) = call(&app, "GET", "/api/asset/layer/s000/fg0", None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    let (status, _) = call(&app, "GET", "/api/asset/layer/s000/zz", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/api/sample/zz", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
