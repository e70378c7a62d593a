use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use layerbench::codec;
use layerbench::dataset::{LoadedLayer, LoadedSample, Quality};
use layerbench::elo::{EloError, LeaderboardRow, Outcome};
use layerbench::layer::{LayerKind, RgbaLayer};
use layerbench::metrics::{passrate_at_k, MetricError, PassVerdict};
use layerbench::render::{make_training_target_with, Checkerboard};
use layerbench::BinaryMask;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{append_line, item_id, AppState, Inner, PreviewKey, Session, StoredVerdict};

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/session", post(create_session))
        .route("/api/match/next", get(next_match))
        .route("/api/match/result", post(submit_result))
        .route("/api/leaderboard", get(leaderboard))
        .route("/api/sample/{id}", get(sample))
        .route("/api/asset/image/{sample}", get(image_asset))
        .route("/api/asset/layer/{sample}/{layer}", get(layer_asset))
        .route("/api/asset/pred/{model}/{sample}/{layer}/{k}", get(prediction_asset))
        .route("/api/asset/match/{match_id}/{side}", get(match_asset))
        .route("/api/quality", post(quality))
        .route("/api/passrate", post(passrate))
        .route("/api/report/passrate", get(passrate_report))
        .with_state(state)
}

#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    fn bad_request(what: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", what)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())
    }
}

impl From<EloError> for ApiError {
    fn from(e: EloError) -> Self {
        let (status, kind) = match &e {
            EloError::StaleLease(_) => (StatusCode::CONFLICT, "StaleLease"),
            EloError::DuplicateMatchId(_) => (StatusCode::CONFLICT, "DuplicateMatchId"),
            EloError::UnknownMatch(_) => (StatusCode::NOT_FOUND, "UnknownMatch"),
            EloError::NoComparableSamples | EloError::NotEnoughModels(_) => {
                (StatusCode::SERVICE_UNAVAILABLE, "NoComparableSamples")
            }
            _ => (StatusCode::BAD_REQUEST, "EloError"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.kind, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, Inner> {
    state.inner.lock().unwrap_or_else(|p| p.into_inner())
}

fn annotator(inner: &Inner, token: &str) -> ApiResult<String> {
    inner
        .sessions
        .get(token)
        .map(|s| s.annotator_id.clone())
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "InvalidToken", "unknown session token"))
}

fn find<'a>(state: &'a AppState, sample: &str, layer: &str) -> ApiResult<(&'a LoadedSample, &'a LoadedLayer)> {
    let s = state
        .dataset
        .sample(sample)
        .ok_or_else(|| ApiError::not_found(format!("sample `{sample}`")))?;
    let l = s
        .layers
        .iter()
        .find(|l| l.id() == layer)
        .ok_or_else(|| ApiError::not_found(format!("layer `{sample}/{layer}`")))?;
    Ok((s, l))
}

#[derive(Deserialize)]
struct SessionRequest {
    annotator_id: String,
}

async fn create_session(State(state): State<Shared>, Json(req): Json<SessionRequest>) -> ApiResult<Json<Value>> {
    if req.annotator_id.trim().is_empty() {
        return Err(ApiError::bad_request("annotator_id must not be empty"));
    }
    let mut inner = lock(&state);
    let token = loop {
        let t = format!("{:032x}", inner.rng.random::<u128>());
        if !inner.sessions.contains_key(&t) {
            break t;
        }
    };
    inner.sessions.insert(
        token.clone(),
        Session {
            annotator_id: req.annotator_id,
        },
    );
    Ok(Json(json!({"token": token, "issued_at": state.now()})))
}

#[derive(Deserialize)]
struct TokenQuery {
    token: String,
}

#[derive(Serialize)]
struct Candidate {
    model_id: &'static str,
    preview_url: String,
}

async fn next_match(State(state): State<Shared>, Query(q): Query<TokenQuery>) -> ApiResult<Json<Value>> {
    let now = state.now();
    let lease = {
        let mut inner = lock(&state);
        let who = annotator(&inner, &q.token)?;
        let Inner { ledger, rng, .. } = &mut *inner;
        ledger.schedule_match(&who, state.ttl, &state.pool, rng, now)?
    };
    let (sample, layer) = lease.sample_id.split_once('/').expect("items are sample/layer");
    let (_, l) = find(&state, sample, layer)?;
    let prompt = l.entry.prompts.first();
    let side = |s: &'static str, label| Candidate {
        model_id: label,
        preview_url: format!("/api/asset/match/{}/{s}", lease.match_id),
    };
    Ok(Json(json!({
        "match_id": lease.match_id,
        "sample_id": sample,
        "layer_id": layer,
        "image_url": format!("/api/asset/image/{sample}"),
        "prompt": prompt,
        "a": side("a", "A"),
        "b": side("b", "B"),
        "expires_at": lease.expires_at,
    })))
}

#[derive(Deserialize)]
struct ResultRequest {
    token: String,
    match_id: String,
    outcome: Outcome,
}

async fn submit_result(State(state): State<Shared>, Json(req): Json<ResultRequest>) -> ApiResult<Json<Value>> {
    let now = state.now();
    let mut inner = lock(&state);
    let who = annotator(&inner, &req.token)?;
    let record = inner.ledger.submit(&req.match_id, &who, req.outcome, now)?;
    inner.writer.append(&record).map_err(ApiError::internal)?;
    inner.version += 1;
    Ok(Json(json!({"ok": true, "new_leaderboard_version": inner.version})))
}

async fn leaderboard(State(state): State<Shared>) -> Json<Vec<LeaderboardRow>> {
    Json(lock(&state).ledger.leaderboard())
}

async fn sample(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = state
        .dataset
        .sample(&id)
        .ok_or_else(|| ApiError::not_found(format!("sample `{id}`")))?;
    let layers: Vec<Value> = s
        .layers
        .iter()
        .map(|l| {
            let candidates: serde_json::Map<String, Value> = state
                .predictions
                .iter()
                .filter_map(|(m, set)| {
                    let key = layerbench::dataset::LayerKey::new(&id, l.id());
                    set.entries.get(&key).map(|c| (m.clone(), json!(c.len())))
                })
                .collect();
            json!({
                "entry": l.entry,
                "preview_url": format!("/api/asset/layer/{id}/{}", l.id()),
                "candidates": candidates,
            })
        })
        .collect();
    Ok(Json(json!({
        "id": s.id(),
        "height": s.height,
        "width": s.width,
        "image_url": format!("/api/asset/image/{id}"),
        "layers": layers,
    })))
}

fn png(bytes: Arc<Vec<u8>>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], (*bytes).clone()).into_response()
}

async fn image_asset(State(state): State<Shared>, Path(sample): Path<String>) -> ApiResult<Response> {
    let s = state
        .dataset
        .sample(&sample)
        .ok_or_else(|| ApiError::not_found(format!("sample `{sample}`")))?;
    let bytes = std::fs::read(state.dataset.resolve(&s.entry.image_path)).map_err(ApiError::internal)?;
    Ok(png(Arc::new(bytes)))
}

/// Preview board: plain two-tone checkerboard without jitter.
const PREVIEW_BOARD: Checkerboard = Checkerboard {
    cell: 16,
    jitter: 0.0,
    seed: 0,
};

fn render_preview(state: &AppState, key: PreviewKey, layer: impl FnOnce() -> ApiResult<RgbaLayer>) -> ApiResult<Response> {
    if let Some(hit) = state.previews.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
        return Ok(png(hit.clone()));
    }
    let img = make_training_target_with(&layer()?, PREVIEW_BOARD).map_err(ApiError::internal)?;
    let bytes = Arc::new(codec::encode_rgb_png(&img).map_err(ApiError::internal)?);
    state
        .previews
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(key, bytes.clone());
    Ok(png(bytes))
}

async fn layer_asset(State(state): State<Shared>, Path((sample, layer)): Path<(String, String)>) -> ApiResult<Response> {
    let (_, l) = find(&state, &sample, &layer)?;
    let key = PreviewKey {
        sample,
        layer,
        model: None,
        k: 0,
    };
    render_preview(&state, key, || Ok(l.layer.clone()))
}

fn prediction_preview(state: &AppState, model: &str, sample: &str, layer: &str, k: usize) -> ApiResult<Response> {
    let (_, l) = find(state, sample, layer)?;
    let set = state
        .predictions
        .get(model)
        .ok_or_else(|| ApiError::not_found(format!("model `{model}`")))?;
    let files = set
        .entries
        .get(&layerbench::dataset::LayerKey::new(sample, layer))
        .ok_or_else(|| ApiError::not_found(format!("no prediction for `{sample}/{layer}`")))?;
    let path = files
        .get(k)
        .ok_or_else(|| ApiError::not_found(format!("candidate {k} of {}", files.len())))?
        .clone();
    let kind = l.layer.kind();
    let key = PreviewKey {
        sample: sample.to_string(),
        layer: layer.to_string(),
        model: Some(model.to_string()),
        k,
    };
    render_preview(state, key, move || {
        let (rgb, alpha) = codec::read_rgba(&path).map_err(ApiError::internal)?;
        let layer = match kind {
            LayerKind::Background => {
                let (h, w) = rgb.dims();
                RgbaLayer::background(rgb, BinaryMask::filled(h, w, true))
            }
            LayerKind::Foreground => {
                let vis = alpha.support(0.0);
                RgbaLayer::new(rgb, alpha, vis, kind)
            }
        };
        layer.map_err(ApiError::internal)
    })
}

async fn prediction_asset(
    State(state): State<Shared>,
    Path((model, sample, layer, k)): Path<(String, String, String, usize)>,
) -> ApiResult<Response> {
    prediction_preview(&state, &model, &sample, &layer, k)
}

async fn match_asset(State(state): State<Shared>, Path((match_id, side)): Path<(String, String)>) -> ApiResult<Response> {
    let (model, item) = {
        let inner = lock(&state);
        let lease = inner
            .ledger
            .lease(&match_id)
            .ok_or_else(|| ApiError::not_found(format!("no pending match `{match_id}`")))?;
        let model = match side.as_str() {
            "a" => lease.model_a.clone(),
            "b" => lease.model_b.clone(),
            _ => return Err(ApiError::bad_request("side must be `a` or `b`")),
        };
        (model, lease.sample_id.clone())
    };
    let (sample, layer) = item.split_once('/').expect("items are sample/layer");
    prediction_preview(&state, &model, sample, layer, 0)
}

#[derive(Deserialize)]
struct QualityRequest {
    token: String,
    sample_id: String,
    layer_id: String,
    quality: Quality,
    salient: Option<bool>,
    occluded: Option<bool>,
}

async fn quality(State(state): State<Shared>, Json(req): Json<QualityRequest>) -> ApiResult<Json<Value>> {
    let (_, l) = find(&state, &req.sample_id, &req.layer_id)?;
    if l.layer.kind() == LayerKind::Background && (req.salient.is_some() || req.occluded.is_some()) {
        return Err(ApiError::bad_request("saliency and occlusion apply to foreground layers only"));
    }
    let now = state.now();
    let mut inner = lock(&state);
    let who = annotator(&inner, &req.token)?;
    let record = json!({
        "annotator_id": who,
        "sample_id": req.sample_id,
        "layer_id": req.layer_id,
        "quality": req.quality,
        "salient": req.salient,
        "occluded": req.occluded,
        "timestamp": now,
    });
    append_line(&mut inner.quality_log, &record).map_err(ApiError::internal)?;
    Ok(Json(json!({"ok": true})))
}

#[derive(Deserialize)]
struct PassrateRequest {
    token: String,
    sample_id: String,
    layer_id: String,
    model_id: String,
    k: usize,
    satisfied: bool,
}

async fn passrate(State(state): State<Shared>, Json(req): Json<PassrateRequest>) -> ApiResult<Json<Value>> {
    find(&state, &req.sample_id, &req.layer_id)?;
    let available = state
        .predictions
        .get(&req.model_id)
        .ok_or_else(|| ApiError::not_found(format!("model `{}`", req.model_id)))?
        .entries
        .get(&layerbench::dataset::LayerKey::new(&req.sample_id, &req.layer_id))
        .map_or(0, Vec::len);
    if req.k == 0 || req.k > available {
        return Err(ApiError::bad_request(format!(
            "k = {} but {available} candidate(s) exist for this layer",
            req.k
        )));
    }
    let now = state.now();
    let mut inner = lock(&state);
    let who = annotator(&inner, &req.token)?;
    let verdict = StoredVerdict {
        annotator_id: who,
        sample_id: req.sample_id,
        layer_id: req.layer_id,
        model_id: req.model_id,
        k: req.k,
        satisfied: req.satisfied,
        timestamp: now,
    };
    append_line(&mut inner.verdict_log, &verdict).map_err(ApiError::internal)?;
    inner.verdicts.push(verdict);
    Ok(Json(json!({"ok": true})))
}

#[derive(Deserialize)]
struct PassrateQuery {
    model_id: String,
    k: usize,
}

async fn passrate_report(State(state): State<Shared>, Query(q): Query<PassrateQuery>) -> ApiResult<Json<Value>> {
    let inner = lock(&state);
    let verdicts: Vec<PassVerdict> = inner
        .verdicts
        .iter()
        .filter(|v| v.model_id == q.model_id)
        .map(|v| PassVerdict {
            sample_id: item_id(&v.sample_id, &v.layer_id),
            k: v.k,
            satisfied: v.satisfied,
        })
        .collect();
    let samples = verdicts
        .iter()
        .filter(|v| v.k == q.k)
        .map(|v| v.sample_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    match passrate_at_k(&verdicts, q.k) {
        Ok(rate) => Ok(Json(json!({"model_id": q.model_id, "k": q.k, "passrate": rate, "samples": samples}))),
        Err(MetricError::NoVerdicts(_)) => Err(ApiError::not_found(format!(
            "no verdicts for model `{}` at k = {}",
            q.model_id, q.k
        ))),
        Err(e) => Err(ApiError::internal(e)),
    }
}
