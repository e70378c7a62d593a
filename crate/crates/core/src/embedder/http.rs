use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{require_distance, require_embedding, Backend, EmbedError, Embedder, EmbedderMode, EmbedderSpec, FeatureVector};
use crate::codec;
use crate::raster::Image;

#[derive(Debug, Clone)]
pub struct HttpOptions {
    /// Maximum number of requests in flight from one `embed_many` call.
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for HttpOptions {
    fn default() -> Self {
        HttpOptions {
            max_in_flight: 8,
            timeout: Duration::from_secs(30),
        }
    }
}

/// Client for an external embedding service speaking the
/// `/spec`, `/embed`, `/distance` JSON protocol.
pub struct HttpEmbedder {
    base: String,
    client: reqwest::blocking::Client,
    spec: EmbedderSpec,
    opts: HttpOptions,
    next_id: AtomicU64,
}

#[derive(Deserialize)]
struct SpecResponse {
    name: String,
    mode: EmbedderMode,
    dim: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    id: &'a str,
    png_base64: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    id: String,
    vector: Vec<f64>,
}

#[derive(Serialize)]
struct DistanceRequest<'a> {
    id: &'a str,
    png_base64_a: String,
    png_base64_b: String,
}

#[derive(Deserialize)]
struct DistanceResponse {
    id: String,
    distance: f64,
}

impl HttpEmbedder {
    /// Connects to `endpoint` and reads its capabilities from `GET /spec`.
    pub fn connect(endpoint: &str, opts: HttpOptions) -> Result<Self, EmbedError> {
        let base = endpoint.trim_end_matches('/').to_string();
        if base.is_empty() {
            return Err(EmbedError::BackendUnavailable("empty endpoint".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(opts.timeout)
            .build()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        let resp = client
            .get(format!("{base}/spec"))
            .send()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        let remote: SpecResponse = decode(resp)?;
        if remote.mode.embeds() && remote.dim == 0 {
            return Err(EmbedError::ProtocolError("embedding service reported dim 0".into()));
        }
        let spec = EmbedderSpec {
            name: remote.name,
            mode: remote.mode,
            dim: remote.dim,
            backend: Backend::External(base.clone()),
        };
        Ok(HttpEmbedder {
            base,
            client,
            spec,
            opts,
            next_id: AtomicU64::new(0),
        })
    }

    fn request_id(&self) -> String {
        format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, path: &str, body: &Req) -> Result<Resp, EmbedError> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        decode(resp)
    }
}

fn decode<T: for<'de> Deserialize<'de>>(resp: reqwest::blocking::Response) -> Result<T, EmbedError> {
    let status = resp.status();
    if !status.is_success() {
        return Err(EmbedError::ProtocolError(format!("HTTP {status}")));
    }
    let bytes = resp.bytes().map_err(|e| EmbedError::ProtocolError(e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| EmbedError::ProtocolError(format!("bad response body: {e}")))
}

fn png_base64(img: &Image) -> Result<String, EmbedError> {
    let png = codec::encode_rgb_png(img).map_err(|e| EmbedError::ProtocolError(e.to_string()))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(png))
}

fn check_id(sent: &str, got: &str) -> Result<(), EmbedError> {
    if sent != got {
        return Err(EmbedError::ProtocolError(format!("response id `{got}` does not match request `{sent}`")));
    }
    Ok(())
}

impl Embedder for HttpEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, img: &Image) -> Result<FeatureVector, EmbedError> {
        require_embedding(&self.spec)?;
        if img.is_empty() {
            return Err(EmbedError::EmptyImage);
        }
        let id = self.request_id();
        let resp: EmbedResponse = self.post(
            "/embed",
            &EmbedRequest {
                id: &id,
                png_base64: png_base64(img)?,
            },
        )?;
        check_id(&id, &resp.id)?;
        if resp.vector.len() != self.spec.dim {
            return Err(EmbedError::ProtocolError(format!(
                "expected {} features, got {}",
                self.spec.dim,
                resp.vector.len()
            )));
        }
        FeatureVector::new(resp.vector)
    }

    fn distance(&self, a: &Image, b: &Image) -> Result<f64, EmbedError> {
        require_distance(&self.spec, a, b)?;
        let id = self.request_id();
        let resp: DistanceResponse = self.post(
            "/distance",
            &DistanceRequest {
                id: &id,
                png_base64_a: png_base64(a)?,
                png_base64_b: png_base64(b)?,
            },
        )?;
        check_id(&id, &resp.id)?;
        if !resp.distance.is_finite() || resp.distance < 0.0 {
            return Err(EmbedError::ProtocolError(format!("invalid distance {}", resp.distance)));
        }
        Ok(resp.distance)
    }

    fn embed_many(&self, imgs: &[Image]) -> Result<Vec<FeatureVector>, EmbedError> {
        let cap = self.opts.max_in_flight.max(1);
        let mut out = Vec::with_capacity(imgs.len());
        for chunk in imgs.chunks(cap) {
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|img| s.spawn(move || self.embed(img))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(EmbedError::BackendUnavailable("worker panicked".into()))))
                    .collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        Ok(out)
    }
}
