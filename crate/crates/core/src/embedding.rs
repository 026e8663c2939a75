//! Dense encoder backends.
//!
//! * `batch-file`: vectors precomputed by the extractor into an
//!   `embeddings.jsonl` whose ids are SHA-256 hex digests of the embedded
//!   text, so a changed filtered text never picks up a stale vector.
//! * `http`: `POST {endpoint}/embed` with `{"items":[{"id","text"}]}`,
//!   answered by `{"items":[{"id","vec"}]}`; failures carry `{"error"}`.
//! * `mock`: a deterministic unit vector seeded from the text.

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GolferError, Result};
use crate::io::{create, write_jsonl};
use crate::trace::{load_embeddings, EmbeddingRecord, EmbeddingSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub id: String,
    pub text: String,
}

impl EmbeddingRequest {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        EmbeddingRequest {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Key of a text in a batch embedding file.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    BatchFile,
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub dimension: Option<usize>,
    /// `embeddings.jsonl` keyed by content hash, for `batch-file`.
    pub batch_file: Option<PathBuf>,
    pub max_in_flight: usize,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            backend: Backend::BatchFile,
            endpoint: None,
            dimension: None,
            batch_file: None,
            max_in_flight: 4,
            batch_size: 64,
            timeout_secs: 60,
        }
    }
}

impl ProviderConfig {
    pub fn mock(dimension: usize) -> Self {
        ProviderConfig {
            backend: Backend::Mock,
            dimension: Some(dimension),
            ..ProviderConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.backend, &self.endpoint) {
            (Backend::Http, None) => {
                return Err(GolferError::Config("http backend requires `endpoint`".into()))
            }
            (Backend::BatchFile | Backend::Mock, Some(_)) => {
                return Err(GolferError::Config("`endpoint` is only valid for the http backend".into()))
            }
            _ => {}
        }
        if self.backend == Backend::Mock && !matches!(self.dimension, Some(d) if d > 0) {
            return Err(GolferError::Config("mock backend requires `dimension` > 0".into()));
        }
        if self.backend == Backend::BatchFile && self.batch_file.is_none() {
            return Err(GolferError::Config("batch-file backend requires `batch_file`".into()));
        }
        if self.max_in_flight == 0 || self.batch_size == 0 {
            return Err(GolferError::Config("max_in_flight and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A dense encoder. Results are keyed by request id, in request order.
pub trait Embedder: Send + Sync {
    fn embed_batch(&self, requests: &[EmbeddingRequest]) -> Result<IndexMap<String, EmbeddingRecord>>;
}

fn check_requests(requests: &[EmbeddingRequest]) -> Result<()> {
    for r in requests {
        if r.text.trim().is_empty() {
            return Err(GolferError::validation(&r.id, "empty text in embedding request"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockEmbedder { dim, seed }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            v[0] = 1.0;
        }
        v
    }
}

impl Embedder for MockEmbedder {
    fn embed_batch(&self, requests: &[EmbeddingRequest]) -> Result<IndexMap<String, EmbeddingRecord>> {
        check_requests(requests)?;
        Ok(requests
            .iter()
            .map(|r| (r.id.clone(), EmbeddingRecord::new(&r.id, self.embed_text(&r.text))))
            .collect())
    }
}

/// Looks texts up by content hash in a precomputed embedding file.
#[derive(Debug, Clone)]
pub struct BatchFileEmbedder {
    set: EmbeddingSet,
    pending_path: Option<PathBuf>,
}

impl BatchFileEmbedder {
    pub fn new(set: EmbeddingSet) -> Self {
        BatchFileEmbedder {
            set,
            pending_path: None,
        }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::new(load_embeddings(path)?))
    }

    /// On a miss, also write the missing texts (`{id: hash, text}` lines) to
    /// `path` so the extractor can embed them in a second pass.
    pub fn with_pending_output(mut self, path: impl Into<PathBuf>) -> Self {
        self.pending_path = Some(path.into());
        self
    }
}

impl Embedder for BatchFileEmbedder {
    fn embed_batch(&self, requests: &[EmbeddingRequest]) -> Result<IndexMap<String, EmbeddingRecord>> {
        check_requests(requests)?;
        let mut out = IndexMap::with_capacity(requests.len());
        let mut missing = Vec::new();
        for r in requests {
            let hash = content_hash(&r.text);
            match self.set.get(&hash) {
                Some(rec) => {
                    out.insert(r.id.clone(), EmbeddingRecord::new(&r.id, rec.vector.clone()));
                }
                None => missing.push((r, hash)),
            }
        }
        if missing.is_empty() {
            return Ok(out);
        }
        if let Some(path) = &self.pending_path {
            let mut pending: Vec<EmbeddingRequest> = missing
                .iter()
                .map(|(r, hash)| EmbeddingRequest::new(hash, &r.text))
                .collect();
            pending.dedup_by(|a, b| a.id == b.id);
            let w = create(path)?;
            write_jsonl(w, &pending).map_err(|e| GolferError::io(path, e))?;
        }
        Err(GolferError::MissingEmbeddings {
            ids: missing.iter().map(|(r, _)| r.id.clone()).collect(),
        })
    }
}

/// Counting semaphore bounding concurrent HTTP requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    items: &'a [EmbeddingRequest],
}

#[derive(Deserialize)]
struct EmbedResponse {
    items: Vec<EmbeddingRecord>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

pub struct HttpEmbedder {
    url: String,
    client: reqwest::blocking::Client,
    permits: Permits,
    batch_size: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, max_in_flight: usize, batch_size: usize, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GolferError::Config(format!("http client: {e}")))?;
        Ok(HttpEmbedder {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            client,
            permits: Permits::new(max_in_flight.max(1)),
            batch_size: batch_size.max(1),
        })
    }

    fn post(&self, chunk: &[EmbeddingRequest]) -> Result<Vec<EmbeddingRecord>> {
        let first = chunk.first().map(|r| r.id.clone()).unwrap_or_default();
        let fail = |message: String| GolferError::Http {
            request_id: first.clone(),
            message,
        };
        let _permit = self.permits.acquire();
        let resp = self
            .client
            .post(&self.url)
            .json(&EmbedBody { items: chunk })
            .send()
            .map_err(|e| fail(e.to_string()))?;
        let status = resp.status();
        let body = resp.bytes().map_err(|e| fail(e.to_string()))?;
        if !status.is_success() {
            let detail = serde_json::from_slice::<ErrorBody>(&body)
                .map(|b| b.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            return Err(fail(format!("HTTP {status}: {detail}")));
        }
        let parsed: EmbedResponse =
            serde_json::from_slice(&body).map_err(|e| fail(format!("bad response body: {e}")))?;
        Ok(parsed.items)
    }
}

impl Embedder for HttpEmbedder {
    fn embed_batch(&self, requests: &[EmbeddingRequest]) -> Result<IndexMap<String, EmbeddingRecord>> {
        check_requests(requests)?;
        let chunks: Vec<&[EmbeddingRequest]> = requests.chunks(self.batch_size).collect();
        let answers: Vec<Result<Vec<EmbeddingRecord>>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunks.iter().map(|c| s.spawn(move || self.post(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        let mut by_id = IndexMap::new();
        for answer in answers {
            for rec in answer? {
                by_id.insert(rec.id.clone(), rec);
            }
        }
        let mut out = IndexMap::with_capacity(requests.len());
        let mut set = EmbeddingSet::default();
        for r in requests {
            let rec = by_id.swap_remove(&r.id).ok_or_else(|| GolferError::Http {
                request_id: r.id.clone(),
                message: "response has no vector for this id".into(),
            })?;
            set.insert(rec.clone())?;
            out.insert(r.id.clone(), rec);
        }
        Ok(out)
    }
}

/// Builds the configured backend. Relative batch-file paths resolve against
/// `base_dir`; `seed` feeds the mock backend.
pub fn build_embedder(config: &ProviderConfig, seed: u64, base_dir: &Path) -> Result<Box<dyn Embedder>> {
    config.validate()?;
    Ok(match config.backend {
        Backend::Mock => Box::new(MockEmbedder::new(config.dimension.unwrap_or_default(), seed)),
        Backend::BatchFile => {
            let path = base_dir.join(config.batch_file.as_ref().expect("validated"));
            Box::new(BatchFileEmbedder::open(&path)?)
        }
        Backend::Http => Box::new(HttpEmbedder::new(
            config.endpoint.as_deref().expect("validated"),
            config.max_in_flight,
            config.batch_size,
            Duration::from_secs(config.timeout_secs),
        )?),
    })
}
