//! The file formats and the embedding endpoint shared with the trace
//! extractor, exercised the way the extractor would use them.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use golfer_core::embedding::{content_hash, Backend, Embedder, EmbeddingRequest, HttpEmbedder, MockEmbedder, ProviderConfig};
use golfer_core::io::{read_jsonl, write_jsonl};
use golfer_core::pipeline::{run_pipeline, PENDING_EMBEDDINGS_FILE, RUN_FILE};
use golfer_core::synthetic::{generate, SynthConfig, SynthKind};
use golfer_core::trace::{load_embeddings, load_trace_bundle, read_queries, write_queries, EmbeddingRecord, NliPairLogits};
use golfer_core::{GolferError, Mode, PipelineConfig};
use serde_json::Value;

fn data_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn bundled_datasets_regenerate_byte_for_byte() {
    for (name, kind) in [("synthetic", SynthKind::Standard), ("adversarial", SynthKind::Adversarial)] {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            kind,
            ..SynthConfig::default()
        };
        generate(&cfg).write_to(tmp.path()).unwrap();
        let mut files: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        for f in files {
            assert_eq!(
                bytes(&tmp.path().join(&f)),
                bytes(&data_dir(name).join(&f)),
                "{name}/{}",
                f.to_string_lossy()
            );
        }
    }
}

#[test]
fn trace_files_round_trip_byte_identical() {
    for name in ["synthetic", "adversarial"] {
        let dir = data_dir(name);
        let bundle = load_trace_bundle(&dir.join("traces.jsonl")).unwrap();
        let mut out = Vec::new();
        bundle.write(&mut out).unwrap();
        assert_eq!(out, bytes(&dir.join("traces.jsonl")));

        let nli: Vec<NliPairLogits> = read_jsonl(bytes(&dir.join("nli.jsonl")).as_slice(), "nli")
            .unwrap()
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        let mut out = Vec::new();
        write_jsonl(&mut out, &nli).unwrap();
        assert_eq!(out, bytes(&dir.join("nli.jsonl")));

        let queries = read_queries(bytes(&dir.join("queries.tsv")).as_slice(), "q").unwrap();
        let mut out = Vec::new();
        write_queries(&mut out, queries.values()).unwrap();
        assert_eq!(out, bytes(&dir.join("queries.tsv")));
    }
    let dir = data_dir("adversarial");
    for f in ["embeddings.jsonl", "corpus_embeddings.jsonl"] {
        let set = load_embeddings(&dir.join(f)).unwrap();
        let mut out = Vec::new();
        set.write(&mut out).unwrap();
        assert_eq!(out, bytes(&dir.join(f)), "{f}");
    }
}

#[test]
fn extractor_style_records_are_accepted() {
    let line = r#"{"query_id":"q1","doc_id":"h1","sentences":[{"text":"Paris is big.","tokens":[{"text":"Paris","prob":0.9,"entropy":0.3},{"text":" is","prob":0.8,"dist":[[11,0.5],[12,0.5]]},{"text":" big.","prob":0.7,"entropy":1.0}],"attn":[[null,0.2,0.1],[null,null,0.4],[null,null,null]]}]}"#;
    let bundle = golfer_core::trace::read_trace_bundle(line.as_bytes(), "mem").unwrap();
    assert_eq!(bundle.get("q1").unwrap()[0].text(), "Paris is big.");

    let bad = line.replace("[null,0.2,0.1]", "[0.3,0.2,0.1]");
    let err = golfer_core::trace::read_trace_bundle(bad.as_bytes(), "mem").unwrap_err();
    assert!(err.to_string().contains("mem"), "{err}");
}

/// Minimal stand-in for the extractor's `/embed` service.
struct FakeServer {
    url: String,
    requests: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

fn serve(dim: usize, seed: u64, fail_on: Option<&'static str>) -> FakeServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let live = Arc::new(AtomicUsize::new(0));
    let (req_c, peak_c) = (requests.clone(), peak.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let (requests, peak, live) = (req_c.clone(), peak_c.clone(), live.clone());
            std::thread::spawn(move || {
                let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut len = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h == "\r\n" || h.is_empty() {
                        break;
                    }
                    if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                requests.fetch_add(1, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                assert!(request_line.starts_with("POST /embed "), "{request_line}");

                let parsed: Value = serde_json::from_slice(&body).unwrap();
                let items = parsed["items"].as_array().unwrap();
                let mock = MockEmbedder::new(dim, seed);
                let (status, reply) = if items.iter().any(|i| Some(i["text"].as_str().unwrap()) == fail_on) {
                    ("500 Internal Server Error", serde_json::json!({"error": "model crashed"}))
                } else {
                    let out: Vec<Value> = items
                        .iter()
                        .map(|i| {
                            assert_eq!(i.as_object().unwrap().len(), 2, "items carry only id and text");
                            serde_json::json!({"id": i["id"], "vec": mock.embed_text(i["text"].as_str().unwrap())})
                        })
                        .collect();
                    ("200 OK", serde_json::json!({ "items": out }))
                };
                let reply = reply.to_string();
                live.fetch_sub(1, Ordering::SeqCst);
                write!(
                    stream,
                    "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                )
                .unwrap();
            });
        }
    });
    FakeServer { url, requests, peak }
}

#[test]
fn http_embedder_batches_and_bounds_concurrency() {
    let server = serve(6, 3, None);
    let embedder = HttpEmbedder::new(&server.url, 2, 4, Duration::from_secs(10)).unwrap();
    let reqs: Vec<EmbeddingRequest> = (0..22).map(|i| EmbeddingRequest::new(format!("r{i}"), format!("text {i}"))).collect();
    let out = embedder.embed_batch(&reqs).unwrap();
    assert_eq!(out.keys().cloned().collect::<Vec<_>>(), reqs.iter().map(|r| r.id.clone()).collect::<Vec<_>>());
    let mock = MockEmbedder::new(6, 3);
    assert_eq!(out["r5"].vector, mock.embed_text("text 5"));
    assert_eq!(server.requests.load(Ordering::SeqCst), 6);
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
}

#[test]
fn http_errors_name_the_request() {
    let server = serve(4, 1, Some("poison"));
    let embedder = HttpEmbedder::new(&server.url, 1, 8, Duration::from_secs(10)).unwrap();
    let reqs = [EmbeddingRequest::new("first", "poison"), EmbeddingRequest::new("second", "fine")];
    match embedder.embed_batch(&reqs) {
        Err(GolferError::Http { request_id, message }) => {
            assert_eq!(request_id, "first");
            assert!(message.contains("model crashed"), "{message}");
        }
        other => panic!("expected an HTTP error, got {other:?}"),
    }
}

fn synthetic_dense_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&data_dir("synthetic").join("dense.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn http_backend_matches_mock_backend_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let mock_cfg = synthetic_dense_config(&tmp.path().join("mock"));
    let dim = mock_cfg.provider.dimension.unwrap();
    let server = serve(dim, mock_cfg.seed, None);
    let mut http_cfg = synthetic_dense_config(&tmp.path().join("http"));
    http_cfg.provider = ProviderConfig {
        backend: Backend::Http,
        endpoint: Some(server.url.clone()),
        ..ProviderConfig::mock(dim)
    };
    assert_eq!(mock_cfg.mode, Mode::Dense);
    run_pipeline(&mock_cfg).unwrap();
    run_pipeline(&http_cfg).unwrap();
    assert_eq!(bytes(&tmp.path().join("mock").join(RUN_FILE)), bytes(&tmp.path().join("http").join(RUN_FILE)));
}

#[test]
fn missing_batch_vectors_are_requested_then_resolved() {
    let tmp = tempfile::tempdir().unwrap();
    let src = data_dir("adversarial");
    for f in std::fs::read_dir(&src).unwrap() {
        let f = f.unwrap();
        std::fs::copy(f.path(), tmp.path().join(f.file_name())).unwrap();
    }
    // Drop a third of the precomputed vectors.
    let full = load_embeddings(&tmp.path().join("embeddings.jsonl")).unwrap();
    let kept: Vec<&EmbeddingRecord> = full.iter().enumerate().filter(|(i, _)| i % 3 != 0).map(|(_, r)| r).collect();
    write_jsonl(std::fs::File::create(tmp.path().join("embeddings.jsonl")).unwrap(), kept.iter().copied()).unwrap();

    let cfg = PipelineConfig::load(&tmp.path().join("dense.toml")).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.to_string().contains("[embed]") || err.to_string().contains("[combine]"), "{err}");

    let pending_path = cfg.output_dir().join(PENDING_EMBEDDINGS_FILE);
    let pending: Vec<EmbeddingRequest> = read_jsonl(bytes(&pending_path).as_slice(), "pending")
        .unwrap()
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    assert!(!pending.is_empty());
    let mut all: Vec<EmbeddingRecord> = kept.into_iter().cloned().collect();
    for req in &pending {
        assert_eq!(req.id, content_hash(&req.text));
        all.push(full.get(&req.id).expect("requested text was in the original file").clone());
    }
    write_jsonl(std::fs::File::create(tmp.path().join("embeddings.jsonl")).unwrap(), &all).unwrap();
    run_pipeline(&cfg).unwrap();
}
