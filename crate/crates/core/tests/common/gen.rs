//! Seeded random instances for property checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use golfer_core::retrieval::{Hit, RunResult};
use golfer_core::trace::{GenerationTrace, NliPairLogits, SentenceRecord, TokenRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct MicroShape {
    pub max_docs: usize,
    pub max_sentences: usize,
    pub max_tokens: usize,
}

impl Default for MicroShape {
    fn default() -> Self {
        MicroShape {
            max_docs: 4,
            max_sentences: 3,
            max_tokens: 5,
        }
    }
}

pub fn token(r: &mut ChaCha8Rng, text: String) -> TokenRecord {
    let prob = r.random_range(0.001..=1.0);
    if r.random_bool(0.5) {
        TokenRecord {
            text,
            prob,
            entropy: Some(r.random_range(0.0..6.0)),
            dist: None,
        }
    } else {
        let k = r.random_range(1..6);
        let mut w: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        if r.random_bool(0.2) {
            w[0] = 0.0;
        }
        w.push(r.random_range(0.01..1.0));
        let total: f64 = w.iter().sum();
        TokenRecord {
            text,
            prob,
            entropy: None,
            dist: Some(w.into_iter().enumerate().map(|(i, p)| (i as u64 * 7, p / total)).collect()),
        }
    }
}

pub fn sentence(r: &mut ChaCha8Rng, n_tokens: usize, tag: &str) -> SentenceRecord {
    let tokens: Vec<TokenRecord> = (0..n_tokens)
        .map(|i| {
            let text = if i == 0 { format!("{tag}w{i}") } else { format!(" {tag}w{i}") };
            token(r, text)
        })
        .collect();
    let attn = (0..n_tokens)
        .map(|l| {
            (0..n_tokens)
                .map(|v| (v > l).then(|| r.random_range(0.0..=1.0)))
                .collect()
        })
        .collect();
    SentenceRecord {
        text: tokens.iter().map(|t| t.text.as_str()).collect(),
        tokens,
        attn,
    }
}

/// One query's traces plus a complete set of NLI logits.
pub fn micro_query(r: &mut ChaCha8Rng, query_id: &str, shape: MicroShape) -> (Vec<GenerationTrace>, Vec<NliPairLogits>) {
    let n_docs = r.random_range(1..=shape.max_docs);
    let traces: Vec<GenerationTrace> = (0..n_docs)
        .map(|d| {
            let n_sent = r.random_range(1..=shape.max_sentences);
            GenerationTrace {
                query_id: query_id.to_string(),
                doc_id: format!("{query_id}-d{d}"),
                sentences: (0..n_sent)
                    .map(|j| {
                        let n_tok = r.random_range(1..=shape.max_tokens);
                        sentence(r, n_tok, &format!("s{d}{j}"))
                    })
                    .collect(),
            }
        })
        .collect();
    let mut nli = Vec::new();
    for t in &traces {
        for j in 0..t.sentences.len() {
            for o in traces.iter().filter(|o| o.doc_id != t.doc_id) {
                nli.push(NliPairLogits {
                    doc_id: t.doc_id.clone(),
                    sent_idx: j,
                    other_doc_id: o.doc_id.clone(),
                    logit_entail: r.random_range(-8.0..8.0),
                    logit_contra: r.random_range(-8.0..8.0),
                    query_id: Some(query_id.to_string()),
                });
            }
        }
    }
    nli.shuffle(r);
    (traces, nli)
}

pub fn unit_vector(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

pub fn vector(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| r.random_range(-2.0..2.0)).collect()
}

const VOCAB: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu",
    "nu", "xi", "omicron", "pi", "rho", "sigma", "tau", "upsilon",
];

pub fn text(r: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let n = r.random_range(min..=max);
    let words: Vec<String> = (0..n)
        .map(|_| {
            let w = VOCAB[r.random_range(0..VOCAB.len())];
            if r.random_bool(0.1) {
                w.to_uppercase()
            } else {
                w.to_string()
            }
        })
        .collect();
    words.join(if r.random_bool(0.5) { " " } else { ", " })
}

/// Corpus of up to `max_docs` documents with ids in shuffled order.
pub fn corpus(r: &mut ChaCha8Rng, max_docs: usize) -> Vec<(String, String)> {
    let n = r.random_range(1..=max_docs);
    let mut docs: Vec<(String, String)> = (0..n).map(|i| (format!("doc{i:03}"), text(r, 1, 25))).collect();
    // Exact duplicates force score ties.
    if n > 2 && r.random_bool(0.3) {
        docs[1].1 = docs[0].1.clone();
    }
    docs.shuffle(r);
    docs
}

pub fn dense_corpus(r: &mut ChaCha8Rng, max_docs: usize, dim: usize) -> Vec<(String, Vec<f64>)> {
    let n = r.random_range(1..=max_docs);
    let mut docs: Vec<(String, Vec<f64>)> = (0..n).map(|i| (format!("doc{i:03}"), vector(r, dim))).collect();
    if n > 2 && r.random_bool(0.3) {
        docs[1].1 = docs[0].1.clone();
    }
    docs.shuffle(r);
    docs
}

/// A ranked run over a pool of documents plus graded judgments, some of
/// which refer to documents the run never retrieved.
pub fn run_and_judgments(r: &mut ChaCha8Rng, query_id: &str) -> (RunResult, Vec<(String, String, u32)>) {
    let pool = r.random_range(1..40);
    let mut ids: Vec<String> = (0..pool).map(|i| format!("d{i}")).collect();
    ids.shuffle(r);
    let depth = r.random_range(0..=pool);
    let hits = ids[..depth]
        .iter()
        .enumerate()
        .map(|(i, d)| Hit {
            doc_id: d.clone(),
            score: (depth - i) as f64,
        })
        .collect();
    let mut judged = Vec::new();
    for d in &ids {
        if r.random_bool(0.35) {
            judged.push((query_id.to_string(), d.clone(), r.random_range(0..=3)));
        }
    }
    (
        RunResult {
            query_id: query_id.to_string(),
            hits,
        },
        judged,
    )
}
