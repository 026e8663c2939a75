//! Straight-line reference implementations, written without reference to
//! the engine's code paths.

use std::collections::{BTreeMap, HashMap};

use golfer_core::trace::{GenerationTrace, NliPairLogits, SentenceRecord, TokenRecord};

pub fn entropy(dist: &[(u64, f64)]) -> f64 {
    let mut h = 0.0;
    for &(_, p) in dist {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

pub fn token_entropy(t: &TokenRecord) -> f64 {
    match (&t.entropy, &t.dist) {
        (Some(h), _) => *h,
        (None, Some(d)) => entropy(d),
        _ => panic!("token without entropy"),
    }
}

/// Mean attention from later tokens; `None` for the last token.
pub fn following_attention(s: &SentenceRecord, pos: usize) -> Option<f64> {
    let o = s.tokens.len();
    if pos + 1 >= o {
        return None;
    }
    let mut sum = 0.0;
    for v in pos + 1..o {
        sum += s.attn[pos][v].unwrap();
    }
    Some(sum / (o - pos - 1) as f64)
}

pub fn sentence_factuality(s: &SentenceRecord, exclude_last: bool) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (pos, t) in s.tokens.iter().enumerate() {
        match following_attention(s, pos) {
            Some(a) => {
                sum += token_entropy(t) * a;
                n += 1;
            }
            None if !exclude_last => n += 1,
            None => {}
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn contradiction(logit_contra: f64, logit_entail: f64) -> f64 {
    let c = logit_contra.exp();
    let e = logit_entail.exp();
    c / (c + e)
}

pub fn consistency(doc_id: &str, sent_idx: usize, n_docs: usize, nli: &[NliPairLogits]) -> f64 {
    if n_docs < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for r in nli {
        if r.doc_id == doc_id && r.sent_idx == sent_idx {
            sum += contradiction(r.logit_contra, r.logit_entail);
        }
    }
    sum / (n_docs - 1) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct Scores {
    pub factuality: f64,
    pub consistency: f64,
    pub filter_score: f64,
}

/// Scores per document, per sentence, for one query.
pub fn filter_scores(traces: &[GenerationTrace], nli: &[NliPairLogits], exclude_last: bool) -> Vec<Vec<Scores>> {
    let n = traces.len();
    traces
        .iter()
        .map(|t| {
            t.sentences
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let f = sentence_factuality(s, exclude_last);
                    let c = consistency(&t.doc_id, j, n, nli);
                    Scores {
                        factuality: f,
                        consistency: c,
                        filter_score: f * c,
                    }
                })
                .collect()
        })
        .collect()
}

/// Mean token probability over kept sentences.
pub fn confidence(trace: &GenerationTrace, kept: &[bool]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for (s, k) in trace.sentences.iter().zip(kept) {
        if *k {
            for t in &s.tokens {
                sum += t.prob;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn sparse_expansion(query: &str, docs: &[&str], repetition: usize) -> String {
    let mut out = String::new();
    for _ in 0..repetition {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(query);
    }
    for d in docs {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(d);
    }
    out
}

pub fn dense_expansion(q: &[f64], docs: &[(&[f64], f64)], beta: f64) -> Vec<f64> {
    let total: f64 = docs.iter().map(|(_, w)| w).sum();
    (0..q.len())
        .map(|i| {
            let mut acc = 0.0;
            for (d, w) in docs {
                acc += w * d[i];
            }
            beta * q[i] + (1.0 - beta) / total * acc
        })
        .collect()
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Full-scan BM25 over every document; only documents sharing a term with
/// the query are returned, ranked by score then id.
pub fn bm25_rank(corpus: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|(_, t)| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut out = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for term in tokenize(query) {
            let tf = d.iter().filter(|t| **t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|x| x.contains(&term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
        }
        if matched {
            out.push((corpus[i].0.clone(), score));
        }
    }
    sort_ranked(&mut out);
    out
}

pub fn dense_rank(corpus: &[(String, Vec<f64>)], q: &[f64]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = corpus
        .iter()
        .map(|(id, v)| (id.clone(), v.iter().zip(q).map(|(a, b)| a * b).sum()))
        .collect();
    sort_ranked(&mut out);
    out
}

fn sort_ranked(v: &mut [(String, f64)]) {
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
}

pub type Judgments = HashMap<String, u32>;

pub fn ndcg(run: &[String], judged: &Judgments, k: usize) -> Option<f64> {
    let mut grades: Vec<u32> = judged.values().copied().filter(|g| *g > 0).collect();
    grades.sort_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (i, g) in grades.iter().take(k).enumerate() {
        idcg += (2f64.powi(*g as i32) - 1.0) / ((i + 2) as f64).log2();
    }
    if idcg == 0.0 {
        return None;
    }
    let mut dcg = 0.0;
    for (i, d) in run.iter().take(k).enumerate() {
        let g = judged.get(d).copied().unwrap_or(0);
        dcg += (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2();
    }
    Some(dcg / idcg)
}

fn relevant(judged: &Judgments, cutoff: u32) -> usize {
    judged.values().filter(|g| **g >= cutoff).count()
}

fn is_rel(judged: &Judgments, d: &str, cutoff: u32) -> bool {
    judged.get(d).is_some_and(|g| *g >= cutoff)
}

pub fn mrr(run: &[String], judged: &Judgments, k: usize, cutoff: u32) -> Option<f64> {
    if relevant(judged, cutoff) == 0 {
        return None;
    }
    for (i, d) in run.iter().take(k).enumerate() {
        if is_rel(judged, d, cutoff) {
            return Some(1.0 / (i + 1) as f64);
        }
    }
    Some(0.0)
}

pub fn recall(run: &[String], judged: &Judgments, k: usize, cutoff: u32) -> Option<f64> {
    let total = relevant(judged, cutoff);
    if total == 0 {
        return None;
    }
    let found = run.iter().take(k).filter(|d| is_rel(judged, d, cutoff)).count();
    Some(found as f64 / total as f64)
}

pub fn average_precision(run: &[String], judged: &Judgments, cutoff: u32) -> Option<f64> {
    let total = relevant(judged, cutoff);
    if total == 0 {
        return None;
    }
    let mut precisions = Vec::new();
    for i in 0..run.len() {
        if is_rel(judged, &run[i], cutoff) {
            let hits = run[..=i].iter().filter(|d| is_rel(judged, d, cutoff)).count();
            precisions.push(hits as f64 / (i + 1) as f64);
        }
    }
    Some(precisions.iter().sum::<f64>() / total as f64)
}

/// Per-query judgments keyed by query id.
pub fn group_qrels(rows: &[(String, String, u32)]) -> BTreeMap<String, Judgments> {
    let mut out: BTreeMap<String, Judgments> = BTreeMap::new();
    for (q, d, g) in rows {
        out.entry(q.clone()).or_default().insert(d.clone(), *g);
    }
    out
}
