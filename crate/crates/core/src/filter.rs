//! Sentence-level hallucination filter.
//!
//! Each sentence of a hypothetical document gets two scores:
//!
//! * factuality: mean over its tokens of `entropy × mean attention the token
//!   receives from later tokens of the same sentence`;
//! * consistency: mean NLI contradiction probability of the sentence against
//!   every other document sampled for the same query.
//!
//! Their product is the filter score. Sentences scoring strictly above the
//! threshold are dropped; a score exactly at the threshold is kept.
//! Entropies are in nats.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{GolferError, Result};
use crate::io::write_jsonl;
use crate::trace::{
    join_sentences, GenerationTrace, NliPairLogits, QueryNli, SentenceKey, SentenceRecord,
    TraceBundle, DISTRIBUTION_TOLERANCE,
};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// How the last token of a sentence, which has no later tokens to attend
/// to it, enters the sentence mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LastTokenConvention {
    /// Average attention is 0, so the token contributes factuality 0.
    #[default]
    Zero,
    /// The token is left out of the sentence mean.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub threshold: f64,
    pub last_token: LastTokenConvention,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold: DEFAULT_THRESHOLD,
            last_token: LastTokenConvention::Zero,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(GolferError::Config(format!(
                "filter threshold must be finite and > 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn keeps(&self, filter_score: f64) -> bool {
        filter_score <= self.threshold
    }
}

/// Shannon entropy (nats) of a token distribution. Zero-probability entries
/// contribute nothing.
pub fn token_entropy(distribution: &[(u64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(id, p) in distribution {
        if !(p.is_finite() && p >= 0.0) {
            return Err(GolferError::validation(
                format!("token {id}"),
                format!("probability {p} is negative or non-finite"),
            ));
        }
        total += p;
    }
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(GolferError::validation(
            "distribution",
            format!("probabilities sum to {total}, expected 1 ± {DISTRIBUTION_TOLERANCE}"),
        ));
    }
    Ok(-distribution
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(_, p)| p * p.ln())
        .sum::<f64>())
}

/// Mean attention token `pos` (0-based) receives from the later tokens of
/// its sentence. For the last token the result follows `convention`:
/// `Some(0.0)` for [`LastTokenConvention::Zero`], `None` for `Exclude`.
pub fn average_following_attention(
    sentence: &SentenceRecord,
    pos: usize,
    convention: LastTokenConvention,
) -> Result<Option<f64>> {
    let o = sentence.token_count();
    if pos >= o {
        return Err(GolferError::Index { index: pos, len: o });
    }
    if pos + 1 == o {
        return Ok(match convention {
            LastTokenConvention::Zero => Some(0.0),
            LastTokenConvention::Exclude => None,
        });
    }
    let mut sum = 0.0;
    for v in pos + 1..o {
        sum += sentence.attention(pos, v).ok_or_else(|| {
            GolferError::validation(&sentence.text, format!("attention ({pos},{v}) missing"))
        })?;
    }
    Ok(Some(sum / (o - pos - 1) as f64))
}

pub fn token_factuality(entropy: f64, avg_attention: f64) -> Result<f64> {
    if !(entropy >= 0.0 && avg_attention >= 0.0) {
        return Err(GolferError::validation(
            "token factuality",
            format!("inputs must be >= 0 (entropy {entropy}, attention {avg_attention})"),
        ));
    }
    Ok(entropy * avg_attention)
}

/// Mean token factuality of a sentence. Under `Exclude` a one-token
/// sentence has no scored tokens and gets 0.
pub fn sentence_factuality(sentence: &SentenceRecord, config: &FilterConfig) -> Result<f64> {
    if sentence.tokens.is_empty() {
        return Err(GolferError::validation(&sentence.text, "sentence has no tokens"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (pos, token) in sentence.tokens.iter().enumerate() {
        if let Some(avg) = average_following_attention(sentence, pos, config.last_token)? {
            sum += token_factuality(token.resolved_entropy()?, avg)?;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Contradiction probability from the two NLI logits, softmax restricted to
/// the contradiction and entailment classes.
pub fn nli_contradiction(logits: &NliPairLogits) -> Result<f64> {
    let (c, e) = (logits.logit_contra, logits.logit_entail);
    if !(c.is_finite() && e.is_finite()) {
        return Err(GolferError::validation(
            format!("{} vs {}", logits.key(), logits.other_doc_id),
            "non-finite NLI logit",
        ));
    }
    let m = c.max(e);
    let (ec, ee) = ((c - m).exp(), (e - m).exp());
    Ok(ec / (ec + ee))
}

/// Mean contradiction probability of one sentence against the other
/// `n_docs - 1` documents of its query. Pairs are summed in `other_doc_id`
/// order so the result does not depend on record order. A query with a
/// single document has nothing to contradict and scores 0.
pub fn sentence_consistency(
    key: &SentenceKey,
    pairs: &[NliPairLogits],
    n_docs: usize,
) -> Result<f64> {
    let expected = n_docs.saturating_sub(1);
    if pairs.len() != expected {
        return Err(GolferError::Completeness {
            missing: vec![format!(
                "{key}: expected {expected} pair(s), found {}",
                pairs.len()
            )],
        });
    }
    if expected == 0 {
        return Ok(0.0);
    }
    let mut ordered: Vec<&NliPairLogits> = pairs.iter().collect();
    ordered.sort_by(|a, b| a.other_doc_id.cmp(&b.other_doc_id));
    let mut sum = 0.0;
    for p in ordered {
        sum += nli_contradiction(p)?;
    }
    Ok(sum / expected as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sent_idx: usize,
    pub factuality: f64,
    pub consistency: f64,
    pub filter_score: f64,
    pub kept: bool,
}

/// Filter outcome for one hypothetical document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocFilterResult {
    pub doc_id: String,
    /// Per-sentence scores; empty when the filter was bypassed.
    pub scores: Vec<SentenceScore>,
    pub kept: Vec<bool>,
    /// Kept sentences in original order, joined by single spaces.
    pub filtered_text: String,
    /// Generation probabilities of every token in the kept sentences.
    pub kept_token_probs: Vec<f64>,
}

impl DocFilterResult {
    fn from_mask(trace: &GenerationTrace, scores: Vec<SentenceScore>, kept: Vec<bool>) -> Self {
        let survivors = || trace.sentences.iter().zip(&kept).filter(|(_, k)| **k).map(|(s, _)| s);
        let filtered_text = join_sentences(survivors().map(|s| s.text.as_str()));
        let kept_token_probs = survivors().flat_map(|s| s.tokens.iter().map(|t| t.prob)).collect();
        DocFilterResult {
            doc_id: trace.doc_id.clone(),
            scores,
            kept,
            filtered_text,
            kept_token_probs,
        }
    }

    /// True when no sentence survived; such documents are left out of the
    /// combination.
    pub fn all_dropped(&self) -> bool {
        !self.kept.iter().any(|k| *k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub query_id: String,
    pub docs: Vec<DocFilterResult>,
}

/// One line of `filter_report.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub query_id: String,
    pub doc_id: String,
    pub sent_idx: usize,
    pub factuality: f64,
    pub consistency: f64,
    pub filter_score: f64,
    pub kept: bool,
}

impl FilterReport {
    /// Keeps every sentence without scoring anything.
    pub fn passthrough(query_id: &str, traces: &[GenerationTrace]) -> Self {
        let docs = traces
            .iter()
            .map(|t| DocFilterResult::from_mask(t, Vec::new(), vec![true; t.sentences.len()]))
            .collect();
        FilterReport {
            query_id: query_id.to_string(),
            docs,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = FilterRecord> + '_ {
        self.docs.iter().flat_map(move |d| {
            d.scores.iter().map(move |s| FilterRecord {
                query_id: self.query_id.clone(),
                doc_id: d.doc_id.clone(),
                sent_idx: s.sent_idx,
                factuality: s.factuality,
                consistency: s.consistency,
                filter_score: s.filter_score,
                kept: s.kept,
            })
        })
    }

    pub fn write<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let records: Vec<_> = self.records().collect();
        write_jsonl(writer, &records)
    }
}

/// Scores every sentence of one query's traces and applies the threshold.
pub fn apply_filter(
    query_id: &str,
    traces: &[GenerationTrace],
    nli: &QueryNli,
    config: &FilterConfig,
) -> Result<FilterReport> {
    config.validate()?;
    if traces.is_empty() {
        return Err(GolferError::validation(query_id, "no traces to filter"));
    }
    let n = traces.len();
    let mut docs = Vec::with_capacity(n);
    for trace in traces {
        let mut scores = Vec::with_capacity(trace.sentences.len());
        for (j, sentence) in trace.sentences.iter().enumerate() {
            let key = SentenceKey::new(&trace.doc_id, j);
            let pairs = nli.get(&key).map(Vec::as_slice).unwrap_or(&[]);
            let factuality = sentence_factuality(sentence, config)?;
            let consistency = sentence_consistency(&key, pairs, n)?;
            let filter_score = factuality * consistency;
            scores.push(SentenceScore {
                sent_idx: j,
                factuality,
                consistency,
                filter_score,
                kept: config.keeps(filter_score),
            });
        }
        let kept = scores.iter().map(|s| s.kept).collect();
        let result = DocFilterResult::from_mask(trace, scores, kept);
        if result.all_dropped() {
            log::warn!("{query_id}/{}: every sentence dropped by the filter", trace.doc_id);
        }
        docs.push(result);
    }
    Ok(FilterReport {
        query_id: query_id.to_string(),
        docs,
    })
}

/// Rebuilds per-query reports from a saved `filter_report.jsonl`, so the
/// pipeline can resume at the combination stage. Every sentence of every
/// trace needs exactly one record.
pub fn reports_from_records(
    bundle: &TraceBundle,
    records: Vec<FilterRecord>,
) -> Result<BTreeMap<String, FilterReport>> {
    let mut index: HashMap<(String, String, usize), FilterRecord> = HashMap::new();
    for r in records {
        let key = (r.query_id.clone(), r.doc_id.clone(), r.sent_idx);
        if index.insert(key, r.clone()).is_some() {
            return Err(GolferError::validation(
                format!("{}/{}#{}", r.query_id, r.doc_id, r.sent_idx),
                "duplicate filter record",
            ));
        }
    }
    let mut out = BTreeMap::new();
    let mut missing = Vec::new();
    for (qid, traces) in bundle.iter() {
        let mut docs = Vec::with_capacity(traces.len());
        for trace in traces {
            let mut scores = Vec::with_capacity(trace.sentences.len());
            for j in 0..trace.sentences.len() {
                match index.remove(&(qid.to_string(), trace.doc_id.clone(), j)) {
                    Some(r) => scores.push(SentenceScore {
                        sent_idx: j,
                        factuality: r.factuality,
                        consistency: r.consistency,
                        filter_score: r.filter_score,
                        kept: r.kept,
                    }),
                    None => missing.push(format!("{qid}/{}#{j}", trace.doc_id)),
                }
            }
            let kept = scores.iter().map(|s| s.kept).collect();
            docs.push(DocFilterResult::from_mask(trace, scores, kept));
        }
        out.insert(
            qid.to_string(),
            FilterReport {
                query_id: qid.to_string(),
                docs,
            },
        );
    }
    if !missing.is_empty() {
        return Err(GolferError::validation(
            "filter report",
            format!("no record for sentence(s): {}", missing.join(", ")),
        ));
    }
    if let Some(((q, d, j), _)) = index.into_iter().next() {
        return Err(GolferError::validation(
            format!("{q}/{d}#{j}"),
            "filter record does not match any loaded sentence",
        ));
    }
    Ok(out)
}
