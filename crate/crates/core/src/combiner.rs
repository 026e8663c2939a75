//! Builds the expanded query from the original query and the (filtered)
//! hypothetical documents.
//!
//! Sparse retrieval gets a text: the query repeated `query_repetition` times
//! followed by every document text. Dense retrieval gets a vector:
//! `beta * f(q) + (1 - beta) * sum_i(w_i * f(d_i)) / sum_i(w_i)` where `w_i`
//! is the document's generation confidence (mean token probability over
//! the tokens that survived filtering).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{GolferError, Result};
use crate::filter::DocFilterResult;
use crate::io::{read_jsonl, tsv_field, write_jsonl};
use crate::trace::{EmbeddingRecord, QueryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinerConfig {
    pub query_repetition: usize,
    /// Share of the original query in the dense vector.
    pub beta: f64,
    /// Number of hypothetical documents the defaults were chosen for.
    pub n_expected: usize,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        CombinerConfig {
            query_repetition: 20,
            beta: 0.6,
            n_expected: 5,
        }
    }
}

impl CombinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.query_repetition < 1 {
            return Err(GolferError::Config("query_repetition must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(GolferError::Config(format!("beta must be in [0,1], got {}", self.beta)));
        }
        if self.n_expected < 1 {
            return Err(GolferError::Config("n_expected must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentConfidence {
    pub doc_id: String,
    pub confidence: f64,
}

/// Mean generation probability over the tokens of the kept sentences.
/// `None` when nothing survived the filter; the caller drops the document.
pub fn generation_confidence(result: &DocFilterResult) -> Option<DocumentConfidence> {
    if result.all_dropped() || result.kept_token_probs.is_empty() {
        return None;
    }
    let sum: f64 = result.kept_token_probs.iter().sum();
    Some(DocumentConfidence {
        doc_id: result.doc_id.clone(),
        confidence: sum / result.kept_token_probs.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub doc_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionPayload {
    Sparse(String),
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedQuery {
    pub query_id: String,
    pub payload: ExpansionPayload,
    /// Documents that entered the expansion. Sparse expansions give each
    /// document weight 1; dense ones give the effective vector weight.
    pub provenance: Vec<Contribution>,
}

impl ExpandedQuery {
    pub fn sparse_text(&self) -> Option<&str> {
        match &self.payload {
            ExpansionPayload::Sparse(t) => Some(t),
            ExpansionPayload::Dense(_) => None,
        }
    }

    pub fn dense_vector(&self) -> Option<&[f64]> {
        match &self.payload {
            ExpansionPayload::Dense(v) => Some(v),
            ExpansionPayload::Sparse(_) => None,
        }
    }
}

/// A document text entering the sparse expansion.
#[derive(Debug, Clone, Copy)]
pub struct DocText<'a> {
    pub doc_id: &'a str,
    pub text: &'a str,
}

/// Query text repeated `query_repetition` times, then the non-empty document
/// texts in the given order, all joined by single spaces. Without any
/// non-empty document the bare query text is returned.
pub fn combine_sparse(query: &QueryRecord, docs: &[DocText<'_>], config: &CombinerConfig) -> ExpandedQuery {
    let docs: Vec<_> = docs.iter().filter(|d| !d.text.trim().is_empty()).collect();
    if docs.is_empty() {
        return ExpandedQuery {
            query_id: query.query_id.clone(),
            payload: ExpansionPayload::Sparse(query.text.clone()),
            provenance: Vec::new(),
        };
    }
    let parts: Vec<&str> = std::iter::repeat_n(query.text.as_str(), config.query_repetition)
        .chain(docs.iter().map(|d| d.text))
        .collect();
    ExpandedQuery {
        query_id: query.query_id.clone(),
        payload: ExpansionPayload::Sparse(parts.join(" ")),
        provenance: docs
            .iter()
            .map(|d| Contribution {
                doc_id: d.doc_id.to_string(),
                weight: 1.0,
            })
            .collect(),
    }
}

/// Confidence-weighted dense combination. `docs[i]` is the embedding of the
/// document whose confidence is `confidences[i]`; the two must agree on ids.
/// Documents are accumulated in ascending doc-id order.
pub fn combine_dense(
    query_id: &str,
    query_vec: &EmbeddingRecord,
    docs: &[EmbeddingRecord],
    confidences: &[DocumentConfidence],
    config: &CombinerConfig,
) -> Result<ExpandedQuery> {
    config.validate()?;
    if docs.len() != confidences.len() {
        return Err(GolferError::validation(
            query_id,
            format!("{} document vectors but {} confidences", docs.len(), confidences.len()),
        ));
    }
    let dim = query_vec.dim();
    let mut entries = Vec::with_capacity(docs.len());
    for (doc, conf) in docs.iter().zip(confidences) {
        if doc.id != conf.doc_id {
            return Err(GolferError::validation(
                &doc.id,
                format!("vector/confidence misaligned with `{}`", conf.doc_id),
            ));
        }
        if doc.dim() != dim {
            return Err(GolferError::Dimension {
                id: doc.id.clone(),
                expected: dim,
                found: doc.dim(),
            });
        }
        if !(conf.confidence > 0.0 && conf.confidence <= 1.0) {
            return Err(GolferError::validation(
                &conf.doc_id,
                format!("confidence {} not in (0,1]", conf.confidence),
            ));
        }
        entries.push((doc, conf.confidence));
    }
    if entries.is_empty() {
        return Ok(ExpandedQuery {
            query_id: query_id.to_string(),
            payload: ExpansionPayload::Dense(query_vec.vector.clone()),
            provenance: Vec::new(),
        });
    }
    entries.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let total: f64 = entries.iter().map(|(_, w)| w).sum();
    let doc_share = 1.0 - config.beta;
    let scale = doc_share / total;

    let mut v: Vec<f64> = query_vec.vector.iter().map(|x| config.beta * x).collect();
    if doc_share != 0.0 {
        let mut mix = vec![0.0; dim];
        for (doc, w) in &entries {
            for (m, x) in mix.iter_mut().zip(&doc.vector) {
                *m += w * x;
            }
        }
        for (out, m) in v.iter_mut().zip(&mix) {
            *out += scale * m;
        }
    }
    let provenance = entries
        .iter()
        .map(|(doc, w)| Contribution {
            doc_id: doc.id.clone(),
            weight: doc_share * w / total,
        })
        .collect();
    Ok(ExpandedQuery {
        query_id: query_id.to_string(),
        payload: ExpansionPayload::Dense(v),
        provenance,
    })
}

/// Writes sparse expansions as `query_id<TAB>text` lines.
pub fn write_expanded_tsv<'a, W: Write>(
    mut writer: W,
    queries: impl IntoIterator<Item = &'a ExpandedQuery>,
) -> std::io::Result<()> {
    for q in queries {
        if let Some(text) = q.sparse_text() {
            writeln!(writer, "{}\t{}", q.query_id, tsv_field(text))?;
        }
    }
    writer.flush()
}

/// One line of `expanded_vecs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedVecRecord {
    pub query_id: String,
    pub vec: Vec<f64>,
    pub provenance: Vec<Contribution>,
}

pub fn write_expanded_vecs<'a, W: Write>(
    writer: W,
    queries: impl IntoIterator<Item = &'a ExpandedQuery>,
) -> std::io::Result<()> {
    let records: Vec<ExpandedVecRecord> = queries
        .into_iter()
        .filter_map(|q| {
            q.dense_vector().map(|v| ExpandedVecRecord {
                query_id: q.query_id.clone(),
                vec: v.to_vec(),
                provenance: q.provenance.clone(),
            })
        })
        .collect();
    write_jsonl(writer, &records)
}

/// Reads `query_id<TAB>text` lines back into sparse expansions.
pub fn read_expanded_tsv<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<ExpandedQuery>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GolferError::parse(source_name, idx + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, text) = line
            .split_once('\t')
            .ok_or_else(|| GolferError::parse(source_name, idx + 1, "expected `query_id<TAB>text`"))?;
        out.push(ExpandedQuery {
            query_id: qid.to_string(),
            payload: ExpansionPayload::Sparse(text.to_string()),
            provenance: Vec::new(),
        });
    }
    Ok(out)
}

pub fn read_expanded_vecs<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<ExpandedQuery>> {
    Ok(read_jsonl::<ExpandedVecRecord, _>(reader, source_name)?
        .into_iter()
        .map(|(_, r)| r.into())
        .collect())
}

impl From<ExpandedVecRecord> for ExpandedQuery {
    fn from(r: ExpandedVecRecord) -> Self {
        ExpandedQuery {
            query_id: r.query_id,
            payload: ExpansionPayload::Dense(r.vec),
            provenance: r.provenance,
        }
    }
}
