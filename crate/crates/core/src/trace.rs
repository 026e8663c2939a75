//! Input records and their loaders.
//!
//! Every file handled here is line oriented: `traces.jsonl`, `nli.jsonl`,
//! `embeddings.jsonl` hold one JSON object per line and `queries.tsv` holds
//! `query_id<TAB>text`. Loaders validate every record invariant before
//! returning, so downstream stages never re-check them. Loaded values are
//! immutable and can be shared across worker threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{GolferError, Result};
use crate::filter::token_entropy;
use crate::io::{open, read_jsonl, write_jsonl};

/// Tolerance on the total mass of a token distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub text: String,
    /// Probability the generator assigned to this token when sampling it.
    pub prob: f64,
    /// Entropy in nats of the full-vocabulary distribution, when precomputed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    /// Truncated `(token_id, probability)` distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<Vec<(u64, f64)>>,
}

impl TokenRecord {
    /// Token entropy in nats. A precomputed scalar wins over the distribution.
    pub fn resolved_entropy(&self) -> Result<f64> {
        match (&self.entropy, &self.dist) {
            (Some(h), _) => Ok(*h),
            (None, Some(dist)) => token_entropy(dist),
            (None, None) => Err(GolferError::validation(
                &self.text,
                "token carries neither `entropy` nor `dist`",
            )),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.prob > 0.0 && self.prob <= 1.0) {
            return Err(format!("token `{}`: prob {} not in (0,1]", self.text, self.prob));
        }
        if let Some(h) = self.entropy {
            if !(h.is_finite() && h >= 0.0) {
                return Err(format!("token `{}`: entropy {} must be finite and >= 0", self.text, h));
            }
        }
        match &self.dist {
            Some(dist) => {
                if let Some((id, p)) = dist.iter().find(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
                    return Err(format!("token `{}`: dist entry {id} has probability {p}", self.text));
                }
                let total: f64 = dist.iter().map(|(_, p)| p).sum();
                if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
                    return Err(format!("token `{}`: dist sums to {total}, not 1", self.text));
                }
            }
            None if self.entropy.is_none() => {
                return Err(format!("token `{}`: needs `entropy` or `dist`", self.text));
            }
            None => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub text: String,
    pub tokens: Vec<TokenRecord>,
    /// `attn[l][v]` is the attention between token `l` and a later token `v`.
    /// Only `v > l` is defined; the diagonal and below are `null`.
    pub attn: Vec<Vec<Option<f64>>>,
}

impl SentenceRecord {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    /// Attention entry for `l < v` (0-based); `None` outside the upper triangle.
    pub fn attention(&self, l: usize, v: usize) -> Option<f64> {
        self.attn.get(l).and_then(|row| row.get(v)).copied().flatten()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let o = self.tokens.len();
        if o == 0 {
            return Err("sentence has no tokens".into());
        }
        if self.attn.len() != o {
            return Err(format!("attention has {} rows for {o} tokens", self.attn.len()));
        }
        for (l, row) in self.attn.iter().enumerate() {
            if row.len() != o {
                return Err(format!("attention row {l} has {} columns for {o} tokens", row.len()));
            }
            for (v, entry) in row.iter().enumerate() {
                match (v > l, entry) {
                    (true, Some(a)) if (0.0..=1.0).contains(a) => {}
                    (true, Some(a)) => {
                        return Err(format!("attention ({l},{v}) = {a} not in [0,1]"));
                    }
                    (true, None) => return Err(format!("attention ({l},{v}) missing")),
                    (false, Some(_)) => {
                        return Err(format!("attention ({l},{v}) must be null (v <= l)"));
                    }
                    (false, None) => {}
                }
            }
        }
        for token in &self.tokens {
            token.validate()?;
        }
        if !detokenizes_to(&self.tokens, &self.text) {
            return Err("token texts do not concatenate to the sentence text".into());
        }
        Ok(())
    }
}

/// Token surface forms concatenate to the sentence text once all whitespace
/// is removed from both sides. This accepts tokenizers that carry leading
/// spaces on tokens as well as ones that drop them.
pub fn detokenizes_to(tokens: &[TokenRecord], text: &str) -> bool {
    let joined = tokens
        .iter()
        .flat_map(|t| t.text.chars())
        .filter(|c| !c.is_whitespace());
    joined.eq(text.chars().filter(|c| !c.is_whitespace()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub query_id: String,
    pub doc_id: String,
    pub sentences: Vec<SentenceRecord>,
}

impl GenerationTrace {
    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(GolferError::validation(&self.doc_id, "trace has no sentences"));
        }
        for (j, s) in self.sentences.iter().enumerate() {
            s.validate()
                .map_err(|rule| GolferError::validation(&self.doc_id, format!("sentence {j}: {rule}")))?;
        }
        Ok(())
    }

    /// Full document text, sentences joined by single spaces.
    pub fn text(&self) -> String {
        join_sentences(self.sentences.iter().map(|s| s.text.as_str()))
    }
}

pub(crate) fn join_sentences<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    parts.collect::<Vec<_>>().join(" ")
}

/// Traces grouped by query. Query order and per-query trace order follow
/// the file; the position of a trace in its group is its document index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceBundle {
    groups: IndexMap<String, Vec<GenerationTrace>>,
}

impl TraceBundle {
    pub fn from_traces(traces: impl IntoIterator<Item = GenerationTrace>) -> Result<Self> {
        let mut bundle = TraceBundle::default();
        for trace in traces {
            bundle.push(trace)?;
        }
        Ok(bundle)
    }

    fn push(&mut self, trace: GenerationTrace) -> Result<()> {
        trace.validate()?;
        let group = self.groups.entry(trace.query_id.clone()).or_default();
        if group.iter().any(|t| t.doc_id == trace.doc_id) {
            return Err(GolferError::validation(
                &trace.doc_id,
                format!("duplicate doc_id within query `{}`", trace.query_id),
            ));
        }
        group.push(trace);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn get(&self, query_id: &str) -> Option<&[GenerationTrace]> {
        self.groups.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[GenerationTrace])> {
        self.groups.iter().map(|(q, t)| (q.as_str(), t.as_slice()))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn write<W: Write>(&self, writer: W) -> std::io::Result<()> {
        write_jsonl(writer, self.groups.values().flatten())
    }
}

pub fn load_trace_bundle(path: &Path) -> Result<TraceBundle> {
    read_trace_bundle(open(path)?, &path.display().to_string())
}

pub fn read_trace_bundle<R: BufRead>(reader: R, source_name: &str) -> Result<TraceBundle> {
    let mut bundle = TraceBundle::default();
    for (line, trace) in read_jsonl::<GenerationTrace, _>(reader, source_name)? {
        bundle.push(trace).map_err(|e| e.at(source_name, line))?;
    }
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceKey {
    pub doc_id: String,
    /// 0-based position of the sentence within its trace.
    pub sent_idx: usize,
}

impl SentenceKey {
    pub fn new(doc_id: impl Into<String>, sent_idx: usize) -> Self {
        SentenceKey {
            doc_id: doc_id.into(),
            sent_idx,
        }
    }
}

impl std::fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.sent_idx)
    }
}

/// One line of `nli.jsonl`. `query_id` is optional and only needed when the
/// same doc id appears under several queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliPairLogits {
    pub doc_id: String,
    pub sent_idx: usize,
    pub other_doc_id: String,
    pub logit_entail: f64,
    pub logit_contra: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
}

impl NliPairLogits {
    pub fn key(&self) -> SentenceKey {
        SentenceKey::new(&self.doc_id, self.sent_idx)
    }
}

/// Pair logits of one query, keyed by sentence.
pub type QueryNli = HashMap<SentenceKey, Vec<NliPairLogits>>;

/// Pair logits for a whole trace bundle.
#[derive(Debug, Clone, Default)]
pub struct NliLogits {
    by_query: BTreeMap<String, QueryNli>,
}

impl NliLogits {
    pub fn for_query(&self, query_id: &str) -> Option<&QueryNli> {
        self.by_query.get(query_id)
    }

    pub fn pairs(&self, query_id: &str, key: &SentenceKey) -> &[NliPairLogits] {
        self.by_query
            .get(query_id)
            .and_then(|q| q.get(key))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Validates `records` against `bundle` and requires, for every sentence
    /// of an n-trace query, exactly one record per other document.
    pub fn from_records(records: Vec<NliPairLogits>, bundle: &TraceBundle) -> Result<Self> {
        let mut doc_queries: HashMap<&str, Vec<&str>> = HashMap::new();
        for (qid, traces) in bundle.iter() {
            for t in traces {
                doc_queries.entry(t.doc_id.as_str()).or_default().push(qid);
            }
        }

        let mut by_query: BTreeMap<String, QueryNli> = BTreeMap::new();
        let mut seen: HashSet<(String, SentenceKey, String)> = HashSet::new();
        for rec in records {
            let subject = format!("{}#{} vs {}", rec.doc_id, rec.sent_idx, rec.other_doc_id);
            if rec.other_doc_id == rec.doc_id {
                return Err(GolferError::validation(subject, "other_doc_id equals doc_id"));
            }
            if !rec.logit_entail.is_finite() || !rec.logit_contra.is_finite() {
                return Err(GolferError::validation(subject, "non-finite logit"));
            }
            let qid = match &rec.query_id {
                Some(q) => q.clone(),
                None => match doc_queries.get(rec.doc_id.as_str()).map(Vec::as_slice) {
                    Some([only]) => (*only).to_string(),
                    Some(_) => {
                        return Err(GolferError::validation(
                            subject,
                            "doc_id appears under several queries; record needs query_id",
                        ))
                    }
                    None => return Err(GolferError::validation(subject, "unknown doc_id")),
                },
            };
            let traces = bundle
                .get(&qid)
                .ok_or_else(|| GolferError::validation(&subject, format!("unknown query `{qid}`")))?;
            let own = traces
                .iter()
                .find(|t| t.doc_id == rec.doc_id)
                .ok_or_else(|| GolferError::validation(&subject, "unknown doc_id for query"))?;
            if rec.sent_idx >= own.sentences.len() {
                return Err(GolferError::validation(
                    subject,
                    format!("sent_idx out of range ({} sentences)", own.sentences.len()),
                ));
            }
            if !traces.iter().any(|t| t.doc_id == rec.other_doc_id) {
                return Err(GolferError::validation(subject, "other_doc_id not in the same query"));
            }
            if !seen.insert((qid.clone(), rec.key(), rec.other_doc_id.clone())) {
                return Err(GolferError::validation(subject, "duplicate pair record"));
            }
            by_query.entry(qid).or_default().entry(rec.key()).or_default().push(rec);
        }

        let mut missing = Vec::new();
        for (qid, traces) in bundle.iter() {
            for t in traces {
                for j in 0..t.sentences.len() {
                    let key = SentenceKey::new(&t.doc_id, j);
                    for other in traces.iter().filter(|o| o.doc_id != t.doc_id) {
                        if !seen.contains(&(qid.to_string(), key.clone(), other.doc_id.clone())) {
                            missing.push(format!("{qid}/{key} vs {}", other.doc_id));
                        }
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(GolferError::Completeness { missing });
        }
        Ok(NliLogits { by_query })
    }
}

pub fn load_nli_logits(path: &Path, bundle: &TraceBundle) -> Result<NliLogits> {
    read_nli_logits(open(path)?, &path.display().to_string(), bundle)
}

pub fn read_nli_logits<R: BufRead>(
    reader: R,
    source_name: &str,
    bundle: &TraceBundle,
) -> Result<NliLogits> {
    let records = read_jsonl::<NliPairLogits, _>(reader, source_name)?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    NliLogits::from_records(records, bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    #[serde(rename = "vec")]
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Self {
        EmbeddingRecord {
            id: id.into(),
            vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Embeddings sharing one dimension, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingSet {
    dim: Option<usize>,
    records: IndexMap<String, EmbeddingRecord>,
}

impl EmbeddingSet {
    pub fn insert(&mut self, record: EmbeddingRecord) -> Result<()> {
        if let Some(bad) = record.vector.iter().find(|x| !x.is_finite()) {
            return Err(GolferError::validation(&record.id, format!("non-finite entry {bad}")));
        }
        match self.dim {
            Some(d) if d != record.dim() => {
                return Err(GolferError::Dimension {
                    id: record.id,
                    expected: d,
                    found: record.vector.len(),
                })
            }
            _ => self.dim = Some(record.dim()),
        }
        if self.records.contains_key(&record.id) {
            return Err(GolferError::validation(&record.id, "duplicate embedding id"));
        }
        self.records.insert(record.id.clone(), record);
        Ok(())
    }

    /// Shared dimension; `None` for an empty set.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.records.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingRecord> {
        self.records.values()
    }

    pub fn write<W: Write>(&self, writer: W) -> std::io::Result<()> {
        write_jsonl(writer, self.records.values())
    }
}

impl FromIterator<EmbeddingRecord> for Result<EmbeddingSet> {
    fn from_iter<I: IntoIterator<Item = EmbeddingRecord>>(iter: I) -> Self {
        let mut set = EmbeddingSet::default();
        for r in iter {
            set.insert(r)?;
        }
        Ok(set)
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    read_embeddings(open(path)?, &path.display().to_string())
}

pub fn read_embeddings<R: BufRead>(reader: R, source_name: &str) -> Result<EmbeddingSet> {
    let mut set = EmbeddingSet::default();
    for (line, record) in read_jsonl::<EmbeddingRecord, _>(reader, source_name)? {
        set.insert(record).map_err(|e| e.at(source_name, line))?;
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

impl QueryRecord {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        QueryRecord {
            query_id: query_id.into(),
            text: text.into(),
        }
    }
}

pub fn load_queries(path: &Path) -> Result<IndexMap<String, QueryRecord>> {
    read_queries(open(path)?, &path.display().to_string())
}

pub fn read_queries<R: BufRead>(reader: R, source_name: &str) -> Result<IndexMap<String, QueryRecord>> {
    let mut out = IndexMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| GolferError::parse(source_name, lineno, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, text) = line
            .split_once('\t')
            .ok_or_else(|| GolferError::parse(source_name, lineno, "expected `query_id<TAB>text`"))?;
        if text.trim().is_empty() {
            return Err(GolferError::validation(qid, "empty query text").at(source_name, lineno));
        }
        if out.contains_key(qid) {
            return Err(GolferError::validation(qid, "duplicate query_id").at(source_name, lineno));
        }
        out.insert(qid.to_string(), QueryRecord::new(qid, text));
    }
    Ok(out)
}

pub fn write_queries<'a, W: Write>(
    mut writer: W,
    queries: impl IntoIterator<Item = &'a QueryRecord>,
) -> std::io::Result<()> {
    for q in queries {
        writeln!(writer, "{}\t{}", q.query_id, crate::io::tsv_field(&q.text))?;
    }
    writer.flush()
}
