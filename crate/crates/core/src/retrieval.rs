//! BM25 over an inverted index and exact inner-product search.
//!
//! BM25 uses `idf = ln((N - df + 0.5) / (df + 0.5) + 1)` and the classic
//! saturation `tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))`. Each
//! occurrence of a term in the query adds that term's weight once more, so
//! repeating the whole query r times multiplies every score by r.
//!
//! Rankings sort by descending score, ties by ascending doc id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{GolferError, Result};
use crate::io::{open, read_jsonl};
use crate::trace::{EmbeddingRecord, EmbeddingSet};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerConfig {
    pub stopwords: Vec<String>,
}

/// Lowercases, splits on anything that is not alphanumeric and drops empty
/// tokens and stopwords.
#[derive(Debug, Clone, Default)]
pub struct Analyzer {
    stopwords: HashSet<String>,
}

impl Analyzer {
    pub fn new(config: &AnalyzerConfig) -> Self {
        Analyzer {
            stopwords: config.stopwords.iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !self.stopwords.contains(*t))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Position of the document in doc-id order.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct SparseIndex {
    analyzer: Analyzer,
    params: Bm25Params,
    /// Sorted ascending; a doc's position here is its posting number.
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    postings: HashMap<String, Vec<Posting>>,
}

impl SparseIndex {
    pub fn build<I, S, T>(corpus: I, analyzer: Analyzer, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut docs: Vec<(String, Vec<String>)> = corpus
            .into_iter()
            .map(|(id, text)| (id.into(), analyzer.tokenize(text.as_ref())))
            .collect();
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(GolferError::validation(&w[0].0, "duplicate doc_id in corpus"));
        }

        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (n, (id, terms)) in docs.into_iter().enumerate() {
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &terms {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    doc: n as u32,
                    tf: count,
                });
            }
            doc_ids.push(id);
            doc_lengths.push(terms.len() as u32);
        }
        let avgdl = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(SparseIndex {
            analyzer,
            params,
            doc_ids,
            doc_lengths,
            avgdl,
            postings,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.position(doc_id).map(|n| self.doc_lengths[n])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(doc_id, tf)` postings of a term, in doc-id order.
    pub fn term_postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings(term)
            .iter()
            .map(|p| (self.doc_ids[p.doc as usize].as_str(), p.tf))
            .collect()
    }

    fn position(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.binary_search_by(|d| d.as_str().cmp(doc_id)).ok()
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Top-`k` documents matching at least one query term.
    pub fn search(&self, query_id: &str, query_text: &str, k: usize) -> RunResult {
        let mut qtf: BTreeMap<String, u32> = BTreeMap::new();
        for t in self.analyzer.tokenize(query_text) {
            *qtf.entry(t).or_default() += 1;
        }
        let Bm25Params { k1, b } = self.params;
        let mut scores = vec![0.0f64; self.doc_ids.len()];
        let mut matched = vec![false; self.doc_ids.len()];
        for (term, count) in &qtf {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for p in list {
                let n = p.doc as usize;
                let tf = p.tf as f64;
                let norm = 1.0 - b + b * self.doc_lengths[n] as f64 / self.avgdl;
                scores[n] += *count as f64 * idf * (tf * (k1 + 1.0) / (tf + k1 * norm));
                matched[n] = true;
            }
        }
        let hits = scores
            .into_iter()
            .zip(matched)
            .enumerate()
            .filter(|(_, (_, m))| *m)
            .map(|(n, (score, _))| (n, score));
        RunResult::from_candidates(query_id, hits, k, |n| &self.doc_ids[n])
    }
}

/// Corpus embeddings in doc-id order, one row per document.
#[derive(Debug, Clone)]
pub struct DenseStore {
    dim: usize,
    doc_ids: Vec<String>,
    matrix: Vec<f64>,
}

impl DenseStore {
    pub fn build<'a>(records: impl IntoIterator<Item = &'a EmbeddingRecord>) -> Result<Self> {
        let mut rows: Vec<&EmbeddingRecord> = records.into_iter().collect();
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = rows.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(GolferError::validation(&w[0].id, "duplicate doc_id in dense store"));
        }
        let dim = rows.first().map(|r| r.dim()).unwrap_or(0);
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.dim() != dim {
                return Err(GolferError::Dimension {
                    id: r.id.clone(),
                    expected: dim,
                    found: r.dim(),
                });
            }
            if r.vector.iter().any(|x| !x.is_finite()) {
                return Err(GolferError::validation(&r.id, "non-finite embedding entry"));
            }
            matrix.extend_from_slice(&r.vector);
        }
        Ok(DenseStore {
            dim,
            doc_ids: rows.into_iter().map(|r| r.id.clone()).collect(),
            matrix,
        })
    }

    pub fn from_set(set: &EmbeddingSet) -> Result<Self> {
        Self::build(set.iter())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Exact top-`k` by inner product over every stored document.
    pub fn search(&self, query_id: &str, vector: &[f64], k: usize) -> Result<RunResult> {
        if self.doc_ids.is_empty() {
            return Ok(RunResult::empty(query_id));
        }
        if vector.len() != self.dim {
            return Err(GolferError::Dimension {
                id: query_id.to_string(),
                expected: self.dim,
                found: vector.len(),
            });
        }
        let scores = self
            .matrix
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(vector).map(|(a, b)| a * b).sum::<f64>())
            .enumerate();
        Ok(RunResult::from_candidates(query_id, scores, k, |n| &self.doc_ids[n]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

/// Ranked documents for one query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

impl RunResult {
    pub fn empty(query_id: &str) -> Self {
        RunResult {
            query_id: query_id.to_string(),
            hits: Vec::new(),
        }
    }

    fn from_candidates<'a>(
        query_id: &str,
        candidates: impl Iterator<Item = (usize, f64)>,
        k: usize,
        name: impl Fn(usize) -> &'a str,
    ) -> RunResult {
        let mut all: Vec<(usize, f64)> = candidates.collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| rank_order((name(a.0), a.1), (name(b.0), b.1));
        if k < all.len() {
            if k == 0 {
                all.clear();
            } else {
                all.select_nth_unstable_by(k - 1, cmp);
                all.truncate(k);
            }
        }
        all.sort_by(cmp);
        RunResult {
            query_id: query_id.to_string(),
            hits: all
                .into_iter()
                .map(|(n, score)| Hit {
                    doc_id: name(n).to_string(),
                    score,
                })
                .collect(),
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.doc_id.as_str())
    }
}

/// Writes `qid Q0 docid rank score tag` lines, ranks starting at 1.
pub fn write_trec_run<'a, W: Write>(
    mut writer: W,
    runs: impl IntoIterator<Item = &'a RunResult>,
    tag: &str,
) -> std::io::Result<()> {
    for run in runs {
        for (i, hit) in run.hits.iter().enumerate() {
            writeln!(writer, "{} Q0 {} {} {} {}", run.query_id, hit.doc_id, i + 1, hit.score, tag)?;
        }
    }
    writer.flush()
}

pub fn read_trec_run<R: BufRead>(reader: R, source_name: &str) -> Result<IndexMap<String, RunResult>> {
    let mut rows: IndexMap<String, Vec<(usize, Hit)>> = IndexMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| GolferError::parse(source_name, lineno, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(GolferError::parse(source_name, lineno, "expected `qid Q0 docid rank score tag`"));
        }
        let rank: usize = fields[3]
            .parse()
            .map_err(|e| GolferError::parse(source_name, lineno, format!("rank: {e}")))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|e| GolferError::parse(source_name, lineno, format!("score: {e}")))?;
        rows.entry(fields[0].to_string()).or_default().push((
            rank,
            Hit {
                doc_id: fields[2].to_string(),
                score,
            },
        ));
    }
    let mut out = IndexMap::with_capacity(rows.len());
    for (qid, mut hits) in rows {
        hits.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
        let mut seen = HashSet::new();
        for (_, h) in &hits {
            if !seen.insert(h.doc_id.as_str()) {
                return Err(GolferError::validation(
                    format!("{qid}/{}", h.doc_id),
                    "document listed twice in run",
                ));
            }
        }
        let run = RunResult {
            query_id: qid.clone(),
            hits: hits.into_iter().map(|(_, h)| h).collect(),
        };
        out.insert(qid, run);
    }
    Ok(out)
}

pub fn load_trec_run(path: &Path) -> Result<IndexMap<String, RunResult>> {
    read_trec_run(open(path)?, &path.display().to_string())
}

/// One line of `corpus.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub doc_id: String,
    pub text: String,
}

pub fn read_corpus<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<CorpusDoc>> {
    Ok(read_jsonl::<CorpusDoc, _>(reader, source_name)?
        .into_iter()
        .map(|(_, d)| d)
        .collect())
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusDoc>> {
    read_corpus(open(path)?, &path.display().to_string())
}
