//! TREC-style effectiveness metrics.
//!
//! nDCG uses gain `2^grade - 1` and discount `1 / log2(rank + 1)`. MAP, MRR
//! and recall binarize grades at the qrels' relevance cutoff (default 1;
//! TREC DL passage judgments conventionally use 2).
//!
//! A query is scored on a metric only when the metric is defined for it
//! (it has at least one relevant document). Queries judged in the qrels but
//! missing from the run are scored against an empty ranking.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GolferError, Result};
use crate::io::open;
use crate::retrieval::RunResult;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qrels {
    judgments: BTreeMap<String, HashMap<String, u32>>,
    relevance_cutoff: u32,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels {
            judgments: BTreeMap::new(),
            relevance_cutoff: 1,
        }
    }

    pub fn with_cutoff(mut self, cutoff: u32) -> Self {
        self.relevance_cutoff = cutoff.max(1);
        self
    }

    pub fn relevance_cutoff(&self) -> u32 {
        self.relevance_cutoff
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.judgments.contains_key(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|j| j.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_relevant(&self, query_id: &str, doc_id: &str) -> bool {
        self.grade(query_id, doc_id) >= self.relevance_cutoff
    }

    pub fn num_relevant(&self, query_id: &str) -> usize {
        self.judgments
            .get(query_id)
            .map(|j| j.values().filter(|&&g| g >= self.relevance_cutoff).count())
            .unwrap_or(0)
    }

    fn grades(&self, query_id: &str) -> Vec<u32> {
        self.judgments
            .get(query_id)
            .map(|j| j.values().copied().collect())
            .unwrap_or_default()
    }
}

/// Parses `qid 0 docid grade` lines.
pub fn read_qrels<R: BufRead>(reader: R, source_name: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| GolferError::parse(source_name, lineno, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(GolferError::parse(source_name, lineno, "expected `qid 0 docid grade`"));
        }
        let grade: i64 = fields[3]
            .parse()
            .map_err(|e| GolferError::parse(source_name, lineno, format!("grade: {e}")))?;
        if grade < 0 {
            return Err(GolferError::validation(
                format!("{}/{}", fields[0], fields[2]),
                format!("negative relevance grade {grade}"),
            ));
        }
        qrels.insert(fields[0], fields[2], grade as u32);
    }
    Ok(qrels)
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    read_qrels(open(path)?, &path.display().to_string())
}

fn gain(grade: u32) -> f64 {
    (grade as f64).exp2() - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// `None` when the query has no document with a positive grade.
pub fn ndcg_at_k(run: &RunResult, qrels: &Qrels, k: usize) -> Option<f64> {
    let qid = run.query_id.as_str();
    let mut ideal = qrels.grades(qid);
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) * discount(i + 1))
        .sum();
    if idcg <= 0.0 {
        return None;
    }
    let dcg: f64 = run
        .doc_ids()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(qrels.grade(qid, d)) * discount(i + 1))
        .sum();
    Some(dcg / idcg)
}

/// Reciprocal rank of the first relevant document within the top `k`.
pub fn mrr_at_k(run: &RunResult, qrels: &Qrels, k: usize) -> Option<f64> {
    let qid = run.query_id.as_str();
    if qrels.num_relevant(qid) == 0 {
        return None;
    }
    Some(
        run.doc_ids()
            .take(k)
            .position(|d| qrels.is_relevant(qid, d))
            .map(|i| 1.0 / (i + 1) as f64)
            .unwrap_or(0.0),
    )
}

pub fn recall_at_k(run: &RunResult, qrels: &Qrels, k: usize) -> Option<f64> {
    let qid = run.query_id.as_str();
    let total = qrels.num_relevant(qid);
    if total == 0 {
        return None;
    }
    let found = run.doc_ids().take(k).filter(|d| qrels.is_relevant(qid, d)).count();
    Some(found as f64 / total as f64)
}

/// Average precision over the full run depth.
pub fn map_metric(run: &RunResult, qrels: &Qrels) -> Option<f64> {
    let qid = run.query_id.as_str();
    let total = qrels.num_relevant(qid);
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in run.doc_ids().enumerate() {
        if qrels.is_relevant(qid, d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Map,
    Ndcg(usize),
    Mrr(usize),
    Recall(usize),
}

impl Metric {
    pub fn compute(&self, run: &RunResult, qrels: &Qrels) -> Option<f64> {
        match *self {
            Metric::Map => map_metric(run, qrels),
            Metric::Ndcg(k) => ndcg_at_k(run, qrels, k),
            Metric::Mrr(k) => mrr_at_k(run, qrels, k),
            Metric::Recall(k) => recall_at_k(run, qrels, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Map => write!(f, "map"),
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Mrr(k) => write!(f, "mrr@{k}"),
            Metric::Recall(k) => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = GolferError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "map" {
            return Ok(Metric::Map);
        }
        let (name, k) = s
            .split_once('@')
            .ok_or_else(|| GolferError::Config(format!("unknown metric `{s}`")))?;
        let k: usize = match k {
            "1k" => 1000,
            other => other
                .parse()
                .map_err(|_| GolferError::Config(format!("bad cutoff in metric `{s}`")))?,
        };
        if k == 0 {
            return Err(GolferError::Config(format!("metric `{s}` needs k >= 1")));
        }
        match name {
            "ndcg" => Ok(Metric::Ndcg(k)),
            "mrr" => Ok(Metric::Mrr(k)),
            "recall" | "r" => Ok(Metric::Recall(k)),
            _ => Err(GolferError::Config(format!("unknown metric `{s}`"))),
        }
    }
}

pub fn parse_metrics(list: &str) -> Result<Vec<Metric>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub evaluated: usize,
    pub per_query: BTreeMap<String, f64>,
    /// Judged queries for which the metric is undefined.
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricSummary>,
    /// Run queries without any judgments.
    pub skipped: Vec<String>,
}

impl MetricReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).map(|m| m.mean)
    }

    /// `metric<TAB>query_id<TAB>value` per query, then an `all` row.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for m in &self.metrics {
            for (qid, v) in &m.per_query {
                writeln!(w, "{}\t{}\t{:.6}", m.metric, qid, v)?;
            }
            writeln!(w, "{}\tall\t{:.6}", m.metric, m.mean)?;
        }
        w.flush()
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()
    }
}

pub fn evaluate<'a>(
    runs: impl IntoIterator<Item = &'a RunResult>,
    qrels: &Qrels,
    metrics: &[Metric],
) -> MetricReport {
    let mut by_query: BTreeMap<&str, &RunResult> = BTreeMap::new();
    let mut skipped = BTreeSet::new();
    for run in runs {
        if qrels.contains_query(&run.query_id) {
            by_query.insert(&run.query_id, run);
        } else {
            skipped.insert(run.query_id.clone());
        }
    }
    let empties: Vec<RunResult> = qrels
        .query_ids()
        .filter(|q| !by_query.contains_key(q))
        .map(RunResult::empty)
        .collect();
    for e in &empties {
        by_query.insert(&e.query_id, e);
    }

    let summaries = metrics
        .iter()
        .map(|metric| {
            let mut per_query = BTreeMap::new();
            let mut undefined = Vec::new();
            for (qid, run) in &by_query {
                match metric.compute(run, qrels) {
                    Some(v) => {
                        per_query.insert(qid.to_string(), v);
                    }
                    None => undefined.push(qid.to_string()),
                }
            }
            let evaluated = per_query.len();
            let mean = if evaluated == 0 {
                0.0
            } else {
                per_query.values().sum::<f64>() / evaluated as f64
            };
            MetricSummary {
                metric: metric.to_string(),
                mean,
                evaluated,
                per_query,
                undefined,
            }
        })
        .collect();
    MetricReport {
        metrics: summaries,
        skipped: skipped.into_iter().collect(),
    }
}
