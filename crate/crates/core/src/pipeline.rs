//! End-to-end runs: load → filter → combine → retrieve → evaluate.
//!
//! Ablations:
//!
//! | ablation        | filter | sparse expansion            | dense weights            |
//! |-----------------|--------|-----------------------------|--------------------------|
//! | `full`          | yes    | query × repetition + docs   | generation confidence    |
//! | `filter-only`   | yes    | query once + docs           | uniform                  |
//! | `combiner-only` | no     | query × repetition + docs   | generation confidence    |
//! | `baseline`      | no     | bare query                  | bare query vector        |
//!
//! `filter-only` still has to form a query somehow, so it uses the plainest
//! combination: concatenation without query repetition for sparse, equal
//! document weights (beta unchanged) for dense.
//!
//! Queries are processed on a worker pool; every artifact is written in
//! ascending query-id order so identical inputs give identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combiner::{
    combine_dense, combine_sparse, generation_confidence, read_expanded_tsv, read_expanded_vecs, write_expanded_tsv,
    write_expanded_vecs,
    CombinerConfig, DocText, DocumentConfidence, ExpandedQuery, ExpansionPayload,
};
use crate::embedding::{build_embedder, Backend, BatchFileEmbedder, Embedder, EmbeddingRequest, ProviderConfig};
use crate::error::{GolferError, Result};
use crate::eval::{evaluate, load_qrels, parse_metrics, Metric, MetricReport};
use crate::filter::{apply_filter, reports_from_records, FilterConfig, FilterReport};
use crate::io::{file_sha256, open, read_jsonl, sha256_hex, write_file, write_jsonl};
use crate::retrieval::{
    load_corpus, write_trec_run, Analyzer, AnalyzerConfig, Bm25Params, CorpusDoc, DenseStore, RunResult,
    SparseIndex,
};
use crate::trace::{
    load_embeddings, load_nli_logits, load_queries, load_trace_bundle, EmbeddingRecord, NliLogits,
    QueryRecord, TraceBundle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    FilterOnly,
    CombinerOnly,
    Baseline,
}

impl Ablation {
    pub fn filters(self) -> bool {
        matches!(self, Ablation::Full | Ablation::FilterOnly)
    }

    pub fn expands(self) -> bool {
        self != Ablation::Baseline
    }
}

impl std::str::FromStr for Ablation {
    type Err = GolferError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "filter-only" => Ok(Ablation::FilterOnly),
            "combiner-only" => Ok(Ablation::CombinerOnly),
            "baseline" => Ok(Ablation::Baseline),
            other => Err(GolferError::Config(format!("unknown ablation `{other}`"))),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = GolferError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Mode::Sparse),
            "dense" => Ok(Mode::Dense),
            other => Err(GolferError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub queries: PathBuf,
    pub traces: PathBuf,
    pub nli: Option<PathBuf>,
    /// `corpus.jsonl`; required for sparse mode, embedded on the fly in
    /// dense mode when `corpus_embeddings` is absent.
    pub corpus: Option<PathBuf>,
    /// Precomputed corpus vectors keyed by doc id.
    pub corpus_embeddings: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub relevance_cutoff: u32,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { relevance_cutoff: 1 }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_depth() -> usize {
    1000
}

fn default_metrics() -> Vec<String> {
    ["map", "ndcg@10", "mrr@10", "recall@1000"].map(String::from).to_vec()
}

fn default_tag() -> String {
    "golfer".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Ranking depth written to the run file.
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    pub output_dir: PathBuf,
    #[serde(default = "default_tag")]
    pub run_tag: String,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    pub inputs: InputPaths,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub combiner: CombinerConfig,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub analyzer: AnalyzerConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub evaluation: EvalSettings,
    /// Directory relative paths resolve against (the config file's own).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| GolferError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GolferError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn metric_list(&self) -> Result<Vec<Metric>> {
        parse_metrics(&self.metrics.join(","))
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.combiner.validate()?;
        self.metric_list()?;
        if self.depth == 0 {
            return Err(GolferError::Config("depth must be >= 1".into()));
        }
        if self.ablation.filters() && self.inputs.nli.is_none() {
            return Err(GolferError::Config(format!(
                "ablation {:?} filters sentences and needs `inputs.nli`",
                self.ablation
            )));
        }
        match self.mode {
            Mode::Sparse if self.inputs.corpus.is_none() => {
                Err(GolferError::Config("sparse mode needs `inputs.corpus`".into()))
            }
            Mode::Dense if self.inputs.corpus.is_none() && self.inputs.corpus_embeddings.is_none() => Err(
                GolferError::Config("dense mode needs `inputs.corpus_embeddings` or `inputs.corpus`".into()),
            ),
            Mode::Dense => self.provider.validate(),
            Mode::Sparse => Ok(()),
        }
    }

    /// Hash of the effective configuration, stable across runs.
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| GolferError::Config(format!("worker pool: {e}")))
    }
}

/// Runs the filter over every query that has traces. Queries are returned
/// in ascending id order. Without filtering every sentence passes through.
pub fn filter_stage(
    bundle: &TraceBundle,
    nli: Option<&NliLogits>,
    ablation: Ablation,
    config: &FilterConfig,
) -> Result<BTreeMap<String, FilterReport>> {
    if !ablation.expands() {
        return Ok(BTreeMap::new());
    }
    let groups: Vec<(&str, &[_])> = bundle.iter().collect();
    let reports: Vec<FilterReport> = groups
        .par_iter()
        .map(|(qid, traces)| {
            if ablation.filters() {
                let empty = Default::default();
                let nli = nli
                    .ok_or_else(|| GolferError::Config("filtering needs NLI logits".into()))?
                    .for_query(qid)
                    .unwrap_or(&empty);
                apply_filter(qid, traces, nli, config)
            } else {
                Ok(FilterReport::passthrough(qid, traces))
            }
        })
        .collect::<Result<_>>()?;
    Ok(reports.into_iter().map(|r| (r.query_id.clone(), r)).collect())
}

fn surviving_docs(report: Option<&FilterReport>) -> impl Iterator<Item = &crate::filter::DocFilterResult> {
    report
        .into_iter()
        .flat_map(|r| r.docs.iter())
        .filter(|d| !d.all_dropped())
}

fn query_request_id(qid: &str) -> String {
    format!("q::{qid}")
}

fn doc_request_id(qid: &str, doc_id: &str) -> String {
    format!("d::{qid}::{doc_id}")
}

/// Builds one expanded query per query record, in the order given.
pub fn combine_stage(
    queries: &[&QueryRecord],
    reports: &BTreeMap<String, FilterReport>,
    mode: Mode,
    ablation: Ablation,
    config: &CombinerConfig,
    embedder: Option<&dyn Embedder>,
) -> Result<Vec<ExpandedQuery>> {
    config.validate()?;
    let report_of = |q: &QueryRecord| if ablation.expands() { reports.get(&q.query_id) } else { None };
    match mode {
        Mode::Sparse => {
            let cfg = match ablation {
                Ablation::FilterOnly => CombinerConfig {
                    query_repetition: 1,
                    ..*config
                },
                _ => *config,
            };
            Ok(queries
                .par_iter()
                .map(|q| {
                    let docs: Vec<DocText> = surviving_docs(report_of(q))
                        .map(|d| DocText {
                            doc_id: &d.doc_id,
                            text: &d.filtered_text,
                        })
                        .collect();
                    if ablation.expands() {
                        combine_sparse(q, &docs, &cfg)
                    } else {
                        ExpandedQuery {
                            query_id: q.query_id.clone(),
                            payload: ExpansionPayload::Sparse(q.text.clone()),
                            provenance: Vec::new(),
                        }
                    }
                })
                .collect())
        }
        Mode::Dense => {
            let embedder = embedder.ok_or_else(|| GolferError::Config("dense mode needs an embedder".into()))?;
            let mut requests = Vec::new();
            for q in queries {
                requests.push(EmbeddingRequest::new(query_request_id(&q.query_id), &q.text));
                for d in surviving_docs(report_of(q)) {
                    requests.push(EmbeddingRequest::new(doc_request_id(&q.query_id, &d.doc_id), &d.filtered_text));
                }
            }
            let vectors = embedder.embed_batch(&requests)?;
            let lookup = |id: &str| {
                vectors
                    .get(id)
                    .ok_or_else(|| GolferError::MissingEmbeddings { ids: vec![id.to_string()] })
            };
            queries
                .par_iter()
                .map(|q| {
                    let qvec = lookup(&query_request_id(&q.query_id))?;
                    let mut docs = Vec::new();
                    let mut confidences = Vec::new();
                    for d in surviving_docs(report_of(q)) {
                        let confidence = match ablation {
                            Ablation::FilterOnly => Some(DocumentConfidence {
                                doc_id: d.doc_id.clone(),
                                confidence: 1.0,
                            }),
                            _ => generation_confidence(d),
                        };
                        let Some(confidence) = confidence else { continue };
                        let v = lookup(&doc_request_id(&q.query_id, &d.doc_id))?;
                        docs.push(EmbeddingRecord::new(&d.doc_id, v.vector.clone()));
                        confidences.push(confidence);
                    }
                    combine_dense(&q.query_id, qvec, &docs, &confidences, config)
                })
                .collect()
        }
    }
}

pub enum Retriever {
    Sparse(SparseIndex),
    Dense(DenseStore),
}

impl Retriever {
    pub fn search(&self, query: &ExpandedQuery, depth: usize) -> Result<RunResult> {
        match (self, &query.payload) {
            (Retriever::Sparse(index), ExpansionPayload::Sparse(text)) => Ok(index.search(&query.query_id, text, depth)),
            (Retriever::Dense(store), ExpansionPayload::Dense(v)) => store.search(&query.query_id, v, depth),
            _ => Err(GolferError::validation(
                &query.query_id,
                "expanded query kind does not match the retriever",
            )),
        }
    }
}

pub fn search_stage(retriever: &Retriever, expanded: &[ExpandedQuery], depth: usize) -> Result<Vec<RunResult>> {
    expanded.par_iter().map(|q| retriever.search(q, depth)).collect()
}

pub fn build_sparse_retriever(corpus: &[CorpusDoc], config: &PipelineConfig) -> Result<Retriever> {
    let index = SparseIndex::build(
        corpus.iter().map(|d| (d.doc_id.as_str(), d.text.as_str())),
        Analyzer::new(&config.analyzer),
        config.bm25,
    )?;
    Ok(Retriever::Sparse(index))
}

/// Dense store from precomputed vectors, or by embedding the corpus texts.
pub fn build_dense_retriever(config: &PipelineConfig, embedder: &dyn Embedder) -> Result<Retriever> {
    if let Some(path) = &config.inputs.corpus_embeddings {
        let set = load_embeddings(&config.resolve(path))?;
        return Ok(Retriever::Dense(DenseStore::from_set(&set)?));
    }
    let path = config
        .inputs
        .corpus
        .as_ref()
        .ok_or_else(|| GolferError::Config("dense mode needs a corpus".into()))?;
    let corpus = load_corpus(&config.resolve(path))?;
    let requests: Vec<_> = corpus.iter().map(|d| EmbeddingRequest::new(&d.doc_id, &d.text)).collect();
    let vectors = embedder.embed_batch(&requests)?;
    Ok(Retriever::Dense(DenseStore::build(vectors.values())?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub mode: Mode,
    pub ablation: Ablation,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, ManifestEntry>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub runs: Vec<RunResult>,
    pub expanded: Vec<ExpandedQuery>,
    pub filter_reports: BTreeMap<String, FilterReport>,
    pub metrics: Option<MetricReport>,
    pub output_dir: PathBuf,
}

pub const RUN_FILE: &str = "run.trec";
pub const FILTER_REPORT_FILE: &str = "filter_report.jsonl";
pub const EXPANDED_TSV_FILE: &str = "expanded.tsv";
pub const EXPANDED_VECS_FILE: &str = "expanded_vecs.jsonl";
pub const METRICS_TSV_FILE: &str = "metrics.tsv";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PENDING_EMBEDDINGS_FILE: &str = "embed_requests.jsonl";

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Queries in ascending id order.
pub fn sorted_queries(queries: &IndexMap<String, QueryRecord>) -> Vec<&QueryRecord> {
    let mut qs: Vec<&QueryRecord> = queries.values().collect();
    qs.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    qs
}

fn make_embedder(config: &PipelineConfig, out_dir: &Path) -> Result<Box<dyn Embedder>> {
    if config.provider.backend == Backend::BatchFile {
        config.provider.validate()?;
        let path = config.resolve(config.provider.batch_file.as_ref().expect("validated"));
        return Ok(Box::new(
            BatchFileEmbedder::open(&path)?.with_pending_output(out_dir.join(PENDING_EMBEDDINGS_FILE)),
        ));
    }
    build_embedder(&config.provider, config.seed, &config.base_dir)
}

/// Where a run starts. Later starting points read the artifact the skipped
/// stages would have written.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Resume {
    #[default]
    Start,
    /// A `filter_report.jsonl` from an earlier run.
    FilterReport(PathBuf),
    /// An `expanded.tsv` (sparse) or `expanded_vecs.jsonl` (dense).
    Expanded(PathBuf),
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    run_pipeline_from(config, &Resume::Start)
}

pub fn run_pipeline_from(config: &PipelineConfig, resume: &Resume) -> Result<PipelineOutcome> {
    stage("config", config.validate())?;
    let pool = stage("config", config.pool())?;
    pool.install(|| run_stages(config, resume))
}

/// Runs only the filter and writes `filter_report.jsonl`.
pub fn run_filter(config: &PipelineConfig) -> Result<BTreeMap<String, FilterReport>> {
    stage("config", config.validate())?;
    let pool = stage("config", config.pool())?;
    pool.install(|| {
        let (_, bundle, nli) = load_inputs(config)?;
        let reports = stage("filter", filter_stage(&bundle, nli.as_ref(), config.ablation, &config.filter))?;
        let out_dir = config.output_dir();
        let records: Vec<_> = reports.values().flat_map(|r| r.records()).collect();
        stage("write", write_file(&out_dir.join(FILTER_REPORT_FILE), |w| write_jsonl(w, &records)))?;
        Ok(reports)
    })
}

type Inputs = (IndexMap<String, QueryRecord>, TraceBundle, Option<NliLogits>);

fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let inputs = &config.inputs;
    let queries = stage("load", load_queries(&config.resolve(&inputs.queries)))?;
    let bundle = stage("load", load_trace_bundle(&config.resolve(&inputs.traces)))?;
    for (qid, traces) in bundle.iter() {
        if !queries.contains_key(qid) {
            return Err(GolferError::validation(qid, "traces reference an unknown query").in_stage("load"));
        }
        if traces.len() != config.combiner.n_expected {
            log::debug!("{qid}: {} traces, combiner tuned for {}", traces.len(), config.combiner.n_expected);
        }
    }
    let nli = match (&inputs.nli, config.ablation.filters()) {
        (Some(path), true) => Some(stage("load", load_nli_logits(&config.resolve(path), &bundle))?),
        _ => None,
    };
    Ok((queries, bundle, nli))
}

fn load_reports(bundle: &TraceBundle, path: &Path) -> Result<BTreeMap<String, FilterReport>> {
    let records = read_jsonl(open(path)?, &path.display().to_string())?;
    reports_from_records(bundle, records.into_iter().map(|(_, r)| r).collect())
}

fn load_expanded(path: &Path, mode: Mode) -> Result<Vec<ExpandedQuery>> {
    let name = path.display().to_string();
    let mut expanded = match mode {
        Mode::Sparse => read_expanded_tsv(open(path)?, &name)?,
        Mode::Dense => read_expanded_vecs(open(path)?, &name)?,
    };
    expanded.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    Ok(expanded)
}

fn run_stages(config: &PipelineConfig, resume: &Resume) -> Result<PipelineOutcome> {
    let out_dir = config.output_dir();
    let inputs = &config.inputs;
    let qrels = match &inputs.qrels {
        Some(p) => Some(stage("load", load_qrels(&config.resolve(p)))?.with_cutoff(config.evaluation.relevance_cutoff)),
        None => None,
    };

    let embedder = match config.mode {
        Mode::Dense => Some(stage("embed", make_embedder(config, &out_dir))?),
        Mode::Sparse => None,
    };

    let (reports, expanded) = match resume {
        Resume::Expanded(path) => (None, stage("combine", load_expanded(path, config.mode))?),
        _ => {
            let (queries, bundle, nli) = load_inputs(config)?;
            let reports = match resume {
                Resume::FilterReport(path) if config.ablation.filters() => {
                    stage("filter", load_reports(&bundle, path))?
                }
                _ => stage("filter", filter_stage(&bundle, nli.as_ref(), config.ablation, &config.filter))?,
            };
            let ordered = sorted_queries(&queries);
            let expanded = stage(
                "combine",
                combine_stage(
                    &ordered,
                    &reports,
                    config.mode,
                    config.ablation,
                    &config.combiner,
                    embedder.as_deref(),
                ),
            )?;
            (Some(reports), expanded)
        }
    };

    let retriever = match config.mode {
        Mode::Sparse => {
            let corpus_path = config.resolve(inputs.corpus.as_ref().expect("validated"));
            let corpus = stage("index", load_corpus(&corpus_path))?;
            stage("index", build_sparse_retriever(&corpus, config))?
        }
        Mode::Dense => stage(
            "index",
            build_dense_retriever(config, embedder.as_deref().expect("dense has embedder")),
        )?,
    };
    let runs = stage("search", search_stage(&retriever, &expanded, config.depth))?;

    let metrics = match &qrels {
        Some(q) => Some(evaluate(&runs, q, &stage("evaluate", config.metric_list())?)),
        None => None,
    };

    stage(
        "write",
        write_artifacts(config, &out_dir, reports.as_ref(), &expanded, &runs, metrics.as_ref()),
    )?;
    Ok(PipelineOutcome {
        runs,
        expanded,
        filter_reports: reports.unwrap_or_default(),
        metrics,
        output_dir: out_dir,
    })
}

fn write_artifacts(
    config: &PipelineConfig,
    out_dir: &Path,
    reports: Option<&BTreeMap<String, FilterReport>>,
    expanded: &[ExpandedQuery],
    runs: &[RunResult],
    metrics: Option<&MetricReport>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| GolferError::io(out_dir, e))?;
    let mut written = Vec::new();

    if let (true, Some(reports)) = (config.ablation.filters(), reports) {
        let records: Vec<_> = reports.values().flat_map(|r| r.records()).collect();
        write_file(&out_dir.join(FILTER_REPORT_FILE), |w| write_jsonl(w, &records))?;
        written.push(FILTER_REPORT_FILE);
    }
    match config.mode {
        Mode::Sparse => {
            write_file(&out_dir.join(EXPANDED_TSV_FILE), |w| write_expanded_tsv(w, expanded))?;
            written.push(EXPANDED_TSV_FILE);
        }
        Mode::Dense => {
            write_file(&out_dir.join(EXPANDED_VECS_FILE), |w| write_expanded_vecs(w, expanded))?;
            written.push(EXPANDED_VECS_FILE);
        }
    }
    write_file(&out_dir.join(RUN_FILE), |w| write_trec_run(w, runs, &config.run_tag))?;
    written.push(RUN_FILE);
    if let Some(m) = metrics {
        write_file(&out_dir.join(METRICS_TSV_FILE), |w| m.write_tsv(w))?;
        write_file(&out_dir.join(METRICS_JSON_FILE), |w| m.write_json(w))?;
        written.extend([METRICS_TSV_FILE, METRICS_JSON_FILE]);
    }

    let inputs = &config.inputs;
    let mut input_entries = BTreeMap::new();
    let named: [(&str, Option<&PathBuf>); 6] = [
        ("queries", Some(&inputs.queries)),
        ("traces", Some(&inputs.traces)),
        ("nli", inputs.nli.as_ref()),
        ("corpus", inputs.corpus.as_ref()),
        ("corpus_embeddings", inputs.corpus_embeddings.as_ref()),
        ("qrels", inputs.qrels.as_ref()),
    ];
    for (name, path) in named {
        if let Some(p) = path {
            input_entries.insert(
                name.to_string(),
                ManifestEntry {
                    path: p.display().to_string(),
                    sha256: file_sha256(&config.resolve(p))?,
                },
            );
        }
    }
    if let (Mode::Dense, Some(p)) = (config.mode, &config.provider.batch_file) {
        input_entries.insert(
            "embeddings".into(),
            ManifestEntry {
                path: p.display().to_string(),
                sha256: file_sha256(&config.resolve(p))?,
            },
        );
    }
    let mut outputs = BTreeMap::new();
    for name in written {
        outputs.insert(name.to_string(), file_sha256(&out_dir.join(name))?);
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: config.mode,
        ablation: config.ablation,
        seed: config.seed,
        config_sha256: config.fingerprint(),
        inputs: input_entries,
        outputs,
    };
    write_file(&out_dir.join(MANIFEST_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        std::io::Write::write_all(w, b"\n")
    })
}
