//! Deterministic synthetic datasets for tests, benchmarks and demos.
//!
//! Two flavours:
//!
//! * [`SynthKind::Standard`]: topical queries with graded relevant documents
//!   and hypothetical documents mixing on-topic sentences with hallucinated
//!   ones (high entropy, strong attention, contradicted by the other samples).
//! * [`SynthKind::Adversarial`]: each query shares its terms with a few
//!   short decoy documents that beat the relevant ones on the bare query.
//!   Every hypothetical document repeats the same answer facts, and some of
//!   them add a hallucinated sentence built from that query's decoy vocabulary.
//!   Dropping those sentences is what separates the full method from the
//!   unfiltered combination.
//!
//! The adversarial set also ships `embeddings.jsonl`, a content-hash keyed
//! batch file of bag-of-words vectors covering every text the dense pipeline
//! asks for under any ablation, plus `corpus_embeddings.jsonl`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{content_hash, MockEmbedder};
use crate::error::{GolferError, Result};
use crate::eval::Qrels;
use crate::filter::{apply_filter, FilterConfig};
use crate::io::write_file;
use crate::retrieval::{Analyzer, CorpusDoc};
use crate::trace::{
    write_queries, EmbeddingRecord, GenerationTrace, NliLogits, NliPairLogits, QueryRecord, SentenceRecord,
    TokenRecord, TraceBundle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Standard,
    Adversarial,
}

impl std::str::FromStr for SynthKind {
    type Err = GolferError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(SynthKind::Standard),
            "adversarial" => Ok(SynthKind::Adversarial),
            other => Err(GolferError::Config(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub queries: usize,
    pub docs: usize,
    pub traces_per_query: usize,
    pub seed: u64,
    /// Dimension of the bag-of-words vectors shipped with the adversarial set.
    pub embedding_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            kind: SynthKind::Standard,
            queries: 20,
            docs: 200,
            traces_per_query: 5,
            seed: 20250101,
            embedding_dim: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub queries: Vec<QueryRecord>,
    pub corpus: Vec<CorpusDoc>,
    pub traces: Vec<GenerationTrace>,
    pub nli: Vec<NliPairLogits>,
    /// `(query_id, doc_id, grade)`
    pub qrels: Vec<(String, String, u32)>,
    /// Batch-file vectors keyed by content hash (adversarial only).
    pub embeddings: Vec<EmbeddingRecord>,
    /// Corpus vectors keyed by doc id (adversarial only).
    pub corpus_embeddings: Vec<EmbeddingRecord>,
    pub kind: SynthKind,
    pub embedding_dim: usize,
    pub seed: u64,
}

const FUNCTION_WORDS: &[&str] = &["the", "of", "and", "in", "is", "to", "a", "for", "with", "on"];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "si", "pe", "da", "zu", "fe", "go", "bi", "ha", "jo", "ly",
    "ma", "no", "qu", "re", "sa", "ti", "ul", "ve", "wi", "xa", "yo", "ze", "or", "an", "el",
];

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

struct Gen {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl Gen {
    fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used: FUNCTION_WORDS.iter().map(|w| w.to_string()).collect(),
        }
    }

    fn word(&mut self) -> String {
        loop {
            let n = self.rng.random_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(&mut self.rng).unwrap()).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }

    fn pick<'a>(&mut self, pool: &'a [String], n: usize) -> Vec<&'a str> {
        (0..n).map(|_| pool.choose(&mut self.rng).unwrap().as_str()).collect()
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        round4(self.rng.random_range(lo..hi))
    }

    fn function_word(&mut self) -> &'static str {
        FUNCTION_WORDS.choose(&mut self.rng).unwrap()
    }

    /// Mixes content words with function words into a token list.
    fn phrase(&mut self, content: &[&str]) -> Vec<String> {
        let mut out = Vec::new();
        for (i, w) in content.iter().enumerate() {
            if i > 0 && self.rng.random_bool(0.4) {
                out.push(self.function_word().to_string());
            }
            out.push(w.to_string());
        }
        out
    }

    fn distribution(&mut self, entropy_hint: f64) -> Vec<(u64, f64)> {
        let k = if entropy_hint > 1.5 { 12 } else { 3 };
        let peak = if entropy_hint > 1.5 { 1.0 } else { 30.0 };
        let mut weights: Vec<f64> = (0..k)
            .map(|i| if i == 0 { peak } else { self.rng.random_range(0.5..1.5) })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w = round4(*w / total));
        let head: f64 = weights[..k - 1].iter().sum();
        weights[k - 1] = 1.0 - head;
        let base = self.rng.random_range(0..50_000u64);
        weights.into_iter().enumerate().map(|(i, p)| (base + i as u64, p)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct SentenceStyle {
    entropy: (f64, f64),
    attention: (f64, f64),
    prob: (f64, f64),
    /// Mean contradiction / entailment logits against other samples.
    contra: f64,
    entail: f64,
}

const GROUNDED: SentenceStyle = SentenceStyle {
    entropy: (0.05, 0.6),
    attention: (0.02, 0.3),
    prob: (0.6, 0.99),
    contra: -2.5,
    entail: 2.0,
};

const UNSURE_BUT_CONSISTENT: SentenceStyle = SentenceStyle {
    entropy: (1.5, 3.0),
    attention: (0.3, 0.7),
    prob: (0.3, 0.7),
    contra: -2.0,
    entail: 1.5,
};

const HALLUCINATED: SentenceStyle = SentenceStyle {
    entropy: (2.5, 5.0),
    attention: (0.45, 0.95),
    prob: (0.05, 0.45),
    contra: 3.0,
    entail: -1.5,
};

fn build_sentence(g: &mut Gen, words: &[String], style: SentenceStyle) -> SentenceRecord {
    let mut texts: Vec<String> = words
        .iter()
        .enumerate()
        .map(|(i, w)| if i == 0 { w.clone() } else { format!(" {w}") })
        .collect();
    texts.push(".".into());
    let o = texts.len();
    let tokens = texts
        .into_iter()
        .map(|text| {
            let h = g.range(style.entropy.0, style.entropy.1);
            let prob = g.range(style.prob.0, style.prob.1).max(1e-4);
            if g.rng.random_bool(0.25) {
                TokenRecord {
                    text,
                    prob,
                    entropy: None,
                    dist: Some(g.distribution(h)),
                }
            } else {
                TokenRecord {
                    text,
                    prob,
                    entropy: Some(h),
                    dist: None,
                }
            }
        })
        .collect::<Vec<_>>();
    let attn = (0..o)
        .map(|l| {
            (0..o)
                .map(|v| (v > l).then(|| g.range(style.attention.0, style.attention.1)))
                .collect()
        })
        .collect();
    let text = tokens.iter().map(|t| t.text.as_str()).collect::<String>();
    SentenceRecord { text, tokens, attn }
}

fn nli_for(g: &mut Gen, traces: &[GenerationTrace], styles: &BTreeMap<(String, usize), SentenceStyle>) -> Vec<NliPairLogits> {
    let mut out = Vec::new();
    for t in traces {
        for j in 0..t.sentences.len() {
            let style = styles[&(t.doc_id.clone(), j)];
            for other in traces.iter().filter(|o| o.doc_id != t.doc_id) {
                out.push(NliPairLogits {
                    doc_id: t.doc_id.clone(),
                    sent_idx: j,
                    other_doc_id: other.doc_id.clone(),
                    logit_entail: g.range(style.entail - 1.0, style.entail + 1.0),
                    logit_contra: g.range(style.contra - 1.0, style.contra + 1.0),
                    query_id: None,
                });
            }
        }
    }
    out
}

fn doc_text(g: &mut Gen, content: &[&str]) -> String {
    g.phrase(content).join(" ")
}

pub fn generate(config: &SynthConfig) -> SyntheticDataset {
    match config.kind {
        SynthKind::Standard => generate_standard(config),
        SynthKind::Adversarial => generate_adversarial(config),
    }
}

fn generate_standard(cfg: &SynthConfig) -> SyntheticDataset {
    let mut g = Gen::new(cfg.seed);
    let filler = g.words(300);
    let topics: Vec<Vec<String>> = (0..cfg.queries).map(|_| g.words(8)).collect();

    let mut queries = Vec::new();
    let mut corpus = Vec::new();
    let mut qrels = Vec::new();
    let mut traces = Vec::new();
    let mut nli = Vec::new();

    let mut doc_ids: Vec<String> = (0..cfg.docs).map(|i| format!("D{i:04}")).collect();
    doc_ids.shuffle(&mut g.rng);
    let mut next_doc = doc_ids.into_iter();

    for (qi, topic) in topics.iter().enumerate() {
        let qid = format!("Q{:02}", qi + 1);
        let qwords: Vec<&str> = topic[..3].iter().map(String::as_str).collect();
        queries.push(QueryRecord::new(&qid, qwords.join(" ")));

        for (r, grade) in [2u32, 1, 1].into_iter().enumerate() {
            let Some(did) = next_doc.next() else { break };
            let mut content = g.pick(topic, 6 - r);
            content.extend(g.pick(&filler, 10));
            content.shuffle(&mut g.rng);
            corpus.push(CorpusDoc {
                doc_id: did.clone(),
                text: doc_text(&mut g, &content),
            });
            qrels.push((qid.clone(), did, grade));
        }

        let mut group = Vec::new();
        let mut styles = BTreeMap::new();
        for h in 0..cfg.traces_per_query {
            let doc_id = format!("{qid}-h{}", h + 1);
            let n_sent = g.rng.random_range(2..=4);
            let mut sentences = Vec::new();
            for j in 0..n_sent {
                let roll: f64 = g.rng.random();
                let (style, words) = if roll < 0.3 {
                    let other = &topics[(qi + 1 + g.rng.random_range(0..cfg.queries - 1)) % cfg.queries];
                    let mut w = g.pick(other, 3);
                    w.extend(g.pick(&filler, 3));
                    (HALLUCINATED, w)
                } else if roll < 0.4 {
                    let mut w = g.pick(topic, 2);
                    w.extend(g.pick(&filler, 3));
                    (UNSURE_BUT_CONSISTENT, w)
                } else {
                    let mut w = g.pick(topic, 4);
                    w.extend(g.pick(&filler, 2));
                    (GROUNDED, w)
                };
                let words = g.phrase(&words);
                sentences.push(build_sentence(&mut g, &words, style));
                styles.insert((doc_id.clone(), j), style);
            }
            group.push(GenerationTrace {
                query_id: qid.clone(),
                doc_id,
                sentences,
            });
        }
        nli.extend(nli_for(&mut g, &group, &styles));
        traces.extend(group);
    }

    for did in next_doc {
        let n = g.rng.random_range(10..18);
        let content = g.pick(&filler, n);
        corpus.push(CorpusDoc {
            doc_id: did,
            text: doc_text(&mut g, &content),
        });
    }
    corpus.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    SyntheticDataset {
        queries,
        corpus,
        traces,
        nli,
        qrels,
        embeddings: Vec::new(),
        corpus_embeddings: Vec::new(),
        kind: cfg.kind,
        embedding_dim: cfg.embedding_dim,
        seed: cfg.seed,
    }
}

fn generate_adversarial(cfg: &SynthConfig) -> SyntheticDataset {
    let mut g = Gen::new(cfg.seed);
    let filler = g.words(250);

    let mut queries = Vec::new();
    let mut corpus = Vec::new();
    let mut qrels = Vec::new();
    let mut traces = Vec::new();
    let mut nli = Vec::new();

    let mut doc_ids: Vec<String> = (0..cfg.docs).map(|i| format!("D{i:04}")).collect();
    doc_ids.shuffle(&mut g.rng);
    let mut next_doc = doc_ids.into_iter();

    for qi in 0..cfg.queries {
        let qid = format!("Q{:02}", qi + 1);
        let qwords = g.words(2);
        let answer = g.words(5);
        let decoy = g.words(5);
        let q: Vec<&str> = qwords.iter().map(String::as_str).collect();
        queries.push(QueryRecord::new(&qid, q.join(" ")));

        // Relevant documents: the query terms once, answer terms, long filler.
        for grade in [2u32, 1] {
            let Some(did) = next_doc.next() else { break };
            let mut content: Vec<&str> = q.clone();
            content.extend(g.pick(&answer, 5));
            content.extend(g.pick(&filler, 10));
            content.shuffle(&mut g.rng);
            corpus.push(CorpusDoc {
                doc_id: did.clone(),
                text: content.join(" "),
            });
            qrels.push((qid.clone(), did, grade));
        }
        // Decoys: short, query terms twice, decoy vocabulary.
        for _ in 0..3 {
            let Some(did) = next_doc.next() else { break };
            let mut content: Vec<&str> = q.iter().chain(q.iter()).copied().collect();
            content.extend(g.pick(&decoy, 3));
            content.extend(g.pick(&filler, 3));
            content.shuffle(&mut g.rng);
            corpus.push(CorpusDoc {
                doc_id: did,
                text: content.join(" "),
            });
        }

        let mut group = Vec::new();
        let mut styles = BTreeMap::new();
        for h in 0..cfg.traces_per_query {
            let doc_id = format!("{qid}-h{}", h + 1);
            let mut plan = vec![GROUNDED, GROUNDED, GROUNDED];
            // The decoy story shows up in a minority of samples.
            if h % 5 < 2 {
                plan.insert(1, HALLUCINATED);
                plan.push(HALLUCINATED);
            }
            let mut sentences = Vec::new();
            for (j, style) in plan.into_iter().enumerate() {
                let content: Vec<&str> = if style.contra > 0.0 {
                    let mut w = g.pick(&decoy, 4);
                    w.push(q[0]);
                    w
                } else {
                    let mut w = g.pick(&answer, 3);
                    w.push(q[j % q.len()]);
                    w.extend(g.pick(&filler, 1));
                    w
                };
                let words = g.phrase(&content);
                sentences.push(build_sentence(&mut g, &words, style));
                styles.insert((doc_id.clone(), j), style);
            }
            group.push(GenerationTrace {
                query_id: qid.clone(),
                doc_id,
                sentences,
            });
        }
        nli.extend(nli_for(&mut g, &group, &styles));
        traces.extend(group);
    }

    for did in next_doc {
        let n = g.rng.random_range(12..20);
        let content = g.pick(&filler, n);
        corpus.push(CorpusDoc {
            doc_id: did,
            text: content.join(" "),
        });
    }
    corpus.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut ds = SyntheticDataset {
        queries,
        corpus,
        traces,
        nli,
        qrels,
        embeddings: Vec::new(),
        corpus_embeddings: Vec::new(),
        kind: cfg.kind,
        embedding_dim: cfg.embedding_dim,
        seed: cfg.seed,
    };
    ds.attach_bag_of_words_embeddings();
    ds
}

/// Sum of per-word seeded unit vectors weighted by term frequency, then
/// L2-normalized. Texts sharing words get correlated vectors.
pub fn bag_of_words_embedding(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let words = MockEmbedder::new(dim, seed);
    let mut v = vec![0.0; dim];
    let mut terms = Analyzer::default().tokenize(text);
    terms.sort_unstable();
    for term in terms {
        if FUNCTION_WORDS.contains(&term.as_str()) {
            continue;
        }
        for (acc, x) in v.iter_mut().zip(words.embed_text(&term)) {
            *acc += x;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

impl SyntheticDataset {
    fn bundle(&self) -> TraceBundle {
        TraceBundle::from_traces(self.traces.iter().cloned()).expect("generated traces are valid")
    }

    /// Every text a dense run may embed: queries, raw hypothetical documents
    /// and their filtered versions under the default threshold.
    fn dense_texts(&self) -> BTreeSet<String> {
        let mut texts: BTreeSet<String> = self.queries.iter().map(|q| q.text.clone()).collect();
        let bundle = self.bundle();
        let nli = NliLogits::from_records(self.nli.clone(), &bundle).expect("generated NLI is complete");
        let empty = Default::default();
        for (qid, group) in bundle.iter() {
            texts.extend(group.iter().map(|t| t.text()));
            let report = apply_filter(qid, group, nli.for_query(qid).unwrap_or(&empty), &FilterConfig::default())
                .expect("generated traces filter cleanly");
            texts.extend(
                report
                    .docs
                    .iter()
                    .filter(|d| !d.all_dropped())
                    .map(|d| d.filtered_text.clone()),
            );
        }
        texts
    }

    fn attach_bag_of_words_embeddings(&mut self) {
        let (dim, seed) = (self.embedding_dim, self.seed);
        self.embeddings = self
            .dense_texts()
            .into_iter()
            .map(|t| EmbeddingRecord::new(content_hash(&t), bag_of_words_embedding(&t, dim, seed)))
            .collect();
        self.embeddings.sort_by(|a, b| a.id.cmp(&b.id));
        self.corpus_embeddings = self
            .corpus
            .iter()
            .map(|d| EmbeddingRecord::new(&d.doc_id, bag_of_words_embedding(&d.text, dim, seed)))
            .collect();
    }

    pub fn qrels(&self) -> Qrels {
        let mut q = Qrels::new();
        for (qid, did, grade) in &self.qrels {
            q.insert(qid, did, *grade);
        }
        q
    }

    /// Writes the dataset plus `sparse.toml` / `dense.toml` pipeline configs.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        use std::io::Write;
        std::fs::create_dir_all(dir).map_err(|e| GolferError::io(dir, e))?;
        write_file(&dir.join("queries.tsv"), |w| write_queries(w, &self.queries))?;
        write_file(&dir.join("corpus.jsonl"), |w| crate::io::write_jsonl(w, &self.corpus))?;
        write_file(&dir.join("traces.jsonl"), |w| crate::io::write_jsonl(w, &self.traces))?;
        write_file(&dir.join("nli.jsonl"), |w| crate::io::write_jsonl(w, &self.nli))?;
        write_file(&dir.join("qrels.txt"), |w| {
            for (q, d, grade) in &self.qrels {
                writeln!(w, "{q} 0 {d} {grade}")?;
            }
            Ok(())
        })?;
        let dense_provider = if self.embeddings.is_empty() {
            format!("[provider]\nbackend = \"mock\"\ndimension = {}\n", self.embedding_dim)
        } else {
            write_file(&dir.join("embeddings.jsonl"), |w| crate::io::write_jsonl(w, &self.embeddings))?;
            write_file(&dir.join("corpus_embeddings.jsonl"), |w| {
                crate::io::write_jsonl(w, &self.corpus_embeddings)
            })?;
            "[provider]\nbackend = \"batch-file\"\nbatch_file = \"embeddings.jsonl\"\n".to_string()
        };
        let corpus_line = if self.corpus_embeddings.is_empty() {
            "corpus = \"corpus.jsonl\""
        } else {
            "corpus_embeddings = \"corpus_embeddings.jsonl\""
        };
        let head = |mode: &str| {
            format!(
                "mode = \"{mode}\"\nablation = \"full\"\nseed = {}\ndepth = 100\n\
                 metrics = [\"ndcg@10\", \"map\", \"mrr@10\", \"recall@100\"]\n\
                 output_dir = \"out/{mode}\"\n\n[inputs]\nqueries = \"queries.tsv\"\n\
                 traces = \"traces.jsonl\"\nnli = \"nli.jsonl\"\nqrels = \"qrels.txt\"\n",
                self.seed
            )
        };
        let sparse = format!("{}corpus = \"corpus.jsonl\"\n", head("sparse"));
        let dense = format!("{}{corpus_line}\n\n{dense_provider}", head("dense"));
        std::fs::write(dir.join("sparse.toml"), sparse).map_err(|e| GolferError::io(dir, e))?;
        std::fs::write(dir.join("dense.toml"), dense).map_err(|e| GolferError::io(dir, e))?;
        Ok(())
    }
}
