//! Query expansion with hallucination-filtered hypothetical documents.
//!
//! The engine reads generation traces of LM-written passages, drops the
//! sentences that look hallucinated, merges what survives with the original
//! query and retrieves with BM25 or an inner-product index. Evaluation
//! follows TREC conventions.

pub mod combiner;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod filter;
pub mod io;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;
pub mod trace;

pub use combiner::{CombinerConfig, DocumentConfidence, ExpandedQuery, ExpansionPayload};
pub use embedding::{Embedder, EmbeddingRequest, ProviderConfig};
pub use error::{GolferError, Result};
pub use eval::{Metric, MetricReport, Qrels};
pub use filter::{FilterConfig, FilterReport, LastTokenConvention, SentenceScore};
pub use pipeline::{run_filter, run_pipeline, run_pipeline_from, Ablation, Mode, PipelineConfig, PipelineOutcome, Resume};
pub use retrieval::{Bm25Params, DenseStore, RunResult, SparseIndex};
pub use trace::{
    EmbeddingRecord, EmbeddingSet, GenerationTrace, NliLogits, NliPairLogits, QueryRecord,
    SentenceRecord, TokenRecord, TraceBundle,
};
