#![allow(dead_code)]

pub mod gen;
pub mod oracle;

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

use golfer_core::filter::{apply_filter, FilterConfig, FilterReport};
use golfer_core::trace::{GenerationTrace, NliLogits, NliPairLogits, TraceBundle};

/// Runs the engine's filter over one query, going through the same
/// validation the loaders apply.
pub fn engine_filter(traces: &[GenerationTrace], nli: &[NliPairLogits], config: &FilterConfig) -> FilterReport {
    let bundle = TraceBundle::from_traces(traces.iter().cloned()).expect("valid traces");
    let logits = NliLogits::from_records(nli.to_vec(), &bundle).expect("complete logits");
    let qid = traces[0].query_id.as_str();
    let empty = Default::default();
    apply_filter(qid, bundle.get(qid).unwrap(), logits.for_query(qid).unwrap_or(&empty), config).expect("filter runs")
}
