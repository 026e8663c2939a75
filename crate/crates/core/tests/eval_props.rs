mod common;

use common::gen::{rng, run_and_judgments};
use common::oracle;
use golfer_core::eval::{evaluate, map_metric, mrr_at_k, ndcg_at_k, read_qrels, recall_at_k, Metric, Qrels};
use golfer_core::retrieval::{Hit, RunResult};
use proptest::prelude::*;

fn qrels_from(rows: &[(String, String, u32)], cutoff: u32) -> Qrels {
    let mut q = Qrels::new().with_cutoff(cutoff);
    for (qid, d, g) in rows {
        q.insert(qid, d, *g);
    }
    q
}

fn run_of(ids: &[&str]) -> RunResult {
    RunResult {
        query_id: "q".into(),
        hits: ids
            .iter()
            .enumerate()
            .map(|(i, d)| Hit {
                doc_id: d.to_string(),
                score: -(i as f64),
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn metrics_match_reference(seed: u64, k in 1usize..20, cutoff in 1u32..=3) {
        let (run, rows) = run_and_judgments(&mut rng(seed), "q");
        let qrels = qrels_from(&rows, cutoff);
        let judged = oracle::group_qrels(&rows).remove("q").unwrap_or_default();
        let ids: Vec<String> = run.doc_ids().map(String::from).collect();
        let pairs = [
            (ndcg_at_k(&run, &qrels, k), oracle::ndcg(&ids, &judged, k)),
            (mrr_at_k(&run, &qrels, k), oracle::mrr(&ids, &judged, k, cutoff)),
            (recall_at_k(&run, &qrels, k), oracle::recall(&ids, &judged, k, cutoff)),
            (map_metric(&run, &qrels), oracle::average_precision(&ids, &judged, cutoff)),
        ];
        for (got, want) in pairs {
            match (got, want) {
                (Some(g), Some(w)) => prop_assert!((g - w).abs() <= 1e-12, "{} vs {}", g, w),
                (g, w) => prop_assert_eq!(g, w),
            }
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed: u64) {
        let (run, rows) = run_and_judgments(&mut rng(seed), "q");
        let qrels = qrels_from(&rows, 1);
        for m in [Metric::Map, Metric::Ndcg(10), Metric::Mrr(10), Metric::Recall(1000)] {
            if let Some(v) = m.compute(&run, &qrels) {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}

#[test]
fn spot_values() {
    let mut qrels = Qrels::new();
    qrels.insert("q", "a", 3);
    qrels.insert("q", "b", 2);
    qrels.insert("q", "c", 1);
    assert_eq!(ndcg_at_k(&run_of(&["a", "b", "c", "x"]), &qrels, 10), Some(1.0));

    let mut one = Qrels::new();
    one.insert("q", "r", 1);
    assert_eq!(mrr_at_k(&run_of(&["x", "y", "r"]), &one, 10), Some(1.0 / 3.0));
    assert_eq!(mrr_at_k(&run_of(&["x", "y", "r"]), &one, 2), Some(0.0));
    assert_eq!(map_metric(&run_of(&["x", "r"]), &one), Some(0.5));
    assert_eq!(recall_at_k(&run_of(&["x"]), &one, 10), Some(0.0));
}

#[test]
fn judged_queries_without_a_run_count_as_zero() {
    let qrels = read_qrels("q1 0 a 1\nq2 0 b 2\nq3 0 c 0\n".as_bytes(), "mem").unwrap();
    let runs = [run_of(&["a"])].map(|mut r| {
        r.query_id = "q1".into();
        r
    });
    let report = evaluate(&runs, &qrels, &[Metric::Ndcg(10)]);
    let ndcg = &report.metrics[0];
    assert_eq!(ndcg.per_query["q1"], 1.0);
    assert_eq!(ndcg.per_query["q2"], 0.0);
    assert_eq!(ndcg.undefined, ["q3"]);
    assert_eq!(ndcg.mean, 0.5);
}
