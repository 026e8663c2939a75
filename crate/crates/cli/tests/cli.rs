use std::path::Path;
use std::process::{Command, Output};

fn golfer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_golfer")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = golfer(args);
    assert!(
        out.status.success(),
        "golfer {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_run_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--kind", "standard", "--out", s(&data), "--queries", "4", "--docs", "40"]);

    let out_dir = tmp.path().join("out");
    let stdout = ok(&["run", "-c", s(&data.join("sparse.toml")), "--output-dir", s(&out_dir)]);
    assert!(stdout.contains("ndcg@10\t"), "{stdout}");
    let run_file = out_dir.join("run.trec");
    let first = std::fs::read_to_string(&run_file).unwrap();
    assert!(first.lines().all(|l| l.split(' ').count() == 6 && l.ends_with(" golfer")));

    let report = ok(&[
        "eval",
        "--run",
        s(&run_file),
        "--qrels",
        s(&data.join("qrels.txt")),
        "--metrics",
        "ndcg@10,map",
        "--json",
        s(&tmp.path().join("m.json")),
    ]);
    let tsv = std::fs::read_to_string(out_dir.join("metrics.tsv")).unwrap();
    let all_rows = |t: &str| t.lines().filter(|l| l.contains("\tall\t")).map(String::from).collect::<Vec<_>>();
    assert_eq!(all_rows(&report), all_rows(&tsv)[..2]);
    assert!(std::fs::read_to_string(tmp.path().join("m.json")).unwrap().contains("\"ndcg@10\""));
}

#[test]
fn filter_then_resume_matches_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--kind", "adversarial", "--out", s(&data), "--queries", "3", "--docs", "30"]);
    let cfg = data.join("dense.toml");

    let stdout = ok(&["filter", "-c", s(&cfg), "--output-dir", s(&tmp.path().join("f"))]);
    assert!(stdout.starts_with("kept "), "{stdout}");
    ok(&["run", "-c", s(&cfg), "--output-dir", s(&tmp.path().join("a"))]);
    ok(&[
        "run",
        "-c",
        s(&cfg),
        "--output-dir",
        s(&tmp.path().join("b")),
        "--from-filter-report",
        s(&tmp.path().join("f/filter_report.jsonl")),
    ]);
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("run.trec")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn overrides_switch_ablation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--kind", "standard", "--out", s(&data), "--queries", "2", "--docs", "20"]);
    let out = tmp.path().join("base");
    ok(&["run", "-c", s(&data.join("sparse.toml")), "--ablation", "baseline", "--output-dir", s(&out)]);
    assert!(!out.join("filter_report.jsonl").exists());
    let expanded = std::fs::read_to_string(out.join("expanded.tsv")).unwrap();
    let queries = std::fs::read_to_string(data.join("queries.tsv")).unwrap();
    assert_eq!(expanded, queries);
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"ablation\": \"baseline\""), "{manifest}");
}

#[test]
fn failures_exit_nonzero_with_a_stage_tag() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--out", s(&data), "--queries", "2", "--docs", "20"]);
    std::fs::write(data.join("traces.jsonl"), "{\"query_id\": \"Q01\"\n").unwrap();
    let out = golfer(&["run", "-c", s(&data.join("sparse.toml")), "--output-dir", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error: [load]") && err.contains("traces.jsonl:1:"), "{err}");

    let out = golfer(&["run", "-c", s(&tmp.path().join("missing.toml"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("loading config"));

    let out = golfer(&["run", "-c", s(&data.join("sparse.toml")), "--ablation", "nonsense"]);
    assert!(!out.status.success());
}
