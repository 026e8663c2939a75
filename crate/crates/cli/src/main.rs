use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use golfer_core::eval::{evaluate, load_qrels, parse_metrics};
use golfer_core::pipeline::{self, Resume};
use golfer_core::retrieval::load_trec_run;
use golfer_core::synthetic::{generate, SynthConfig, SynthKind};
use golfer_core::{Ablation, Mode, PipelineConfig};

#[derive(Parser)]
#[command(name = "golfer", version, about = "Hallucination-filtered query expansion and retrieval")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline from a TOML config.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Start from a saved filter report instead of re-filtering.
        #[arg(long, conflicts_with = "from_expanded")]
        from_filter_report: Option<PathBuf>,
        /// Start from saved expanded queries and only retrieve and evaluate.
        #[arg(long)]
        from_expanded: Option<PathBuf>,
    },
    /// Only score and filter sentences; writes filter_report.jsonl.
    Filter {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a TREC run file against qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value = "map,ndcg@10,mrr@10,recall@1000")]
        metrics: String,
        /// Smallest grade that counts as relevant for MRR, recall and MAP.
        #[arg(long, default_value_t = 1)]
        cutoff: u32,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write a synthetic dataset with ready-to-run configs.
    Synth {
        #[arg(long, default_value = "standard")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        docs: Option<usize>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    ablation: Option<Ablation>,
    /// Overrides `output_dir`; relative to the working directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(ablation) = self.ablation {
            cfg.ablation = ablation;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = std::path::absolute(dir)?;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            from_filter_report,
            from_expanded,
        } => {
            let cfg = config.load()?;
            let resume = match (from_filter_report, from_expanded) {
                (Some(p), _) => Resume::FilterReport(p),
                (_, Some(p)) => Resume::Expanded(p),
                _ => Resume::Start,
            };
            let outcome = pipeline::run_pipeline_from(&cfg, &resume)?;
            log::info!("{} queries retrieved", outcome.runs.len());
            if let Some(report) = &outcome.metrics {
                for m in &report.metrics {
                    println!("{}\t{:.4}\t({} queries)", m.metric, m.mean, m.evaluated);
                }
            }
            println!("outputs in {}", outcome.output_dir.display());
            Ok(())
        }
        Command::Filter { config } => {
            let cfg = config.load()?;
            let reports = pipeline::run_filter(&cfg)?;
            let (kept, total) = reports
                .values()
                .flat_map(|r| &r.docs)
                .flat_map(|d| &d.kept)
                .fold((0, 0), |(k, t), &keep| (k + keep as usize, t + 1));
            println!(
                "kept {kept}/{total} sentences; report in {}",
                cfg.output_dir().join(pipeline::FILTER_REPORT_FILE).display()
            );
            Ok(())
        }
        Command::Eval {
            run,
            qrels,
            metrics,
            cutoff,
            json,
        } => {
            let runs = load_trec_run(&run)?;
            let qrels = load_qrels(&qrels)?.with_cutoff(cutoff);
            let metrics = parse_metrics(&metrics)?;
            let report = evaluate(runs.values(), &qrels, &metrics);
            let mut out = std::io::stdout().lock();
            report.write_tsv(&mut out)?;
            out.flush()?;
            if let Some(path) = json {
                write_json(&path, |w| report.write_json(w))?;
            }
            Ok(())
        }
        Command::Synth {
            kind,
            out,
            seed,
            queries,
            docs,
        } => {
            let kind: SynthKind = kind.parse()?;
            let defaults = SynthConfig::default();
            let cfg = SynthConfig {
                kind,
                seed: seed.unwrap_or(defaults.seed),
                queries: queries.unwrap_or(defaults.queries),
                docs: docs.unwrap_or(defaults.docs),
                ..defaults
            };
            if cfg.queries == 0 || cfg.docs < cfg.queries * 5 {
                bail!("need at least one query and five documents per query");
            }
            generate(&cfg).write_to(&out)?;
            println!("wrote {} to {}", kind_name(kind), out.display());
            Ok(())
        }
    }
}

fn kind_name(kind: SynthKind) -> &'static str {
    match kind {
        SynthKind::Standard => "standard dataset",
        SynthKind::Adversarial => "adversarial dataset",
    }
}

fn write_json(path: &Path, fill: impl FnOnce(&mut std::fs::File) -> std::io::Result<()>) -> Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    fill(&mut f)?;
    Ok(())
}
