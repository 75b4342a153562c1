use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairmtl::pipeline::{self, DatasetKind, ExperimentConfig, Run};
use fairmtl::{Error, Result};

#[derive(Parser)]
#[command(name = "fairmtl", version, about = "Uncertainty-based bias mitigation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat JSON config; defaults to <out>/config.json when that exists.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct Labels {
    /// Protected label(s); defaults to every configured label.
    #[arg(long = "label")]
    labels: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the configured dataset and write the train/test splits.
    Ingest,
    /// Generate a synthetic biased dataset and write the train/test splits.
    Synth {
        #[arg(long)]
        bias_strength: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Cross-validate and train the baseline classifier.
    TrainBaseline,
    /// Audit the baseline for every protected label.
    Audit,
    /// Run the MTL + Monte-Carlo dropout + Pareto mitigation.
    Mitigate(Labels),
    /// Retrain the baseline with reweighing.
    Reweigh(Labels),
    /// Compare baseline and mitigated saliency.
    Explain(Labels),
    /// Consolidate completed stages into report.json and report.md.
    Report,
    /// Every stage in order.
    Run,
}

fn resolve_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let out = g.out.clone().unwrap_or_else(|| ExperimentConfig::default().out_dir);
            let stored = out.join("config.json");
            if stored.exists() {
                ExperimentConfig::load(&stored)?
            } else {
                ExperimentConfig::default()
            }
        }
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn labels(run: &Run, chosen: &Labels) -> Vec<String> {
    if chosen.labels.is_empty() {
        run.config.resolved_labels()
    } else {
        chosen.labels.clone()
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.global)?;
    if let Command::Synth { bias_strength, samples } = &cli.command {
        cfg.dataset = DatasetKind::Synthetic;
        if let Some(b) = bias_strength {
            cfg.bias_strength = *b;
        }
        if let Some(n) = samples {
            cfg.synthetic_samples = *n;
        }
    }
    let run = Run::open(cfg)?
        .with_threads(cli.global.threads)
        .with_verbose(cli.global.verbose);
    match &cli.command {
        Command::Ingest | Command::Synth { .. } => print_json(&pipeline::ingest(&run)?),
        Command::TrainBaseline => print_json(&pipeline::train_baseline(&run)?),
        Command::Audit => {
            let summary = pipeline::audit(&run)?;
            print!("{}", fairmtl::fairness::format_audit_table(&summary.records));
            Ok(())
        }
        Command::Mitigate(l) => {
            for label in labels(&run, l) {
                let s = pipeline::mitigate(&run, &label)?;
                println!(
                    "{label}: model {} accuracy {:.4} DIR {} (front of {})",
                    s.selected.model_id,
                    s.selected.accuracy,
                    s.selected.dir.map_or("undefined".into(), |d| format!("{d:.4}")),
                    s.front.len()
                );
            }
            Ok(())
        }
        Command::Reweigh(l) => {
            for label in labels(&run, l) {
                let s = pipeline::reweigh(&run, &label)?;
                println!(
                    "{label}: accuracy {:.4} DIR {}",
                    s.test_accuracy,
                    s.report.dir.map_or("undefined".into(), |d| format!("{d:.4}"))
                );
            }
            Ok(())
        }
        Command::Explain(l) => {
            for label in labels(&run, l) {
                let s = pipeline::explain(&run, &label)?;
                println!(
                    "{label}: redistribution {:.4}, top feature {} -> {}",
                    s.redistribution, s.baseline_top, s.mitigated_top
                );
            }
            Ok(())
        }
        Command::Report => {
            pipeline::report(&run)?;
            println!("{}", run.path("report.md").display());
            Ok(())
        }
        Command::Run => {
            run.run_all()?;
            println!("{}", run.path("report.md").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
