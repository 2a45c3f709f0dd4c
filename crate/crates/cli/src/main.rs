use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fedre::config::{load_config, ExperimentConfig};
use fedre::export::{append_inversions, export, Format};
use fedre::runner::{run_experiment, run_privacy, sweep, RunSummary};

#[derive(Parser)]
#[command(
    name = "fedre",
    version,
    about = "Federated representation entanglement simulator"
)]
struct Cli {
    /// Output directory. Overrides the config's `output` field.
    #[arg(long, global = true, env = "FEDRE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed and write metrics.jsonl and metrics.csv.
    Run { config: PathBuf },
    /// Re-run the experiment once per value of a dotted config key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        /// JSON values; bare words are taken as strings.
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<String>,
    },
    /// Train, then invert raw, prototype and entangled targets.
    Invert { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn output_dir(cli_dir: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_dir
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn report(s: &RunSummary) {
    let failed = s.seeds.iter().filter(|r| r.failed()).count();
    println!(
        "{}: {} seeds, {} rounds, final accuracy {:.2} ± {:.2}%{}",
        s.strategy,
        s.seeds.len(),
        s.rounds,
        100.0 * s.mean_acc,
        100.0 * s.std_acc,
        if failed > 0 {
            format!(" ({failed} seeds failed)")
        } else {
            String::new()
        }
    );
    for r in s.seeds.iter().filter(|r| r.failed()) {
        eprintln!(
            "seed {}: {}",
            r.seed,
            r.error.as_deref().unwrap_or("failed")
        );
    }
}

fn parse_value(raw: &str) -> serde_json::Value {
    serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Validate { config } => {
            load_config(&config)?;
            println!("{}: ok", config.display());
        }
        Cmd::Run { config } => {
            let cfg = load_config(&config)?;
            let dir = output_dir(&cli.output_dir, &cfg);
            prepare(&dir)?;
            let s = run_experiment(&cfg)?;
            export(&s, Format::Jsonl, &dir.join("metrics.jsonl"))?;
            export(&s, Format::Csv, &dir.join("metrics.csv"))?;
            report(&s);
            if s.seeds.iter().all(|r| r.failed()) {
                bail!("every seed failed");
            }
        }
        Cmd::Sweep {
            config,
            key,
            values,
        } => {
            let cfg = load_config(&config)?;
            let dir = output_dir(&cli.output_dir, &cfg);
            prepare(&dir)?;
            let values: Vec<_> = values.iter().map(|v| parse_value(v)).collect();
            // Reject a bad key or value before training anything.
            for v in &values {
                cfg.with_override(&key, v.clone())?;
            }
            let points = sweep(&cfg, &key, &values);
            let path = dir.join("sweep.jsonl");
            let mut lines = String::new();
            for p in &points {
                lines.push_str(&serde_json::to_string(p)?);
                lines.push('\n');
                match &p.summary {
                    Ok(s) => {
                        print!("{key}={}: ", p.value);
                        report(s);
                    }
                    Err(e) => eprintln!("{key}={}: {e}", p.value),
                }
            }
            std::fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;
        }
        Cmd::Invert { config } => {
            let cfg = load_config(&config)?;
            let dir = output_dir(&cli.output_dir, &cfg);
            prepare(&dir)?;
            let s = run_privacy(&cfg)?;
            append_inversions(&s.inversions, &dir.join("inversions.jsonl"))?;
            for k in &s.by_kind {
                println!(
                    "{:?}: {} inversions, MSE {:.4}, PSNR {:.2} dB",
                    k.target_kind, k.count, k.mean_mse, k.mean_psnr
                );
            }
            for (seed, e) in &s.failed_seeds {
                eprintln!("seed {seed}: {e}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
