//! The `ttq` command line: experiment runs, reports, curve export, dataset
//! generation, and diagnostics.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use ttq_cli::config::{ExperimentConfig, RawConfig};
use ttq_cli::{init_threads, report, runner};
use ttq_core::data::{gen_charge_diagrams, save_dataset, DotGenConfig};

#[derive(Parser)]
#[command(
    name = "ttq",
    about = "Tensor-train + variational-quantum-circuit experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the pipeline named in a config file.
    Run {
        /// Path to a key = value config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the run seed (shorthand for `--seed N` as a key).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (config key `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (config key `threads`; env TTQ_THREADS as fallback).
        #[arg(long)]
        threads: Option<usize>,
        /// Additional `--key value` overrides, last wins.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Compare finished runs: CSV on stdout, aligned table on stderr.
    Report {
        /// Run directories holding summary.csv files.
        run_dirs: Vec<PathBuf>,
    },
    /// Write a run's metrics as long-format plot rows (curves.csv).
    ExportCurves { run_dir: PathBuf },
    /// Generate a synthetic charge-stability-diagram dataset file.
    GenDots {
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        count: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 700)]
        seed: u64,
        #[arg(long, default_value_t = 28)]
        grid: usize,
    },
    /// Run the diagnostics pipeline from a config file.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

/// Parse trailing `--key value` pairs.
fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(key) = flag.strip_prefix("--") else {
            bail!("expected '--key value' override, got '{flag}'");
        };
        let Some(value) = it.next() else {
            bail!("override '--{key}' is missing its value");
        };
        out.push((key.to_string(), value.clone()));
    }
    Ok(out)
}

fn env_threads() -> Option<usize> {
    std::env::var("TTQ_THREADS").ok()?.parse().ok()
}

fn load_config(
    config: &PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    overrides: &[String],
    force_pipeline: Option<&str>,
) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::load(config)?;
    raw.apply_overrides(&parse_overrides(overrides)?);
    if let Some(s) = seed {
        raw.set("seed", s.to_string());
    }
    if let Some(o) = out {
        raw.set("out_dir", o.display().to_string());
    }
    if let Some(t) = threads.or_else(env_threads) {
        raw.set("threads", t.to_string());
    }
    if let Some(p) = force_pipeline {
        raw.set("pipeline", p);
    }
    ExperimentConfig::from_raw(&raw)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            threads,
            overrides,
        } => {
            let cfg = load_config(&config, seed, out, threads, &overrides, None)?;
            init_threads(cfg.threads);
            let summary = runner::execute(&cfg)?;
            eprintln!("run complete: {}", cfg.out_dir.display());
            if let Some(s) = summary {
                eprintln!(
                    "  {} ({}): ce {:.4}, accuracy {:.2}%",
                    s.model,
                    s.eval_split,
                    s.ce,
                    100.0 * s.accuracy
                );
            }
            Ok(())
        }
        Command::Report { run_dirs } => {
            let (csv, text) = report::report(&run_dirs)?;
            print!("{csv}");
            eprint!("{text}");
            Ok(())
        }
        Command::ExportCurves { run_dir } => {
            let out = report::export_curves(&run_dir)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::GenDots {
            out,
            count,
            noise,
            seed,
            grid,
        } => {
            let grids = gen_charge_diagrams(&DotGenConfig {
                grid_size: grid,
                count_per_class: count,
                noise_sigma: noise,
                seed,
                ..DotGenConfig::default()
            })?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
            }
            save_dataset(&out, &grids)?;
            eprintln!("wrote {} grids to {}", grids.len(), out.display());
            Ok(())
        }
        Command::Diagnose {
            config,
            seed,
            out,
            threads,
            overrides,
        } => {
            let cfg = load_config(&config, seed, out, threads, &overrides, Some("diagnose"))?;
            init_threads(cfg.threads);
            runner::execute(&cfg)?;
            eprintln!(
                "diagnostics written to {}",
                cfg.out_dir.join("diagnostics.csv").display()
            );
            Ok(())
        }
    }
}
