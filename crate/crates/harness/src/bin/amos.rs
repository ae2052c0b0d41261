use std::path::PathBuf;
use std::process::ExitCode;

use amos_core::models::param_specs;
use amos_harness::compare::compare_runs;
use amos_harness::config::{OptimizerConfig, RunConfig};
use amos_harness::memreport::{render, slot_memory_report};
use amos_harness::runner::run_experiment;
use amos_harness::tables::{bert_table, render as render_table, t5_table};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

/// Experiment runner for the Amos optimizer and its baselines.
///
/// Run configs are TOML files with sections [run], [model], [optimizer] and an
/// optional [eta] table of per-variable overrides. Defaults: batch_size 8,
/// train_batches 10000, eval_batches 4, metrics_every 10, reduction
/// "reduce_1axis", Amos xi = 1/sqrt(train_batches) at one significant digit,
/// warm-up 5% of steps (a desk-scale choice). The output directory can be
/// replaced with the AMOS_OUTPUT_DIR environment variable.
#[derive(Parser)]
#[command(name = "amos", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one config; writes metrics.jsonl, metrics.csv, checkpoints and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train several configs sharing model and seed; prints steps-to-threshold.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        /// Eval-loss target; defaults to 90% of the way from the starting
        /// loss to the worst final loss.
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write the aligned loss table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Slot-variable element counts of Amos versus AdamW for a config's model.
    Memreport {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print eta tables for standard Transformer layer sets.
    Tables {
        #[arg(long, value_enum)]
        which: Table,
        /// Hidden size.
        #[arg(long, default_value_t = 768)]
        d: usize,
        /// MLP width.
        #[arg(long, default_value_t = 3072)]
        m: usize,
        /// Per-head size (T5 only).
        #[arg(long, default_value_t = 64)]
        h: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    EtaBert,
    EtaT5,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, resume } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.run.seed = seed;
                cfg.validate()?;
            }
            let summary = run_experiment(&cfg, resume.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Compare { configs, threshold, csv } => {
            let cfgs = configs.iter().map(RunConfig::load).collect::<Result<Vec<_>>>()?;
            let cmp = compare_runs(&cfgs, threshold)?;
            print!("{}", cmp.report());
            if let Some(path) = csv {
                std::fs::write(&path, cmp.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Memreport { config } => {
            let cfg = RunConfig::load(&config)?;
            let model = cfg.build_model()?;
            let specs = param_specs(model.as_ref(), cfg.run.reduction.into(), &cfg.eta)?;
            let momentum = matches!(cfg.optimizer, OptimizerConfig::Amos { momentum: Some(_), .. });
            print!("{}", render(&slot_memory_report(&specs, momentum)));
        }
        Command::Tables { which, d, m, h } => {
            let text = match which {
                Table::EtaBert => render_table(&format!("BERT eta (d={d}, m={m})"), &bert_table(d, m)?),
                Table::EtaT5 => render_table(&format!("T5 eta (d={d}, m={m}, h={h})"), &t5_table(d, m, h)?),
            };
            print!("{text}");
        }
    }
    Ok(())
}
