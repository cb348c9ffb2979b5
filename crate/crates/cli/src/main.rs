use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use twinprov_core::experiment::config::{RunConfig, OUTPUT_DIR_ENV};
use twinprov_core::experiment::{self, CHECKPOINT_FILE};
use twinprov_core::neural::gradcheck::{grad_check_with_fault, GradCheckShape, DEFAULT_TOLERANCE};
use twinprov_core::neural::network::GradientFault;
use twinprov_core::neural::Checkpoint;
use twinprov_core::{synth, timeseries};

/// Traffic forecasting and bandwidth-provisioning experiments.
#[derive(Parser)]
#[command(name = "twinprov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic KPI series and write it as CSV.
    Synth(SynthArgs),
    /// Train the BiLSTM forecaster and write a checkpoint plus training report.
    Train(TrainArgs),
    /// Score a checkpoint against the static baselines; write report.json and charts.
    Compare(CompareArgs),
    /// Compare analytic and finite-difference gradients on tiny networks.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file; flags below override its entries.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Input CSV; the synthetic profile is used when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    synth_profile: Option<String>,
    #[arg(long)]
    synth_seed: Option<u64>,
    #[arg(long)]
    synth_length: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    target_feature: Option<String>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Seed for model initialization and dropout.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default from the environment, then `out`).
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self, base: Option<RunConfig>) -> Result<RunConfig> {
        let mut cfg = match (&self.config, base) {
            (Some(path), _) => {
                let mut cfg = default_config()?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                cfg.apply_text(&text)
                    .with_context(|| format!("in config {}", path.display()))?;
                cfg
            }
            (None, Some(base)) => base,
            (None, None) => default_config()?,
        };
        let mut set = |key: &str, value: String| cfg.set(key, &value).with_context(|| format!("--{key}"));
        if let Some(v) = &self.input {
            set("input", v.display().to_string())?;
        }
        if let Some(v) = &self.synth_profile {
            set("synth_profile", v.clone())?;
        }
        if let Some(v) = self.synth_seed {
            set("synth_seed", v.to_string())?;
        }
        if let Some(v) = self.synth_length {
            set("synth_length", v.to_string())?;
        }
        if let Some(v) = self.window {
            set("window", v.to_string())?;
        }
        if let Some(v) = &self.target_feature {
            set("target_feature", v.clone())?;
        }
        if let Some(v) = self.max_epochs {
            set("max_epochs", v.to_string())?;
        }
        if let Some(v) = self.batch_size {
            set("batch_size", v.to_string())?;
        }
        if let Some(v) = self.learning_rate {
            set("learning_rate", v.to_string())?;
        }
        if let Some(v) = self.seed {
            set("seed", v.to_string())?;
        }
        if let Some(v) = &self.output_dir {
            set("output_dir", v.display().to_string())?;
        }
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(k.trim(), v).with_context(|| format!("--set {kv}"))?;
        }
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn default_config() -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.set("output_dir", &dir)?;
        }
    }
    Ok(cfg)
}

#[derive(Args)]
struct SynthArgs {
    /// Generator profile.
    #[arg(long, default_value = synth::DEFAULT_PROFILE)]
    profile: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of rows.
    #[arg(long)]
    length: Option<usize>,
    /// Destination CSV (default: <output dir>/synth.csv).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Checkpoint to evaluate (default: <output dir>/model.ckpt). Without
    /// --config, the configuration embedded in the checkpoint is used.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of seeded random instances.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Maximum accepted relative error per parameter block.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Corrupt the backward pass to confirm the check catches it.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = synth::SynthConfig::profile(&args.profile)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(len) = args.length {
        cfg.length = len;
    }
    let series = synth::generate_traffic(&cfg).context("generating synthetic series")?;
    let path = match &args.output {
        Some(p) => p.clone(),
        None => default_config()?.output_dir.join("synth.csv"),
    };
    create_parent(&path)?;
    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    timeseries::write_csv(&series, std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} rows to {}", series.len(), path.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve(None)?;
    let outcome = experiment::run_train_with_observer(&cfg, |epoch, report| {
        let i = epoch - 1;
        let val = report.val_loss.get(i).map_or("-".to_string(), |v| format!("{v:.6}"));
        eprintln!(
            "epoch {epoch:>3}  train_mse {:.6}  val_mse {val}  lr {:.2e}",
            report.train_loss[i], report.learning_rates[i]
        );
    })
    .context("training failed")?;
    let (ckpt, summary) = experiment::write_train_outputs(&outcome, &cfg.output_dir)?;
    let r = &outcome.summary.train_report;
    println!(
        "trained {} epochs (best {}{}), {} parameters",
        r.train_loss.len(),
        r.best_epoch,
        if r.stopped_early { ", stopped early" } else { "" },
        outcome.summary.model_size.parameters
    );
    println!("checkpoint: {}", ckpt.display());
    println!("report: {}", summary.display());
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let ckpt_path = match &args.checkpoint {
        Some(p) => p.clone(),
        None => {
            let dir = args
                .config
                .output_dir
                .clone()
                .map_or_else(|| default_config().map(|c| c.output_dir), Ok)?;
            dir.join(CHECKPOINT_FILE)
        }
    };
    let checkpoint =
        Checkpoint::load(&ckpt_path).with_context(|| format!("loading checkpoint {}", ckpt_path.display()))?;
    let embedded = experiment::embedded_config(&checkpoint)?;
    let cfg = args.config.resolve(embedded)?;
    let report = experiment::run_compare(&cfg, &checkpoint).context("comparison failed")?;
    let written = experiment::write_compare_outputs(&report, &cfg.output_dir)?;
    println!("{:<22} {:>12} {:>12} {:>10} {:>10} {:>12}", "policy", "mae", "rmse", "eff_mean", "eff_median", "over_prov");
    for p in &report.policies {
        let m = &p.metrics;
        println!(
            "{:<22} {:>12.4e} {:>12.4e} {:>10.4} {:>10.4} {:>12.4e}",
            p.name, m.mae, m.rmse, m.mean_efficiency, m.efficiency_median, m.mean_over_provisioning
        );
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let mut shape = GradCheckShape::default();
    if let Some(seed) = args.seed {
        shape.seed = seed;
    }
    let fault = args.inject_fault.then_some(GradientFault::DropRecurrentPath);
    let report = grad_check_with_fault(&shape, args.trials, args.tolerance, fault)?;
    println!(
        "gradcheck trials={} tolerance={:e} epsilon={:e}",
        report.trials, report.tolerance, report.epsilon
    );
    for b in &report.blocks {
        println!(
            "{} {:<40} params={:<4} max_rel_err={:.3e}",
            if b.passed { "PASS" } else { "FAIL" },
            b.block,
            b.parameters,
            b.max_relative_error
        );
    }
    let failed = report.blocks.iter().filter(|b| !b.passed).count();
    println!(
        "{}: {} of {} blocks within tolerance",
        if failed == 0 { "ok" } else { "FAILED" },
        report.blocks.len() - failed,
        report.blocks.len()
    );
    Ok(failed == 0)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Compare(a) => cmd_compare(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
