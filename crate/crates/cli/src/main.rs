//! `csntax`: train, evaluate, ablate and compare syntax-only models of
//! code-switching minimal pairs.

mod commands;
mod config;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use csntax_core::encoding::AblationMode;
use csntax_core::synth::RuleFamily;

use config::{ModelArgs, StatsArgs, TrainArgs};
use manifest::RunManifest;
use output::{write_failure, OutDir};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CSNTAX_OUT";
const DEFAULT_OUT: &str = "csntax-out";

#[derive(Debug, Parser)]
#[command(name = "csntax", version, about = "Syntax-only graph models of code-switching minimal pairs")]
pub struct Cli {
    /// Output directory [default: $CSNTAX_OUT, else ./csntax-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with `seed`, `model`, `train`, `stats` and `generator` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model, or the median-of-seeds protocol when --test is given.
    Train(TrainCmd),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalCmd),
    /// Median-of-seeds accuracy under every feature-randomization mode.
    Ablate(AblateCmd),
    /// Generate a synthetic dataset with a planted switching rule.
    Synth(SynthCmd),
    /// Significance tests, agreement and calibration on evaluation reports.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Learning curve over nested training subsets.
    Curve(CurveCmd),
    /// Repeat a recorded run from its manifest.
    Rerun(RerunCmd),
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainArgs,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Expected model shape; a checkpoint that differs is refused.
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct AblateCmd {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated modes [default: all]
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<AblationMode>>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainArgs,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// deprel-set, pos-set or depth-limit.
    #[arg(long)]
    pub rule: RuleFamily,
    /// Number of pairs, written to synth.jsonl.
    #[arg(long, conflicts_with = "splits")]
    pub n: Option<usize>,
    /// Train,validation,test sizes, written to train/val/test.jsonl.
    #[arg(long, value_delimiter = ',')]
    pub splits: Option<Vec<usize>>,
    /// Seed for sampling the rule [default: the generator seed]
    #[arg(long)]
    pub rule_seed: Option<u64>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Chance of re-drawing each relation of the second translation.
    #[arg(long)]
    pub perturbation: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum StatsCmd {
    /// Permutation test on the accuracy difference of two evaluation reports.
    Compare(CompareCmd),
    /// Cohen's kappa between the choices of two evaluation reports.
    Kappa(PairCmd),
    /// Temperature scaling and confidence/agreement correlation.
    Calibrate(CalibrateCmd),
}

#[derive(Debug, Args)]
pub struct CompareCmd {
    /// Same items, aligned by id (default).
    #[arg(long, conflicts_with = "unpaired")]
    pub paired: bool,
    /// Independent samples.
    #[arg(long)]
    pub unpaired: bool,
    pub x: PathBuf,
    pub y: PathBuf,
    #[command(flatten)]
    pub stats: StatsArgs,
}

#[derive(Debug, Args)]
pub struct PairCmd {
    pub x: PathBuf,
    pub y: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateCmd {
    /// Evaluation report the temperature is fitted on.
    #[arg(long)]
    pub val: PathBuf,
    /// Evaluation report used for the correlation [default: --val]
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveCmd {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainArgs,
}

#[derive(Debug, Args)]
pub struct RerunCmd {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Command::Rerun(r) = &cli.command {
        return rerun(&r.manifest, cli.out);
    }
    let out = OutDir::create(out_dir(cli.out.clone()))?;
    let result = commands::dispatch(&cli, argv, &out);
    if let Err(e) = &result {
        write_failure(&out.path, e);
    }
    result.map(|_| ())
}

fn rerun(manifest_path: &std::path::Path, out: Option<PathBuf>) -> Result<()> {
    let recorded = RunManifest::read(manifest_path)?;
    let out = std::path::absolute(out_dir(out))?;
    std::env::set_current_dir(&recorded.working_directory).with_context(|| {
        format!("entering recorded working directory {}", recorded.working_directory.display())
    })?;
    recorded.verify_inputs()?;
    let mut cli = Cli::try_parse_from(std::iter::once("csntax".to_string()).chain(recorded.argv.iter().cloned()))?;
    if matches!(cli.command, Command::Rerun(_)) {
        bail!("manifest {} records a rerun", manifest_path.display());
    }
    cli.out = Some(out.clone());
    let out = OutDir::create(out)?;
    let result = commands::dispatch(&cli, recorded.argv.clone(), &out).and_then(|cfg| {
        if cfg != recorded.config {
            bail!("resolved configuration differs from the one recorded in {}", manifest_path.display());
        }
        Ok(())
    });
    if let Err(e) = &result {
        write_failure(&out.path, e);
    }
    result
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
