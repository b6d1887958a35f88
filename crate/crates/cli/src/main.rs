// SPDX-License-Identifier: MIT OR Apache-2.0

//! `affectgroups`: the analysis pipeline as subcommands.
//!
//! Every stage reads earlier outputs from the output directory and runs any
//! missing prerequisite first. Exit status is 2 for configuration or input
//! validation errors, 1 for other failures.

mod config;
mod stages;

use clap::{Parser, Subcommand};
use config::{Preset, RunConfig};
use stages::{Runner, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

/// A configuration or input problem; exits with status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(
    name = "affectgroups",
    version,
    about = "Group-based negative affect prediction pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic cohort into the output directory.
    Synth,
    /// Validate the raw channel files.
    Ingest,
    /// Stay points, home detection and semantic timelines.
    Mobility,
    /// Per-prompt features and per-participant behavior profiles.
    Features,
    /// Group participants with each configured strategy.
    Profile,
    /// Cross-validated comparison of group and generalized models.
    Evaluate,
    /// Plot data, sample-size table and a summary on stdout.
    Report,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Synth => Stage::Synth,
            Command::Ingest => Stage::Ingest,
            Command::Mobility => Stage::Mobility,
            Command::Features => Stage::Features,
            Command::Profile => Stage::Profile,
            Command::Evaluate => Stage::Evaluate,
            Command::Report => Stage::Report,
        }
    }
}

#[derive(clap::Args)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory with the raw channel files (default: the output directory).
    #[arg(long = "data", alias = "data-dir", global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long = "out", alias = "out-dir", global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Work pool width; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    utc_offset_s: Option<i64>,
    /// Grouping strategies, repeatable or comma separated.
    #[arg(long = "strategy", global = true, value_delimiter = ',')]
    strategies: Vec<String>,
    /// Model kinds (gp, lasso, rf, svr), repeatable or comma separated.
    #[arg(long = "model", global = true, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    hour_of_day: Option<bool>,
    #[arg(long, global = true)]
    standardize_profiles: Option<bool>,
    /// Stay-point radius in metres.
    #[arg(long, global = true)]
    d_max: Option<f64>,
    /// Minimum stay duration in seconds.
    #[arg(long, global = true)]
    t_min: Option<i64>,
    #[arg(long, global = true)]
    out_of_town_km: Option<f64>,
    #[arg(long, global = true)]
    epoch_minutes: Option<i64>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    participants: Option<usize>,
    #[arg(long, global = true)]
    days: Option<usize>,
    /// Emit one JSON event per stage on stderr.
    #[arg(long, global = true)]
    json_logs: bool,
}

impl Overrides {
    fn apply(&self, mut c: RunConfig) -> RunConfig {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        if self.data_dir.is_some() {
            c.data_dir = self.data_dir.clone();
        }
        set(&mut c.out_dir, &self.out_dir);
        set(&mut c.seed, &self.seed);
        set(&mut c.threads, &self.threads);
        set(&mut c.utc_offset_s, &self.utc_offset_s);
        if !self.strategies.is_empty() {
            c.strategies = self.strategies.clone();
        }
        if !self.models.is_empty() {
            c.models = self.models.clone();
        }
        set(&mut c.evaluation.folds, &self.folds);
        set(&mut c.features.hour_of_day, &self.hour_of_day);
        set(&mut c.profiling.standardize, &self.standardize_profiles);
        set(&mut c.mobility.d_max_m, &self.d_max);
        set(&mut c.mobility.t_min_s, &self.t_min);
        set(&mut c.mobility.out_of_town_km, &self.out_of_town_km);
        set(&mut c.features.epoch_minutes, &self.epoch_minutes);
        set(&mut c.synth.preset, &self.preset);
        if self.participants.is_some() {
            c.synth.participants = self.participants;
        }
        if self.days.is_some() {
            c.synth.days = self.days;
        }
        c
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let base = match &cli.opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = cli.opts.apply(base);
    cfg.validate()?;
    if let Some(p) = &cfg.tag_map {
        if !p.is_file() {
            return Err(Invalid(format!("tag_map {} does not exist", p.display())).into());
        }
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()?;
    }
    Runner {
        cfg,
        json_logs: cli.opts.json_logs,
    }
    .run(cli.command.stage())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Err(e) = run(&cli) else {
        return ExitCode::SUCCESS;
    };
    let code = if e.downcast_ref::<Invalid>().is_some() { 2 } else { 1 };
    if cli.opts.json_logs {
        let event = serde_json::json!({"event": "error", "code": code, "message": format!("{e:#}")});
        eprintln!("{event}");
    } else {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(code)
}
