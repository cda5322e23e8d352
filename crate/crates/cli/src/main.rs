//! `robust-bandit`: run experiments, verify the implementation, plot results.
//!
//! Exit codes: 0 on success, 1 when a run fails or a check does not pass,
//! 2 for usage and configuration errors.

mod config;
mod plot;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use robust_bandit::experiment::{bound_curves, RoundRecord, RunSummary};
use robust_bandit::{checks, replicate, write_csv, PolicyKind};

use config::{ConfigError, Overrides, RunConfig, SEED_ENV_VAR};

/// Episodes of `check` are capped at this many rounds unless `--horizon` is given.
const CHECK_HORIZON: usize = 200;

#[derive(Parser)]
#[command(name = "robust-bandit", version, about = "Robust kernelized contextual bandits with imperfect contexts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured policy over all seeds and write per-round CSVs.
    Run(RunArgs),
    /// Run the numerical verification suite.
    Check(CommonArgs),
    /// Draw cumulative-regret figures from run CSVs.
    Plot(PlotArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy to run (repeatable): simple_ucb, maxmin_ucb, minwd, oracle_maxmin, oracle_minmax.
    #[arg(long = "policy")]
    policies: Vec<PolicyKind>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of seeds, counted up from env.seed.
    #[arg(long)]
    seeds: Option<usize>,
    /// Perturbation budget of the environment and of the defense.
    #[arg(long)]
    delta: Option<f64>,
    /// Odd grid resolution of the policies' inner optimizations.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Worker threads for episodes.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Write one combined CSV instead of one per policy.
    #[arg(long)]
    combined: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Run CSVs.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    /// Directory for the SVG figures.
    #[arg(long, default_value = "plots")]
    output: PathBuf,
}

enum Failure {
    Usage(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(common: &CommonArgs, output: Option<PathBuf>) -> Result<RunConfig, ConfigError> {
    let overrides = Overrides {
        policies: common.policies.clone(),
        horizon: common.horizon,
        seeds: common.seeds,
        delta: common.delta,
        grid_points: common.grid_points,
        output,
        jobs: common.jobs,
    };
    let seed_env = std::env::var(SEED_ENV_VAR).ok();
    config::load(common.config.as_deref(), &overrides, seed_env.as_deref())
}

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Failure> {
    let Format::Csv = args.format;
    let cfg = load(&args.common, args.output)?;
    let seeds = cfg.seeds();
    let workers = pool(cfg.jobs)?;
    let summaries = cfg
        .policies
        .iter()
        .map(|&p| workers.install(|| replicate(&cfg.spec.with_policy(p), &seeds)))
        .collect::<Result<Vec<_>, _>>()
        .context("run failed")?;

    std::fs::create_dir_all(&cfg.output).with_context(|| format!("cannot create {}", cfg.output.display()))?;
    let records = |s: &RunSummary| -> Vec<RoundRecord> { s.episodes.iter().flat_map(|e| e.records.clone()).collect() };
    if args.combined {
        let all: Vec<RoundRecord> = summaries.iter().flat_map(records).collect();
        write_records(&cfg.output.join("results.csv"), &all)?;
    } else {
        for s in &summaries {
            write_records(&cfg.output.join(format!("{}.csv", s.policy.name())), &records(s))?;
        }
    }
    for s in &summaries {
        write_bounds(&cfg.output.join(format!("{}_bounds.csv", s.policy.name())), s)?;
    }
    print_summary(&cfg, &summaries);
    Ok(ExitCode::SUCCESS)
}

fn write_records(path: &Path, records: &[RoundRecord]) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_csv(BufWriter::new(file), records).with_context(|| format!("cannot write {}", path.display()))
}

/// Advisory reference curves next to each run: cumulative oracle values and
/// the realized reward-gap slack term.
fn write_bounds(path: &Path, summary: &RunSummary) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["t", "seed", "cum_MF", "cum_MR", "cum_MR_bar", "slack"])?;
    for e in &summary.episodes {
        for b in bound_curves(&e.records).iter().skip(1) {
            w.write_record([
                b.t.to_string(),
                e.seed.to_string(),
                robust_bandit::experiment::format_sig9(b.cum_mf),
                robust_bandit::experiment::format_sig9(b.cum_mr),
                robust_bandit::experiment::format_sig9(b.cum_mr_bar),
                robust_bandit::experiment::format_sig9(b.slack),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn print_summary(cfg: &RunConfig, summaries: &[RunSummary]) {
    println!(
        "T = {}, seeds = {} (from {}), delta = {}, grid = {}",
        cfg.spec.env.horizon, cfg.n_seeds, cfg.spec.env.seed, cfg.spec.defense.delta, cfg.spec.defense.grid_points
    );
    println!(
        "{:<14} {:>22} {:>22} {:>22} {:>12}",
        "policy", "true regret", "robust regret", "worst-case regret", "width sum"
    );
    for s in summaries {
        let cell = |c: &robust_bandit::experiment::CurveStats| format!("{:.3} ± {:.3}", c.final_mean(), c.final_std());
        let held = s.width_checks.iter().filter(|c| c.passed).count();
        println!(
            "{:<14} {:>22} {:>22} {:>22} {:>12}",
            s.policy.name(),
            cell(&s.true_regret),
            cell(&s.robust_regret),
            cell(&s.worst_regret),
            format!("{held}/{} hold", s.width_checks.len())
        );
    }
}

fn cmd_check(args: CommonArgs) -> Result<ExitCode, Failure> {
    let cfg = load(&args, None)?;
    let horizon = args.horizon.unwrap_or(cfg.spec.env.horizon.min(CHECK_HORIZON));
    let report = pool(cfg.jobs)?
        .install(|| checks::run_all(&cfg.spec, horizon, cfg.spec.env.seed))
        .context("verification suite aborted")?;
    let mut all = true;
    for c in &report {
        all &= c.passed;
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_plot(args: PlotArgs) -> Result<ExitCode, Failure> {
    let curves = plot::read_curves(&args.csv)?;
    let written = plot::write_figures(&curves, &args.output).map_err(|e| anyhow::anyhow!("plotting failed: {e}"))?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
