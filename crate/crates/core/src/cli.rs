//! Command-line front end. `run` parses argv, dispatches to the harness and
//! maps outcomes to exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{ExperimentConfig, KEYS};
use crate::dynamics::{frontier_transitions, t_star, SigmaTrace};
use crate::error::{Error, Result};
use crate::gridworld::GridSpec;
use crate::harness::export::{
    read_sigma_trace, write_curves, write_grid, write_manifest, write_returns, write_run_grids,
    write_sigma_trace, write_text, write_true_distance,
};
use crate::harness::{
    aggregate, compare_sampling_from, run_many, tstar_distance_correlation, Arm, RunResult,
};
use crate::structure::{DistanceField, TransitionGraph};

#[derive(Debug, Parser)]
#[command(
    name = "structlab",
    version,
    about = "Tabular distributional RL lab: C51, return-spread dynamics and structure-guided training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the C51 baseline for every run seed.
    TrainBaseline(CommonArgs),
    /// Train the two-phase structured agent for every run seed.
    TrainStructrl(CommonArgs),
    /// Train both arms on matched seeds and write joint curves.
    Compare(CommonArgs),
    /// Compute t*, spread and distance grids plus the t*/distance correlation.
    AnalyzeDynamics(AnalyzeArgs),
    /// Sample states under uniform, spread and t* weightings.
    SamplingDemo(CommonArgs),
    /// Train both arms and write only the per-state grids.
    ExportGrids(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Config file, or `default` for the built-in defaults.
    #[arg(long, default_value = "default")]
    pub config: String,
    /// Root directory for run outputs.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Override a config key, `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Number of run seeds (overrides `n_random_seeds`).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First run seed (overrides `rng_seed_base`).
    #[arg(long)]
    pub rng_seed_base: Option<u64>,
    /// Concurrent runs. Defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output subdirectory name. Defaults to the command name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Analyze a saved run directory instead of training fresh baselines.
    #[arg(long)]
    pub run: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainBaseline(_) => "train-baseline",
            Command::TrainStructrl(_) => "train-structrl",
            Command::Compare(_) => "compare",
            Command::AnalyzeDynamics(_) => "analyze-dynamics",
            Command::SamplingDemo(_) => "sampling-demo",
            Command::ExportGrids(_) => "export-grids",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::TrainBaseline(c)
            | Command::TrainStructrl(c)
            | Command::Compare(c)
            | Command::SamplingDemo(c)
            | Command::ExportGrids(c) => c,
            Command::AnalyzeDynamics(a) => &a.common,
        }
    }
}

fn keys_help() -> String {
    let mut out = String::from("Config keys (set with --set key=value or in the config file):\n");
    let defaults = ExperimentConfig::default().entries();
    for ((key, doc), (_, default)) in KEYS.iter().zip(&defaults) {
        let _ = writeln!(out, "  {key:<24} {doc} [default: {default}]");
    }
    out
}

fn command() -> clap::Command {
    let help = keys_help();
    let mut cmd = Cli::command().after_long_help(help.clone());
    let names: Vec<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    for name in names {
        let help = help.clone();
        cmd = cmd.mut_subcommand(name, |s| s.after_long_help(help));
    }
    cmd
}

/// Strict parse. Errors carry clap's own exit code (2 for usage problems).
pub fn parse_args<I, T>(argv: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

/// Config file, then `--set` overrides, then the seed flags.
pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(n) = args.seeds {
        cfg.n_random_seeds = n;
    }
    if let Some(base) = args.rng_seed_base {
        cfg.rng_seed_base = base;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::SeedSelection { .. } | Error::AllSeedStrategiesFailed(_)) {
                eprintln!("hint: raise exploration_episodes or explore_epsilon, or pick another seed_strategy");
            }
            1
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    let args = cmd.common();
    let cfg = resolve_config(args)?;
    let spec = cfg.grid()?;
    let dir = args.out.join(args.name.as_deref().unwrap_or(cmd.name()));
    let jobs = args.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let seeds = cfg.run_seeds();
    log::info!("{} -> {} ({} seeds, {jobs} jobs)", cmd.name(), dir.display(), seeds.len());

    match cmd {
        Command::TrainBaseline(_) | Command::TrainStructrl(_) | Command::Compare(_) => {
            let arms: &[Arm] = match cmd {
                Command::TrainBaseline(_) => &[Arm::Baseline],
                Command::TrainStructrl(_) => &[Arm::StructRl],
                _ => &[Arm::Baseline, Arm::StructRl],
            };
            let mut by_arm = Vec::new();
            for &arm in arms {
                by_arm.push((arm, run_many(&cfg, arm, &seeds, jobs)?));
            }
            let all: Vec<&RunResult> = by_arm.iter().flat_map(|(_, r)| r.iter()).collect();
            write_training_outputs(&dir, &cfg, &spec, cmd.name(), &all)?;
            let summaries: Vec<_> = by_arm.iter().map(|(a, r)| (a.name(), aggregate(r))).collect();
            let series: Vec<_> = summaries.iter().map(|(n, s)| (*n, s)).collect();
            write_curves(&dir.join("curves.svg"), &series, -(cfg.max_steps as f64))?;
            for r in &all {
                println!("{}", summary_line(&spec, r));
            }
        }
        Command::ExportGrids(_) => {
            let mut all = Vec::new();
            for arm in [Arm::Baseline, Arm::StructRl] {
                all.extend(run_many(&cfg, arm, &seeds, jobs)?);
            }
            let grids = dir.join("grids");
            write_true_distance(&grids, &spec)?;
            for r in &all {
                write_run_grids(&grids, &spec, r)?;
                println!("{}", summary_line(&spec, r));
            }
        }
        Command::AnalyzeDynamics(a) => match &a.run {
            Some(run_dir) => analyze_saved(run_dir, &dir, &cfg)?,
            None => {
                let runs = run_many(&cfg, Arm::Baseline, &seeds, jobs)?;
                let refs: Vec<&RunResult> = runs.iter().collect();
                write_manifest(&dir.join("manifest"), &cfg, cmd.name(), &refs)?;
                for r in &runs {
                    let label = format!("{}_seed{}", r.arm.name(), r.run_seed);
                    write_sigma_trace(&dir.join("sigma").join(format!("{label}.csv")), &spec, &r.sigma_trace)?;
                    analyze_trace(&dir.join("analysis"), &label, &cfg, &spec, &r.sigma_trace)?;
                }
            }
        },
        Command::SamplingDemo(_) => {
            let runs = run_many(&cfg, Arm::Baseline, &seeds, jobs)?;
            let refs: Vec<&RunResult> = runs.iter().collect();
            write_manifest(&dir.join("manifest"), &cfg, cmd.name(), &refs)?;
            for r in &runs {
                let cmp = compare_sampling_from(&cfg, r);
                let mut line = format!("seed={} query_episode={}", r.run_seed, cmp.query_episode);
                for (strategy, weights, freq, _) in &cmp.grids {
                    let name = strategy.name();
                    let path = dir.join("grids").join(format!("seed{}_{name}_freq.csv", r.run_seed));
                    write_grid(&path, &spec, &freq.iter().map(|&f| Some(f)).collect::<Vec<_>>())?;
                    let path = dir.join("grids").join(format!("seed{}_{name}_weight.csv", r.run_seed));
                    write_grid(&path, &spec, &weights.iter().map(|&w| Some(w)).collect::<Vec<_>>())?;
                    let modal = argmax(freq);
                    let _ = write!(line, " {name}_mode={}", spec.state_at(modal));
                }
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn write_training_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    spec: &GridSpec,
    command: &str,
    runs: &[&RunResult],
) -> Result<()> {
    write_manifest(&dir.join("manifest"), cfg, command, runs)?;
    write_returns(&dir.join("returns.csv"), runs)?;
    let grids = dir.join("grids");
    write_true_distance(&grids, spec)?;
    for r in runs {
        write_run_grids(&grids, spec, r)?;
        let path = dir
            .join("sigma")
            .join(format!("{}_seed{}.csv", r.arm.name(), r.run_seed));
        write_sigma_trace(&path, spec, &r.sigma_trace)?;
    }
    Ok(())
}

fn summary_line(spec: &GridSpec, r: &RunResult) -> String {
    let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |v| v.to_string());
    let rho = tstar_distance_correlation(spec, &r.tstar)
        .map_or("-".to_string(), |rho| format!("{rho:.3}"));
    format!(
        "{} seed={} final_eval={} best_eval={} tail50={:.2} seeds={} rho={rho}",
        r.arm.name(),
        r.run_seed,
        fmt_opt(r.final_eval()),
        fmt_opt(r.best_eval()),
        r.tail_mean(50),
        r.seeds.as_ref().map_or("-", |s| s.strategy().name()),
    )
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Writes t*, final spread, distance and frontier outputs for one trace and
/// prints its correlation line.
fn analyze_trace(
    out: &Path,
    label: &str,
    cfg: &ExperimentConfig,
    spec: &GridSpec,
    trace: &SigmaTrace,
) -> Result<()> {
    let tstar = t_star(trace, cfg.smoothing_window)?;
    let rho = tstar_distance_correlation(spec, &tstar);
    write_grid(
        &out.join(format!("{label}_tstar.csv")),
        spec,
        &tstar.values().iter().map(|t| t.map(|t| t as f64)).collect::<Vec<_>>(),
    )?;
    if let Some(last) = trace.last() {
        write_grid(
            &out.join(format!("{label}_sigma_final.csv")),
            spec,
            &last.iter().map(|&v| Some(v)).collect::<Vec<_>>(),
        )?;
    }
    write_true_distance(out, spec)?;

    // Frontier edges measured against the goal distance on the full grid.
    let goal_field = DistanceField::from_values(
        spec.true_distances().into_iter().map(Some).collect(),
    );
    let frontier = frontier_transitions(
        spec,
        &tstar,
        &goal_field,
        cfg.frontier_tau,
        &TransitionGraph::complete(spec),
    );
    let mut csv = String::from("from_x,from_y,to_x,to_y\n");
    for (s, s2) in &frontier {
        let _ = writeln!(csv, "{},{},{},{}", s.x, s.y, s2.x, s2.y);
    }
    write_text(&out.join(format!("{label}_frontier.csv")), &csv)?;

    let finite = tstar.values().iter().flatten().count();
    match rho {
        Ok(rho) => println!(
            "{label} rho={rho:.3} finite_tstar={finite} frontier_edges={}",
            frontier.len()
        ),
        Err(e) => println!("{label} rho=- ({e}) finite_tstar={finite}"),
    }
    Ok(())
}

/// Re-analyzes the spread traces of a saved run. The run's manifest supplies
/// the config; command-line overrides are not applied on top of it.
fn analyze_saved(run_dir: &Path, out: &Path, fallback: &ExperimentConfig) -> Result<()> {
    let manifest = run_dir.join("manifest");
    let cfg = if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        ExperimentConfig::from_text(&text)?
    } else {
        fallback.clone()
    };
    let spec = cfg.grid()?;
    let sigma_dir = run_dir.join("sigma");
    let mut traces: Vec<PathBuf> = fs::read_dir(&sigma_dir)
        .map_err(|e| Error::io(&sigma_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    traces.sort();
    if traces.is_empty() {
        return Err(Error::Config(format!("no spread traces under {}", sigma_dir.display())));
    }
    write_text(
        &out.join("source"),
        &format!("{}\n", run_dir.display()),
    )?;
    for path in traces {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let trace = read_sigma_trace(&path, &spec)?;
        analyze_trace(&out.join("analysis"), &label, &cfg, &spec, &trace)?;
    }
    Ok(())
}
