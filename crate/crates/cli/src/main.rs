//! `echo`: generate worlds, run memory strategies, evaluate, validate and replay.
//!
//! Exit codes: 0 on success (failed episodes are data, not errors), 1 on
//! configuration or IO errors, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use echo_core::episode::Trajectory;
use echo_core::harness::output::{self, MetricRow};
use echo_core::harness::plot::line_chart_svg;
use echo_core::harness::validity::ValidityError;
use echo_core::harness::{
    cumulative_average, gain_over_baseline, run_stream, sample_workflows, validity_analysis, BackendSpec, FailureClass,
    RunConfig,
};
use echo_core::lm::{LiveBackend, LiveConfig, LmBackend};
use echo_core::strategies::StrategyKind;
use echo_core::textview::render_goal;
use echo_core::world::{Action, GenConfig, GridWorld};
use serde::Serialize;

type BackendFactory = Box<dyn Fn(&GridWorld) -> Arc<dyn LmBackend> + Sync>;

#[derive(Parser)]
#[command(name = "echo", version, about = "Stateful gridworld benchmark for cross-episode agent memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate world snapshots and an index file.
    Gen(GenArgs),
    /// Run one strategy over every environment stream.
    Run(RunArgs),
    /// Compare runs against a baseline run.
    Eval(EvalArgs),
    /// Check that stored workflows lead an agent to their goals.
    Validate(ValidateArgs),
    /// Print a logged trajectory step by step.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Explicit seeds, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["count", "base_seed"])]
    seeds: Vec<u64>,
    /// Number of consecutive seeds to generate.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: Option<u64>,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 13)]
    grid_size: usize,
    #[arg(long, default_value_t = 4)]
    objects: usize,
    #[arg(long)]
    out: PathBuf,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    force: bool,
    /// Print an ASCII map of each world to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Directory written by `gen`.
    #[arg(long, required_unless_present = "resume_config")]
    envs: Option<PathBuf>,
    /// Re-run exactly the configuration saved by an earlier run.
    #[arg(long, conflicts_with_all = ["envs", "strategy", "backend", "episodes", "horizon", "goal_seed"])]
    resume_config: Option<PathBuf>,
    #[arg(long, required_unless_present = "resume_config")]
    strategy: Option<StrategyKind>,
    /// `live`, `scripted:bfs-demo`, `scripted:oracle` or `scripted:turn-left`.
    #[arg(long, required_unless_present = "resume_config")]
    backend: Option<BackendSpec>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: Option<u64>,
    #[arg(long)]
    goal_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Parallel environment streams (default: one per environment).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Optional request cap for the live backend.
    #[arg(long)]
    requests_per_minute: Option<u32>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    baseline: PathBuf,
    /// Merged per-episode CSV.
    #[arg(long)]
    out: PathBuf,
    /// SVG chart of mean cumulative-average gain per run.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Agent backend used to follow the workflows.
    #[arg(long, default_value = "scripted:bfs-demo")]
    backend: BackendSpec,
    /// Seed for drawing the samples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Only the trajectory on this line (0-based, blank lines skipped).
    #[arg(long)]
    index: Option<usize>,
    /// Only this step (0-based).
    #[arg(long)]
    step: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Validate(a) => validate(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn ensure_empty_dir(dir: &Path, force: bool) -> Result<()> {
    if !force
        && dir.exists()
        && fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?.next().is_some()
    {
        bail!("{} is not empty (pass --force to write into it)", dir.display());
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let seeds: Vec<u64> = match (args.seeds.is_empty(), args.count) {
        (false, _) => args.seeds,
        (true, Some(n)) => (args.base_seed..args.base_seed + n).collect(),
        (true, None) => bail!("pass --seeds or --count"),
    };
    ensure_empty_dir(&args.out, args.force)?;
    let config = GenConfig { grid_size: args.grid_size, num_objects: args.objects };
    let worlds = seeds
        .iter()
        .map(|&s| GridWorld::generate(s, config).with_context(|| format!("generating world {s}")))
        .collect::<Result<Vec<_>>>()?;
    if args.verbose {
        for w in &worlds {
            eprintln!("world {}:\n{}", w.seed, w.ascii_map());
        }
    }
    output::write_world_set(&args.out, config, &worlds)?;
    eprintln!("wrote {} worlds to {}", worlds.len(), args.out.display());
    Ok(())
}

/// Live runs share one client; scripted backends are built per world.
fn backend_factory(spec: BackendSpec, audit: Option<&Path>, rpm: Option<u32>) -> Result<BackendFactory> {
    if spec.is_live() {
        let mut config = LiveConfig::from_env()?;
        config.requests_per_minute = rpm;
        let mut backend = LiveBackend::new(config)?;
        if let Some(path) = audit {
            backend = backend.with_audit_log(path).with_context(|| format!("creating {}", path.display()))?;
        }
        let shared: Arc<dyn LmBackend> = Arc::new(backend);
        Ok(Box::new(move |_: &GridWorld| shared.clone()))
    } else {
        Ok(Box::new(move |w: &GridWorld| spec.scripted_for(w).expect("scripted backend spec")))
    }
}

fn run(args: RunArgs) -> Result<()> {
    let (config, worlds) = match &args.resume_config {
        Some(path) => {
            let config = output::read_config(path)?;
            let worlds = config.generate_worlds()?;
            (config, worlds)
        }
        None => {
            let envs = args.envs.as_ref().expect("required by clap");
            let (world_config, worlds) = output::read_world_set(envs)?;
            let defaults = RunConfig::new(StrategyKind::React, BackendSpec::Live);
            let config = RunConfig {
                env_seeds: worlds.iter().map(|w| w.seed).collect(),
                world: world_config,
                episodes_per_env: args.episodes.map_or(defaults.episodes_per_env, |n| n as usize),
                horizon: args.horizon.map_or(defaults.horizon, |n| n as usize),
                strategy: args.strategy.expect("required by clap"),
                backend: args.backend.expect("required by clap"),
                goal_seed: args.goal_seed.unwrap_or(defaults.goal_seed),
            };
            (config, worlds)
        }
    };
    config.validate()?;
    if config.backend.is_live() {
        LiveConfig::from_env()?;
    }
    ensure_empty_dir(&args.out, args.force)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let audit = args.out.join("lm_calls.jsonl");
    let factory =
        backend_factory(config.backend, config.backend.is_live().then_some(audit.as_path()), args.requests_per_minute)?;
    let workers = args.workers.map_or(worlds.len(), |w| w as usize);

    let record = run_stream(&config, &worlds, factory.as_ref(), workers)?;
    output::write_run(&args.out, &record)?;

    let curve = record.reward_table().mean_cumulative_average()?;
    let aborted = record.envs.iter().flat_map(|e| &e.episodes).filter(|e| e.trajectory.abort.is_some()).count();
    eprintln!(
        "{} with {}: {} envs x {} episodes, final mean cumulative reward {:.3}, {} LM calls, {} aborted episodes; wrote {}",
        config.strategy,
        config.backend,
        config.env_seeds.len(),
        config.episodes_per_env,
        curve.last().copied().unwrap_or(0.0),
        record.total_lm_calls(),
        aborted,
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MergedRow {
    run: String,
    strategy: String,
    env_seed: u64,
    episode: usize,
    goal: String,
    reward: f64,
    cum_avg_reward: f64,
    baseline_cum_avg_reward: f64,
    gain: f64,
}

fn eval(args: EvalArgs) -> Result<()> {
    let (_, baseline) = output::read_reward_table(&args.baseline)?;
    let base_rows = output::read_metrics(&args.baseline.join(output::METRICS_FILE))?;
    let mut merged = Vec::new();
    let mut curves = Vec::new();
    for dir in &args.runs {
        let (_, table) = output::read_reward_table(dir)?;
        let gain = gain_over_baseline(&table, &baseline)
            .with_context(|| format!("pairing {} with the baseline", dir.display()))?;
        let rows = output::read_metrics(&dir.join(output::METRICS_FILE))?;
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        for (series, base) in table.series.iter().zip(&baseline.series) {
            let cm = cumulative_average(&series.rewards)?;
            let cb = cumulative_average(&base.rewards)?;
            for (i, reward) in series.rewards.iter().enumerate() {
                let goal = find_goal(&rows, series.env_seed, i).or_else(|| find_goal(&base_rows, series.env_seed, i));
                merged.push(MergedRow {
                    run: name.clone(),
                    strategy: table.strategy.clone(),
                    env_seed: series.env_seed,
                    episode: i,
                    goal: goal.unwrap_or_default(),
                    reward: *reward,
                    cum_avg_reward: cm[i],
                    baseline_cum_avg_reward: cb[i],
                    gain: cm[i] - cb[i],
                });
            }
        }
        eprintln!("{name} ({}): final gain {:+.3}", table.strategy, gain.last().copied().unwrap_or(0.0));
        curves.push((name, gain));
    }
    output::write_csv(&args.out, &merged)?;
    if let Some(plot) = &args.plot {
        let title = format!("Cumulative average reward gain over {}", baseline.strategy);
        output::write_text(plot, &line_chart_svg(&title, "gain", &curves))?;
    }
    Ok(())
}

fn find_goal(rows: &[MetricRow], env_seed: u64, episode: usize) -> Option<String> {
    rows.iter().find(|r| r.env_seed == env_seed && r.episode == episode).map(|r| r.goal.clone())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let config = output::read_config(&args.run.join(output::CONFIG_FILE))?;
    let memories = output::read_final_memories(&args.run).context("run lacks memory snapshots")?;
    let samples = match sample_workflows(&memories, args.samples as usize, args.seed) {
        Err(ValidityError::NothingToValidate) => {
            println!("nothing to validate: the run stored no workflows");
            return Ok(());
        }
        other => other?,
    };
    let worlds = config.generate_worlds()?;
    let audit = args.run.join("validate_lm_calls.jsonl");
    let factory = backend_factory(args.backend, args.backend.is_live().then_some(audit.as_path()), None)?;
    let report = validity_analysis(&samples, &worlds, factory.as_ref(), config.horizon)?;
    println!("{}/{} ({:.0}%)", report.successes, report.total, 100.0 * report.rate());
    for class in [FailureClass::Infeasible, FailureClass::AgentDeviation, FailureClass::Unknown] {
        let n = report.count(class);
        if n > 0 {
            println!("{}: {n}", serde_json::to_value(class)?.as_str().unwrap_or("?"));
        }
    }
    for f in &report.failures {
        eprintln!("env {} '{}': {:?} ({})", f.sample.env_seed, f.sample.goal, f.class, f.detail);
    }
    if let Some(path) = &args.report {
        output::write_text(path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<()> {
    let all = output::read_trajectories(&args.trajectory)?;
    let selected: Vec<&Trajectory> = match args.index {
        Some(i) => vec![all
            .get(i)
            .with_context(|| format!("index {i} out of range: the file holds {} trajectories", all.len()))?],
        None => all.iter().collect(),
    };
    for t in selected {
        println!(
            "== env {} episode {}: {} ({} steps, reward {}) ==",
            t.env_seed,
            t.episode_index,
            render_goal(&t.goal),
            t.steps.len(),
            t.reward
        );
        let steps: Vec<(usize, &echo_core::episode::StepRecord)> = match args.step {
            Some(n) => match t.steps.get(n) {
                Some(s) => vec![(n, s)],
                None => bail!(
                    "step {n} out of range: env {} episode {} has {} steps",
                    t.env_seed,
                    t.episode_index,
                    t.steps.len()
                ),
            },
            None => t.steps.iter().enumerate().collect(),
        };
        for (i, s) in steps {
            let action = Action::from_index(s.action_index as i64).map_or("unknown", |a| a.name());
            println!("[{i}] observation: {}", s.observation);
            println!("    thought: {}", s.thought);
            println!(
                "    action: {} ({action}){}  reward: {}",
                s.action_index,
                if s.was_valid { "" } else { " [no effect]" },
                s.step_reward
            );
        }
        if args.step.is_none() {
            println!("final observation: {}", t.final_observation);
            match &t.abort {
                Some(a) => println!("aborted: {}", a.reason),
                None => println!("{}", if t.success { "success" } else { "failure" }),
            }
        }
    }
    Ok(())
}
