use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dtrl_core::harness::{
    run_experiment, run_gamma_sweep, Algorithm, ExperimentConfig, HyperMode, LoopExecutor, SummaryRow, SweepPhase,
};
use dtrl_core::schedule::{gamma_grid, schedule_table, DtAwareConfig};
use dtrl_core::Error;

/// Run reinforcement-learning experiments across action cycle times.
#[derive(Debug, Parser)]
#[command(name = "dtrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write per-episode and summary CSVs.
    Run(RunArgs),
    /// Print batch size, minibatch size, discount and trace decay per cycle time.
    PrintSchedule(ScheduleArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment name, used as the output subdirectory.
    #[arg(long)]
    name: Option<String>,
    /// reacher2d or polebalance.
    #[arg(long)]
    env: Option<String>,
    /// ppo, sac, ac or random.
    #[arg(long)]
    algo: Option<Algorithm>,
    /// Action cycle time in milliseconds; repeat for several.
    #[arg(long = "dt")]
    dt: Vec<u32>,
    /// baseline, dt-aware or explicit.
    #[arg(long)]
    mode: Option<HyperMode>,
    /// Environment steps per run.
    #[arg(long)]
    steps: Option<u64>,
    /// Independent runs per cycle time.
    #[arg(long)]
    runs: Option<usize>,
    /// Seed of the first run; run k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs executed concurrently.
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Sweep the SAC discount over this many candidates (0.99^128 .. 1.0)
    /// and rerun the best on fresh seeds.
    #[arg(long, num_args = 0..=1, default_missing_value = "12")]
    gamma_sweep: Option<usize>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// TOML experiment file whose [dt_aware] table and cycle times are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dt0: Option<u32>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Cycle times to tabulate, in milliseconds.
    #[arg(long = "dt")]
    dt: Vec<u32>,
}

fn experiment_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => {
            let (Some(env), Some(algo), Some(steps)) = (&args.env, args.algo, args.steps) else {
                return Err(Error::Config("without --config, --env, --algo and --steps are required".into()));
            };
            if args.dt.is_empty() {
                return Err(Error::Config("without --config, at least one --dt is required".into()));
            }
            let name = format!("{}-{env}", format!("{algo:?}").to_lowercase());
            ExperimentConfig::new(&name, env, algo, args.dt.clone(), steps)
        }
    };
    if let Some(v) = &args.name {
        config.name = v.clone();
    }
    if let Some(v) = &args.env {
        config.env = v.clone();
    }
    if let Some(v) = args.algo {
        config.algorithm = v;
    }
    if !args.dt.is_empty() {
        config.cycle_times_ms = args.dt.clone();
    }
    if let Some(v) = args.mode {
        config.mode = v;
    }
    if let Some(v) = args.steps {
        config.total_env_steps = v;
    }
    if let Some(v) = args.runs {
        config.num_runs = v;
    }
    if let Some(v) = args.seed {
        config.base_seed = v;
    }
    if let Some(v) = args.parallel {
        config.max_parallel = v;
    }
    config.validate()?;
    Ok(config)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:>8} {:>6} {:>10} {:>14} {:>12}", "dt_ms", "runs", "incomplete", "avg_return", "std_error");
    for r in rows {
        println!(
            "{:>8} {:>6} {:>10} {:>14} {:>12}",
            r.cycle_time_ms,
            r.num_runs,
            r.incomplete_runs,
            fmt_opt(r.mean_average_return),
            fmt_opt(r.standard_error)
        );
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let config = experiment_config(&args)?;
    if let Some(n) = args.gamma_sweep {
        let report = run_gamma_sweep(&config, &gamma_grid(n), &args.out_dir, &LoopExecutor)?;
        println!("{:>8} {:>10} {:>7} {:>14} {:>12}", "dt_ms", "gamma", "phase", "avg_return", "std_error");
        for r in &report.rows {
            let phase = match r.phase {
                SweepPhase::Sweep => "sweep",
                SweepPhase::Rerun => "rerun",
            };
            let mark = if r.selected { " *" } else { "" };
            println!(
                "{:>8} {:>10.6} {:>7} {:>14} {:>12}{mark}",
                r.cycle_time_ms,
                r.gamma,
                phase,
                fmt_opt(r.mean_average_return),
                fmt_opt(r.standard_error)
            );
        }
        println!("report: {}", args.out_dir.join(&config.name).join("gamma_sweep.csv").display());
        return Ok(());
    }
    let report = run_experiment(&config, &args.out_dir)?;
    print_summary(&report.summary);
    println!("summary: {}", report.dir.join("summary.csv").display());
    Ok(())
}

fn print_schedule(args: ScheduleArgs) -> Result<(), Error> {
    let (mut base, mut cycle_times) = match &args.config {
        Some(path) => {
            let c = ExperimentConfig::from_file(path)?;
            (c.dt_aware.unwrap_or_default(), c.cycle_times_ms)
        }
        None => (DtAwareConfig::default(), Vec::new()),
    };
    if let Some(v) = args.dt0 {
        base.initial_cycle_time_ms = v;
    }
    if let Some(v) = args.batch {
        base.initial_batch = v;
    }
    if let Some(v) = args.minibatch {
        base.initial_minibatch = v;
    }
    if let Some(v) = args.gamma {
        base.initial_discount = v;
    }
    if let Some(v) = args.lambda {
        base.initial_trace_decay = v;
    }
    if !args.dt.is_empty() {
        cycle_times = args.dt;
    }
    if cycle_times.is_empty() {
        cycle_times = vec![4, 8, 16, 32, 64];
    }
    println!("{:>8} {:>8} {:>10} {:>10} {:>10}", "dt_ms", "batch", "minibatch", "gamma", "lambda");
    for r in schedule_table(&base, &cycle_times)? {
        println!(
            "{:>8} {:>8} {:>10} {:>10.6} {:>10.6}",
            r.cycle_time_ms, r.batch, r.minibatch, r.discount, r.trace_decay
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::PrintSchedule(args) => print_schedule(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) | Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
