use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gem_cli::bench::run_benchmark;
use gem_cli::config::{port_from_env, OracleKind, RunConfig};
use gem_cli::pipeline::{is_oracle_unavailable, replay, run, write_atomic, RunOutcome};
use gem_cli::service::{Broker, HumanOracle, Service};
use gem_core::refine::{Ablations, SimulatedOracle};
use gem_core::task::{make_task, Task, TaskTemplate};

/// Exit status when a human session stopped answering; rerun to resume.
const EXIT_SUSPENDED: u8 = 3;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "gem", version, about = "Reward learning for object rearrangement from one demonstration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Initial reward, refinement with an oracle, and evaluation for one task.
    Run(RunArgs),
    /// Plans the demonstration for a task template and writes the task file.
    MakeDemo(MakeDemoArgs),
    /// Runs several tasks and seeds with the simulated oracle and aggregates.
    Eval(EvalArgs),
    /// Re-runs a finished run with its logged verdicts.
    Replay(ReplayArgs),
}

/// Settings shared by `run` and `eval`; flags override the config file.
#[derive(Args)]
struct Overrides {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Upper bound on refinement iterations (one query each).
    #[arg(long)]
    max_queries: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    finetune_updates: Option<usize>,
    #[arg(long)]
    generator_steps: Option<usize>,
    #[arg(long)]
    candidate_budget: Option<usize>,
    /// Comma-separated ablations, e.g. `random_queries` or `random_query_variant`.
    #[arg(long)]
    ablation: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long, value_enum)]
    oracle: Option<OracleKind>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Feedback service port (human oracle); `GEM_ORACLE_PORT` overrides the config file.
    #[arg(long)]
    port: Option<u16>,
    /// Seconds to wait for a human verdict before suspending the run.
    #[arg(long)]
    feedback_timeout: Option<u64>,
}

#[derive(Args)]
struct MakeDemoArgs {
    /// Task template (scenes, goal and demonstration seed).
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Only compare with the existing file; fail if it differs.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated task files.
    #[arg(long, value_delimiter = ',', required = true)]
    tasks: Vec<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Finished run directory to replay.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn base_config(o: &Overrides) -> anyhow::Result<RunConfig> {
    let mut c = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.max_queries {
        c.refine.max_iterations = v;
    }
    if let Some(v) = o.patience {
        c.refine.patience = v;
    }
    if let Some(v) = o.finetune_updates {
        c.refine.finetune_updates = v;
    }
    if let Some(v) = o.generator_steps {
        c.mairl.generator_steps = v;
    }
    if let Some(v) = o.candidate_budget {
        c.refine.candidate_budget = v;
    }
    if let Some(v) = &o.ablation {
        c.refine.ablations = Ablations::parse_list(v)?;
    }
    Ok(c)
}

fn run_config(a: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut c = base_config(&a.common)?;
    if let Some(t) = &a.task {
        c.task = t.clone();
    }
    if let Some(k) = a.oracle {
        c.oracle = k;
    }
    if let Some(o) = &a.out {
        c.out = o.clone();
    } else if a.common.config.is_none() {
        let stem = c.task.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        c.out = PathBuf::from(format!("runs/{stem}-seed{}", c.seed));
    }
    c.port = match a.port {
        Some(p) => p,
        None => port_from_env(c.port)?,
    };
    if let Some(t) = a.feedback_timeout {
        c.feedback_timeout_secs = Some(t);
    }
    c.validate()?;
    Ok(c)
}

fn print_summary(o: &RunOutcome) {
    for f in &o.report.finals {
        let edges: Vec<String> = f.edges.iter().map(|e| e.to_string()).collect();
        println!(
            "{} seed {}: queries {} r_eval {:.3} satisfied {} displacement {:.3} edges [{}] mappings {}",
            f.task,
            f.seed,
            f.queries,
            f.r_eval,
            f.satisfied,
            f.displacement,
            edges.join(" "),
            f.bits.len()
        );
    }
    for r in &o.report.oracle_optimal {
        println!("{} reference r_eval {:.3}", r.task, r.r_eval);
    }
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<ExitCode> {
    let config = run_config(a)?;
    let task = Task::load(&config.task)?;
    let result = match config.oracle {
        OracleKind::Sim => {
            let mut oracle = SimulatedOracle { goal: task.goal.clone() };
            run(&config, &mut oracle, None)
        }
        OracleKind::Human => {
            let broker = Arc::new(Broker::new(Some(task.demonstration.final_state().clone())));
            let service = Service::start(broker.clone(), config.port)?;
            println!("feedback service on http://{}", service.addr);
            let mut oracle = HumanOracle {
                broker: broker.clone(),
                timeout: config.feedback_timeout_secs.map(Duration::from_secs),
            };
            let mut progress = |st: &gem_core::refine::RefineState, fin: bool| broker.update_status(st, fin);
            run(&config, &mut oracle, Some(&mut progress))
        }
    };
    match result {
        Ok(o) => {
            print_summary(&o);
            println!("results in {}", config.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) if is_oracle_unavailable(&e) => {
            eprintln!("oracle stopped answering ({e:#}); progress is checkpointed in {}", config.out.display());
            eprintln!("rerun the same command to resume");
            Ok(ExitCode::from(EXIT_SUSPENDED))
        }
        Err(e) => Err(e),
    }
}

fn cmd_make_demo(a: &MakeDemoArgs) -> anyhow::Result<ExitCode> {
    let template = TaskTemplate::load(&a.template)?;
    let task = make_task(&template)?;
    let text = task.to_json()?;
    if a.check {
        let existing = std::fs::read_to_string(&a.out).with_context(|| format!("reading {}", a.out.display()))?;
        if existing != text {
            bail!("{} differs from the regenerated task", a.out.display());
        }
        println!("{} matches", a.out.display());
    } else {
        write_atomic(&a.out, text.as_bytes())?;
        println!("{}: demonstration of {} steps", a.out.display(), task.demonstration.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<ExitCode> {
    let base = base_config(&a.common)?;
    let report = run_benchmark(&base, &a.tasks, &a.seeds, &a.out)?;
    for g in &report.final_aggregates {
        let reference = report.oracle_optimal.iter().find(|o| o.task == g.task).map(|o| o.r_eval);
        println!(
            "{}: mean r_eval {:.3} ± {:.3} over {} seeds, success {:.2}, reference {:.3}",
            g.task,
            g.mean_r_eval,
            g.stderr_r_eval,
            g.seeds,
            g.success_rate,
            reference.unwrap_or(f64::NAN)
        );
    }
    for f in &report.failures {
        eprintln!("failed: {} seed {}: {}", f.task, f.seed, f.error);
    }
    println!("report in {}", a.out.join("report.json").display());
    Ok(if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_replay(a: &ReplayArgs) -> anyhow::Result<ExitCode> {
    let r = replay(Path::new(&a.run), Path::new(&a.out))?;
    print_summary(&r.outcome);
    if r.identical_log {
        println!("replayed log is identical");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("replayed log differs from {}", a.run.display());
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::MakeDemo(a) => cmd_make_demo(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<gem_core::GemError>(), Some(gem_core::GemError::Config(_))));
            ExitCode::from(if usage { EXIT_USAGE } else { 1 })
        }
    }
}
