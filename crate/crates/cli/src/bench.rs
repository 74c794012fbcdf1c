//! Benchmark over several tasks and seeds with the simulated oracle.

use std::fs;
use std::path::{Path, PathBuf};

use gem_core::refine::SimulatedOracle;
use gem_core::task::Task;

use crate::config::{OracleKind, RunConfig};
use crate::pipeline::{run, write_atomic};
use crate::plot::{curve_svg, Series};
use crate::report::{EvalReport, Failure};

/// Directory name of one task × seed run inside a benchmark directory.
pub fn run_name(task: &Path, seed: u64) -> String {
    let stem = task.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "task".into());
    format!("{stem}-seed{seed}")
}

/// Runs every task × seed (resuming finished or partial runs) and writes the
/// combined report, curves and one plot per task into `out`.
pub fn run_benchmark(base: &RunConfig, tasks: &[PathBuf], seeds: &[u64], out: &Path) -> anyhow::Result<EvalReport> {
    fs::create_dir_all(out)?;
    let mut report = EvalReport::new(&base.method());
    for task in tasks {
        for &seed in seeds {
            let config = RunConfig {
                task: task.clone(),
                seed,
                oracle: OracleKind::Sim,
                out: out.join(run_name(task, seed)),
                ..base.clone()
            };
            let goal = match Task::load(task) {
                Ok(t) => t.goal,
                Err(e) => {
                    report.failures.push(Failure {
                        task: task.display().to_string(),
                        seed,
                        error: e.to_string(),
                    });
                    continue;
                }
            };
            let mut oracle = SimulatedOracle { goal };
            log::info!("benchmark run {}", config.out.display());
            match run(&config, &mut oracle, None) {
                Ok(o) => report.merge(o.report),
                Err(e) => {
                    log::error!("{}: {e:#}", config.out.display());
                    report.failures.push(Failure {
                        task: task.display().to_string(),
                        seed,
                        error: format!("{e:#}"),
                    });
                }
            }
        }
    }
    report.recompute();
    write_atomic(&out.join("report.json"), report.to_json()?.as_bytes())?;
    write_atomic(&out.join("curves.csv"), report.curves_csv().as_bytes())?;
    for task in report.tasks() {
        let series = [Series {
            label: &report.method,
            points: report.aggregates.iter().filter(|a| a.task == task).collect(),
        }];
        let oracle = report.oracle_optimal.iter().find(|o| o.task == task).map(|o| o.r_eval);
        write_atomic(&out.join(format!("{task}.svg")), curve_svg(&task, &series, oracle).as_bytes())?;
    }
    Ok(report)
}
