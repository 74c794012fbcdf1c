//! Evaluation reports and curve files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use gem_core::eval::{mean_stderr, CurvePoint, Outcome};
use gem_core::scene::{Edge, MappingKind, Scene};
use serde::{Deserialize, Serialize};

/// Result of one task × seed run after refinement finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRow {
    pub task: String,
    pub seed: u64,
    pub queries: usize,
    pub iterations: usize,
    pub r_eval: f64,
    pub satisfied: bool,
    pub displacement: f64,
    pub edges: Vec<Edge>,
    pub bits: Vec<(Edge, MappingKind)>,
    pub goal_state: Scene,
}

/// Reference score of the ground-truth optimizer on a task's test scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub task: String,
    pub r_eval: f64,
    pub displacement: f64,
    pub goal_state: Scene,
}

impl OracleRow {
    pub fn new(task: &str, o: &Outcome) -> Self {
        Self {
            task: task.to_string(),
            r_eval: o.r_eval,
            displacement: o.displacement,
            goal_state: o.goal_state.clone(),
        }
    }
}

/// Mean over seeds at one query budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub queries: usize,
    pub seeds: usize,
    pub mean_r_eval: f64,
    pub stderr_r_eval: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub task: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub method: String,
    /// Per task × seed × query budget.
    pub curves: Vec<CurvePoint>,
    pub finals: Vec<FinalRow>,
    /// Per task × query budget, over seeds.
    pub aggregates: Vec<Aggregate>,
    /// Per task, over seeds, at each seed's final budget.
    pub final_aggregates: Vec<Aggregate>,
    pub oracle_optimal: Vec<OracleRow>,
    pub failures: Vec<Failure>,
}

impl EvalReport {
    pub fn new(method: &str) -> Self {
        Self {
            method: method.to_string(),
            ..Self::default()
        }
    }

    /// Adds another report's rows (same method) and recomputes the aggregates.
    pub fn merge(&mut self, other: EvalReport) {
        self.curves.extend(other.curves);
        self.finals.extend(other.finals);
        for o in other.oracle_optimal {
            if !self.oracle_optimal.iter().any(|x| x.task == o.task) {
                self.oracle_optimal.push(o);
            }
        }
        self.failures.extend(other.failures);
        self.recompute();
    }

    /// Recomputes both aggregate tables from the rows.
    ///
    /// Seeds whose run stopped early keep their last value at larger budgets,
    /// since the selected hypothesis no longer changes.
    pub fn recompute(&mut self) {
        let mut by_task: BTreeMap<&str, BTreeMap<u64, Vec<&CurvePoint>>> = BTreeMap::new();
        for p in &self.curves {
            by_task.entry(&p.task).or_default().entry(p.seed).or_default().push(p);
        }
        let mut aggregates = Vec::new();
        for (task, seeds) in &by_task {
            let max_q = seeds.values().flat_map(|v| v.iter().map(|p| p.queries)).max().unwrap_or(0);
            for q in 0..=max_q {
                let at: Vec<&CurvePoint> = seeds
                    .values()
                    .filter_map(|pts| pts.iter().filter(|p| p.queries <= q).max_by_key(|p| p.queries).copied())
                    .collect();
                aggregates.push(aggregate(task, q, &at.iter().map(|p| (p.r_eval, p.satisfied)).collect::<Vec<_>>()));
            }
        }
        self.aggregates = aggregates;
        let mut finals: BTreeMap<&str, Vec<(f64, bool, usize)>> = BTreeMap::new();
        for f in &self.finals {
            finals.entry(&f.task).or_default().push((f.r_eval, f.satisfied, f.queries));
        }
        self.final_aggregates = finals
            .iter()
            .map(|(task, rows)| {
                let q = rows.iter().map(|r| r.2).max().unwrap_or(0);
                aggregate(task, q, &rows.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>())
            })
            .collect();
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Curve rows as CSV: task, seed, queries, r_eval, satisfied, displacement.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("task,seed,queries,r_eval,satisfied,displacement\n");
        for p in &self.curves {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.task, p.seed, p.queries, p.r_eval, p.satisfied as u8, p.displacement
            );
        }
        out
    }

    pub fn tasks(&self) -> Vec<String> {
        let mut t: Vec<String> = self.curves.iter().map(|p| p.task.clone()).collect();
        t.sort();
        t.dedup();
        t
    }
}

fn aggregate(task: &str, queries: usize, values: &[(f64, bool)]) -> Aggregate {
    let r: Vec<f64> = values.iter().map(|v| v.0).collect();
    let (mean, se) = mean_stderr(&r);
    let n = values.len();
    Aggregate {
        task: task.to_string(),
        queries,
        seeds: n,
        mean_r_eval: mean,
        stderr_r_eval: se,
        success_rate: if n == 0 {
            f64::NAN
        } else {
            values.iter().filter(|v| v.1).count() as f64 / n as f64
        },
    }
}
