//! Run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gem_core::eval::EvalConfig;
use gem_core::mairl::MairlConfig;
use gem_core::refine::RefineConfig;
use gem_core::task::resolve_task_path;
use serde::{Deserialize, Serialize};

/// Default port of the feedback service.
pub const DEFAULT_PORT: u16 = 8765;
/// Environment variable that overrides the service port.
pub const PORT_ENV: &str = "GEM_ORACLE_PORT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    Sim,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: PathBuf,
    pub oracle: OracleKind,
    pub seed: u64,
    pub out: PathBuf,
    pub mairl: MairlConfig,
    pub refine: RefineConfig,
    pub eval: EvalConfig,
    pub port: u16,
    /// Seconds to wait for a human verdict before suspending; `None` waits forever.
    pub feedback_timeout_secs: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: PathBuf::from("tasks/task1"),
            oracle: OracleKind::Sim,
            seed: 0,
            out: PathBuf::from("runs/task1-seed0"),
            mairl: MairlConfig::default(),
            refine: RefineConfig::default(),
            eval: EvalConfig::default(),
            port: DEFAULT_PORT,
            feedback_timeout_secs: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !resolve_task_path(&self.task).is_file() {
            bail!("task file {} not found", self.task.display());
        }
        self.mairl.validate()?;
        self.refine.validate()?;
        validate_eval(&self.eval)?;
        if self.out.as_os_str().is_empty() {
            bail!("output directory must be set");
        }
        if self.feedback_timeout_secs == Some(0) {
            bail!("feedback timeout must be positive");
        }
        Ok(())
    }

    /// Short label for the method, used in reports.
    pub fn method(&self) -> String {
        method_label(&self.refine)
    }
}

pub fn method_label(refine: &RefineConfig) -> String {
    let a = &refine.ablations;
    let mut parts = Vec::new();
    if a.no_prev_reward_term {
        parts.push("no_prev_reward_term");
    }
    if a.fixed_full_graph {
        parts.push("fixed_full_graph");
    }
    if a.no_mappings {
        parts.push("no_mappings");
    }
    if a.random_queries {
        parts.push("random_queries");
    }
    if parts.is_empty() {
        "gem".to_string()
    } else {
        format!("gem[{}]", parts.join(","))
    }
}

pub fn validate_eval(e: &EvalConfig) -> anyhow::Result<()> {
    if e.rounds == 0 || e.per_round == 0 {
        bail!("goal search needs at least one round and one candidate per round");
    }
    if !(e.sigma_start > 0.0 && e.sigma_end > 0.0 && e.sigma_start.is_finite() && e.sigma_end.is_finite()) {
        bail!("goal search step sizes must be positive");
    }
    Ok(())
}

/// Port from the environment override, else `fallback`.
pub fn port_from_env(fallback: u16) -> anyhow::Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{PORT_ENV}={v} is not a port")),
        Err(_) => Ok(fallback),
    }
}
