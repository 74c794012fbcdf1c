//! One run: initial reward, refinement and evaluation, persisted in a run
//! directory that can be resumed.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gem_core::eval::{budget_curve, evaluate_hypothesis, oracle_goal_state, Outcome};
use gem_core::mairl::{train_initial_reward, MairlSnapshot};
use gem_core::refine::{refine_loop, AcceptedHypothesis, IterationRecord, Oracle, RefineState};
use gem_core::task::Task;
use gem_core::GemError;

use crate::config::RunConfig;
use crate::plot::{curve_svg, Series};
use crate::report::{EvalReport, FinalRow, OracleRow};

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn phase1(&self) -> PathBuf {
        self.root.join("phase1")
    }
    pub fn log(&self) -> PathBuf {
        self.root.join("refine_log.jsonl")
    }
    pub fn hypotheses(&self) -> PathBuf {
        self.root.join("hypotheses")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint.json")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn curves(&self) -> PathBuf {
        self.root.join("curves.csv")
    }
    pub fn plot(&self) -> PathBuf {
        self.root.join("curve.svg")
    }
}

/// Writes through a temporary file and a rename so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn to_json<T: serde::Serialize>(v: &T) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn read_log(path: &Path) -> anyhow::Result<Vec<IterationRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for (k, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), k + 1))?);
    }
    Ok(out)
}

/// Verdicts in the order they were given.
pub fn verdicts(records: &[IterationRecord]) -> Vec<bool> {
    records.iter().filter_map(|r| r.feedback).collect()
}

/// Drops log lines past the checkpointed iteration (written before a crash).
fn truncate_log(path: &Path, iteration: usize) -> anyhow::Result<()> {
    let records = read_log(path)?;
    let keep: Vec<&IterationRecord> = records.iter().filter(|r| r.iteration <= iteration).collect();
    if keep.len() != records.len() {
        log::warn!("dropping {} log lines past the checkpoint", records.len() - keep.len());
    }
    let mut text = String::new();
    for r in keep {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Everything a finished run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub state: RefineState,
    pub records: Vec<IterationRecord>,
    pub report: EvalReport,
}

/// Progress hook: called with the state after every iteration and once more
/// with `finished = true`.
pub type Progress<'a> = &'a mut dyn FnMut(&RefineState, bool);

/// Runs (or resumes) the full pipeline for `config` in `config.out`.
pub fn run(config: &RunConfig, oracle: &mut dyn Oracle, progress: Option<Progress<'_>>) -> anyhow::Result<RunOutcome> {
    config.validate()?;
    let dir = RunDir::new(&config.out);
    fs::create_dir_all(&dir.root).with_context(|| format!("creating {}", dir.root.display()))?;
    let config_bytes = to_json(config)?;
    if dir.config().exists() {
        let existing: RunConfig = RunConfig::load(&dir.config())?;
        if &existing != config {
            bail!(
                "{} holds a run with a different configuration; use a new output directory",
                dir.root.display()
            );
        }
    } else {
        write_atomic(&dir.config(), &config_bytes)?;
    }
    let task = Task::load(&config.task)?;
    let mut state = load_or_start(config, &dir, &task)?;
    truncate_log(&dir.log(), state.iteration)?;
    fs::create_dir_all(dir.hypotheses())?;

    let mut noop = |_: &RefineState, _: bool| {};
    let progress: Progress<'_> = progress.unwrap_or(&mut noop);
    progress(&state, false);
    let mut log_file = OpenOptions::new().append(true).create(true).open(dir.log())?;
    let result = refine_loop(&mut state, &config.refine, oracle, |record, st| {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        log_file.write_all(line.as_bytes())?;
        log_file.flush()?;
        if record.accepted {
            let accepted = st.history.last().expect("accepted hypothesis recorded");
            let path = dir.hypotheses().join(format!("iter_{:04}.json", record.iteration));
            write_atomic(&path, &serde_json::to_vec_pretty(accepted)?)?;
        }
        write_atomic(&dir.checkpoint(), &serde_json::to_vec(st)?)?;
        progress(st, false);
        Ok(())
    });
    drop(log_file);
    result?;
    progress(&state, true);

    let records = read_log(&dir.log())?;
    let report = evaluate_run(config, &task, &state, &records)?;
    write_atomic(&dir.report(), report.to_json()?.as_bytes())?;
    write_atomic(&dir.curves(), report.curves_csv().as_bytes())?;
    let series = [Series {
        label: &report.method,
        points: report.aggregates.iter().collect(),
    }];
    let svg = curve_svg(
        &format!("{} (seed {})", task.name, config.seed),
        &series,
        report.oracle_optimal.first().map(|o| o.r_eval),
    );
    write_atomic(&dir.plot(), svg.as_bytes())?;
    Ok(RunOutcome { state, records, report })
}

fn load_or_start(config: &RunConfig, dir: &RunDir, task: &Task) -> anyhow::Result<RefineState> {
    if dir.checkpoint().exists() {
        let state: RefineState = serde_json::from_slice(&fs::read(dir.checkpoint())?)
            .with_context(|| format!("reading {}", dir.checkpoint().display()))?;
        if state.seed != config.seed {
            bail!("checkpoint seed {} does not match the configuration", state.seed);
        }
        log::info!("resuming after iteration {}", state.iteration);
        return Ok(state);
    }
    log::info!("training the initial reward for {}", task.name);
    let phase_one = train_initial_reward(&task.demonstration, &config.mairl, config.seed)?;
    fs::create_dir_all(dir.phase1())?;
    write_atomic(&dir.phase1().join("model.json"), &to_json(&MairlSnapshot::from(&phase_one.model))?)?;
    write_atomic(&dir.phase1().join("demo_rewards.json"), &to_json(&phase_one.demo_rewards)?)?;
    write_atomic(&dir.phase1().join("stats.json"), &to_json(&phase_one.stats)?)?;
    let state = RefineState::new(&phase_one, task.demonstration.final_state(), config.seed)?;
    // Starting the log afresh: a log without a checkpoint is from an interrupted first iteration.
    if dir.log().exists() {
        fs::remove_file(dir.log())?;
    }
    write_atomic(&dir.checkpoint(), &serde_json::to_vec(&state)?)?;
    Ok(state)
}

/// Curves over query budgets, the final selected hypothesis and the
/// ground-truth reference for one finished run.
pub fn evaluate_run(
    config: &RunConfig,
    task: &Task,
    state: &RefineState,
    records: &[IterationRecord],
) -> anyhow::Result<EvalReport> {
    let window = config.refine.selection_window();
    let curves = budget_curve(
        &task.name,
        config.seed,
        &state.history,
        records,
        window,
        &task.test_scene,
        &task.goal,
        &config.eval,
    )?;
    let selected = state.selected(&config.refine);
    let idx = state
        .history
        .iter()
        .position(|h: &AcceptedHypothesis| std::ptr::eq(&h.hypothesis, selected))
        .expect("selected from history");
    let outcome: Outcome = evaluate_hypothesis(selected, &task.test_scene, &task.goal, &config.eval, config.seed, idx as u64)?;
    let reference = oracle_goal_state(&task.goal, &task.test_scene, &config.eval, config.seed)?;
    let mut report = EvalReport::new(&config.method());
    report.curves = curves;
    report.finals.push(FinalRow {
        task: task.name.clone(),
        seed: config.seed,
        queries: state.queries_asked,
        iterations: state.iteration,
        r_eval: outcome.r_eval,
        satisfied: outcome.satisfied,
        displacement: outcome.displacement,
        edges: selected.graph.edges().collect(),
        bits: selected.assignment.bits().collect(),
        goal_state: outcome.goal_state,
    });
    report.oracle_optimal.push(OracleRow::new(&task.name, &reference));
    report.recompute();
    Ok(report)
}

/// True when the error chain says the oracle stopped answering.
pub fn is_oracle_unavailable(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| matches!(c.downcast_ref::<GemError>(), Some(GemError::OracleUnavailable(_))))
}

/// Result of replaying a run's verdicts.
#[derive(Debug)]
pub struct Replay {
    pub outcome: RunOutcome,
    /// The replayed refinement log equals the original byte for byte.
    pub identical_log: bool,
}

/// Re-runs `source` into `out`, answering queries with the verdicts logged in
/// `source`. Only the output directory differs from the original config.
pub fn replay(source: &Path, out: &Path) -> anyhow::Result<Replay> {
    let src = RunDir::new(source);
    let mut config = RunConfig::load(&src.config())?;
    let original = fs::read(src.log()).with_context(|| format!("reading {}", src.log().display()))?;
    let verdicts = verdicts(&read_log(&src.log())?);
    config.out = out.to_path_buf();
    let mut oracle = gem_core::refine::ReplayOracle::new(verdicts);
    let outcome = run(&config, &mut oracle, None)?;
    let replayed = fs::read(RunDir::new(out).log())?;
    Ok(Replay {
        outcome,
        identical_log: replayed == original,
    })
}
