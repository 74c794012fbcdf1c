//! Active refinement of the relation graph, the mapping bits and the reward.
//!
//! Each iteration proposes a local change to the hypothesis, finetunes the
//! reward under it, and asks the oracle about one query scene chosen to be
//! good under the new reward and poor under the old one. Accepted proposals
//! replace the hypothesis; rejected ones only add a negative example.

use log::{debug, info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::sample_reachable;
use crate::error::{GemError, Result};
use crate::mairl::{DemoRewardSet, InitialReward, RewardSample};
use crate::mappings::transform_state;
use crate::nn::{Adam, Mlp, DEFAULT_LR};
use crate::relations::{simulated_oracle, Feedback, GoalSpec};
use crate::reward::{EdgeBatch, RewardInput, RewardNet, RewardSnapshot};
use crate::rng::{substream, TAG_REFINE};
use crate::scene::{Edge, MappingAssignment, MappingKind, RelationGraph, Scene};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    /// Drop the previous-reward penalty from query selection.
    pub no_prev_reward_term: bool,
    /// Never propose graph changes.
    pub fixed_full_graph: bool,
    /// Never propose mapping bits.
    pub no_mappings: bool,
    /// Pick a uniform candidate instead of the most informative one.
    pub random_queries: bool,
}

impl Ablations {
    /// The random-query baseline: full graph, no mappings, random queries.
    pub fn random_query_variant() -> Self {
        Self {
            no_prev_reward_term: false,
            fixed_full_graph: true,
            no_mappings: true,
            random_queries: true,
        }
    }

    /// Parses a comma separated list such as `random_queries,no_mappings`.
    /// `random_query_variant` expands to the full baseline.
    pub fn parse_list(list: &str) -> Result<Self> {
        let mut a = Self::default();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "no_prev_reward_term" => a.no_prev_reward_term = true,
                "fixed_full_graph" => a.fixed_full_graph = true,
                "no_mappings" => a.no_mappings = true,
                "random_queries" => a.random_queries = true,
                "random_query_variant" => {
                    let v = Self::random_query_variant();
                    a.fixed_full_graph = true;
                    a.no_mappings = true;
                    a.random_queries = v.random_queries;
                }
                other => return Err(GemError::Config(format!("unknown ablation {other:?}"))),
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Probability of a mapping move; `None` picks 0.2 for three objects and 0.5 otherwise.
    pub q_type: Option<f64>,
    pub q_remove: f64,
    pub lambda: f64,
    pub finetune_updates: usize,
    pub batch_reg: usize,
    pub batch_rank: usize,
    pub candidate_budget: usize,
    pub max_iterations: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Finetune from the initial reward instead of the current hypothesis.
    pub restart_from_initial: bool,
    pub ablations: Ablations,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            q_type: None,
            q_remove: 0.5,
            lambda: 0.2,
            finetune_updates: 5000,
            batch_reg: 16,
            batch_rank: 16,
            candidate_budget: 512,
            max_iterations: 60,
            patience: 15,
            learning_rate: DEFAULT_LR,
            restart_from_initial: false,
            ablations: Ablations::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GemError::Config(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if let Some(q) = self.q_type {
            if !prob(q) {
                return bad("q_type must lie in [0, 1]");
            }
        }
        if !prob(self.q_remove) {
            return bad("q_remove must lie in [0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.batch_reg == 0 || self.candidate_budget == 0 {
            return bad("batch_reg and candidate_budget must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn q_type_for(&self, n_objects: usize) -> f64 {
        self.q_type
            .unwrap_or(if n_objects <= 3 { 0.2 } else { 0.5 })
    }

    pub fn effective_lambda(&self) -> f64 {
        if self.ablations.no_prev_reward_term {
            0.0
        } else {
            self.lambda
        }
    }

    /// Selection window over accepted hypotheses.
    pub fn selection_window(&self) -> usize {
        2 * self.patience
    }
}

/// Graph, mapping bits and reward parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "HypothesisRecord", try_from = "HypothesisRecord")]
pub struct Hypothesis {
    pub graph: RelationGraph,
    pub assignment: MappingAssignment,
    pub reward: RewardNet,
}

#[derive(Serialize, Deserialize)]
struct HypothesisRecord {
    graph: RelationGraph,
    assignment: MappingAssignment,
    reward: RewardSnapshot,
}

impl From<Hypothesis> for HypothesisRecord {
    fn from(h: Hypothesis) -> Self {
        Self {
            reward: RewardSnapshot::from(&h.reward),
            graph: h.graph,
            assignment: h.assignment,
        }
    }
}

impl TryFrom<HypothesisRecord> for Hypothesis {
    type Error = GemError;

    fn try_from(r: HypothesisRecord) -> Result<Self> {
        if !r.assignment.is_keyed_on(&r.graph) {
            return Err(GemError::Snapshot("assignment has bits off the graph".into()));
        }
        Ok(Self {
            graph: r.graph,
            assignment: r.assignment,
            reward: RewardNet::try_from(r.reward)?,
        })
    }
}

impl Hypothesis {
    pub fn reward_of(&self, scene: &Scene) -> Result<f64> {
        self.reward.scene_reward(scene, &self.graph)
    }

    pub fn rewards(&self, scenes: &[Scene]) -> Result<Vec<f64>> {
        self.reward.scene_rewards(scenes, &self.graph)
    }
}

/// What a proposal changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProposalKind {
    ToggleMapping { edge: Edge, mapping: MappingKind },
    RemoveEdge { edge: Edge },
    AddEdge { edge: Edge },
    /// Graph and bits are both fixed by ablations; only the reward changes.
    Unchanged,
}

fn pick<T: Copy, R: Rng + ?Sized>(items: &[T], rng: &mut R) -> T {
    items[rng.random_range(0..items.len())]
}

fn mapping_move<R: Rng + ?Sized>(
    graph: &RelationGraph,
    assignment: &MappingAssignment,
    rng: &mut R,
) -> (RelationGraph, MappingAssignment, ProposalKind) {
    let slots: Vec<(Edge, MappingKind)> = graph
        .edges()
        .flat_map(|e| MappingKind::ALL.into_iter().map(move |k| (e, k)))
        .collect();
    let (edge, mapping) = pick(&slots, rng);
    (
        graph.clone(),
        assignment.toggled(edge, mapping),
        ProposalKind::ToggleMapping { edge, mapping },
    )
}

/// Draws a local change to `(graph, assignment)`.
///
/// Removal never empties the graph and addition never exceeds the complete
/// graph; either case falls back to the other graph move. Removed edges lose
/// their bits and added edges start with none.
pub fn propose<R: Rng + ?Sized>(
    graph: &RelationGraph,
    assignment: &MappingAssignment,
    config: &RefineConfig,
    rng: &mut R,
) -> (RelationGraph, MappingAssignment, ProposalKind) {
    let ab = config.ablations;
    let graph_moves_possible = graph.len() > 1 || !graph.is_complete();
    let mapping_allowed = !ab.no_mappings;
    let graph_allowed = !ab.fixed_full_graph && graph_moves_possible;
    if !mapping_allowed && !graph_allowed {
        return (graph.clone(), assignment.clone(), ProposalKind::Unchanged);
    }
    let u: f64 = rng.random();
    let take_mapping = if !graph_allowed {
        true
    } else if !mapping_allowed {
        false
    } else {
        u < config.q_type_for(graph.n())
    };
    if take_mapping {
        return mapping_move(graph, assignment, rng);
    }
    let remove_draw: f64 = rng.random();
    let mut remove = remove_draw < config.q_remove;
    if remove && graph.len() == 1 {
        remove = false;
    } else if !remove && graph.is_complete() {
        remove = true;
    }
    if remove {
        let edges: Vec<Edge> = graph.edges().collect();
        let edge = pick(&edges, rng);
        let g = graph.without_edge(edge).expect("graph keeps at least one edge");
        let a = assignment.restricted_to(&g);
        (g, a, ProposalKind::RemoveEdge { edge })
    } else {
        let edge = pick(&graph.absent_edges(), rng);
        let g = graph.with_edge(edge).expect("edge was absent");
        let a = assignment.restricted_to(&g);
        (g, a, ProposalKind::AddEdge { edge })
    }
}

/// Regression and ranking examples used when finetuning.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSets<'a> {
    pub demo_rewards: &'a DemoRewardSet,
    pub positives: &'a [Scene],
    pub negatives: &'a [Scene],
}

/// Regression loss plus hinge ranking loss on one batch.
pub fn finetune_loss(
    reward: &RewardNet,
    graph: &RelationGraph,
    reg: &[(RewardInput<'_>, f64)],
    rank: &[(RewardInput<'_>, RewardInput<'_>)],
) -> Result<(f64, Option<Mlp>)> {
    let mut batch = EdgeBatch::new();
    for (x, _) in reg {
        batch.push(*x, graph)?;
    }
    for (pos, neg) in rank {
        batch.push(*pos, graph)?;
        batch.push(*neg, graph)?;
    }
    let (r, cache) = reward.forward_batch_cached(&batch)?;
    let mut upstream = vec![0.0; r.len()];
    let mut loss = 0.0;
    let nr = reg.len().max(1) as f64;
    for (k, (_, target)) in reg.iter().enumerate() {
        let diff = r[k] - target;
        loss += diff * diff / nr;
        upstream[k] = 2.0 * diff / nr;
    }
    let nk = rank.len().max(1) as f64;
    for p in 0..rank.len() {
        let (ip, ineg) = (reg.len() + 2 * p, reg.len() + 2 * p + 1);
        let margin = r[ineg] - r[ip];
        if margin > 0.0 {
            loss += margin / nk;
            upstream[ineg] += 1.0 / nk;
            upstream[ip] -= 1.0 / nk;
        }
    }
    if !loss.is_finite() {
        return Ok((loss, None));
    }
    Ok((loss, Some(reward.backward_batch(&cache, &upstream))))
}

/// Adam finetuning of the reward under a candidate `(graph, assignment)`.
///
/// Every sample in every batch gets a fresh mapping draw and global shift.
/// The ranking term is skipped while there are no negatives.
pub fn finetune<R: Rng + ?Sized>(
    init: &RewardNet,
    graph: &RelationGraph,
    assignment: &MappingAssignment,
    sets: TrainingSets<'_>,
    config: &RefineConfig,
    rng: &mut R,
) -> Result<RewardNet> {
    if sets.demo_rewards.is_empty() {
        return Err(GemError::Config("empty demonstration reward set".into()));
    }
    let mut net = init.clone();
    let mut opt = Adam::new(&net.mlp, config.learning_rate);
    let use_rank = !sets.negatives.is_empty() && !sets.positives.is_empty() && config.batch_rank > 0;
    let entries = &sets.demo_rewards.entries;
    for u in 0..config.finetune_updates {
        let reg_sets: Vec<_> = (0..config.batch_reg)
            .map(|_| {
                let e: &RewardSample = &entries[rng.random_range(0..entries.len())];
                (transform_state(&e.scene, graph, assignment, rng), e.reward)
            })
            .collect();
        let rank_sets: Vec<_> = if use_rank {
            (0..config.batch_rank)
                .map(|_| {
                    let p = &sets.positives[rng.random_range(0..sets.positives.len())];
                    let n = &sets.negatives[rng.random_range(0..sets.negatives.len())];
                    (
                        transform_state(p, graph, assignment, rng),
                        transform_state(n, graph, assignment, rng),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let reg: Vec<_> = reg_sets.iter().map(|(t, r)| (RewardInput::Edges(t), *r)).collect();
        let rank: Vec<_> = rank_sets
            .iter()
            .map(|(p, n)| (RewardInput::Edges(p), RewardInput::Edges(n)))
            .collect();
        let (loss, grad) = finetune_loss(&net, graph, &reg, &rank)?;
        let Some(grad) = grad else {
            return Err(GemError::Diverged(format!("finetune loss {loss} at update {u}")));
        };
        opt.step(&mut net.mlp, &grad)?;
        if !net.mlp.is_finite() {
            return Err(GemError::Diverged(format!("non-finite parameters at update {u}")));
        }
    }
    Ok(net)
}

/// `R_new(s) - lambda * R_prev(s)` for each candidate.
pub fn query_objectives(
    new: &Hypothesis,
    prev: &Hypothesis,
    candidates: &[Scene],
    lambda: f64,
) -> Result<Vec<f64>> {
    let rn = new.rewards(candidates)?;
    let rp = prev.rewards(candidates)?;
    Ok(rn.iter().zip(&rp).map(|(a, b)| a - lambda * b).collect())
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= *v => {}
            _ if v.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Chosen query with the candidate list it came from.
#[derive(Debug, Clone)]
pub struct QueryChoice {
    pub scene: Scene,
    pub index: usize,
    pub candidates: Vec<Scene>,
}

/// Picks the next query among reachable candidates around `s_prev`.
pub fn sample_query<R: Rng + ?Sized>(
    new: &Hypothesis,
    prev: &Hypothesis,
    s_prev: &Scene,
    config: &RefineConfig,
    rng: &mut R,
) -> Result<QueryChoice> {
    let cands = sample_reachable(s_prev, rng, config.candidate_budget)?;
    if cands.skipped > 0 {
        debug!("{} candidates skipped during projection", cands.skipped);
    }
    if cands.scenes.is_empty() {
        return Err(GemError::EmptyCandidates);
    }
    let index = if config.ablations.random_queries {
        rng.random_range(0..cands.scenes.len())
    } else {
        let obj = query_objectives(new, prev, &cands.scenes, config.effective_lambda())?;
        argmax(&obj).ok_or_else(|| GemError::NonFinite("query objectives".into()))?
    };
    Ok(QueryChoice {
        scene: cands.scenes[index].clone(),
        index,
        candidates: cands.scenes,
    })
}

/// Source of accept/reject verdicts.
pub trait Oracle {
    fn feedback(&mut self, iteration: usize, query: &Scene) -> Result<Feedback>;
}

/// Ground-truth goal checker.
pub struct SimulatedOracle {
    pub goal: GoalSpec,
}

impl Oracle for SimulatedOracle {
    fn feedback(&mut self, _iteration: usize, query: &Scene) -> Result<Feedback> {
        simulated_oracle(&self.goal, query)
    }
}

/// Replays a fixed verdict sequence; fails once it runs out.
pub struct ReplayOracle {
    verdicts: Vec<bool>,
    next: usize,
}

impl ReplayOracle {
    pub fn new(verdicts: Vec<bool>) -> Self {
        Self { verdicts, next: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl Oracle for ReplayOracle {
    fn feedback(&mut self, iteration: usize, _query: &Scene) -> Result<Feedback> {
        let v = self.verdicts.get(self.next).copied().ok_or_else(|| {
            GemError::OracleUnavailable(format!("no recorded verdict for iteration {iteration}"))
        })?;
        self.next += 1;
        Ok(Feedback { accept: v })
    }
}

/// An accepted hypothesis with the iteration it was accepted at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedHypothesis {
    pub iteration: usize,
    pub hypothesis: Hypothesis,
}

/// One log line per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub proposal: ProposalKind,
    pub graph: RelationGraph,
    pub assignment: MappingAssignment,
    pub query: Option<Scene>,
    pub feedback: Option<bool>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A proposal that is waiting for the oracle.
#[derive(Debug, Clone)]
pub struct PendingQuery {
    pub iteration: usize,
    pub proposal: ProposalKind,
    pub hypothesis: Hypothesis,
    pub query: Scene,
}

/// Outcome of preparing an iteration.
#[derive(Debug, Clone)]
pub enum Prepared {
    Query(Box<PendingQuery>),
    /// Finetuning failed; the iteration counts as rejected without a query.
    SelfRejected(IterationRecord),
}

/// Full state of the refinement loop, enough to resume it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineState {
    pub seed: u64,
    /// Number of completed iterations.
    pub iteration: usize,
    pub current: Hypothesis,
    pub initial_reward: RewardNet,
    pub demo_rewards: DemoRewardSet,
    pub positives: Vec<Scene>,
    pub negatives: Vec<Scene>,
    pub anchor_reward: f64,
    /// Scene the next query is sampled around.
    pub physical: Scene,
    pub history: Vec<AcceptedHypothesis>,
    /// Last iteration at which a strictly sparser graph than before was accepted.
    pub last_sparser: usize,
    pub queries_asked: usize,
}

impl RefineState {
    /// Starts at the demonstration's final state with the full graph.
    pub fn new(phase_one: &InitialReward, demo_final: &Scene, seed: u64) -> Result<Self> {
        let graph = phase_one.model.graph();
        let current = Hypothesis {
            graph,
            assignment: MappingAssignment::empty(),
            reward: phase_one.model.reward.clone(),
        };
        Ok(Self {
            seed,
            iteration: 0,
            initial_reward: current.reward.clone(),
            history: vec![AcceptedHypothesis {
                iteration: 0,
                hypothesis: current.clone(),
            }],
            current,
            demo_rewards: phase_one.demo_rewards.clone(),
            positives: vec![demo_final.clone()],
            negatives: Vec::new(),
            anchor_reward: phase_one.anchor_reward,
            physical: demo_final.clone(),
            last_sparser: 0,
            queries_asked: 0,
        })
    }

    pub fn sparsest_accepted(&self) -> usize {
        self.history
            .iter()
            .map(|h| h.hypothesis.graph.len())
            .min()
            .expect("history holds the initial hypothesis")
    }

    pub fn is_finished(&self, config: &RefineConfig) -> bool {
        if self.iteration >= config.max_iterations {
            return true;
        }
        !config.ablations.fixed_full_graph && self.iteration - self.last_sparser >= config.patience
    }

    /// Proposal, finetuning and query selection for the next iteration.
    /// Pure in the state: calling it twice gives the same result.
    pub fn prepare(&self, config: &RefineConfig) -> Result<Prepared> {
        let l = self.iteration + 1;
        let mut rng = substream(self.seed, &[TAG_REFINE, l as u64, 0]);
        let (graph, assignment, proposal) = propose(&self.current.graph, &self.current.assignment, config, &mut rng);
        let init = if config.restart_from_initial {
            &self.initial_reward
        } else {
            &self.current.reward
        };
        let sets = TrainingSets {
            demo_rewards: &self.demo_rewards,
            positives: &self.positives,
            negatives: &self.negatives,
        };
        let mut ft_rng = substream(self.seed, &[TAG_REFINE, l as u64, 1]);
        let reward = match finetune(init, &graph, &assignment, sets, config, &mut ft_rng) {
            Ok(r) => r,
            Err(GemError::Diverged(msg)) | Err(GemError::NonFinite(msg)) => {
                warn!("iteration {l}: finetuning failed ({msg}); proposal dropped");
                return Ok(Prepared::SelfRejected(IterationRecord {
                    iteration: l,
                    proposal,
                    graph,
                    assignment,
                    query: None,
                    feedback: None,
                    accepted: false,
                    note: Some(format!("finetune failed: {msg}")),
                }));
            }
            Err(e) => return Err(e),
        };
        let hypothesis = Hypothesis {
            graph,
            assignment,
            reward,
        };
        let mut q_rng = substream(self.seed, &[TAG_REFINE, l as u64, 2]);
        let choice = sample_query(&hypothesis, &self.current, &self.physical, config, &mut q_rng)?;
        Ok(Prepared::Query(Box::new(PendingQuery {
            iteration: l,
            proposal,
            hypothesis,
            query: choice.scene,
        })))
    }

    /// Applies a prepared iteration and the oracle's verdict (if any).
    pub fn commit(&mut self, prepared: Prepared, feedback: Option<Feedback>) -> Result<IterationRecord> {
        match prepared {
            Prepared::SelfRejected(record) => {
                if record.iteration != self.iteration + 1 {
                    return Err(GemError::Config("stale iteration".into()));
                }
                self.iteration = record.iteration;
                Ok(record)
            }
            Prepared::Query(p) => {
                let p = *p;
                if p.iteration != self.iteration + 1 {
                    return Err(GemError::Config("stale iteration".into()));
                }
                let fb = feedback.ok_or_else(|| GemError::OracleUnavailable("missing verdict".into()))?;
                self.queries_asked += 1;
                let mut note = None;
                if fb.accept {
                    if self.negatives.contains(&p.query) {
                        warn!("iteration {}: accepted scene was rejected earlier; not added to positives", p.iteration);
                        note = Some("conflicting verdict".to_string());
                    } else {
                        self.positives.push(p.query.clone());
                        self.demo_rewards.entries.push(RewardSample {
                            scene: p.query.clone(),
                            reward: self.anchor_reward,
                        });
                    }
                    if p.hypothesis.graph.len() < self.sparsest_accepted() {
                        self.last_sparser = p.iteration;
                    }
                    self.current = p.hypothesis.clone();
                    self.physical = p.query.clone();
                    self.history.push(AcceptedHypothesis {
                        iteration: p.iteration,
                        hypothesis: p.hypothesis.clone(),
                    });
                } else if self.positives.contains(&p.query) {
                    warn!("iteration {}: rejected scene was accepted earlier; not added to negatives", p.iteration);
                    note = Some("conflicting verdict".to_string());
                } else {
                    self.negatives.push(p.query.clone());
                }
                self.iteration = p.iteration;
                info!(
                    "iteration {}: {:?} graph {} bits {} -> {}",
                    p.iteration,
                    p.proposal,
                    p.hypothesis.graph,
                    p.hypothesis.assignment.count(),
                    if fb.accept { "accepted" } else { "rejected" }
                );
                Ok(IterationRecord {
                    iteration: p.iteration,
                    proposal: p.proposal,
                    graph: p.hypothesis.graph,
                    assignment: p.hypothesis.assignment,
                    query: Some(p.query),
                    feedback: Some(fb.accept),
                    accepted: fb.accept,
                    note,
                })
            }
        }
    }

    /// Runs one full iteration against `oracle`.
    pub fn step(&mut self, config: &RefineConfig, oracle: &mut dyn Oracle) -> Result<IterationRecord> {
        let prepared = self.prepare(config)?;
        let fb = match &prepared {
            Prepared::Query(p) => Some(oracle.feedback(p.iteration, &p.query)?),
            Prepared::SelfRejected(_) => None,
        };
        self.commit(prepared, fb)
    }

    /// Hypothesis used at test time after the iterations so far.
    pub fn selected(&self, config: &RefineConfig) -> &Hypothesis {
        select_test_hypothesis(&self.history, self.iteration, config.selection_window())
    }
}

/// Runs iterations until the stopping rule fires. `on_iteration` sees every
/// record and the updated state, e.g. to append logs or checkpoint.
pub fn refine_loop(
    state: &mut RefineState,
    config: &RefineConfig,
    oracle: &mut dyn Oracle,
    mut on_iteration: impl FnMut(&IterationRecord, &RefineState) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    while !state.is_finished(config) {
        let record = state.step(config, oracle)?;
        on_iteration(&record, state)?;
    }
    Ok(())
}

/// Sparsest hypothesis accepted within the last `window` iterations up to
/// `now`; ties go to more mapping bits, then to the most recent. Falls back
/// to the latest accepted hypothesis when none is in the window.
pub fn select_test_hypothesis(history: &[AcceptedHypothesis], now: usize, window: usize) -> &Hypothesis {
    let start = now.saturating_sub(window);
    let recent = history.iter().filter(|h| h.iteration <= now && h.iteration > start);
    let best = recent.min_by(|a, b| {
        let ka = (a.hypothesis.graph.len(), std::cmp::Reverse(a.hypothesis.assignment.count()), std::cmp::Reverse(a.iteration));
        let kb = (b.hypothesis.graph.len(), std::cmp::Reverse(b.hypothesis.assignment.count()), std::cmp::Reverse(b.iteration));
        ka.cmp(&kb)
    });
    match best {
        Some(h) => &h.hypothesis,
        None => {
            &history
                .iter()
                .rfind(|h| h.iteration <= now)
                .unwrap_or_else(|| history.first().expect("non-empty history"))
                .hypothesis
        }
    }
}
