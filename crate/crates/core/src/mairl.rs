//! Model-based adversarial IRL for the initial reward.
//!
//! The generator is not learned: the policy is a softmax over one-step
//! lookahead values of the shaping network, using the exact simulator as the
//! world model. The discriminator is the usual AIRL form
//! `D = exp(f) / (exp(f) + pi)` with a state-only reward term.

use log::{debug, info};
use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{all_actions, step, Action, Move, Trajectory};
use crate::error::{GemError, Result};
use crate::nn::Adam;
use crate::reward::{EdgeBatch, RewardNet, RewardSnapshot, ValueNet, ValueSnapshot, HIDDEN_DEPTH, HIDDEN_WIDTH};
use crate::rng::{substream, TAG_INIT, TAG_MAIRL};
use crate::scene::{RelationGraph, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MairlConfig {
    /// Total sampled generator transitions.
    pub generator_steps: usize,
    /// Transitions sampled per generator round.
    pub steps_per_round: usize,
    /// Discriminator passes over the rollout buffer after each round.
    pub discriminator_updates: usize,
    /// Rollout transitions per discriminator minibatch.
    pub minibatch: usize,
    pub gamma: f64,
    pub beta: f64,
    pub learning_rate: f64,
    /// Episode length for rollouts.
    pub horizon: usize,
    pub hidden_width: usize,
    pub hidden_depth: usize,
}

impl Default for MairlConfig {
    fn default() -> Self {
        Self {
            generator_steps: 20_000,
            steps_per_round: 2048,
            discriminator_updates: 4,
            minibatch: 64,
            gamma: 0.99,
            beta: 0.3,
            learning_rate: 1e-3,
            horizon: 50,
            hidden_width: HIDDEN_WIDTH,
            hidden_depth: HIDDEN_DEPTH,
        }
    }
}

impl MairlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GemError::Config(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.steps_per_round == 0 || self.minibatch == 0 {
            return bad("steps_per_round and minibatch must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        Ok(())
    }
}

/// Reward term, shaping term and the policy temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct MairlModel {
    pub reward: RewardNet,
    pub value: ValueNet,
    pub gamma: f64,
    pub beta: f64,
}

/// Policy over all `11 * n` actions at one scene.
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    pub actions: Vec<Action>,
    pub successors: Vec<Scene>,
    pub log_probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return i;
            }
        }
        self.log_probs.len() - 1
    }

    pub fn index_of(&self, a: Action) -> Option<usize> {
        self.actions.iter().position(|&b| b == a)
    }
}

/// Softmax of `beta * values` in log space.
pub fn log_softmax(values: &[f64], beta: f64) -> Vec<f64> {
    let max = values.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + values.iter().map(|v| (beta * v - max).exp()).sum::<f64>().ln();
    values.iter().map(|v| beta * v - lse).collect()
}

/// Logistic function evaluated without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` evaluated without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `exp(f) / (exp(f) + policy_prob)` via its logit `f - ln(policy_prob)`.
pub fn discriminator_from_advantage(advantage: f64, policy_prob: f64) -> f64 {
    sigmoid(advantage - policy_prob.ln())
}

impl MairlModel {
    pub fn new<R: Rng + ?Sized>(n_objects: usize, config: &MairlConfig, rng: &mut R) -> Self {
        let reward = RewardNet::with_shape(config.hidden_width, config.hidden_depth, rng);
        let value = ValueNet::with_shape(n_objects, config.hidden_width, config.hidden_depth, rng);
        Self {
            reward,
            value,
            gamma: config.gamma,
            beta: config.beta,
        }
    }

    pub fn n_objects(&self) -> usize {
        self.value.n_objects
    }

    /// The fully connected graph the initial reward is conditioned on.
    pub fn graph(&self) -> RelationGraph {
        RelationGraph::complete(self.n_objects()).expect("at least two objects")
    }

    pub fn reward_of(&self, scene: &Scene) -> Result<f64> {
        self.reward.scene_reward(scene, &self.graph())
    }

    /// `g(s) + gamma * h(s') - h(s)`.
    pub fn advantage(&self, s: &Scene, next: &Scene) -> Result<f64> {
        let g = self.reward_of(s)?;
        let h = self.value.values([s, next])?;
        Ok(g + self.gamma * h[1] - h[0])
    }

    pub fn policy(&self, scene: &Scene) -> Result<ActionDistribution> {
        let actions = all_actions(scene.len());
        let successors: Vec<Scene> = actions.iter().map(|&a| step(scene, a)).collect();
        let values = self.value.values(&successors)?;
        let log_probs = log_softmax(&values, self.beta);
        Ok(ActionDistribution {
            actions,
            successors,
            log_probs,
        })
    }

    pub fn discriminator_prob(&self, policy_prob: f64, s: &Scene, next: &Scene) -> Result<f64> {
        Ok(discriminator_from_advantage(self.advantage(s, next)?, policy_prob))
    }
}

/// One `(scene, reward)` regression target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    pub scene: Scene,
    pub reward: f64,
}

/// Demonstration states with their target rewards.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DemoRewardSet {
    pub entries: Vec<RewardSample>,
}

impl DemoRewardSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.reward).collect()
    }

    /// `(max - min)` of the target rewards.
    pub fn range(&self) -> f64 {
        let r = self.rewards();
        let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Per-round training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub loss: f64,
    pub expert_d: f64,
    pub rollout_d: f64,
}

struct Transition {
    s: Scene,
    next: Scene,
    log_pi: f64,
}

fn sample_rollouts<R: Rng + ?Sized>(
    model: &MairlModel,
    start: &Scene,
    horizon: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut s = start.clone();
        for _ in 0..horizon {
            if out.len() >= count {
                break;
            }
            let dist = model.policy(&s)?;
            let i = dist.sample(rng);
            let next = dist.successors[i].clone();
            out.push(Transition {
                s,
                next: next.clone(),
                log_pi: dist.log_probs[i],
            });
            s = next;
        }
    }
    Ok(out)
}

fn expert_transitions(model: &MairlModel, demo: &Trajectory) -> Result<Vec<Transition>> {
    let mut out = Vec::with_capacity(demo.len() + 1);
    let terminal = Action {
        object: 0,
        mv: Move::Stop,
    };
    let final_state = demo.final_state();
    let pairs = demo
        .transitions()
        .chain(std::iter::once((final_state, terminal, final_state)));
    for (s, a, next) in pairs {
        let dist = model.policy(s)?;
        let i = dist
            .index_of(a)
            .ok_or_else(|| GemError::InvalidScene(format!("action {a:?} out of range")))?;
        out.push(Transition {
            s: s.clone(),
            next: next.clone(),
            log_pi: dist.log_probs[i],
        });
    }
    Ok(out)
}

/// One discriminator gradient step on the expert batch plus a rollout minibatch.
/// Returns the loss and mean discriminator outputs before the update.
fn discriminator_step(
    model: &mut MairlModel,
    expert: &[Transition],
    rollouts: &[&Transition],
    opt_g: &mut Adam,
    opt_h: &mut Adam,
) -> Result<(f64, f64, f64)> {
    let graph = model.graph();
    let all: Vec<&Transition> = expert.iter().chain(rollouts.iter().copied()).collect();
    let n_expert = expert.len();

    let mut batch = EdgeBatch::new();
    for t in &all {
        batch.push_scene(&t.s, &graph)?;
    }
    let (g, g_cache) = model.reward.forward_batch_cached(&batch)?;
    let x = model
        .value
        .input_matrix(all.iter().map(|t| &t.s).chain(all.iter().map(|t| &t.next)))?;
    let (h, h_cache) = model.value.mlp.forward_cached(x.view())?;
    let m = all.len();

    let mut loss = 0.0;
    let mut d_f = vec![0.0; m];
    let (mut de, mut dr) = (0.0, 0.0);
    for k in 0..m {
        let f = g[k] + model.gamma * h[m + k] - h[k];
        let logit = f - all[k].log_pi;
        let d = sigmoid(logit);
        if k < n_expert {
            loss += softplus(-logit) / n_expert as f64;
            d_f[k] = -(1.0 - d) / n_expert as f64;
            de += d / n_expert as f64;
        } else {
            let nr = (m - n_expert) as f64;
            loss += softplus(logit) / nr;
            d_f[k] = d / nr;
            dr += d / nr;
        }
    }
    if !loss.is_finite() {
        return Err(GemError::Diverged(format!(
            "discriminator loss {loss} (expert D {de:.4}, rollout D {dr:.4})"
        )));
    }

    let grad_g = model.reward.backward_batch(&g_cache, &d_f);
    let mut up_h = Array1::zeros(2 * m);
    for k in 0..m {
        up_h[k] = -d_f[k];
        up_h[m + k] = model.gamma * d_f[k];
    }
    let grad_h = model.value.mlp.backward(&h_cache, up_h.view());
    opt_g.step(&mut model.reward.mlp, &grad_g)?;
    opt_h.step(&mut model.value.mlp, &grad_h)?;
    Ok((loss, de, dr))
}

/// Result of the first learning phase.
#[derive(Debug, Clone)]
pub struct InitialReward {
    pub model: MairlModel,
    pub demo_rewards: DemoRewardSet,
    /// Standardized reward of the demonstration's final state.
    pub anchor_reward: f64,
    pub stats: Vec<RoundStats>,
}

/// Trains the initial reward on a fully connected graph from one demonstration.
///
/// The returned reward network is rescaled so its outputs on the
/// demonstration states have zero mean and unit variance; the demo reward set
/// holds those standardized values.
pub fn train_initial_reward(demo: &Trajectory, config: &MairlConfig, seed: u64) -> Result<InitialReward> {
    config.validate()?;
    demo.validate()?;
    if demo.is_empty() {
        return Err(GemError::Config("demonstration has no transitions".into()));
    }
    let n = demo.initial().len();
    let mut init_rng = substream(seed, &[TAG_MAIRL, TAG_INIT]);
    let mut model = MairlModel::new(n, config, &mut init_rng);
    let mut opt_g = Adam::new(&model.reward.mlp, config.learning_rate);
    let mut opt_h = Adam::new(&model.value.mlp, config.learning_rate);
    let horizon = config.horizon;

    let rounds = config.generator_steps.div_ceil(config.steps_per_round);
    let mut stats = Vec::with_capacity(rounds);
    let mut sampled = 0;
    for round in 0..rounds {
        let mut rng = substream(seed, &[TAG_MAIRL, round as u64]);
        let count = config.steps_per_round.min(config.generator_steps - sampled);
        sampled += count;
        let rollouts = sample_rollouts(&model, demo.initial(), horizon, count, &mut rng)?;
        let mut last = (0.0, 0.0, 0.0);
        for _ in 0..config.discriminator_updates {
            let expert = expert_transitions(&model, demo)?;
            let mut order: Vec<usize> = (0..rollouts.len()).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            for chunk in order.chunks(config.minibatch) {
                let mb: Vec<&Transition> = chunk.iter().map(|&i| &rollouts[i]).collect();
                last = discriminator_step(&mut model, &expert, &mb, &mut opt_g, &mut opt_h)?;
            }
        }
        debug!(
            "mairl round {round}: loss {:.4} expert D {:.3} rollout D {:.3}",
            last.0, last.1, last.2
        );
        stats.push(RoundStats {
            round,
            loss: last.0,
            expert_d: last.1,
            rollout_d: last.2,
        });
    }

    let graph = model.graph();
    let raw = model.reward.scene_rewards(&demo.states, &graph)?;
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let var = raw.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / raw.len() as f64;
    let std = var.sqrt();
    if !(std > 1e-12 && std.is_finite()) {
        return Err(GemError::Diverged(format!(
            "demonstration rewards are degenerate (std {std:e})"
        )));
    }
    model.reward.standardize(mean, std);
    let demo_rewards = DemoRewardSet {
        entries: demo
            .states
            .iter()
            .zip(&raw)
            .map(|(s, r)| RewardSample {
                scene: s.clone(),
                reward: (r - mean) / std,
            })
            .collect(),
    };
    let anchor_reward = demo_rewards.entries.last().expect("non-empty demo").reward;
    if let Some(s) = stats.last() {
        info!(
            "initial reward trained: {rounds} rounds, final loss {:.4}, anchor {anchor_reward:.3}",
            s.loss
        );
    }
    Ok(InitialReward {
        model,
        demo_rewards,
        anchor_reward,
        stats,
    })
}

/// Follows the highest-value successor until no action improves the value.
pub fn greedy_rollout(model: &MairlModel, start: &Scene, max_steps: usize) -> Result<Trajectory> {
    let mut traj = Trajectory::single(start.clone());
    for _ in 0..max_steps {
        let s = traj.final_state().clone();
        let here = model.value.value(&s)?;
        let dist = model.policy(&s)?;
        let values = model.value.values(&dist.successors)?;
        let (best, &v) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one action");
        if v <= here || dist.successors[best] == s {
            break;
        }
        traj.actions.push(dist.actions[best]);
        traj.states.push(dist.successors[best].clone());
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MairlSnapshot {
    pub reward: RewardSnapshot,
    pub value: ValueSnapshot,
    pub gamma: f64,
    pub beta: f64,
}

impl From<&MairlModel> for MairlSnapshot {
    fn from(m: &MairlModel) -> Self {
        Self {
            reward: RewardSnapshot::from(&m.reward),
            value: ValueSnapshot::from(&m.value),
            gamma: m.gamma,
            beta: m.beta,
        }
    }
}

impl TryFrom<MairlSnapshot> for MairlModel {
    type Error = GemError;

    fn try_from(s: MairlSnapshot) -> Result<Self> {
        Ok(Self {
            reward: RewardNet::try_from(s.reward)?,
            value: ValueNet::try_from(s.value)?,
            gamma: s.gamma,
            beta: s.beta,
        })
    }
}
