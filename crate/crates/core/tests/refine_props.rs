use std::sync::OnceLock;

use gem_core::env::random_valid_scene;
use gem_core::mairl::{train_initial_reward, InitialReward, MairlConfig};
use gem_core::refine::{
    refine_loop, sample_query, Hypothesis, Oracle, RefineConfig, RefineState, ReplayOracle,
};
use gem_core::relations::Feedback;
use gem_core::reward::RewardNet;
use gem_core::rng::substream;
use gem_core::scene::{Color, MappingAssignment, RelationGraph, Scene, Shape};
use gem_core::task::Task;
use gem_core::Result;
use rand::Rng;

fn task() -> Task {
    Task::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tasks/task1")).unwrap()
}

fn small_mairl() -> MairlConfig {
    MairlConfig {
        generator_steps: 512,
        steps_per_round: 256,
        hidden_width: 16,
        hidden_depth: 2,
        ..MairlConfig::default()
    }
}

fn small_refine() -> RefineConfig {
    RefineConfig {
        finetune_updates: 30,
        candidate_budget: 48,
        max_iterations: 12,
        patience: 100,
        ..RefineConfig::default()
    }
}

fn phase_one() -> &'static (Task, InitialReward) {
    static CELL: OnceLock<(Task, InitialReward)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = task();
        let p = train_initial_reward(&t.demonstration, &small_mairl(), 5).unwrap();
        (t, p)
    })
}

fn fresh_state() -> RefineState {
    let (t, p) = phase_one();
    RefineState::new(p, t.demonstration.final_state(), 5).unwrap()
}

/// Answers from a seeded coin so both branches get exercised.
struct CoinOracle(gem_core::rng::GemRng);

impl Oracle for CoinOracle {
    fn feedback(&mut self, _iteration: usize, _query: &Scene) -> Result<Feedback> {
        Ok(Feedback {
            accept: self.0.random_bool(0.5),
        })
    }
}

fn random_hypothesis<R: Rng>(n: usize, rng: &mut R) -> Hypothesis {
    let graph = RelationGraph::complete(n).unwrap();
    Hypothesis {
        graph,
        assignment: MappingAssignment::empty(),
        reward: RewardNet::with_shape(16, 2, rng),
    }
}

#[test]
fn query_choice_equals_exhaustive_rescoring() {
    let objects: Vec<(Shape, Color)> = (0..3).map(|i| (Shape::ALL[i], Color::ALL[i])).collect();
    for k in 0..100u64 {
        let mut rng = substream(k, &[9]);
        let new = random_hypothesis(3, &mut rng);
        let prev = random_hypothesis(3, &mut rng);
        let s = random_valid_scene(&objects, &mut rng);
        let lambda = if k % 2 == 0 { 0.0 } else { 0.2 };
        let config = RefineConfig {
            lambda,
            candidate_budget: 64,
            ..RefineConfig::default()
        };
        let choice = sample_query(&new, &prev, &s, &config, &mut substream(k, &[10])).unwrap();
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, c) in choice.candidates.iter().enumerate() {
            let v = new.reward_of(c).unwrap() - lambda * prev.reward_of(c).unwrap();
            if v > best.0 {
                best = (v, i);
            }
        }
        assert_eq!(choice.index, best.1, "instance {k}");
        assert_eq!(choice.scene, choice.candidates[best.1]);
    }
}

#[test]
fn rejecting_everything_never_changes_the_hypothesis() {
    let config = small_refine();
    let mut st = fresh_state();
    let start = st.clone();
    let mut oracle = ReplayOracle::new(vec![false; 12]);
    let mut records = Vec::new();
    refine_loop(&mut st, &config, &mut oracle, |r, _| {
        records.push(r.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(st.iteration, 12);
    assert_eq!(st.current, start.current);
    assert_eq!(st.positives, start.positives);
    assert_eq!(st.physical, start.physical);
    assert_eq!(st.history.len(), 1);
    assert_eq!(st.negatives.len(), records.iter().filter(|r| r.feedback == Some(false)).count());
    assert_eq!(st.demo_rewards, start.demo_rewards);
}

#[test]
fn bookkeeping_follows_verdicts() {
    let config = small_refine();
    let mut st = fresh_state();
    let mut oracle = CoinOracle(substream(77, &[]));
    let mut before = st.clone();
    while !st.is_finished(&config) {
        let record = st.step(&config, &mut oracle).unwrap();
        match record.feedback {
            Some(true) => {
                let q = record.query.clone().unwrap();
                assert_eq!(st.physical, q);
                assert_eq!(st.current.graph, record.graph);
                assert_eq!(st.history.last().unwrap().iteration, record.iteration);
                if !before.negatives.contains(&q) {
                    assert_eq!(st.demo_rewards.len(), before.demo_rewards.len() + 1);
                    let last = st.demo_rewards.entries.last().unwrap();
                    assert_eq!(last.reward, st.anchor_reward);
                    assert_eq!(last.scene, q);
                }
            }
            Some(false) => {
                assert_eq!(st.physical, before.physical);
                assert_eq!(st.current, before.current);
                assert_eq!(st.demo_rewards, before.demo_rewards);
            }
            None => assert_eq!(st.current, before.current),
        }
        for p in &st.positives {
            assert!(!st.negatives.contains(p));
        }
        before = st.clone();
    }
    // Every accepted hypothesis in the history came from an accepted iteration.
    assert!(!st.history.is_empty());
}

#[test]
fn checkpoint_resume_gives_the_same_remainder() {
    let config = small_refine();
    let verdicts: Vec<bool> = (0..12).map(|k| k % 3 != 1).collect();

    let mut full = fresh_state();
    let mut log_full = Vec::new();
    refine_loop(&mut full, &config, &mut ReplayOracle::new(verdicts.clone()), |r, _| {
        log_full.push(serde_json::to_string(r).unwrap());
        Ok(())
    })
    .unwrap();

    let mut first = fresh_state();
    let mut oracle = ReplayOracle::new(verdicts.clone());
    let mut log_split = Vec::new();
    for _ in 0..5 {
        log_split.push(serde_json::to_string(&first.step(&config, &mut oracle).unwrap()).unwrap());
    }
    let saved = serde_json::to_string(&first).unwrap();
    let mut resumed: RefineState = serde_json::from_str(&saved).unwrap();
    assert_eq!(resumed, first);
    assert_eq!(serde_json::to_string(&resumed).unwrap(), saved);
    let consumed = oracle.consumed();
    let mut rest = ReplayOracle::new(verdicts[consumed..].to_vec());
    refine_loop(&mut resumed, &config, &mut rest, |r, _| {
        log_split.push(serde_json::to_string(r).unwrap());
        Ok(())
    })
    .unwrap();
    assert_eq!(log_split, log_full);
    assert_eq!(serde_json::to_string(&resumed).unwrap(), serde_json::to_string(&full).unwrap());
}

#[test]
fn prepare_is_pure() {
    let config = small_refine();
    let st = fresh_state();
    let a = format!("{:?}", st.prepare(&config).unwrap());
    let b = format!("{:?}", st.prepare(&config).unwrap());
    assert_eq!(a, b);
}

#[test]
fn exhausted_replay_reports_unavailable_oracle() {
    let config = small_refine();
    let mut st = fresh_state();
    let err = refine_loop(&mut st, &config, &mut ReplayOracle::new(vec![true, false]), |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, gem_core::GemError::OracleUnavailable(_)));
    assert_eq!(st.queries_asked, 2);
}
