//! Kinematic Watch&Move simulator.
//!
//! Objects move one at a time in fixed increments. A move that would leave
//! the workspace or make two collision discs overlap is rejected and leaves
//! the scene unchanged.

use std::collections::HashSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::relations::{goal_potential, goal_satisfied, GoalSpec, PlanMargins};
use crate::scene::{
    discs_overlap, Color, ObjectId, ObjectState, Scene, Shape, DISC_RADIUS,
    WORKSPACE_HALF_WIDTH,
};

/// Translation per move action, in units.
pub const STEP_SIZE: f64 = 0.25;
/// Rotation per turn action, in radians.
pub const TURN_SIZE: f64 = PI / 12.0;
/// Standard deviation of position perturbations for reachable-state candidates.
pub const REACHABLE_SIGMA: f64 = 2.0;
/// Half-width of the uniform angle perturbation for reachable candidates.
pub const REACHABLE_ANGLE_SPAN: f64 = PI;
/// Attempts per candidate before it is skipped.
pub const PROJECTION_ATTEMPTS: usize = 100;
/// Upper bound on planner length.
pub const MAX_PLAN_STEPS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Move {
    pub const ALL: [Move; 11] = [
        Move::North,
        Move::NorthEast,
        Move::East,
        Move::SouthEast,
        Move::South,
        Move::SouthWest,
        Move::West,
        Move::NorthWest,
        Move::TurnLeft,
        Move::TurnRight,
        Move::Stop,
    ];

    /// Unit direction for translations.
    pub fn direction(self) -> Option<[f64; 2]> {
        let d = FRAC_1_SQRT_2;
        Some(match self {
            Move::North => [0.0, 1.0],
            Move::NorthEast => [d, d],
            Move::East => [1.0, 0.0],
            Move::SouthEast => [d, -d],
            Move::South => [0.0, -1.0],
            Move::SouthWest => [-d, -d],
            Move::West => [-1.0, 0.0],
            Move::NorthWest => [-d, d],
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub object: ObjectId,
    #[serde(rename = "move")]
    pub mv: Move,
}

/// All `11 * n` actions, object-major.
pub fn all_actions(n_objects: usize) -> Vec<Action> {
    (0..n_objects)
        .flat_map(|object| Move::ALL.iter().map(move |&mv| Action { object, mv }))
        .collect()
}

fn placement_ok(scene: &Scene, id: ObjectId, p: [f64; 2]) -> bool {
    if !(p[0].abs() <= WORKSPACE_HALF_WIDTH && p[1].abs() <= WORKSPACE_HALF_WIDTH) {
        return false;
    }
    scene
        .objects
        .iter()
        .all(|o| o.id == id || !discs_overlap(o.position(), p))
}

/// Applies one action. Invalid moves leave the scene unchanged.
pub fn step(scene: &Scene, action: Action) -> Scene {
    let mut next = scene.clone();
    let Some(obj) = next.objects.get_mut(action.object) else {
        return next;
    };
    match action.mv {
        Move::Stop => {}
        Move::TurnLeft => *obj = obj.with_angle(obj.angle + TURN_SIZE),
        Move::TurnRight => *obj = obj.with_angle(obj.angle - TURN_SIZE),
        mv => {
            let dir = mv.direction().expect("translation move");
            let p = [obj.x + STEP_SIZE * dir[0], obj.y + STEP_SIZE * dir[1]];
            if placement_ok(scene, action.object, p) {
                next.objects[action.object] = next.objects[action.object].with_position(p);
            }
        }
    }
    next
}

/// Recorded state-action sequence; `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Scene>,
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn single(state: Scene) -> Self {
        Self {
            states: vec![state],
            actions: Vec::new(),
        }
    }

    /// Number of actions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn initial(&self) -> &Scene {
        &self.states[0]
    }

    pub fn final_state(&self) -> &Scene {
        self.states.last().expect("trajectory has at least one state")
    }

    /// Checks that every transition replays exactly under [`step`].
    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(GemError::InvalidScene(format!(
                "trajectory has {} states for {} actions",
                self.states.len(),
                self.actions.len()
            )));
        }
        for (t, a) in self.actions.iter().enumerate() {
            if step(&self.states[t], *a) != self.states[t + 1] {
                return Err(GemError::InvalidScene(format!(
                    "transition {t} does not replay"
                )));
            }
        }
        Ok(())
    }

    /// `(s, a, s')` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (&Scene, Action, &Scene)> {
        self.actions
            .iter()
            .enumerate()
            .map(move |(t, a)| (&self.states[t], *a, &self.states[t + 1]))
    }
}

/// Pushes overlapping discs apart and clamps into the workspace.
/// Returns `None` when no valid configuration is reached.
fn project(mut objects: Vec<ObjectState>) -> Option<Scene> {
    let min_gap = 2.0 * DISC_RADIUS + 1e-9;
    let limit = WORKSPACE_HALF_WIDTH;
    for _ in 0..60 {
        for o in objects.iter_mut() {
            o.x = o.x.clamp(-limit, limit);
            o.y = o.y.clamp(-limit, limit);
        }
        let mut moved = false;
        let n = objects.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = objects[i].x - objects[j].x;
                let dy = objects[i].y - objects[j].y;
                let d = dx.hypot(dy);
                if d < min_gap {
                    let (ux, uy) = if d > 1e-12 { (dx / d, dy / d) } else { (1.0, 0.0) };
                    let push = 0.5 * (min_gap - d) + 1e-6;
                    objects[i].x += ux * push;
                    objects[i].y += uy * push;
                    objects[j].x -= ux * push;
                    objects[j].y -= uy * push;
                    moved = true;
                }
            }
        }
        if !moved {
            let scene = Scene { objects };
            return scene.is_valid().then_some(scene);
        }
    }
    None
}

/// Which objects a perturbation moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    /// Every object.
    All,
    /// A uniformly random non-empty subset.
    Subset,
}

fn perturb<R: Rng + ?Sized>(
    scene: &Scene,
    sigma: f64,
    angle_span: f64,
    mode: PerturbMode,
    rng: &mut R,
) -> Vec<ObjectState> {
    let n = scene.len();
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut chosen = vec![mode == PerturbMode::All; n];
    while !chosen.iter().any(|&c| c) {
        for c in chosen.iter_mut() {
            *c = rng.random_bool(0.5);
        }
    }
    scene
        .objects
        .iter()
        .zip(chosen)
        .map(|(o, c)| {
            if !c {
                return *o;
            }
            let x = o.x + normal.sample(rng);
            let y = o.y + normal.sample(rng);
            let a = o.angle + rng.random_range(-angle_span..=angle_span);
            ObjectState::new(o.id, o.shape, o.color, x, y, a)
        })
        .collect()
}

/// Draws one valid perturbation of `scene`, or `None` after [`PROJECTION_ATTEMPTS`] failures.
pub fn perturbed_scene<R: Rng + ?Sized>(
    scene: &Scene,
    sigma: f64,
    angle_span: f64,
    mode: PerturbMode,
    rng: &mut R,
) -> Option<Scene> {
    for _ in 0..PROJECTION_ATTEMPTS {
        if let Some(s) = project(perturb(scene, sigma, angle_span, mode, rng)) {
            return Some(s);
        }
    }
    None
}

fn scene_bits(s: &Scene) -> Vec<u64> {
    s.objects
        .iter()
        .flat_map(|o| [o.x.to_bits(), o.y.to_bits(), o.angle.to_bits()])
        .collect()
}

/// Reachable-state candidates around `scene`.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub scenes: Vec<Scene>,
    /// Candidates that could not be projected to a valid scene.
    pub skipped: usize,
}

/// Samples up to `budget` distinct valid scenes near `scene`, starting with `scene` itself.
pub fn sample_reachable<R: Rng + ?Sized>(scene: &Scene, rng: &mut R, budget: usize) -> Result<Candidates> {
    if budget == 0 {
        return Err(GemError::Config("candidate budget must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    seen.insert(scene_bits(scene));
    let mut scenes = vec![scene.clone()];
    let mut skipped = 0;
    while scenes.len() + skipped < budget {
        match perturbed_scene(scene, REACHABLE_SIGMA, REACHABLE_ANGLE_SPAN, PerturbMode::All, rng) {
            Some(s) if seen.insert(scene_bits(&s)) => scenes.push(s),
            _ => skipped += 1,
        }
    }
    Ok(Candidates { scenes, skipped })
}

/// Uniformly random valid placement of the given objects.
pub fn random_valid_scene<R: Rng + ?Sized>(
    objects: &[(Shape, Color)],
    rng: &mut R,
) -> Scene {
    let limit = WORKSPACE_HALF_WIDTH;
    loop {
        let mut placed: Vec<ObjectState> = Vec::with_capacity(objects.len());
        let mut ok = true;
        for (id, &(shape, color)) in objects.iter().enumerate() {
            let mut found = false;
            for _ in 0..200 {
                let p = [rng.random_range(-limit..=limit), rng.random_range(-limit..=limit)];
                if placed.iter().all(|o| !discs_overlap(o.position(), p)) {
                    let a = rng.random_range(-PI..PI);
                    placed.push(ObjectState::new(id, shape, color, p[0], p[1], a));
                    found = true;
                    break;
                }
            }
            if !found {
                ok = false;
                break;
            }
        }
        if ok {
            return Scene { objects: placed };
        }
    }
}

/// Greedy descent on the goal potential, one action per step.
///
/// Ties between equally good actions are broken uniformly with `rng`. Planning
/// stops once the potential (with `margins`) reaches zero, which implies the
/// goal holds.
pub fn plan_to_goal<R: Rng + ?Sized>(
    goal: &GoalSpec,
    start: &Scene,
    margins: PlanMargins,
    rng: &mut R,
) -> Result<Trajectory> {
    goal.validate_for(start.len())?;
    let actions = all_actions(start.len());
    let mut traj = Trajectory::single(start.clone());
    let mut current = goal_potential(goal, start, margins)?;
    while current > 0.0 {
        if traj.len() >= MAX_PLAN_STEPS {
            return Err(GemError::PlanningFailed(format!(
                "no solution within {MAX_PLAN_STEPS} steps"
            )));
        }
        let state = traj.final_state().clone();
        let mut best = current;
        let mut ties: Vec<(Action, Scene)> = Vec::new();
        for &a in &actions {
            if a.mv.direction().is_none() {
                continue;
            }
            let next = step(&state, a);
            let p = goal_potential(goal, &next, margins)?;
            if p < best - 1e-12 {
                best = p;
                ties.clear();
                ties.push((a, next));
            } else if (p - best).abs() <= 1e-12 && best < current {
                ties.push((a, next));
            }
        }
        if ties.is_empty() {
            return Err(GemError::PlanningFailed(format!(
                "stuck at potential {current:.4} after {} steps",
                traj.len()
            )));
        }
        let (a, next) = ties.swap_remove(rng.random_range(0..ties.len()));
        traj.actions.push(a);
        traj.states.push(next);
        current = best;
    }
    debug_assert!(goal_satisfied(goal, traj.final_state()).unwrap_or(false));
    Ok(traj)
}

/// Scripted expert demonstration toward `goal` from `start`.
pub fn generate_demonstration<R: Rng + ?Sized>(
    goal: &GoalSpec,
    start: &Scene,
    rng: &mut R,
) -> Result<Trajectory> {
    plan_to_goal(goal, start, PlanMargins::DEMO, rng)
}
