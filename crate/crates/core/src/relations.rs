//! Ground-truth goal predicates, goal specifications and the evaluation reward.
//!
//! The learner never sees these; they drive demonstration generation, the
//! simulated oracle and scoring.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::scene::{ObjectId, Scene};

pub const CLOSE_THRESHOLD: f64 = 2.5;
pub const DISTANCE_BUFFER: f64 = 0.5;
/// Half-width of the Left/Right angular band.
pub const SIDE_BAND: f64 = 0.1 * PI;
/// Bounds on the angle to the +y axis for Above/Below.
pub const VERTICAL_BAND: (f64, f64) = (0.4 * PI, 0.6 * PI);
/// Per-object displacement penalty in the evaluation reward.
pub const DISPLACEMENT_COST: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelationKind {
    Close,
    LeftOf,
    RightOf,
    Above,
    Below,
    Diagonal,
    DistanceX { x: f64 },
    AtLeastDistanceX { x: f64 },
}

/// A pairwise goal relation. Serialized as `{kind, i, j, x?}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    #[serde(flatten)]
    pub kind: RelationKind,
    pub i: ObjectId,
    pub j: ObjectId,
}

impl Relation {
    pub fn new(kind: RelationKind, i: ObjectId, j: ObjectId) -> Result<Self> {
        let rel = Self { kind, i, j };
        rel.validate()?;
        Ok(rel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.i == self.j {
            return Err(GemError::InvalidEdge(self.i, self.j));
        }
        match self.kind {
            RelationKind::DistanceX { x } | RelationKind::AtLeastDistanceX { x }
                if !(x > 0.0 && x.is_finite()) =>
            {
                Err(GemError::Config(format!("distance parameter {x} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Pair vector `x_i - x_j`.
    fn pair_vector(&self, scene: &Scene) -> Result<[f64; 2]> {
        let a = scene.object(self.i)?;
        let b = scene.object(self.j)?;
        Ok([a.x - b.x, a.y - b.y])
    }

    pub fn pair(&self) -> (ObjectId, ObjectId) {
        (self.i, self.j)
    }
}

/// Left/Right test on the angle between the pair vector and the x axis (in `[0, pi/2]`).
/// `along_x` is the x component of the pair vector and picks the side.
pub fn side_test(angle_to_x_axis: f64, along_x: f64, want_right: bool) -> bool {
    angle_to_x_axis < SIDE_BAND && if want_right { along_x > 0.0 } else { along_x < 0.0 }
}

/// Above/Below test on the angle between the pair vector and the +y axis (in `[0, pi]`).
/// `along_y` is the y component of the pair vector and picks the side.
pub fn vertical_test(angle_to_y_axis: f64, along_y: f64, want_above: bool) -> bool {
    VERTICAL_BAND.0 < angle_to_y_axis
        && angle_to_y_axis < VERTICAL_BAND.1
        && if want_above { along_y > 0.0 } else { along_y < 0.0 }
}

/// Evaluates one relation on a scene.
pub fn eval_relation(rel: &Relation, scene: &Scene) -> Result<bool> {
    let v = rel.pair_vector(scene)?;
    let d = v[0].hypot(v[1]);
    Ok(match rel.kind {
        RelationKind::Close => d < CLOSE_THRESHOLD,
        RelationKind::LeftOf | RelationKind::RightOf => {
            if d == 0.0 {
                return Ok(false);
            }
            let angle = v[1].abs().atan2(v[0].abs());
            side_test(angle, v[0], rel.kind == RelationKind::RightOf)
        }
        RelationKind::Above | RelationKind::Below => {
            if d == 0.0 {
                return Ok(false);
            }
            let angle = v[0].abs().atan2(v[1]);
            vertical_test(angle, v[1], rel.kind == RelationKind::Above)
        }
        RelationKind::Diagonal => v[0] > 0.0 && v[1] > 0.0,
        RelationKind::DistanceX { x } => (d - x).abs() < DISTANCE_BUFFER,
        RelationKind::AtLeastDistanceX { x } => d > x,
    })
}

/// Conjunction of relations that must all hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub relations: Vec<Relation>,
}

impl GoalSpec {
    pub fn new(relations: Vec<Relation>) -> Result<Self> {
        if relations.is_empty() {
            return Err(GemError::Config("goal must contain at least one relation".into()));
        }
        for r in &relations {
            r.validate()?;
        }
        Ok(Self { relations })
    }

    pub fn validate_for(&self, n_objects: usize) -> Result<()> {
        if self.relations.is_empty() {
            return Err(GemError::Config("goal must contain at least one relation".into()));
        }
        for r in &self.relations {
            r.validate()?;
            if r.i >= n_objects {
                return Err(GemError::UnknownObject(r.i));
            }
            if r.j >= n_objects {
                return Err(GemError::UnknownObject(r.j));
            }
        }
        Ok(())
    }

    /// Distinct unordered pairs referenced by the goal, sorted.
    pub fn pairs(&self) -> Vec<(ObjectId, ObjectId)> {
        let mut out: Vec<_> = self
            .relations
            .iter()
            .map(|r| (r.i.min(r.j), r.i.max(r.j)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub fn goal_satisfied(goal: &GoalSpec, scene: &Scene) -> Result<bool> {
    for r in &goal.relations {
        if !eval_relation(r, scene)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Task completion indicator minus `0.02` per unit of total object displacement.
pub fn eval_reward(initial: &Scene, final_scene: &Scene, goal: &GoalSpec) -> Result<f64> {
    let displacement = final_scene.displacement_from(initial)?;
    let done = if goal_satisfied(goal, final_scene)? { 1.0 } else { 0.0 };
    Ok(done - DISPLACEMENT_COST * displacement)
}

/// Oracle verdict on a query state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub accept: bool,
}

/// Accepts exactly the states that satisfy the goal.
pub fn simulated_oracle(goal: &GoalSpec, query: &Scene) -> Result<Feedback> {
    Ok(Feedback {
        accept: goal_satisfied(goal, query)?,
    })
}

/// Margins used when planning toward a goal, so plans end strictly inside
/// every predicate instead of on its boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanMargins {
    pub distance: f64,
    pub angle: f64,
}

impl PlanMargins {
    /// Margins for demonstrations: comfortably inside each predicate.
    pub const DEMO: PlanMargins = PlanMargins {
        distance: 0.4,
        angle: 0.04 * PI,
    };
    /// Margins for the reference optimizer: just inside each predicate.
    pub const TIGHT: PlanMargins = PlanMargins {
        distance: 0.02,
        angle: 0.005 * PI,
    };
}

/// Distance (in units) from `v` to the wedge of directions within `half_width`
/// of `center`. Zero inside the wedge.
fn wedge_violation(v: [f64; 2], center: f64, half_width: f64) -> f64 {
    let r = v[0].hypot(v[1]);
    if r == 0.0 {
        return 1.0;
    }
    let theta = v[1].atan2(v[0]);
    let delta = crate::scene::normalize_angle(theta - center).abs();
    let outside = delta - half_width.max(0.0);
    if outside <= 0.0 {
        0.0
    } else if outside < PI / 2.0 {
        r * outside.sin()
    } else {
        r
    }
}

/// Non-negative violation magnitude of one relation, zero only when the
/// relation holds with the given margins.
pub fn violation(rel: &Relation, scene: &Scene, m: PlanMargins) -> Result<f64> {
    let v = rel.pair_vector(scene)?;
    let d = v[0].hypot(v[1]);
    Ok(match rel.kind {
        RelationKind::Close => (d - (CLOSE_THRESHOLD - m.distance)).max(0.0),
        RelationKind::RightOf => wedge_violation(v, 0.0, SIDE_BAND - m.angle),
        RelationKind::LeftOf => wedge_violation(v, PI, SIDE_BAND - m.angle),
        RelationKind::Above | RelationKind::Below => {
            // Near-horizontal band, on the upper (Above) or lower (Below) side.
            let half = (VERTICAL_BAND.1 - VERTICAL_BAND.0) / 4.0;
            let inner = half - m.angle / 2.0;
            let sign = if rel.kind == RelationKind::Above { 1.0 } else { -1.0 };
            let right = wedge_violation(v, sign * half, inner);
            let left = wedge_violation(v, sign * (PI - half), inner);
            right.min(left)
        }
        RelationKind::Diagonal => {
            (m.distance - v[0]).max(0.0) + (m.distance - v[1]).max(0.0)
        }
        RelationKind::DistanceX { x } => ((d - x).abs() - (DISTANCE_BUFFER - m.distance)).max(0.0),
        RelationKind::AtLeastDistanceX { x } => (x + m.distance - d).max(0.0),
    })
}

/// Sum of relation violations.
pub fn goal_potential(goal: &GoalSpec, scene: &Scene, m: PlanMargins) -> Result<f64> {
    goal.relations
        .iter()
        .map(|r| violation(r, scene, m))
        .sum()
}
