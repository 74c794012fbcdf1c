//! State equivalence mappings on object pairs.
//!
//! Each graph edge is transformed on its own copy of the two endpoint states,
//! so a node shared by two edges can end up in different places in the two
//! entries. After the per-edge mappings, one random translation is applied to
//! every coordinate of every entry.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{substream, TAG_EDGE, TAG_SHIFT};
use crate::scene::{
    pair_feature, Edge, MappingAssignment, MappingKind, ObjectState, RelationGraph, Scene,
    EDGE_FEATURES,
};

/// Range of the rescaling factor drawn by the scale mapping.
pub const SCALE_RANGE: (f64, f64) = (0.1, 10.0);
/// Half-width of the global shift drawn per coordinate.
pub const SHIFT_HALF_WIDTH: f64 = 5.0;

/// Rotates `xi` about `xj` by `d` radians. `xj` is unchanged.
pub fn apply_rotation(xi: [f64; 2], xj: [f64; 2], d: f64) -> ([f64; 2], [f64; 2]) {
    let (s, c) = d.sin_cos();
    let dx = xi[0] - xj[0];
    let dy = xi[1] - xj[1];
    ([xj[0] + c * dx - s * dy, xj[1] + s * dx + c * dy], xj)
}

/// Moves `xi` along the ray from `xj` so the pair distance is multiplied by `rho`.
/// Coincident points are returned unchanged.
pub fn apply_scale(xi: [f64; 2], xj: [f64; 2], rho: f64) -> ([f64; 2], [f64; 2]) {
    debug_assert!(rho > 0.0);
    let dx = xi[0] - xj[0];
    let dy = xi[1] - xj[1];
    if dx == 0.0 && dy == 0.0 {
        return (xi, xj);
    }
    ([xj[0] + rho * dx, xj[1] + rho * dy], xj)
}

/// One transformed edge: copies of the two endpoint states after mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub edge: Edge,
    pub lo: ObjectState,
    pub hi: ObjectState,
}

impl EdgeEntry {
    pub fn feature(&self) -> [f64; EDGE_FEATURES] {
        pair_feature(&self.lo, &self.hi)
    }
}

/// Per-edge transformed pair states, one entry per graph edge in edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedEdgeSet {
    pub entries: Vec<EdgeEntry>,
}

impl TransformedEdgeSet {
    /// Untransformed per-edge slices of `scene`.
    pub fn identity(scene: &Scene, graph: &RelationGraph) -> Self {
        Self {
            entries: graph
                .edges()
                .map(|e| EdgeEntry {
                    edge: e,
                    lo: scene.objects[e.lo()],
                    hi: scene.objects[e.hi()],
                })
                .collect(),
        }
    }

    pub fn entry(&self, e: Edge) -> Option<&EdgeEntry> {
        self.entries.iter().find(|x| x.edge == e)
    }
}

/// How the global translation is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shift {
    Random,
    Fixed([f64; 2]),
}

/// Draws the mapping parameters for one edge from its own substream.
fn edge_draws(key: u64, e: Edge) -> (f64, f64) {
    let mut rng = substream(key, &[TAG_EDGE, e.lo() as u64, e.hi() as u64]);
    let d = rng.random_range(-PI..PI);
    let rho = rng.random_range(SCALE_RANGE.0..SCALE_RANGE.1);
    (d, rho)
}

/// Applies the assigned mappings to every edge of `graph`, then a global shift.
///
/// `key` addresses the random draws: each edge reads its own substream of
/// `key`, so changing the bits on one edge never changes another edge's entry.
/// The mapped states skip collision checks; they only feed the reward network.
pub fn transform_state_keyed(
    scene: &Scene,
    graph: &RelationGraph,
    assignment: &MappingAssignment,
    key: u64,
    shift: Shift,
) -> TransformedEdgeSet {
    let mut out = TransformedEdgeSet::identity(scene, graph);
    for entry in &mut out.entries {
        let rotate = assignment.get(entry.edge, MappingKind::Rotation);
        let scale = assignment.get(entry.edge, MappingKind::Scale);
        if !rotate && !scale {
            continue;
        }
        let (d, rho) = edge_draws(key, entry.edge);
        let mut xi = entry.lo.position();
        let xj = entry.hi.position();
        if rotate {
            xi = apply_rotation(xi, xj, d).0;
        }
        if scale {
            xi = apply_scale(xi, xj, rho).0;
        }
        entry.lo = entry.lo.with_position(xi);
    }
    let delta = match shift {
        Shift::Fixed(v) => v,
        Shift::Random => {
            let mut rng = substream(key, &[TAG_SHIFT]);
            [
                rng.random_range(-SHIFT_HALF_WIDTH..SHIFT_HALF_WIDTH),
                rng.random_range(-SHIFT_HALF_WIDTH..SHIFT_HALF_WIDTH),
            ]
        }
    };
    if delta != [0.0, 0.0] {
        for entry in &mut out.entries {
            for obj in [&mut entry.lo, &mut entry.hi] {
                obj.x += delta[0];
                obj.y += delta[1];
            }
        }
    }
    out
}

/// Draws a fresh key from `rng` and transforms with a random shift.
pub fn transform_state<R: Rng + ?Sized>(
    scene: &Scene,
    graph: &RelationGraph,
    assignment: &MappingAssignment,
    rng: &mut R,
) -> TransformedEdgeSet {
    let key: u64 = rng.random();
    transform_state_keyed(scene, graph, assignment, key, Shift::Random)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{pair_geometry, Color, Shape};

    fn scene3() -> Scene {
        Scene::new(vec![
            ObjectState::new(0, Shape::Circle, Color::Red, 0.0, 0.0, 0.0),
            ObjectState::new(1, Shape::Square, Color::Blue, 3.0, 1.0, 0.5),
            ObjectState::new(2, Shape::Triangle, Color::Green, -2.0, 4.0, -1.0),
        ])
        .unwrap()
    }

    #[test]
    fn quarter_turn() {
        let (a, b) = apply_rotation([1.0, 0.0], [0.0, 0.0], PI / 2.0);
        assert!((a[0]).abs() < 1e-15 && (a[1] - 1.0).abs() < 1e-15);
        assert_eq!(b, [0.0, 0.0]);
        assert_eq!(apply_rotation([1.5, -2.0], [0.5, 0.5], 0.0).0, [1.5, -2.0]);
    }

    #[test]
    fn scale_cases() {
        assert_eq!(apply_scale([2.0, 0.0], [0.0, 0.0], 3.0).0, [6.0, 0.0]);
        assert_eq!(apply_scale([2.0, 7.0], [1.0, 1.0], 1.0).0, [2.0, 7.0]);
        assert_eq!(apply_scale([1.0, 1.0], [1.0, 1.0], 4.0).0, [1.0, 1.0]);
    }

    #[test]
    fn identity_configuration() {
        let s = scene3();
        let g = RelationGraph::complete(3).unwrap();
        let t = transform_state_keyed(&s, &g, &MappingAssignment::empty(), 9, Shift::Fixed([0.0, 0.0]));
        assert_eq!(t, TransformedEdgeSet::identity(&s, &g));
        assert_eq!(t.entries[0].lo, s.objects[0]);
    }

    #[test]
    fn shared_node_unaffected_by_other_edge() {
        let s = scene3();
        let g = RelationGraph::new(3, [(0, 1), (0, 2)]).unwrap();
        let mut a = MappingAssignment::empty();
        a.set(Edge(0, 1), MappingKind::Rotation, true);
        let t = transform_state_keyed(&s, &g, &a, 3, Shift::Fixed([0.0, 0.0]));
        let e02 = t.entry(Edge(0, 2)).unwrap();
        assert_eq!(e02.lo, s.objects[0]);
        let e01 = t.entry(Edge(0, 1)).unwrap();
        assert_ne!(e01.lo.position(), s.objects[0].position());
        let before = pair_geometry(s.objects[0].position(), s.objects[1].position()).0;
        let after = pair_geometry(e01.lo.position(), e01.hi.position()).0;
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn transform_only_moves_positions() {
        let s = scene3();
        let g = RelationGraph::complete(3).unwrap();
        let mut a = MappingAssignment::empty();
        for e in g.edges() {
            a.set(e, MappingKind::Rotation, true);
            a.set(e, MappingKind::Scale, true);
        }
        let mut rng = crate::rng::substream(1, &[]);
        let t = transform_state(&s, &g, &a, &mut rng);
        for entry in &t.entries {
            assert_eq!(entry.lo.angle, s.objects[entry.edge.lo()].angle);
            assert_eq!(entry.hi.shape, s.objects[entry.edge.hi()].shape);
        }
    }
}
