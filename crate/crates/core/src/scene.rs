//! Scenes, objects, relation graphs and mapping assignments.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};

/// Half-width of the square workspace, in world units.
pub const WORKSPACE_HALF_WIDTH: f64 = 10.0;
/// Collision disc radius shared by every shape.
pub const DISC_RADIUS: f64 = 0.8;
/// Width of one object encoding.
pub const OBJECT_FEATURES: usize = 13;
/// Width of one edge encoding (two concatenated objects).
pub const EDGE_FEATURES: usize = 2 * OBJECT_FEATURES;

pub type ObjectId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Rectangle,
    Trapezoid,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::Circle,
        Shape::Square,
        Shape::Triangle,
        Shape::Rectangle,
        Shape::Trapezoid,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
}

impl Color {
    pub const ALL: [Color; 5] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Purple,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi for tiny negative inputs.
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// State of a single object. Serialized flat as `{id, shape, color, x, y, angle}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: ObjectId,
    pub shape: Shape,
    pub color: Color,
    pub x: f64,
    pub y: f64,
    pub angle: f64,
}

impl ObjectState {
    pub fn new(id: ObjectId, shape: Shape, color: Color, x: f64, y: f64, angle: f64) -> Self {
        Self {
            id,
            shape,
            color,
            x,
            y,
            angle: normalize_angle(angle),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn with_position(mut self, p: [f64; 2]) -> Self {
        self.x = p[0];
        self.y = p[1];
        self
    }

    pub fn with_angle(mut self, angle: f64) -> Self {
        self.angle = normalize_angle(angle);
        self
    }

    pub fn in_bounds(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.x.abs() <= WORKSPACE_HALF_WIDTH
            && self.y.abs() <= WORKSPACE_HALF_WIDTH
    }
}

pub type FeatureVector = [f64; OBJECT_FEATURES];

/// Encodes an object as `(x, y, angle, shape one-hot, color one-hot)`.
pub fn encode_object(obj: &ObjectState) -> FeatureVector {
    let mut f = [0.0; OBJECT_FEATURES];
    f[0] = obj.x;
    f[1] = obj.y;
    f[2] = normalize_angle(obj.angle);
    f[3 + obj.shape.index()] = 1.0;
    f[8 + obj.color.index()] = 1.0;
    f
}

/// Recovers `(x, y, angle)` from an encoding.
pub fn decode_pose(f: &FeatureVector) -> (f64, f64, f64) {
    (f[0], f[1], f[2])
}

/// Center distance and bearing of `xi - xj` from the +x axis, in `(-pi, pi]`.
/// Coincident points have bearing 0.
pub fn pair_geometry(xi: [f64; 2], xj: [f64; 2]) -> (f64, f64) {
    let dx = xi[0] - xj[0];
    let dy = xi[1] - xj[1];
    let distance = dx.hypot(dy);
    if distance == 0.0 {
        return (0.0, 0.0);
    }
    let mut bearing = dy.atan2(dx);
    if bearing <= -PI {
        bearing = PI;
    }
    (distance, bearing)
}

/// Ordered set of objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<ObjectState>,
}

impl Scene {
    /// Builds a scene and checks every invariant.
    pub fn new(objects: Vec<ObjectState>) -> Result<Self> {
        let scene = Self { objects };
        scene.validate()?;
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, id: ObjectId) -> Result<&ObjectState> {
        self.objects.get(id).ok_or(GemError::UnknownObject(id))
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, obj) in self.objects.iter().enumerate() {
            if obj.id != idx {
                return Err(GemError::InvalidScene(format!(
                    "object at slot {idx} has id {}",
                    obj.id
                )));
            }
            if !obj.in_bounds() {
                return Err(GemError::InvalidScene(format!(
                    "object {idx} at ({}, {}) is outside the workspace",
                    obj.x, obj.y
                )));
            }
            if !(obj.angle >= -PI && obj.angle < PI) {
                return Err(GemError::InvalidScene(format!(
                    "object {idx} angle {} not normalized",
                    obj.angle
                )));
            }
        }
        if let Some((i, j)) = self.first_overlap() {
            return Err(GemError::InvalidScene(format!(
                "objects {i} and {j} overlap"
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// First overlapping pair, if any.
    pub fn first_overlap(&self) -> Option<(ObjectId, ObjectId)> {
        let n = self.objects.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if discs_overlap(self.objects[i].position(), self.objects[j].position()) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Sum of per-object center displacements between two scenes over the same objects.
    pub fn displacement_from(&self, other: &Scene) -> Result<f64> {
        if self.len() != other.len() {
            return Err(GemError::DimensionMismatch {
                expected: other.len(),
                got: self.len(),
            });
        }
        let mut total = 0.0;
        for (a, b) in self.objects.iter().zip(&other.objects) {
            if a.id != b.id || a.shape != b.shape || a.color != b.color {
                return Err(GemError::InvalidScene(format!(
                    "object {} does not match object {}",
                    a.id, b.id
                )));
            }
            total += (a.x - b.x).hypot(a.y - b.y);
        }
        Ok(total)
    }

    /// Full-scene encoding, `13 * n` wide.
    pub fn encode(&self) -> Vec<f64> {
        self.objects.iter().flat_map(encode_object).collect()
    }
}

pub fn discs_overlap(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).hypot(a[1] - b[1]) < 2.0 * DISC_RADIUS
}

/// Concatenated encoding of an object pair in canonical `(min, max)` order.
pub fn edge_feature(scene: &Scene, i: ObjectId, j: ObjectId) -> Result<[f64; EDGE_FEATURES]> {
    if i == j {
        return Err(GemError::InvalidEdge(i, j));
    }
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    Ok(pair_feature(scene.object(a)?, scene.object(b)?))
}

pub fn pair_feature(a: &ObjectState, b: &ObjectState) -> [f64; EDGE_FEATURES] {
    let mut out = [0.0; EDGE_FEATURES];
    out[..OBJECT_FEATURES].copy_from_slice(&encode_object(a));
    out[OBJECT_FEATURES..].copy_from_slice(&encode_object(b));
    out
}

/// Unordered object pair stored as `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(pub ObjectId, pub ObjectId);

impl Edge {
    pub fn new(i: ObjectId, j: ObjectId) -> Result<Self> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => Ok(Edge(i, j)),
            std::cmp::Ordering::Greater => Ok(Edge(j, i)),
            std::cmp::Ordering::Equal => Err(GemError::InvalidEdge(i, j)),
        }
    }

    pub fn lo(self) -> ObjectId {
        self.0
    }

    pub fn hi(self) -> ObjectId {
        self.1
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

/// Undirected graph over `n` objects; never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct RelationGraph {
    n: usize,
    edges: BTreeSet<Edge>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    edges: Vec<(ObjectId, ObjectId)>,
}

impl TryFrom<GraphRecord> for RelationGraph {
    type Error = GemError;

    fn try_from(r: GraphRecord) -> Result<Self> {
        RelationGraph::new(r.n, r.edges)
    }
}

impl From<RelationGraph> for GraphRecord {
    fn from(g: RelationGraph) -> Self {
        GraphRecord {
            n: g.n,
            edges: g.edges.iter().map(|e| (e.0, e.1)).collect(),
        }
    }
}

impl RelationGraph {
    /// Rejects empty edge sets, self edges, duplicates and out-of-range ids.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (ObjectId, ObjectId)>) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for (i, j) in pairs {
            if i >= n {
                return Err(GemError::UnknownObject(i));
            }
            if j >= n {
                return Err(GemError::UnknownObject(j));
            }
            let e = Edge::new(i, j)?;
            if !edges.insert(e) {
                return Err(GemError::InvalidEdge(i, j));
            }
        }
        if edges.is_empty() {
            return Err(GemError::EmptyGraph);
        }
        Ok(Self { n, edges })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let pairs = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)));
        Self::new(n, pairs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.edges.contains(&e)
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * (self.n - 1) / 2
    }

    /// Edges of the complete graph that are not present.
    pub fn absent_edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let e = Edge(i, j);
                if !self.edges.contains(&e) {
                    out.push(e);
                }
            }
        }
        out
    }

    pub fn with_edge(&self, e: Edge) -> Result<Self> {
        if e.1 >= self.n {
            return Err(GemError::UnknownObject(e.1));
        }
        let mut g = self.clone();
        if !g.edges.insert(e) {
            return Err(GemError::InvalidEdge(e.0, e.1));
        }
        Ok(g)
    }

    pub fn without_edge(&self, e: Edge) -> Result<Self> {
        let mut g = self.clone();
        if !g.edges.remove(&e) {
            return Err(GemError::InvalidEdge(e.0, e.1));
        }
        if g.edges.is_empty() {
            return Err(GemError::EmptyGraph);
        }
        Ok(g)
    }
}

impl fmt::Display for RelationGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.edges.iter().map(|e| e.to_string()).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Equivalence mapping kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    /// Rotate one endpoint about the other.
    Rotation,
    /// Rescale the pair distance, keeping the bearing.
    Scale,
}

impl MappingKind {
    pub const ALL: [MappingKind; 2] = [MappingKind::Rotation, MappingKind::Scale];
}

/// Which mappings may be applied to which edges. Absent bits are false.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MappingAssignment {
    enabled: BTreeSet<(Edge, MappingKind)>,
}

impl MappingAssignment {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, e: Edge, k: MappingKind) -> bool {
        self.enabled.contains(&(e, k))
    }

    pub fn set(&mut self, e: Edge, k: MappingKind, on: bool) {
        if on {
            self.enabled.insert((e, k));
        } else {
            self.enabled.remove(&(e, k));
        }
    }

    pub fn toggled(&self, e: Edge, k: MappingKind) -> Self {
        let mut next = self.clone();
        next.set(e, k, !self.get(e, k));
        next
    }

    /// Number of bits set.
    pub fn count(&self) -> usize {
        self.enabled.len()
    }

    pub fn bits(&self) -> impl Iterator<Item = (Edge, MappingKind)> + '_ {
        self.enabled.iter().copied()
    }

    /// Drops bits on edges that are not in `graph`.
    pub fn restricted_to(&self, graph: &RelationGraph) -> Self {
        Self {
            enabled: self
                .enabled
                .iter()
                .filter(|(e, _)| graph.contains(*e))
                .copied()
                .collect(),
        }
    }

    pub fn is_keyed_on(&self, graph: &RelationGraph) -> bool {
        self.enabled.iter().all(|(e, _)| graph.contains(*e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: usize, x: f64, y: f64) -> ObjectState {
        ObjectState::new(id, Shape::Circle, Color::Red, x, y, 0.0)
    }

    #[test]
    fn encodes_circle_at_origin() {
        let f = encode_object(&obj(0, 0.0, 0.0));
        assert_eq!(f, [0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0.]);
        let g = encode_object(&obj(0, 1.5, -2.0));
        assert_eq!(&g[..2], &[1.5, -2.0]);
        assert_eq!(&g[2..], &f[2..]);
    }

    #[test]
    fn encoding_one_hot_slots() {
        for s in Shape::ALL {
            for c in Color::ALL {
                let f = encode_object(&ObjectState::new(0, s, c, 1.0, 2.0, 0.3));
                assert_eq!(f[3..8].iter().sum::<f64>(), 1.0);
                assert_eq!(f[8..13].iter().sum::<f64>(), 1.0);
                assert_eq!(f[3 + s.index()], 1.0);
                assert_eq!(f[8 + c.index()], 1.0);
            }
        }
    }

    #[test]
    fn angle_wraps() {
        let o = ObjectState::new(0, Shape::Square, Color::Blue, 0.0, 0.0, 1.5 * PI);
        assert!((encode_object(&o)[2] + PI / 2.0).abs() < 1e-15);
        assert_eq!(normalize_angle(PI), -PI);
        assert_eq!(normalize_angle(-PI), -PI);
        assert!(normalize_angle(-1e-18) < PI);
    }

    #[test]
    fn decode_recovers_pose() {
        let o = ObjectState::new(2, Shape::Triangle, Color::Green, -3.25, 7.0, 2.0);
        let (x, y, a) = decode_pose(&encode_object(&o));
        assert_eq!((x, y, a), (o.x, o.y, o.angle));
    }

    #[test]
    fn pair_geometry_cases() {
        let (d, b) = pair_geometry([3.0, 4.0], [0.0, 0.0]);
        assert_eq!(d, 5.0);
        assert_eq!(b, 4.0f64.atan2(3.0));
        assert_eq!(pair_geometry([1.0, 1.0], [1.0, 1.0]), (0.0, 0.0));
        assert_eq!(pair_geometry([0.0, 2.0], [0.0, 0.0]).1, PI / 2.0);
        assert_eq!(pair_geometry([-1.0, -0.0], [0.0, 0.0]).1, PI);
    }

    #[test]
    fn edge_feature_is_canonical() {
        let s = Scene::new(vec![obj(0, 0.0, 0.0), obj(1, 3.0, 0.0), obj(2, 0.0, 3.0)]).unwrap();
        let f01 = edge_feature(&s, 0, 1).unwrap();
        assert_eq!(f01.len(), 26);
        assert_eq!(&f01[..13], &encode_object(&s.objects[0]));
        assert_eq!(f01, edge_feature(&s, 1, 0).unwrap());
        assert!(edge_feature(&s, 0, 3).is_err());
        assert!(edge_feature(&s, 1, 1).is_err());
        assert_eq!(RelationGraph::complete(3).unwrap().len(), 3);
    }

    #[test]
    fn graph_construction_rejects_bad_input() {
        assert!(matches!(
            RelationGraph::new(3, Vec::<(usize, usize)>::new()),
            Err(GemError::EmptyGraph)
        ));
        assert!(RelationGraph::new(3, [(1, 1)]).is_err());
        assert!(RelationGraph::new(3, [(0, 3)]).is_err());
        assert!(RelationGraph::new(3, [(0, 1), (1, 0)]).is_err());
        let g = RelationGraph::new(3, [(2, 0)]).unwrap();
        assert!(g.contains(Edge(0, 2)));
        assert!(g.without_edge(Edge(0, 2)).is_err());
    }

    #[test]
    fn scene_rejects_overlap_and_bounds() {
        assert!(Scene::new(vec![obj(0, 0.0, 0.0), obj(1, 1.0, 0.0)]).is_err());
        assert!(Scene::new(vec![obj(0, 0.0, 0.0), obj(1, 1.6, 0.0)]).is_ok());
        assert!(Scene::new(vec![obj(0, 10.5, 0.0)]).is_err());
        assert!(Scene::new(vec![obj(1, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn assignment_restriction() {
        let g = RelationGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let mut a = MappingAssignment::empty();
        a.set(Edge(0, 1), MappingKind::Rotation, true);
        a.set(Edge(0, 2), MappingKind::Scale, true);
        assert!(!a.is_keyed_on(&g));
        let r = a.restricted_to(&g);
        assert!(r.is_keyed_on(&g));
        assert!(r.get(Edge(0, 1), MappingKind::Rotation));
        assert!(!r.get(Edge(0, 2), MappingKind::Scale));
        assert_eq!(r.count(), 1);
    }

    #[test]
    fn scene_json_uses_flat_records() {
        let s = Scene::new(vec![obj(0, 1.0, 2.0)]).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["objects"][0]["x"], 1.0);
        assert_eq!(v["objects"][0]["shape"], "circle");
        let back: Scene = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }
}
