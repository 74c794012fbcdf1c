//! Edge-factored reward network and the scene value network.
//!
//! The reward of a scene under a graph is the mean of one shared network's
//! output over the graph's edge encodings. Scenes and transformed edge sets
//! are both flattened into an [`EdgeBatch`] so a whole minibatch runs as a
//! handful of matrix products.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::mappings::TransformedEdgeSet;
use crate::nn::{ForwardCache, Mlp, MlpSnapshot};
use crate::scene::{pair_feature, RelationGraph, Scene, EDGE_FEATURES, OBJECT_FEATURES};

pub const HIDDEN_WIDTH: usize = 64;
pub const HIDDEN_DEPTH: usize = 4;

const COORD_SCALE: f64 = 1.0 / 10.0;
const ANGLE_SCALE: f64 = 1.0 / PI;

/// Fixed input normalization applied in place to one object slot.
fn scale_object(slot: &mut [f64]) {
    slot[0] *= COORD_SCALE;
    slot[1] *= COORD_SCALE;
    slot[2] *= ANGLE_SCALE;
}

/// Network input: a raw scene or a transformed edge set.
#[derive(Debug, Clone, Copy)]
pub enum RewardInput<'a> {
    Scene(&'a Scene),
    Edges(&'a TransformedEdgeSet),
}

/// Flattened edge encodings for a batch of samples.
#[derive(Debug, Clone, Default)]
pub struct EdgeBatch {
    data: Vec<f64>,
    counts: Vec<usize>,
}

impl EdgeBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> usize {
        self.counts.len()
    }

    fn push_row(&mut self, mut f: [f64; EDGE_FEATURES]) {
        scale_object(&mut f[..OBJECT_FEATURES]);
        scale_object(&mut f[OBJECT_FEATURES..]);
        self.data.extend_from_slice(&f);
    }

    /// Adds one sample. Graph edges must be valid for the input.
    pub fn push(&mut self, input: RewardInput<'_>, graph: &RelationGraph) -> Result<()> {
        match input {
            RewardInput::Scene(scene) => {
                for e in graph.edges() {
                    let a = scene.object(e.lo())?;
                    let b = scene.object(e.hi())?;
                    self.push_row(pair_feature(a, b));
                }
                self.counts.push(graph.len());
            }
            RewardInput::Edges(set) => {
                let mut used = 0;
                for entry in &set.entries {
                    if graph.contains(entry.edge) {
                        self.push_row(entry.feature());
                        used += 1;
                    }
                }
                if used != graph.len() {
                    return Err(GemError::DimensionMismatch {
                        expected: graph.len(),
                        got: used,
                    });
                }
                self.counts.push(used);
            }
        }
        Ok(())
    }

    pub fn push_scene(&mut self, scene: &Scene, graph: &RelationGraph) -> Result<()> {
        self.push(RewardInput::Scene(scene), graph)
    }

    fn matrix(&self) -> Array2<f64> {
        let rows = self.data.len() / EDGE_FEATURES;
        Array2::from_shape_vec((rows, EDGE_FEATURES), self.data.clone()).expect("row-major edge data")
    }

    fn pool(&self, edge_values: &Array1<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.counts.len());
        let mut offset = 0;
        for &c in &self.counts {
            let sum: f64 = edge_values.slice(ndarray::s![offset..offset + c]).sum();
            out.push(sum / c as f64);
            offset += c;
        }
        out
    }
}

/// Cached forward pass over an [`EdgeBatch`].
pub struct BatchCache {
    inner: ForwardCache,
    counts: Vec<usize>,
}

/// Reward network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RewardSnapshot", try_from = "RewardSnapshot")]
pub struct RewardNet {
    pub mlp: Mlp,
}

impl RewardNet {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::with_shape(HIDDEN_WIDTH, HIDDEN_DEPTH, rng)
    }

    pub fn with_shape<R: Rng + ?Sized>(hidden: usize, depth: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(EDGE_FEATURES, hidden, depth, rng),
        }
    }

    /// Raw per-edge outputs for an edge batch.
    pub fn edge_values(&self, batch: &EdgeBatch) -> Result<Array1<f64>> {
        self.mlp.forward(batch.matrix().view())
    }

    /// Mean edge value per sample.
    pub fn forward_batch(&self, batch: &EdgeBatch) -> Result<Vec<f64>> {
        if batch.samples() == 0 {
            return Ok(Vec::new());
        }
        Ok(batch.pool(&self.edge_values(batch)?))
    }

    pub fn forward_batch_cached(&self, batch: &EdgeBatch) -> Result<(Vec<f64>, BatchCache)> {
        let (values, inner) = self.mlp.forward_cached(batch.matrix().view())?;
        Ok((
            batch.pool(&values),
            BatchCache {
                inner,
                counts: batch.counts.clone(),
            },
        ))
    }

    /// Gradient of `sum_b upstream[b] * R_b` with respect to the parameters.
    pub fn backward_batch(&self, cache: &BatchCache, upstream: &[f64]) -> Mlp {
        let rows: usize = cache.counts.iter().sum();
        let mut per_row = Array1::zeros(rows);
        let mut offset = 0;
        for (&c, &u) in cache.counts.iter().zip(upstream) {
            per_row
                .slice_mut(ndarray::s![offset..offset + c])
                .fill(u / c as f64);
            offset += c;
        }
        self.mlp.backward(&cache.inner, per_row.view())
    }

    /// Reward of one input under `graph`.
    pub fn reward(&self, input: RewardInput<'_>, graph: &RelationGraph) -> Result<f64> {
        let mut batch = EdgeBatch::new();
        batch.push(input, graph)?;
        Ok(self.forward_batch(&batch)?[0])
    }

    pub fn scene_reward(&self, scene: &Scene, graph: &RelationGraph) -> Result<f64> {
        self.reward(RewardInput::Scene(scene), graph)
    }

    /// Rewards for many scenes under one graph.
    pub fn scene_rewards(&self, scenes: &[Scene], graph: &RelationGraph) -> Result<Vec<f64>> {
        let mut batch = EdgeBatch::new();
        for s in scenes {
            batch.push_scene(s, graph)?;
        }
        self.forward_batch(&batch)
    }

    /// Gradient of `upstream * R(input | graph)`.
    pub fn reward_backward(
        &self,
        input: RewardInput<'_>,
        graph: &RelationGraph,
        upstream: f64,
    ) -> Result<Mlp> {
        let mut batch = EdgeBatch::new();
        batch.push(input, graph)?;
        let (_, cache) = self.forward_batch_cached(&batch)?;
        Ok(self.backward_batch(&cache, &[upstream]))
    }

    /// Rescales the output layer so every reward becomes `(R - mean) / std`.
    pub fn standardize(&mut self, mean: f64, std: f64) {
        let last = self.mlp.layers.last_mut().expect("output layer");
        last.weight /= std;
        last.bias.mapv_inplace(|b| (b - mean) / std);
    }
}

/// Value (shaping) network over the full scene encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ValueSnapshot", try_from = "ValueSnapshot")]
pub struct ValueNet {
    pub mlp: Mlp,
    pub n_objects: usize,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(n_objects: usize, rng: &mut R) -> Self {
        Self::with_shape(n_objects, HIDDEN_WIDTH, HIDDEN_DEPTH, rng)
    }

    pub fn with_shape<R: Rng + ?Sized>(n_objects: usize, hidden: usize, depth: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(OBJECT_FEATURES * n_objects, hidden, depth, rng),
            n_objects,
        }
    }

    /// Scaled encodings, one row per scene.
    pub fn input_matrix<'a>(&self, scenes: impl IntoIterator<Item = &'a Scene>) -> Result<Array2<f64>> {
        let width = OBJECT_FEATURES * self.n_objects;
        let mut data = Vec::new();
        let mut rows = 0;
        for s in scenes {
            if s.len() != self.n_objects {
                return Err(GemError::DimensionMismatch {
                    expected: self.n_objects,
                    got: s.len(),
                });
            }
            let mut enc = s.encode();
            for slot in enc.chunks_mut(OBJECT_FEATURES) {
                scale_object(slot);
            }
            data.extend(enc);
            rows += 1;
        }
        Ok(Array2::from_shape_vec((rows, width), data).expect("row-major scene data"))
    }

    pub fn values<'a>(&self, scenes: impl IntoIterator<Item = &'a Scene>) -> Result<Vec<f64>> {
        let x = self.input_matrix(scenes)?;
        if x.nrows() == 0 {
            return Ok(Vec::new());
        }
        Ok(self.mlp.forward(x.view())?.to_vec())
    }

    pub fn value(&self, scene: &Scene) -> Result<f64> {
        Ok(self.values([scene])?[0])
    }
}

/// Serializable snapshot of both networks' parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSnapshot {
    pub version: u32,
    pub network: MlpSnapshot,
}

impl From<&RewardNet> for RewardSnapshot {
    fn from(r: &RewardNet) -> Self {
        Self {
            version: 1,
            network: MlpSnapshot::from(&r.mlp),
        }
    }
}

impl From<RewardNet> for RewardSnapshot {
    fn from(r: RewardNet) -> Self {
        Self::from(&r)
    }
}

impl TryFrom<RewardSnapshot> for RewardNet {
    type Error = GemError;

    fn try_from(s: RewardSnapshot) -> Result<Self> {
        if s.version != 1 {
            return Err(GemError::Snapshot(format!("unsupported version {}", s.version)));
        }
        let mlp = Mlp::try_from(s.network)?;
        if mlp.input_width() != EDGE_FEATURES {
            return Err(GemError::Snapshot("reward network input width".into()));
        }
        Ok(Self { mlp })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSnapshot {
    pub version: u32,
    pub n_objects: usize,
    pub network: MlpSnapshot,
}

impl From<&ValueNet> for ValueSnapshot {
    fn from(v: &ValueNet) -> Self {
        Self {
            version: 1,
            n_objects: v.n_objects,
            network: MlpSnapshot::from(&v.mlp),
        }
    }
}

impl From<ValueNet> for ValueSnapshot {
    fn from(v: ValueNet) -> Self {
        Self::from(&v)
    }
}

impl TryFrom<ValueSnapshot> for ValueNet {
    type Error = GemError;

    fn try_from(s: ValueSnapshot) -> Result<Self> {
        if s.version != 1 {
            return Err(GemError::Snapshot(format!("unsupported version {}", s.version)));
        }
        let mlp = Mlp::try_from(s.network)?;
        if mlp.input_width() != OBJECT_FEATURES * s.n_objects {
            return Err(GemError::Snapshot("value network input width".into()));
        }
        Ok(Self {
            mlp,
            n_objects: s.n_objects,
        })
    }
}
