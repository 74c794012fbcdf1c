//! Dense ReLU networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};

/// Fully connected layer; `weight` is `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..bound)),
            bias: Array1::from_shape_fn(outputs, |_| rng.random_range(-bound..bound)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// ReLU hidden layers followed by a linear scalar output.
///
/// The same type doubles as a gradient or optimizer-moment buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs recorded during a forward pass.
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl Mlp {
    /// `depth` hidden layers of width `hidden`, then a linear layer to one output.
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, depth: usize, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(depth + 1);
        let mut width = inputs;
        for _ in 0..depth {
            layers.push(Dense::uniform(width, hidden, rng));
            width = hidden;
        }
        layers.push(Dense::uniform(width, 1, rng));
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Mutable view of every parameter, layer by layer, weights before biases.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Mlp) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(GemError::DimensionMismatch {
                expected: self.input_width(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// One output per input row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            if idx < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a.column(0).to_owned())
    }

    /// Forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            if idx < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(a);
            a = z;
        }
        Ok((a.column(0).to_owned(), ForwardCache { activations }))
    }

    /// Parameter gradients given `dL/dy` for every row of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView1<f64>) -> Mlp {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned().insert_axis(Axis(1));
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[idx];
            let weight = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Dense { weight, bias });
            if idx > 0 {
                let mut d_input = delta.dot(&layer.weight.t());
                // input is a ReLU output, so a zero entry means the unit was inactive.
                Zip::from(&mut d_input).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_input;
            }
        }
        grads.reverse();
        Mlp { layers: grads }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Mlp,
    v: Mlp,
}

pub const DEFAULT_LR: f64 = 3e-4;

impl Adam {
    pub fn new(params: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Applies one update. Non-finite gradients leave everything untouched.
    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp) -> Result<()> {
        if !grads.is_finite() {
            return Err(GemError::NonFinite("gradient".into()));
        }
        if grads.layers.len() != params.layers.len() {
            return Err(GemError::DimensionMismatch {
                expected: params.layers.len(),
                got: grads.layers.len(),
            });
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, m), v), g) in params
            .layers
            .iter_mut()
            .zip(self.m.layers.iter_mut())
            .zip(self.v.layers.iter_mut())
            .zip(&grads.layers)
        {
            Zip::from(&mut p.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(update);
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Serializable form of an [`Mlp`]: layer shapes plus flat row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSnapshot {
    pub layers: Vec<LayerSnapshot>,
}

impl From<&Mlp> for MlpSnapshot {
    fn from(m: &Mlp) -> Self {
        Self {
            layers: m
                .layers
                .iter()
                .map(|l| LayerSnapshot {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    weight: l.weight.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpSnapshot> for Mlp {
    type Error = GemError;

    fn try_from(s: MlpSnapshot) -> Result<Self> {
        if s.layers.is_empty() {
            return Err(GemError::Snapshot("no layers".into()));
        }
        let mut layers = Vec::with_capacity(s.layers.len());
        let mut width = s.layers[0].inputs;
        for l in s.layers {
            if l.inputs != width || l.bias.len() != l.outputs {
                return Err(GemError::Snapshot("inconsistent layer shapes".into()));
            }
            let weight = Array2::from_shape_vec((l.inputs, l.outputs), l.weight)
                .map_err(|e| GemError::Snapshot(e.to_string()))?;
            width = l.outputs;
            layers.push(Dense {
                weight,
                bias: Array1::from(l.bias),
            });
        }
        if width != 1 {
            return Err(GemError::Snapshot("network must end in one output".into()));
        }
        let mlp = Mlp { layers };
        if !mlp.is_finite() {
            return Err(GemError::Snapshot("non-finite weights".into()));
        }
        Ok(mlp)
    }
}
