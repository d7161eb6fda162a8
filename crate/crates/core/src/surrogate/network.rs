//! Dense ReLU network with inverted dropout after every hidden layer, manual
//! backpropagation, and an Adam optimizer over flat parameter groups.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::seed::Rng as SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs x outputs`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-hidden-layer keep masks, already scaled by `1 / (1 - rate)`.
pub type DropoutMasks = Vec<Array2<f64>>;

pub struct ForwardCache {
    /// Input to every layer (`layers.len()` entries).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    masks: Option<DropoutMasks>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// PyTorch-style uniform initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut SeededRng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.sample(dist)),
                    bias: Array1::from_shape_simple_fn(w[1], || rng.sample(dist)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.ncols()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weights.ncols())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Samples keep masks for a batch of `rows`.
    pub fn sample_masks(&self, rows: usize, rate: f64, rng: &mut SeededRng) -> Option<DropoutMasks> {
        if rate <= 0.0 {
            return None;
        }
        let scale = 1.0 / (1.0 - rate);
        Some(
            self.hidden_sizes()
                .into_iter()
                .map(|h| {
                    Array2::from_shape_simple_fn((rows, h), || {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            scale
                        }
                    })
                })
                .collect(),
        )
    }

    pub fn forward(&self, x: ArrayView2<f64>, masks: Option<DropoutMasks>) -> (Array2<f64>, ForwardCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weights) + &layer.bias;
            inputs.push(h);
            if l == last {
                return (z, ForwardCache { inputs, pre, masks });
            }
            let mut a = z.mapv(|v| v.max(0.0));
            if let Some(m) = masks.as_ref() {
                a *= &m[l];
            }
            pre.push(z);
            h = a;
        }
        unreachable!("loop returns at the output layer")
    }

    /// Backpropagates `d_out` (gradient w.r.t. the network output) and returns
    /// parameter gradients and the gradient w.r.t. the input batch.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            grads.push(Dense {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            let mut d_input = delta.dot(&layer.weights.t());
            if l > 0 {
                if let Some(m) = cache.masks.as_ref() {
                    d_input *= &m[l - 1];
                }
                ndarray::Zip::from(&mut d_input)
                    .and(&cache.pre[l - 1])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            delta = d_input;
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_parameters(), "parameter count mismatch");
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        Mlp {
            layers: self.layers.clone(),
        }
        .flatten()
    }
}

/// Adam with bias correction over one flat parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, size: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; size],
            v: vec![0.0; size],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Applies one update to `params` (visited in the same order as `grad`).
    pub fn update<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grad: impl Iterator<Item = f64>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

impl Mlp {
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}
