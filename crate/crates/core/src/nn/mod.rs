//! Small dense-network engine: fully connected layers, manual backprop,
//! Adam/AdamW, and the three losses the pipeline trains with.

pub mod contrastive;
pub mod mmd;
pub mod optim;
pub mod orthonorm;
pub mod spectralnet;

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};

pub use contrastive::{info_nce, train_contrastive, DEFAULT_TEMPERATURE};
pub use mmd::{mmd_sq, mmd_sq_grad, train_mmd_residual, MmdKernel};
pub use optim::{Optimizer, OptimizerKind, TrainConfig};
pub use orthonorm::{AffineMap, Orthonormalizer};
pub use spectralnet::{spectralnet_loss, train_spectralnet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation.
    fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Batch transform applied after the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum OutTransform {
    #[default]
    None,
    /// Centers and whitens the batch output so `(1/b) YᵀY = I`. Once
    /// frozen, the affine map computed on the training set is used instead.
    Orthonormalize { frozen: Option<AffineMap> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `in × out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    residual: bool,
    out_transform: OutTransform,
}

/// Per-layer `(∂W, ∂b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Grads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice().unwrap(), b.as_slice().unwrap()])
            .collect()
    }
}

/// Intermediate values kept by [`Mlp::forward_tape`] for backprop.
pub struct Tape {
    input: Array2<f64>,
    /// Inputs to every layer.
    acts: Vec<Array2<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// Fully connected net with `dims = [in, hidden…, out]`. Hidden layers use
    /// He (ReLU) or Glorot (tanh) normal init; biases start at zero.
    pub fn new(dims: &[usize], activation: Activation, residual: bool, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("invalid layer dims {dims:?}")));
        }
        if residual && dims[0] != *dims.last().unwrap() {
            return Err(Error::config(format!(
                "residual net needs equal input and output dims, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = match activation {
                    Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                    Activation::Tanh => (2.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                Layer {
                    weight: Array2::from_shape_fn((fan_in, fan_out), |_| {
                        std * rng.sample::<f64, _>(StandardNormal)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            activation,
            residual,
            out_transform: OutTransform::None,
        })
    }

    /// Residual net `x ↦ x + g(x)` with a zeroed last layer, so it starts as
    /// the identity.
    pub fn residual_identity(dim: usize, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut dims = vec![dim];
        dims.extend_from_slice(hidden);
        dims.push(dim);
        let mut net = Mlp::new(&dims, activation, true, seed)?;
        let last = net.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation, residual: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].weight.ncols() != w[1].weight.nrows() {
                return Err(Error::dim("consecutive layer shapes do not chain"));
            }
        }
        for l in &layers {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::dim("bias length differs from layer width"));
            }
        }
        let net = Mlp {
            layers,
            activation,
            residual,
            out_transform: OutTransform::None,
        };
        if residual && net.input_dim() != net.output_dim() {
            return Err(Error::config("residual net needs equal input and output dims"));
        }
        Ok(net)
    }

    pub fn with_out_transform(mut self, t: OutTransform) -> Self {
        self.out_transform = t;
        self
    }

    pub fn out_transform(&self) -> &OutTransform {
        &self.out_transform
    }

    pub(crate) fn set_out_transform(&mut self, t: OutTransform) {
        self.out_transform = t;
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn is_residual(&self) -> bool {
        self.residual
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.ncols()));
        d
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::dim(format!(
                "{} parameters given, net has {}",
                p.len(),
                self.num_params()
            )));
        }
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.bias.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_slice_mut().unwrap(), l.bias.as_slice_mut().unwrap()])
            .collect()
    }

    fn check_input(&self, batch: ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "batch has width {}, net expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Network output before any out transform.
    pub fn forward_raw(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_tape(batch)?.0)
    }

    /// Full inference map, including a frozen out transform.
    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let raw = self.forward_raw(batch)?;
        match &self.out_transform {
            OutTransform::None => Ok(raw),
            OutTransform::Orthonormalize { frozen: Some(map) } => map.apply(raw.view()),
            OutTransform::Orthonormalize { frozen: None } => {
                Ok(Orthonormalizer::forward(raw.view())?.0)
            }
        }
    }

    pub fn forward_tape(&self, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(batch)?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weight) + &layer.bias;
            acts.push(h);
            if i < last {
                h = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
            } else {
                h = z;
            }
        }
        if self.residual {
            h += &batch;
        }
        Ok((
            h,
            Tape {
                input: batch.to_owned(),
                acts,
                pre,
            },
        ))
    }

    /// Parameter gradients and input gradient given `∂loss/∂output`
    /// (output before any out transform).
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<'_, f64>) -> Result<(Grads, Array2<f64>)> {
        if upstream.dim() != (tape.input.nrows(), self.output_dim()) {
            return Err(Error::dim(format!(
                "upstream gradient has shape {:?}, expected ({}, {})",
                upstream.dim(),
                tape.input.nrows(),
                self.output_dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let gw = tape.acts[i].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            grads.push((gw, gb));
            let mut back = delta.dot(&layer.weight.t());
            if i > 0 {
                let z = &tape.pre[i - 1];
                ndarray::Zip::from(&mut back)
                    .and(z)
                    .for_each(|b, &zv| *b *= self.activation.grad(zv));
            }
            delta = back;
        }
        grads.reverse();
        if self.residual {
            delta += &upstream;
        }
        Ok((Grads { layers: grads }, delta))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, checkpoint::Kind::Mlp, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, checkpoint::Kind::Mlp)
    }
}

/// Per-epoch losses of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

impl LossHistory {
    /// `epoch,train_loss,val_loss` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:e},{:e}\n", e.epoch, e.train_loss, e.val_loss));
        }
        s
    }

    pub fn best(&self) -> Option<&EpochLoss> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// Deterministic 90/10-style split of `0..n` into (train, validation).
pub(crate) fn split_indices(n: usize, val_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((n as f64) * val_fraction).floor() as usize;
    let n_val = if n - n_val < 2 { 0 } else { n_val };
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}
