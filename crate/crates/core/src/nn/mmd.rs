//! Squared maximum mean discrepancy (biased V-statistic, diagonal terms kept)
//! and the residual aligner trained to minimize it.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::optim::{Optimizer, TrainConfig};
use crate::nn::{split_indices, EpochLoss, LossHistory, Mlp};

pub const DEFAULT_BANDWIDTH_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Validation sets are capped to keep the O(m²) evaluation cheap.
const MAX_VAL_ROWS: usize = 1024;

/// Kernel used by the MMD: an equal-weight mixture of RBF kernels
/// `exp(−‖a − b‖² / (2σ²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdKernel {
    /// Explicit bandwidths.
    Fixed(Vec<f64>),
    /// Bandwidths = median pairwise distance of the joined batch × each multiplier.
    MedianMixture(Vec<f64>),
}

impl Default for MmdKernel {
    fn default() -> Self {
        MmdKernel::MedianMixture(DEFAULT_BANDWIDTH_MULTIPLIERS.to_vec())
    }
}

impl MmdKernel {
    /// Concrete bandwidths for a batch pair. The median is treated as a
    /// constant by the gradient.
    pub fn resolve(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let bw = match self {
            MmdKernel::Fixed(b) => b.clone(),
            MmdKernel::MedianMixture(mults) => {
                let med = median_pairwise_distance(x, y);
                let med = if med > 0.0 { med } else { 1.0 };
                mults.iter().map(|m| m * med).collect()
            }
        };
        if bw.is_empty() || bw.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::config(format!("invalid kernel bandwidths {bw:?}")));
        }
        Ok(bw)
    }
}

fn median_pairwise_distance(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> f64 {
    let (xo, yo) = (x.to_owned(), y.to_owned());
    let joined = ndarray::concatenate(Axis(0), &[xo.view(), yo.view()]).unwrap();
    let n = joined.nrows();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let a = joined.row(i);
        for j in i + 1..n {
            let b = joined.row(j);
            d.push(a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

fn check_dims(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::dim("MMD needs at least one sample per side"));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::dim(format!(
            "MMD samples have dimensions {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    Ok(())
}

/// Sum over the block `a × b` of κ, plus (optionally) ∂/∂a of that sum.
fn block(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    inv_two_sig2: &[f64],
    mut grad_a: Option<&mut Array2<f64>>,
    coef: f64,
) -> f64 {
    let w = 1.0 / inv_two_sig2.len() as f64;
    let mut total = 0.0;
    for i in 0..a.nrows() {
        let ai = a.row(i);
        for j in 0..b.nrows() {
            let bj = b.row(j);
            let d2: f64 = ai.iter().zip(bj.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
            let mut k = 0.0;
            let mut dk = 0.0;
            for &c in inv_two_sig2 {
                let e = (-d2 * c).exp();
                k += e;
                dk += e * 2.0 * c;
            }
            total += w * k;
            if let Some(g) = grad_a.as_deref_mut() {
                // ∂κ/∂a = −w Σ_s e_s (a − b)/σ_s²
                let f = -coef * w * dk;
                let mut gi = g.row_mut(i);
                for ((gv, u), v) in gi.iter_mut().zip(ai.iter()).zip(bj.iter()) {
                    *gv += f * (u - v);
                }
            }
        }
    }
    total
}

/// `(1/m₁²)Σκ(xᵢ,xⱼ) − (2/(m₁m₂))Σκ(xᵢ,yⱼ) + (1/m₂²)Σκ(yᵢ,yⱼ)`.
pub fn mmd_sq(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, kernel: &MmdKernel) -> Result<f64> {
    check_dims(x, y)?;
    let bw = kernel.resolve(x, y)?;
    Ok(mmd_with_bandwidths(x, y, &bw, false).0)
}

/// Value plus gradients with respect to both samples (bandwidths held fixed).
pub fn mmd_sq_grad(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    kernel: &MmdKernel,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_dims(x, y)?;
    let bw = kernel.resolve(x, y)?;
    let (v, g) = mmd_with_bandwidths(x, y, &bw, true);
    let (gx, gy) = g.unwrap();
    Ok((v, gx, gy))
}

#[allow(clippy::type_complexity)]
fn mmd_with_bandwidths(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    bw: &[f64],
    with_grad: bool,
) -> (f64, Option<(Array2<f64>, Array2<f64>)>) {
    let c: Vec<f64> = bw.iter().map(|s| 1.0 / (2.0 * s * s)).collect();
    let m1 = x.nrows() as f64;
    let m2 = y.nrows() as f64;
    if !with_grad {
        let xx = block(x, x, &c, None, 0.0);
        let xy = block(x, y, &c, None, 0.0);
        let yy = block(y, y, &c, None, 0.0);
        let v = xx / (m1 * m1) - 2.0 * xy / (m1 * m2) + yy / (m2 * m2);
        return (v, None);
    }
    let mut gx = Array2::zeros(x.dim());
    let mut gy = Array2::zeros(y.dim());
    // Self blocks are symmetric, so each point's gradient appears twice.
    let xx = block(x, x, &c, Some(&mut gx), 2.0 / (m1 * m1));
    let xy = block(x, y, &c, Some(&mut gx), -2.0 / (m1 * m2));
    block(y, x, &c, Some(&mut gy), -2.0 / (m1 * m2));
    let yy = block(y, y, &c, Some(&mut gy), 2.0 / (m2 * m2));
    let v = xx / (m1 * m1) - 2.0 * xy / (m1 * m2) + yy / (m2 * m2);
    (v, Some((gx, gy)))
}

fn rows(a: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

/// Trains the residual net `F` so the distribution of `F(source)` matches
/// `target`. Batches are drawn independently from each side; pairing is
/// never consulted. Returns the parameters of the best validation epoch
/// (epoch 0 is the untrained net).
pub fn train_mmd_residual(
    net: &Mlp,
    source: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    config: &TrainConfig,
    kernel: &MmdKernel,
) -> Result<(Mlp, LossHistory)> {
    config.validate()?;
    if !net.is_residual() {
        return Err(Error::config("MMD aligner must be a residual net"));
    }
    if source.ncols() != net.input_dim() || target.ncols() != net.output_dim() {
        return Err(Error::dim(format!(
            "aligner is {}→{}, data is {}→{}",
            net.input_dim(),
            net.output_dim(),
            source.ncols(),
            target.ncols()
        )));
    }
    if source.nrows() < 2 || target.nrows() < 2 {
        return Err(Error::config("MMD training needs at least two samples per side"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (src_train, src_val) = split_indices(source.nrows(), config.val_fraction, &mut rng);
    let (tgt_train, tgt_val) = split_indices(target.nrows(), config.val_fraction, &mut rng);
    let (src_val, tgt_val) = if src_val.is_empty() || tgt_val.is_empty() {
        (src_train.clone(), tgt_train.clone())
    } else {
        (src_val, tgt_val)
    };
    let src_val = rows(source, &src_val[..src_val.len().min(MAX_VAL_ROWS)]);
    let tgt_val = rows(target, &tgt_val[..tgt_val.len().min(MAX_VAL_ROWS)]);
    // Fixed validation kernel so epochs are comparable.
    let val_kernel = MmdKernel::Fixed(kernel.resolve(src_val.view(), tgt_val.view())?);
    let val_loss = |n: &Mlp| -> Result<f64> {
        let out = n.forward(src_val.view())?;
        mmd_sq(out.view(), tgt_val.view(), &val_kernel)
    };

    let mut current = net.clone();
    let mut best = net.clone();
    let v0 = val_loss(&current)?;
    let mut history = LossHistory {
        epochs: vec![EpochLoss { epoch: 0, train_loss: f64::NAN, val_loss: v0 }],
        best_epoch: 0,
    };
    let mut best_val = v0;
    let mut since_best = 0;
    let mut opt = Optimizer::new(config);
    let bs = config.batch_size;
    let mut src_perm = src_train.clone();
    let mut tgt_perm = tgt_train.clone();
    for epoch in 1..=config.epochs {
        src_perm.shuffle(&mut rng);
        tgt_perm.shuffle(&mut rng);
        let steps = src_perm.len().div_ceil(bs);
        let mut total = 0.0;
        for step in 0..steps {
            let s_idx = &src_perm[step * bs..((step + 1) * bs).min(src_perm.len())];
            if s_idx.len() < 2 {
                continue;
            }
            let t_start = (step * bs) % tgt_perm.len();
            let t_idx: Vec<usize> = (0..bs.min(tgt_perm.len()))
                .map(|i| tgt_perm[(t_start + i) % tgt_perm.len()])
                .collect();
            let xb = rows(source, s_idx);
            let yb = rows(target, &t_idx);
            let (out, tape) = current.forward_tape(xb.view())?;
            let (loss, g_out, _) = mmd_sq_grad(out.view(), yb.view(), kernel)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite MMD loss".into() });
            }
            let (grads, _) = current.backward(&tape, g_out.view())?;
            if !grads.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite gradient".into() });
            }
            opt.step(&mut current, &grads);
            if !current.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite parameters".into() });
            }
            total += loss;
        }
        let v = val_loss(&current)?;
        if !v.is_finite() {
            return Err(Error::Training { epoch, message: "non-finite validation loss".into() });
        }
        history.epochs.push(EpochLoss {
            epoch,
            train_loss: total / steps.max(1) as f64,
            val_loss: v,
        });
        if v < best_val {
            best_val = v;
            best = current.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    Ok((best, history))
}
