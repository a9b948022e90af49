//! Paired contrastive baseline: symmetric InfoNCE over cosine similarities.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::optim::{Optimizer, TrainConfig};
use crate::nn::{EpochLoss, LossHistory, Mlp};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

fn normalize_rows(z: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let norms: Array1<f64> = z.rows().into_iter().map(|r| r.dot(&r).sqrt().max(1e-12)).collect();
    let u = &z / &norms.view().insert_axis(Axis(1));
    (u, norms)
}

fn log_softmax_rows(s: &Array2<f64>) -> Array2<f64> {
    let mut out = s.clone();
    for mut r in out.rows_mut() {
        let m = r.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        r.mapv_inplace(|v| v - lse);
    }
    out
}

/// Symmetric InfoNCE between row-paired outputs and its gradients:
/// `½ [CE(rows of S) + CE(columns of S)]`, `S = cos(zx, zy) / τ`.
pub fn info_nce(
    zx: ArrayView2<'_, f64>,
    zy: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let m = zx.nrows();
    if m < 2 || zy.nrows() != m {
        return Err(Error::config(format!(
            "contrastive loss needs >= 2 row-paired samples, got {m} and {}",
            zy.nrows()
        )));
    }
    if zx.ncols() != zy.ncols() {
        return Err(Error::dim("contrastive outputs differ in width"));
    }
    if !(temperature > 0.0) {
        return Err(Error::config("temperature must be > 0"));
    }
    let (ux, nx) = normalize_rows(zx);
    let (uy, ny) = normalize_rows(zy);
    let s = ux.dot(&uy.t()) / temperature;
    let lr = log_softmax_rows(&s);
    let lc = log_softmax_rows(&s.t().to_owned());
    let mf = m as f64;
    let loss = -0.5 * ((0..m).map(|i| lr[[i, i]]).sum::<f64>() + (0..m).map(|i| lc[[i, i]]).sum::<f64>()) / mf;
    // ∂loss/∂S
    let mut ds = lr.mapv(f64::exp) + lc.mapv(f64::exp).t();
    for i in 0..m {
        ds[[i, i]] -= 2.0;
    }
    ds *= 0.5 / mf;
    let dux = ds.dot(&uy) / temperature;
    let duy = ds.t().dot(&ux) / temperature;
    let back = |u: &Array2<f64>, du: Array2<f64>, n: &Array1<f64>| -> Array2<f64> {
        let proj: Array1<f64> = (u * &du).sum_axis(Axis(1));
        (du - &(u * &proj.insert_axis(Axis(1)))) / &n.view().insert_axis(Axis(1))
    };
    Ok((loss, back(&ux, dux, &nx), back(&uy, duy, &ny)))
}

/// Trains both towers on the row-paired samples `(x[i], y[i])`.
pub fn train_contrastive(
    net_x: &Mlp,
    net_y: &Mlp,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    config: &TrainConfig,
    temperature: f64,
) -> Result<(Mlp, Mlp, LossHistory)> {
    config.validate()?;
    let m = x.nrows();
    if m < 2 || y.nrows() != m {
        return Err(Error::config(format!("contrastive training needs >= 2 pairs, got {m}")));
    }
    if net_x.output_dim() != net_y.output_dim() {
        return Err(Error::dim("contrastive towers have different output dims"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut fx = net_x.clone();
    let mut fy = net_y.clone();
    let mut opt_x = Optimizer::new(config);
    let mut opt_y = Optimizer::new(config);
    let mut history = LossHistory::default();
    let eval = |fx: &Mlp, fy: &Mlp| -> Result<f64> {
        Ok(info_nce(fx.forward(x)?.view(), fy.forward(y)?.view(), temperature)?.0)
    };
    history.epochs.push(EpochLoss { epoch: 0, train_loss: eval(&fx, &fy)?, val_loss: f64::NAN });
    let bs = config.batch_size.min(m);
    let mut perm: Vec<usize> = (0..m).collect();
    for epoch in 1..=config.epochs {
        perm.shuffle(&mut rng);
        let steps = (m / bs).max(1);
        let mut total = 0.0;
        for s in 0..steps {
            let end = if s + 1 == steps { m } else { (s + 1) * bs };
            let idx = &perm[s * bs..end];
            let xb = x.select(Axis(0), idx);
            let yb = y.select(Axis(0), idx);
            let (ox, tx) = fx.forward_tape(xb.view())?;
            let (oy, ty) = fy.forward_tape(yb.view())?;
            let (loss, gx, gy) = info_nce(ox.view(), oy.view(), temperature)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite contrastive loss".into() });
            }
            let (grad_x, _) = fx.backward(&tx, gx.view())?;
            let (grad_y, _) = fy.backward(&ty, gy.view())?;
            opt_x.step(&mut fx, &grad_x);
            opt_y.step(&mut fy, &grad_y);
            total += loss;
        }
        history.epochs.push(EpochLoss { epoch, train_loss: total / steps as f64, val_loss: f64::NAN });
        history.best_epoch = epoch;
    }
    Ok((fx, fy, history))
}
