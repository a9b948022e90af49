//! Parametric spectral embedding: a network whose orthonormalized outputs
//! minimize the generalized Rayleigh quotient of a per-batch kNN graph.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{build_affinity_cloud, clamp_k, AffinityGraph, Metric, PointCloud};
use crate::linalg::{cholesky_lower, lower_tri_inverse};
use crate::nn::optim::{Optimizer, TrainConfig};
use crate::nn::orthonorm::Orthonormalizer;
use crate::nn::{split_indices, EpochLoss, LossHistory, Mlp, OutTransform};

/// `tr((ỸᵀDỸ)⁻¹ Ỹᵀ(D − W)Ỹ)` with `Ỹ` the degree-weighted centering of `y`,
/// and its gradient with respect to `y`. This is the sum of the Rayleigh
/// quotients of `P` over the span of `y`, so it is bounded below by the sum
/// of the `k` smallest non-trivial eigenvalues of `L = I − P` and reaches it
/// on their eigenvectors.
pub fn spectralnet_loss(y: ArrayView2<'_, f64>, graph: &AffinityGraph) -> Result<(f64, Array2<f64>)> {
    let b = y.nrows();
    if graph.n() != b {
        return Err(Error::dim(format!("graph has {} nodes but batch has {b} rows", graph.n())));
    }
    let d = graph.degrees().view().insert_axis(Axis(1));
    let vol = d.sum();
    let yc = &y - &(d.t().dot(&y) / vol);
    let dy = &yc * &d;
    let wy = graph.weights().matmul(yc.view());
    let bm = yc.t().dot(&dy);
    let am = &bm - &yc.t().dot(&wy);
    let li = lower_tri_inverse(
        cholesky_lower(bm.view()).map_err(|_| Error::Numerical("batch embedding is rank deficient".into()))?.view(),
    )?;
    let b_inv = li.t().dot(&li);
    let loss = (&b_inv * &am).sum();
    // ∂/∂Ỹ = 2(D − W)Ỹ B⁻¹ − 2DỸ B⁻¹AB⁻¹, then back through the centering.
    let g = ((&dy - &wy).dot(&b_inv) - dy.dot(&b_inv.dot(&am).dot(&b_inv))) * 2.0;
    let grad = &g - &(&d * &g.sum_axis(Axis(0)).insert_axis(Axis(0)) / vol);
    Ok((loss, grad))
}

/// kNN affinity graph over the rows of a batch.
pub fn batch_graph(data: ArrayView2<'_, f64>, k_neighbors: usize, metric: Metric) -> Result<AffinityGraph> {
    let cloud = PointCloud::new(data.to_owned(), metric)?;
    build_affinity_cloud(&cloud, clamp_k(k_neighbors, cloud.n()))
}

fn batch_objective(net: &Mlp, x: ArrayView2<'_, f64>, graph: &AffinityGraph) -> Result<f64> {
    let raw = net.forward_raw(x)?;
    let (y, _) = Orthonormalizer::forward(raw.view())?;
    Ok(spectralnet_loss(y.view(), graph)?.0)
}

/// Trains `net` (whose out transform must be orthonormalization) and freezes
/// the output whitening on the full training set.
pub fn train_spectralnet(
    net: &Mlp,
    data: ArrayView2<'_, f64>,
    k_neighbors: usize,
    metric: Metric,
    config: &TrainConfig,
) -> Result<(Mlp, LossHistory)> {
    config.validate()?;
    if !matches!(net.out_transform(), OutTransform::Orthonormalize { .. }) {
        return Err(Error::config("spectral net needs an orthonormalizing output"));
    }
    if data.ncols() != net.input_dim() {
        return Err(Error::dim(format!(
            "data has width {}, net expects {}",
            data.ncols(),
            net.input_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut train_idx, val_idx) = split_indices(data.nrows(), config.val_fraction, &mut rng);
    let k_out = net.output_dim();
    if train_idx.len() <= k_out + 1 {
        return Err(Error::config("too few training points for the output dimension"));
    }
    let bs = config.batch_size.min(train_idx.len());
    if bs <= k_out + 1 {
        return Err(Error::config(format!(
            "batch size {bs} too small to orthonormalize {k_out} outputs"
        )));
    }
    let full_batch = bs >= train_idx.len();
    if full_batch {
        train_idx.sort_unstable();
    }
    let cached_full = if full_batch {
        let x = data.select(Axis(0), &train_idx);
        let graph = batch_graph(x.view(), k_neighbors, metric)?;
        Some((x, graph))
    } else {
        None
    };
    let val = if val_idx.len() > k_out + 1 {
        let x = data.select(Axis(0), &val_idx);
        let graph = batch_graph(x.view(), k_neighbors, metric)?;
        Some((x, graph))
    } else {
        None
    };

    let mut current = net.clone();
    let mut opt = Optimizer::new(config);
    let mut history = LossHistory::default();
    let mut best = current.clone();
    let mut best_loss = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        let fresh: Vec<(Array2<f64>, AffinityGraph)> = if cached_full.is_some() {
            Vec::new()
        } else {
            train_idx.shuffle(&mut rng);
            let steps = (train_idx.len() / bs).max(1);
            (0..steps)
                .map(|s| {
                    let end = if s + 1 == steps { train_idx.len() } else { (s + 1) * bs };
                    let x = data.select(Axis(0), &train_idx[s * bs..end]);
                    let graph = batch_graph(x.view(), k_neighbors, metric)?;
                    Ok((x, graph))
                })
                .collect::<Result<_>>()?
        };
        let batches: Vec<&(Array2<f64>, AffinityGraph)> = match &cached_full {
            Some(b) => vec![b],
            None => fresh.iter().collect(),
        };
        let mut total = 0.0;
        for (x, graph) in batches.iter().copied() {
            let (raw, tape) = current.forward_tape(x.view())?;
            let (y, cache) = Orthonormalizer::forward(raw.view())
                .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
            let (loss, dy) = spectralnet_loss(y.view(), graph)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite Rayleigh loss".into() });
            }
            let d_raw = Orthonormalizer::backward(&cache, dy.view());
            let (grads, _) = current.backward(&tape, d_raw.view())?;
            if !grads.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite gradient".into() });
            }
            opt.step(&mut current, &grads);
            total += loss;
        }
        let train_loss = total / batches.len() as f64;
        let val_loss = match &val {
            Some((x, graph)) => batch_objective(&current, x.view(), graph)
                .map_err(|e| Error::Training { epoch, message: e.to_string() })?,
            None => f64::NAN,
        };
        history.epochs.push(EpochLoss { epoch, train_loss, val_loss });
        let monitored = if val.is_some() { val_loss } else { train_loss };
        if monitored < best_loss {
            best_loss = monitored;
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
    let raw = best.forward_raw(data)?;
    let frozen = Orthonormalizer::freeze(raw.view())?;
    best.set_out_transform(OutTransform::Orthonormalize { frozen: Some(frozen) });
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn loss_is_invariant_to_basis_and_bounded_by_eigenvalues() {
        use crate::spectral::{fit_spectral, SpectralOptions};
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((80, 3), |_| rng.gen_range(-1.0..1.0));
        let g = batch_graph(x.view(), 8, Metric::Euclidean).unwrap();
        let set = crate::io::EmbeddingSet::from_f64("x", &x).unwrap();
        let m = fit_spectral(&set, &g, 2, &SpectralOptions::default()).unwrap();
        let opt: f64 = m.eigenvalues.iter().map(|l| 1.0 - l).sum();
        let (at_opt, grad) = spectralnet_loss(m.eigenvectors.view(), &g).unwrap();
        assert!((at_opt - opt).abs() < 1e-9, "{at_opt} vs {opt}");
        assert!(grad.iter().all(|v| v.abs() < 1e-7));
        let mixed = m.eigenvectors.dot(&array![[2.0, 1.0], [-0.5, 3.0]]) + 4.0;
        assert!((spectralnet_loss(mixed.view(), &g).unwrap().0 - opt).abs() < 1e-9);
        let r = Array2::from_shape_fn((80, 2), |_| rng.gen_range(-1.0..1.0));
        assert!(spectralnet_loss(r.view(), &g).unwrap().0 > opt);
    }
}
