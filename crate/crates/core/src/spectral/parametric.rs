//! Parametric route: a SpectralNet-style network trained on the Rayleigh
//! quotient, usable wherever a numeric [`SpectralModel`](super::SpectralModel)
//! is.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::graph::{AffinityGraph, Metric};
use crate::io::EmbeddingSet;
use crate::nn::{spectralnet_loss, train_spectralnet, Activation, LossHistory, Mlp, OutTransform, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParametricConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for ParametricConfig {
    fn default() -> Self {
        ParametricConfig {
            hidden: vec![256, 256],
            activation: Activation::Tanh,
            train: TrainConfig {
                learning_rate: 1e-3,
                epochs: 300,
                batch_size: 4096,
                weight_decay: 0.0,
                val_fraction: 0.1,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParametricSpectral {
    pub net: Mlp,
    pub k_neighbors: usize,
    pub metric: Metric,
    pub history: LossHistory,
}

impl ParametricSpectral {
    pub fn k(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn embed(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if points.nrows() == 0 {
            if points.ncols() != self.input_dim() {
                return Err(Error::dim("points do not match the network input width"));
            }
            return Ok(Array2::zeros((0, self.k())));
        }
        self.net.forward(points)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, checkpoint::Kind::Parametric, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, checkpoint::Kind::Parametric)
    }
}

/// Trains the parametric embedding of `set`; `graph` supplies the kNN
/// parameters used for every per-batch graph.
pub fn fit_spectral_parametric(
    set: &EmbeddingSet,
    graph: &AffinityGraph,
    k: usize,
    config: &ParametricConfig,
) -> Result<ParametricSpectral> {
    if graph.n() != set.n() {
        return Err(Error::dim(format!(
            "graph has {} nodes but the set has {} points",
            graph.n(),
            set.n()
        )));
    }
    if k == 0 || k + 1 >= set.n() {
        return Err(Error::config(format!("spectral dimension k = {k} out of range")));
    }
    let mut dims = vec![set.d()];
    dims.extend_from_slice(&config.hidden);
    dims.push(k);
    let net = Mlp::new(&dims, config.activation, false, config.train.seed)?
        .with_out_transform(OutTransform::Orthonormalize { frozen: None });
    let data = set.to_f64();
    let (net, history) = train_spectralnet(&net, data.view(), graph.k_neighbors, graph.metric, &config.train)?;
    Ok(ParametricSpectral {
        net,
        k_neighbors: graph.k_neighbors,
        metric: graph.metric,
        history,
    })
}

/// Sum of Rayleigh quotients of the subspace spanned by the columns of `y`
/// for the pencil `(D − W, D)`, after removing the trivial direction:
/// `tr((YᵀDY)⁻¹ Yᵀ(D − W)Y)`. Bounded below by the sum of the `k` smallest
/// non-trivial eigenvalues of `L = I − P`. This is the training objective.
pub fn rayleigh_quotient(graph: &AffinityGraph, y: ArrayView2<'_, f64>) -> Result<f64> {
    if y.nrows() != graph.n() {
        return Err(Error::dim("embedding rows do not match graph nodes"));
    }
    Ok(spectralnet_loss(y, graph)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_affinity;
    use crate::spectral::{fit_spectral, SpectralOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rayleigh_quotient_of_eigenvectors_is_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((120, 3), |_| rng.gen_range(-1.0f32..1.0));
        let set = EmbeddingSet::new("x", x).unwrap();
        let g = build_affinity(&set, 10, Metric::Euclidean).unwrap();
        let m = fit_spectral(&set, &g, 3, &SpectralOptions::default()).unwrap();
        let rq = rayleigh_quotient(&g, m.eigenvectors.view()).unwrap();
        let want: f64 = m.eigenvalues.iter().map(|l| 1.0 - l).sum();
        assert!((rq - want).abs() < 1e-8, "{rq} vs {want}");
        // Any other subspace scores at least as high.
        let r = Array2::from_shape_fn((120, 3), |_| rng.gen_range(-1.0..1.0));
        assert!(rayleigh_quotient(&g, r.view()).unwrap() >= want);
    }
}
