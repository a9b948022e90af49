//! Paired-only baseline: two MLP towers trained contrastively on the known
//! pairs, with no use of unpaired data.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::align::SharedSpace;
use crate::derive_seed;
use crate::error::{Error, Result, StageExt};
use crate::io::{EmbeddingSet, PairManifest};
use crate::nn::{train_contrastive, Activation, LossHistory, Mlp, TrainConfig, DEFAULT_TEMPERATURE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub temperature: f64,
    pub train: TrainConfig,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            hidden: vec![256],
            out_dim: 32,
            temperature: DEFAULT_TEMPERATURE,
            train: TrainConfig {
                epochs: 300,
                batch_size: 256,
                val_fraction: 0.0,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContrastiveModel {
    pub net_x: Mlp,
    pub net_y: Mlp,
    pub history: LossHistory,
}

impl SharedSpace for ContrastiveModel {
    fn map_x_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.net_x.forward(points)
    }

    fn map_y_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.net_y.forward(points)
    }
}

pub fn fit_contrastive(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    pairs: &PairManifest,
    config: &ContrastiveConfig,
    seed: u64,
) -> Result<ContrastiveModel> {
    if pairs.m() < 2 {
        return Err(Error::config(format!("contrastive baseline needs >= 2 pairs, got {}", pairs.m())))
            .stage("contrastive");
    }
    let xs = x.to_f64().select(Axis(0), &pairs.x_indices());
    let ys = y.to_f64().select(Axis(0), &pairs.y_indices());
    let mut dims_x = vec![x.d()];
    dims_x.extend_from_slice(&config.hidden);
    dims_x.push(config.out_dim);
    let mut dims_y = dims_x.clone();
    dims_y[0] = y.d();
    let net_x = Mlp::new(&dims_x, Activation::Relu, false, derive_seed(seed, 11))?;
    let net_y = Mlp::new(&dims_y, Activation::Relu, false, derive_seed(seed, 12))?;
    let train = TrainConfig { seed: derive_seed(seed, 13), ..config.train.clone() };
    let (net_x, net_y, history) =
        train_contrastive(&net_x, &net_y, xs.view(), ys.view(), &train, config.temperature).stage("contrastive")?;
    Ok(ContrastiveModel { net_x, net_y, history })
}
