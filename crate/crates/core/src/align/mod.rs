//! The full pipeline: per-modality spectral embeddings, CCA on the known
//! pairs, and an MMD-trained residual on the Y side. The final maps are
//! `f_X = Q_X ∘ S_X` and `f_Y = F ∘ Q_Y ∘ S_Y`.

pub mod baseline;
pub mod cca;

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::derive_seed;
use crate::error::{Error, Result, StageExt};
use crate::graph::{build_affinity, clamp_k, Metric, DEFAULT_K_NEIGHBORS};
use crate::io::{EmbeddingSet, PairManifest};
use crate::nn::{train_mmd_residual, Activation, LossHistory, Mlp, MmdKernel, TrainConfig};
use crate::spectral::parametric::ParametricConfig;
use crate::spectral::{
    embed_train, fit_spectral, fit_spectral_parametric, EigenSolver, Embedder, SpectralOptions,
    DEFAULT_SE_DIM,
};

pub use baseline::{fit_contrastive, ContrastiveConfig, ContrastiveModel};
pub use cca::{fit_cca, project, CcaProjection, Side, DEFAULT_CCA_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpectralPath {
    #[default]
    Numeric,
    Parametric,
}

/// Everything `fit_sue` needs. Ablations switch stages off: no SE means CCA
/// runs on raw features; no CCA means the two embeddings are compared as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SueConfig {
    pub k_neighbors: usize,
    pub metric: Metric,
    pub se_dim: usize,
    pub spectral_path: SpectralPath,
    pub solver: EigenSolver,
    pub parametric: ParametricConfig,
    pub cca_dim: usize,
    pub ridge: Option<f64>,
    pub mmd: TrainConfig,
    pub mmd_hidden: Vec<usize>,
    pub bandwidth_multipliers: Vec<f64>,
    pub use_se: bool,
    pub use_cca: bool,
    pub use_mmd: bool,
    pub seed: u64,
}

impl Default for SueConfig {
    fn default() -> Self {
        SueConfig {
            k_neighbors: DEFAULT_K_NEIGHBORS,
            metric: Metric::Cosine,
            se_dim: DEFAULT_SE_DIM,
            spectral_path: SpectralPath::Numeric,
            solver: EigenSolver::Auto,
            parametric: ParametricConfig::default(),
            cca_dim: DEFAULT_CCA_DIM,
            ridge: None,
            mmd: TrainConfig::default(),
            mmd_hidden: vec![128, 128, 128],
            bandwidth_multipliers: crate::nn::mmd::DEFAULT_BANDWIDTH_MULTIPLIERS.to_vec(),
            use_se: true,
            use_cca: true,
            use_mmd: true,
            seed: 0,
        }
    }
}

impl SueConfig {
    /// Checks that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 2 {
            return Err(Error::config("k_neighbors must be >= 2"));
        }
        if self.use_se && self.se_dim == 0 {
            return Err(Error::config("se_dim must be >= 1"));
        }
        if self.use_cca {
            if self.cca_dim == 0 {
                return Err(Error::config("cca_dim must be >= 1"));
            }
            if self.use_se && self.cca_dim > self.se_dim {
                return Err(Error::config(format!(
                    "cca_dim r = {} exceeds se_dim k = {}",
                    self.cca_dim, self.se_dim
                )));
            }
        }
        if let Some(e) = self.ridge {
            if !(e >= 0.0) {
                return Err(Error::config("ridge must be >= 0"));
            }
        }
        if self.use_mmd {
            self.mmd.validate()?;
            if self.bandwidth_multipliers.is_empty() || self.bandwidth_multipliers.iter().any(|b| !(*b > 0.0)) {
                return Err(Error::config("bandwidth multipliers must be positive"));
            }
        }
        if self.spectral_path == SpectralPath::Parametric {
            self.parametric.train.validate()?;
        }
        Ok(())
    }

    /// Short label of the enabled stages, e.g. `se+cca+mmd`.
    pub fn variant(&self) -> String {
        let mut parts = vec![if self.use_se { "se" } else { "raw" }];
        if self.use_cca {
            parts.push("cca");
        }
        if self.use_mmd {
            parts.push("mmd");
        }
        parts.join("+")
    }
}

/// Anything mapping both modalities into one comparison space.
pub trait SharedSpace {
    fn map_x_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
    fn map_y_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentModel {
    pub config: SueConfig,
    pub embed_x: Embedder,
    pub embed_y: Embedder,
    pub cca: Option<CcaProjection>,
    pub residual: Option<Mlp>,
    pub mmd_history: Option<LossHistory>,
}

impl AlignmentModel {
    pub fn output_dim(&self) -> usize {
        match &self.cca {
            Some(c) => c.r(),
            None => self.embed_x.output_dim(),
        }
    }

    pub fn map_x(&self, points: &EmbeddingSet) -> Result<Array2<f64>> {
        self.map_x_points(points.to_f64().view())
    }

    pub fn map_y(&self, points: &EmbeddingSet) -> Result<Array2<f64>> {
        self.map_y_points(points.to_f64().view())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, checkpoint::Kind::Alignment, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, checkpoint::Kind::Alignment)
    }
}

impl SharedSpace for AlignmentModel {
    fn map_x_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let e = self.embed_x.embed(points)?;
        match &self.cca {
            Some(c) => c.project(Side::X, e.view()),
            None => Ok(e),
        }
    }

    fn map_y_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let e = self.embed_y.embed(points)?;
        let z = match &self.cca {
            Some(c) => c.project(Side::Y, e.view())?,
            None => e,
        };
        match &self.residual {
            Some(f) if z.nrows() > 0 => f.forward(z.view()),
            _ => Ok(z),
        }
    }
}

/// Fitted per-modality embedders plus their training-set embeddings, so
/// downstream stages can be refitted without repeating the spectral step.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub embed_x: Embedder,
    pub embed_y: Embedder,
    pub train_x: Array2<f64>,
    pub train_y: Array2<f64>,
}

fn embed_one(set: &EmbeddingSet, config: &SueConfig, stream: u64) -> Result<(Embedder, Array2<f64>)> {
    if !config.use_se {
        return Ok((Embedder::Identity { dim: set.d() }, set.to_f64()));
    }
    let graph = build_affinity(set, clamp_k(config.k_neighbors, set.n()), config.metric).stage("graph")?;
    match config.spectral_path {
        SpectralPath::Numeric => {
            let opts = SpectralOptions { solver: config.solver, ..SpectralOptions::default() };
            let m = fit_spectral(set, &graph, config.se_dim, &opts).stage("spectral")?;
            let train = embed_train(&m);
            Ok((Embedder::Numeric(m), train))
        }
        SpectralPath::Parametric => {
            let mut pc = config.parametric.clone();
            pc.train.seed = derive_seed(config.seed, stream);
            let p = fit_spectral_parametric(set, &graph, config.se_dim, &pc).stage("spectral")?;
            let train = p.embed(set.to_f64().view()).stage("spectral")?;
            Ok((Embedder::Parametric(p), train))
        }
    }
}

/// Spectral stage for both modalities (run concurrently).
pub fn fit_embedders(x: &EmbeddingSet, y: &EmbeddingSet, config: &SueConfig) -> Result<Embedded> {
    config.validate()?;
    let (ex, ey) = rayon::join(|| embed_one(x, config, 1), || embed_one(y, config, 2));
    let (embed_x, train_x) = ex?;
    let (embed_y, train_y) = ey?;
    Ok(Embedded { embed_x, embed_y, train_x, train_y })
}

/// CCA and MMD stages on top of fitted embedders. Pairs are used by CCA only.
pub fn fit_alignment(embedded: &Embedded, pairs: &PairManifest, config: &SueConfig) -> Result<AlignmentModel> {
    config.validate()?;
    let Embedded { embed_x, embed_y, train_x, train_y } = embedded;
    let (zx, zy, cca) = if config.use_cca {
        if pairs.m() < config.cca_dim.max(2) {
            return Err(Error::config(format!(
                "{} pairs available, CCA with r = {} needs at least {}",
                pairs.m(),
                config.cca_dim,
                config.cca_dim.max(2)
            )))
            .stage("cca");
        }
        if let Some(&(i, j)) = pairs.pairs().iter().find(|&&(i, j)| i >= train_x.nrows() || j >= train_y.nrows()) {
            return Err(Error::config(format!("pair ({i}, {j}) out of range"))).stage("cca");
        }
        let px = train_x.select(Axis(0), &pairs.x_indices());
        let py = train_y.select(Axis(0), &pairs.y_indices());
        let c = fit_cca(px.view(), py.view(), config.cca_dim, config.ridge).stage("cca")?;
        let zx = c.project(Side::X, train_x.view()).stage("cca")?;
        let zy = c.project(Side::Y, train_y.view()).stage("cca")?;
        (zx, zy, Some(c))
    } else {
        if train_x.ncols() != train_y.ncols() {
            return Err(Error::config(format!(
                "without CCA both embeddings need the same width, got {} and {}",
                train_x.ncols(),
                train_y.ncols()
            )))
            .stage("cca");
        }
        (train_x.clone(), train_y.clone(), None)
    };
    let (residual, mmd_history) = if config.use_mmd {
        let (net, hist) = fit_residual(zx.view(), zy.view(), config).stage("mmd")?;
        (Some(net), Some(hist))
    } else {
        (None, None)
    };
    Ok(AlignmentModel {
        config: config.clone(),
        embed_x: embed_x.clone(),
        embed_y: embed_y.clone(),
        cca,
        residual,
        mmd_history,
    })
}

/// Residual aligner moving the aligned Y side onto the aligned X side.
pub fn fit_residual(zx: ArrayView2<'_, f64>, zy: ArrayView2<'_, f64>, config: &SueConfig) -> Result<(Mlp, LossHistory)> {
    let seed = derive_seed(config.seed, 3);
    let net = Mlp::residual_identity(zy.ncols(), &config.mmd_hidden, Activation::Relu, seed)?;
    let train = TrainConfig { seed, ..config.mmd.clone() };
    let kernel = MmdKernel::MedianMixture(config.bandwidth_multipliers.clone());
    train_mmd_residual(&net, zy, zx, &train, &kernel)
}

/// Runs the whole pipeline: SE on all data, CCA on the pairs, MMD on all
/// aligned data.
pub fn fit_sue(x: &EmbeddingSet, y: &EmbeddingSet, pairs: &PairManifest, config: &SueConfig) -> Result<AlignmentModel> {
    config.validate()?;
    if config.use_cca && pairs.is_empty() {
        return Err(Error::config("the pair manifest is empty")).stage("cca");
    }
    let embedded = fit_embedders(x, y, config)?;
    fit_alignment(&embedded, pairs, config)
}

pub fn map_x(model: &AlignmentModel, points: &EmbeddingSet) -> Result<Array2<f64>> {
    model.map_x(points)
}

pub fn map_y(model: &AlignmentModel, points: &EmbeddingSet) -> Result<Array2<f64>> {
    model.map_y(points)
}
