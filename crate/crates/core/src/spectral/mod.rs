//! Spectral embedding: the leading non-trivial eigenvectors of the random
//! walk matrix `P = D⁻¹W`, and their Nyström extension to unseen points.
//!
//! Eigenpairs are computed on the symmetric conjugate `S = D^{-1/2} W D^{-1/2}`
//! (same spectrum as `P`) and mapped back with `v = D^{-1/2} u`. The trivial
//! pair (`λ = 1`, `u ∝ D^{1/2}1`) is deflated to the bottom of the spectrum
//! before the solve so it is never returned.

pub mod eigen;
pub mod parametric;

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::graph::{k_smallest, AffinityGraph, KernelScale, Metric, PointCloud, SparseMatrix};
use crate::io::EmbeddingSet;

pub use eigen::{EigenSolver, LanczosOptions, SymOperator};
pub use parametric::{fit_spectral_parametric, ParametricSpectral};

/// Default embedding dimension.
pub const DEFAULT_SE_DIM: usize = 10;

/// A query is treated as a re-observation of its nearest training point `a`
/// when it lies within this fraction of `a`'s kernel width σ (or coincides
/// with it exactly). It then takes `a`'s place in the graph, so `a` itself is
/// not one of its neighbors. σ rather than ρ, because ρ collapses when `a`
/// has a near-duplicate.
pub const ANCHOR_FRACTION: f64 = 1e-3;

/// `D^{-1/2} W D^{-1/2} − 2 u₁u₁ᵀ` with `u₁ = D^{1/2}1 / ‖D^{1/2}1‖`.
pub struct DeflatedWalk {
    sym: SparseMatrix,
    trivial: Array1<f64>,
}

impl DeflatedWalk {
    pub fn new(graph: &AffinityGraph) -> Self {
        let inv_sqrt: Vec<f64> = graph.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
        let sym = graph.weights().scale(&inv_sqrt, &inv_sqrt);
        let mut trivial: Array1<f64> = graph.degrees().mapv(f64::sqrt);
        let norm = trivial.dot(&trivial).sqrt();
        trivial /= norm;
        DeflatedWalk { sym, trivial }
    }
}

impl SymOperator for DeflatedWalk {
    fn dim(&self) -> usize {
        self.trivial.len()
    }

    fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut y = self.sym.matvec(x);
        let c = self.trivial.dot(&x);
        y.scaled_add(-2.0 * c, &self.trivial);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub solver: EigenSolver,
    pub lanczos: LanczosOptions,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            solver: EigenSolver::Auto,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// Numeric spectral embedding of one modality plus what extension needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralModel {
    pub eigenvalues: Array1<f64>,
    /// `n × k`, unit-norm columns `v₂ … v_{k+1}` of `P`.
    pub eigenvectors: Array2<f64>,
    pub k_neighbors: usize,
    pub metric: Metric,
    pub train_hash: Option<String>,
    cloud: PointCloud,
    neighbors: Vec<Vec<(usize, f64)>>,
    in_neighbors: Vec<Vec<usize>>,
    scales: Vec<KernelScale>,
    weights: SparseMatrix,
}

impl SpectralModel {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_train(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.cloud.dim()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, checkpoint::Kind::Spectral, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, checkpoint::Kind::Spectral)
    }
}

/// Flip each column so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_signs(v: &mut Array2<f64>) {
    for mut col in v.columns_mut() {
        let mut best = 0usize;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Eigenpairs of `P` for an arbitrary valid graph; returns `(λ, V)` with
/// unit-norm columns, trivial pair excluded.
pub fn walk_eigenpairs(
    graph: &AffinityGraph,
    k: usize,
    opts: &SpectralOptions,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = graph.n();
    if k == 0 || k + 1 >= n {
        return Err(Error::config(format!(
            "spectral dimension k = {k} must satisfy 1 <= k < n - 1 = {}",
            n.saturating_sub(1)
        )));
    }
    let op = DeflatedWalk::new(graph);
    let (vals, u) = eigen::top_eigenpairs(&op, k, opts.solver, &opts.lanczos)?;
    let mut v = u;
    for (i, mut row) in v.rows_mut().into_iter().enumerate() {
        let s = 1.0 / graph.degrees()[i].sqrt();
        row.mapv_inplace(|x| x * s);
    }
    for mut col in v.columns_mut() {
        let nrm = col.dot(&col).sqrt();
        col.mapv_inplace(|x| x / nrm);
    }
    fix_signs(&mut v);
    Ok((vals, v))
}

/// Fits the numeric spectral embedding on `cloud` using its prebuilt `graph`.
pub fn fit_spectral_cloud(
    cloud: PointCloud,
    graph: &AffinityGraph,
    k: usize,
    opts: &SpectralOptions,
) -> Result<SpectralModel> {
    if cloud.n() != graph.n() {
        return Err(Error::dim(format!(
            "graph has {} nodes but cloud has {} points",
            graph.n(),
            cloud.n()
        )));
    }
    let (eigenvalues, eigenvectors) = walk_eigenpairs(graph, k, opts)?;
    let n = graph.n();
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n).map(|i| graph.neighbors(i).to_vec()).collect();
    let mut in_neighbors = vec![Vec::new(); n];
    for (l, nb) in neighbors.iter().enumerate() {
        for &(j, _) in nb {
            in_neighbors[j].push(l);
        }
    }
    Ok(SpectralModel {
        eigenvalues,
        eigenvectors,
        k_neighbors: graph.k_neighbors,
        metric: graph.metric,
        train_hash: None,
        cloud,
        neighbors,
        in_neighbors,
        scales: graph.scales().to_vec(),
        weights: graph.weights().clone(),
    })
}

/// Spectral embedding of `set` over its affinity graph.
pub fn fit_spectral(
    set: &EmbeddingSet,
    graph: &AffinityGraph,
    k: usize,
    opts: &SpectralOptions,
) -> Result<SpectralModel> {
    let cloud = PointCloud::from_set(set, graph.metric)?;
    let mut model = fit_spectral_cloud(cloud, graph, k, opts)?;
    model.train_hash = Some(set.content_hash());
    Ok(model)
}

/// Training embedding, row `i` is `(v₂(i), …, v_{k+1}(i))`.
pub fn embed_train(model: &SpectralModel) -> Array2<f64> {
    model.eigenvectors.clone()
}

impl SpectralModel {
    /// Symmetrized affinity row of an external point against the training set.
    fn affinity_row(&self, q: ArrayView1<'_, f64>) -> Result<Vec<(usize, f64)>> {
        let dists = self.cloud.distances_from(q)?;
        let nearest = k_smallest(&dists, 1, |_| false)[0];
        let exact = nearest.1 == 0.0 && self.cloud.data().row(nearest.0) == q;
        let anchor = if exact || nearest.1 <= ANCHOR_FRACTION * self.scales[nearest.0].sigma {
            Some(nearest.0)
        } else {
            None
        };
        if exact {
            // Bit-identical to a training point: its own graph row.
            return Ok(self.weights.row(nearest.0).collect());
        }
        let k = self.k_neighbors.min(self.n_train() - usize::from(anchor.is_some()));
        let own = k_smallest(&dists, k, |j| Some(j) == anchor);
        let scale = KernelScale::from_sorted(&own.iter().map(|p| p.1).collect::<Vec<_>>());
        let mut row: Vec<(usize, f64)> = own.iter().map(|&(j, d)| (j, 0.5 * scale.weight(d))).collect();
        // Training points that would count the query among their neighbors.
        let incoming: Vec<usize> = match anchor {
            Some(a) => self.in_neighbors[a].clone(),
            None => (0..self.n_train())
                .filter(|&l| dists[l] <= self.scales[l].radius)
                .collect(),
        };
        for l in incoming {
            row.push((l, 0.5 * self.scales[l].weight(dists[l])));
        }
        row.sort_by_key(|p| p.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (j, w) in row {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += w,
                _ => merged.push((j, w)),
            }
        }
        Ok(merged)
    }

    /// Nyström extension `v_j(y) = (1/λ_j) Σᵢ p(y, xᵢ) v_j(xᵢ)`.
    pub fn extend_points(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.input_dim() && points.nrows() > 0 {
            return Err(Error::dim(format!(
                "points have dimension {}, model was trained on {}",
                points.ncols(),
                self.input_dim()
            )));
        }
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            if lam.abs() < 1e-8 {
                return Err(Error::IllConditioned { component: j, value: lam });
            }
        }
        let k = self.k();
        let rows: Vec<Result<Array1<f64>>> = (0..points.nrows())
            .into_par_iter()
            .map(|t| {
                let row = self.affinity_row(points.row(t))?;
                let total: f64 = row.iter().map(|p| p.1).sum();
                let mut out = Array1::<f64>::zeros(k);
                for &(i, w) in &row {
                    out.scaled_add(w / total, &self.eigenvectors.row(i));
                }
                Ok(out / &self.eigenvalues)
            })
            .collect();
        let mut out = Array2::zeros((points.nrows(), k));
        for (t, r) in rows.into_iter().enumerate() {
            out.row_mut(t).assign(&r?);
        }
        Ok(out)
    }
}

pub fn extend(model: &SpectralModel, new_points: &EmbeddingSet) -> Result<Array2<f64>> {
    model.extend_points(new_points.to_f64().view())
}

/// Either spectral route, or the identity (raw features) for ablations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Embedder {
    Identity { dim: usize },
    Numeric(SpectralModel),
    Parametric(ParametricSpectral),
}

impl Embedder {
    pub fn output_dim(&self) -> usize {
        match self {
            Embedder::Identity { dim } => *dim,
            Embedder::Numeric(m) => m.k(),
            Embedder::Parametric(p) => p.k(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Embedder::Identity { dim } => *dim,
            Embedder::Numeric(m) => m.input_dim(),
            Embedder::Parametric(p) => p.input_dim(),
        }
    }

    pub fn embed(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Embedder::Identity { dim } => {
                if points.ncols() != *dim {
                    return Err(Error::dim(format!(
                        "points have dimension {}, expected {dim}",
                        points.ncols()
                    )));
                }
                Ok(points.to_owned())
            }
            Embedder::Numeric(m) => m.extend_points(points),
            Embedder::Parametric(p) => p.embed(points),
        }
    }
}
