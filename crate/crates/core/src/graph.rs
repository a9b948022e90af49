//! kNN affinity graph with the adaptive (ρ, σ)-shifted RBF kernel, plus the
//! random-walk matrix `P = D⁻¹W` and Laplacian `L = I − P` derived from it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::EmbeddingSet;

/// Lower bound applied to σᵢ so duplicated points do not divide by zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Default neighborhood size.
pub const DEFAULT_K_NEIGHBORS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(Error::config(format!("unknown metric {s:?}"))),
        }
    }
}

/// `1 − a·b / (‖a‖‖b‖)`, in `[0, 2]`.
pub fn cosine_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine distance of a zero-norm vector".into()));
    }
    Ok((1.0 - a.dot(&b) / (na * nb)).clamp(0.0, 2.0))
}

/// Points prepared for repeated distance evaluation under one metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointCloud {
    metric: Metric,
    data: Array2<f64>,
    norms: Array1<f64>,
}

impl PointCloud {
    pub fn new(data: Array2<f64>, metric: Metric) -> Result<Self> {
        let norms: Array1<f64> = data.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        if metric == Metric::Cosine {
            if let Some(i) = norms.iter().position(|&v| v == 0.0) {
                return Err(Error::Domain(format!(
                    "point {i} has zero norm; cosine distance is undefined"
                )));
            }
        }
        Ok(PointCloud { metric, data, norms })
    }

    pub fn from_set(set: &EmbeddingSet, metric: Metric) -> Result<Self> {
        Self::new(set.to_f64(), metric)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Distance between stored points `i` and `j`.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist_to(i, self.data.row(j), self.norms[j])
    }

    /// Distance from stored point `i` to an external point with norm `q_norm`.
    pub fn dist_to(&self, i: usize, q: ArrayView1<'_, f64>, q_norm: f64) -> f64 {
        let x = self.data.row(i);
        match self.metric {
            Metric::Cosine => (1.0 - x.dot(&q) / (self.norms[i] * q_norm)).clamp(0.0, 2.0),
            Metric::Euclidean => x
                .iter()
                .zip(q.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Distances from an external point to every stored point.
    pub fn distances_from(&self, q: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        if q.len() != self.dim() {
            return Err(Error::dim(format!(
                "query has dimension {}, points have {}",
                q.len(),
                self.dim()
            )));
        }
        let q_norm = q.dot(&q).sqrt();
        if self.metric == Metric::Cosine && q_norm == 0.0 {
            return Err(Error::Domain("zero-norm query under cosine metric".into()));
        }
        Ok((0..self.n()).map(|i| self.dist_to(i, q, q_norm)).collect())
    }
}

/// The `k` smallest entries of `dists` as `(index, distance)`, ascending,
/// ties broken by lower index. Entries for which `skip` returns true are ignored.
pub(crate) fn k_smallest(dists: &[f64], k: usize, skip: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> = dists
        .iter()
        .enumerate()
        .filter(|(j, _)| !skip(*j))
        .map(|(j, &d)| (j, d))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if cand.len() > k {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand
}

/// Kernel statistics of a point from its ascending neighbor distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelScale {
    pub rho: f64,
    pub sigma: f64,
    /// Distance to the k-th neighbor.
    pub radius: f64,
}

impl KernelScale {
    pub fn from_sorted(dists: &[f64]) -> Self {
        let k = dists.len();
        let median = if k % 2 == 1 {
            dists[k / 2]
        } else {
            0.5 * (dists[k / 2 - 1] + dists[k / 2])
        };
        KernelScale {
            rho: dists[0],
            sigma: median.max(SIGMA_FLOOR),
            radius: dists[k - 1],
        }
    }

    /// `exp(−(d − ρ)² / σ²)`.
    pub fn weight(&self, d: f64) -> f64 {
        let z = (d - self.rho) / self.sigma;
        (-z * z).exp()
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists; columns must be sorted and unique.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for &(j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(a: ArrayView2<'_, f64>) -> Self {
        let rows = a
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self::from_rows(a.ncols(), rows)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn matvec(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter((0..self.n_rows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()))
    }

    /// `self · X` for a dense `X`.
    pub fn matmul(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, x.ncols()));
        for i in 0..self.n_rows {
            let mut o = out.row_mut(i);
            for (j, v) in self.row(i) {
                o.scaled_add(v, &x.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                a[[i, j]] = v;
            }
        }
        a
    }

    /// Largest `|A − Aᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Row-scales by `s[i]` and column-scales by `t[j]`.
    pub fn scale(&self, s: &[f64], t: &[f64]) -> SparseMatrix {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.values[p] *= s[i] * t[self.indices[p]];
            }
        }
        out
    }
}

/// Symmetric kNN affinity graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinityGraph {
    pub k_neighbors: usize,
    pub metric: Metric,
    /// Directed kNN lists `(neighbor, distance)`, ascending.
    neighbors: Vec<Vec<(usize, f64)>>,
    scales: Vec<KernelScale>,
    weights: SparseMatrix,
    degrees: Array1<f64>,
}

impl AffinityGraph {
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn weights(&self) -> &SparseMatrix {
        &self.weights
    }

    pub fn degrees(&self) -> &Array1<f64> {
        &self.degrees
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn scales(&self) -> &[KernelScale] {
        &self.scales
    }

    pub fn rho(&self) -> Array1<f64> {
        self.scales.iter().map(|s| s.rho).collect()
    }

    pub fn sigma(&self) -> Array1<f64> {
        self.scales.iter().map(|s| s.sigma).collect()
    }

    fn check_degrees(&self) -> Result<()> {
        match self.degrees.iter().position(|&d| !(d > 0.0)) {
            Some(node) => Err(Error::DegenerateGraph { node }),
            None => Ok(()),
        }
    }

    /// Builds a graph directly from a symmetric weight matrix (no kernel).
    /// Used for analytic test graphs such as cycles and complete graphs.
    pub fn from_weights(weights: SparseMatrix) -> Result<Self> {
        let (n, m) = weights.shape();
        if n != m {
            return Err(Error::dim(format!("weight matrix is {n}x{m}")));
        }
        if weights.asymmetry() > 1e-12 {
            return Err(Error::Domain("weight matrix is not symmetric".into()));
        }
        let degrees: Array1<f64> = (0..n).map(|i| weights.row_sum(i)).collect();
        let g = AffinityGraph {
            k_neighbors: 0,
            metric: Metric::Euclidean,
            neighbors: vec![Vec::new(); n],
            scales: Vec::new(),
            weights,
            degrees,
        };
        g.check_degrees()?;
        Ok(g)
    }
}

/// Affinity graph over a point cloud with `k` neighbors per point (self excluded).
pub fn build_affinity_cloud(cloud: &PointCloud, k: usize) -> Result<AffinityGraph> {
    let n = cloud.n();
    if k < 1 || k >= n {
        return Err(Error::config(format!(
            "k_neighbors = {k} must satisfy 1 <= k < n = {n}"
        )));
    }
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dists: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { cloud.dist(i, j) }).collect();
            k_smallest(&dists, k, |j| j == i)
        })
        .collect();
    let scales: Vec<KernelScale> = neighbors
        .iter()
        .map(|nb| KernelScale::from_sorted(&nb.iter().map(|p| p.1).collect::<Vec<_>>()))
        .collect();

    // W = (K + Kᵀ) / 2 where K holds the directed kernel rows.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, nb) in neighbors.iter().enumerate() {
        for &(j, d) in nb {
            let w = 0.5 * scales[i].weight(d);
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
    }
    for row in rows.iter_mut() {
        row.sort_by_key(|p| p.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for &(j, w) in row.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += w,
                _ => merged.push((j, w)),
            }
        }
        *row = merged;
    }
    let weights = SparseMatrix::from_rows(n, rows);
    let degrees: Array1<f64> = (0..n).map(|i| weights.row_sum(i)).collect();
    let g = AffinityGraph {
        k_neighbors: k,
        metric: cloud.metric(),
        neighbors,
        scales,
        weights,
        degrees,
    };
    g.check_degrees()?;
    Ok(g)
}

pub fn build_affinity(set: &EmbeddingSet, k: usize, metric: Metric) -> Result<AffinityGraph> {
    build_affinity_cloud(&PointCloud::from_set(set, metric)?, k)
}

/// `P = D⁻¹W`, row-stochastic with the sparsity pattern of `W`.
pub fn random_walk(graph: &AffinityGraph) -> Result<SparseMatrix> {
    graph.check_degrees()?;
    let inv: Vec<f64> = graph.degrees.iter().map(|d| 1.0 / d).collect();
    let ones = vec![1.0; graph.n()];
    Ok(graph.weights.scale(&inv, &ones))
}

/// `L = I − P`.
pub fn laplacian(graph: &AffinityGraph) -> Result<SparseMatrix> {
    let p = random_walk(graph)?;
    let n = graph.n();
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = p.row(i).map(|(j, v)| (j, -v)).collect();
            match row.binary_search_by_key(&i, |e| e.0) {
                Ok(pos) => row[pos].1 += 1.0,
                Err(pos) => row.insert(pos, (i, 1.0)),
            }
            row
        })
        .collect();
    Ok(SparseMatrix::from_rows(n, rows))
}

/// Effective neighborhood size: the requested `k` clamped to `n − 1`.
pub fn clamp_k(k: usize, n: usize) -> usize {
    k.min(n.saturating_sub(1)).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, d: usize, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0f32..1.0));
        EmbeddingSet::new("r", data).unwrap()
    }

    #[test]
    fn cosine_distance_cases() {
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(cosine_distance(e1.view(), e1.view()).unwrap(), 0.0);
        assert!((cosine_distance(e1.view(), e2.view()).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(e1.view(), (-&e1).view()).unwrap() - 2.0).abs() < 1e-15);
        assert!(cosine_distance(e1.view(), array![0.0, 0.0].view()).is_err());
    }

    /// Kernel evaluated straight from the formula over all pairs.
    fn brute_force_w(points: &[[f64; 2]], k: usize) -> Array2<f64> {
        let n = points.len();
        let d = |a: &[f64; 2], b: &[f64; 2]| {
            1.0 - (a[0] * b[0] + a[1] * b[1])
                / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt())
        };
        let mut k_mat = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let mut others: Vec<(usize, f64)> =
                (0..n).filter(|&j| j != i).map(|j| (j, d(&points[i], &points[j]))).collect();
            others.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            let nb = &others[..k];
            let rho = nb.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let mut ds: Vec<f64> = nb.iter().map(|p| p.1).collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let sigma = if k % 2 == 1 { ds[k / 2] } else { (ds[k / 2 - 1] + ds[k / 2]) / 2.0 };
            for &(j, dij) in nb {
                k_mat[[i, j]] = (-((dij - rho) / sigma).powi(2)).exp();
            }
        }
        (&k_mat + &k_mat.t()) / 2.0
    }

    #[test]
    fn circle_graph_matches_brute_force() {
        let pts = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let set = EmbeddingSet::new(
            "c",
            Array2::from_shape_fn((4, 2), |(i, j)| pts[i][j] as f32),
        )
        .unwrap();
        let g = build_affinity(&set, 2, Metric::Cosine).unwrap();
        let oracle = brute_force_w(&pts, 2);
        let w = g.weights().to_dense();
        assert!((&w - &oracle).iter().all(|v| v.abs() <= 1e-12), "{w}\n{oracle}");
        // Opposite points are never neighbors.
        assert_eq!(w[[0, 2]], 0.0);
        // P against dense division.
        let p = random_walk(&g).unwrap().to_dense();
        for i in 0..4 {
            let deg: f64 = oracle.row(i).sum();
            for j in 0..4 {
                assert!((p[[i, j]] - oracle[[i, j]] / deg).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn nearest_neighbor_has_unit_directed_weight() {
        let set = random_set(30, 3, 1);
        let g = build_affinity(&set, 5, Metric::Euclidean).unwrap();
        for i in 0..30 {
            let (_, d0) = g.neighbors(i)[0];
            assert_eq!(g.scales()[i].weight(d0), 1.0);
        }
    }

    #[test]
    fn uniform_three_node_walk_and_laplacian() {
        let w = SparseMatrix::from_dense(array![[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]].view());
        let g = AffinityGraph::from_weights(w).unwrap();
        let p = random_walk(&g).unwrap().to_dense();
        let l = laplacian(&g).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert_eq!(p[[i, j]], 0.0);
                    assert_eq!(l[[i, j]], 1.0);
                } else {
                    assert_eq!(p[[i, j]], 0.5);
                    assert_eq!(l[[i, j]], -0.5);
                }
            }
        }
    }

    #[test]
    fn zero_degree_is_reported() {
        let w = SparseMatrix::from_dense(array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]].view());
        match AffinityGraph::from_weights(w) {
            Err(Error::DegenerateGraph { node }) => assert_eq!(node, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn k_too_large_is_config_error() {
        let set = random_set(5, 2, 0);
        assert!(matches!(build_affinity(&set, 5, Metric::Cosine), Err(Error::Config(_))));
    }

    #[test]
    fn duplicates_get_unit_affinity() {
        let data = array![[1.0f32, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        let set = EmbeddingSet::new("d", data).unwrap();
        let g = build_affinity(&set, 2, Metric::Euclidean).unwrap();
        assert_eq!(g.scales()[0].sigma, SIGMA_FLOOR);
        assert_eq!(g.weights().get(0, 1), 1.0);
    }

    #[test]
    fn deterministic_rebuild() {
        let set = random_set(80, 4, 5);
        let a = build_affinity(&set, 7, Metric::Cosine).unwrap();
        let b = build_affinity(&set, 7, Metric::Cosine).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn cosine_graph_is_scale_invariant() {
        let x = random_set(120, 5, 9).to_f64();
        let a = PointCloud::new(x.clone(), Metric::Cosine).unwrap();
        let b = PointCloud::new(x * 37.3, Metric::Cosine).unwrap();
        let a = build_affinity_cloud(&a, 10).unwrap().weights().to_dense();
        let b = build_affinity_cloud(&b, 10).unwrap().weights().to_dense();
        assert!((a - b).iter().all(|v| v.abs() <= 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn graph_invariants(n in 6usize..120, k in 2usize..12, seed in any::<u64>(), cos in any::<bool>()) {
            let k = k.min(n - 1);
            let set = random_set(n, 3, seed);
            let metric = if cos { Metric::Cosine } else { Metric::Euclidean };
            let g = build_affinity(&set, k, metric).unwrap();
            let w = g.weights();
            prop_assert!(w.asymmetry() <= 1e-12);
            for i in 0..n {
                prop_assert_eq!(w.get(i, i), 0.0);
                // Out-neighbors plus whoever picked i.
                let incoming = (0..n).filter(|&l| g.neighbors(l).iter().any(|p| p.0 == i)).count();
                prop_assert!(w.row_nnz(i) <= k + incoming);
                prop_assert!(g.degrees()[i] > 0.0);
                for (_, v) in w.row(i) {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            prop_assert!(w.nnz() <= 2 * n * k);
            let p = random_walk(&g).unwrap();
            let l = laplacian(&g).unwrap();
            let ones = Array1::<f64>::ones(n);
            let l1 = l.matvec(ones.view());
            for i in 0..n {
                prop_assert!((p.row_sum(i) - 1.0).abs() <= 1e-9);
                prop_assert!(l1[i].abs() <= 1e-9);
                prop_assert_eq!(p.row_nnz(i), w.row_nnz(i));
            }
        }
    }
}
