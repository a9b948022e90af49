//! Shared test helpers: random data and independent dense oracles. The
//! oracles in this file never call the graph, spectral or training code under
//! test; `audit` and `fixtures` do.
#![allow(dead_code)]

pub mod audit;
pub mod fixtures;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sue::io::EmbeddingSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal matrix whose entries are exactly representable in f32, so
/// an `EmbeddingSet` built from it holds the same values.
pub fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((n, d), |_| r.sample::<f64, _>(StandardNormal) as f32 as f64)
}

pub fn set(data: &Array2<f64>) -> EmbeddingSet {
    EmbeddingSet::from_f64("t", data).unwrap()
}

/// Cosine distance `1 − cos(a, b)`.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dense affinity straight from the kernel definition: for each point its k
/// nearest others, `ρ` = nearest distance, `σ` = median of the k distances,
/// `K_ij = exp(−((d − ρ)/σ)²)`, then `W = (K + Kᵀ)/2`.
pub fn dense_affinity(x: &Array2<f64>, k: usize, use_cosine: bool) -> Array2<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut kmat = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let v = if use_cosine { cosine(&rows[i], &rows[j]) } else { euclidean(&rows[i], &rows[j]) };
                (v.max(0.0), j)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nn = &d[..k];
        let rho = nn[0].0;
        let sigma = if k % 2 == 1 { nn[k / 2].0 } else { 0.5 * (nn[k / 2 - 1].0 + nn[k / 2].0) };
        let sigma = sigma.max(1e-12);
        for &(dist, j) in nn {
            let z = (dist - rho) / sigma;
            kmat[[i, j]] = (-z * z).exp();
        }
    }
    (&kmat + &kmat.t()) / 2.0
}

pub fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenvalues (descending) and matching eigenvectors of a symmetric matrix.
pub fn dense_sym_eig(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let e = SymmetricEigen::new(to_na(a));
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]));
    let vals = Array1::from_iter(order.iter().map(|&i| e.eigenvalues[i]));
    let vecs = Array2::from_shape_fn((a.nrows(), a.nrows()), |(r, c)| e.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Largest principal angle (radians) between the column spaces of `a`, `b`.
/// With fewer columns in `a` it measures how far `span(a)` is from lying
/// inside `span(b)`.
pub fn max_principal_angle(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let qa = to_na(a).qr().q();
    let qb = to_na(b).qr().q();
    let s = (qa.transpose() * qb).singular_values();
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min).clamp(-1.0, 1.0);
    smin.acos()
}

/// Central finite-difference gradient of `f` at `p`.
pub fn fd_grad(p: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|i| {
            q[i] = p[i] + eps;
            let up = f(&q);
            q[i] = p[i] - eps;
            let down = f(&q);
            q[i] = p[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Uniformly random orthogonal matrix (QR of a Gaussian, sign-fixed).
pub fn random_orthogonal(k: usize, seed: u64) -> Array2<f64> {
    let g = to_na(gaussian(k, k, seed).view());
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = from_na(&q);
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    q
}

/// Brute-force recall: fraction of queries whose partner (same row) is among
/// the k gallery rows of highest cosine similarity, ties to the lower index.
pub fn naive_recall(q: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>, k: usize) -> f64 {
    let t = q.nrows();
    let mut hits = 0;
    for i in 0..t {
        let qi = q.row(i).to_vec();
        let mut s: Vec<(f64, usize)> = (0..t).map(|j| (cosine(&qi, &g.row(j).to_vec()), j)).collect();
        s.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if s[..k].iter().any(|&(_, j)| j == i) {
            hits += 1;
        }
    }
    100.0 * hits as f64 / t as f64
}


/// Non-trivial eigenpairs of `P` from a dense solve of `D^{-1/2} W D^{-1/2}`.
pub fn oracle_walk_pairs(w: &Array2<f64>, k: usize) -> (Array1<f64>, Array2<f64>) {
    let d: Array1<f64> = w.sum_axis(Axis(1));
    let is = d.mapv(|v| 1.0 / v.sqrt());
    let sym = Array2::from_shape_fn(w.dim(), |(i, j)| is[i] * w[[i, j]] * is[j]);
    let (vals, vecs) = dense_sym_eig(sym.view());
    let v = Array2::from_shape_fn((w.nrows(), k), |(i, c)| vecs[[i, c + 1]] * is[i]);
    (vals.slice(s![1..k + 1]).to_owned(), v)
}

/// `D^{1/2} M D^{-1/2}`.
pub fn similar_symmetric(m: &Array2<f64>, deg: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn(m.dim(), |(i, j)| deg[i].sqrt() * m[[i, j]] / deg[j].sqrt())
}

