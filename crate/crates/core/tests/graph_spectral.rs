mod common;

use common::fixtures::{complete, cycle};
use common::{dense_affinity, dense_sym_eig, gaussian, max_principal_angle, oracle_walk_pairs, set, similar_symmetric};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use sue::graph::{build_affinity, laplacian, random_walk, AffinityGraph, Metric};
use sue::spectral::{embed_train, fit_spectral, walk_eigenpairs, EigenSolver, SpectralOptions};

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn graph_matches_kernel_oracle(n in 8usize..60, d in 2usize..5, kk in 2usize..8, seed in 0u64..1000, cos in any::<bool>()) {
        let k = kk.min(n - 1);
        let x = gaussian(n, d, seed);
        let metric = if cos { Metric::Cosine } else { Metric::Euclidean };
        let g = build_affinity(&set(&x), k, metric).unwrap();
        let w = g.weights().to_dense();
        let oracle = dense_affinity(&x, k, cos);
        prop_assert!(max_abs(&(&w - &oracle)) <= 1e-12);
        prop_assert!(max_abs(&(&w - &w.t())) <= 1e-12);

        let p = random_walk(&g).unwrap().to_dense();
        for r in p.rows() {
            prop_assert!((r.sum() - 1.0).abs() <= 1e-9);
        }
        let l = laplacian(&g).unwrap().to_dense();
        let l1 = l.dot(&Array1::<f64>::ones(n));
        prop_assert!(l1.iter().all(|v| v.abs() <= 1e-9));

        // Spectra: eig(L) = 1 − eig(P), both against the dense oracle W. Both
        // are similar to symmetric matrices under D^{1/2} · D^{-1/2}.
        let dg = oracle.sum_axis(Axis(1));
        let p_oracle = Array2::from_shape_fn((n, n), |(i, j)| oracle[[i, j]] / dg[i]);
        let l_sym = similar_symmetric(&l, &dg);
        prop_assert!(max_abs(&(&l_sym - &l_sym.t())) <= 1e-9);
        let (ev_p, _) = dense_sym_eig(similar_symmetric(&p_oracle, &dg).view());
        let (ev_l, _) = dense_sym_eig(l_sym.view());
        for (a, b) in ev_p.iter().zip(ev_l.iter().rev()) {
            prop_assert!((1.0 - a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn extension_reproduces_training_embedding(n in 30usize..120, seed in 0u64..1000) {
        let x = gaussian(n, 3, seed);
        let st = set(&x);
        let g = build_affinity(&st, 6, Metric::Euclidean).unwrap();
        let m = fit_spectral(&st, &g, 3, &SpectralOptions::default()).unwrap();
        let ext = m.extend_points(st.to_f64().view()).unwrap();
        let v = embed_train(&m);
        let rel = (&ext - &v).mapv(|e| e * e).sum().sqrt() / v.mapv(|e| e * e).sum().sqrt();
        prop_assert!(rel <= 1e-6, "relative error {rel}");
    }
}

fn check_against_oracle(g: &AffinityGraph, k: usize, solver: EigenSolver) {
    let opts = SpectralOptions { solver, ..SpectralOptions::default() };
    let (vals, vecs) = walk_eigenpairs(g, k, &opts).unwrap();
    let (ov, ovec) = oracle_walk_pairs(&g.weights().to_dense(), k);
    for (a, b) in vals.iter().zip(ov.iter()) {
        assert!((a - b).abs() <= 1e-6, "{solver:?}: eigenvalue {a} vs {b}");
    }
    let angle = max_principal_angle(vecs.view(), ovec.view());
    assert!(angle <= 1e-4, "{solver:?}: principal angle {angle}");
    assert!(vals.iter().all(|&l| (l - 1.0).abs() > 1e-6));
    for c in vecs.columns() {
        assert!((c.dot(&c) - 1.0).abs() <= 1e-9);
        let mean = c.mean().unwrap();
        assert!(c.iter().any(|v| (v - mean).abs() > 1e-6), "constant eigenvector returned");
    }
}

#[test]
fn cycle_eigenvalues_and_eigenspaces() {
    let n = 64;
    let g = cycle(n);
    for solver in [EigenSolver::Dense, EigenSolver::Lanczos] {
        // k = 4 keeps both degenerate pairs whole.
        check_against_oracle(&g, 4, solver);
        let (vals, _) = walk_eigenpairs(&g, 4, &SpectralOptions { solver, ..Default::default() }).unwrap();
        let c1 = (2.0 * std::f64::consts::PI / n as f64).cos();
        assert!((vals[0] - c1).abs() <= 1e-6 && (vals[1] - c1).abs() <= 1e-6);
    }
}

#[test]
fn complete_graph_nontrivial_eigenvalues() {
    let n = 10;
    let g = complete(n);
    let (vals, _) = walk_eigenpairs(&g, 3, &SpectralOptions::default()).unwrap();
    for v in vals.iter() {
        assert!((v + 1.0 / (n as f64 - 1.0)).abs() <= 1e-9, "{v}");
    }
}

#[test]
fn random_geometric_graph_both_solvers() {
    for (seed, n) in [(1u64, 200usize), (2, 350), (3, 500)] {
        let x = gaussian(n, 3, seed);
        let g = build_affinity(&set(&x), 10, Metric::Euclidean).unwrap();
        for solver in [EigenSolver::Dense, EigenSolver::Lanczos] {
            check_against_oracle(&g, 6, solver);
        }
    }
}

#[test]
fn cycle_embedding_lies_on_an_ellipse() {
    let n = 64;
    let g = cycle(n);
    let (_, v) = walk_eigenpairs(&g, 2, &SpectralOptions::default()).unwrap();
    // Least squares for a², b² in a²·v₂² + b²·v₃² = 1.
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for row in v.rows() {
        let (p, q) = (row[0] * row[0], row[1] * row[1]);
        s11 += p * p;
        s12 += p * q;
        s22 += q * q;
        r1 += p;
        r2 += q;
    }
    let det = s11 * s22 - s12 * s12;
    let a2 = (r1 * s22 - r2 * s12) / det;
    let b2 = (s11 * r2 - s12 * r1) / det;
    for row in v.rows() {
        let val = a2 * row[0] * row[0] + b2 * row[1] * row[1];
        assert!((val - 1.0).abs() <= 1e-3, "{val}");
    }
}

#[test]
fn midpoint_of_near_duplicates_lands_on_their_segment() {
    let mut x = gaussian(150, 3, 9);
    let delta = [1e-4, -2e-4, 1.5e-4];
    for c in 0..3 {
        x[[1, c]] = x[[0, c]] + delta[c];
    }
    let x = x.mapv(|v| v as f32 as f64);
    let st = set(&x);
    let g = build_affinity(&st, 10, Metric::Euclidean).unwrap();
    let m = fit_spectral(&st, &g, 4, &SpectralOptions::default()).unwrap();
    let mid = ((&x.row(0) + &x.row(1)) / 2.0).insert_axis(Axis(0));
    let e = m.extend_points(mid.view()).unwrap().row(0).to_owned();
    let (a, b) = (m.eigenvectors.row(0).to_owned(), m.eigenvectors.row(1).to_owned());
    let ab = &b - &a;
    let t = if ab.dot(&ab) > 0.0 { ((&e - &a).dot(&ab) / ab.dot(&ab)).clamp(0.0, 1.0) } else { 0.0 };
    let closest = &a + &(&ab * t);
    let dist = (&e - &closest).mapv(|v| v * v).sum().sqrt();
    assert!(dist <= 1e-3, "distance to segment {dist}");
}
