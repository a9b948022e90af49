//! Leading eigenpairs of a symmetric operator.
//!
//! Small problems go through a dense solver. Large sparse ones use a
//! thick-restart Lanczos iteration that keeps the whole (small) basis
//! orthogonal and recomputes Ritz pairs from the projected matrix on every
//! restart.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eig_desc;

/// Dense is used at or below this size under [`EigenSolver::Auto`].
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EigenSolver {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Residual tolerance `‖A y − θ y‖` for a Ritz pair to count as converged.
    pub tol: f64,
    pub max_restarts: usize,
    /// Basis size; 0 picks `max(2k + 20, 40)`.
    pub basis: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-10,
            max_restarts: 2000,
            basis: 0,
            seed: 0x5eed_1a9c_0000_0001,
        }
    }
}

/// A symmetric linear operator on `ℝⁿ`.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64>;

    fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut a = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            a.column_mut(j).assign(&self.apply(e.view()));
            e[j] = 0.0;
        }
        a
    }
}

/// Top-`k` eigenpairs, eigenvalues descending, eigenvectors as unit columns.
pub fn top_eigenpairs(
    op: &dyn SymOperator,
    k: usize,
    solver: EigenSolver,
    opts: &LanczosOptions,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::config(format!("cannot extract {k} eigenpairs from dimension {n}")));
    }
    let basis = if opts.basis == 0 { (2 * k + 20).max(40) } else { opts.basis };
    let use_dense = match solver {
        EigenSolver::Dense => true,
        EigenSolver::Lanczos => basis >= n,
        EigenSolver::Auto => n <= DENSE_LIMIT || basis >= n,
    };
    if use_dense {
        let a = op.to_dense();
        let a = (&a + &a.t()) * 0.5;
        let (vals, vecs) = sym_eig_desc(a.view())?;
        Ok((vals.slice(s![..k]).to_owned(), vecs.slice(s![.., ..k]).to_owned()))
    } else {
        lanczos(op, k, basis, opts)
    }
}

fn orthogonalize(v: &mut Array1<f64>, basis: &[Array1<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(v);
            v.scaled_add(-c, b);
        }
    }
}

fn lanczos(
    op: &dyn SymOperator,
    k: usize,
    m: usize,
    opts: &LanczosOptions,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_unit = |basis: &[Array1<f64>]| -> Array1<f64> {
        loop {
            let mut v: Array1<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            orthogonalize(&mut v, basis);
            let nv = v.dot(&v).sqrt();
            if nv > 1e-8 {
                return v / nv;
            }
        }
    };

    let mut v_basis: Vec<Array1<f64>> = Vec::with_capacity(m);
    let mut av_basis: Vec<Array1<f64>> = Vec::with_capacity(m);
    let v0 = random_unit(&v_basis);
    av_basis.push(op.apply(v0.view()));
    v_basis.push(v0);

    let keep = (k + (m - k) / 2).min(m - 1);
    let mut worst = f64::INFINITY;
    let mut converged = 0;
    for _ in 0..opts.max_restarts {
        while v_basis.len() < m {
            let mut w = av_basis.last().unwrap().clone();
            orthogonalize(&mut w, &v_basis);
            let nw = w.dot(&w).sqrt();
            let w = if nw > 1e-10 { w / nw } else { random_unit(&v_basis) };
            av_basis.push(op.apply(w.view()));
            v_basis.push(w);
        }
        let b = v_basis.len();
        let v_mat = stack(&v_basis);
        let av_mat = stack(&av_basis);
        let h = v_mat.t().dot(&av_mat);
        let h = (&h + &h.t()) * 0.5;
        let (theta, s) = sym_eig_desc(h.view())?;
        let y = v_mat.dot(&s.slice(s![.., ..keep.min(b)]));
        let ay = av_mat.dot(&s.slice(s![.., ..keep.min(b)]));

        worst = 0.0;
        converged = 0;
        for i in 0..k {
            let r = &ay.column(i) - &(&y.column(i) * theta[i]);
            let rn = r.dot(&r).sqrt();
            worst = worst.max(rn);
            if rn <= opts.tol {
                converged += 1;
            }
        }
        if converged == k {
            return Ok((theta.slice(s![..k]).to_owned(), y.slice(s![.., ..k]).to_owned()));
        }
        v_basis = y.axis_iter(Axis(1)).map(|c| c.to_owned()).collect();
        av_basis = ay.axis_iter(Axis(1)).map(|c| c.to_owned()).collect();
        // Re-orthonormalize the retained Ritz vectors against drift.
        for i in 0..v_basis.len() {
            let (done, rest) = v_basis.split_at_mut(i);
            let v = &mut rest[0];
            let before = v.clone();
            orthogonalize(v, done);
            let nv = v.dot(v).sqrt();
            *v /= nv;
            if (&*v - &before).iter().any(|d| d.abs() > 1e-12) {
                av_basis[i] = op.apply(v.view());
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        residual: worst,
        converged,
        wanted: k,
    })
}

fn stack(cols: &[Array1<f64>]) -> Array2<f64> {
    let n = cols[0].len();
    let mut a = Array2::zeros((n, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        a.column_mut(j).assign(c);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Diag(Array1<f64>);
    impl SymOperator for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
            &self.0 * &x
        }
    }

    #[test]
    fn lanczos_finds_top_of_diagonal() {
        let n = 400;
        let d = Diag((0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect());
        let (vals, vecs) =
            top_eigenpairs(&d, 5, EigenSolver::Lanczos, &LanczosOptions::default()).unwrap();
        for (i, v) in vals.iter().enumerate() {
            assert!((v - (n - 1 - i) as f64 / n as f64).abs() < 1e-10);
        }
        for j in 0..5 {
            let c = vecs.column(j);
            assert!((c.dot(&c) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn too_many_pairs_rejected() {
        let d = Diag(Array1::ones(3));
        assert!(top_eigenpairs(&d, 4, EigenSolver::Dense, &LanczosOptions::default()).is_err());
    }
}
