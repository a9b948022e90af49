//! Thin bridge to nalgebra's dense decompositions.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
/// Eigenvectors are the columns of the returned matrix.
pub fn sym_eig_desc(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::dim(format!("eigen of non-square {}x{}", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in eigen input".into()));
    }
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// `(A + ridge I)^{-1/2}` for symmetric positive semi-definite `A`.
pub fn inv_sqrt_psd(a: ArrayView2<'_, f64>, ridge: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eig_desc(a)?;
    let n = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let v = vals[j] + ridge;
        let tol = 1e-12 * vals[0].abs().max(1.0);
        if v <= tol {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (eigenvalue {v:.3e} after ridge {ridge:.3e})"
            )));
        }
        let s = 1.0 / v.sqrt();
        scaled.column_mut(j).mapv_inplace(|x| x * s);
    }
    Ok(scaled.dot(&vecs.t()))
}

/// Thin SVD `A = U diag(s) Vᵀ` with singular values descending.
pub fn svd_desc(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let svd = nalgebra::SVD::new(to_na(a), true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD failed".into()));
    };
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    let s = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i]));
    let u_out = Array2::from_shape_fn((u.nrows(), r), |(i, c)| u[(i, order[c])]);
    let v_out = Array2::from_shape_fn((vt.ncols(), r), |(i, c)| vt[(order[c], i)]);
    Ok((u_out, s, v_out))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let chol = nalgebra::Cholesky::new(to_na(a))
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(from_na(&chol.l()))
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_tri_inverse(l: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[[i, k]] * inv[[k, col]];
            }
            let d = l[[i, i]];
            if d.abs() < 1e-300 {
                return Err(Error::Numerical("singular triangular factor".into()));
            }
            inv[[i, col]] = s / d;
        }
    }
    Ok(inv)
}

/// Orthonormal basis of the column space via QR.
pub fn orthonormal_columns(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let qr = nalgebra::QR::new(to_na(a));
    from_na(&qr.q())
}

/// Frobenius norm.
pub fn fro(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Spectral norm of a symmetric matrix.
pub fn sym_op_norm(a: ArrayView2<'_, f64>) -> Result<f64> {
    let (v, _) = sym_eig_desc(a)?;
    Ok(v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Sample covariance (1/(m-1)) of column-centered inputs `a`, `b`.
pub(crate) fn cross_cov(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = a.nrows().max(2) as f64;
    a.t().dot(&b) / (m - 1.0)
}
