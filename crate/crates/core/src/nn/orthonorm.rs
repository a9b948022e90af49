//! Output orthonormalization: center the batch, then multiply by the inverse
//! Cholesky factor of its Gram matrix scaled by `√b`, so that
//! `(1/b) YᵀY = I`. Differentiable end to end.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, lower_tri_inverse};

/// `y = (x − shift) · matrix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub shift: Array1<f64>,
    pub matrix: Array2<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.shift.len() {
            return Err(Error::dim(format!(
                "affine map expects width {}, got {}",
                self.shift.len(),
                x.ncols()
            )));
        }
        Ok((&x - &self.shift).dot(&self.matrix))
    }
}

pub struct Orthonormalizer;

/// Values needed by the backward pass.
pub struct OrthoCache {
    centered: Array2<f64>,
    chol: Array2<f64>,
    chol_inv: Array2<f64>,
    /// `Z = A L⁻ᵀ` (unit-orthonormal columns).
    z: Array2<f64>,
    scale: f64,
}

impl Orthonormalizer {
    pub fn forward(raw: ArrayView2<'_, f64>) -> Result<(Array2<f64>, OrthoCache)> {
        let b = raw.nrows();
        let k = raw.ncols();
        if b <= k {
            return Err(Error::Numerical(format!(
                "cannot orthonormalize {k} outputs over a batch of {b}"
            )));
        }
        let mean = raw.mean_axis(Axis(0)).unwrap();
        let centered = &raw - &mean;
        let gram = centered.t().dot(&centered);
        let chol = cholesky_lower(gram.view()).map_err(|_| {
            Error::Numerical("singular batch Gram matrix (collapsed outputs or batch too small)".into())
        })?;
        let chol_inv = lower_tri_inverse(chol.view())?;
        let z = centered.dot(&chol_inv.t());
        let scale = (b as f64).sqrt();
        let y = &z * scale;
        Ok((
            y,
            OrthoCache {
                centered,
                chol,
                chol_inv,
                z,
                scale,
            },
        ))
    }

    /// The affine map the forward pass applied to this batch.
    pub fn freeze(raw: ArrayView2<'_, f64>) -> Result<AffineMap> {
        let (_, cache) = Self::forward(raw)?;
        let shift = raw.mean_axis(Axis(0)).unwrap();
        Ok(AffineMap {
            shift,
            matrix: cache.chol_inv.t().to_owned() * cache.scale,
        })
    }

    /// `∂loss/∂raw` from `∂loss/∂y`.
    pub fn backward(cache: &OrthoCache, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let k = cache.chol.nrows();
        let dz = &dy * cache.scale;
        // Z = A L⁻ᵀ
        let mut da = dz.dot(&cache.chol_inv);
        let dl = -cache.chol_inv.t().dot(&dz.t()).dot(&cache.z);
        // Cholesky backward: Φ(Lᵀ L̄) keeps the lower triangle, halves the diagonal.
        let mut phi = cache.chol.t().dot(&dl);
        for i in 0..k {
            for j in 0..k {
                if j > i {
                    phi[[i, j]] = 0.0;
                } else if i == j {
                    phi[[i, j]] *= 0.5;
                }
            }
        }
        let s = cache.chol_inv.t().dot(&phi).dot(&cache.chol_inv);
        let dg = (&s + &s.t()) * 0.5;
        // G = AᵀA
        da += &(cache.centered.dot(&dg) * 2.0);
        // Centering.
        let mean = da.mean_axis(Axis(0)).unwrap();
        da - &mean
    }
}
