//! Closed-form ridge-regularized CCA.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::linalg::{cross_cov, inv_sqrt_psd, svd_desc};

/// Default number of canonical components.
pub const DEFAULT_CCA_DIM: usize = 8;

/// Default ridge relative to the average variance, `ε = 1e-4 · tr(Σ)/k`.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcaProjection {
    /// `k_x × r`.
    pub qx: Array2<f64>,
    /// `k_y × r`.
    pub qy: Array2<f64>,
    pub correlations: Array1<f64>,
    pub mean_x: Array1<f64>,
    pub mean_y: Array1<f64>,
    pub ridge_x: f64,
    pub ridge_y: f64,
}

fn default_ridge(cov: &Array2<f64>) -> f64 {
    let k = cov.nrows() as f64;
    let r = DEFAULT_RELATIVE_RIDGE * cov.diag().sum() / k;
    if r > 0.0 {
        r
    } else {
        DEFAULT_RELATIVE_RIDGE
    }
}

/// Fits CCA on row-paired `emb_x`, `emb_y`. `ridge = None` picks
/// `1e-4 · tr(Σ)/k` separately for each side.
pub fn fit_cca(
    emb_x: ArrayView2<'_, f64>,
    emb_y: ArrayView2<'_, f64>,
    r: usize,
    ridge: Option<f64>,
) -> Result<CcaProjection> {
    let m = emb_x.nrows();
    if emb_y.nrows() != m {
        return Err(Error::dim(format!(
            "CCA inputs are not row-paired: {m} vs {} rows",
            emb_y.nrows()
        )));
    }
    if r == 0 || r > m {
        return Err(Error::config(format!("CCA needs 1 <= r <= m, got r = {r}, m = {m}")));
    }
    if r > emb_x.ncols() || r > emb_y.ncols() {
        return Err(Error::config(format!(
            "CCA dimension r = {r} exceeds input width ({}, {})",
            emb_x.ncols(),
            emb_y.ncols()
        )));
    }
    if m < 2 {
        return Err(Error::config("CCA needs at least 2 pairs"));
    }
    if let Some(e) = ridge {
        if !(e >= 0.0) {
            return Err(Error::config(format!("ridge must be >= 0, got {e}")));
        }
    }
    let mean_x = emb_x.mean_axis(Axis(0)).unwrap();
    let mean_y = emb_y.mean_axis(Axis(0)).unwrap();
    let cx = &emb_x - &mean_x;
    let cy = &emb_y - &mean_y;
    let sxx = cross_cov(cx.view(), cx.view());
    let syy = cross_cov(cy.view(), cy.view());
    let sxy = cross_cov(cx.view(), cy.view());
    let ridge_x = ridge.unwrap_or_else(|| default_ridge(&sxx));
    let ridge_y = ridge.unwrap_or_else(|| default_ridge(&syy));
    let wx = inv_sqrt_psd(sxx.view(), ridge_x)?;
    let wy = inv_sqrt_psd(syy.view(), ridge_y)?;
    let t = wx.dot(&sxy).dot(&wy);
    let (u, sv, v) = svd_desc(t.view())?;
    let qx = wx.dot(&u.slice(s![.., ..r]));
    let qy = wy.dot(&v.slice(s![.., ..r]));
    let correlations = sv.slice(s![..r]).mapv(|c| c.clamp(0.0, 1.0));
    Ok(CcaProjection {
        qx,
        qy,
        correlations,
        mean_x,
        mean_y,
        ridge_x,
        ridge_y,
    })
}

impl CcaProjection {
    pub fn r(&self) -> usize {
        self.correlations.len()
    }

    pub fn input_dim(&self, side: Side) -> usize {
        match side {
            Side::X => self.qx.nrows(),
            Side::Y => self.qy.nrows(),
        }
    }

    /// `(batch − mean_side) · Q_side`.
    pub fn project(&self, side: Side, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (mean, q) = match side {
            Side::X => (&self.mean_x, &self.qx),
            Side::Y => (&self.mean_y, &self.qy),
        };
        if batch.ncols() != mean.len() {
            return Err(Error::dim(format!(
                "CCA {side:?} side expects width {}, got {}",
                mean.len(),
                batch.ncols()
            )));
        }
        Ok((&batch - mean).dot(q))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, checkpoint::Kind::Cca, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path, checkpoint::Kind::Cca)
    }
}

pub fn project(cca: &CcaProjection, side: Side, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    cca.project(side, batch)
}
