//! Projection SAR fits (PLS-ProjSSAR, PCA-ProjSSAR): the response is
//! regressed on a few scores while rho maximizes the concentrated
//! quasi-log-likelihood
//! `-(n/2)(ln 2π + 1) - (n/2) ln σ̂²(rho) + ln det(I - rho W)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::pca::{pca_basis, PcaBasis};
use super::pls::{pls_scores, PlsBasis};
use crate::error::{Error, Result};
use crate::search;
use crate::spatial::{HessenbergLogDet, WeightMatrix, RHO_MAX, RHO_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjBasis {
    Pls(PlsBasis),
    Pca(PcaBasis),
}

impl ProjBasis {
    pub fn n_scores(&self) -> usize {
        match self {
            ProjBasis::Pls(b) => b.n_scores,
            ProjBasis::Pca(b) => b.n_scores,
        }
    }

    pub fn transform(&self, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            ProjBasis::Pls(b) => b.transform(xi),
            ProjBasis::Pca(b) => b.transform(xi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjFit {
    pub rho_hat: f64,
    pub alpha_hat: f64,
    pub phi_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub order: usize,
    /// Concentrated quasi-log-likelihood at `rho_hat`.
    pub log_likelihood: f64,
    pub basis: ProjBasis,
}

/// A weight matrix with its log-determinant evaluator, shared by every fit
/// on the same sites.
pub struct SarContext<'a> {
    pub w: &'a WeightMatrix,
    pub logdet: HessenbergLogDet,
}

impl<'a> SarContext<'a> {
    pub fn new(w: &'a WeightMatrix) -> Self {
        Self {
            w,
            logdet: HessenbergLogDet::new(w),
        }
    }
}

/// Concentrated likelihood of `y` on a fixed score matrix.
pub struct ConcentratedLikelihood<'c, 'a> {
    ctx: &'c SarContext<'a>,
    y: DVector<f64>,
    wy: DVector<f64>,
    design: DMatrix<f64>,
    coef_y: DVector<f64>,
    coef_wy: DVector<f64>,
    resid_y: DVector<f64>,
    resid_wy: DVector<f64>,
}

impl<'c, 'a> ConcentratedLikelihood<'c, 'a> {
    pub fn new(ctx: &'c SarContext<'a>, y: &DVector<f64>, scores: &DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if ctx.w.n() != n || scores.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "W is {0}x{0}, y has {1} entries, scores have {2} rows",
                ctx.w.n(),
                n,
                scores.nrows()
            )));
        }
        let j = scores.ncols();
        if n < j + 2 {
            return Err(Error::InvalidArgument(format!(
                "need n >= J + 2, got n = {n}, J = {j}"
            )));
        }
        let mut design = DMatrix::from_element(n, j + 1, 1.0);
        design.columns_mut(1, j).copy_from(scores);
        let gram = design.tr_mul(&design);
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("score matrix with intercept".into()))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
        if (hi / lo).powi(2) > 1e12 {
            return Err(Error::RankDeficient(format!(
                "score matrix condition estimate {:.3e}",
                (hi / lo).powi(2)
            )));
        }
        let wy = ctx.w.mul_vec(y);
        let coef_y = chol.solve(&design.tr_mul(y));
        let coef_wy = chol.solve(&design.tr_mul(&wy));
        let resid_y = y - &design * &coef_y;
        let resid_wy = &wy - &design * &coef_wy;
        Ok(Self {
            ctx,
            y: y.clone(),
            wy,
            design,
            coef_y,
            coef_wy,
            resid_y,
            resid_wy,
        })
    }

    /// `σ̂²(rho)`.
    pub fn sigma2(&self, rho: f64) -> f64 {
        self.resid_y
            .iter()
            .zip(self.resid_wy.iter())
            .map(|(a, b)| (a - rho * b).powi(2))
            .sum::<f64>()
            / self.y.len() as f64
    }

    pub fn value(&self, rho: f64) -> Result<f64> {
        let n = self.y.len() as f64;
        let s2 = self.sigma2(rho);
        if !(s2 > 0.0) {
            return Err(Error::NonFinite(format!("sigma² = {s2} at rho = {rho}")));
        }
        Ok(-0.5 * n * ((2.0 * PI).ln() + 1.0) - 0.5 * n * s2.ln() + self.ctx.logdet.eval(rho)?)
    }

    /// `(α̂(rho), Φ̂(rho))`.
    pub fn coefficients(&self, rho: f64) -> DVector<f64> {
        &self.coef_y - &self.coef_wy * rho
    }

    /// Maximizer of the concentrated likelihood over the guarded interval.
    pub fn optimum(&self) -> Result<search::Optimum> {
        search::maximize(|rho| self.value(rho), RHO_MIN, RHO_MAX)
    }

    pub fn maximize(&self, basis: ProjBasis, order: usize) -> Result<ProjFit> {
        let opt = self.optimum()?;
        let rho = opt.x;
        let coef = self.coefficients(rho);
        let resid = &self.y - &self.wy * rho - &self.design * &coef;
        let sigma2 = resid.norm_squared() / self.y.len() as f64;
        if !(sigma2 > 0.0) {
            return Err(Error::NonFinite("sigma² collapsed to zero".into()));
        }
        Ok(ProjFit {
            rho_hat: rho,
            alpha_hat: coef[0],
            phi_hat: coef.iter().skip(1).copied().collect(),
            sigma2_hat: sigma2,
            order,
            log_likelihood: opt.value,
            basis,
        })
    }
}

pub fn proj_fit_scores(
    ctx: &SarContext<'_>,
    y: &DVector<f64>,
    scores: &DMatrix<f64>,
    basis: ProjBasis,
) -> Result<ProjFit> {
    ConcentratedLikelihood::new(ctx, y, scores)?.maximize(basis, 0)
}

/// PLS-ProjSSAR. Scores ignore the autoregressive term; rho then maximizes
/// the concentrated likelihood.
pub fn pls_projssar_fit(
    w: &WeightMatrix,
    y: &DVector<f64>,
    xi: &DMatrix<f64>,
    j: usize,
) -> Result<ProjFit> {
    let ctx = SarContext::new(w);
    pls_projssar_fit_with(&ctx, y, xi, j)
}

pub fn pls_projssar_fit_with(
    ctx: &SarContext<'_>,
    y: &DVector<f64>,
    xi: &DMatrix<f64>,
    j: usize,
) -> Result<ProjFit> {
    let (scores, basis) = pls_scores(y, xi, j)?;
    proj_fit_scores(ctx, y, &scores, ProjBasis::Pls(basis))
}

/// PCA-ProjSSAR: principal component scores of the standardized design in
/// place of PLS scores.
pub fn pca_projssar_fit(
    w: &WeightMatrix,
    y: &DVector<f64>,
    xi: &DMatrix<f64>,
    inertia_cap: f64,
) -> Result<ProjFit> {
    let ctx = SarContext::new(w);
    pca_projssar_fit_with(&ctx, y, xi, inertia_cap)
}

pub fn pca_projssar_fit_with(
    ctx: &SarContext<'_>,
    y: &DVector<f64>,
    xi: &DMatrix<f64>,
    inertia_cap: f64,
) -> Result<ProjFit> {
    let nonconstant = xi
        .column_iter()
        .filter(|c| {
            let m = c.mean();
            c.iter().any(|v| (v - m).abs() > 1e-12 * (1.0 + m.abs()))
        })
        .count();
    if nonconstant < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA-ProjSSAR needs at least 2 non-constant design columns, found {nonconstant}"
        )));
    }
    let (scores, basis) = pca_basis(xi, inertia_cap)?;
    proj_fit_scores(ctx, y, &scores, ProjBasis::Pca(basis))
}
