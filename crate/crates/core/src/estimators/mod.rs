//! The three signature SAR estimators and reduced-form prediction.

mod pca;
mod pls;
mod proj;
mod ridge;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::WeightMatrix;

pub use pca::{pca_basis, PcaBasis};
pub(crate) use pls::center as center_columns;
pub use pls::{pls_scores, PlsBasis, CROSS_COV_EPS};
pub use proj::{
    pca_projssar_fit, pca_projssar_fit_with, pls_projssar_fit, pls_projssar_fit_with, proj_fit_scores,
    ConcentratedLikelihood, ProjBasis, ProjFit, SarContext,
};
pub use ridge::{
    naive_penssar_fit, naive_penssar_fit_with, penalized_objective, RidgeFit, RidgeProfile, RidgeRoute,
    RidgeSolution, RidgeSystem, MAX_CONDITION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    NaivePenssar,
    PlsProjssar,
    PcaProjssar,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::NaivePenssar, Estimator::PlsProjssar, Estimator::PcaProjssar];

    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::NaivePenssar => "naive-penssar",
            Estimator::PlsProjssar => "pls-projssar",
            Estimator::PcaProjssar => "pca-projssar",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator '{s}'")))
    }
}

/// A fitted model from any of the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "kebab-case")]
pub enum SarFit {
    NaivePenssar(RidgeFit),
    PlsProjssar(ProjFit),
    PcaProjssar(ProjFit),
}

impl SarFit {
    pub fn estimator(&self) -> Estimator {
        match self {
            SarFit::NaivePenssar(_) => Estimator::NaivePenssar,
            SarFit::PlsProjssar(_) => Estimator::PlsProjssar,
            SarFit::PcaProjssar(_) => Estimator::PcaProjssar,
        }
    }

    pub fn rho_hat(&self) -> f64 {
        match self {
            SarFit::NaivePenssar(f) => f.rho_hat,
            SarFit::PlsProjssar(f) | SarFit::PcaProjssar(f) => f.rho_hat,
        }
    }

    pub fn alpha_hat(&self) -> f64 {
        match self {
            SarFit::NaivePenssar(f) => f.alpha_hat,
            SarFit::PlsProjssar(f) | SarFit::PcaProjssar(f) => f.alpha_hat,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            SarFit::NaivePenssar(f) => f.order,
            SarFit::PlsProjssar(f) | SarFit::PcaProjssar(f) => f.order,
        }
    }

    /// `ξβ̂` or `ζΦ̂` for the given design rows.
    pub fn linear_part(&self, xi: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            SarFit::NaivePenssar(f) => {
                if xi.ncols() != f.beta_hat.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "design has {} columns, fit has {} coefficients",
                        xi.ncols(),
                        f.beta_hat.len()
                    )));
                }
                Ok(xi * DVector::from_column_slice(&f.beta_hat))
            }
            SarFit::PlsProjssar(f) | SarFit::PcaProjssar(f) => {
                let scores = f.basis.transform(xi)?;
                Ok(scores * DVector::from_column_slice(&f.phi_hat))
            }
        }
    }
}

impl From<RidgeFit> for SarFit {
    fn from(f: RidgeFit) -> Self {
        SarFit::NaivePenssar(f)
    }
}

impl From<ProjFit> for SarFit {
    fn from(f: ProjFit) -> Self {
        match f.basis {
            ProjBasis::Pls(_) => SarFit::PlsProjssar(f),
            ProjBasis::Pca(_) => SarFit::PcaProjssar(f),
        }
    }
}

/// Reduced-form prediction `(I - rho W)⁻¹ (α 1 + M)` over every site of
/// `w_full`; observed responses are not used.
pub fn predict(fit: &SarFit, w_full: &WeightMatrix, xi_full: &DMatrix<f64>) -> Result<DVector<f64>> {
    if xi_full.nrows() != w_full.n() {
        return Err(Error::DimensionMismatch(format!(
            "W is {0}x{0}, design has {1} rows",
            w_full.n(),
            xi_full.nrows()
        )));
    }
    let mean = fit.linear_part(xi_full)?.add_scalar(fit.alpha_hat());
    let rho = fit.rho_hat();
    if rho == 0.0 {
        return Ok(mean);
    }
    w_full.solve_system(rho, &mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ridge(rho: f64, alpha: f64, beta: Vec<f64>) -> SarFit {
        SarFit::NaivePenssar(RidgeFit {
            rho_hat: rho,
            alpha_hat: alpha,
            beta_hat: beta,
            lambda: 0.0,
            order: 1,
            objective: 0.0,
        })
    }

    fn swap2() -> WeightMatrix {
        WeightMatrix::from_dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap()
    }

    #[test]
    fn two_site_reduced_form() {
        let fit = ridge(0.5, 0.0, vec![1.0]);
        let xi = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let y = predict(&fit, &swap2(), &xi).unwrap();
        assert!((y[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((y[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn rho_zero_is_linear_predictor() {
        let fit = ridge(0.0, 2.0, vec![1.0, -1.0]);
        let xi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]);
        let y = predict(&fit, &swap2(), &xi).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn linear_in_coefficients() {
        let w = swap2();
        let xi = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.5]);
        let a = predict(&ridge(0.4, 1.0, vec![1.0, 2.0]), &w, &xi).unwrap();
        let b = predict(&ridge(0.4, -0.5, vec![0.0, 3.0]), &w, &xi).unwrap();
        let ab = predict(&ridge(0.4, 0.5, vec![1.0, 5.0]), &w, &xi).unwrap();
        assert!((a + b - ab).amax() < 1e-12);
    }

    #[test]
    fn estimator_tags_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
        assert!("fsarlm".parse::<Estimator>().is_err());
        let json = serde_json::to_string(&ridge(0.1, 0.0, vec![1.0])).unwrap();
        assert!(json.contains("\"estimator\":\"naive-penssar\""));
    }
}
