//! NaivePenSSAR: ridge-penalized signature regression with a profiled
//! spatial autoregressive coefficient.
//!
//! For fixed `rho` the intercept and coefficients solve
//! `(X'ᵀX' + nΛ) (α, β) = X'ᵀ (Y - rho W Y)` with `X' = (1, ξ)` and `Λ`
//! holding `λ` on every slot except the intercept. Both the solution and the
//! residual are affine in `rho`, so the profiled objective
//! `(1/n) ||(I - H)(Y - rho W Y)||²` is evaluated from two solves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search;
use crate::spatial::{WeightMatrix, RHO_MAX, RHO_MIN};

/// Condition estimates above this (with `λ = 0`) are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub rho_hat: f64,
    pub alpha_hat: f64,
    pub beta_hat: Vec<f64>,
    pub lambda: f64,
    pub order: usize,
    /// Profiled objective at `rho_hat`.
    pub objective: f64,
}

/// How the penalized normal equations are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RidgeRoute {
    /// Primal when `s̃ + 1 <= n`, dual otherwise.
    #[default]
    Auto,
    /// Cholesky factorization of the `(s̃+1) x (s̃+1)` system.
    Primal,
    /// Centered `n x n` kernel form; identical solution, cost independent of `s̃`.
    Dual,
}

enum Prepared {
    Primal {
        gram: DMatrix<f64>,
    },
    Dual {
        centers: DVector<f64>,
        centered: DMatrix<f64>,
        eig: SymmetricEigen<f64, nalgebra::Dyn>,
    },
}

/// Ridge normal equations for one design matrix, reusable across `λ`.
pub struct RidgeSystem<'a> {
    xi: &'a DMatrix<f64>,
    prepared: Prepared,
}

/// Intercept and coefficients for one right-hand side, plus the residual
/// `r - X'(α, β)`.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub residual: DVector<f64>,
}

impl<'a> RidgeSystem<'a> {
    pub fn new(xi: &'a DMatrix<f64>, route: RidgeRoute) -> Self {
        let (n, s) = xi.shape();
        let dual = match route {
            RidgeRoute::Auto => s + 1 > n,
            RidgeRoute::Primal => false,
            RidgeRoute::Dual => true,
        };
        let prepared = if dual {
            let centers = DVector::from_iterator(s, xi.column_iter().map(|c| c.mean()));
            let mut centered = xi.clone();
            for (mut col, m) in centered.column_iter_mut().zip(centers.iter()) {
                col.add_scalar_mut(-m);
            }
            let kernel = &centered * centered.transpose();
            let eig = SymmetricEigen::new(kernel);
            Prepared::Dual {
                centers,
                centered,
                eig,
            }
        } else {
            let mut xp = DMatrix::from_element(n, s + 1, 1.0);
            xp.columns_mut(1, s).copy_from(xi);
            Prepared::Primal {
                gram: xp.tr_mul(&xp),
            }
        };
        Self { xi, prepared }
    }

    pub fn is_dual(&self) -> bool {
        matches!(self.prepared, Prepared::Dual { .. })
    }

    /// Solves for each right-hand side at penalty `lambda`.
    pub fn solve(&self, lambda: f64, rhs: &[&DVector<f64>]) -> Result<Vec<RidgeSolution>> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        let (n, s) = self.xi.shape();
        let nl = n as f64 * lambda;
        match &self.prepared {
            Prepared::Primal { gram } => {
                let mut g = gram.clone();
                for j in 1..=s {
                    g[(j, j)] += nl;
                }
                let chol = g.cholesky().ok_or(Error::IllConditioned {
                    condition: f64::INFINITY,
                })?;
                if lambda == 0.0 {
                    let diag = chol.l_dirty().diagonal();
                    let (lo, hi) = diag
                        .iter()
                        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
                    let condition = (hi / lo).powi(2);
                    if condition > MAX_CONDITION {
                        return Err(Error::IllConditioned { condition });
                    }
                }
                rhs.iter()
                    .map(|r| {
                        let mut xtr = DVector::zeros(s + 1);
                        xtr[0] = r.sum();
                        xtr.rows_mut(1, s).copy_from(&self.xi.tr_mul(r));
                        let coef = chol.solve(&xtr);
                        let beta = coef.rows(1, s).into_owned();
                        let fitted = self.xi * &beta;
                        let residual = DVector::from_iterator(
                            n,
                            r.iter().zip(fitted.iter()).map(|(y, f)| y - coef[0] - f),
                        );
                        Ok(RidgeSolution {
                            alpha: coef[0],
                            beta,
                            residual,
                        })
                    })
                    .collect()
            }
            Prepared::Dual {
                centers,
                centered,
                eig,
            } => {
                if lambda == 0.0 {
                    // s̃ + 1 > n: X'ᵀX' has rank at most n
                    return Err(Error::IllConditioned {
                        condition: f64::INFINITY,
                    });
                }
                let u = &eig.eigenvectors;
                let inv = DVector::from_iterator(
                    n,
                    eig.eigenvalues.iter().map(|e| 1.0 / (e.max(0.0) + nl)),
                );
                rhs.iter()
                    .map(|r| {
                        let mean = r.mean();
                        let rc = r.add_scalar(-mean);
                        let z = u * u.tr_mul(&rc).component_mul(&inv);
                        let beta = centered.tr_mul(&z);
                        let alpha = mean - centers.dot(&beta);
                        Ok(RidgeSolution {
                            alpha,
                            beta,
                            residual: z * nl,
                        })
                    })
                    .collect()
            }
        }
    }
}

/// Profiled NaivePenSSAR objective pieces for one `λ`: the residual at `rho`
/// is `a - rho b`.
pub struct RidgeProfile {
    pub y_part: RidgeSolution,
    pub wy_part: RidgeSolution,
    n: usize,
}

impl RidgeProfile {
    pub fn new(system: &RidgeSystem<'_>, y: &DVector<f64>, wy: &DVector<f64>, lambda: f64) -> Result<Self> {
        let mut sols = system.solve(lambda, &[y, wy])?;
        let wy_part = sols.pop().expect("two solutions");
        let y_part = sols.pop().expect("two solutions");
        Ok(Self {
            y_part,
            wy_part,
            n: y.len(),
        })
    }

    /// `(1/n) ||Y - rho W Y - X'(α̂(rho), β̂(rho))||²`.
    pub fn objective(&self, rho: f64) -> f64 {
        self.y_part
            .residual
            .iter()
            .zip(self.wy_part.residual.iter())
            .map(|(a, b)| (a - rho * b).powi(2))
            .sum::<f64>()
            / self.n as f64
    }

    pub fn coefficients(&self, rho: f64) -> (f64, DVector<f64>) {
        (
            self.y_part.alpha - rho * self.wy_part.alpha,
            &self.y_part.beta - &self.wy_part.beta * rho,
        )
    }

    pub fn fit(&self, lambda: f64) -> Result<RidgeFit> {
        let opt = search::minimize(|rho| Ok(self.objective(rho)), RHO_MIN, RHO_MAX)?;
        let (alpha, beta) = self.coefficients(opt.x);
        Ok(RidgeFit {
            rho_hat: opt.x,
            alpha_hat: alpha,
            beta_hat: beta.iter().copied().collect(),
            lambda,
            order: 0,
            objective: opt.value,
        })
    }
}

fn check_inputs(w: &WeightMatrix, y: &DVector<f64>, xi: &DMatrix<f64>) -> Result<()> {
    if w.n() != y.len() || xi.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "W is {0}x{0}, y has {1} entries, design has {2} rows",
            w.n(),
            y.len(),
            xi.nrows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response or design matrix".into()));
    }
    Ok(())
}

/// Fits NaivePenSSAR for one design matrix and penalty.
pub fn naive_penssar_fit(
    w: &WeightMatrix,
    y: &DVector<f64>,
    xi: &DMatrix<f64>,
    lambda: f64,
) -> Result<RidgeFit> {
    naive_penssar_fit_with(w, y, xi, lambda, RidgeRoute::Auto)
}

pub fn naive_penssar_fit_with(
    w: &WeightMatrix,
    y: &DVector<f64>,
    xi: &DMatrix<f64>,
    lambda: f64,
    route: RidgeRoute,
) -> Result<RidgeFit> {
    check_inputs(w, y, xi)?;
    let system = RidgeSystem::new(xi, route);
    let wy = w.mul_vec(y);
    RidgeProfile::new(&system, y, &wy, lambda)?.fit(lambda)
}

/// Penalized objective `(1/n)||Y - rho W Y - α - ξβ||² + λ||β||²`.
pub fn penalized_objective(
    w: &WeightMatrix,
    y: &DVector<f64>,
    xi: &DMatrix<f64>,
    rho: f64,
    alpha: f64,
    beta: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let r = y - w.mul_vec(y) * rho - xi * beta;
    let n = y.len() as f64;
    r.iter().map(|v| (v - alpha).powi(2)).sum::<f64>() / n + lambda * beta.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{knn_weights, Coordinates};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_instance(n: usize, s: usize, seed: u64) -> (WeightMatrix, DVector<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = Coordinates::new(
            (0..n)
                .map(|_| [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0])
                .collect(),
        )
        .unwrap();
        let w = knn_weights(&coords, 3).unwrap();
        let xi = DMatrix::from_fn(n, s, |_, _| rng.sample(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        (w, y, xi)
    }

    #[test]
    fn noiseless_recovery() {
        let (w, _, xi) = random_instance(40, 6, 1);
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.5]);
        let alpha = 0.75;
        let y = (&xi * &beta).add_scalar(alpha);
        let fit = naive_penssar_fit(&w, &y, &xi, 0.0).unwrap();
        assert!(fit.rho_hat.abs() < 1e-3);
        assert!((fit.alpha_hat - alpha).abs() < 1e-8);
        for (g, t) in fit.beta_hat.iter().zip(beta.iter()) {
            assert!((g - t).abs() < 1e-8);
        }
    }

    #[test]
    fn profiled_optimum_beats_fine_grid() {
        let (w, y, xi) = random_instance(30, 5, 2);
        let system = RidgeSystem::new(&xi, RidgeRoute::Auto);
        let wy = w.mul_vec(&y);
        let profile = RidgeProfile::new(&system, &y, &wy, 0.1).unwrap();
        let fit = profile.fit(0.1).unwrap();
        for rho in search::linspace(RHO_MIN, RHO_MAX, 1001) {
            assert!(fit.objective <= profile.objective(rho) + 1e-10);
        }
    }

    #[test]
    fn routes_agree() {
        let (w, y, xi) = random_instance(25, 40, 3);
        let a = naive_penssar_fit_with(&w, &y, &xi, 0.5, RidgeRoute::Primal).unwrap();
        let b = naive_penssar_fit_with(&w, &y, &xi, 0.5, RidgeRoute::Dual).unwrap();
        assert!((a.rho_hat - b.rho_hat).abs() < 1e-7);
        assert!((a.alpha_hat - b.alpha_hat).abs() < 1e-7);
        for (p, d) in a.beta_hat.iter().zip(&b.beta_hat) {
            assert!((p - d).abs() < 1e-7);
        }
        let (w, y, xi) = random_instance(30, 4, 4);
        let a = naive_penssar_fit_with(&w, &y, &xi, 2.0, RidgeRoute::Primal).unwrap();
        let b = naive_penssar_fit_with(&w, &y, &xi, 2.0, RidgeRoute::Dual).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-10);
    }

    #[test]
    fn zero_lambda_underdetermined_fails() {
        let (w, y, xi) = random_instance(10, 30, 5);
        assert!(matches!(
            naive_penssar_fit(&w, &y, &xi, 0.0),
            Err(Error::IllConditioned { .. })
        ));
        let mut collinear = DMatrix::zeros(10, 2);
        collinear.column_mut(0).copy_from(&xi.column(0));
        collinear.column_mut(1).copy_from(&(xi.column(0) * 2.0));
        assert!(matches!(
            naive_penssar_fit(&w, &y, &collinear, 0.0),
            Err(Error::IllConditioned { .. })
        ));
        assert!(naive_penssar_fit(&w, &y, &collinear, 1e-3).is_ok());
    }

    #[test]
    fn shrinkage_is_monotone() {
        let (w, y, xi) = random_instance(30, 8, 6);
        let norms: Vec<f64> = [1e-2, 1.0, 1e2, 1e4]
            .iter()
            .map(|&l| {
                let f = naive_penssar_fit(&w, &y, &xi, l).unwrap();
                f.beta_hat.iter().map(|b| b * b).sum::<f64>().sqrt()
            })
            .collect();
        for p in norms.windows(2) {
            assert!(p[1] < p[0], "{norms:?}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (w, y, xi) = random_instance(10, 3, 7);
        assert!(naive_penssar_fit(&w, &y, &xi, -1.0).is_err());
        let short = DVector::from_element(9, 1.0);
        assert!(naive_penssar_fit(&w, &short, &xi, 1.0).is_err());
    }
}
