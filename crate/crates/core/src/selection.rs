//! Validation-set choice of the truncation order and of `λ` or `J`.
//!
//! Every configuration is fitted on the training sites (weights restricted
//! and re-row-normalized) and scored by the RMSE of reduced-form predictions
//! at the validation sites, computed over the training and validation sites
//! jointly.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    pca_projssar_fit_with, pls_projssar_fit_with, pls_scores, predict, ConcentratedLikelihood, Estimator,
    RidgeProfile, RidgeRoute, RidgeSystem, SarContext, SarFit,
};
use crate::sigcore::{build_design_matrix, sig_length, Augment, Path};
use crate::spatial::{SplitAssignment, SplitLabel, WeightMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    /// Largest truncation order tried; `None` means as many as the cap allows.
    pub d_max: Option<usize>,
    pub lambda_grid: Vec<f64>,
    pub j_max: usize,
    pub inertia_cap: f64,
    pub coefficient_cap: usize,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            d_max: None,
            lambda_grid: log_grid(1e-6, 1e3, 10),
            j_max: 30,
            inertia_cap: 0.95,
            coefficient_cap: 10_000,
        }
    }
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| {
            if points == 1 {
                lo
            } else if i + 1 == points {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64)
            }
        })
        .collect()
}

/// Orders `D >= 1` whose time-augmented signature of a `p`-dimensional path
/// has at most `cap` coefficients.
pub fn feasible_orders(p: usize, cap: usize) -> Result<Vec<usize>> {
    feasible_orders_dim(p + 1, cap)
}

/// Same as [`feasible_orders`] for an already augmented dimension.
pub fn feasible_orders_dim(dim: usize, cap: usize) -> Result<Vec<usize>> {
    let mut orders = Vec::new();
    for d in 1.. {
        match sig_length(dim, d) {
            Ok(len) if len <= cap => orders.push(d),
            _ => break,
        }
        if dim == 1 && d >= cap {
            break;
        }
    }
    if orders.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no truncation order fits {cap} coefficients in dimension {dim}"
        )));
    }
    Ok(orders)
}

/// Signature design matrix at the largest order needed; lower orders are
/// column prefixes because words are stored shortest first.
#[derive(Debug, Clone)]
pub struct SignatureDesign {
    dim: usize,
    max_order: usize,
    full: DMatrix<f64>,
    pub augment: Augment,
}

impl SignatureDesign {
    pub fn new(paths: &[Path], max_order: usize, augment: Augment) -> Result<Self> {
        let full = build_design_matrix(paths, max_order, augment)?;
        Ok(Self {
            dim: augment.output_dim(paths[0].dim()),
            max_order,
            full,
            augment,
        })
    }

    /// Builds the design for the orders allowed by `grid`.
    pub fn for_grid(paths: &[Path], grid: &HyperGrid, augment: Augment) -> Result<Self> {
        let first = paths
            .first()
            .ok_or_else(|| Error::InvalidArgument("no paths".into()))?;
        let orders = grid_orders(augment.output_dim(first.dim()), grid)?;
        Self::new(paths, *orders.last().expect("nonempty"), augment)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn n(&self) -> usize {
        self.full.nrows()
    }

    /// All sites at order `d`.
    pub fn at_order(&self, d: usize) -> Result<DMatrix<f64>> {
        Ok(self.full.columns(0, self.width(d)?).into_owned())
    }

    /// Selected rows at order `d`.
    pub fn rows(&self, sites: &[usize], d: usize) -> Result<DMatrix<f64>> {
        let cols = self.width(d)?;
        Ok(DMatrix::from_fn(sites.len(), cols, |i, j| self.full[(sites[i], j)]))
    }

    fn width(&self, d: usize) -> Result<usize> {
        if d == 0 || d > self.max_order {
            return Err(Error::InvalidArgument(format!(
                "order {d} outside 1..={}",
                self.max_order
            )));
        }
        sig_length(self.dim, d)
    }
}

fn grid_orders(dim: usize, grid: &HyperGrid) -> Result<Vec<usize>> {
    let mut orders = feasible_orders_dim(dim, grid.coefficient_cap)?;
    if let Some(d_max) = grid.d_max {
        if d_max == 0 {
            return Err(Error::InvalidArgument("d_max must be at least 1".into()));
        }
        orders.retain(|&d| d <= d_max);
    }
    Ok(orders)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub estimator: Estimator,
    pub order: usize,
    pub lambda: Option<f64>,
    pub n_scores: Option<usize>,
    pub validation_rmse: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

impl GridPoint {
    fn ok(&self) -> bool {
        self.error.is_none() && self.validation_rmse.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub estimator: Estimator,
    pub points: Vec<GridPoint>,
    /// Index into `points` of the chosen configuration.
    pub chosen: usize,
}

impl SelectionReport {
    pub fn chosen_point(&self) -> &GridPoint {
        &self.points[self.chosen]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["estimator", "order", "lambda", "n_scores", "validation_rmse", "seconds", "error"])?;
        for p in &self.points {
            w.write_record([
                p.estimator.to_string(),
                p.order.to_string(),
                p.lambda.map(|l| l.to_string()).unwrap_or_default(),
                p.n_scores.map(|j| j.to_string()).unwrap_or_default(),
                p.validation_rmse.to_string(),
                p.seconds.to_string(),
                p.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// First grid point attaining the smallest validation RMSE. Points are
/// recorded by increasing order and then increasing `λ` or `J`, so ties go
/// to the simpler configuration.
pub fn argmin_point(points: &[GridPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if !p.ok() {
            continue;
        }
        if best.is_none_or(|b| p.validation_rmse < points[b].validation_rmse) {
            best = Some(i);
        }
    }
    best
}

pub fn rmse(pred: &[f64], obs: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    (pred.iter().zip(obs).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt()
}

/// Everything selection needs about one dataset and split.
pub struct SelectionInput<'a> {
    pub design: &'a SignatureDesign,
    pub y: &'a DVector<f64>,
    pub w: &'a WeightMatrix,
    pub split: &'a SplitAssignment,
}

struct Sites {
    train: Vec<usize>,
    /// Train sites first, then validation sites.
    joint: Vec<usize>,
    n_train: usize,
    y_train: DVector<f64>,
    y_val: Vec<f64>,
    w_train: WeightMatrix,
    w_joint: WeightMatrix,
}

impl Sites {
    fn new(input: &SelectionInput<'_>) -> Result<Self> {
        let n = input.y.len();
        if input.w.n() != n || input.split.len() != n || input.design.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} responses, {} weight rows, {} split labels, {} design rows",
                input.w.n(),
                input.split.len(),
                input.design.n()
            )));
        }
        let train = input.split.indices(SplitLabel::Train);
        let val = input.split.indices(SplitLabel::Validation);
        if train.is_empty() || val.is_empty() {
            return Err(Error::InvalidArgument("empty training or validation set".into()));
        }
        let joint: Vec<usize> = train.iter().chain(&val).copied().collect();
        Ok(Self {
            n_train: train.len(),
            y_train: DVector::from_iterator(train.len(), train.iter().map(|&i| input.y[i])),
            y_val: val.iter().map(|&i| input.y[i]).collect(),
            w_train: input.w.restrict(&train),
            w_joint: input.w.restrict(&joint),
            train,
            joint,
        })
    }

    fn validation_rmse(&self, pred_joint: &DVector<f64>) -> f64 {
        rmse(&pred_joint.as_slice()[self.n_train..], &self.y_val)
    }
}

/// Chooses the hyperparameters of `estimator` on the validation sites and
/// returns the corresponding fit (trained on the training sites only).
pub fn select_and_fit(
    estimator: Estimator,
    input: &SelectionInput<'_>,
    grid: &HyperGrid,
) -> Result<(SarFit, SelectionReport)> {
    let sites = Sites::new(input)?;
    let orders: Vec<usize> = grid_orders(input.design.dim(), grid)?
        .into_iter()
        .filter(|&d| d <= input.design.max_order())
        .collect();
    if orders.is_empty() {
        return Err(Error::InvalidArgument("no truncation order left in the grid".into()));
    }
    let points = match estimator {
        Estimator::NaivePenssar => score_ridge(input, &sites, &orders, grid)?,
        Estimator::PlsProjssar => score_pls(input, &sites, &orders, grid),
        Estimator::PcaProjssar => score_pca(input, &sites, &orders, grid),
    };
    let chosen = argmin_point(&points).ok_or_else(|| {
        let diagnostics: Vec<String> = points
            .iter()
            .map(|p| {
                format!(
                    "D={} {}: {}",
                    p.order,
                    p.lambda
                        .map(|l| format!("lambda={l}"))
                        .or(p.n_scores.map(|j| format!("J={j}")))
                        .unwrap_or_default(),
                    p.error.as_deref().unwrap_or("non-finite RMSE")
                )
            })
            .collect();
        Error::SelectionFailed(format!("{estimator}: {}", diagnostics.join("\n")))
    })?;
    let report = SelectionReport {
        estimator,
        points,
        chosen,
    };
    let fit = refit(input, &sites, report.chosen_point(), grid)?;
    Ok((fit, report))
}

fn refit(input: &SelectionInput<'_>, sites: &Sites, point: &GridPoint, grid: &HyperGrid) -> Result<SarFit> {
    let xi = input.design.rows(&sites.train, point.order)?;
    let fit: SarFit = match point.estimator {
        Estimator::NaivePenssar => {
            let lambda = point.lambda.expect("ridge point has lambda");
            let system = RidgeSystem::new(&xi, RidgeRoute::Auto);
            let wy = sites.w_train.mul_vec(&sites.y_train);
            let mut f = RidgeProfile::new(&system, &sites.y_train, &wy, lambda)?.fit(lambda)?;
            f.order = point.order;
            f.into()
        }
        Estimator::PlsProjssar => {
            let ctx = SarContext::new(&sites.w_train);
            let j = point.n_scores.expect("PLS point has J");
            let mut f = pls_projssar_fit_with(&ctx, &sites.y_train, &xi, j)?;
            f.order = point.order;
            f.into()
        }
        Estimator::PcaProjssar => {
            let ctx = SarContext::new(&sites.w_train);
            let mut f = pca_projssar_fit_with(&ctx, &sites.y_train, &xi, grid.inertia_cap)?;
            f.order = point.order;
            f.into()
        }
    };
    Ok(fit)
}

fn failed(estimator: Estimator, order: usize, lambda: Option<f64>, n_scores: Option<usize>, e: &Error, t: Instant) -> GridPoint {
    GridPoint {
        estimator,
        order,
        lambda,
        n_scores,
        validation_rmse: f64::NAN,
        seconds: t.elapsed().as_secs_f64(),
        error: Some(e.to_string()),
    }
}

fn score_ridge(input: &SelectionInput<'_>, sites: &Sites, orders: &[usize], grid: &HyperGrid) -> Result<Vec<GridPoint>> {
    let mut lambdas = grid.lambda_grid.clone();
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid lambda grid {lambdas:?}")));
    }
    lambdas.sort_by(f64::total_cmp);
    let wy = sites.w_train.mul_vec(&sites.y_train);
    let mut points = Vec::new();
    for &d in orders {
        let start = Instant::now();
        let xi = input.design.rows(&sites.train, d)?;
        let xi_joint = input.design.rows(&sites.joint, d)?;
        let system = RidgeSystem::new(&xi, RidgeRoute::Auto);
        let mut setup = Some(start);
        for &lambda in &lambdas {
            // the shared factorization is charged to the first lambda
            let t = setup.take().unwrap_or_else(Instant::now);
            let scored = RidgeProfile::new(&system, &sites.y_train, &wy, lambda)
                .and_then(|p| p.fit(lambda))
                .and_then(|mut f| {
                    f.order = d;
                    predict(&SarFit::NaivePenssar(f), &sites.w_joint, &xi_joint)
                });
            points.push(match scored {
                Ok(pred) => GridPoint {
                    estimator: Estimator::NaivePenssar,
                    order: d,
                    lambda: Some(lambda),
                    n_scores: None,
                    validation_rmse: sites.validation_rmse(&pred),
                    seconds: t.elapsed().as_secs_f64(),
                    error: None,
                },
                Err(e) => failed(Estimator::NaivePenssar, d, Some(lambda), None, &e, t),
            });
        }
    }
    Ok(points)
}

fn score_pls(input: &SelectionInput<'_>, sites: &Sites, orders: &[usize], grid: &HyperGrid) -> Vec<GridPoint> {
    let ctx = SarContext::new(&sites.w_train);
    let mut points = Vec::new();
    for &d in orders {
        let start = Instant::now();
        let per_order = || -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, usize)> {
            let xi = input.design.rows(&sites.train, d)?;
            let s = xi.ncols();
            let j_top = grid.j_max.min(sites.n_train.saturating_sub(2)).min(s);
            if j_top == 0 {
                return Err(Error::InvalidArgument(format!(
                    "no admissible J with {} training sites",
                    sites.n_train
                )));
            }
            let (scores, basis) = pls_scores(&sites.y_train, &xi, j_top)?;
            // joint-site scores through W (PᵀW)⁻¹ for every prefix J: project
            // once onto W, then apply the leading J x J block of (PᵀW)⁻¹
            let xi_joint = input.design.rows(&sites.joint, d)?;
            let centered = crate::estimators::center_columns(&xi_joint, &basis.column_centers);
            let wmat = DMatrix::from_fn(s, basis.n_scores, |i, k| basis.weights[k][i]);
            let pmat = DMatrix::from_fn(s, basis.n_scores, |i, k| basis.x_loadings[k][i]);
            Ok((scores, centered * &wmat, pmat.tr_mul(&wmat), basis.n_scores))
        };
        match per_order() {
            Err(e) => points.push(failed(Estimator::PlsProjssar, d, None, None, &e, start)),
            Ok((scores, projected, ptw, n_scores)) => {
                let mut setup = Some(start);
                for j in 1..=n_scores {
                    let t = setup.take().unwrap_or_else(Instant::now);
                    let scored = (|| -> Result<f64> {
                        let train_scores = scores.columns(0, j).into_owned();
                        let lik = ConcentratedLikelihood::new(&ctx, &sites.y_train, &train_scores)?;
                        let opt = lik.optimum()?;
                        let inv = ptw
                            .view((0, 0), (j, j))
                            .into_owned()
                            .try_inverse()
                            .ok_or_else(|| Error::RankDeficient("PᵀW is singular".into()))?;
                        let joint_scores = projected.columns(0, j) * inv;
                        let coef = lik.coefficients(opt.x);
                        let mean = joint_scores * coef.rows(1, j) + DVector::from_element(sites.joint.len(), coef[0]);
                        let pred = sites.w_joint.solve_system(opt.x, &mean)?;
                        Ok(sites.validation_rmse(&pred))
                    })();
                    points.push(match scored {
                        Ok(r) => GridPoint {
                            estimator: Estimator::PlsProjssar,
                            order: d,
                            lambda: None,
                            n_scores: Some(j),
                            validation_rmse: r,
                            seconds: t.elapsed().as_secs_f64(),
                            error: None,
                        },
                        Err(e) => failed(Estimator::PlsProjssar, d, None, Some(j), &e, t),
                    });
                }
            }
        }
    }
    points
}

fn score_pca(input: &SelectionInput<'_>, sites: &Sites, orders: &[usize], grid: &HyperGrid) -> Vec<GridPoint> {
    let ctx = SarContext::new(&sites.w_train);
    let mut points = Vec::new();
    for &d in orders {
        let t = Instant::now();
        let scored = (|| -> Result<(usize, f64)> {
            let xi = input.design.rows(&sites.train, d)?;
            let mut f = pca_projssar_fit_with(&ctx, &sites.y_train, &xi, grid.inertia_cap)?;
            f.order = d;
            let j = f.basis.n_scores();
            let xi_joint = input.design.rows(&sites.joint, d)?;
            let pred = predict(&SarFit::PcaProjssar(f), &sites.w_joint, &xi_joint)?;
            Ok((j, sites.validation_rmse(&pred)))
        })();
        points.push(match scored {
            Ok((j, r)) => GridPoint {
                estimator: Estimator::PcaProjssar,
                order: d,
                lambda: None,
                n_scores: Some(j),
                validation_rmse: r,
                seconds: t.elapsed().as_secs_f64(),
                error: None,
            },
            Err(e) => failed(Estimator::PcaProjssar, d, None, None, &e, t),
        });
    }
    points
}

/// Test-set RMSE of a fit, predicting over all sites with the full
/// re-row-normalized weight matrix.
pub fn test_rmse(fit: &SarFit, design: &SignatureDesign, y: &DVector<f64>, w: &WeightMatrix, split: &SplitAssignment) -> Result<f64> {
    let all: Vec<usize> = (0..y.len()).collect();
    let w_full = w.restrict(&all);
    let pred = predict(fit, &w_full, &design.at_order(fit.order())?)?;
    let test = split.indices(SplitLabel::Test);
    let p: Vec<f64> = test.iter().map(|&i| pred[i]).collect();
    let o: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    Ok(rmse(&p, &o))
}
