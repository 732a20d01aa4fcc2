//! PLS scores by NIPALS deflation on the column-centered design matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cross-covariance norms below this (relative to the first step, floored
/// at one) stop the deflation loop early.
pub const CROSS_COV_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsBasis {
    /// Number of scores actually extracted.
    pub n_scores: usize,
    /// Number of scores asked for; larger than `n_scores` after an early stop.
    pub requested: usize,
    /// Unit weight vectors, one per score.
    pub weights: Vec<Vec<f64>>,
    pub x_loadings: Vec<Vec<f64>>,
    pub y_loadings: Vec<f64>,
    pub column_centers: Vec<f64>,
}

impl PlsBasis {
    pub fn truncated(&self) -> bool {
        self.n_scores < self.requested
    }

    /// First `j` components.
    pub fn prefix(&self, j: usize) -> Result<PlsBasis> {
        if j == 0 || j > self.n_scores {
            return Err(Error::InvalidArgument(format!(
                "cannot take {j} of {} PLS components",
                self.n_scores
            )));
        }
        Ok(PlsBasis {
            n_scores: j,
            requested: j,
            weights: self.weights[..j].to_vec(),
            x_loadings: self.x_loadings[..j].to_vec(),
            y_loadings: self.y_loadings[..j].to_vec(),
            column_centers: self.column_centers.clone(),
        })
    }

    fn stack(cols: &[Vec<f64>]) -> DMatrix<f64> {
        let rows = cols.first().map(Vec::len).unwrap_or(0);
        DMatrix::from_fn(rows, cols.len(), |i, k| cols[k][i])
    }

    /// `W (PᵀW)⁻¹`, mapping centered design rows to scores.
    pub fn rotation(&self) -> Result<DMatrix<f64>> {
        let w = Self::stack(&self.weights);
        let p = Self::stack(&self.x_loadings);
        let ptw = p.tr_mul(&w);
        let inv = ptw
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("PᵀW is singular".into()))?;
        Ok(w * inv)
    }

    /// Scores for arbitrary design rows.
    pub fn transform(&self, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if xi.ncols() != self.column_centers.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns, PLS basis expects {}",
                xi.ncols(),
                self.column_centers.len()
            )));
        }
        Ok(center(xi, &self.column_centers) * self.rotation()?)
    }
}

pub(crate) fn column_means(xi: &DMatrix<f64>) -> Vec<f64> {
    xi.column_iter().map(|c| c.mean()).collect()
}

pub(crate) fn center(xi: &DMatrix<f64>, centers: &[f64]) -> DMatrix<f64> {
    let mut out = xi.clone();
    for (mut col, m) in out.column_iter_mut().zip(centers) {
        col.add_scalar_mut(-m);
    }
    out
}

/// Extracts up to `j` PLS scores of `y` on `xi`.
///
/// Both the design columns and the response are centered before the loop;
/// the fitted intercept absorbs the means. Returns fewer than `j` scores
/// (see [`PlsBasis::truncated`]) if the cross-covariance vanishes first.
pub fn pls_scores(y: &DVector<f64>, xi: &DMatrix<f64>, j: usize) -> Result<(DMatrix<f64>, PlsBasis)> {
    let (n, s) = xi.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "response has {} entries, design has {n} rows",
            y.len()
        )));
    }
    if j == 0 || j > n.min(s) {
        return Err(Error::InvalidArgument(format!(
            "J = {j} outside 1..=min(n, s̃) = {}",
            n.min(s)
        )));
    }
    let column_centers = column_means(xi);
    let mut x = center(xi, &column_centers);
    let mut yk = y.add_scalar(-y.mean());

    let mut scores = Vec::with_capacity(j);
    let mut weights = Vec::with_capacity(j);
    let mut x_loadings = Vec::with_capacity(j);
    let mut y_loadings = Vec::with_capacity(j);
    let mut threshold = None;
    for _ in 0..j {
        let mut w = x.tr_mul(&yk);
        let norm = w.norm();
        let floor = *threshold.get_or_insert(CROSS_COV_EPS * norm.max(1.0));
        if !(norm >= floor) || norm == 0.0 {
            break;
        }
        w /= norm;
        let t = &x * &w;
        let tt = t.norm_squared();
        if tt == 0.0 {
            break;
        }
        let p = x.tr_mul(&t) / tt;
        let q = yk.dot(&t) / tt;
        x.ger(-1.0, &t, &p, 1.0);
        yk.axpy(-q, &t, 1.0);
        scores.push(t);
        weights.push(w.iter().copied().collect());
        x_loadings.push(p.iter().copied().collect());
        y_loadings.push(q);
    }
    if scores.is_empty() {
        return Err(Error::RankDeficient(
            "zero cross-covariance between design and response".into(),
        ));
    }
    let basis = PlsBasis {
        n_scores: scores.len(),
        requested: j,
        weights,
        x_loadings,
        y_loadings,
        column_centers,
    };
    Ok((DMatrix::from_columns(&scores), basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, s: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = DMatrix::from_fn(n, s, |_, _| rng.sample(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        (y, xi)
    }

    #[test]
    fn rank_one_exact_fit() {
        let (y, _) = random(20, 1, 1);
        let xi = DMatrix::from_column_slice(20, 1, (&y * 3.0).as_slice());
        let (scores, basis) = pls_scores(&y, &xi, 1).unwrap();
        let yc = y.add_scalar(-y.mean());
        let t = scores.column(0);
        // score is the centered column up to sign
        let xc = &yc * 3.0;
        let sign = t.dot(&xc).signum();
        assert!((t * sign - &xc).norm() < 1e-10);
        let resid = &yc - t * basis.y_loadings[0];
        assert!(resid.norm() < 1e-10);
    }

    #[test]
    fn unit_weights_and_orthogonal_scores() {
        for seed in 0..5 {
            let (y, xi) = random(50, 10, seed);
            let (scores, basis) = pls_scores(&y, &xi, 8).unwrap();
            for w in &basis.weights {
                let norm: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
            for a in 0..8 {
                for b in 0..a {
                    let (ta, tb) = (scores.column(a), scores.column(b));
                    assert!(ta.dot(&tb).abs() < 1e-8 * ta.norm() * tb.norm());
                }
            }
        }
    }

    #[test]
    fn transform_reproduces_training_scores() {
        let (y, xi) = random(30, 12, 9);
        let (scores, basis) = pls_scores(&y, &xi, 5).unwrap();
        let mapped = basis.transform(&xi).unwrap();
        assert!((mapped - &scores).amax() < 1e-9);
        let (_, b3) = pls_scores(&y, &xi, 3).unwrap();
        assert_eq!(basis.prefix(3).unwrap().weights, b3.weights);
    }

    #[test]
    fn early_stop_on_exhausted_rank() {
        let (y, base) = random(20, 2, 4);
        // four columns spanning a two-dimensional space
        let xi = DMatrix::from_fn(20, 4, |i, k| base[(i, k % 2)] * (k + 1) as f64);
        let (scores, basis) = pls_scores(&y, &xi, 4).unwrap();
        assert_eq!(basis.n_scores, 2);
        assert!(basis.truncated());
        assert_eq!(scores.ncols(), 2);
    }

    #[test]
    fn bad_requests() {
        let (y, xi) = random(5, 3, 2);
        assert!(pls_scores(&y, &xi, 0).is_err());
        assert!(pls_scores(&y, &xi, 4).is_err());
        let zero = DMatrix::zeros(5, 3);
        assert!(matches!(pls_scores(&y, &zero, 1), Err(Error::RankDeficient(_))));
    }
}
