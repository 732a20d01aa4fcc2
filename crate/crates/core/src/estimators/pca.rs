//! Principal components of the standardized design matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::pls::column_means;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub n_scores: usize,
    /// Orthonormal directions in design space; zero on dropped columns.
    pub component_directions: Vec<Vec<f64>>,
    pub column_centers: Vec<f64>,
    /// Standard deviations; zero marks a constant (dropped) column.
    pub column_scales: Vec<f64>,
    /// Cumulative explained inertia of the retained components.
    pub explained_inertia: Vec<f64>,
    /// Number of strictly positive eigenvalues.
    pub n_positive: usize,
}

impl PcaBasis {
    fn standardize(&self, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if xi.ncols() != self.column_centers.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} columns, PCA basis expects {}",
                xi.ncols(),
                self.column_centers.len()
            )));
        }
        Ok(standardize(xi, &self.column_centers, &self.column_scales))
    }

    pub fn directions(&self) -> DMatrix<f64> {
        let s = self.column_centers.len();
        DMatrix::from_fn(s, self.n_scores, |i, k| self.component_directions[k][i])
    }

    pub fn transform(&self, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.standardize(xi)? * self.directions())
    }
}

fn standardize(xi: &DMatrix<f64>, centers: &[f64], scales: &[f64]) -> DMatrix<f64> {
    let mut z = xi.clone();
    for ((mut col, m), s) in z.column_iter_mut().zip(centers).zip(scales) {
        if *s > 0.0 {
            col.apply(|v| *v = (*v - m) / s);
        } else {
            col.fill(0.0);
        }
    }
    z
}

/// Fits a PCA basis, keeping the largest `J` whose cumulative inertia stays
/// below `inertia_cap` (at least one component).
pub fn pca_basis(xi: &DMatrix<f64>, inertia_cap: f64) -> Result<(DMatrix<f64>, PcaBasis)> {
    let (n, s) = xi.shape();
    if !(inertia_cap > 0.0 && inertia_cap <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "inertia cap must lie in (0, 1], got {inertia_cap}"
        )));
    }
    let centers = column_means(xi);
    let scales: Vec<f64> = xi
        .column_iter()
        .zip(&centers)
        .map(|(c, m)| {
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                sd
            } else {
                0.0
            }
        })
        .collect();
    if scales.iter().all(|s| *s == 0.0) {
        return Err(Error::RankDeficient("every design column is constant".into()));
    }
    let z = standardize(xi, &centers, &scales);

    // Eigen-decompose the smaller of ZᵀZ and ZZᵀ.
    let (eigenvalues, directions) = if s <= n {
        let eig = SymmetricEigen::new(z.tr_mul(&z));
        let order = sorted_desc(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let dirs: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        (vals, dirs)
    } else {
        let eig = SymmetricEigen::new(&z * z.transpose());
        let order = sorted_desc(eig.eigenvalues.as_slice());
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let dirs: Vec<Vec<f64>> = order
            .iter()
            .zip(&vals)
            .map(|(&i, &lam)| {
                if lam <= 0.0 {
                    return vec![0.0; s];
                }
                let v = z.tr_mul(&eig.eigenvectors.column(i)) / lam.sqrt();
                v.iter().copied().collect()
            })
            .collect();
        (vals, dirs)
    };

    // rounding leaves ~1e-16 on dropped columns; pin them to zero
    let mut directions = directions;
    for d in &mut directions {
        for (v, sc) in d.iter_mut().zip(&scales) {
            if *sc == 0.0 {
                *v = 0.0;
            }
        }
    }

    let top = eigenvalues[0].max(0.0);
    let n_positive = eigenvalues.iter().filter(|&&l| l > 1e-12 * top).count();
    if n_positive == 0 {
        return Err(Error::RankDeficient("standardized design has no variance".into()));
    }
    let total: f64 = eigenvalues[..n_positive].iter().sum();
    let mut cumulative = Vec::with_capacity(n_positive);
    let mut acc = 0.0;
    for l in &eigenvalues[..n_positive] {
        acc += l;
        cumulative.push((acc / total).min(1.0));
    }
    let j = cumulative
        .iter()
        .take_while(|c| **c < inertia_cap)
        .count()
        .clamp(1, n_positive);

    let basis = PcaBasis {
        n_scores: j,
        component_directions: directions[..j].to_vec(),
        column_centers: centers,
        column_scales: scales,
        explained_inertia: cumulative[..j].to_vec(),
        n_positive,
    };
    let scores = z * basis.directions();
    Ok((scores, basis))
}

fn sorted_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, s: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, s, |_, _| rng.sample(StandardNormal))
    }

    fn check_orthonormal(b: &PcaBasis) {
        let d = b.directions();
        let g = d.tr_mul(&d);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-10, "gram {g}");
            }
        }
    }

    #[test]
    fn isotropic_two_columns_keep_one() {
        let xi = random(2000, 2, 1);
        let (scores, b) = pca_basis(&xi, 0.95).unwrap();
        assert_eq!(b.n_scores, 1);
        assert_eq!(scores.ncols(), 1);
        assert!((b.explained_inertia[0] - 0.5).abs() < 0.05);
        check_orthonormal(&b);
    }

    #[test]
    fn wide_design_uses_gram_route() {
        let xi = random(15, 60, 2);
        let (scores, b) = pca_basis(&xi, 0.95).unwrap();
        check_orthonormal(&b);
        assert!(b.n_scores <= b.n_positive);
        assert!(b.n_positive <= 14);
        assert!((b.transform(&xi).unwrap() - scores).amax() < 1e-9);
        for w in b.explained_inertia.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(*b.explained_inertia.last().unwrap() < 0.95);
    }

    #[test]
    fn constant_columns_are_dropped() {
        let mut xi = random(30, 4, 3);
        xi.column_mut(2).fill(7.0);
        let (_, b) = pca_basis(&xi, 0.99).unwrap();
        assert_eq!(b.column_scales[2], 0.0);
        for d in &b.component_directions {
            assert_eq!(d[2], 0.0);
        }
        let constant = DMatrix::from_element(10, 3, 1.5);
        assert!(pca_basis(&constant, 0.95).is_err());
    }

    #[test]
    fn never_exceeds_positive_eigenvalues() {
        // rank one
        let col = random(20, 1, 4);
        let xi = DMatrix::from_fn(20, 5, |i, k| col[(i, 0)] * (k + 1) as f64);
        let (_, b) = pca_basis(&xi, 1.0).unwrap();
        assert_eq!(b.n_positive, 1);
        assert_eq!(b.n_scores, 1);
    }
}
