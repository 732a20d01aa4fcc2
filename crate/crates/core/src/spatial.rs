//! Spatial weights, log-determinants of `I - rho W`, and site partitions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Hessenberg};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots below this magnitude mark `I - rho W` as singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;

/// Interior guard for every rho search: `[-1 + RHO_GUARD, 1 - RHO_GUARD]`.
pub const RHO_GUARD: f64 = 1e-6;

pub const RHO_MIN: f64 = -1.0 + RHO_GUARD;
pub const RHO_MAX: f64 = 1.0 - RHO_GUARD;

/// Planar site locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    points: Vec<[f64; 2]>,
}

impl Coordinates {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite coordinate".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    fn dist2(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.points[i], self.points[j]);
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
    }
}

/// Dense `n x n` spatial weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    /// Accepts any square matrix with a zero diagonal and nonnegative entries.
    pub fn from_dense(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix is {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Data("weights must be finite and nonnegative".into()));
        }
        if (0..entries.nrows()).any(|i| entries[(i, i)] != 0.0) {
            return Err(Error::Data("weight matrix diagonal must be zero".into()));
        }
        Ok(Self { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.entries * y
    }

    /// Nonzero entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.entries[(i, j)];
                if w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j, w) in triplets {
            if i >= n || j >= n {
                return Err(Error::Data(format!(
                    "weight entry ({i}, {j}) outside a {n}-site matrix"
                )));
            }
            m[(i, j)] = w;
        }
        Self::from_dense(m)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }

    /// Sub-matrix over `sites` (in the given order), each nonzero row rescaled
    /// to sum to one. Rows whose neighbours all fall outside `sites` stay zero.
    pub fn restrict(&self, sites: &[usize]) -> WeightMatrix {
        let m = sites.len();
        let mut sub = DMatrix::zeros(m, m);
        for (a, &i) in sites.iter().enumerate() {
            for (b, &j) in sites.iter().enumerate() {
                sub[(a, b)] = self.entries[(i, j)];
            }
            let s: f64 = sub.row(a).sum();
            if s > 0.0 {
                for b in 0..m {
                    sub[(a, b)] /= s;
                }
            }
        }
        WeightMatrix { entries: sub }
    }

    /// `I - rho W`.
    pub fn system(&self, rho: f64) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::identity(n, n) - &self.entries * rho
    }

    /// Solves `(I - rho W) y = rhs`.
    pub fn solve_system(&self, rho: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let lu = self.system(rho).lu();
        let u = lu.u();
        if u.diagonal().iter().any(|d| d.abs() < SINGULAR_PIVOT) {
            return Err(Error::Singular { rho });
        }
        lu.solve(rhs).ok_or(Error::Singular { rho })
    }
}

/// Row-normalized k-nearest-neighbour weights: `1/k` on each of the `k`
/// closest other sites. Distance ties go to the lower site index.
pub fn knn_weights(coords: &Coordinates, k: usize) -> Result<WeightMatrix> {
    let n = coords.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k >= n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} needs more than {n} sites"
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    let w = 1.0 / k as f64;
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        // stable sort keeps lower indices first among equal distances
        order.sort_by(|&a, &b| coords.dist2(i, a).total_cmp(&coords.dist2(i, b)));
        for &j in &order[..k] {
            m[(i, j)] = w;
        }
    }
    Ok(WeightMatrix { entries: m })
}

/// `ln det(I - rho W)` from a dense LU factorization.
///
/// Fails on a (numerically) singular system and, separately, on a negative
/// determinant: the quasi-likelihood needs the log of the determinant
/// itself, not of its absolute value.
pub fn log_det_factor(w: &WeightMatrix, rho: f64) -> Result<f64> {
    if rho == 0.0 {
        return Ok(0.0);
    }
    let lu = w.system(rho).lu();
    let mut sign = lu.p().determinant::<f64>();
    let mut acc = 0.0;
    for d in lu.u().diagonal().iter() {
        if d.abs() < SINGULAR_PIVOT || !d.is_finite() {
            return Err(Error::Singular { rho });
        }
        if *d < 0.0 {
            sign = -sign;
        }
        acc += d.abs().ln();
    }
    if sign < 0.0 {
        return Err(Error::NegativeDeterminant { rho });
    }
    Ok(acc)
}

/// `ln det(I - rho W)` through a one-time Hessenberg reduction
/// `W = Q H Qᵀ`: since `det(I - rho W) = det(I - rho H)`, every evaluation
/// is an `O(n²)` pivoted elimination on a Hessenberg matrix instead of a
/// fresh `O(n³)` factorization.
///
/// Agrees with [`log_det_factor`] to rounding, with the same singular and
/// negative-determinant failures; used inside rho searches where the same
/// `W` is evaluated hundreds of times. Evaluations share no mutable state.
#[derive(Debug, Clone)]
pub struct HessenbergLogDet {
    h: DMatrix<f64>,
}

impl HessenbergLogDet {
    pub fn new(w: &WeightMatrix) -> Self {
        let h = if w.n() == 0 {
            DMatrix::zeros(0, 0)
        } else {
            Hessenberg::new(w.matrix().clone()).h()
        };
        Self { h }
    }

    pub fn eval(&self, rho: f64) -> Result<f64> {
        if rho == 0.0 {
            return Ok(0.0);
        }
        let n = self.h.nrows();
        let mut a = -rho * &self.h;
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let mut negative = false;
        let mut acc = 0.0;
        for k in 0..n {
            if k + 1 < n && a[(k + 1, k)].abs() > a[(k, k)].abs() {
                a.swap_rows(k, k + 1);
                negative = !negative;
            }
            let pivot = a[(k, k)];
            if pivot.abs() < SINGULAR_PIVOT || !pivot.is_finite() {
                return Err(Error::Singular { rho });
            }
            if pivot < 0.0 {
                negative = !negative;
            }
            acc += pivot.abs().ln();
            if k + 1 < n {
                let l = a[(k + 1, k)] / pivot;
                if l != 0.0 {
                    for j in k + 1..n {
                        let v = a[(k, j)];
                        a[(k + 1, j)] -= l * v;
                    }
                }
            }
        }
        if negative {
            return Err(Error::NegativeDeterminant { rho });
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitLabel::Train => "train",
            SplitLabel::Validation => "validation",
            SplitLabel::Test => "test",
        })
    }
}

impl FromStr for SplitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(SplitLabel::Train),
            "validation" => Ok(SplitLabel::Validation),
            "test" => Ok(SplitLabel::Test),
            other => Err(Error::Data(format!("unknown split label {other:?}"))),
        }
    }
}

/// Per-site train / validation / test labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    labels: Vec<SplitLabel>,
}

impl SplitAssignment {
    pub fn new(labels: Vec<SplitLabel>) -> Result<Self> {
        let s = Self { labels };
        for l in [SplitLabel::Train, SplitLabel::Validation, SplitLabel::Test] {
            if s.indices(l).is_empty() {
                return Err(Error::Data(format!("split has no {l} sites")));
            }
        }
        Ok(s)
    }

    pub fn labels(&self) -> &[SplitLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices(&self, label: SplitLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (
            self.indices(SplitLabel::Train).len(),
            self.indices(SplitLabel::Validation).len(),
            self.indices(SplitLabel::Test).len(),
        )
    }
}

/// Uniformly random partition with the given fractions. Validation and test
/// sizes are rounded to the nearest integer; train takes the remainder.
pub fn ordinary_split(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let (ft, fv, fs) = fractions;
    if ft <= 0.0 || fv <= 0.0 || fs <= 0.0 || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got ({ft}, {fv}, {fs})"
        )));
    }
    let n_val = (n as f64 * fv).round() as usize;
    let n_test = (n as f64 * fs).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "fractions ({ft}, {fv}, {fs}) leave an empty part for n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![SplitLabel::Train; n];
    for &i in &order[..n_val] {
        labels[i] = SplitLabel::Validation;
    }
    for &i in &order[n_val..n_val + n_test] {
        labels[i] = SplitLabel::Test;
    }
    SplitAssignment::new(labels)
}

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-8;
const KMEANS_RESTARTS: usize = 10;

/// Lloyd's K-means on the coordinates.
///
/// Returns cluster ids in `0..k`. Initial centroids are `k` distinct sites
/// drawn with `rng`; an empty cluster is re-seeded at the site farthest from
/// its current centroid.
pub fn kmeans(coords: &Coordinates, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = coords.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "K = {k} clusters for {n} sites"
        )));
    }
    let pts = coords.points();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let init: Vec<[f64; 2]> = rand::seq::index::sample(rng, n, k)
            .into_iter()
            .map(|i| pts[i])
            .collect();
        let (inertia, assign) = lloyd(pts, init);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// One Lloyd run from the given centroids; returns the within-cluster sum
/// of squares and the assignment.
fn lloyd(pts: &[[f64; 2]], mut centroids: Vec<[f64; 2]>) -> (f64, Vec<usize>) {
    let n = pts.len();
    let k = centroids.len();
    let mut assign = vec![0usize; n];
    let d2 = |p: [f64; 2], c: [f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);

    let assign_all = |centroids: &[[f64; 2]], assign: &mut [usize]| {
        for (i, p) in pts.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = d2(*p, *cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }
    };

    // Moves the farthest site into each empty cluster.
    let repair = |centroids: &mut [[f64; 2]], assign: &mut [usize]| {
        loop {
            let mut counts = vec![0usize; k];
            for &a in assign.iter() {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let far = (0..n)
                .filter(|&i| counts[assign[i]] > 1)
                .max_by(|&a, &b| {
                    d2(pts[a], centroids[assign[a]])
                        .total_cmp(&d2(pts[b], centroids[assign[b]]))
                        .then(b.cmp(&a))
                })
                .expect("k <= n leaves a donor cluster");
            centroids[empty] = pts[far];
            assign[far] = empty;
        }
    };

    for _ in 0..KMEANS_MAX_ITER {
        assign_all(&centroids, &mut assign);
        repair(&mut centroids, &mut assign);
        let mut sums = vec![[0.0f64; 3]; k];
        for (i, p) in pts.iter().enumerate() {
            let s = &mut sums[assign[i]];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += 1.0;
        }
        let mut shift: f64 = 0.0;
        for (c, s) in centroids.iter_mut().zip(&sums) {
            let next = [s[0] / s[2], s[1] / s[2]];
            shift = shift.max(d2(*c, next).sqrt());
            *c = next;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    assign_all(&centroids, &mut assign);
    repair(&mut centroids, &mut assign);
    let inertia = pts.iter().zip(&assign).map(|(p, &a)| d2(*p, centroids[a])).sum();
    (inertia, assign)
}

/// Spatial split: K-means clusters, two of which (drawn at random) become
/// the validation and test sets.
pub fn kmeans_split(coords: &Coordinates, k: usize, seed: u64) -> Result<SplitAssignment> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!(
            "spatial split needs K >= 3, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = kmeans(coords, k, &mut rng)?;
    let picked = rand::seq::index::sample(&mut rng, k, 2);
    let (val, test) = (picked.index(0), picked.index(1));
    let labels = clusters
        .iter()
        .map(|&c| {
            if c == val {
                SplitLabel::Validation
            } else if c == test {
                SplitLabel::Test
            } else {
                SplitLabel::Train
            }
        })
        .collect();
    SplitAssignment::new(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(n: usize) -> Coordinates {
        Coordinates::new((0..n).map(|i| [i as f64, 0.0]).collect()).unwrap()
    }

    #[test]
    fn knn_three_collinear() {
        let w = knn_weights(&line(3), 1).unwrap();
        let m = w.matrix();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert_eq!(m.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        assert_eq!(m.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn knn_all_neighbours_is_uniform() {
        let n = 5;
        let w = knn_weights(&line(n), n - 1).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 0.0 } else { 0.25 };
                assert_eq!(w.matrix()[(i, j)], want);
            }
        }
    }

    #[test]
    fn knn_rejects_large_k() {
        assert!(knn_weights(&line(4), 4).is_err());
        assert!(knn_weights(&line(4), 0).is_err());
    }

    #[test]
    fn knn_duplicate_sites_tie_break_low_index() {
        let c = Coordinates::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let w = knn_weights(&c, 1).unwrap();
        assert_eq!(w.matrix()[(0, 1)], 1.0);
        assert_eq!(w.matrix()[(3, 1)], 1.0);
        assert_eq!(w.matrix()[(1, 2)], 1.0);
    }

    #[test]
    fn log_det_zero_rho() {
        let w = knn_weights(&line(6), 2).unwrap();
        assert_eq!(log_det_factor(&w, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn log_det_two_by_two() {
        let w = WeightMatrix::from_dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(log_det_factor(&w, 0.5).unwrap(), 0.75f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(
            HessenbergLogDet::new(&w).eval(0.5).unwrap(),
            0.75f64.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_det_fails_at_unit_rho() {
        let w = knn_weights(&line(6), 2).unwrap();
        assert!(matches!(log_det_factor(&w, 1.0), Err(Error::Singular { .. })));
        assert!(log_det_factor(&w, RHO_MAX).is_ok());
        assert!(log_det_factor(&w, RHO_MIN).is_ok());
    }

    #[test]
    fn log_det_negative_is_distinct() {
        let w = WeightMatrix::from_dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
            .unwrap();
        // det(I - 2W) = 1 - 4 < 0
        assert!(matches!(log_det_factor(&w, 2.0), Err(Error::NegativeDeterminant { .. })));
        assert!(matches!(
            HessenbergLogDet::new(&w).eval(2.0),
            Err(Error::NegativeDeterminant { .. })
        ));
    }

    #[test]
    fn restrict_renormalizes() {
        let w = knn_weights(&line(5), 2).unwrap();
        let sub = w.restrict(&[0, 1, 4]);
        for (i, s) in sub.row_sums().iter().enumerate() {
            // site 4's neighbours are 2 and 3, both dropped
            let want = if i == 2 { 0.0 } else { 1.0 };
            assert_abs_diff_eq!(*s, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn ordinary_sizes() {
        assert_eq!(ordinary_split(10, (0.6, 0.2, 0.2), 1).unwrap().sizes(), (6, 2, 2));
        assert_eq!(ordinary_split(200, (0.5, 0.25, 0.25), 9).unwrap().sizes(), (100, 50, 50));
        assert_eq!(
            ordinary_split(50, (0.5, 0.25, 0.25), 3).unwrap(),
            ordinary_split(50, (0.5, 0.25, 0.25), 3).unwrap()
        );
        assert!(ordinary_split(3, (0.8, 0.1, 0.1), 0).is_err());
        assert!(ordinary_split(10, (0.5, 0.5, 0.5), 0).is_err());
    }

    #[test]
    fn kmeans_separable_blobs() {
        let mut pts = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)] {
            for i in 0..10 {
                pts.push([cx + (i % 3) as f64, cy + (i / 3) as f64]);
            }
        }
        let c = Coordinates::new(pts).unwrap();
        for seed in 0..5 {
            let s = kmeans_split(&c, 3, seed).unwrap();
            for blob in s.labels().chunks(10) {
                assert!(blob.iter().all(|l| *l == blob[0]));
            }
            assert_eq!(s, kmeans_split(&c, 3, seed).unwrap());
        }
    }

    #[test]
    fn kmeans_repairs_empty_clusters() {
        // duplicates force empty clusters when initial centroids coincide
        let c = Coordinates::new(vec![[0.0, 0.0]; 6].into_iter().chain([[5.0, 5.0]]).collect())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = kmeans(&c, 3, &mut rng).unwrap();
        for cl in 0..3 {
            assert!(a.contains(&cl));
        }
    }
}
