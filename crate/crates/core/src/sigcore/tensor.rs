use crate::error::{Error, Result};

/// Truncated element of the tensor algebra over `R^dim`.
///
/// Level `d` is a dense array of `dim^d` coefficients indexed by words in
/// base `dim`: the word `(i_1, ..., i_d)` (zero-based letters) lives at
/// `i_1 * dim^(d-1) + ... + i_d`, which is lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeq {
    dim: usize,
    order: usize,
    levels: Vec<Vec<f64>>,
}

impl TensorSeq {
    /// The unit `(1, 0, 0, ...)`.
    pub fn identity(dim: usize, order: usize) -> Self {
        let mut levels: Vec<Vec<f64>> = (0..=order).map(|d| vec![0.0; dim.pow(d as u32)]).collect();
        levels[0][0] = 1.0;
        Self { dim, order, levels }
    }

    pub fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("tensor sequence needs level 0".into()));
        }
        for (d, level) in levels.iter().enumerate() {
            if level.len() != dim.pow(d as u32) {
                return Err(Error::DimensionMismatch(format!(
                    "level {d} has {} entries, expected {}",
                    level.len(),
                    dim.pow(d as u32)
                )));
            }
        }
        Ok(Self {
            dim,
            order: levels.len() - 1,
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn level(&self, d: usize) -> &[f64] {
        &self.levels[d]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Coefficient of a word of zero-based letters.
    pub fn coeff(&self, word: &[usize]) -> f64 {
        let idx = word.iter().fold(0, |acc, &i| acc * self.dim + i);
        self.levels[word.len()][idx]
    }

    /// Multiplies in place by the signature of a linear segment with the
    /// given increment, i.e. `self <- self ⊗ exp(increment)`, using a Horner
    /// scheme. Equivalent to `chen_concat(self, segment_signature(increment))`.
    pub fn extend_by_segment(&mut self, increment: &[f64]) {
        debug_assert_eq!(increment.len(), self.dim);
        let s0 = self.levels[0][0];
        let mut acc = Vec::new();
        let mut next = Vec::new();
        for d in (1..=self.order).rev() {
            let inv = 1.0 / d as f64;
            acc.clear();
            acc.extend(increment.iter().map(|a| s0 * a * inv));
            for j in 1..d {
                let scale = 1.0 / (d - j) as f64;
                for (a, s) in acc.iter_mut().zip(&self.levels[j]) {
                    *a += s;
                }
                next.clear();
                next.reserve(acc.len() * self.dim);
                for &a in &acc {
                    let a = a * scale;
                    next.extend(increment.iter().map(|b| a * b));
                }
                std::mem::swap(&mut acc, &mut next);
            }
            for (s, a) in self.levels[d].iter_mut().zip(&acc) {
                *s += a;
            }
        }
    }
}

/// Signature of a straight segment: level `d` is `increment^{⊗d} / d!`.
pub fn segment_signature(increment: &[f64], order: usize) -> TensorSeq {
    let dim = increment.len();
    let mut levels = Vec::with_capacity(order + 1);
    levels.push(vec![1.0]);
    for d in 1..=order {
        let prev: &Vec<f64> = &levels[d - 1];
        let inv = 1.0 / d as f64;
        let mut level = Vec::with_capacity(prev.len() * dim);
        for &u in prev {
            level.extend(increment.iter().map(|a| u * a * inv));
        }
        levels.push(level);
    }
    TensorSeq { dim, order, levels }
}

/// Truncated tensor product: level `d` is `Σ_j left_j ⊗ right_{d-j}`.
pub fn chen_concat(left: &TensorSeq, right: &TensorSeq) -> Result<TensorSeq> {
    if left.dim != right.dim || left.order != right.order {
        return Err(Error::DimensionMismatch(format!(
            "cannot concatenate (dim {}, order {}) with (dim {}, order {})",
            left.dim, left.order, right.dim, right.order
        )));
    }
    let dim = left.dim;
    let mut out = TensorSeq::identity(dim, left.order);
    out.levels[0][0] = left.levels[0][0] * right.levels[0][0];
    for d in 1..=left.order {
        let target = &mut out.levels[d];
        for j in 0..=d {
            let l = &left.levels[j];
            let r = &right.levels[d - j];
            let stride = r.len();
            for (a, &lv) in l.iter().enumerate() {
                if lv == 0.0 {
                    continue;
                }
                let row = &mut target[a * stride..(a + 1) * stride];
                for (t, &rv) in row.iter_mut().zip(r) {
                    *t += lv * rv;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn segment_level_two() {
        let (a, b) = (0.7, -1.3);
        let s = segment_signature(&[a, b], 2);
        assert_eq!(s.level(0), &[1.0]);
        assert_eq!(s.level(1), &[a, b]);
        let want = [a * a / 2.0, a * b / 2.0, a * b / 2.0, b * b / 2.0];
        for (g, w) in s.level(2).iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_segment_is_identity() {
        let s = segment_signature(&[0.0, 0.0, 0.0], 3);
        assert_eq!(s, TensorSeq::identity(3, 3));
    }

    #[test]
    fn unit_segment_factorials() {
        let s = segment_signature(&[1.0], 4);
        let got: Vec<f64> = s.levels().iter().map(|l| l[0]).collect();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn identity_is_neutral() {
        let s = segment_signature(&[0.3, -0.2], 3);
        let id = TensorSeq::identity(2, 3);
        assert_eq!(chen_concat(&id, &s).unwrap(), s);
        assert_eq!(chen_concat(&s, &id).unwrap(), s);
    }

    #[test]
    fn one_dimensional_concat_adds_increments() {
        let (a, b) = (0.4, 1.1);
        let c = chen_concat(&segment_signature(&[a], 2), &segment_signature(&[b], 2)).unwrap();
        assert_abs_diff_eq!(c.level(1)[0], a + b, epsilon = 1e-15);
        assert_abs_diff_eq!(c.level(2)[0], (a + b).powi(2) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn planar_l_shape_area_terms() {
        // (0,0) -> (1,0) -> (1,1)
        let c = chen_concat(
            &segment_signature(&[1.0, 0.0], 2),
            &segment_signature(&[0.0, 1.0], 2),
        )
        .unwrap();
        assert_abs_diff_eq!(c.coeff(&[0, 1]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.coeff(&[1, 0]), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn mismatch_is_rejected() {
        let a = TensorSeq::identity(2, 3);
        assert!(chen_concat(&a, &TensorSeq::identity(3, 3)).is_err());
        assert!(chen_concat(&a, &TensorSeq::identity(2, 2)).is_err());
    }

    #[test]
    fn horner_matches_concat() {
        let mut s = segment_signature(&[0.2, -0.5, 0.9], 4);
        let inc = [1.5, 0.25, -0.75];
        let want = chen_concat(&s, &segment_signature(&inc, 4)).unwrap();
        s.extend_by_segment(&inc);
        for d in 0..=4 {
            for (g, w) in s.level(d).iter().zip(want.level(d)) {
                assert_abs_diff_eq!(*g, *w, epsilon = 1e-14);
            }
        }
    }
}
