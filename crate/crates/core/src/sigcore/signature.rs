use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::path::{Augment, Path};
use super::tensor::TensorSeq;
use crate::error::{Error, Result};

/// Number of words of length `1..=order` over an alphabet of `dim` letters.
pub fn sig_length(dim: usize, order: usize) -> Result<usize> {
    if dim == 0 || order == 0 {
        return Err(Error::InvalidArgument(format!(
            "signature length needs dim >= 1 and order >= 1 (got {dim}, {order})"
        )));
    }
    let overflow = || Error::Overflow { dim, order };
    let mut total: usize = 0;
    let mut block: usize = 1;
    for _ in 0..order {
        block = block.checked_mul(dim).ok_or_else(overflow)?;
        total = total.checked_add(block).ok_or_else(overflow)?;
    }
    Ok(total)
}

/// Truncated shifted-signature coefficients: levels `1..=order` flattened
/// in word order (all length-1 words, then length-2 words lexicographically,
/// and so on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigVector {
    pub dim: usize,
    pub order: usize,
    pub coeffs: Vec<f64>,
}

impl SigVector {
    pub fn from_tensor(t: &TensorSeq) -> Self {
        let coeffs = t.levels()[1..].concat();
        Self {
            dim: t.dim(),
            order: t.order(),
            coeffs,
        }
    }

    /// Coefficient of a word of one-based letters, as written in the
    /// literature: `(1, 2)` is the first letter followed by the second.
    pub fn coeff(&self, word: &[usize]) -> f64 {
        self.coeffs[word_index(self.dim, word)]
    }

    /// Lower-order vector; a prefix of the coefficients.
    pub fn truncate(&self, order: usize) -> Result<Self> {
        if order == 0 || order > self.order {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate order {} to {order}",
                self.order
            )));
        }
        let len = sig_length(self.dim, order)?;
        Ok(Self {
            dim: self.dim,
            order,
            coeffs: self.coeffs[..len].to_vec(),
        })
    }
}

/// Flattened position of a one-based word.
pub fn word_index(dim: usize, word: &[usize]) -> usize {
    let offset: usize = (1..word.len()).map(|d| dim.pow(d as u32)).sum();
    offset + word.iter().fold(0, |acc, &i| acc * dim + (i - 1))
}

/// Full truncated signature, level 0 included.
pub fn signature_tensor(x: &Path, order: usize) -> Result<TensorSeq> {
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidPath("need at least one increment".into()));
    }
    sig_length(x.dim(), order)?;
    let mut sig = TensorSeq::identity(x.dim(), order);
    for inc in x.increments() {
        sig.extend_by_segment(&inc);
    }
    Ok(sig)
}

/// Truncated shifted signature of the polyline through the samples of `x`.
pub fn signature(x: &Path, order: usize) -> Result<SigVector> {
    let v = SigVector::from_tensor(&signature_tensor(x, order)?);
    if v.coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!(
            "signature coefficients overflowed at order {order}"
        )));
    }
    Ok(v)
}

/// Stacks `signature(augment(x_i), order)` as rows.
pub fn build_design_matrix(paths: &[Path], order: usize, augment: Augment) -> Result<DMatrix<f64>> {
    let first = paths
        .first()
        .ok_or_else(|| Error::InvalidArgument("no paths".into()))?;
    let dim = first.dim();
    if let Some((i, p)) = paths.iter().enumerate().find(|(_, p)| p.dim() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "path {i} has dimension {}, path 0 has {dim}",
            p.dim()
        )));
    }
    let cols = sig_length(augment.output_dim(dim), order)?;
    let mut xi = DMatrix::zeros(paths.len(), cols);
    for (i, p) in paths.iter().enumerate() {
        let s = signature(&augment.apply(p), order)?;
        for (j, c) in s.coeffs.iter().enumerate() {
            xi[(i, j)] = *c;
        }
    }
    Ok(xi)
}
