use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A discretely observed multivariate path, read as the piecewise-linear
/// interpolant of its samples.
///
/// Values are stored row-major: sample `j` occupies
/// `values[j * dim..(j + 1) * dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    times: Vec<f64>,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    pub fn new(times: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPath("dimension must be at least 1".into()));
        }
        if times.len() < 2 {
            return Err(Error::InvalidPath(format!(
                "need at least 2 samples, got {}",
                times.len()
            )));
        }
        if values.len() != times.len() * dim {
            return Err(Error::InvalidPath(format!(
                "{} values for {} samples of dimension {}",
                values.len(),
                times.len(),
                dim
            )));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidPath(format!("non-finite time stamp {t}")));
        }
        if let Some(j) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath(format!(
                "time stamps must be strictly increasing (index {} -> {})",
                j,
                j + 1
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPath("non-finite sample value".into()));
        }
        Ok(Self { times, dim, values })
    }

    /// Builds a path from one row per sample.
    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidPath("ragged sample rows".into()));
        }
        Self::new(times, dim, rows.concat())
    }

    /// Samples at `0, 1/(m-1), ..., 1`.
    pub fn uniform(dim: usize, values: Vec<f64>) -> Result<Self> {
        let m = if dim == 0 { 0 } else { values.len() / dim };
        let denom = (m.max(2) - 1) as f64;
        let times = (0..m).map(|j| j as f64 / denom).collect();
        Self::new(times, dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Increments `X(t_{j+1}) - X(t_j)` for every segment.
    pub fn increments(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (1..self.len()).map(move |j| {
            self.sample(j)
                .iter()
                .zip(self.sample(j - 1))
                .map(|(b, a)| b - a)
                .collect()
        })
    }

    /// Keeps the first `m` samples.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        let m = m.min(self.len());
        Self::new(
            self.times[..m].to_vec(),
            self.dim,
            self.values[..m * self.dim].to_vec(),
        )
    }

    /// Samples `from..to` (half-open) as a new path.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(Error::InvalidArgument(format!(
                "bad slice {from}..{to} of a {}-sample path",
                self.len()
            )));
        }
        Self::new(
            self.times[from..to].to_vec(),
            self.dim,
            self.values[from * self.dim..to * self.dim].to_vec(),
        )
    }

    /// Adds `shift` to every sample.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "shift of length {} for a {}-dimensional path",
                shift.len(),
                self.dim
            )));
        }
        let values = self
            .values
            .chunks(self.dim)
            .flat_map(|row| row.iter().zip(shift).map(|(v, s)| v + s))
            .collect();
        Self::new(self.times.clone(), self.dim, values)
    }

    /// Same samples, new time stamps.
    pub fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        Self::new(times, self.dim, self.values.clone())
    }
}

/// Prepends a zero sample at `t_0 - (t_1 - t_0)`.
///
/// Unconditional: a path that already starts at the origin still gets the
/// extra sample.
pub fn basepoint_augment(x: &Path) -> Path {
    let gap = x.times[1] - x.times[0];
    let mut times = Vec::with_capacity(x.len() + 1);
    times.push(x.times[0] - gap);
    times.extend_from_slice(&x.times);
    let mut values = vec![0.0; x.dim];
    values.extend_from_slice(&x.values);
    Path {
        times,
        dim: x.dim,
        values,
    }
}

/// Appends time, affinely rescaled to `[0, 1]`, as a final coordinate.
pub fn time_augment(x: &Path) -> Path {
    let t0 = x.times[0];
    let span = x.times[x.len() - 1] - t0;
    let dim = x.dim + 1;
    let mut values = Vec::with_capacity(x.len() * dim);
    for (j, t) in x.times.iter().enumerate() {
        values.extend_from_slice(x.sample(j));
        values.push((t - t0) / span);
    }
    Path {
        times: x.times.clone(),
        dim,
        values,
    }
}

/// Which invariance-breaking augmentations to apply before taking signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augment {
    pub basepoint: bool,
    pub time: bool,
}

impl Default for Augment {
    fn default() -> Self {
        Self {
            basepoint: true,
            time: true,
        }
    }
}

impl Augment {
    pub const NONE: Augment = Augment {
        basepoint: false,
        time: false,
    };

    /// Basepoint first (on the raw time axis), then time.
    pub fn apply(&self, x: &Path) -> Path {
        let x = if self.basepoint {
            basepoint_augment(x)
        } else {
            x.clone()
        };
        if self.time {
            time_augment(&x)
        } else {
            x
        }
    }

    /// Dimension of the augmented path.
    pub fn output_dim(&self, dim: usize) -> usize {
        dim + usize::from(self.time)
    }
}
