//! Synthetic SAR datasets with path covariates.
//!
//! Model 1 paths are `α t + f(t)` per coordinate, `α ~ U[-3, 3]` and `f` a
//! centred Gaussian process with covariance `exp(-|s - t|)`. Model 2 paths
//! are `β₁ t + 10 β₂ sin(2πt / β₃) + 10 (t - β₄)³` with `β_j ~ U[0, 1]`.
//! In both, `Y = (I - ρ* W)⁻¹ (m + ε)` where `m_i` is the coordinate mean of
//! path `i` at the last time and `ε ~ N(0, I)`. Estimators only see the
//! samples before the last one.

use std::f64::consts::PI;
use std::path::Path as FsPath;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::SarDataset;
use crate::error::{Error, Result};
use crate::sigcore::Path;
use crate::spatial::{knn_weights, Coordinates, WeightMatrix};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-10;

/// Independent random streams derived from one dataset seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sites = 1,
    Slopes = 2,
    Gp = 3,
    Betas = 4,
    Noise = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of replicate `r` under a master seed (splitmix64 finalizer).
pub fn replicate_seed(master: u64, r: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(r.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Model {
    One,
    Two,
}

impl TryFrom<u8> for Model {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Model::One),
            2 => Ok(Model::Two),
            _ => Err(format!("model must be 1 or 2, got {v}")),
        }
    }
}

impl From<Model> for u8 {
    fn from(m: Model) -> u8 {
        match m {
            Model::One => 1,
            Model::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub rho_star: f64,
    pub k: usize,
    pub grid_side: usize,
    /// Time points per generated path; estimators see the first `m - 1`.
    pub m: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            model: Model::One,
            n: 200,
            p: 2,
            rho_star: 0.4,
            k: 4,
            grid_side: 60,
            m: 101,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_star.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!("|rho*| must be < 1, got {}", self.rho_star)));
        }
        if self.p == 0 || self.m < 3 || self.n < 3 {
            return Err(Error::InvalidArgument(format!(
                "need p >= 1, m >= 3, n >= 3; got p = {}, m = {}, n = {}",
                self.p, self.m, self.n
            )));
        }
        if self.k == 0 || self.k >= self.n {
            return Err(Error::InvalidArgument(format!("k = {} with n = {}", self.k, self.n)));
        }
        Ok(())
    }
}

/// Generating quantities kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub rho_star: f64,
    /// Paths with all `m` samples.
    pub full_paths: Vec<Path>,
    /// `m_i`: coordinate mean at the last time point.
    pub mean_term: DVector<f64>,
    pub noise: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub config: SimConfig,
    pub data: SarDataset,
    pub truth: Truth,
}

impl SimDataset {
    /// `max |Y - ρ* W Y - m - ε|`.
    pub fn residual(&self) -> f64 {
        let y = &self.data.y;
        let r = y - self.data.w.mul_vec(y) * self.truth.rho_star - &self.truth.mean_term - &self.truth.noise;
        r.amax()
    }

    /// Writes the CSV files plus `meta.toml` holding the configuration.
    pub fn write_dir(&self, dir: &FsPath) -> Result<()> {
        self.data.write_dir(dir)?;
        std::fs::write(dir.join("meta.toml"), toml::to_string(&self.config)?)?;
        Ok(())
    }
}

/// `n` distinct cells of a `side x side` grid, as integer coordinates.
pub fn sample_sites(grid_side: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Coordinates> {
    let cells = grid_side
        .checked_mul(grid_side)
        .ok_or_else(|| Error::InvalidArgument("grid too large".into()))?;
    if n > cells {
        return Err(Error::InvalidArgument(format!(
            "{n} sites do not fit a {grid_side}x{grid_side} grid"
        )));
    }
    let mut picked = rand::seq::index::sample(rng, cells, n).into_vec();
    if n == cells {
        picked.sort_unstable();
    }
    Coordinates::new(
        picked
            .into_iter()
            .map(|c| [(c % grid_side) as f64, (c / grid_side) as f64])
            .collect(),
    )
}

/// Equally spaced times on `[0, 1]`.
pub fn unit_times(m: usize) -> Vec<f64> {
    (0..m).map(|j| j as f64 / (m - 1) as f64).collect()
}

/// Sampler for a centred Gaussian process with exponential covariance on an
/// equally spaced grid of `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ExpGp {
    factor: DMatrix<f64>,
}

impl ExpGp {
    pub fn new(m: usize, length_scale: f64) -> Result<Self> {
        if m < 2 || !(length_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "GP needs m >= 2 and a positive length scale, got {m}, {length_scale}"
            )));
        }
        let t = unit_times(m);
        let cov = DMatrix::from_fn(m, m, |i, j| (-(t[i] - t[j]).abs() / length_scale).exp());
        let mut jitter = JITTER_START;
        loop {
            let mut c = cov.clone();
            for i in 0..m {
                c[(i, i)] += jitter;
            }
            if let Some(ch) = c.cholesky() {
                return Ok(Self { factor: ch.unpack() });
            }
            jitter *= 10.0;
            if jitter > JITTER_MAX * (1.0 + 1e-9) {
                return Err(Error::Data("GP covariance factorization failed at maximum jitter".into()));
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.factor * z
    }
}

/// One draw of the exponential GP on `m` points.
pub fn gp_exponential(m: usize, length_scale: f64, seed: u64) -> Result<Vec<f64>> {
    let gp = ExpGp::new(m, length_scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gp.sample(&mut rng).iter().copied().collect())
}

/// Model 1 paths. `gp = None` drops the Gaussian-process term.
pub fn gen_model1_paths(
    n: usize,
    p: usize,
    m: usize,
    slopes: &mut ChaCha8Rng,
    gp: Option<(&ExpGp, &mut ChaCha8Rng)>,
) -> Result<Vec<Path>> {
    let t = unit_times(m);
    let uniform = Uniform::new_inclusive(-3.0, 3.0).expect("valid bounds");
    let mut gp = gp;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut values = vec![0.0; m * p];
        for k in 0..p {
            let a: f64 = slopes.sample(uniform);
            let f = gp.as_mut().map(|(g, rng)| g.sample(rng));
            for j in 0..m {
                values[j * p + k] = a * t[j] + f.as_ref().map_or(0.0, |f| f[j]);
            }
        }
        out.push(Path::new(t.clone(), p, values)?);
    }
    Ok(out)
}

/// `β₁ t + 10 β₂ sin(2πt / β₃) + 10 (t - β₄)³`.
pub fn model2_value(beta: [f64; 4], t: f64) -> f64 {
    beta[0] * t + 10.0 * beta[1] * (2.0 * PI * t / beta[2]).sin() + 10.0 * (t - beta[3]).powi(3)
}

pub fn draw_model2_beta(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let mut b: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
    while b[2] < 1e-6 {
        b[2] = rng.random();
    }
    b
}

pub fn gen_model2_paths(n: usize, p: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Path>> {
    let t = unit_times(m);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut values = vec![0.0; m * p];
        for k in 0..p {
            let beta = draw_model2_beta(rng);
            for j in 0..m {
                values[j * p + k] = model2_value(beta, t[j]);
            }
        }
        out.push(Path::new(t.clone(), p, values)?);
    }
    Ok(out)
}

/// Solves `Y = ρ* W Y + m + ε` directly and checks the residual.
pub fn gen_response(w: &WeightMatrix, mean_term: &DVector<f64>, rho_star: f64, noise: &DVector<f64>) -> Result<DVector<f64>> {
    if !(rho_star.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|rho*| must be < 1, got {rho_star}")));
    }
    let rhs = mean_term + noise;
    let y = w.solve_system(rho_star, &rhs)?;
    let resid = (&y - w.mul_vec(&y) * rho_star - rhs).amax();
    if !(resid < RESIDUAL_TOL) {
        return Err(Error::Data(format!("simultaneous equation residual {resid:e}")));
    }
    Ok(y)
}

/// Coordinate mean of each path at its last sample.
pub fn terminal_means(paths: &[Path]) -> DVector<f64> {
    DVector::from_iterator(
        paths.len(),
        paths.iter().map(|p| {
            let last = p.sample(p.len() - 1);
            last.iter().sum::<f64>() / last.len() as f64
        }),
    )
}

pub fn simulate(config: &SimConfig) -> Result<SimDataset> {
    config.validate()?;
    let seed = config.seed;
    let coords = sample_sites(config.grid_side, config.n, &mut stream_rng(seed, Stream::Sites))?;
    let w = knn_weights(&coords, config.k)?;
    let full_paths = match config.model {
        Model::One => {
            let gp = ExpGp::new(config.m, 1.0)?;
            let mut gp_rng = stream_rng(seed, Stream::Gp);
            gen_model1_paths(
                config.n,
                config.p,
                config.m,
                &mut stream_rng(seed, Stream::Slopes),
                Some((&gp, &mut gp_rng)),
            )?
        }
        Model::Two => gen_model2_paths(config.n, config.p, config.m, &mut stream_rng(seed, Stream::Betas))?,
    };
    let mean_term = terminal_means(&full_paths);
    let mut noise_rng = stream_rng(seed, Stream::Noise);
    let noise = DVector::from_fn(config.n, |_, _| noise_rng.sample::<f64, _>(StandardNormal));
    let y = gen_response(&w, &mean_term, config.rho_star, &noise)?;
    let paths = full_paths
        .iter()
        .map(|p| p.truncated(config.m - 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimDataset {
        config: config.clone(),
        data: SarDataset::new(coords, w, paths, y)?,
        truth: Truth {
            rho_star: config.rho_star,
            full_paths,
            mean_term,
            noise,
        },
    })
}
