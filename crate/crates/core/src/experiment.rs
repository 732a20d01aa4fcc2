//! Run manifests and the benchmark matrix.
//!
//! A run crosses dataset cells (simulation settings, or one user dataset),
//! replicates, validation schemes and estimators. `results.csv` holds only
//! seed-determined quantities so that reruns are byte-identical; wall-clock
//! times go to `timings.csv`, and `summary.csv` joins both.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::SarDataset;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, SarFit};
use crate::selection::{select_and_fit, test_rmse, HyperGrid, SelectionInput, SignatureDesign};
use crate::sigcore::Augment;
use crate::simgen::{replicate_seed, simulate, Model, SimConfig};
use crate::spatial::{kmeans_split, ordinary_split, SplitAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ordinary,
    Kmeans,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ordinary => "ordinary",
            Scheme::Kmeans => "kmeans",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordinary" => Ok(Scheme::Ordinary),
            "kmeans" => Ok(Scheme::Kmeans),
            other => Err(Error::InvalidArgument(format!("unknown split scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub schemes: Vec<Scheme>,
    /// Train, validation and test fractions for ordinary validation.
    pub fractions: [f64; 3],
    /// Cluster count for spatial validation.
    pub kmeans_k: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::Ordinary, Scheme::Kmeans],
            fractions: [0.5, 0.25, 0.25],
            kmeans_k: 6,
        }
    }
}

impl SplitSpec {
    pub fn make(&self, scheme: Scheme, data: &SarDataset, seed: u64) -> Result<SplitAssignment> {
        match scheme {
            Scheme::Ordinary => {
                let [a, b, c] = self.fractions;
                ordinary_split(data.n(), (a, b, c), seed)
            }
            Scheme::Kmeans => kmeans_split(&data.coords, self.kmeans_k, seed),
        }
    }
}

/// Simulation settings; list-valued fields are crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimMatrix {
    pub model: Vec<Model>,
    pub p: Vec<usize>,
    pub rho_star: Vec<f64>,
    pub k: Vec<usize>,
    pub n: usize,
    pub grid_side: usize,
    pub m: usize,
}

impl Default for SimMatrix {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            model: vec![c.model],
            p: vec![c.p],
            rho_star: vec![c.rho_star],
            k: vec![c.k],
            n: c.n,
            grid_side: c.grid_side,
            m: c.m,
        }
    }
}

impl SimMatrix {
    /// Every model, dimension, rho and k of the full simulation study.
    pub fn full_study() -> Self {
        Self {
            model: vec![Model::One, Model::Two],
            p: vec![2, 6, 10],
            rho_star: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            k: vec![4, 8],
            ..Self::default()
        }
    }

    pub fn configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for &model in &self.model {
            for &p in &self.p {
                for &rho_star in &self.rho_star {
                    for &k in &self.k {
                        out.push(SimConfig {
                            model,
                            n: self.n,
                            p,
                            rho_star,
                            k,
                            grid_side: self.grid_side,
                            m: self.m,
                            seed: 0,
                        });
                    }
                }
            }
        }
        out
    }
}

/// A user-supplied dataset directory (see [`crate::data`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub dir: PathBuf,
    /// Neighbour count used when the directory has no `weights.csv`.
    #[serde(default)]
    pub knn: Option<usize>,
}

pub const FULL_REPLICATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub id: String,
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Replace the simulation matrix and replicate count by the full study.
    #[serde(default)]
    pub full_scale: bool,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sim: SimMatrix,
    /// When set, replicates are repeated splits of this dataset instead of
    /// simulations.
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub grid: HyperGrid,
}

fn default_replicates() -> usize {
    20
}

fn default_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

impl RunManifest {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        Self {
            id: id.into(),
            seed,
            replicates: default_replicates(),
            full_scale: false,
            estimators: default_estimators(),
            out: None,
            sim: SimMatrix::default(),
            data: None,
            split: SplitSpec::default(),
            grid: HyperGrid::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m = Self::from_toml(&text)?;
        if let Some(data) = &mut m.data {
            if data.dir.is_relative() {
                if let Some(parent) = path.parent() {
                    data.dir = parent.join(&data.dir);
                }
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Applies `full_scale` and checks the invariants.
    pub fn resolved(&self) -> Result<Self> {
        let mut m = self.clone();
        if m.full_scale {
            m.sim = SimMatrix {
                n: m.sim.n,
                grid_side: m.sim.grid_side,
                m: m.sim.m,
                ..SimMatrix::full_study()
            };
            m.replicates = FULL_REPLICATES;
            m.full_scale = false;
        }
        if m.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if m.estimators.is_empty() || m.split.schemes.is_empty() {
            return Err(Error::InvalidArgument("need at least one estimator and one split scheme".into()));
        }
        if let Some(d) = &m.data {
            if !d.dir.is_dir() {
                return Err(Error::Data(format!("data directory {} does not exist", d.dir.display())));
            }
        } else {
            for c in m.sim.configs() {
                c.validate()?;
            }
        }
        Ok(m)
    }

    /// Dataset cells of the run, in row order.
    pub fn cells(&self) -> Vec<Cell> {
        match &self.data {
            Some(d) => vec![Cell::Data(d.clone())],
            None => self.sim.configs().into_iter().map(Cell::Sim).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Sim(SimConfig),
    Data(DataSource),
}

impl Cell {
    pub fn label(&self) -> String {
        match self {
            Cell::Sim(c) => format!("model{}_p{}_rho{}_k{}", u8::from(c.model), c.p, c.rho_star, c.k),
            Cell::Data(_) => "data".to_string(),
        }
    }

    fn keys(&self) -> (Option<u8>, Option<usize>, Option<f64>, Option<usize>) {
        match self {
            Cell::Sim(c) => (Some(c.model.into()), Some(c.p), Some(c.rho_star), Some(c.k)),
            Cell::Data(_) => (None, None, None, None),
        }
    }
}

/// One (dataset, replicate, scheme, estimator) outcome. Every field is a
/// deterministic function of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: String,
    pub model: Option<u8>,
    pub p: Option<usize>,
    pub rho_star: Option<f64>,
    pub k: Option<usize>,
    pub replicate: usize,
    pub scheme: Scheme,
    pub estimator: Estimator,
    pub order: Option<usize>,
    pub lambda: Option<f64>,
    pub n_scores: Option<usize>,
    pub rho_hat: Option<f64>,
    pub test_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub cell: String,
    pub replicate: usize,
    pub scheme: Scheme,
    pub estimator: Estimator,
    /// Hyperparameter selection plus the final fit.
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub scheme: Scheme,
    pub estimator: Estimator,
    pub n_ok: usize,
    pub n_failed: usize,
    pub rmse_median: Option<f64>,
    pub rmse_q1: Option<f64>,
    pub rmse_q3: Option<f64>,
    pub seconds_median: Option<f64>,
    pub seconds_q1: Option<f64>,
    pub seconds_q3: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn quartiles(mut v: Vec<f64>) -> (Option<f64>, Option<f64>, Option<f64>) {
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.5), quantile(&v, 0.25), quantile(&v, 0.75))
}

/// Median and quartiles of test RMSE (successful rows) and fit time (all
/// rows) per (cell, scheme, estimator), in order of first appearance.
pub fn summarize(results: &[ResultRow], timings: &[TimingRow]) -> Vec<SummaryRow> {
    type Key = (String, Scheme, Estimator);
    let mut order: Vec<Key> = Vec::new();
    let mut rmse: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut failed: BTreeMap<Key, usize> = BTreeMap::new();
    let mut secs: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in results {
        let key = (r.cell.clone(), r.scheme, r.estimator);
        if !rmse.contains_key(&key) {
            order.push(key.clone());
            rmse.insert(key.clone(), Vec::new());
        }
        match (r.test_rmse, &r.error) {
            (Some(v), None) => rmse.get_mut(&key).expect("inserted").push(v),
            _ => *failed.entry(key).or_default() += 1,
        }
    }
    for t in timings {
        secs.entry((t.cell.clone(), t.scheme, t.estimator))
            .or_default()
            .push(t.fit_seconds);
    }
    order
        .into_iter()
        .map(|key| {
            let values = rmse.remove(&key).unwrap_or_default();
            let n_ok = values.len();
            let (rmse_median, rmse_q1, rmse_q3) = quartiles(values);
            let (seconds_median, seconds_q1, seconds_q3) = quartiles(secs.remove(&key).unwrap_or_default());
            SummaryRow {
                n_failed: failed.get(&key).copied().unwrap_or(0),
                cell: key.0,
                scheme: key.1,
                estimator: key.2,
                n_ok,
                rmse_median,
                rmse_q1,
                rmse_q3,
                seconds_median,
                seconds_q1,
                seconds_q3,
            }
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &FsPath, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &FsPath) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        out.push(r?);
    }
    Ok(out)
}

/// Recomputes `summary.csv` from the result and timing files of a run.
pub fn report(run_dir: &FsPath) -> Result<Vec<SummaryRow>> {
    let results: Vec<ResultRow> = read_rows(&run_dir.join("results.csv"))?;
    let timings: Vec<TimingRow> = read_rows(&run_dir.join("timings.csv"))?;
    let summary = summarize(&results, &timings);
    write_rows(&run_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// Writes every simulated replicate of the manifest under
/// `out/<cell>/rep-<r>`; returns the directories.
pub fn simulate_datasets(manifest: &RunManifest, out: &FsPath) -> Result<Vec<PathBuf>> {
    let m = manifest.resolved()?;
    if m.data.is_some() {
        return Err(Error::InvalidArgument("manifest reads a dataset; nothing to simulate".into()));
    }
    let mut dirs = Vec::new();
    for cell in m.cells() {
        let Cell::Sim(cfg) = &cell else { unreachable!() };
        for r in 0..m.replicates {
            let cfg = SimConfig {
                seed: replicate_seed(m.seed, r as u64),
                ..cfg.clone()
            };
            let dir = out.join(cell.label()).join(format!("rep-{r:03}"));
            simulate(&cfg)?.write_dir(&dir)?;
            dirs.push(dir);
        }
    }
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub results: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
    pub summary: Vec<SummaryRow>,
}

/// Split seeds differ per scheme but not per estimator, so every estimator
/// sees the same partition.
fn split_seed(dataset_seed: u64, scheme: Scheme) -> u64 {
    replicate_seed(dataset_seed, 1_000 + scheme as u64)
}

/// Runs the benchmark matrix. Cell failures become rows with an error tag.
/// `progress` receives one line per finished row.
pub fn run_benchmark(manifest: &RunManifest, mut progress: impl FnMut(&str)) -> Result<BenchmarkOutput> {
    let m = manifest.resolved()?;
    let augment = Augment::default();
    let mut results = Vec::new();
    let mut timings = Vec::new();
    let user_data = match &m.data {
        Some(d) => Some(SarDataset::read_dir(&d.dir, d.knn)?),
        None => None,
    };
    for cell in m.cells() {
        let label = cell.label();
        let (model, p, rho_star, k) = cell.keys();
        for r in 0..m.replicates {
            let seed = replicate_seed(m.seed, r as u64);
            let prepared = match &cell {
                Cell::Sim(cfg) => simulate(&SimConfig { seed, ..cfg.clone() }).map(|s| s.data),
                Cell::Data(_) => Ok(user_data.clone().expect("loaded above")),
            }
            .and_then(|data| {
                let design = SignatureDesign::for_grid(&data.paths, &m.grid, augment)?;
                Ok((data, design))
            });
            for &scheme in &m.split.schemes {
                let split = prepared
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|(data, _)| m.split.make(scheme, data, split_seed(seed, scheme)).map_err(|e| e.to_string()));
                for &estimator in &m.estimators {
                    let mut row = ResultRow {
                        cell: label.clone(),
                        model,
                        p: p.or_else(|| user_data.as_ref().and_then(|d| d.paths.first().map(|x| x.dim()))),
                        rho_star,
                        k,
                        replicate: r,
                        scheme,
                        estimator,
                        order: None,
                        lambda: None,
                        n_scores: None,
                        rho_hat: None,
                        test_rmse: None,
                        error: None,
                    };
                    let mut timing = TimingRow {
                        cell: label.clone(),
                        replicate: r,
                        scheme,
                        estimator,
                        fit_seconds: 0.0,
                        predict_seconds: 0.0,
                    };
                    match (&prepared, &split) {
                        (Ok((data, design)), Ok(split)) => {
                            let input = SelectionInput {
                                design,
                                y: &data.y,
                                w: &data.w,
                                split,
                            };
                            let t0 = Instant::now();
                            let fitted = select_and_fit(estimator, &input, &m.grid);
                            timing.fit_seconds = t0.elapsed().as_secs_f64();
                            match fitted {
                                Ok((fit, report)) => {
                                    let chosen = report.chosen_point();
                                    row.order = Some(chosen.order);
                                    row.lambda = chosen.lambda;
                                    row.n_scores = fit_scores(&fit).or(chosen.n_scores);
                                    row.rho_hat = Some(fit.rho_hat());
                                    let t1 = Instant::now();
                                    let scored = test_rmse(&fit, design, &data.y, &data.w, split);
                                    timing.predict_seconds = t1.elapsed().as_secs_f64();
                                    match scored {
                                        Ok(v) => row.test_rmse = Some(v),
                                        Err(e) => row.error = Some(e.to_string()),
                                    }
                                }
                                Err(e) => row.error = Some(e.to_string()),
                            }
                        }
                        (Err(e), _) => row.error = Some(e.to_string()),
                        (_, Err(e)) => row.error = Some(e.clone()),
                    }
                    progress(&format!(
                        "{} rep {} {} {}: {}",
                        row.cell,
                        row.replicate,
                        row.scheme,
                        row.estimator,
                        match (&row.test_rmse, &row.error) {
                            (Some(v), _) => format!("rmse {v:.4}, fit {:.2}s", timing.fit_seconds),
                            (_, Some(e)) => format!("error: {e}"),
                            _ => String::new(),
                        }
                    ));
                    results.push(row);
                    timings.push(timing);
                }
            }
        }
    }
    let summary = summarize(&results, &timings);
    Ok(BenchmarkOutput {
        results,
        timings,
        summary,
    })
}

fn fit_scores(fit: &SarFit) -> Option<usize> {
    match fit {
        SarFit::NaivePenssar(_) => None,
        SarFit::PlsProjssar(f) | SarFit::PcaProjssar(f) => Some(f.basis.n_scores()),
    }
}

impl BenchmarkOutput {
    /// Writes `results.csv`, `timings.csv` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &FsPath) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_rows(&dir.join("results.csv"), &self.results)?;
        write_rows(&dir.join("timings.csv"), &self.timings)?;
        write_rows(&dir.join("summary.csv"), &self.summary)?;
        Ok(())
    }
}

/// A fit as persisted between `fit` and `predict`: the model plus what is
/// needed to rebuild its design matrix on new paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub fit: SarFit,
    pub augment: Augment,
    /// Path dimension before augmentation.
    pub path_dim: usize,
}

impl FitArtifact {
    pub fn save(&self, path: &FsPath) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read fit {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Reduced-form predictions at every site of `data`.
    pub fn predict(&self, data: &SarDataset) -> Result<nalgebra::DVector<f64>> {
        if let Some(p) = data.paths.iter().find(|p| p.dim() != self.path_dim) {
            return Err(Error::DimensionMismatch(format!(
                "fit expects {}-dimensional paths, data has {}",
                self.path_dim,
                p.dim()
            )));
        }
        let design = SignatureDesign::new(&data.paths, self.fit.order(), self.augment)?;
        let all: Vec<usize> = (0..data.n()).collect();
        crate::estimators::predict(&self.fit, &data.w.restrict(&all), &design.at_order(self.fit.order())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&v, 0.75), Some(3.25));
        assert_eq!(quantile(&[7.0], 0.25), Some(7.0));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn manifest_defaults_and_round_trip() {
        let m = RunManifest::from_toml("id = \"x\"\nseed = 3\n").unwrap();
        assert_eq!(m.replicates, 20);
        assert_eq!(m.estimators, Estimator::ALL.to_vec());
        assert_eq!(m.grid, HyperGrid::default());
        let again = RunManifest::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(again, m);
        assert!(RunManifest::from_toml("id = \"x\"\nseed = 3\nbogus = 1\n").is_err());
    }

    #[test]
    fn full_scale_expands_matrix() {
        let mut m = RunManifest::new("p", 1);
        m.full_scale = true;
        let r = m.resolved().unwrap();
        assert_eq!(r.replicates, 200);
        assert_eq!(r.cells().len(), 2 * 3 * 5 * 2);
    }

    #[test]
    fn cell_counts_multiply() {
        let mut m = RunManifest::new("tiny", 5);
        m.replicates = 3;
        m.estimators = vec![Estimator::PlsProjssar, Estimator::PcaProjssar];
        m.sim.n = 40;
        m.sim.m = 12;
        m.grid.d_max = Some(2);
        m.grid.j_max = 3;
        m.split.kmeans_k = 4;
        let out = run_benchmark(&m, |_| {}).unwrap();
        assert_eq!(out.results.len(), 2 * 3 * 2);
        assert_eq!(out.summary.len(), 2 * 2);
        assert!(out.results.iter().all(|r| r.error.is_none()), "{:?}", out.results);
    }
}
