use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sigssar::data::{write_split, SarDataset};
use sigssar::estimators::Estimator;
use sigssar::experiment::{report, run_benchmark, simulate_datasets, FitArtifact, RunManifest, Scheme};
use sigssar::selection::{select_and_fit, SelectionInput, SignatureDesign};
use sigssar::sigcore::Augment;

#[derive(Parser)]
#[command(name = "sigssar", version, about = "Signature-based spatial autoregressive regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated dataset directories for every cell and replicate.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Select hyperparameters on a dataset and save the chosen fit.
    Fit(FitArgs),
    /// Predict every site of a dataset from a saved fit.
    Predict(PredictArgs),
    /// Run the estimator x replicate x split matrix.
    Benchmark {
        #[command(flatten)]
        run: RunArgs,
        /// Use the full simulation matrix and replicate count.
        #[arg(long)]
        full_scale: bool,
    },
    /// Recompute summary.csv from a benchmark directory.
    Report {
        /// Benchmark output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; overrides the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    estimator: Option<Estimator>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    split: Option<Scheme>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn manifest(&self) -> Result<(RunManifest, PathBuf)> {
        let mut m = RunManifest::load(&self.manifest)?;
        if let Some(e) = self.estimator {
            m.estimators = vec![e];
        }
        if let Some(k) = self.k {
            m.sim.k = vec![k];
        }
        if let Some(p) = self.p {
            m.sim.p = vec![p];
        }
        if let Some(rho) = self.rho {
            m.sim.rho_star = vec![rho];
        }
        if let Some(s) = self.split {
            m.split.schemes = vec![s];
        }
        if let Some(seed) = self.seed {
            m.seed = seed;
        }
        let out = match (&self.out, &m.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => o.clone(),
            (None, None) => PathBuf::from("runs").join(&m.id),
        };
        Ok((m, out))
    }
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory (coords.csv, paths.csv, y.csv, optional weights.csv).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    estimator: Estimator,
    /// Manifest supplying the hyperparameter grid and split settings.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "ordinary")]
    split: Scheme,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighbour count when the dataset has no weights.csv.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Fit file written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

fn simulate(run: &RunArgs) -> Result<()> {
    let (m, out) = run.manifest()?;
    let dirs = simulate_datasets(&m, &out)?;
    eprintln!("wrote {} dataset(s) under {}", dirs.len(), out.display());
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let manifest = match &args.manifest {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::new("fit", args.seed),
    };
    let data = SarDataset::read_dir(&args.data, args.k)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    let split = manifest.split.make(args.split, &data, args.seed)?;
    let augment = Augment::default();
    let design = SignatureDesign::for_grid(&data.paths, &manifest.grid, augment)?;
    let input = SelectionInput {
        design: &design,
        y: &data.y,
        w: &data.w,
        split: &split,
    };
    let (fit, selection) = select_and_fit(args.estimator, &input, &manifest.grid)?;
    fs::create_dir_all(&args.out)?;
    FitArtifact {
        fit,
        augment,
        path_dim: data.paths[0].dim(),
    }
    .save(&args.out.join("fit.json"))?;
    selection.write_csv(fs::File::create(args.out.join("selection.csv"))?)?;
    write_split(&args.out.join("split.csv"), &split)?;
    let chosen = selection.chosen_point();
    eprintln!(
        "{}: D = {}{}, validation RMSE {:.4}",
        args.estimator,
        chosen.order,
        chosen
            .lambda
            .map(|l| format!(", lambda = {l}"))
            .or(chosen.n_scores.map(|j| format!(", J = {j}")))
            .unwrap_or_default(),
        chosen.validation_rmse
    );
    Ok(())
}

fn predict(args: &PredictArgs) -> Result<()> {
    let artifact = FitArtifact::load(&args.fit)?;
    let data = SarDataset::read_dir(&args.data, args.k)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    let pred = artifact.predict(&data)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = String::from("site,prediction\n");
    for (i, v) in pred.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    fs::write(&args.out, text)?;
    Ok(())
}

fn benchmark(run: &RunArgs, full_scale: bool) -> Result<()> {
    let (mut m, out) = run.manifest()?;
    m.full_scale |= full_scale;
    let output = run_benchmark(&m, |line| eprintln!("{line}"))?;
    output.write(&out)?;
    fs::write(out.join("manifest.toml"), m.resolved()?.to_toml()?)?;
    eprintln!("{} rows written to {}", output.results.len(), out.display());
    Ok(())
}

fn run_report(out: &Path) -> Result<()> {
    if !out.join("results.csv").exists() {
        bail!("{} has no results.csv", out.display());
    }
    let summary = report(out)?;
    eprintln!("{} summary rows written", summary.len());
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { run } => simulate(run),
        Command::Fit(args) => fit(args),
        Command::Predict(args) => predict(args),
        Command::Benchmark { run, full_scale } => benchmark(run, *full_scale),
        Command::Report { out } => run_report(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
