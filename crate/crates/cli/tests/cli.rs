use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sigssar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigssar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_manifest(dir: &Path, replicates: usize) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!(
            r#"
id = "small"
seed = 42
replicates = {replicates}
estimators = ["naive-penssar", "pls-projssar"]

[sim]
n = 40
m = 12

[split]
schemes = ["ordinary", "kmeans"]
kmeans_k = 4

[grid]
d_max = 2
j_max = 3
lambda_grid = [0.01, 1.0]
"#
        ),
    )
    .unwrap();
    path
}

fn dataset_dirs(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for cell in fs::read_dir(root).unwrap() {
        for rep in fs::read_dir(cell.unwrap().path()).unwrap() {
            out.push(rep.unwrap().path());
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_writes_one_directory_per_replicate() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_manifest(tmp.path(), 1);
    let out = tmp.path().join("one");
    assert!(sigssar(&["simulate", "--manifest", s(&manifest), "--out", s(&out)]).status.success());
    let dirs = dataset_dirs(&out);
    assert_eq!(dirs.len(), 1);
    let mut files: Vec<String> = fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["coords.csv", "meta.toml", "paths.csv", "weights.csv", "y.csv"]);

    let again = tmp.path().join("again");
    assert!(sigssar(&["simulate", "--manifest", s(&manifest), "--out", s(&again)]).status.success());
    for f in ["coords.csv", "paths.csv", "weights.csv", "y.csv"] {
        assert_eq!(
            fs::read(dirs[0].join(f)).unwrap(),
            fs::read(dataset_dirs(&again)[0].join(f)).unwrap(),
            "{f} differs between runs"
        );
    }

    let three = tmp.path().join("three");
    let manifest3 = small_manifest(tmp.path(), 3);
    assert!(sigssar(&["simulate", "--manifest", s(&manifest3), "--out", s(&three)]).status.success());
    let dirs = dataset_dirs(&three);
    assert_eq!(dirs.len(), 3);
    let seeds: Vec<String> = dirs
        .iter()
        .map(|d| {
            fs::read_to_string(d.join("meta.toml"))
                .unwrap()
                .lines()
                .find(|l| l.starts_with("seed"))
                .unwrap()
                .to_string()
        })
        .collect();
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2] && seeds[0] != seeds[2]);
}

#[test]
fn fit_then_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_manifest(tmp.path(), 1);
    let data_root = tmp.path().join("data");
    assert!(sigssar(&["simulate", "--manifest", s(&manifest), "--out", s(&data_root)]).status.success());
    let data = &dataset_dirs(&data_root)[0];
    let fit_dir = tmp.path().join("fit");
    let out = sigssar(&[
        "fit",
        "--data",
        s(data),
        "--estimator",
        "pls-projssar",
        "--manifest",
        s(&manifest),
        "--out",
        s(&fit_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fit_dir.join("fit.json").exists());
    let report = fs::read_to_string(fit_dir.join("selection.csv")).unwrap();
    assert!(report.starts_with("estimator,order,lambda,n_scores,validation_rmse,seconds,error"));
    assert!(report.lines().count() > 1);

    let pred = tmp.path().join("pred.csv");
    let out = sigssar(&[
        "predict",
        "--fit",
        s(&fit_dir.join("fit.json")),
        "--data",
        s(data),
        "--out",
        s(&pred),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(pred).unwrap();
    assert_eq!(text.lines().count(), 41);
    for line in text.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.is_finite());
    }
}

#[test]
fn unknown_estimator_is_a_usage_error() {
    let out = sigssar(&["fit", "--data", ".", "--estimator", "fsarlm", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sigssar(&["benchmark"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mismatched_site_counts_are_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_manifest(tmp.path(), 1);
    let data_root = tmp.path().join("data");
    assert!(sigssar(&["simulate", "--manifest", s(&manifest), "--out", s(&data_root)]).status.success());
    let data = &dataset_dirs(&data_root)[0];
    let y = fs::read_to_string(data.join("y.csv")).unwrap();
    let truncated: Vec<&str> = y.lines().take(36).collect();
    fs::write(data.join("y.csv"), truncated.join("\n") + "\n").unwrap();
    let out = sigssar(&[
        "fit",
        "--data",
        s(data),
        "--estimator",
        "naive-penssar",
        "--out",
        s(&tmp.path().join("fit")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("40") && err.contains("35"), "{err}");
}

#[test]
fn benchmark_rows_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_manifest(tmp.path(), 3);
    let out = tmp.path().join("bench");
    let run = sigssar(&["benchmark", "--manifest", s(&manifest), "--out", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    // 2 estimators x 3 replicates x 2 schemes
    assert_eq!(results.lines().count() - 1, 12);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary
        .lines()
        .next()
        .unwrap()
        .contains("rmse_median,rmse_q1,rmse_q3,seconds_median,seconds_q1,seconds_q3"));

    fs::remove_file(out.join("summary.csv")).unwrap();
    assert!(sigssar(&["report", "--out", s(&out)]).status.success());
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap(), summary);

    let single = tmp.path().join("single");
    let run = sigssar(&[
        "benchmark",
        "--manifest",
        s(&manifest),
        "--out",
        s(&single),
        "--estimator",
        "pca-projssar",
        "--split",
        "ordinary",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let results = fs::read_to_string(single.join("results.csv")).unwrap();
    assert_eq!(results.lines().count() - 1, 3);
}
