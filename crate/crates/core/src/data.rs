//! On-disk datasets: a directory of CSV files.
//!
//! | file          | columns                                 |
//! |---------------|-----------------------------------------|
//! | `coords.csv`  | `x,y`                                   |
//! | `weights.csv` | `row,col,weight` (nonzero entries)      |
//! | `paths.csv`   | `site,time_index,time,coordinate,value` |
//! | `y.csv`       | `site,y`                                |
//!
//! The `time` column of `paths.csv` is optional on input; without it sample
//! `j` sits at time `j`. A missing `weights.csv` can be replaced by kNN
//! weights built from the coordinates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path as FsPath;

use nalgebra::DVector;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sigcore::Path;
use crate::spatial::{knn_weights, Coordinates, SplitAssignment, SplitLabel, WeightMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SarDataset {
    pub coords: Coordinates,
    pub w: WeightMatrix,
    pub paths: Vec<Path>,
    pub y: DVector<f64>,
}

impl SarDataset {
    pub fn new(coords: Coordinates, w: WeightMatrix, paths: Vec<Path>, y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        if coords.len() != n {
            return Err(Error::Data(format!(
                "coords has {} sites but y has {n}",
                coords.len()
            )));
        }
        if w.n() != n {
            return Err(Error::Data(format!("weights cover {} sites but y has {n}", w.n())));
        }
        if paths.len() != n {
            return Err(Error::Data(format!(
                "paths cover {} sites but y has {n}",
                paths.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        Ok(Self { coords, w, paths, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn write_dir(&self, dir: &FsPath) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut c = csv::Writer::from_path(dir.join("coords.csv"))?;
        c.write_record(["x", "y"])?;
        for p in self.coords.points() {
            c.write_record([p[0].to_string(), p[1].to_string()])?;
        }
        c.flush()?;

        let mut w = csv::Writer::from_path(dir.join("weights.csv"))?;
        w.write_record(["row", "col", "weight"])?;
        for (i, j, v) in self.w.triplets() {
            w.write_record([i.to_string(), j.to_string(), v.to_string()])?;
        }
        w.flush()?;

        let mut p = csv::Writer::from_path(dir.join("paths.csv"))?;
        p.write_record(["site", "time_index", "time", "coordinate", "value"])?;
        for (i, path) in self.paths.iter().enumerate() {
            for j in 0..path.len() {
                for (k, v) in path.sample(j).iter().enumerate() {
                    p.write_record([
                        i.to_string(),
                        j.to_string(),
                        path.times()[j].to_string(),
                        k.to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
        p.flush()?;

        let mut y = csv::Writer::from_path(dir.join("y.csv"))?;
        y.write_record(["site", "y"])?;
        for (i, v) in self.y.iter().enumerate() {
            y.write_record([i.to_string(), v.to_string()])?;
        }
        y.flush()?;
        Ok(())
    }

    /// Reads a dataset directory. Without `weights.csv`, `knn` must give the
    /// neighbour count.
    pub fn read_dir(dir: &FsPath, knn: Option<usize>) -> Result<Self> {
        let coords = read_coords(&dir.join("coords.csv"))?;
        let y = read_response(&dir.join("y.csv"))?;
        let paths = read_paths(&dir.join("paths.csv"))?;
        let weights = dir.join("weights.csv");
        let w = if weights.exists() {
            read_weights(&weights, coords.len())?
        } else if let Some(k) = knn {
            knn_weights(&coords, k)?
        } else {
            return Err(Error::Data(format!(
                "{} is missing and no neighbour count was given",
                weights.display()
            )));
        };
        Self::new(coords, w, paths, y)
    }
}

fn reader(path: &FsPath) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Two numeric columns; a non-numeric first row is taken as a header.
pub fn read_coords(path: &FsPath) -> Result<Coordinates> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Data(format!("{}: line {} needs two columns", path.display(), line + 1)));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => points.push([x, y]),
            _ if line == 0 => continue,
            _ => {
                return Err(Error::Data(format!(
                    "{}: line {} is not numeric",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    Coordinates::new(points)
}

#[derive(Deserialize)]
struct WeightRow {
    row: usize,
    col: usize,
    weight: f64,
}

pub fn read_weights(path: &FsPath, n: usize) -> Result<WeightMatrix> {
    let mut triplets = Vec::new();
    for rec in reader(path)?.deserialize() {
        let r: WeightRow = rec?;
        triplets.push((r.row, r.col, r.weight));
    }
    WeightMatrix::from_triplets(n, &triplets)
}

#[derive(Deserialize)]
struct ResponseRow {
    site: usize,
    y: f64,
}

pub fn read_response(path: &FsPath) -> Result<DVector<f64>> {
    let mut rows: Vec<ResponseRow> = Vec::new();
    for rec in reader(path)?.deserialize() {
        rows.push(rec?);
    }
    rows.sort_by_key(|r| r.site);
    for (i, r) in rows.iter().enumerate() {
        if r.site != i {
            return Err(Error::Data(format!(
                "{}: sites must be 0..n without gaps, found {} at position {i}",
                path.display(),
                r.site
            )));
        }
    }
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r.y)))
}

#[derive(Deserialize)]
struct PathRow {
    site: usize,
    time_index: usize,
    #[serde(default)]
    time: Option<f64>,
    coordinate: usize,
    value: f64,
}

pub fn read_paths(path: &FsPath) -> Result<Vec<Path>> {
    // site -> time index -> (time, coordinate -> value)
    let mut cells: BTreeMap<usize, BTreeMap<usize, (Option<f64>, BTreeMap<usize, f64>)>> = BTreeMap::new();
    for rec in reader(path)?.deserialize() {
        let r: PathRow = rec?;
        let slot = cells.entry(r.site).or_default().entry(r.time_index).or_default();
        if r.time.is_some() {
            slot.0 = r.time;
        }
        if slot.1.insert(r.coordinate, r.value).is_some() {
            return Err(Error::Data(format!(
                "{}: duplicate value for site {}, time {}, coordinate {}",
                path.display(),
                r.site,
                r.time_index,
                r.coordinate
            )));
        }
    }
    let mut out = Vec::with_capacity(cells.len());
    for (expected, (site, samples)) in cells.into_iter().enumerate() {
        if site != expected {
            return Err(Error::Data(format!("{}: no samples for site {expected}", path.display())));
        }
        let mut times = Vec::with_capacity(samples.len());
        let mut rows = Vec::with_capacity(samples.len());
        for (j, (t, coords)) in samples {
            times.push(t.unwrap_or(j as f64));
            let row: Vec<f64> = coords.values().copied().collect();
            if coords.keys().enumerate().any(|(a, &b)| a != b) {
                return Err(Error::Data(format!(
                    "{}: site {site}, time {j} has non-contiguous coordinates",
                    path.display()
                )));
            }
            rows.push(row);
        }
        out.push(Path::from_rows(times, &rows).map_err(|e| Error::Data(format!("site {site}: {e}")))?);
    }
    Ok(out)
}

/// `site,label` rows.
pub fn write_split(path: &FsPath, split: &SplitAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site", "label"])?;
    for (i, l) in split.labels().iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_split(path: &FsPath) -> Result<SplitAssignment> {
    let mut rows: Vec<(usize, SplitLabel)> = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let site = rec
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Data(format!("{}: bad site column", path.display())))?;
        let label = rec.get(1).unwrap_or("").parse()?;
        rows.push((site, label));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::Data(format!("{}: sites must be 0..n without gaps", path.display())));
    }
    SplitAssignment::new(rows.into_iter().map(|r| r.1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let coords = Coordinates::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
        let w = knn_weights(&coords, 1).unwrap();
        let paths = (0..3)
            .map(|i| Path::uniform(2, vec![0.0, i as f64, 1.5, -0.25, 3.0, 1e-3]).unwrap())
            .collect();
        let d = SarDataset::new(coords, w, paths, DVector::from_vec(vec![0.1, -2.0, 1.0 / 3.0])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.write_dir(dir.path()).unwrap();
        assert_eq!(SarDataset::read_dir(dir.path(), None).unwrap(), d);
        fs::remove_file(dir.path().join("weights.csv")).unwrap();
        assert!(SarDataset::read_dir(dir.path(), None).is_err());
        assert_eq!(SarDataset::read_dir(dir.path(), Some(1)).unwrap(), d);
    }

    #[test]
    fn site_count_mismatch_names_both() {
        let coords = Coordinates::new(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let w = knn_weights(&coords, 1).unwrap();
        let paths = vec![Path::uniform(1, vec![0.0, 1.0]).unwrap(); 2];
        let err = SarDataset::new(coords, w, paths, DVector::zeros(3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn split_round_trip() {
        let split = crate::spatial::ordinary_split(12, (0.5, 0.25, 0.25), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("split.csv");
        write_split(&f, &split).unwrap();
        assert_eq!(read_split(&f).unwrap(), split);
    }

    #[test]
    fn headerless_coords() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.csv");
        fs::write(&f, "1,2\n3.5,4\n").unwrap();
        assert_eq!(read_coords(&f).unwrap().points(), &[[1.0, 2.0], [3.5, 4.0]]);
        fs::write(&f, "lon,lat\n1,2\n").unwrap();
        assert_eq!(read_coords(&f).unwrap().len(), 1);
    }
}
