//! Field series on disk.
//!
//! A series is a CSV file with a short header, one `key,values…` line each
//! for `dims`, `nodes`, `lower`, `upper`, `spacing` and `stride`, followed
//! by one line per snapshot: the time, then the node values in row-major
//! order. Floats carry 17 significant digits, which round-trips exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use gradlab_core::mesh::{BoxDomain, Grid, ScalarField, SpaceTimeField};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_series(path: &Path, field: &SpaceTimeField) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    write_series_to(BufWriter::new(file), field).map_err(|source| IoError::Csv { path: path.to_path_buf(), source })
}

pub fn write_series_to(out: impl Write, field: &SpaceTimeField) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let grid = field.grid();
    let dim = grid.dim();
    let floats = |key: &str, v: &[f64]| -> Vec<String> {
        std::iter::once(key.to_string()).chain(v.iter().map(|x| fmt_float(*x))).collect()
    };
    w.write_record(["dims".to_string(), dim.to_string()])?;
    w.write_record(
        std::iter::once("nodes".to_string()).chain(grid.nodes_per_axis().iter().map(|n| n.to_string())),
    )?;
    w.write_record(floats("lower", grid.domain().lower()))?;
    w.write_record(floats("upper", grid.domain().upper()))?;
    w.write_record(floats("spacing", &grid.spacing()[..dim]))?;
    w.write_record(["stride".to_string(), field.stride().to_string()])?;
    for (t, snap) in field.times().iter().zip(field.snapshots()) {
        w.write_record(std::iter::once(fmt_float(*t)).chain(snap.values().iter().map(|v| fmt_float(*v))))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series(path: &Path) -> Result<SpaceTimeField, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    read_series_from(BufReader::new(file), path)
}

pub fn read_series_from(input: impl Read, path: &Path) -> Result<SpaceTimeField, IoError> {
    let fail = |line: usize, message: String| IoError::Format { path: path.to_path_buf(), line, message };
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = r.records();
    let mut line = 0;
    let mut next = |key: &str| -> Result<Vec<String>, IoError> {
        line += 1;
        let rec = records
            .next()
            .ok_or_else(|| fail(line, format!("missing `{key}` line")))?
            .map_err(|source| IoError::Csv { path: path.to_path_buf(), source })?;
        if rec.get(0) != Some(key) {
            return Err(fail(line, format!("expected `{key}`")));
        }
        Ok(rec.iter().skip(1).map(str::to_string).collect())
    };
    let dims = next("dims")?;
    let nodes = next("nodes")?;
    let lower = next("lower")?;
    let upper = next("upper")?;
    let _spacing = next("spacing")?;
    let stride = next("stride")?;
    let float = |s: &str, line: usize| s.parse::<f64>().map_err(|_| fail(line, format!("bad number `{s}`")));
    let dim: usize = dims.first().and_then(|s| s.parse().ok()).ok_or_else(|| fail(1, "bad dimension".into()))?;
    let nodes: Vec<usize> =
        nodes.iter().map(|s| s.parse().map_err(|_| fail(2, format!("bad node count `{s}`")))).collect::<Result<_, _>>()?;
    let lower: Vec<f64> = lower.iter().map(|s| float(s, 3)).collect::<Result<_, _>>()?;
    let upper: Vec<f64> = upper.iter().map(|s| float(s, 4)).collect::<Result<_, _>>()?;
    let stride: usize = stride.first().and_then(|s| s.parse().ok()).ok_or_else(|| fail(6, "bad stride".into()))?;
    if nodes.len() != dim || lower.len() != dim || upper.len() != dim {
        return Err(fail(2, format!("header does not describe a {dim}-dimensional grid")));
    }
    let domain = BoxDomain::new(&lower, &upper).map_err(|e| fail(3, e.to_string()))?;
    let grid = Grid::new(domain, &nodes).map_err(|e| fail(2, e.to_string()))?;
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = 7 + k;
        let rec = rec.map_err(|source| IoError::Csv { path: path.to_path_buf(), source })?;
        let values: Vec<f64> = rec.iter().map(|s| float(s, line)).collect::<Result<_, _>>()?;
        let (t, v) = values.split_first().ok_or_else(|| fail(line, "empty snapshot line".into()))?;
        times.push(*t);
        snapshots.push(ScalarField::new(grid, v.to_vec()).map_err(|e| fail(line, e.to_string()))?);
    }
    let field = SpaceTimeField::new(times, snapshots).map_err(|e| fail(7, e.to_string()))?;
    Ok(field.with_stride(stride))
}
