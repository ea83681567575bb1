//! Point files, CSV output and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use mandiff::{Error, PointCloud, Result};
use serde::Serialize;

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Read a point list: CSV with `D` numbers per row (an optional header row
/// is skipped), or raw little-endian `f64` when the extension is `.bin`.
pub fn read_points(path: &Path, dim: usize) -> Result<PointCloud> {
    if path.extension().is_some_and(|e| e == "bin") {
        let bytes = fs::read(path)?;
        if bytes.len() % (8 * dim) != 0 {
            return Err(Error::InvalidConfig(format!(
                "{}: {} bytes is not a whole number of {dim}-dimensional points",
                path.display(),
                bytes.len()
            )));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        return PointCloud::from_flat(dim, data);
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut cloud = PointCloud::new(dim);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match row {
            Ok(row) if row.len() == dim => cloud.push(&row),
            Ok(row) => return Err(Error::DimensionMismatch { expected: dim, got: row.len() }),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::InvalidConfig(format!("{}: row {}: {e}", path.display(), i + 1))),
        }
    }
    if !cloud.is_finite() {
        return Err(Error::InvalidConfig(format!("{}: non-finite coordinates", path.display())));
    }
    Ok(cloud)
}

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write rows of floats with a header.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt(*v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let header: Vec<String> = (1..=cloud.dim()).map(|i| format!("x{i}")).collect();
    write_csv(path, &header, cloud.rows().map(|r| r.to_vec()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub parallel: bool,
    pub config: String,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

pub fn run_dir(out: &Path, command: &str) -> Result<PathBuf> {
    let dir = out.join(command);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}
