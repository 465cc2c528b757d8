//! CSV and JSON artifacts.

use anyhow::Result;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// A file to write once the experiment has finished.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn write(&self) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&self.path, &self.bytes)?;
        Ok(())
    }
}

pub const SWEEP_HEADER: [&str; 10] = [
    "experiment_id",
    "route",
    "n",
    "replicates",
    "seed",
    "estimate",
    "stderr",
    "oracle",
    "bound",
    "holds",
];

/// One gen-sweep estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub experiment_id: String,
    pub route: &'static str,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: Option<f64>,
    pub bound: Option<f64>,
    pub holds: Option<bool>,
}

impl SweepRow {
    fn fields(&self) -> [String; 10] {
        [
            self.experiment_id.clone(),
            self.route.into(),
            self.n.to_string(),
            self.replicates.to_string(),
            self.seed.to_string(),
            float(self.estimate),
            float(self.stderr),
            self.oracle.map(float).unwrap_or_default(),
            self.bound.map(float).unwrap_or_default(),
            self.holds.map(|h| h.to_string()).unwrap_or_default(),
        ]
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let body: Vec<[String; 10]> = rows.iter().map(SweepRow::fields).collect();
    table_csv(&SWEEP_HEADER, &body)
}

pub fn table_csv<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.as_ref())?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn artifact(dir: &Path, name: String, bytes: Vec<u8>) -> Artifact {
    Artifact {
        path: dir.join(name),
        bytes,
    }
}
