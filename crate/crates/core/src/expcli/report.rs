use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Regime};
use crate::train::Method;
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const MATRIX_FILE: &str = "matrix.csv";

/// `ILL01`, `ILL02`, ... for stations 0, 1, ...
pub fn station_name(station: usize) -> String {
    format!("ILL{:02}", station + 1)
}

/// Configuration echo and provenance of a run. Contains no timestamps so
/// identical runs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: ExperimentConfig,
    /// Base seed of each repeat.
    pub seeds: Vec<u64>,
    pub commit: String,
    pub config_hash: String,
    pub test_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub train_stations: Vec<usize>,
    /// Accuracy (%) on the full test set.
    pub accuracy: f64,
    /// Accuracy (%) on each station's test segments.
    pub per_station: Vec<f64>,
    pub selected_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    /// Mean of the rows' accuracies.
    pub accuracy: f64,
    pub rows: Vec<RowResult>,
}

/// Train-station × test-station accuracies averaged over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub regime: Regime,
    pub method: Method,
    pub station: Option<usize>,
    /// One accuracy (%) per repeat.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over repeats.
    pub std: f64,
    /// Mean of the off-diagonal matrix cells (one-station regimes only).
    pub cross_station_mean: Option<f64>,
    pub matrix: StationMatrix,
    /// `confusion[label][prediction]`, summed over repeats and rows.
    pub confusion: Vec<Vec<u64>>,
    pub repeats: Vec<RepeatResult>,
    pub meta: RunMeta,
}

impl ExperimentReport {
    pub fn cell_name(&self) -> String {
        format!("{}_{}", self.regime.as_str(), self.method.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub meta: RunMeta,
    pub cells: Vec<ExperimentReport>,
}

impl SweepReport {
    pub fn cell(&self, regime: Regime, method: Method) -> Option<&ExperimentReport> {
        self.cells.iter().find(|c| c.regime == regime && c.method == method)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_matrix(m: &StationMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["train\\test".to_string()];
    header.extend(m.col_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in m.row_names.iter().zip(&m.cells) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `report.json` and `matrix.csv` into `dir`, creating it if needed.
pub fn export_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(report, &dir.join(REPORT_FILE))?;
    write_matrix(&report.matrix, &dir.join(MATRIX_FILE))
}

pub fn load_report(dir: &Path) -> Result<ExperimentReport> {
    read_json(&dir.join(REPORT_FILE))
}

/// Write the sweep's `report.json` and one [`export_report`] directory per cell.
pub fn export_sweep(sweep: &SweepReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(sweep, &dir.join(REPORT_FILE))?;
    for cell in &sweep.cells {
        export_report(cell, &dir.join(cell.cell_name()))?;
    }
    Ok(())
}

pub fn load_sweep(dir: &Path) -> Result<SweepReport> {
    read_json(&dir.join(REPORT_FILE))
}
