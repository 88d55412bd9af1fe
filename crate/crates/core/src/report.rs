//! Report files: `report.json` (full record) and `report.csv` (one row per
//! repeat), plus the long-form sweep CSV.
//!
//! `report.csv` columns, in order:
//! `method,setting,n_way,k_shot,q_query,repeat,seed,test_accuracy,best_dev,best_epoch,stop_epoch,params_checksum,wall_clock_secs`.
//! Wall-clock time is always the last column.
//!
//! Sweep CSV columns: `method,setting,N,K,mean,ci`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::ClassSplitIds;
use crate::error::{Error, Result};
use crate::protocol::{RunReport, REPORT_SCHEMA_VERSION};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_split: ClassSplitIds,
}

/// Everything needed to rerun and audit one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    /// Resolved configuration, with defaults written out.
    pub config: RunConfig,
    pub dataset: DatasetInfo,
    pub run: RunReport,
}

impl ReportFile {
    pub fn new(config: RunConfig, dataset: DatasetInfo, run: RunReport) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config,
            dataset,
            run,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Data {
                path: path.to_owned(),
                line: 0,
                message: format!("unsupported report schema_version {}", report.schema_version),
            });
        }
        Ok(report)
    }

    pub fn rows(&self) -> Vec<RepeatRow> {
        let c = &self.run.config;
        self.run
            .repeats
            .iter()
            .map(|r| RepeatRow {
                method: c.method.method.to_string(),
                setting: c.setting.to_string(),
                n_way: c.spec.n_way,
                k_shot: c.spec.k_shot,
                q_query: c.spec.q_query,
                repeat: r.repeat,
                seed: r.seed,
                test_accuracy: r.test_accuracy,
                best_dev: r.best_dev,
                best_epoch: r.best_epoch,
                stop_epoch: r.stop_epoch,
                params_checksum: format!("{:016x}", r.params_checksum),
                wall_clock_secs: r.wall_clock_secs,
            })
            .collect()
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(REPORT_JSON);
        std::fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(json, e))?;
        write_csv(&dir.join(REPORT_CSV), &self.rows())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatRow {
    pub method: String,
    pub setting: String,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
    pub repeat: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_dev: f64,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub params_checksum: String,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub setting: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mean: f64,
    pub ci: f64,
}

impl SweepRow {
    pub fn from_report(run: &RunReport) -> Self {
        Self {
            method: run.config.method.method.to_string(),
            setting: run.config.setting.to_string(),
            n: run.config.spec.n_way,
            k: run.config.spec.k_shot,
            mean: run.summary.mean,
            ci: run.summary.ci95,
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Data {
        path: path.to_owned(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// `report.csv` content with the trailing wall-clock column removed from
/// every line.
pub fn csv_without_wall_clock(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let row = SweepRow {
            method: "ignn".into(),
            setting: "inductive".into(),
            n: 2,
            k: 1,
            mean: 0.5,
            ci: 0.25,
        };
        write_csv(&path, std::slice::from_ref(&row)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "method,setting,N,K,mean,ci");
        assert_eq!(read_csv::<SweepRow>(&path).unwrap(), vec![row]);
    }

    #[test]
    fn wall_clock_stripped() {
        assert_eq!(csv_without_wall_clock("a,b,wall\n1,2,0.5\n"), "a,b\n1,2");
    }
}
