use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::train::StopReason;
use crate::error::{Error, Result};
use crate::objective::{LossBreakdown, LossMode, TermTimings};
use crate::probe::ProbeResult;
use crate::scalar::Precision;

/// One training-log line: the loss breakdown plus epoch and timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: u64,
    #[serde(flatten)]
    pub loss: LossBreakdown<f64>,
    /// Wall time of the whole epoch.
    pub wall_ms: f64,
    /// Wall time of the loss evaluation alone, split by term.
    #[serde(flatten)]
    pub timings: TermTimings,
}

impl LossRecord {
    pub fn new(epoch: u64, loss: LossBreakdown<f64>, wall_ms: f64, timings: TermTimings) -> Self {
        Self {
            epoch,
            loss,
            wall_ms,
            timings,
        }
    }

    pub fn loss_ms(&self) -> f64 {
        self.timings.invariance_ms + self.timings.variance_ms + self.timings.covariance_ms
    }
}

/// Where a report was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub precision: Precision,
    pub threads: usize,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn capture(precision: Precision) -> Self {
        Self {
            precision,
            threads: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub mode: LossMode,
    pub node_ratio: f64,
    pub dim_ratio: f64,
    /// One record per completed epoch.
    pub losses: Vec<LossRecord>,
    pub probe: Option<ProbeResult>,
    pub stop: StopReason,
    pub abort_reason: Option<String>,
    pub model_checksum: u64,
    pub environment: Environment,
}

impl ExperimentReport {
    pub fn epochs_run(&self) -> usize {
        self.losses.len()
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.losses.first().map(|r| r.loss.total)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().map(|r| r.loss.total)
    }

    /// Total-loss trajectory, one entry per epoch.
    pub fn trajectory(&self) -> Vec<f64> {
        self.losses.iter().map(|r| r.loss.total).collect()
    }

    /// Mean loss-evaluation time per epoch in ms.
    pub fn mean_loss_ms(&self) -> f64 {
        if self.losses.is_empty() {
            return 0.0;
        }
        self.losses.iter().map(LossRecord::loss_ms).sum::<f64>() / self.losses.len() as f64
    }

    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for rec in &mut r.losses {
            rec.wall_ms = 0.0;
            rec.timings = TermTimings::default();
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// The training log as JSON lines.
    pub fn losses_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.losses {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `report` as JSON to `path` and its loss log as JSON lines next to
/// it (`<stem>.losses.jsonl`).
pub fn emit_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    write_file(path, &report.to_json())?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    write_file(&path.with_file_name(format!("{stem}.losses.jsonl")), &report.losses_jsonl())
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentReport::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_report() -> ExperimentReport {
        let loss = LossBreakdown {
            invariance: 0.1 + 0.2,
            variance_view1: 1.0 / 3.0,
            variance_view2: 0.7,
            covariance_view1: 1e-17,
            covariance_view2: 2.5,
            total: 12.345678901234567,
            nodes_used: 10,
            dims_used: 4,
        };
        ExperimentReport {
            config: ExperimentConfig::default(),
            mode: LossMode::Joint,
            node_ratio: 0.25,
            dim_ratio: 0.5,
            losses: vec![LossRecord::new(
                0,
                loss,
                3.25,
                TermTimings {
                    invariance_ms: 0.1,
                    variance_ms: 0.2,
                    covariance_ms: 0.3,
                },
            )],
            probe: Some(ProbeResult {
                mean: 0.9,
                std: 0.01,
                accuracies: vec![0.89, 0.91],
                l2: vec![1e-4, 1e-4],
            }),
            stop: StopReason::Completed,
            abort_reason: None,
            model_checksum: u64::MAX,
            environment: Environment::capture(Precision::F64),
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample_report();
        assert_eq!(ExperimentReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn file_round_trip_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/report.json");
        let r = sample_report();
        emit_report(&r, &path).unwrap();
        assert_eq!(load_report(&path).unwrap(), r);
        let log = std::fs::read_to_string(dir.path().join("sub/report.losses.jsonl")).unwrap();
        let line: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        for key in ["epoch", "invariance", "variance_view1", "covariance_view2", "total", "nodes_used", "wall_ms"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn malformed_json_is_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"mode\": ").unwrap();
        assert!(matches!(load_report(&path), Err(Error::Json(_))));
        assert!(matches!(load_report(&dir.path().join("missing.json")), Err(Error::Io { .. })));
    }

    #[test]
    fn timings_stripped() {
        let r = sample_report().without_timings();
        assert_eq!(r.losses[0].wall_ms, 0.0);
        assert_eq!(r.mean_loss_ms(), 0.0);
    }
}
