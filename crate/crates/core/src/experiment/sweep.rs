use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{write_file, ExperimentReport};
use super::train::pretrain;
use crate::error::Result;
use crate::graph::Graph;
use crate::objective::LossMode;
use crate::scalar::Scalar;

/// One (mode, p, q) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub mode: LossMode,
    pub node_ratio: f64,
    pub dim_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub spec: CellSpec,
    pub report: Option<ExperimentReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub dataset: String,
    pub cells: Vec<SweepCell>,
}

/// Cells visited by a sweep. The full-mode baseline always comes first.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let s = &cfg.sampling;
    let cell = |mode, node_ratio, dim_ratio| CellSpec { mode, node_ratio, dim_ratio };
    let mut cells = vec![cell(LossMode::Full, 1.0, 1.0)];
    for &mode in &s.sweep_modes {
        match mode {
            LossMode::Full => {}
            LossMode::NodeSampled => cells.extend(s.node_grid.iter().map(|&p| cell(mode, p, 1.0))),
            LossMode::DimSampledCovOnly | LossMode::DimSampledAll => {
                cells.extend(s.dim_grid.iter().map(|&q| cell(mode, 1.0, q)))
            }
            LossMode::Joint => {
                for &p in &s.node_grid {
                    cells.extend(s.dim_grid.iter().map(|&q| cell(mode, p, q)));
                }
            }
        }
    }
    cells
}

/// Config of a single cell: the sweep config with mode and ratios pinned.
pub fn cell_config(cfg: &ExperimentConfig, spec: &CellSpec) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.sampling.mode = spec.mode;
    c.sampling.node_ratio = spec.node_ratio;
    c.sampling.dim_ratio = spec.dim_ratio;
    c
}

/// Pretrains and probes every cell, in parallel. Each cell starts from its
/// own seeded initialization; a failing cell is recorded and the rest run.
pub fn sweep<T: Scalar>(cfg: &ExperimentConfig, g: &Graph<T>) -> Result<SweepReport> {
    cfg.sampling.validate()?;
    let cells = sweep_cells(cfg)
        .into_par_iter()
        .map(|spec| match pretrain(&cell_config(cfg, &spec), g) {
            Ok(out) => SweepCell {
                spec,
                report: Some(out.report),
                error: None,
            },
            Err(e) => {
                log::warn!("sweep cell {spec:?} failed: {e}");
                SweepCell {
                    spec,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    Ok(SweepReport {
        dataset: cfg.dataset.name.clone(),
        cells,
    })
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SweepReport {
    pub fn cells_for(&self, mode: LossMode) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(move |c| c.spec.mode == mode)
    }

    /// Long-format table: one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dataset,mode,node_ratio,dim_ratio,accuracy_mean,accuracy_std,final_loss,epochs,mean_loss_ms,status\n",
        );
        for c in &self.cells {
            let (mean, std, loss, epochs, ms, status) = match (&c.report, &c.error) {
                (Some(r), _) => (
                    r.probe.as_ref().map(|p| p.mean.to_string()).unwrap_or_default(),
                    r.probe.as_ref().map(|p| p.std.to_string()).unwrap_or_default(),
                    r.final_loss().map(|v| v.to_string()).unwrap_or_default(),
                    r.epochs_run().to_string(),
                    r.mean_loss_ms().to_string(),
                    match &r.abort_reason {
                        Some(reason) => format!("aborted: {reason}"),
                        None => "ok".to_string(),
                    },
                ),
                (None, e) => (
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("error: {}", e.as_deref().unwrap_or("unknown")),
                ),
            };
            out.push_str(&format!(
                "{},{},{},{},{mean},{std},{loss},{epochs},{ms},{}\n",
                csv_escape(&self.dataset),
                c.spec.mode,
                c.spec.node_ratio,
                c.spec.dim_ratio,
                csv_escape(&status)
            ));
        }
        out
    }

    /// Joint-mode accuracy grid: rows are node ratios, columns dim ratios.
    pub fn joint_grid_csv(&self) -> Option<String> {
        let cells: Vec<&SweepCell> = self.cells_for(LossMode::Joint).collect();
        if cells.is_empty() {
            return None;
        }
        let mut ps: Vec<f64> = Vec::new();
        let mut qs: Vec<f64> = Vec::new();
        for c in &cells {
            if !ps.contains(&c.spec.node_ratio) {
                ps.push(c.spec.node_ratio);
            }
            if !qs.contains(&c.spec.dim_ratio) {
                qs.push(c.spec.dim_ratio);
            }
        }
        let mut out = String::from("node_ratio");
        for q in &qs {
            out.push_str(&format!(",q={q}"));
        }
        out.push('\n');
        for p in &ps {
            out.push_str(&p.to_string());
            for q in &qs {
                let acc = cells
                    .iter()
                    .find(|c| c.spec.node_ratio == *p && c.spec.dim_ratio == *q)
                    .and_then(|c| c.report.as_ref())
                    .and_then(|r| r.probe.as_ref())
                    .map(|pr| pr.mean.to_string())
                    .unwrap_or_default();
                out.push(',');
                out.push_str(&acc);
            }
            out.push('\n');
        }
        Some(out)
    }

    /// Writes `sweep.csv`, `sweep.json` and, with joint cells, `sweep_joint.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("sweep.csv"), &self.to_csv())?;
        write_file(&dir.join("sweep.json"), &serde_json::to_string_pretty(self).expect("sweeps serialize"))?;
        if let Some(grid) = self.joint_grid_csv() {
            write_file(&dir.join("sweep_joint.csv"), &grid)?;
        }
        Ok(())
    }
}
