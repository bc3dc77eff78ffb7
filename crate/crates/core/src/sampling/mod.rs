//! Per-epoch node and dimension selection.

mod ricci;
mod uniform;

pub use ricci::{forman_ricci, ricci_node_probs, ricci_node_sample, RicciScores};
pub use uniform::{rotating_partition, sample_count, uniform_dim_sample, uniform_node_sample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeMethod {
    #[default]
    Uniform,
    Ricci,
}

impl std::fmt::Display for NodeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NodeMethod::Uniform => "uniform",
            NodeMethod::Ricci => "ricci",
        })
    }
}

/// Node and dimension indices selected for one epoch's loss.
///
/// `None` means "all". When present, index lists are sorted, unique and
/// hold `max(1, round(ratio · total))` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub node_indices: Option<Vec<usize>>,
    pub dim_indices: Option<Vec<usize>>,
    pub node_ratio: f64,
    pub dim_ratio: f64,
    pub method: NodeMethod,
    pub epoch: u64,
}

impl SamplingPlan {
    /// Plan selecting everything.
    pub fn full(epoch: u64) -> Self {
        Self {
            node_indices: None,
            dim_indices: None,
            node_ratio: 1.0,
            dim_ratio: 1.0,
            method: NodeMethod::Uniform,
            epoch,
        }
    }

    /// Checks the cardinality and ordering contract against `n` nodes and `d` dims.
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        for (what, idx, total, ratio) in [
            ("node index", &self.node_indices, n, self.node_ratio),
            ("dimension index", &self.dim_indices, d, self.dim_ratio),
        ] {
            let Some(idx) = idx else { continue };
            check_indices(what, idx, total)?;
            let expected = sample_count(total, ratio)?;
            if idx.len() != expected {
                return Err(Error::Config(format!(
                    "{what} list has {} entries, expected {expected} for ratio {ratio}",
                    idx.len()
                )));
            }
        }
        Ok(())
    }
}

/// Indices must be strictly increasing and below `len`.
pub(crate) fn check_indices(what: &'static str, idx: &[usize], len: usize) -> Result<()> {
    for w in idx.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Config(format!("{what} list must be sorted and unique")));
        }
    }
    if let Some(&last) = idx.last() {
        if last >= len {
            return Err(Error::Range { what, index: last, len });
        }
    }
    Ok(())
}

pub(crate) fn check_ratio(name: &str, r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {r} must lie in (0, 1]")))
    }
}
