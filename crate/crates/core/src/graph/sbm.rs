use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Planted-partition stochastic block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmConfig {
    pub nodes_per_block: usize,
    pub num_blocks: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes_per_block: 200,
            num_blocks: 2,
            p_intra: 0.2,
            p_inter: 0.02,
            feature_dim: 32,
            feature_noise: 1.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.nodes_per_block == 0 || self.num_blocks == 0 || self.feature_dim == 0 {
            return Err(Error::Config("SBM counts must be positive".into()));
        }
        if self.feature_dim < self.num_blocks {
            return Err(Error::Config(format!(
                "feature_dim {} cannot one-hot encode {} blocks",
                self.feature_dim, self.num_blocks
            )));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::Config("feature_noise must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_block * self.num_blocks
    }
}

/// Samples an SBM graph. Node `i` belongs to block `i / nodes_per_block`;
/// its features are the one-hot block indicator plus isotropic Gaussian noise.
pub fn generate_sbm<T: Scalar>(cfg: &SbmConfig) -> Result<Graph<T>> {
    cfg.validate()?;
    let n = cfg.num_nodes();
    let block = |i: usize| i / cfg.nodes_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block(i) == block(j) { cfg.p_intra } else { cfg.p_inter };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let mut features = Matrix::zeros(n, cfg.feature_dim);
    for i in 0..n {
        for (j, x) in features.row_mut(i).iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            let centroid = if j == block(i) { 1.0 } else { 0.0 };
            *x = T::of(centroid + cfg.feature_noise * noise);
        }
    }
    let labels = (0..n).map(block).collect();
    Graph::from_edges(n, edges, features, Some(labels))
}
