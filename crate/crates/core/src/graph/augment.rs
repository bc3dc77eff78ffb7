use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which feature entries a mask draw zeroes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// One draw per feature dimension, applied to every node of the view.
    #[default]
    Column,
    /// One draw per node, zeroing its whole feature row.
    Row,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub feature_mask_prob: f64,
    pub edge_drop_prob: f64,
    pub mask_mode: MaskMode,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            feature_mask_prob: 0.2,
            edge_drop_prob: 0.2,
            mask_mode: MaskMode::Column,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("feature_mask_prob", self.feature_mask_prob),
            ("edge_drop_prob", self.edge_drop_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Two stochastic views of one graph. Row `i` of either view is node `i`
/// of the source.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair<T> {
    pub view1: Graph<T>,
    pub view2: Graph<T>,
}

/// Draws both views for `epoch`. View `k` uses the ChaCha stream
/// `2·epoch + k` of `cfg.seed`, so the result is a pure function of the inputs.
pub fn augment<T: Scalar>(g: &Graph<T>, cfg: &AugmentationConfig, epoch: u64) -> Result<ViewPair<T>> {
    cfg.validate()?;
    let view = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch.wrapping_mul(2).wrapping_add(k));
        single_view(g, cfg, &mut rng)
    };
    Ok(ViewPair {
        view1: view(0),
        view2: view(1),
    })
}

fn single_view<T: Scalar>(g: &Graph<T>, cfg: &AugmentationConfig, rng: &mut ChaCha8Rng) -> Graph<T> {
    let n = g.num_nodes();
    let mut features = g.features().clone();
    if cfg.feature_mask_prob > 0.0 {
        match cfg.mask_mode {
            MaskMode::Column => {
                let masked: Vec<bool> = (0..features.cols())
                    .map(|_| rng.random::<f64>() < cfg.feature_mask_prob)
                    .collect();
                for i in 0..n {
                    for (x, &m) in features.row_mut(i).iter_mut().zip(&masked) {
                        if m {
                            *x = T::zero();
                        }
                    }
                }
            }
            MaskMode::Row => {
                for i in 0..n {
                    if rng.random::<f64>() < cfg.feature_mask_prob {
                        features.row_mut(i).fill(T::zero());
                    }
                }
            }
        }
    }

    let mut neighbors = vec![Vec::new(); n];
    for (u, v) in g.edges() {
        if cfg.edge_drop_prob > 0.0 && rng.random::<f64>() < cfg.edge_drop_prob {
            continue;
        }
        neighbors[u].push(v);
        neighbors[v].push(u);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    g.with_parts(neighbors, features)
}
