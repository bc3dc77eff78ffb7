use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_sbm, load_graph, AugmentationConfig, Graph, SbmConfig};
use crate::nn::{ModelDims, OptimizerConfig};
use crate::objective::{LossMode, LossWeights};
use crate::probe::ProbeConfig;
use crate::sampling::{check_ratio, NodeMethod};
use crate::scalar::{Precision, Scalar};

/// Ratio grid used by sweeps unless overridden.
pub const DEFAULT_GRID: [f64; 6] = [0.01, 0.1, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    #[default]
    Sbm,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// Name used in sweep tables.
    pub name: String,
    pub sbm: SbmConfig,
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Sbm,
            name: "sbm".into(),
            sbm: SbmConfig::default(),
            edges: None,
            features: None,
            labels: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        match self.source {
            DatasetSource::Sbm => self.sbm.validate(),
            DatasetSource::Files => {
                let need = |p: &Option<PathBuf>, what: &str| -> Result<()> {
                    match p {
                        None => Err(Error::Config(format!("dataset.{what} is required for file input"))),
                        Some(p) if !p.is_file() => Err(Error::Config(format!("{} does not exist", p.display()))),
                        Some(_) => Ok(()),
                    }
                };
                need(&self.edges, "edges")?;
                need(&self.features, "features")?;
                if self.labels.is_some() {
                    need(&self.labels, "labels")?;
                }
                Ok(())
            }
        }
    }

    pub fn load<T: Scalar>(&self) -> Result<Graph<T>> {
        self.validate()?;
        match self.source {
            DatasetSource::Sbm => generate_sbm(&self.sbm),
            DatasetSource::Files => load_graph(
                self.edges.as_deref().expect("validated"),
                self.features.as_deref().expect("validated"),
                self.labels.as_deref(),
            ),
        }
    }
}

/// Hidden widths; the input width comes from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder_hidden: usize,
    pub representation: usize,
    pub expander_hidden: usize,
    pub embedding: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ModelDims::default();
        Self {
            encoder_hidden: d.encoder_hidden,
            representation: d.representation,
            expander_hidden: d.expander_hidden,
            embedding: d.embedding,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self, input: usize) -> ModelDims {
        ModelDims {
            input,
            encoder_hidden: self.encoder_hidden,
            representation: self.representation,
            expander_hidden: self.expander_hidden,
            embedding: self.embedding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Mode of a single `pretrain` run.
    pub mode: LossMode,
    pub method: NodeMethod,
    pub node_ratio: f64,
    pub dim_ratio: f64,
    /// Modes visited by `sweep`.
    pub sweep_modes: Vec<LossMode>,
    pub node_grid: Vec<f64>,
    pub dim_grid: Vec<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            mode: LossMode::Full,
            method: NodeMethod::Uniform,
            node_ratio: 1.0,
            dim_ratio: 1.0,
            sweep_modes: vec![LossMode::NodeSampled, LossMode::DimSampledCovOnly],
            node_grid: DEFAULT_GRID.to_vec(),
            dim_grid: DEFAULT_GRID.to_vec(),
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        check_ratio("sampling.node_ratio", self.node_ratio)?;
        check_ratio("sampling.dim_ratio", self.dim_ratio)?;
        for (name, grid) in [("sampling.node_grid", &self.node_grid), ("sampling.dim_grid", &self.dim_grid)] {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            for &r in grid {
                check_ratio(name, r)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: u64,
    /// Epochs without improvement before stopping; 0 disables early stopping.
    pub patience: u64,
    /// Minimum decrease of the total loss that counts as improvement.
    pub min_delta: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            patience: 50,
            min_delta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Node counts measured at `base_dims`.
    pub n_list: Vec<usize>,
    /// Selected-dimension counts measured at `base_nodes`.
    pub m_list: Vec<usize>,
    pub base_nodes: usize,
    pub base_dims: usize,
    pub reps: usize,
    pub warmup: usize,
    /// Smallest median (ms) trusted without batching several calls per rep.
    pub min_rep_ms: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_list: vec![10_000, 20_000],
            m_list: vec![128, 256, 512],
            base_nodes: 10_000,
            base_dims: 256,
            reps: 20,
            warmup: 3,
            min_rep_ms: 5.0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.m_list.is_empty() {
            return Err(Error::Config("bench lists must not be empty".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("bench.reps must be positive".into()));
        }
        if self.n_list.iter().chain(&self.m_list).any(|&v| v < 2) || self.base_nodes < 2 || self.base_dims == 0 {
            return Err(Error::Config("bench sizes need at least 2 nodes and 1 dimension".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub nodes: usize,
    pub dims: usize,
    pub split_size: usize,
    pub epochs: u64,
    pub lr: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            nodes: 64,
            dims: 8,
            split_size: 4,
            epochs: 10_000,
            lr: 0.05,
        }
    }
}

/// Everything one run or sweep needs. Serialized as TOML with one table
/// per section; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Master seed for initialization, augmentation, sampling and probing.
    pub seed: u64,
    pub precision: Precision,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub output: PathBuf,
    pub dataset: DatasetConfig,
    pub augmentation: AugmentationConfig,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub sampling: SamplingConfig,
    pub training: TrainingConfig,
    pub optimizer: OptimizerConfig,
    pub probe: ProbeConfig,
    pub bench: BenchConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            threads: 0,
            output: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            augmentation: AugmentationConfig::default(),
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            sampling: SamplingConfig::default(),
            training: TrainingConfig::default(),
            optimizer: OptimizerConfig::default(),
            probe: ProbeConfig::default(),
            bench: BenchConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks every section; file paths must exist.
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.augmentation.validate()?;
        self.model.dims(1).validate()?;
        self.loss.validate()?;
        self.sampling.validate()?;
        self.bench.validate()?;
        if self.probe.trials == 0 {
            return Err(Error::Config("probe.trials must be positive".into()));
        }
        Ok(())
    }
}

/// Deterministic sub-seed for an independent stream (SplitMix64 finalizer).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 7;
        cfg.sampling.mode = LossMode::Joint;
        cfg.sampling.method = NodeMethod::Ricci;
        cfg.dataset.sbm.nodes_per_block = 50;
        cfg.precision = Precision::F32;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            seed = 3
            precision = "f32"
            [sampling]
            mode = "node_sampled"
            node_ratio = 0.25
            [training]
            epochs = 10
            [loss]
            lambda_inv = 10.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.precision, Precision::F32);
        assert_eq!(cfg.sampling.mode, LossMode::NodeSampled);
        assert_eq!(cfg.training.epochs, 10);
        assert_eq!(cfg.loss.lambda_inv, 10.0);
        assert_eq!(cfg.loss.mu_var, 25.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_grid_and_unknown_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.sampling.node_grid = vec![0.0];
        assert!(cfg.validate().is_err());
        cfg.sampling.node_grid = vec![];
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("[sampling]\nmode = \"nope\"").is_err());
    }

    #[test]
    fn missing_files_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.source = DatasetSource::Files;
        cfg.dataset.edges = Some("/nonexistent/edges.txt".into());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
