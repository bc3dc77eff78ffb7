use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ExperimentConfig};
use super::report::{Environment, ExperimentReport, LossRecord};
use crate::error::{Error, Result};
use crate::graph::{augment, Graph};
use crate::linalg::Matrix;
use crate::nn::{normalize_adjacency, Model, Optimizer, Tape};
use crate::objective::LossMode;
use crate::probe::{evaluate, ProbeConfig};
use crate::sampling::{
    forman_ricci, ricci_node_probs, ricci_node_sample, uniform_dim_sample, uniform_node_sample, NodeMethod,
    SamplingPlan,
};
use crate::scalar::Scalar;

const TAG_INIT: u64 = 1;
const TAG_AUGMENT: u64 = 2;
const TAG_PLAN: u64 = 3;
const TAG_PROBE: u64 = 4;

/// Builds the per-epoch [`SamplingPlan`]. Ricci probabilities are computed
/// once from the un-augmented graph.
#[derive(Debug, Clone)]
pub struct Planner {
    mode: LossMode,
    method: NodeMethod,
    node_ratio: f64,
    dim_ratio: f64,
    nodes: usize,
    dims: usize,
    ricci_probs: Option<Vec<f64>>,
    seed: u64,
}

impl Planner {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        g: &Graph<T>,
        dims: usize,
        mode: LossMode,
        method: NodeMethod,
        node_ratio: f64,
        dim_ratio: f64,
        seed: u64,
    ) -> Result<Self> {
        let ricci_probs = if mode.samples_nodes() && method == NodeMethod::Ricci {
            Some(ricci_node_probs(&forman_ricci(g).node_flow)?)
        } else {
            None
        };
        Ok(Self {
            mode,
            method,
            node_ratio,
            dim_ratio,
            nodes: g.num_nodes(),
            dims,
            ricci_probs,
            seed,
        })
    }

    /// Fresh indices for `epoch`, drawn from an epoch-specific stream.
    pub fn plan(&self, epoch: u64) -> Result<SamplingPlan> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut plan = SamplingPlan::full(epoch);
        plan.method = self.method;
        if self.mode.samples_nodes() {
            plan.node_ratio = self.node_ratio;
            plan.node_indices = Some(match &self.ricci_probs {
                Some(probs) => ricci_node_sample(probs, self.node_ratio, &mut rng)?,
                None => uniform_node_sample(self.nodes, self.node_ratio, &mut rng)?,
            });
        }
        if self.mode.samples_dims() {
            plan.dim_ratio = self.dim_ratio;
            plan.dim_indices = Some(uniform_dim_sample(self.dims, self.dim_ratio, &mut rng)?);
        }
        Ok(plan)
    }
}

/// Trained parameters and the run log.
#[derive(Debug, Clone)]
pub struct Pretrained<T> {
    pub model: Model<T>,
    pub report: ExperimentReport,
}

/// Why training stopped before the epoch budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    EarlyStopped,
    Aborted,
}

/// Seeded initialization used by [`pretrain`].
pub fn init_model<T: Scalar>(cfg: &ExperimentConfig, input_dim: usize) -> Result<Model<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_INIT));
    Model::init(&cfg.model.dims(input_dim), &mut rng)
}

fn probe_config(cfg: &ExperimentConfig) -> ProbeConfig {
    ProbeConfig {
        seed: derive_seed(cfg.seed, TAG_PROBE).wrapping_add(cfg.probe.seed),
        ..cfg.probe.clone()
    }
}

/// Linear-probe accuracy of `model`'s frozen encoder under the run's protocol.
pub fn probe_model<T: Scalar>(
    cfg: &ExperimentConfig,
    g: &Graph<T>,
    model: &Model<T>,
) -> Result<Option<crate::probe::ProbeResult>> {
    if g.labels().is_none() {
        log::info!("dataset has no labels; skipping linear probe");
        return Ok(None);
    }
    evaluate(&model.encoder, g, &probe_config(cfg)).map(Some)
}

/// Self-supervised pretraining of a fresh model on `g` followed by linear
/// probing. A non-finite loss or gradient stops the run; the report then
/// holds every completed epoch and the reason.
pub fn pretrain<T: Scalar>(cfg: &ExperimentConfig, g: &Graph<T>) -> Result<Pretrained<T>> {
    cfg.augmentation.validate()?;
    cfg.loss.validate()?;
    cfg.sampling.validate()?;
    let mut model = init_model::<T>(cfg, g.feature_dim())?;
    let mut optimizer = Optimizer::<T>::new(cfg.optimizer)?;
    let aug = crate::graph::AugmentationConfig {
        seed: derive_seed(cfg.seed, TAG_AUGMENT).wrapping_add(cfg.augmentation.seed),
        ..cfg.augmentation.clone()
    };
    let s = &cfg.sampling;
    let planner = Planner::new(
        g,
        cfg.model.embedding,
        s.mode,
        s.method,
        s.node_ratio,
        s.dim_ratio,
        derive_seed(cfg.seed, TAG_PLAN),
    )?;

    let mut losses = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0u64;
    let mut stop = StopReason::Completed;
    let mut abort_reason = None;
    for epoch in 0..cfg.training.epochs {
        let started = Instant::now();
        match train_epoch(&mut model, &mut optimizer, g, &aug, &planner, cfg, epoch)? {
            Ok((loss, timings)) => {
                let total = loss.total.as_f64();
                losses.push(LossRecord::new(epoch, loss.cast(), started.elapsed().as_secs_f64() * 1e3, timings));
                if total < best - cfg.training.min_delta {
                    best = total;
                    since_best = 0;
                } else {
                    since_best += 1;
                }
                if cfg.training.patience > 0 && since_best >= cfg.training.patience {
                    log::info!("loss plateaued for {since_best} epochs; stopping at epoch {epoch}");
                    stop = StopReason::EarlyStopped;
                    break;
                }
            }
            Err(reason) => {
                log::error!("aborting at epoch {epoch}: {reason}");
                stop = StopReason::Aborted;
                abort_reason = Some(format!("epoch {epoch}: {reason}"));
                break;
            }
        }
    }

    let probe = if stop == StopReason::Aborted { None } else { probe_model(cfg, g, &model)? };
    let report = ExperimentReport {
        config: cfg.clone(),
        mode: s.mode,
        node_ratio: s.node_ratio,
        dim_ratio: s.dim_ratio,
        losses,
        probe,
        stop,
        abort_reason,
        model_checksum: model.checksum(),
        environment: Environment::capture(T::PRECISION),
    };
    Ok(Pretrained { model, report })
}

type EpochOutcome<T> = std::result::Result<(crate::objective::LossBreakdown<T>, crate::objective::TermTimings), String>;

/// One optimization step. The outer error is a hard failure; the inner one
/// a numerical abort.
fn train_epoch<T: Scalar>(
    model: &mut Model<T>,
    optimizer: &mut Optimizer<T>,
    g: &Graph<T>,
    aug: &crate::graph::AugmentationConfig,
    planner: &Planner,
    cfg: &ExperimentConfig,
    epoch: u64,
) -> Result<EpochOutcome<T>> {
    let views = augment(g, aug, epoch)?;
    let adj1 = Arc::new(normalize_adjacency(&views.view1));
    let adj2 = Arc::new(normalize_adjacency(&views.view2));
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let (_, z1) = model.forward_on_tape(&mut tape, &vars, &adj1, views.view1.features())?;
    let (_, z2) = model.forward_on_tape(&mut tape, &vars, &adj2, views.view2.features())?;
    let plan = planner.plan(epoch)?;
    let (loss, breakdown, timings) = tape.vicreg(z1, z2, &cfg.loss, &plan, planner.mode)?;
    if !breakdown.is_finite() {
        return Ok(Err(format!("non-finite loss {:?}", breakdown.total)));
    }
    let grads = tape.backward(loss)?;
    let grads: Vec<Matrix<T>> = grads
        .into_vec()
        .into_iter()
        .zip(model.tensors())
        .map(|(g, p)| g.unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
        .collect();
    match optimizer.step(&Model::<T>::TENSOR_NAMES, &mut model.tensors_mut(), &grads) {
        Ok(()) => Ok(Ok((breakdown, timings))),
        Err(e @ Error::NonFinite(_)) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.sbm.nodes_per_block = 30;
        cfg.dataset.sbm.feature_dim = 8;
        cfg.model.encoder_hidden = 16;
        cfg.model.representation = 16;
        cfg.model.expander_hidden = 32;
        cfg.model.embedding = 32;
        cfg.training.epochs = 5;
        cfg.probe.trials = 2;
        cfg
    }

    #[test]
    fn zero_epochs_keeps_init() {
        let mut cfg = small_cfg();
        cfg.training.epochs = 0;
        let g = cfg.dataset.load::<f64>().unwrap();
        let out = pretrain(&cfg, &g).unwrap();
        let init = init_model::<f64>(&cfg, g.feature_dim()).unwrap();
        assert_eq!(out.model, init);
        assert!(out.report.losses.is_empty());
    }

    #[test]
    fn plans_follow_mode() {
        let cfg = small_cfg();
        let g = cfg.dataset.load::<f64>().unwrap();
        for mode in LossMode::ALL {
            for method in [NodeMethod::Uniform, NodeMethod::Ricci] {
                let p = Planner::new(&g, 32, mode, method, 0.5, 0.25, 1).unwrap();
                let a = p.plan(3).unwrap();
                a.validate(60, 32).unwrap();
                assert_eq!(a.node_indices.as_ref().map(Vec::len), mode.samples_nodes().then_some(30));
                assert_eq!(a.dim_indices.as_ref().map(Vec::len), mode.samples_dims().then_some(8));
                assert_eq!(a, p.plan(3).unwrap());
            }
        }
        let p = Planner::new(&g, 32, LossMode::NodeSampled, NodeMethod::Uniform, 0.5, 1.0, 1).unwrap();
        assert_ne!(p.plan(0).unwrap().node_indices, p.plan(1).unwrap().node_indices);
    }

    #[test]
    fn nonfinite_aborts_with_partial_report() {
        let mut cfg = small_cfg();
        cfg.optimizer.lr = 1e30;
        cfg.optimizer.kind = crate::nn::OptimizerKind::Sgd;
        cfg.training.epochs = 50;
        let g = cfg.dataset.load::<f64>().unwrap();
        let out = pretrain(&cfg, &g).unwrap();
        assert_eq!(out.report.stop, StopReason::Aborted);
        assert!(out.report.abort_reason.is_some());
        assert!(out.report.losses.len() < 50);
        assert!(out.report.probe.is_none());
    }

    #[test]
    fn early_stop_on_plateau() {
        let mut cfg = small_cfg();
        cfg.training.epochs = 100;
        cfg.training.patience = 2;
        cfg.training.min_delta = 1e9;
        let g = cfg.dataset.load::<f64>().unwrap();
        let out = pretrain(&cfg, &g).unwrap();
        assert_eq!(out.report.stop, StopReason::EarlyStopped);
        assert_eq!(out.report.losses.len(), 3);
    }
}
