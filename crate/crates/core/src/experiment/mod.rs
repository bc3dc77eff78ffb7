//! Experiment orchestration: configuration, pretraining, ratio sweeps,
//! covariance scaling benchmarks, the rotating-partition verification run
//! and report output.

mod bench;
mod config;
mod report;
mod sweep;
mod train;
mod verify;

pub use bench::{
    bench_loss_scaling, time_covariance, ScalingCheck, ScalingReport, ScalingRow, DIM_DOUBLING_BAND,
    MIN_ASSERTED_DIMS, NODE_DOUBLING_BAND,
};
pub use config::{
    derive_seed, BenchConfig, DatasetConfig, DatasetSource, ExperimentConfig, ModelConfig, SamplingConfig,
    TrainingConfig, VerifyConfig, DEFAULT_GRID,
};
pub use report::{emit_report, load_report, Environment, ExperimentReport, LossRecord};
pub use sweep::{cell_config, sweep, sweep_cells, CellSpec, SweepCell, SweepReport};
pub use train::{init_model, pretrain, probe_model, Planner, Pretrained, StopReason};
pub use verify::{run_verification, VerifyCheck, VerifyReport};

/// Sizes the global worker pool; `0` keeps one worker per core. Only the
/// first call in a process takes effect.
pub fn init_threads(threads: usize) -> crate::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))
}
