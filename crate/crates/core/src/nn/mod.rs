//! Reverse-mode gradients over dense matrices, the GCN encoder, the
//! expander head and their optimizers.

mod checkpoint;
mod gcn;
mod optim;
mod tape;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, NamedTensor};
pub use gcn::{
    encode, encode_with, expand, normalize_adjacency, ExpanderParams, GcnEncoderParams, Model, ModelDims,
    ModelVars,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tape::{Gradients, Tape, Var};
