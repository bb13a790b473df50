//! Feedforward and residual networks with analytic gradients, and their
//! optimizers.

mod checkpoint;
mod gradcheck;
mod mlp;
mod optim;

pub use checkpoint::{Checkpoint, Role, TrainingMetadata, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{experiment_architectures, gradient_check};
pub use mlp::{
    Activation, InputScaling, MlpModel, MlpSpec, Trace, CHUNK_ROWS, DEFAULT_LEAKY_SLOPE,
};
pub use optim::{OptState, OptimizerConfig, OptimizerKind, Schedule};
