//! Policy/value network, PPO, and the training loop.

mod checkpoint;
pub mod dist;
mod net;
mod ppo;
mod train;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use net::{ForwardCache, NetArch, PolicyNet};
pub use ppo::{
    compute_gae, loss_and_grad, normalize_advantages, ppo_update, ratios, Adam, LossCoefs, PpoStats, Sample,
    TrainConfig,
};
pub use train::{
    initial_net, run_episode, train, training_targets, ActionMode, CurvePoint, TrainOutcome, TrainingCurve,
};

use thiserror::Error;

use crate::env::EnvError;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("bad network architecture: {0}")]
    Architecture(String),
    #[error("observation width {got}, network expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, architecture needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite values during update: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}
