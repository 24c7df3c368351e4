//! Convolutional capacity regressor over packed 5×5×2 segments, with Adam
//! training, transfer fine-tuning and evaluation metrics.

mod float;
mod gradcheck;
mod io;
mod model;
mod train;

pub use float::{matmul, Float};
pub use gradcheck::{gradient_check, GradCheck};
pub use io::{TensorInfo, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use model::{to_channels_last, LayerShape, Mode, Network, NetworkSpec, Tape, BN_EPS, BN_MOMENTUM};
pub use train::{
    adam_update, evaluate, metrics_from, predict, replicate, train, train_observed, transfer_finetune, transfer_set, transfer_snapshots,
    AdamConfig, AdamState,
    CellMetrics, EpochStats, Metrics, Replication, TrainSet, TrainingConfig, TransferConfig,
};
