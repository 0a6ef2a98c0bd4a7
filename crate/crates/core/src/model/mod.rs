//! Encoders, contrastive losses, optimizer and staged training.

mod checkpoint;
mod encoder;
mod loss;
mod objective;
mod optim;
mod state;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointDims, CheckpointHeader, CheckpointMeta, CHECKPOINT_FORMAT,
};
pub use encoder::{
    degenerate_norm_count, EncoderParams, Mlp, TensorMut, TensorRef, TextEncoder, Tower, NORM_EPS,
};
pub use loss::{contrastive_loss, row_softmax, similarity_matrix};
pub use objective::{objective_loss, total_loss, Gradients, LossBreakdown, Objective};
pub use optim::{adamw_step, AdamW, AdamWConfig};
pub use state::{Batch, FreezeMask, ModelConfig, ModelState};
pub use train::{
    lambda_at, run_stage, run_stage_with, write_loss_csv, EpochLoss, Stage, StageReport,
    TrainConfig, LOSS_CSV_HEADER,
};
