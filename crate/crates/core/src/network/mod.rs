//! The full network: conv stack, recurrent stack, softmax classifier, plus
//! loss, optimizer, training loop, gradient check and checkpoints.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod model;
mod reference;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader,
    TensorEntry, MAGIC, VERSION,
};
pub use dense::{cross_entropy_loss, softmax, DenseGrads, DenseLayer, LOG_CLAMP};
pub use gradcheck::{
    grad_check, grad_check_case, relative_error, Corruption, GradCheckOptions, GradCheckReport, NumericPrecision,
    TensorCheck, LOSS_GAP_LIMIT,
};
pub use model::{
    build_model, format_summary, ArchConfig, HssnbModel, LayerSummary, ModelCache,
    PAPER_KERNELS_2D, PAPER_KERNELS_3D, SMALL_KERNELS_2D, SMALL_KERNELS_3D,
};
pub use train::{
    evaluate, predict, predict_patch, train, train_with_callback, EpochStats, History, Seeds,
    TrainConfig,
};
