//! Losses, BPTT, Adam, closed-form readout fitting, and the training loops.

mod adam;
mod bptt;
mod config;
mod driver;
mod loss;
mod readout;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use bptt::{batch_loss, bptt_gradients, Gradients};
pub use config::{Architecture, TrainConfig};
pub use driver::{
    evaluate, grow, incremental_train, init_params, train_fixed, train_fixed_with_rng, Evaluation, MetricsRecord,
    Observer, StopReason, TrainOutcome,
};
pub use loss::{argmax, cross_entropy, nmse, softmax, LossKind};
pub use readout::{collect_subsampled_hidden, fit_readout};
