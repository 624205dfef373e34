//! Desk-scale stand-ins for real fine-tuned models: synthetic Gaussian-blob
//! classification tasks and a small tanh MLP trained by hand-written backprop.

mod mlp;
mod multitask;
mod tasks;
mod train;

pub use mlp::MlpArch;
pub use multitask::{MultiTaskObjective, AGGREGATION};
pub use tasks::{generate_task, load_suite, CalibrationBatch, TaskSpec};
pub use train::{accuracy, finetune};
