//! Synthetic multi-task data, a small dense classifier and its trainer. These
//! produce the source-model pool that every merge scheme combines.

pub mod mlp;
pub mod pool;
pub mod tasks;
pub mod train;

pub use mlp::{argmax, predictions, zero_one_risk, Activation, MlpSpec};
pub use pool::{build_pool, PoolRecipe};
pub use tasks::{gen_tasks, sample_set, LabeledSet, SyntheticTask, TaskFamily};
pub use train::{loss_and_grad, train, TrainHyper};
