//! Dual-discriminator GAN over compressed tile streams.

pub mod bridge;
pub mod config;
pub mod infer;
pub mod loss;
pub mod nets;
pub mod train;

pub use config::{GeneratorConfig, GlobalDiscConfig, InputKind, LocalDiscConfig, LossWeights, ModelConfig, OptimizerConfig, TrainConfig};
pub use loss::{bce_loss, extract_patches, focal_loss, reassemble_patches, total_loss};
pub use nets::{Generator, GlobalDiscriminator, LocalDiscriminator};
pub use train::{epoch_order, input_from_stream, train, MetricsRecord, Model, Sample};
