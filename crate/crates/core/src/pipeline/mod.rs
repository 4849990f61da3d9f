//! Desk-scale training pipeline on synthetic concealed-object scenes.

mod config;
mod loss;
mod model;
mod synth;
mod train;

pub use config::TrainConfig;
pub use loss::{joint_loss, LossBreakdown};
pub use model::{ForwardOutput, LayerGuidance, OutputGrads, ToyArch, ToyModel, REFINE_LAYERS};
pub use synth::{sample_seed, synth_dataset, synth_sample, synth_sample_with_sigma, SynthSample};
pub use train::{
    evaluate_model, moving_average, train, train_synthetic, Adam, EpochStats, TrainOutcome,
};
