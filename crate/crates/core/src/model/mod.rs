//! The partial VAE shared by LENS and Text-LENS.

mod checkpoint;
mod config;
mod lens;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{Benchmark, ModelConfig, ModelKind};
pub(crate) use lens::standard_normal;
pub use lens::{
    EvalLatent, InputObservation, LatentState, LensModel, PredictRequest, TrainingExample,
};
