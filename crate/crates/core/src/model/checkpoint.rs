use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LensModel, ModelConfig, ModelKind};
use crate::embeddings::{EmbeddingProvider, EmbeddingSource, ProviderMode};
use crate::error::{LensError, Result};
use crate::nn::ParamSet;

pub const CHECKPOINT_FORMAT: &str = "lens-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training provenance stored next to the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epochs_completed: usize,
    /// Hash of the configuration that produced the weights; resuming under a
    /// different configuration is refused.
    pub config_hash: String,
    pub seed: u64,
    /// Seed of the difficulty/text shuffle applied to the items, if any.
    pub text_shuffle_seed: Option<u64>,
}

/// Self-describing JSON container for a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub provider_mode: ProviderMode,
    pub embedding_dim: usize,
    pub provider: EmbeddingSource,
    pub params: ParamSet,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model(model: &LensModel, meta: CheckpointMeta) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: model.kind(),
            config: *model.config(),
            provider_mode: model.provider().mode(),
            embedding_dim: model.provider().dim(),
            provider: model.provider().source().clone(),
            params: model.params().clone(),
            meta,
        }
    }

    pub fn into_model(self) -> Result<LensModel> {
        let provider = EmbeddingProvider::new(self.provider)?;
        if provider.mode() != self.provider_mode || provider.dim() != self.embedding_dim {
            return Err(LensError::Data(format!(
                "checkpoint declares a {:?} provider of width {}, but stores {:?} of width {}",
                self.provider_mode,
                self.embedding_dim,
                provider.mode(),
                provider.dim()
            )));
        }
        self.params.check_consistent()?;
        LensModel::from_parts(self.kind, self.config, provider, self.params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(LensError::Data(format!(
                "not a checkpoint (format {:?})",
                header.format
            )));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(LensError::Data(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| LensError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LensError::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
