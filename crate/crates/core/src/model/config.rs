use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Items identified by one-hot ids.
    Lens,
    /// Items represented by text-derived vectors.
    TextLens,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lens => "LENS",
            ModelKind::TextLens => "Text-LENS",
        })
    }
}

/// Datasets with published hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    Eedi,
    LlmSim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lr: f64,
    /// Latent dimension.
    pub dist_dim: usize,
    pub encoder_hidden_dim: usize,
    pub accumulator_hidden_dim: usize,
    pub decoder_hidden_dim: usize,
    pub item_projection_dim: usize,
    /// Weight of the KL term in the ELBO.
    pub kl_weight: f64,
}

impl ModelConfig {
    /// Item projection width follows the latent width and the decoder hidden
    /// layer follows the encoder's.
    pub fn new(
        lr: f64,
        dist_dim: usize,
        encoder_hidden_dim: usize,
        accumulator_hidden_dim: usize,
    ) -> Self {
        ModelConfig {
            lr,
            dist_dim,
            encoder_hidden_dim,
            accumulator_hidden_dim,
            decoder_hidden_dim: encoder_hidden_dim,
            item_projection_dim: dist_dim,
            kl_weight: 1.0,
        }
    }

    /// Published per-dataset settings.
    pub fn published(benchmark: Benchmark, kind: ModelKind) -> Self {
        match (benchmark, kind) {
            (Benchmark::Eedi, _) => ModelConfig::new(0.001, 16, 30, 8),
            (Benchmark::LlmSim, ModelKind::Lens) => ModelConfig::new(0.001, 64, 90, 24),
            (Benchmark::LlmSim, ModelKind::TextLens) => ModelConfig::new(0.005, 64, 30, 24),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("dist_dim", self.dist_dim),
            ("encoder_hidden_dim", self.encoder_hidden_dim),
            ("accumulator_hidden_dim", self.accumulator_hidden_dim),
            ("decoder_hidden_dim", self.decoder_hidden_dim),
            ("item_projection_dim", self.item_projection_dim),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            problems.push(format!("kl_weight must be >= 0, got {}", self.kl_weight));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LensError::Usage(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_settings() {
        let t = ModelConfig::published(Benchmark::LlmSim, ModelKind::TextLens);
        assert_eq!(
            (
                t.lr,
                t.dist_dim,
                t.encoder_hidden_dim,
                t.accumulator_hidden_dim
            ),
            (0.005, 64, 30, 24)
        );
        let l = ModelConfig::published(Benchmark::LlmSim, ModelKind::Lens);
        assert_eq!(
            (
                l.lr,
                l.dist_dim,
                l.encoder_hidden_dim,
                l.accumulator_hidden_dim
            ),
            (0.001, 64, 90, 24)
        );
        for kind in [ModelKind::Lens, ModelKind::TextLens] {
            let e = ModelConfig::published(Benchmark::Eedi, kind);
            assert_eq!(
                (
                    e.lr,
                    e.dist_dim,
                    e.encoder_hidden_dim,
                    e.accumulator_hidden_dim
                ),
                (0.001, 16, 30, 8)
            );
        }
        assert_eq!(t.item_projection_dim, t.dist_dim);
        assert_eq!(t.kl_weight, 1.0);
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut c = ModelConfig::new(0.0, 0, 4, 0);
        c.kl_weight = -1.0;
        let msg = c.validate().unwrap_err().to_string();
        for needle in ["dist_dim", "accumulator_hidden_dim", "kl_weight", "lr"] {
            assert!(msg.contains(needle), "{msg}");
        }
    }
}
