use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{train, TrainPlan};
use crate::data::{Dataset, DatasetSplit};
use crate::embeddings::EmbeddingProvider;
use crate::error::{LensError, Result};
use crate::eval::{build_condition, Harness};
use crate::model::{ModelConfig, ModelKind};
use crate::rng::{mix, Stage};

/// Candidate values per searched hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lr: Vec<f64>,
    pub dist_dim: Vec<usize>,
    pub encoder_hidden_dim: Vec<usize>,
    pub accumulator_hidden_dim: Vec<usize>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let empty: Vec<&str> = [
            ("lr", self.lr.is_empty()),
            ("dist_dim", self.dist_dim.is_empty()),
            ("encoder_hidden_dim", self.encoder_hidden_dim.is_empty()),
            (
                "accumulator_hidden_dim",
                self.accumulator_hidden_dim.is_empty(),
            ),
        ]
        .into_iter()
        .filter_map(|(name, e)| e.then_some(name))
        .collect();
        if empty.is_empty() {
            Ok(())
        } else {
            Err(LensError::Usage(format!(
                "grid lists must be non-empty: {}",
                empty.join(", ")
            )))
        }
    }

    /// Every combination, in list order.
    pub fn points(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &lr in &self.lr {
            for &d in &self.dist_dim {
                for &e in &self.encoder_hidden_dim {
                    for &a in &self.accumulator_hidden_dim {
                        out.push(ModelConfig::new(lr, d, e, a));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: ModelConfig,
    pub validation_auc: f64,
    pub validation_elbo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub best: ModelConfig,
    /// Best first.
    pub leaderboard: Vec<GridEntry>,
}

fn rank(a: &GridEntry, b: &GridEntry) -> Ordering {
    b.validation_auc
        .total_cmp(&a.validation_auc)
        .then(a.config.lr.total_cmp(&b.config.lr))
        .then(a.config.dist_dim.cmp(&b.config.dist_dim))
        .then(
            a.config
                .encoder_hidden_dim
                .cmp(&b.config.encoder_hidden_dim),
        )
        .then(
            a.config
                .accumulator_hidden_dim
                .cmp(&b.config.accumulator_hidden_dim),
        )
}

/// Trains one model per grid point with `plan` (whose config is replaced by
/// the point) and ranks them by condition-1 AUC on validation students.
pub fn grid_search(
    grid: &GridSpec,
    plan: &TrainPlan,
    kind: ModelKind,
    dataset: &Dataset,
    split: &DatasetSplit,
    provider: &EmbeddingProvider,
    probe_reps: usize,
) -> Result<GridOutcome> {
    grid.validate()?;
    if split.students.validation.is_empty() {
        return Err(LensError::Usage(
            "grid search needs validation students".into(),
        ));
    }
    let probe = build_condition(1)?;
    let harness = Harness::new(dataset, split).with_students(split.students.validation.clone());
    let probe_seed = mix(&[plan.seed, Stage::GridProbe as u64]);

    let mut leaderboard = Vec::new();
    for config in grid.points() {
        let config = ModelConfig {
            kl_weight: plan.config.kl_weight,
            ..config
        };
        let point_plan = TrainPlan { config, ..*plan };
        let outcome = train(&point_plan, kind, dataset, split, provider.clone())?;
        let result = harness.run_condition(&outcome.model, &probe, probe_reps, probe_seed)?;
        leaderboard.push(GridEntry {
            config,
            validation_auc: result.auc_mean,
            validation_elbo: outcome.log.last().map_or(f64::NAN, |l| l.validation_elbo),
        });
    }
    leaderboard.sort_by(rank);
    Ok(GridOutcome {
        best: leaderboard[0].config,
        leaderboard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(auc: f64, lr: f64, d: usize, e: usize, a: usize) -> GridEntry {
        GridEntry {
            config: ModelConfig::new(lr, d, e, a),
            validation_auc: auc,
            validation_elbo: 0.0,
        }
    }

    #[test]
    fn points_cover_the_product() {
        let grid = GridSpec {
            lr: vec![0.001, 0.005],
            dist_dim: vec![16, 64],
            encoder_hidden_dim: vec![30, 90],
            accumulator_hidden_dim: vec![8, 24],
        };
        assert_eq!(grid.points().len(), 16);
        let empty = GridSpec { lr: vec![], ..grid };
        assert!(matches!(empty.validate(), Err(LensError::Usage(m)) if m.contains("lr")));
    }

    #[test]
    fn ties_prefer_smaller_settings() {
        let mut entries = [
            entry(0.7, 0.005, 16, 30, 8),
            entry(0.7, 0.001, 64, 30, 8),
            entry(0.7, 0.001, 16, 90, 8),
            entry(0.7, 0.001, 16, 30, 24),
            entry(0.71, 0.01, 64, 90, 24),
        ];
        entries.sort_by(rank);
        let order: Vec<(f64, usize, usize, usize)> = entries
            .iter()
            .map(|e| {
                (
                    e.config.lr,
                    e.config.dist_dim,
                    e.config.encoder_hidden_dim,
                    e.config.accumulator_hidden_dim,
                )
            })
            .collect();
        assert_eq!(
            order,
            vec![
                (0.01, 64, 90, 24),
                (0.001, 16, 30, 24),
                (0.001, 16, 90, 8),
                (0.001, 64, 30, 8),
                (0.005, 16, 30, 8)
            ]
        );
    }
}
