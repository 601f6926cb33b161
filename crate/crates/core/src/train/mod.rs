//! Training loop and grid search.

mod grid;

pub use grid::{grid_search, GridEntry, GridOutcome, GridSpec};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetSplit, Item};
use crate::embeddings::EmbeddingProvider;
use crate::error::{LensError, Result};
use crate::model::{InputObservation, LensModel, ModelConfig, ModelKind, TrainingExample};
use crate::nn::Graph;
use crate::rng::{stream, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub config: ModelConfig,
    pub seed: u64,
    /// Range of the per-student, per-epoch fraction of responses used as inputs.
    pub input_fraction: (f64, f64),
    /// Epochs over which the KL weight ramps linearly up to its configured
    /// value; 0 disables the ramp.
    #[serde(default)]
    pub kl_warmup_epochs: usize,
    /// Also reconstruct the input responses, not only the held-out queries.
    #[serde(default = "default_true")]
    pub reconstruct_inputs: bool,
}

fn default_true() -> bool {
    true
}

impl TrainPlan {
    pub fn new(config: ModelConfig, epochs: usize, seed: u64) -> Self {
        TrainPlan {
            epochs,
            batch_size: 32,
            config,
            seed,
            input_fraction: (0.3, 0.9),
            kl_warmup_epochs: 0,
            reconstruct_inputs: true,
        }
    }

    /// KL weight used during 0-based `epoch`.
    pub fn kl_weight_at(&self, epoch: usize) -> f64 {
        if epoch >= self.kl_warmup_epochs {
            self.config.kl_weight
        } else {
            self.config.kl_weight * epoch as f64 / self.kl_warmup_epochs as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        let (lo, hi) = self.input_fraction;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            problems.push(format!(
                "input_fraction ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"
            ));
        }
        if let Err(LensError::Usage(msg)) = self.config.validate() {
            problems.push(msg);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LensError::Usage(problems.join("; ")))
        }
    }
}

/// Loss summary of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_elbo: f64,
    pub validation_elbo: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: LensModel,
    pub log: Vec<EpochLog>,
    /// Students passed over because they had fewer than two seen responses.
    pub skipped_students: usize,
}

/// Splits one student's responses into inputs and queries. A fraction drawn
/// uniformly from `fraction` of the responses (at least one, leaving at
/// least one) becomes the input set. Returns `None` for fewer than two
/// responses.
pub fn partition_student_batch<'a>(
    responses: &[(&'a Item, bool)],
    fraction: (f64, f64),
    rng: &mut impl Rng,
) -> Option<(Vec<InputObservation<'a>>, Vec<InputObservation<'a>>)> {
    let n = responses.len();
    if n < 2 {
        return None;
    }
    let f = if fraction.0 < fraction.1 {
        rng.random_range(fraction.0..=fraction.1)
    } else {
        fraction.0
    };
    let n_in = ((f * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let to_obs = |&i: &usize| InputObservation {
        item: responses[i].0,
        correct: responses[i].1,
    };
    let inputs = order[..n_in].iter().map(to_obs).collect();
    let queries = order[n_in..].iter().map(to_obs).collect();
    Some((inputs, queries))
}

/// Seen-item responses of each listed student.
pub(crate) fn seen_responses<'a>(
    dataset: &'a Dataset,
    seen: &BTreeSet<u32>,
    students: &[u32],
) -> Vec<Vec<(&'a Item, bool)>> {
    students
        .iter()
        .map(|&s| {
            dataset
                .responses_of(s)
                .iter()
                .filter(|(item, _)| seen.contains(item))
                .map(|&(item, correct)| {
                    (
                        dataset.item(item).expect("dataset items are validated"),
                        correct,
                    )
                })
                .collect()
        })
        .collect()
}

fn partition_all<'a>(
    responses: &[Vec<(&'a Item, bool)>],
    order: &[usize],
    plan: &TrainPlan,
    rng: &mut impl Rng,
) -> (Vec<TrainingExample<'a>>, usize) {
    let mut examples = Vec::with_capacity(order.len());
    let mut skipped = 0;
    for &s in order {
        match partition_student_batch(&responses[s], plan.input_fraction, rng) {
            Some((inputs, mut queries)) => {
                if plan.reconstruct_inputs {
                    queries.extend_from_slice(&inputs);
                }
                examples.push(TrainingExample { inputs, queries })
            }
            None => skipped += 1,
        }
    }
    (examples, skipped)
}

/// Initializes a model from `plan.seed` and trains it.
pub fn train(
    plan: &TrainPlan,
    kind: ModelKind,
    dataset: &Dataset,
    split: &DatasetSplit,
    provider: EmbeddingProvider,
) -> Result<TrainOutcome> {
    plan.validate()?;
    let model = LensModel::new(kind, plan.config, provider, plan.seed)?;
    train_from(plan, model, 0, dataset, split, |_| {})
}

/// Continues training `model` from `epochs_done` up to `plan.epochs`,
/// calling `on_epoch` after each epoch. Every epoch draws from its own
/// random stream, so a resumed run reproduces an uninterrupted one.
pub fn train_from(
    plan: &TrainPlan,
    mut model: LensModel,
    epochs_done: usize,
    dataset: &Dataset,
    split: &DatasetSplit,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    plan.validate()?;
    if model.config() != &plan.config {
        return Err(LensError::Usage(
            "model configuration differs from the training plan".into(),
        ));
    }
    if split.students.train.is_empty() {
        return Err(LensError::Usage("training split is empty".into()));
    }
    let seen = &split.items.seen;
    let train_responses = seen_responses(dataset, seen, &split.students.train);
    let val_responses = seen_responses(dataset, seen, &split.students.validation);
    let k = plan.config.dist_dim;
    let mut log = Vec::new();
    let mut skipped_students = 0;

    for epoch in epochs_done..plan.epochs {
        let mut rng = stream(plan.seed, Stage::TrainEpoch, epoch as u64);
        let mut order: Vec<usize> = (0..train_responses.len()).collect();
        order.shuffle(&mut rng);
        let (examples, skipped) = partition_all(&train_responses, &order, plan, &mut rng);
        skipped_students = skipped;
        if examples.is_empty() {
            return Err(LensError::Data(
                "no training student has two or more seen responses".into(),
            ));
        }

        let mut total = 0.0;
        for (b, batch) in examples.chunks(plan.batch_size).enumerate() {
            let noise = crate::model::standard_normal(&mut rng, batch.len(), k);
            let mut g = Graph::new();
            let loss = model.elbo_graph_weighted(&mut g, batch, noise, plan.kl_weight_at(epoch))?;
            let value = g.value(loss).data()[0];
            let abort = |model: &LensModel| LensError::NumericAbort {
                epoch: epoch + 1,
                batch: b,
                norms: model.params().norm_report(),
            };
            if !value.is_finite() {
                return Err(abort(&model));
            }
            let grads = g.backward(loss, model.params())?;
            model.params_mut().adam_step(&grads, plan.config.lr)?;
            if !model.params().is_finite() {
                return Err(abort(&model));
            }
            total += value * batch.len() as f64;
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            train_elbo: total / examples.len() as f64,
            validation_elbo: validation_elbo(&model, plan, &val_responses)?,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome {
        model,
        log,
        skipped_students,
    })
}

/// Mean ELBO over validation students under a fixed partition and noise.
fn validation_elbo(
    model: &LensModel,
    plan: &TrainPlan,
    responses: &[Vec<(&Item, bool)>],
) -> Result<f64> {
    if responses.is_empty() {
        return Ok(f64::NAN);
    }
    let mut rng = stream(plan.seed, Stage::Validation, 0);
    let order: Vec<usize> = (0..responses.len()).collect();
    let (examples, _) = partition_all(responses, &order, plan, &mut rng);
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for batch in examples.chunks(plan.batch_size) {
        let noise = crate::model::standard_normal(&mut rng, batch.len(), plan.config.dist_dim);
        total += model.elbo_loss(batch, noise)? * batch.len() as f64;
    }
    Ok(total / examples.len() as f64)
}
