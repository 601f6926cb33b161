use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{auc, ConditionSpec, Pool, SkillRule};
use crate::data::{p_correct, Dataset, DatasetSplit, IrtParams, Item};
use crate::error::{LensError, Result};
use crate::model::{EvalLatent, InputObservation, LensModel, PredictRequest};
use crate::rng::{mix, stream, Stage};

/// How off-target input items are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffTargetMode {
    /// Uniform over the union of every other skill's items.
    #[default]
    Union,
    /// Uniform over the items of one other skill, itself drawn uniformly.
    SingleSkill,
}

/// Anything that scores query items given a student's inputs.
pub trait ResponsePredictor {
    fn name(&self) -> String;

    /// One probability per request; `students[i]` issued `requests[i]`.
    fn predict(&self, students: &[u32], requests: &[PredictRequest<'_>]) -> Result<Vec<f64>>;
}

impl ResponsePredictor for LensModel {
    fn name(&self) -> String {
        self.kind().to_string()
    }

    fn predict(&self, _students: &[u32], requests: &[PredictRequest<'_>]) -> Result<Vec<f64>> {
        self.predict_batch(requests, EvalLatent::PosteriorMean)
    }
}

/// A model evaluated with a chosen latent rule.
pub struct LatentPredictor<'a> {
    pub model: &'a LensModel,
    pub latent: EvalLatent,
}

impl ResponsePredictor for LatentPredictor<'_> {
    fn name(&self) -> String {
        self.model.kind().to_string()
    }

    fn predict(&self, _students: &[u32], requests: &[PredictRequest<'_>]) -> Result<Vec<f64>> {
        self.model.predict_batch(requests, self.latent)
    }
}

/// True 3-PL probabilities from the simulated proficiencies; ignores inputs.
pub struct OraclePredictor<'a> {
    dataset: &'a Dataset,
    params: IrtParams,
}

impl<'a> OraclePredictor<'a> {
    pub fn new(dataset: &'a Dataset, params: IrtParams) -> Result<Self> {
        if dataset.profiles().is_none() {
            return Err(LensError::Usage(
                "oracle predictions need simulated student profiles".into(),
            ));
        }
        Ok(OraclePredictor { dataset, params })
    }
}

impl ResponsePredictor for OraclePredictor<'_> {
    fn name(&self) -> String {
        "oracle".to_string()
    }

    fn predict(&self, students: &[u32], requests: &[PredictRequest<'_>]) -> Result<Vec<f64>> {
        students
            .iter()
            .zip(requests)
            .map(|(&s, r)| {
                let profile = self
                    .dataset
                    .profile(s)
                    .ok_or_else(|| LensError::Data(format!("no profile for student {s}")))?;
                let theta = *profile
                    .theta
                    .get(r.query.skill_id as usize)
                    .ok_or_else(|| {
                        LensError::Data(format!(
                            "student {s} has no proficiency for skill {}",
                            r.query.skill_id
                        ))
                    })?;
                Ok(p_correct(theta, self.params, r.query.b()))
            })
            .collect()
    }
}

/// AUC summary of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub model: String,
    pub condition_id: u8,
    pub auc_mean: f64,
    /// Sample standard deviation over repetitions divided by sqrt(n_reps).
    pub auc_stderr: f64,
    pub n_reps: usize,
    pub rep_aucs: Vec<f64>,
    pub seed: u64,
    /// Students lacking enough answered items for the condition.
    pub skipped_students: usize,
}

/// Query and input items drawn for one student in one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub student_id: u32,
    pub query: u32,
    pub label: bool,
    pub inputs: Vec<(u32, bool)>,
}

/// Samples evaluation draws for a fixed student set.
pub struct Harness<'a> {
    dataset: &'a Dataset,
    label: String,
    students: Vec<u32>,
    off_target: OffTargetMode,
    // pool -> skill -> sorted item ids
    pools: BTreeMap<Pool, BTreeMap<u32, Vec<u32>>>,
}

const PREDICT_CHUNK: usize = 512;

impl<'a> Harness<'a> {
    /// Evaluates on the split's test students.
    pub fn new(dataset: &'a Dataset, split: &DatasetSplit) -> Self {
        let mut pools: BTreeMap<Pool, BTreeMap<u32, Vec<u32>>> = BTreeMap::new();
        for item in dataset.items() {
            let pool = if split.items.is_seen(item.item_id) {
                Pool::Seen
            } else {
                Pool::Unseen
            };
            pools
                .entry(pool)
                .or_default()
                .entry(item.skill_id)
                .or_default()
                .push(item.item_id);
        }
        for skills in pools.values_mut() {
            for ids in skills.values_mut() {
                ids.sort_unstable();
            }
        }
        Harness {
            dataset,
            label: String::new(),
            students: split.students.test.clone(),
            off_target: OffTargetMode::Union,
            pools,
        }
    }

    pub fn with_students(mut self, students: Vec<u32>) -> Self {
        self.students = students;
        self
    }

    pub fn with_off_target(mut self, mode: OffTargetMode) -> Self {
        self.off_target = mode;
        self
    }

    /// Dataset name written into results.
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn students(&self) -> &[u32] {
        &self.students
    }

    fn pool(&self, pool: Pool, skill: u32) -> &[u32] {
        self.pools
            .get(&pool)
            .and_then(|skills| skills.get(&skill))
            .map_or(&[], Vec::as_slice)
    }

    fn skills(&self) -> BTreeSet<u32> {
        self.pools
            .values()
            .flat_map(|s| s.keys().copied())
            .collect()
    }

    /// Rejects conditions whose input pool cannot hold `n_input` items for
    /// some query skill, before any student is considered.
    pub fn check_feasible(&self, spec: &ConditionSpec) -> Result<()> {
        let skills = self.skills();
        for &q_skill in &skills {
            if self.pool(spec.query_source, q_skill).is_empty() {
                continue;
            }
            let same_pool =
                spec.input_source == spec.query_source && spec.input_skill == SkillRule::Target;
            let available = match (spec.input_skill, self.off_target) {
                (SkillRule::Target, _) => {
                    self.pool(spec.input_source, q_skill).len() - usize::from(same_pool)
                }
                (SkillRule::Other, OffTargetMode::Union) => skills
                    .iter()
                    .filter(|&&s| s != q_skill)
                    .map(|&s| self.pool(spec.input_source, s).len())
                    .sum(),
                (SkillRule::Other, OffTargetMode::SingleSkill) => skills
                    .iter()
                    .filter(|&&s| s != q_skill)
                    .map(|&s| self.pool(spec.input_source, s).len())
                    .min()
                    .unwrap_or(0),
            };
            if available < spec.n_input {
                return Err(LensError::Usage(format!(
                    "condition {}: the {} {} input pool for query skill {q_skill} holds {available} items, {} needed",
                    spec.condition_id, spec.input_source, spec.input_skill, spec.n_input
                )));
            }
        }
        Ok(())
    }

    /// Draws of one repetition. Query draws depend only on (seed, query
    /// pool, repetition), so conditions sharing a query pool share queries.
    pub fn draws(&self, spec: &ConditionSpec, rep: usize, seed: u64) -> Result<(Vec<Draw>, usize)> {
        let mut query_rng = stream(
            mix(&[seed, spec.query_source as u64]),
            Stage::EvalRepetition,
            rep as u64,
        );
        let mut input_rng = stream(
            mix(&[seed, 0x696e, u64::from(spec.condition_id)]),
            Stage::EvalRepetition,
            rep as u64,
        );
        let skills = self.skills();

        let mut draws = Vec::with_capacity(self.students.len());
        let mut skipped = 0;
        for &student in &self.students {
            let answered = |id: &u32| self.dataset.response(student, *id).is_some();
            let queries: Vec<u32> = skills
                .iter()
                .flat_map(|&s| self.pool(spec.query_source, s).iter().copied())
                .filter(answered)
                .collect();
            if queries.is_empty() {
                skipped += 1;
                continue;
            }
            let query = queries[query_rng.random_range(0..queries.len())];
            let q_skill = self
                .dataset
                .item(query)
                .expect("pooled items exist")
                .skill_id;

            let other_skills: Vec<u32> = skills.iter().copied().filter(|&s| s != q_skill).collect();
            let input_skills: Vec<u32> = match (spec.input_skill, self.off_target) {
                (SkillRule::Target, _) => vec![q_skill],
                (SkillRule::Other, OffTargetMode::Union) => other_skills,
                (SkillRule::Other, OffTargetMode::SingleSkill) => {
                    if other_skills.is_empty() {
                        Vec::new()
                    } else {
                        vec![other_skills[input_rng.random_range(0..other_skills.len())]]
                    }
                }
            };
            let candidates: Vec<u32> = input_skills
                .iter()
                .flat_map(|&s| self.pool(spec.input_source, s).iter().copied())
                .filter(|id| *id != query)
                .filter(answered)
                .collect();
            if candidates.len() < spec.n_input {
                skipped += 1;
                continue;
            }
            let mut picked: Vec<u32> = sample(&mut input_rng, candidates.len(), spec.n_input)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            picked.sort_unstable();
            let response = |id: u32| {
                self.dataset
                    .response(student, id)
                    .expect("filtered to answered items")
            };
            draws.push(Draw {
                student_id: student,
                query,
                label: response(query),
                inputs: picked.into_iter().map(|id| (id, response(id))).collect(),
            });
        }
        Ok((draws, skipped))
    }

    /// Scores and labels of one repetition.
    pub fn score_repetition(
        &self,
        predictor: &dyn ResponsePredictor,
        spec: &ConditionSpec,
        rep: usize,
        seed: u64,
    ) -> Result<(Vec<f64>, Vec<bool>, usize)> {
        let (draws, skipped) = self.draws(spec, rep, seed)?;
        let item = |id: u32| -> &Item { self.dataset.item(id).expect("pooled items exist") };
        let mut scores = Vec::with_capacity(draws.len());
        for chunk in draws.chunks(PREDICT_CHUNK) {
            let students: Vec<u32> = chunk.iter().map(|d| d.student_id).collect();
            let requests: Vec<PredictRequest<'_>> = chunk
                .iter()
                .map(|d| PredictRequest {
                    inputs: d
                        .inputs
                        .iter()
                        .map(|&(id, correct)| InputObservation {
                            item: item(id),
                            correct,
                        })
                        .collect(),
                    query: item(d.query),
                })
                .collect();
            scores.extend(predictor.predict(&students, &requests)?);
        }
        let labels = draws.iter().map(|d| d.label).collect();
        Ok((scores, labels, skipped))
    }

    /// AUC per repetition, summarized by mean and standard error.
    pub fn run_condition(
        &self,
        predictor: &dyn ResponsePredictor,
        spec: &ConditionSpec,
        n_reps: usize,
        seed: u64,
    ) -> Result<EvalResult> {
        if n_reps == 0 {
            return Err(LensError::Usage("n_reps must be >= 1".into()));
        }
        self.check_feasible(spec)?;
        let mut rep_aucs = Vec::with_capacity(n_reps);
        let mut skipped_students = 0;
        for rep in 0..n_reps {
            let (scores, labels, skipped) = self.score_repetition(predictor, spec, rep, seed)?;
            if scores.is_empty() {
                return Err(LensError::Usage(format!(
                    "condition {}: no student has enough answered items",
                    spec.condition_id
                )));
            }
            skipped_students = skipped_students.max(skipped);
            rep_aucs.push(auc(&scores, &labels)?);
        }
        let (auc_mean, auc_stderr) = mean_stderr(&rep_aucs);
        Ok(EvalResult {
            dataset: self.label.clone(),
            model: predictor.name(),
            condition_id: spec.condition_id,
            auc_mean,
            auc_stderr,
            n_reps,
            rep_aucs,
            seed,
            skipped_students,
        })
    }
}

/// Mean and standard error (sample std / sqrt(n)); the error of a single
/// value is zero.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
