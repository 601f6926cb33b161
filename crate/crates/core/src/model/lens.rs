use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelKind};
use crate::data::Item;
use crate::embeddings::EmbeddingProvider;
use crate::error::{LensError, Result};
use crate::nn::{AdamConfig, Graph, NodeId, ParamSet, Tensor, LOGVAR_LIMIT, PROB_EPS};
use crate::rng::{mix, stream, Stage};

// Parameter layout. The encoder layer acts on concat(item, response) and the
// decoder's hidden layer on concat(z, item); each is stored as two weight
// blocks so the item-dependent half can be computed once per distinct item:
//   concat(a, b) · [Wa; Wb] = a · Wa + b · Wb
const PROJ_W: usize = 0;
const PROJ_B: usize = 1;
const ENC_W_ITEM: usize = 2;
const ENC_W_RESP: usize = 3;
const ENC_B: usize = 4;
const ACC_W: usize = 5;
const ACC_B: usize = 6;
const MU_W: usize = 7;
const MU_B: usize = 8;
const LV_W: usize = 9;
const LV_B: usize = 10;
const DEC_W_LATENT: usize = 11;
const DEC_W_ITEM: usize = 12;
const DEC_B: usize = 13;
const OUT_W: usize = 14;
const OUT_B: usize = 15;

/// An answered item.
#[derive(Debug, Clone, Copy)]
pub struct InputObservation<'a> {
    pub item: &'a Item,
    pub correct: bool,
}

/// One student's observed inputs and labelled query items.
#[derive(Debug, Clone)]
pub struct TrainingExample<'a> {
    pub inputs: Vec<InputObservation<'a>>,
    pub queries: Vec<InputObservation<'a>>,
}

#[derive(Debug, Clone)]
pub struct PredictRequest<'a> {
    pub inputs: Vec<InputObservation<'a>>,
    pub query: &'a Item,
}

/// How the latent is turned into a prediction at evaluation time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EvalLatent {
    /// Decode the posterior mean.
    #[default]
    PosteriorMean,
    /// Average the decoded probability over reparameterized samples.
    SampleAverage { samples: usize, seed: u64 },
}

/// Posterior of one student.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    /// `(noise, z)` pairs, present when sampled.
    pub samples: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Items of a batch laid out for one graph.
struct Prepared {
    items: Tensor,
    in_rows: Vec<usize>,
    in_resp: Vec<f64>,
    in_seg: Vec<usize>,
    q_rows: Vec<usize>,
    q_seg: Vec<usize>,
    n_students: usize,
}

/// Graph nodes of an encoded batch.
pub(crate) struct Encoded {
    proj: NodeId,
    pub(crate) mu: NodeId,
    pub(crate) logvar: NodeId,
}

pub struct LensModel {
    kind: ModelKind,
    config: ModelConfig,
    provider: EmbeddingProvider,
    params: ParamSet,
    cache: RwLock<HashMap<u32, Arc<Vec<f64>>>>,
}

impl Clone for LensModel {
    fn clone(&self) -> Self {
        LensModel {
            kind: self.kind,
            config: self.config,
            provider: self.provider.clone(),
            params: self.params.clone(),
            cache: RwLock::default(),
        }
    }
}

impl std::fmt::Debug for LensModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LensModel")
            .field("kind", &self.kind)
            .field("config", &self.config)
            .field("embedding_dim", &self.provider.dim())
            .finish()
    }
}

fn layer_shapes(config: &ModelConfig, d_emb: usize) -> Vec<(&'static str, [usize; 2], usize)> {
    let (p, h, a, k, hd) = (
        config.item_projection_dim,
        config.encoder_hidden_dim,
        config.accumulator_hidden_dim,
        config.dist_dim,
        config.decoder_hidden_dim,
    );
    // (name, shape, fan-in; 0 means zero init). The latent heads start at
    // zero so the initial posterior equals the prior whatever the pooled sum.
    vec![
        ("projection.weight", [d_emb, p], d_emb),
        ("projection.bias", [1, p], 0),
        ("encoder.item_weight", [p, h], p + 1),
        ("encoder.response_weight", [1, h], p + 1),
        ("encoder.bias", [1, h], 0),
        ("accumulator.weight", [h, a], h),
        ("accumulator.bias", [1, a], 0),
        ("mu.weight", [a, k], 0),
        ("mu.bias", [1, k], 0),
        ("logvar.weight", [a, k], 0),
        ("logvar.bias", [1, k], 0),
        ("decoder.latent_weight", [k, hd], k + p),
        ("decoder.item_weight", [p, hd], k + p),
        ("decoder.bias", [1, hd], 0),
        ("output.weight", [hd, 1], hd),
        ("output.bias", [1, 1], 0),
    ]
}

impl LensModel {
    /// Fan-in uniform weights; zero biases and latent heads.
    pub fn new(
        kind: ModelKind,
        config: ModelConfig,
        provider: EmbeddingProvider,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = stream(seed, Stage::Init, 0);
        Self::build(kind, config, provider, |shape, fan_in| {
            let n = shape[0] * shape[1];
            if fan_in == 0 {
                return vec![0.0; n];
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        })
    }

    /// Every weight and bias zero.
    pub fn zeroed(
        kind: ModelKind,
        config: ModelConfig,
        provider: EmbeddingProvider,
    ) -> Result<Self> {
        Self::build(kind, config, provider, |shape, _| {
            vec![0.0; shape[0] * shape[1]]
        })
    }

    fn build(
        kind: ModelKind,
        config: ModelConfig,
        provider: EmbeddingProvider,
        mut init: impl FnMut([usize; 2], usize) -> Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new(AdamConfig::default());
        for (name, shape, fan_in) in layer_shapes(&config, provider.dim()) {
            params.push(name, Tensor::new(shape.to_vec(), init(shape, fan_in))?);
        }
        Ok(LensModel {
            kind,
            config,
            provider,
            params,
            cache: RwLock::default(),
        })
    }

    /// Reassembles a model from stored parameters, checking every shape.
    pub(crate) fn from_parts(
        kind: ModelKind,
        config: ModelConfig,
        provider: EmbeddingProvider,
        params: ParamSet,
    ) -> Result<Self> {
        config.validate()?;
        let expected = layer_shapes(&config, provider.dim());
        if params.len() != expected.len() {
            return Err(LensError::Data(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (i, (name, shape, _)) in expected.iter().enumerate() {
            if params.name(i) != *name || params.value(i).shape() != shape {
                return Err(LensError::Data(format!(
                    "parameter {i} is {} {:?}, expected {name} {shape:?}",
                    params.name(i),
                    params.value(i).shape()
                )));
            }
        }
        Ok(LensModel {
            kind,
            config,
            provider,
            params,
            cache: RwLock::default(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn provider(&self) -> &EmbeddingProvider {
        &self.provider
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Swaps the embedding provider (same mode and width), e.g. after item
    /// texts change. Cached vectors are dropped.
    pub fn set_provider(&mut self, provider: EmbeddingProvider) -> Result<()> {
        if provider.dim() != self.provider.dim() || provider.mode() != self.provider.mode() {
            return Err(LensError::Usage(format!(
                "replacement provider {:?}/{} does not match {:?}/{}",
                provider.mode(),
                provider.dim(),
                self.provider.mode(),
                self.provider.dim()
            )));
        }
        self.provider = provider;
        self.clear_cache();
        Ok(())
    }

    pub fn clear_cache(&self) {
        self.cache
            .write()
            .expect("embedding cache poisoned")
            .clear();
    }

    fn item_vector(&self, item: &Item) -> Result<Arc<Vec<f64>>> {
        if let Some(v) = self
            .cache
            .read()
            .expect("embedding cache poisoned")
            .get(&item.item_id)
        {
            return Ok(Arc::clone(v));
        }
        let v = Arc::new(self.provider.embed(item)?);
        self.cache
            .write()
            .expect("embedding cache poisoned")
            .insert(item.item_id, Arc::clone(&v));
        Ok(v)
    }

    /// Lays out a batch. Each student's inputs are ordered by (item id,
    /// response) so pooling sums in a canonical order.
    fn prepare(
        &self,
        inputs: &[&[InputObservation<'_>]],
        queries: &[Vec<&Item>],
    ) -> Result<Prepared> {
        debug_assert_eq!(inputs.len(), queries.len());
        let mut rows: BTreeMap<u32, &Item> = BTreeMap::new();
        for obs in inputs.iter().flat_map(|s| s.iter()) {
            rows.insert(obs.item.item_id, obs.item);
        }
        for q in queries.iter().flatten() {
            rows.insert(q.item_id, q);
        }
        let index: HashMap<u32, usize> = rows.keys().enumerate().map(|(i, &id)| (id, i)).collect();
        let d = self.provider.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for item in rows.values() {
            data.extend_from_slice(&self.item_vector(item)?);
        }
        let items = Tensor::new(vec![rows.len(), d], data)?;

        let mut prepared = Prepared {
            items,
            in_rows: Vec::new(),
            in_resp: Vec::new(),
            in_seg: Vec::new(),
            q_rows: Vec::new(),
            q_seg: Vec::new(),
            n_students: inputs.len(),
        };
        for (s, student_inputs) in inputs.iter().enumerate() {
            let mut ordered: Vec<(u32, bool)> = student_inputs
                .iter()
                .map(|o| (o.item.item_id, o.correct))
                .collect();
            ordered.sort_unstable();
            for (id, correct) in ordered {
                prepared.in_rows.push(index[&id]);
                prepared.in_resp.push(if correct { 1.0 } else { 0.0 });
                prepared.in_seg.push(s);
            }
        }
        for (s, qs) in queries.iter().enumerate() {
            for q in qs {
                prepared.q_rows.push(index[&q.item_id]);
                prepared.q_seg.push(s);
            }
        }
        Ok(prepared)
    }

    fn encode_graph(&self, g: &mut Graph, batch: &Prepared) -> Result<Encoded> {
        let p = &self.params;
        let x = g.constant(batch.items.clone());
        let (pw, pb) = (g.param(p, PROJ_W), g.param(p, PROJ_B));
        let proj = g.affine(x, pw, pb)?;

        let (ew, eb) = (g.param(p, ENC_W_ITEM), g.param(p, ENC_B));
        let item_part = g.affine(proj, ew, eb)?;
        let per_input = g.gather_rows(item_part, batch.in_rows.clone())?;
        let resp = g.constant(Tensor::column(&batch.in_resp));
        let rw = g.param(p, ENC_W_RESP);
        let resp_part = g.matmul(resp, rw)?;
        let pre = g.add(per_input, resp_part)?;
        let h = g.relu(pre);
        let pooled = g.segment_sum(h, batch.in_seg.clone(), batch.n_students)?;

        let (aw, ab) = (g.param(p, ACC_W), g.param(p, ACC_B));
        let acc = g.affine(pooled, aw, ab)?;
        let acc = g.relu(acc);
        let (mw, mb) = (g.param(p, MU_W), g.param(p, MU_B));
        let mu = g.affine(acc, mw, mb)?;
        let (lw, lb) = (g.param(p, LV_W), g.param(p, LV_B));
        let lv = g.affine(acc, lw, lb)?;
        let logvar = g.clamp(lv, -LOGVAR_LIMIT, LOGVAR_LIMIT);
        Ok(Encoded { proj, mu, logvar })
    }

    fn decode_graph(
        &self,
        g: &mut Graph,
        proj: NodeId,
        z: NodeId,
        batch: &Prepared,
    ) -> Result<NodeId> {
        let p = &self.params;
        let zw = g.param(p, DEC_W_LATENT);
        let latent_part = g.matmul(z, zw)?;
        let (iw, b) = (g.param(p, DEC_W_ITEM), g.param(p, DEC_B));
        let item_part = g.affine(proj, iw, b)?;
        let per_z = g.gather_rows(latent_part, batch.q_seg.clone())?;
        let per_item = g.gather_rows(item_part, batch.q_rows.clone())?;
        let pre = g.add(per_z, per_item)?;
        let h = g.relu(pre);
        let (ow, ob) = (g.param(p, OUT_W), g.param(p, OUT_B));
        let logit = g.affine(h, ow, ob)?;
        let prob = g.sigmoid(logit);
        Ok(g.clamp(prob, PROB_EPS, 1.0 - PROB_EPS))
    }

    /// Posterior mean and log-variance of one student's latent state.
    pub fn encode(&self, inputs: &[InputObservation<'_>]) -> Result<LatentState> {
        let batch = self.prepare(&[inputs], &[Vec::new()])?;
        let mut g = Graph::new();
        let enc = self.encode_graph(&mut g, &batch)?;
        Ok(LatentState {
            mu: g.value(enc.mu).data().to_vec(),
            logvar: g.value(enc.logvar).data().to_vec(),
            samples: Vec::new(),
        })
    }

    /// Encodes and draws `noise.len()` reparameterized samples.
    pub fn encode_sampled(
        &self,
        inputs: &[InputObservation<'_>],
        noise: &[Vec<f64>],
    ) -> Result<LatentState> {
        let mut state = self.encode(inputs)?;
        for eps in noise {
            if eps.len() != state.mu.len() {
                return Err(LensError::dim(
                    "encode_sampled",
                    &[state.mu.len()],
                    &[eps.len()],
                ));
            }
            let z = state
                .mu
                .iter()
                .zip(&state.logvar)
                .zip(eps)
                .map(|((m, l), e)| m + (0.5 * l).exp() * e)
                .collect();
            state.samples.push((eps.clone(), z));
        }
        Ok(state)
    }

    /// Probability of a correct response to `query` given latent `z`.
    pub fn decode(&self, z: &[f64], query: &Item) -> Result<f64> {
        if z.len() != self.config.dist_dim {
            return Err(LensError::dim(
                "decode",
                &[self.config.dist_dim],
                &[z.len()],
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(LensError::Usage("latent sample must be finite".into()));
        }
        let batch = self.prepare(&[&[]], &[vec![query]])?;
        let mut g = Graph::new();
        let x = g.constant(batch.items.clone());
        let (pw, pb) = (g.param(&self.params, PROJ_W), g.param(&self.params, PROJ_B));
        let proj = g.affine(x, pw, pb)?;
        let zn = g.constant(Tensor::row(z));
        let prob = self.decode_graph(&mut g, proj, zn, &batch)?;
        Ok(g.value(prob).data()[0])
    }

    /// Deterministic prediction from the posterior mean.
    pub fn predict(&self, inputs: &[InputObservation<'_>], query: &Item) -> Result<f64> {
        let request = PredictRequest {
            inputs: inputs.to_vec(),
            query,
        };
        Ok(self.predict_batch(&[request], EvalLatent::PosteriorMean)?[0])
    }

    /// Predictions for many students in one graph. Each student's result is
    /// independent of the rest of the batch.
    pub fn predict_batch(
        &self,
        requests: &[PredictRequest<'_>],
        latent: EvalLatent,
    ) -> Result<Vec<f64>> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let inputs: Vec<&[InputObservation<'_>]> =
            requests.iter().map(|r| r.inputs.as_slice()).collect();
        let queries: Vec<Vec<&Item>> = requests.iter().map(|r| vec![r.query]).collect();
        let batch = self.prepare(&inputs, &queries)?;
        let mut g = Graph::new();
        let enc = self.encode_graph(&mut g, &batch)?;
        match latent {
            EvalLatent::PosteriorMean => {
                let prob = self.decode_graph(&mut g, enc.proj, enc.mu, &batch)?;
                Ok(g.value(prob).data().to_vec())
            }
            EvalLatent::SampleAverage { samples, seed } => {
                if samples == 0 {
                    return Err(LensError::Usage(
                        "sample averaging needs at least one sample".into(),
                    ));
                }
                let mut acc = vec![0.0; requests.len()];
                for s in 0..samples {
                    let mut rng = stream(seed, Stage::LatentSamples, s as u64);
                    let eps = standard_normal(&mut rng, requests.len(), self.config.dist_dim);
                    let z = g.reparam(enc.mu, enc.logvar, eps)?;
                    let prob = self.decode_graph(&mut g, enc.proj, z, &batch)?;
                    for (a, p) in acc.iter_mut().zip(g.value(prob).data()) {
                        *a += p;
                    }
                }
                Ok(acc.into_iter().map(|a| a / samples as f64).collect())
            }
        }
    }

    /// Builds the mean per-student ELBO loss of a batch, each student's
    /// negative ELBO divided by its number of queries:
    /// `(sum_q NLL(decode(z, q), y_q) + kl_weight * KL(q(z) || N(0, I))) / n_q`,
    /// with `z = mu + exp(logvar / 2) * noise` and `noise` of shape
    /// `[students, dist_dim]`.
    pub fn elbo_graph(
        &self,
        g: &mut Graph,
        examples: &[TrainingExample<'_>],
        noise: Tensor,
    ) -> Result<NodeId> {
        self.elbo_graph_weighted(g, examples, noise, self.config.kl_weight)
    }

    /// [`LensModel::elbo_graph`] with an explicit KL weight.
    pub fn elbo_graph_weighted(
        &self,
        g: &mut Graph,
        examples: &[TrainingExample<'_>],
        noise: Tensor,
        kl_weight: f64,
    ) -> Result<NodeId> {
        if examples.is_empty() {
            return Err(LensError::Usage("ELBO needs at least one example".into()));
        }
        if let Some(pos) = examples.iter().position(|e| e.queries.is_empty()) {
            return Err(LensError::Usage(format!(
                "example {pos} has no query items"
            )));
        }
        let inputs: Vec<&[InputObservation<'_>]> =
            examples.iter().map(|e| e.inputs.as_slice()).collect();
        let queries: Vec<Vec<&Item>> = examples
            .iter()
            .map(|e| e.queries.iter().map(|q| q.item).collect())
            .collect();
        let labels: Vec<f64> = examples
            .iter()
            .flat_map(|e| e.queries.iter().map(|q| if q.correct { 1.0 } else { 0.0 }))
            .collect();
        let batch = self.prepare(&inputs, &queries)?;
        let enc = self.encode_graph(g, &batch)?;
        let z = g.reparam(enc.mu, enc.logvar, noise)?;
        let prob = self.decode_graph(g, enc.proj, z, &batch)?;
        let nll = g.bernoulli_nll(prob, labels)?;
        let recon = g.segment_sum(nll, batch.q_seg.clone(), batch.n_students)?;
        let kl = g.gaussian_kl(enc.mu, enc.logvar)?;
        let kl = g.scale(kl, kl_weight);
        let elbo = g.add(recon, kl)?;
        // Per-query normalization: diag(1 / n_queries) · elbo.
        let n = batch.n_students;
        let mut inv = Tensor::zeros(&[n, n]);
        for (s, e) in examples.iter().enumerate() {
            inv.data_mut()[s * n + s] = 1.0 / e.queries.len() as f64;
        }
        let inv = g.constant(inv);
        let per_student = g.matmul(inv, elbo)?;
        Ok(g.mean(per_student))
    }

    /// Value of [`LensModel::elbo_graph`].
    pub fn elbo_loss(&self, examples: &[TrainingExample<'_>], noise: Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.elbo_graph(&mut g, examples, noise)?;
        Ok(g.value(loss).data()[0])
    }

    /// Fingerprint of the parameters, for reproducibility checks.
    pub fn param_digest(&self) -> u64 {
        let words: Vec<u64> = self
            .params
            .values()
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
            .collect();
        mix(&words)
    }
}

/// `[rows, cols]` of independent standard normal draws.
pub(crate) fn standard_normal(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("noise shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_item_bank;
    use crate::embeddings::{EmbeddingSource, FeaturizerConfig};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bank() -> Vec<Item> {
        generate_item_bank(2, 9, 3).unwrap()
    }

    fn text_provider(dim: usize) -> EmbeddingProvider {
        EmbeddingProvider::new(EmbeddingSource::TextFeatures {
            featurizer: FeaturizerConfig { dim, bigrams: true },
        })
        .unwrap()
    }

    /// A model with every parameter drawn uniformly from [-0.5, 0.5], so no
    /// layer starts at zero.
    fn scrambled(
        kind: ModelKind,
        config: ModelConfig,
        provider: EmbeddingProvider,
        seed: u64,
    ) -> Result<LensModel> {
        let mut model = LensModel::new(kind, config, provider, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5c);
        for i in 0..model.params().len() {
            for v in model.params_mut().value_mut(i).data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        Ok(model)
    }

    fn small_config() -> ModelConfig {
        ModelConfig::new(0.01, 3, 5, 4)
    }

    fn obs<'a>(items: &'a [Item], picks: &[(usize, bool)]) -> Vec<InputObservation<'a>> {
        picks
            .iter()
            .map(|&(i, correct)| InputObservation {
                item: &items[i],
                correct,
            })
            .collect()
    }

    #[test]
    fn zeroed_model_is_uninformative() {
        let items = bank();
        let model =
            LensModel::zeroed(ModelKind::TextLens, small_config(), text_provider(8)).unwrap();
        let inputs = obs(&items, &[(0, true), (4, false)]);
        let state = model.encode(&inputs).unwrap();
        assert!(state.mu.iter().chain(&state.logvar).all(|&v| v == 0.0));
        assert_eq!(crate::nn::gaussian_kl(&state.mu, &state.logvar), 0.0);
        assert_eq!(model.decode(&[0.3, -1.0, 2.0], &items[5]).unwrap(), 0.5);
        assert_eq!(model.predict(&inputs, &items[1]).unwrap(), 0.5);
        let example = TrainingExample {
            inputs,
            queries: obs(&items, &[(1, true), (2, false), (3, true)]),
        };
        let noise = Tensor::filled(&[1, 3], 0.7);
        let loss = model.elbo_loss(&[example], noise).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn encode_is_permutation_invariant_bit_for_bit() {
        let items = bank();
        let model = scrambled(ModelKind::TextLens, small_config(), text_provider(16), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inputs = obs(
            &items,
            &[
                (0, true),
                (3, false),
                (7, true),
                (9, true),
                (12, false),
                (17, false),
            ],
        );
        let base = model.encode(&inputs).unwrap();
        let base_p = model.predict(&inputs, &items[2]).unwrap();
        for _ in 0..20 {
            inputs.shuffle(&mut rng);
            let state = model.encode(&inputs).unwrap();
            assert_eq!(state, base);
            assert_eq!(
                model.predict(&inputs, &items[2]).unwrap().to_bits(),
                base_p.to_bits()
            );
        }
    }

    #[test]
    fn batch_predictions_match_single_predictions() {
        let items = bank();
        let model = scrambled(
            ModelKind::Lens,
            small_config(),
            EmbeddingProvider::one_hot_over(&items).unwrap(),
            2,
        )
        .unwrap();
        let requests = vec![
            PredictRequest {
                inputs: obs(&items, &[(0, true), (1, false)]),
                query: &items[5],
            },
            PredictRequest {
                inputs: Vec::new(),
                query: &items[6],
            },
            PredictRequest {
                inputs: obs(&items, &[(10, true)]),
                query: &items[0],
            },
        ];
        let batch = model
            .predict_batch(&requests, EvalLatent::PosteriorMean)
            .unwrap();
        for (r, p) in requests.iter().zip(&batch) {
            assert_eq!(
                model.predict(&r.inputs, r.query).unwrap().to_bits(),
                p.to_bits()
            );
        }
        let sampled = model
            .predict_batch(
                &requests,
                EvalLatent::SampleAverage {
                    samples: 4,
                    seed: 1,
                },
            )
            .unwrap();
        assert_eq!(
            sampled,
            model
                .predict_batch(
                    &requests,
                    EvalLatent::SampleAverage {
                        samples: 4,
                        seed: 1
                    }
                )
                .unwrap()
        );
        assert!(sampled.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn empty_inputs_use_biases_only() {
        let items = bank();
        let mut model =
            LensModel::new(ModelKind::TextLens, small_config(), text_provider(8), 4).unwrap();
        // Give the biases some non-zero values as training would.
        for idx in [ACC_B, MU_B, LV_B, ENC_B] {
            for (j, v) in model
                .params_mut()
                .value_mut(idx)
                .data_mut()
                .iter_mut()
                .enumerate()
            {
                *v = 0.3 * (j as f64) - 0.4;
            }
        }
        let state = model.encode(&[]).unwrap();
        let p = model.params();
        let g: Vec<f64> = p.value(ACC_B).data().iter().map(|v| v.max(0.0)).collect();
        let head = |w: usize, b: usize| -> Vec<f64> {
            let (wt, bt) = (p.value(w), p.value(b));
            (0..bt.len())
                .map(|c| bt.data()[c] + (0..g.len()).map(|r| g[r] * wt.get(r, c)).sum::<f64>())
                .collect()
        };
        let mu = head(MU_W, MU_B);
        let lv = head(LV_W, LV_B);
        for (a, b) in state.mu.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in state.logvar.iter().zip(&lv) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(model.predict(&[], &items[0]).unwrap() > 0.0);
    }

    /// Straightforward per-student forward pass with explicit concatenation.
    fn reference_predict(model: &LensModel, inputs: &[InputObservation<'_>], query: &Item) -> f64 {
        let p = model.params();
        let affine = |x: &[f64], w: &Tensor, b: Option<&Tensor>| -> Vec<f64> {
            (0..w.cols())
                .map(|c| {
                    b.map_or(0.0, |b| b.data()[c])
                        + x.iter()
                            .enumerate()
                            .map(|(r, v)| v * w.get(r, c))
                            .sum::<f64>()
                })
                .collect()
        };
        let stack = |top: &Tensor, bottom: &Tensor| -> Tensor {
            let mut data = top.data().to_vec();
            data.extend_from_slice(bottom.data());
            Tensor::new(vec![top.rows() + bottom.rows(), top.cols()], data).unwrap()
        };
        let relu = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.max(0.0)).collect() };
        let project = |item: &Item| {
            affine(
                &model.provider().embed(item).unwrap(),
                p.value(PROJ_W),
                Some(p.value(PROJ_B)),
            )
        };

        let enc_w = stack(p.value(ENC_W_ITEM), p.value(ENC_W_RESP));
        let mut pooled = vec![0.0; enc_w.cols()];
        for o in inputs {
            let mut x = project(o.item);
            x.push(if o.correct { 1.0 } else { 0.0 });
            for (acc, h) in pooled
                .iter_mut()
                .zip(relu(affine(&x, &enc_w, Some(p.value(ENC_B)))))
            {
                *acc += h;
            }
        }
        let g = relu(affine(&pooled, p.value(ACC_W), Some(p.value(ACC_B))));
        let mut x = affine(&g, p.value(MU_W), Some(p.value(MU_B)));
        x.extend(project(query));
        let dec_w = stack(p.value(DEC_W_LATENT), p.value(DEC_W_ITEM));
        let h = relu(affine(&x, &dec_w, Some(p.value(DEC_B))));
        let logit = affine(&h, p.value(OUT_W), Some(p.value(OUT_B)))[0];
        (1.0 / (1.0 + (-logit).exp())).clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    #[test]
    fn factored_layers_match_explicit_concatenation() {
        let items = bank();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..10 {
            let model = scrambled(
                ModelKind::TextLens,
                ModelConfig::new(0.01, 4, 6, 5),
                text_provider(12),
                seed,
            )
            .unwrap();
            let mut idx: Vec<usize> = (0..items.len()).collect();
            idx.shuffle(&mut rng);
            let n = rng.random_range(0..8);
            let picks: Vec<(usize, bool)> = idx[..n]
                .iter()
                .map(|&i| (i, rng.random_bool(0.5)))
                .collect();
            let inputs = obs(&items, &picks);
            let query = &items[idx[n]];
            let fast = model.predict(&inputs, query).unwrap();
            let slow = reference_predict(&model, &inputs, query);
            assert!((fast - slow).abs() < 1e-12, "seed {seed}: {fast} vs {slow}");
        }
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / na.max(nb).max(1e-6)
    }

    #[test]
    fn elbo_gradients_match_finite_differences() {
        let items = bank();
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let config = ModelConfig::new(
                0.01,
                rng.random_range(1..4),
                rng.random_range(1..6),
                rng.random_range(1..5),
            );
            let mut model = scrambled(ModelKind::TextLens, config, text_provider(6), seed).unwrap();
            let examples: Vec<TrainingExample<'_>> = (0..2)
                .map(|s| TrainingExample {
                    inputs: obs(&items, &[(s, true), (s + 4, false), (s + 9, true)]),
                    queries: obs(&items, &[(s + 1, s == 0), (s + 12, true)]),
                })
                .collect();
            let noise = standard_normal(&mut rng, 2, config.dist_dim);
            let mut g = Graph::new();
            let loss = model.elbo_graph(&mut g, &examples, noise.clone()).unwrap();
            let grads = g.backward(loss, model.params()).unwrap();
            let h = 1e-5;
            for i in 0..model.params().len() {
                let mut numeric = Vec::new();
                for j in 0..model.params().value(i).len() {
                    let orig = model.params().value(i).data()[j];
                    model.params_mut().value_mut(i).data_mut()[j] = orig + h;
                    let up = model.elbo_loss(&examples, noise.clone()).unwrap();
                    model.params_mut().value_mut(i).data_mut()[j] = orig - h;
                    let down = model.elbo_loss(&examples, noise.clone()).unwrap();
                    model.params_mut().value_mut(i).data_mut()[j] = orig;
                    numeric.push((up - down) / (2.0 * h));
                }
                let err = rel_err(grads.param(i).data(), &numeric);
                assert!(err <= 1e-4, "seed {seed} {}: {err}", model.params().name(i));
            }
        }
    }

    #[test]
    fn elbo_rejects_missing_queries() {
        let items = bank();
        let model =
            LensModel::new(ModelKind::TextLens, small_config(), text_provider(8), 0).unwrap();
        let example = TrainingExample {
            inputs: obs(&items, &[(0, true)]),
            queries: Vec::new(),
        };
        assert!(matches!(
            model.elbo_loss(&[example], Tensor::zeros(&[1, 3])),
            Err(LensError::Usage(_))
        ));
    }

    #[test]
    fn kl_weight_zero_leaves_reconstruction() {
        let items = bank();
        let mut config = small_config();
        let model = scrambled(ModelKind::TextLens, config, text_provider(8), 9).unwrap();
        config.kl_weight = 0.0;
        let plain = LensModel::from_parts(
            ModelKind::TextLens,
            config,
            text_provider(8),
            model.params().clone(),
        )
        .unwrap();
        let example = || TrainingExample {
            inputs: obs(&items, &[(0, true), (5, false)]),
            queries: obs(&items, &[(2, true)]),
        };
        let noise = Tensor::zeros(&[1, 3]);
        let with_kl = model.elbo_loss(&[example()], noise.clone()).unwrap();
        let without = plain.elbo_loss(&[example()], noise).unwrap();
        let state = model.encode(&example().inputs).unwrap();
        let kl = crate::nn::gaussian_kl(&state.mu, &state.logvar);
        assert!((with_kl - without - kl).abs() < 1e-12);
        let p = model.decode(&state.mu, &items[2]).unwrap();
        assert!((without + p.ln()).abs() < 1e-12);
        let two = || TrainingExample {
            inputs: obs(&items, &[(0, true), (5, false)]),
            queries: obs(&items, &[(2, true), (7, false)]),
        };
        let with_kl = model.elbo_loss(&[two()], Tensor::zeros(&[1, 3])).unwrap();
        let without = plain.elbo_loss(&[two()], Tensor::zeros(&[1, 3])).unwrap();
        assert!((with_kl - without - kl / 2.0).abs() < 1e-12);
        let q = model.decode(&state.mu, &items[7]).unwrap();
        assert!((without + (p.ln() + (1.0 - q).ln()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_item_propagates_lookup_error() {
        let items = bank();
        let model = LensModel::new(
            ModelKind::Lens,
            small_config(),
            EmbeddingProvider::one_hot_over(&items[..10]).unwrap(),
            0,
        )
        .unwrap();
        assert!(
            matches!(model.predict(&[], &items[15]), Err(LensError::Lookup(id)) if id == items[15].item_id)
        );
    }

    #[test]
    fn sampled_latents_replay_from_recorded_noise() {
        let items = bank();
        let model =
            LensModel::new(ModelKind::TextLens, small_config(), text_provider(8), 3).unwrap();
        let inputs = obs(&items, &[(1, true)]);
        let noise = vec![vec![0.0; 3], vec![1.0, -1.0, 0.5]];
        let state = model.encode_sampled(&inputs, &noise).unwrap();
        assert_eq!(state.samples[0].1, state.mu);
        let (eps, z) = &state.samples[1];
        for j in 0..3 {
            let expected = state.mu[j] + (0.5 * state.logvar[j]).exp() * eps[j];
            assert_eq!(z[j].to_bits(), expected.to_bits());
        }
        let again = model.encode_sampled(&inputs, &noise).unwrap();
        assert_eq!(state, again);
    }
}
