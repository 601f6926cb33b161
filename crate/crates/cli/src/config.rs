//! Experiment configuration files (TOML).
//!
//! Relative paths inside a file are resolved against the file's directory.
//! Validation is total: every problem is collected and reported at once,
//! before any data is read or written.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use lens_core::data::{IrtParams, ItemBankConfig, SyntheticConfig};
use lens_core::embeddings::{FeaturizerConfig, ProviderMode};
use lens_core::eval::{OffTargetMode, DEFAULT_N_INPUT};
use lens_core::model::{Benchmark, EvalLatent, ModelConfig, ModelKind};
use lens_core::train::{GridSpec, TrainPlan};
use lens_core::LensError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Population size used by `--paper-scale`.
pub const PAPER_SCALE_STUDENTS: usize = 50_000;

pub const DATA_DIR: &str = "data";
pub const ITEMS_FILE: &str = "items.jsonl";
pub const RESPONSES_FILE: &str = "responses.csv";
pub const STUDENTS_FILE: &str = "students.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const LEADERBOARD_FILE: &str = "leaderboard.csv";
pub const EVAL_RESULTS_FILE: &str = "eval_results.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Generate,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBlock {
    pub source: DatasetSource,
    /// Label written into result files.
    pub name: Option<String>,
    pub n_students: Option<usize>,
    pub n_skills: Option<usize>,
    pub items_per_skill: Option<usize>,
    pub cue_fidelity: Option<f64>,
    pub discrimination: Option<f64>,
    pub guessing: Option<f64>,
    pub items: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub students: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBlock {
    pub mode: Option<ProviderMode>,
    pub dim: Option<usize>,
    pub bigrams: Option<bool>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub kind: ModelKind,
    pub preset: Option<Benchmark>,
    pub name: Option<String>,
    pub lr: Option<f64>,
    pub dist_dim: Option<usize>,
    pub encoder_hidden_dim: Option<usize>,
    pub accumulator_hidden_dim: Option<usize>,
    pub decoder_hidden_dim: Option<usize>,
    pub item_projection_dim: Option<usize>,
    pub kl_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub input_fraction: (f64, f64),
    pub kl_warmup_epochs: usize,
    pub reconstruct_inputs: bool,
    /// Continue from the model directory's checkpoint.
    pub resume: bool,
    /// Save a checkpoint every this many epochs; 0 saves only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainBlock {
    fn default() -> Self {
        TrainBlock {
            epochs: 300,
            batch_size: 32,
            input_fraction: (0.3, 0.9),
            kl_warmup_epochs: 0,
            reconstruct_inputs: true,
            resume: false,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBlock {
    pub lr: Vec<f64>,
    pub dist_dim: Vec<usize>,
    pub encoder_hidden_dim: Vec<usize>,
    pub accumulator_hidden_dim: Vec<usize>,
    /// Training epochs per grid point; the winner is retrained with
    /// `train.epochs`.
    #[serde(default = "default_grid_epochs")]
    pub epochs: usize,
    #[serde(default = "default_probe_reps")]
    pub probe_reps: usize,
}

fn default_grid_epochs() -> usize {
    60
}

fn default_probe_reps() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentRule {
    PosteriorMean,
    SampleAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalBlock {
    pub conditions: Vec<u8>,
    pub n_reps: usize,
    /// Defaults to the top-level seed.
    pub seed: Option<u64>,
    pub n_input: usize,
    pub off_target: OffTargetMode,
    pub latent: LatentRule,
    pub latent_samples: usize,
    /// Checkpoints to evaluate; defaults to this configuration's model.
    pub checkpoints: Vec<PathBuf>,
    /// Output directory name under `out_dir`.
    pub dir: Option<String>,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            conditions: (1..=8).collect(),
            n_reps: 60,
            seed: None,
            n_input: DEFAULT_N_INPUT,
            off_target: OffTargetMode::Union,
            latent: LatentRule::PosteriorMean,
            latent_samples: 10,
            checkpoints: Vec::new(),
            dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportBlock {
    /// `eval_results.json` files to combine; defaults to this
    /// configuration's evaluation output.
    pub inputs: Vec<PathBuf>,
    pub dir: Option<String>,
}

/// Command-line switches that adjust a configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub paper_scale: bool,
    pub ablate_difficulty_shuffle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub embedding: EmbeddingBlock,
    pub model: ModelBlock,
    #[serde(default)]
    pub train: TrainBlock,
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub eval: EvalBlock,
    #[serde(default)]
    pub report: ReportBlock,
    #[serde(skip)]
    pub flags: Flags,
}

fn default_seed() -> u64 {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    (
        "",
        &[
            "seed",
            "out_dir",
            "dataset",
            "embedding",
            "model",
            "train",
            "grid",
            "eval",
            "report",
        ],
    ),
    (
        "dataset",
        &[
            "source",
            "name",
            "n_students",
            "n_skills",
            "items_per_skill",
            "cue_fidelity",
            "discrimination",
            "guessing",
            "items",
            "responses",
            "students",
        ],
    ),
    ("embedding", &["mode", "dim", "bigrams", "path"]),
    (
        "model",
        &[
            "kind",
            "preset",
            "name",
            "lr",
            "dist_dim",
            "encoder_hidden_dim",
            "accumulator_hidden_dim",
            "decoder_hidden_dim",
            "item_projection_dim",
            "kl_weight",
        ],
    ),
    (
        "train",
        &[
            "epochs",
            "batch_size",
            "input_fraction",
            "kl_warmup_epochs",
            "reconstruct_inputs",
            "resume",
            "checkpoint_every",
        ],
    ),
    (
        "grid",
        &[
            "lr",
            "dist_dim",
            "encoder_hidden_dim",
            "accumulator_hidden_dim",
            "epochs",
            "probe_reps",
        ],
    ),
    (
        "eval",
        &[
            "conditions",
            "n_reps",
            "seed",
            "n_input",
            "off_target",
            "latent",
            "latent_samples",
            "checkpoints",
            "dir",
        ],
    ),
    ("report", &["inputs", "dir"]),
];

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut problems = Vec::new();
    for (block, known) in KNOWN_KEYS {
        let keys: Vec<&String> = if block.is_empty() {
            table.keys().collect()
        } else {
            match table.get(*block) {
                Some(toml::Value::Table(t)) => t.keys().collect(),
                _ => continue,
            }
        };
        for key in keys {
            if !known.contains(&key.as_str()) {
                let full = if block.is_empty() {
                    key.clone()
                } else {
                    format!("{block}.{key}")
                };
                problems.push(format!("unknown key `{full}`"));
            }
        }
    }
    problems
}

/// Which command a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    GenData,
    Train,
    Grid,
    Eval,
    Report,
}

impl ExperimentConfig {
    /// Parses a configuration and resolves its relative paths against the
    /// file's directory. Does not validate values.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    pub fn parse(text: &str, origin: &Path, base: &Path) -> CliResult<Self> {
        let syntax = |message: String| CliError::ConfigSyntax {
            path: origin.to_path_buf(),
            message,
        };
        let table: toml::Table = toml::from_str(text).map_err(|e| syntax(e.to_string()))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(CliError::Validation(unknown));
        }
        let mut cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| syntax(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.out_dir);
        for p in [
            &mut self.dataset.items,
            &mut self.dataset.responses,
            &mut self.dataset.students,
            &mut self.embedding.path,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        self.eval.checkpoints.iter_mut().for_each(join);
        self.report.inputs.iter_mut().for_each(join);
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind
    }

    /// Published settings for the preset (LLM-Sim unless given), with any
    /// explicit keys applied. Projection and decoder widths follow the latent
    /// and encoder widths unless set.
    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        let base = ModelConfig::published(m.preset.unwrap_or(Benchmark::LlmSim), m.kind);
        let dist_dim = m.dist_dim.unwrap_or(base.dist_dim);
        let encoder_hidden_dim = m.encoder_hidden_dim.unwrap_or(base.encoder_hidden_dim);
        ModelConfig {
            lr: m.lr.unwrap_or(base.lr),
            dist_dim,
            encoder_hidden_dim,
            accumulator_hidden_dim: m
                .accumulator_hidden_dim
                .unwrap_or(base.accumulator_hidden_dim),
            decoder_hidden_dim: m.decoder_hidden_dim.unwrap_or(encoder_hidden_dim),
            item_projection_dim: m.item_projection_dim.unwrap_or(dist_dim),
            kl_weight: m.kl_weight.unwrap_or(base.kl_weight),
        }
    }

    /// Explicit mode, else a table when a path is given, else the kind's
    /// natural source.
    pub fn embedding_mode(&self) -> ProviderMode {
        match (self.embedding.mode, &self.embedding.path, self.kind()) {
            (Some(mode), _, _) => mode,
            (None, Some(_), _) => ProviderMode::FileVectors,
            (None, None, ModelKind::Lens) => ProviderMode::IdOneHot,
            (None, None, ModelKind::TextLens) => ProviderMode::TextFeatures,
        }
    }

    pub fn featurizer(&self) -> FeaturizerConfig {
        let d = FeaturizerConfig::default();
        FeaturizerConfig {
            dim: self.embedding.dim.unwrap_or(d.dim),
            bigrams: self.embedding.bigrams.unwrap_or(d.bigrams),
        }
    }

    pub fn train_plan(&self) -> TrainPlan {
        let t = &self.train;
        TrainPlan {
            epochs: t.epochs,
            batch_size: t.batch_size,
            config: self.model_config(),
            seed: self.seed,
            input_fraction: t.input_fraction,
            kl_warmup_epochs: t.kl_warmup_epochs,
            reconstruct_inputs: t.reconstruct_inputs,
        }
    }

    pub fn grid_spec(&self) -> Option<GridSpec> {
        self.grid.as_ref().map(|g| GridSpec {
            lr: g.lr.clone(),
            dist_dim: g.dist_dim.clone(),
            encoder_hidden_dim: g.encoder_hidden_dim.clone(),
            accumulator_hidden_dim: g.accumulator_hidden_dim.clone(),
        })
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        let d = &self.dataset;
        let base = SyntheticConfig::default();
        let n_students = if self.flags.paper_scale {
            PAPER_SCALE_STUDENTS
        } else {
            d.n_students.unwrap_or(base.n_students)
        };
        SyntheticConfig {
            n_students,
            bank: ItemBankConfig {
                n_skills: d.n_skills.unwrap_or(base.bank.n_skills),
                items_per_skill: d.items_per_skill.unwrap_or(base.bank.items_per_skill),
                cue_fidelity: d.cue_fidelity.unwrap_or(base.bank.cue_fidelity),
            },
            irt: IrtParams {
                a: d.discrimination.unwrap_or(base.irt.a),
                c: d.guessing.unwrap_or(base.irt.c),
            },
        }
    }

    pub fn dataset_label(&self) -> String {
        match (&self.dataset.name, self.dataset.source) {
            (Some(name), _) => name.clone(),
            (None, DatasetSource::Generate) => "LLM-Sim".to_string(),
            (None, DatasetSource::Files) => "external".to_string(),
        }
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval.seed.unwrap_or(self.seed)
    }

    pub fn eval_latent(&self) -> EvalLatent {
        match self.eval.latent {
            LatentRule::PosteriorMean => EvalLatent::PosteriorMean,
            LatentRule::SampleAverage => EvalLatent::SampleAverage {
                samples: self.eval.latent_samples,
                seed: self.eval_seed(),
            },
        }
    }

    /// Where `gen-data` writes and, for generated datasets, where the other
    /// commands read.
    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join(DATA_DIR)
    }

    pub fn items_path(&self) -> PathBuf {
        match self.dataset.source {
            DatasetSource::Generate => self.data_dir().join(ITEMS_FILE),
            DatasetSource::Files => self.dataset.items.clone().unwrap_or_default(),
        }
    }

    pub fn responses_path(&self) -> PathBuf {
        match self.dataset.source {
            DatasetSource::Generate => self.data_dir().join(RESPONSES_FILE),
            DatasetSource::Files => self.dataset.responses.clone().unwrap_or_default(),
        }
    }

    pub fn students_path(&self) -> Option<PathBuf> {
        match self.dataset.source {
            DatasetSource::Generate => Some(self.data_dir().join(STUDENTS_FILE)),
            DatasetSource::Files => self.dataset.students.clone(),
        }
    }

    /// `models/<name>`; the name defaults to the model kind and gains a
    /// `-shuffled` suffix under the difficulty-shuffle ablation.
    pub fn model_dir(&self) -> PathBuf {
        let base = self
            .model
            .name
            .clone()
            .unwrap_or_else(|| match self.kind() {
                ModelKind::Lens => "lens".to_string(),
                ModelKind::TextLens => "text-lens".to_string(),
            });
        let name = if self.flags.ablate_difficulty_shuffle {
            format!("{base}-shuffled")
        } else {
            base
        };
        self.out_dir.join("models").join(name)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.model_dir().join(CHECKPOINT_FILE)
    }

    pub fn eval_dir(&self) -> PathBuf {
        let base = self.eval.dir.clone().unwrap_or_else(|| "eval".to_string());
        let name = if self.flags.ablate_difficulty_shuffle {
            format!("{base}-shuffled")
        } else {
            base
        };
        self.out_dir.join(name)
    }

    pub fn eval_checkpoints(&self) -> Vec<PathBuf> {
        if self.eval.checkpoints.is_empty() {
            vec![self.checkpoint_path()]
        } else {
            self.eval.checkpoints.clone()
        }
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join(
            self.report
                .dir
                .clone()
                .unwrap_or_else(|| "report".to_string()),
        )
    }

    pub fn report_inputs(&self) -> Vec<PathBuf> {
        if self.report.inputs.is_empty() {
            vec![self.eval_dir().join(EVAL_RESULTS_FILE)]
        } else {
            self.report.inputs.clone()
        }
    }

    /// Checks every value the command will use; all violations are returned
    /// together.
    pub fn validate(&self, purpose: Purpose) -> CliResult<()> {
        let mut problems = Vec::new();
        self.check_dataset(purpose, &mut problems);
        if purpose != Purpose::GenData && purpose != Purpose::Report {
            self.check_embedding(&mut problems);
            self.check_model(&mut problems);
        }
        if matches!(purpose, Purpose::Train | Purpose::Grid) {
            self.check_train(purpose, &mut problems);
        }
        if purpose == Purpose::Grid {
            self.check_grid(&mut problems);
        }
        if purpose == Purpose::Eval {
            self.check_eval(&mut problems);
        }
        if purpose == Purpose::Report {
            for p in self.report_inputs() {
                if !p.is_file() {
                    problems.push(format!("report input {} does not exist", p.display()));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems))
        }
    }

    fn check_dataset(&self, purpose: Purpose, problems: &mut Vec<String>) {
        let d = &self.dataset;
        match d.source {
            DatasetSource::Generate => {
                for (key, set) in [
                    ("items", d.items.is_some()),
                    ("responses", d.responses.is_some()),
                    ("students", d.students.is_some()),
                ] {
                    if set {
                        problems.push(format!(
                            "dataset.{key} is only valid with source = \"files\""
                        ));
                    }
                }
                let syn = self.synthetic();
                for (key, v) in [
                    ("n_students", syn.n_students),
                    ("n_skills", syn.bank.n_skills),
                    ("items_per_skill", syn.bank.items_per_skill),
                ] {
                    if v == 0 {
                        problems.push(format!("dataset.{key} must be >= 1"));
                    }
                }
                if !(0.0..=1.0).contains(&syn.bank.cue_fidelity) {
                    problems.push(format!(
                        "dataset.cue_fidelity {} outside [0, 1]",
                        syn.bank.cue_fidelity
                    ));
                }
                if !(syn.irt.a > 0.0 && syn.irt.a.is_finite()) {
                    problems.push(format!(
                        "dataset.discrimination must be positive, got {}",
                        syn.irt.a
                    ));
                }
                if !(0.0..1.0).contains(&syn.irt.c) {
                    problems.push(format!("dataset.guessing {} outside [0, 1)", syn.irt.c));
                }
                if purpose != Purpose::GenData && purpose != Purpose::Report {
                    for p in [self.items_path(), self.responses_path()] {
                        if !p.is_file() {
                            problems.push(format!(
                                "generated data file {} not found; run `lens gen-data` first",
                                p.display()
                            ));
                        }
                    }
                }
            }
            DatasetSource::Files => {
                for (key, set) in [
                    ("n_students", d.n_students.is_some()),
                    ("n_skills", d.n_skills.is_some()),
                    ("items_per_skill", d.items_per_skill.is_some()),
                    ("cue_fidelity", d.cue_fidelity.is_some()),
                    ("discrimination", d.discrimination.is_some()),
                    ("guessing", d.guessing.is_some()),
                ] {
                    if set {
                        problems.push(format!(
                            "dataset.{key} is only valid with source = \"generate\""
                        ));
                    }
                }
                if self.flags.paper_scale {
                    problems.push("--paper-scale applies only to generated datasets".to_string());
                }
                if purpose == Purpose::GenData {
                    problems.push("gen-data needs dataset.source = \"generate\"".to_string());
                }
                for (key, path) in [("items", &d.items), ("responses", &d.responses)] {
                    match path {
                        None => problems
                            .push(format!("dataset.{key} is required with source = \"files\"")),
                        Some(p) if !p.is_file() => problems
                            .push(format!("dataset.{key} file {} does not exist", p.display())),
                        Some(_) => {}
                    }
                }
                if let Some(p) = &d.students {
                    if !p.is_file() {
                        problems.push(format!(
                            "dataset.students file {} does not exist",
                            p.display()
                        ));
                    }
                }
            }
        }
    }

    fn check_embedding(&self, problems: &mut Vec<String>) {
        let mode = self.embedding_mode();
        let e = &self.embedding;
        match (self.kind(), mode) {
            (ModelKind::Lens, ProviderMode::IdOneHot)
            | (ModelKind::TextLens, ProviderMode::TextFeatures | ProviderMode::FileVectors) => {}
            (kind, mode) => problems.push(format!(
                "model kind {kind} cannot use embedding mode {mode:?}"
            )),
        }
        if mode != ProviderMode::TextFeatures && (e.dim.is_some() || e.bigrams.is_some()) {
            problems.push(
                "embedding.dim and embedding.bigrams apply only to mode \"text-features\""
                    .to_string(),
            );
        }
        if self.flags.ablate_difficulty_shuffle && mode == ProviderMode::FileVectors {
            problems.push(
                "--ablate-difficulty-shuffle re-embeds item text and needs embedding mode \"text-features\""
                    .to_string(),
            );
        }
        if e.dim == Some(0) {
            problems.push("embedding.dim must be >= 1".to_string());
        }
        match (mode, &e.path) {
            (ProviderMode::FileVectors, None) => {
                problems.push("embedding.path is required with mode \"file-vectors\"".to_string())
            }
            (ProviderMode::FileVectors, Some(p)) if !p.is_file() => {
                problems.push(format!("embeddings file {} does not exist", p.display()))
            }
            (ProviderMode::FileVectors, Some(_)) => {}
            (_, Some(_)) => {
                problems.push("embedding.path applies only to mode \"file-vectors\"".to_string())
            }
            (_, None) => {}
        }
    }

    fn check_model(&self, problems: &mut Vec<String>) {
        if let Err(LensError::Usage(msg)) = self.model_config().validate() {
            problems.extend(msg.split("; ").map(|m| format!("model: {m}")));
        }
    }

    fn check_train(&self, purpose: Purpose, problems: &mut Vec<String>) {
        let mut plan = self.train_plan();
        // Model problems are reported by check_model.
        plan.config = ModelConfig::new(0.001, 1, 1, 1);
        if let Err(LensError::Usage(msg)) = plan.validate() {
            problems.extend(msg.split("; ").map(|m| format!("train: {m}")));
        }
        if self.train.resume {
            if purpose == Purpose::Grid {
                problems.push("train.resume cannot be combined with grid search".to_string());
            } else if !self.checkpoint_path().is_file() {
                problems.push(format!(
                    "train.resume is set but {} does not exist",
                    self.checkpoint_path().display()
                ));
            }
        }
    }

    fn check_grid(&self, problems: &mut Vec<String>) {
        let Some(grid) = &self.grid else {
            problems.push("grid search needs a [grid] block".to_string());
            return;
        };
        for (key, empty) in [
            ("lr", grid.lr.is_empty()),
            ("dist_dim", grid.dist_dim.is_empty()),
            ("encoder_hidden_dim", grid.encoder_hidden_dim.is_empty()),
            (
                "accumulator_hidden_dim",
                grid.accumulator_hidden_dim.is_empty(),
            ),
        ] {
            if empty {
                problems.push(format!("grid.{key} must list at least one value"));
            }
        }
        if grid.lr.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            problems.push("grid.lr values must be positive".to_string());
        }
        for (key, values) in [
            ("dist_dim", &grid.dist_dim),
            ("encoder_hidden_dim", &grid.encoder_hidden_dim),
            ("accumulator_hidden_dim", &grid.accumulator_hidden_dim),
        ] {
            if values.contains(&0) {
                problems.push(format!("grid.{key} values must be >= 1"));
            }
        }
        if grid.epochs == 0 {
            problems.push("grid.epochs must be >= 1".to_string());
        }
        if grid.probe_reps == 0 {
            problems.push("grid.probe_reps must be >= 1".to_string());
        }
    }

    fn check_eval(&self, problems: &mut Vec<String>) {
        let e = &self.eval;
        if e.conditions.is_empty() {
            problems.push("eval.conditions must list at least one condition".to_string());
        }
        let mut seen = BTreeSet::new();
        for &c in &e.conditions {
            if !(1..=8).contains(&c) {
                problems.push(format!("eval.conditions: {c} is not a condition id (1-8)"));
            }
            if !seen.insert(c) {
                problems.push(format!("eval.conditions lists {c} twice"));
            }
        }
        if e.n_reps == 0 {
            problems.push("eval.n_reps must be >= 1".to_string());
        }
        if e.latent == LatentRule::SampleAverage && e.latent_samples == 0 {
            problems.push("eval.latent_samples must be >= 1".to_string());
        }
        for p in self.eval_checkpoints() {
            if !p.is_file() {
                problems.push(format!("checkpoint {} does not exist", p.display()));
            }
        }
    }
}
