//! The five subcommands. Each validates its configuration completely before
//! touching any data, writes its outputs, then a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lens_core::data::{
    generate_dataset, ingest_items, ingest_responses, ingest_students,
    shuffle_difficulty_text_link, split_dataset, write_items, write_responses, write_students,
    Dataset, DatasetSplit, SyntheticConfig,
};
use lens_core::embeddings::{
    load_embedding_table, provider_for, EmbeddingProvider, EmbeddingSource, ProviderMode,
};
use lens_core::eval::{build_condition, report, EvalResult, Harness, LatentPredictor};
use lens_core::model::{Checkpoint, CheckpointMeta, LensModel, ModelConfig, ModelKind};
use lens_core::train::{grid_search, train_from, EpochLog, TrainPlan};
use lens_core::LensError;
use serde::Serialize;

use crate::config::{
    DatasetSource, ExperimentConfig, Purpose, EVAL_RESULTS_FILE, ITEMS_FILE, LEADERBOARD_FILE,
    RESPONSES_FILE, STUDENTS_FILE, TRAIN_LOG_FILE,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_file, sha256_hex, ManifestBuilder};

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn gen_data(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate(Purpose::GenData)?;
    let mut manifest = ManifestBuilder::start("gen-data", cfg);
    let syn = cfg.synthetic();
    let dataset = generate_dataset(&syn, cfg.seed)?;
    let dir = cfg.data_dir();
    create_dir(&dir)?;
    let items = dir.join(ITEMS_FILE);
    let responses = dir.join(RESPONSES_FILE);
    let students = dir.join(STUDENTS_FILE);
    write_items(&items, dataset.items())?;
    write_responses(&responses, &dataset.records())?;
    write_students(&students, dataset.profiles().unwrap_or_default())?;
    for p in [items, responses, students] {
        manifest.output(p);
    }
    manifest.write(&dir)?;
    eprintln!(
        "wrote {} items, {} students, {} responses to {}",
        dataset.items().len(),
        dataset.n_students(),
        dataset.n_responses(),
        dir.display()
    );
    Ok(())
}

/// A dataset with its split and the files it was read from.
pub struct LoadedData {
    pub dataset: Dataset,
    pub split: DatasetSplit,
    pub files: Vec<PathBuf>,
}

/// Reads the configured dataset and splits it with the configuration seed.
pub fn load_data(cfg: &ExperimentConfig) -> CliResult<LoadedData> {
    let items_path = cfg.items_path();
    let responses_path = cfg.responses_path();
    let items = ingest_items(&items_path)?;
    let responses = ingest_responses(&responses_path)?;
    let mut dataset = Dataset::new(items, &responses)?;
    let mut files = vec![items_path, responses_path];
    if let Some(p) = cfg.students_path().filter(|p| p.is_file()) {
        dataset = dataset.with_profiles(ingest_students(&p)?);
        files.push(p);
    }
    let split = split_dataset(&dataset, cfg.seed)?;
    Ok(LoadedData {
        dataset,
        split,
        files,
    })
}

/// Same dataset with item texts permuted within skills by `seed`.
pub fn shuffled(dataset: &Dataset, seed: u64) -> CliResult<Dataset> {
    Ok(dataset.with_items(shuffle_difficulty_text_link(dataset.items(), Some(seed)))?)
}

pub fn build_provider(cfg: &ExperimentConfig, dataset: &Dataset) -> CliResult<EmbeddingProvider> {
    let source = match cfg.embedding_mode() {
        ProviderMode::IdOneHot => {
            let mut vocab: Vec<u32> = dataset.items().iter().map(|i| i.item_id).collect();
            vocab.sort_unstable();
            EmbeddingSource::IdOneHot { vocab }
        }
        ProviderMode::TextFeatures => EmbeddingSource::TextFeatures {
            featurizer: cfg.featurizer(),
        },
        ProviderMode::FileVectors => {
            let path = cfg.embedding.path.as_ref().expect("validated");
            EmbeddingSource::FileVectors {
                table: load_embedding_table(path)?,
            }
        }
    };
    Ok(provider_for(cfg.kind(), source, dataset.items())?)
}

#[derive(Serialize)]
struct HashBasis<'a> {
    source: DatasetSource,
    synthetic: Option<SyntheticConfig>,
    data_sha256: Vec<String>,
    embedding_mode: ProviderMode,
    embedding: &'a crate::config::EmbeddingBlock,
    kind: ModelKind,
    model: ModelConfig,
    batch_size: usize,
    input_fraction: (f64, f64),
    kl_warmup_epochs: usize,
    reconstruct_inputs: bool,
    seed: u64,
    shuffled_text: bool,
}

/// Digest of everything that determines a training run except its length.
pub fn config_hash(
    cfg: &ExperimentConfig,
    model: &ModelConfig,
    data: &LoadedData,
) -> CliResult<String> {
    let data_sha256 = data
        .files
        .iter()
        .map(|p| sha256_file(p).map(|d| d.sha256))
        .collect::<CliResult<Vec<_>>>()?;
    let basis = HashBasis {
        source: cfg.dataset.source,
        synthetic: (cfg.dataset.source == DatasetSource::Generate).then(|| cfg.synthetic()),
        data_sha256,
        embedding_mode: cfg.embedding_mode(),
        embedding: &cfg.embedding,
        kind: cfg.kind(),
        model: *model,
        batch_size: cfg.train.batch_size,
        input_fraction: cfg.train.input_fraction,
        kl_warmup_epochs: cfg.train.kl_warmup_epochs,
        reconstruct_inputs: cfg.train.reconstruct_inputs,
        seed: cfg.seed,
        shuffled_text: cfg.flags.ablate_difficulty_shuffle,
    };
    Ok(sha256_hex(
        &serde_json::to_vec(&basis).map_err(LensError::from)?,
    ))
}

/// The dataset a model of this configuration trains on: item texts are
/// shuffled under the ablation flag.
fn training_view(cfg: &ExperimentConfig, data: LoadedData) -> CliResult<(LoadedData, Option<u64>)> {
    if cfg.flags.ablate_difficulty_shuffle {
        let dataset = shuffled(&data.dataset, cfg.seed)?;
        Ok((LoadedData { dataset, ..data }, Some(cfg.seed)))
    } else {
        Ok((data, None))
    }
}

pub fn format_log(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_elbo,validation_elbo\n");
    for l in log {
        let _ = writeln!(out, "{},{},{}", l.epoch, l.train_elbo, l.validation_elbo);
    }
    out
}

pub fn parse_log(text: &str, origin: &Path) -> CliResult<Vec<EpochLog>> {
    let bad = |line: usize, msg: &str| {
        CliError::Core(LensError::Parse {
            path: origin.to_path_buf(),
            line,
            message: msg.to_string(),
        })
    };
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [epoch, train, val] = fields.as_slice() else {
            return Err(bad(k + 1, "expected 3 fields"));
        };
        out.push(EpochLog {
            epoch: epoch.parse().map_err(|_| bad(k + 1, "bad epoch"))?,
            train_elbo: train.parse().map_err(|_| bad(k + 1, "bad train_elbo"))?,
            validation_elbo: val.parse().map_err(|_| bad(k + 1, "bad validation_elbo"))?,
        });
    }
    Ok(out)
}

struct TrainJob<'a> {
    plan: TrainPlan,
    data: &'a LoadedData,
    dir: PathBuf,
    meta: CheckpointMeta,
    checkpoint_every: usize,
}

/// Trains up to `plan.epochs`, saving the checkpoint and log at every
/// checkpoint interval and at the end.
fn run_training(
    job: TrainJob<'_>,
    mut model: LensModel,
    mut log: Vec<EpochLog>,
) -> CliResult<LensModel> {
    let TrainJob {
        plan,
        data,
        dir,
        mut meta,
        checkpoint_every,
    } = job;
    let every = if checkpoint_every == 0 {
        plan.epochs
    } else {
        checkpoint_every
    };
    let save = |model: &LensModel, meta: &CheckpointMeta, log: &[EpochLog]| -> CliResult<()> {
        Checkpoint::from_model(model, meta.clone())
            .save(dir.join(crate::config::CHECKPOINT_FILE))?;
        write_file(&dir.join(TRAIN_LOG_FILE), format_log(log))
    };
    let total = plan.epochs;
    if meta.epochs_completed >= total {
        eprintln!(
            "checkpoint already has {} epochs; nothing to train",
            meta.epochs_completed
        );
        save(&model, &meta, &log)?;
        return Ok(model);
    }
    while meta.epochs_completed < total {
        let stop = (meta.epochs_completed + every).min(total);
        let chunk = TrainPlan {
            epochs: stop,
            ..plan
        };
        let outcome = train_from(
            &chunk,
            model,
            meta.epochs_completed,
            &data.dataset,
            &data.split,
            |l| {
                if l.epoch == 1 || l.epoch % 10 == 0 || l.epoch == total {
                    eprintln!(
                        "epoch {}/{}: train ELBO {:.4}, validation ELBO {:.4}",
                        l.epoch, total, l.train_elbo, l.validation_elbo
                    );
                }
            },
        )?;
        if outcome.skipped_students > 0 {
            eprintln!(
                "warning: {} training students have fewer than two seen responses and were skipped",
                outcome.skipped_students
            );
        }
        model = outcome.model;
        log.extend(outcome.log);
        meta.epochs_completed = stop;
        save(&model, &meta, &log)?;
    }
    Ok(model)
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate(Purpose::Train)?;
    let mut manifest = ManifestBuilder::start("train", cfg);
    let (data, shuffle_seed) = training_view(cfg, load_data(cfg)?)?;
    data.files.iter().for_each(|p| manifest.input(p));
    if let Some(p) = cfg
        .embedding
        .path
        .as_ref()
        .filter(|_| cfg.embedding_mode() == ProviderMode::FileVectors)
    {
        manifest.input(p);
    }
    let provider = build_provider(cfg, &data.dataset)?;
    let plan = cfg.train_plan();
    let hash = config_hash(cfg, &plan.config, &data)?;
    let dir = cfg.model_dir();
    create_dir(&dir)?;
    let checkpoint_path = cfg.checkpoint_path();

    let (model, meta, log) = if cfg.train.resume {
        let checkpoint = Checkpoint::load(&checkpoint_path)?;
        if checkpoint.meta.config_hash != hash {
            return Err(CliError::invalid(format!(
                "cannot resume from {}: it was trained under a different configuration (hash {} , now {})",
                checkpoint_path.display(),
                checkpoint.meta.config_hash,
                hash
            )));
        }
        let meta = checkpoint.meta.clone();
        let log_path = dir.join(TRAIN_LOG_FILE);
        let mut log = match fs::read_to_string(&log_path) {
            Ok(text) => parse_log(&text, &log_path)?,
            Err(_) => Vec::new(),
        };
        log.retain(|l| l.epoch <= meta.epochs_completed);
        eprintln!("resuming from epoch {}", meta.epochs_completed);
        (checkpoint.into_model()?, meta, log)
    } else {
        let meta = CheckpointMeta {
            epochs_completed: 0,
            config_hash: hash,
            seed: cfg.seed,
            text_shuffle_seed: shuffle_seed,
        };
        (
            LensModel::new(cfg.kind(), plan.config, provider, plan.seed)?,
            meta,
            Vec::new(),
        )
    };

    let job = TrainJob {
        plan,
        data: &data,
        dir: dir.clone(),
        meta,
        checkpoint_every: cfg.train.checkpoint_every,
    };
    run_training(job, model, log)?;
    manifest.output(&checkpoint_path);
    manifest.output(dir.join(TRAIN_LOG_FILE));
    manifest.write(&dir)?;
    eprintln!("checkpoint written to {}", checkpoint_path.display());
    Ok(())
}

pub fn grid(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate(Purpose::Grid)?;
    let block = cfg.grid.as_ref().expect("validated");
    let spec = cfg.grid_spec().expect("validated");
    let mut manifest = ManifestBuilder::start("grid", cfg);
    let (data, shuffle_seed) = training_view(cfg, load_data(cfg)?)?;
    data.files.iter().for_each(|p| manifest.input(p));
    let provider = build_provider(cfg, &data.dataset)?;
    let plan = cfg.train_plan();
    let probe_plan = TrainPlan {
        epochs: block.epochs,
        ..plan
    };
    eprintln!(
        "grid search over {} points, {} epochs each",
        spec.points().len(),
        block.epochs
    );
    let outcome = grid_search(
        &spec,
        &probe_plan,
        cfg.kind(),
        &data.dataset,
        &data.split,
        &provider,
        block.probe_reps,
    )?;

    let dir = cfg.model_dir();
    create_dir(&dir)?;
    let mut board = String::from("rank,lr,dist_dim,encoder_hidden_dim,accumulator_hidden_dim,validation_auc,validation_elbo\n");
    for (rank, e) in outcome.leaderboard.iter().enumerate() {
        let c = &e.config;
        let _ = writeln!(
            board,
            "{},{},{},{},{},{},{}",
            rank + 1,
            c.lr,
            c.dist_dim,
            c.encoder_hidden_dim,
            c.accumulator_hidden_dim,
            e.validation_auc,
            e.validation_elbo
        );
    }
    let board_path = dir.join(LEADERBOARD_FILE);
    write_file(&board_path, board)?;

    let best = outcome.best;
    eprintln!(
        "best: lr {}, dist_dim {}, encoder {}, accumulator {}; retraining for {} epochs",
        best.lr, best.dist_dim, best.encoder_hidden_dim, best.accumulator_hidden_dim, plan.epochs
    );
    let final_plan = TrainPlan {
        config: best,
        ..plan
    };
    let meta = CheckpointMeta {
        epochs_completed: 0,
        config_hash: config_hash(cfg, &best, &data)?,
        seed: cfg.seed,
        text_shuffle_seed: shuffle_seed,
    };
    let model = LensModel::new(cfg.kind(), best, provider, final_plan.seed)?;
    let job = TrainJob {
        plan: final_plan,
        data: &data,
        dir: dir.clone(),
        meta,
        checkpoint_every: cfg.train.checkpoint_every,
    };
    run_training(job, model, Vec::new())?;
    manifest.output(&board_path);
    manifest.output(cfg.checkpoint_path());
    manifest.output(dir.join(TRAIN_LOG_FILE));
    manifest.write(&dir)?;
    Ok(())
}

/// Evaluates every configured checkpoint on every configured condition.
pub fn evaluate(cfg: &ExperimentConfig) -> CliResult<Vec<EvalResult>> {
    let data = load_data(cfg)?;
    let mut specs = Vec::new();
    for &id in &cfg.eval.conditions {
        let mut spec = build_condition(id)?;
        spec.n_input = cfg.eval.n_input;
        specs.push(spec);
    }
    let mut results = Vec::new();
    for path in cfg.eval_checkpoints() {
        let checkpoint = Checkpoint::load(&path)?;
        if checkpoint.kind == cfg.kind() && checkpoint.provider_mode != cfg.embedding_mode() {
            return Err(CliError::invalid(format!(
                "{} uses a {:?} provider but the configuration asks for {:?}",
                path.display(),
                checkpoint.provider_mode,
                cfg.embedding_mode()
            )));
        }
        let shuffle_seed = checkpoint
            .meta
            .text_shuffle_seed
            .or(cfg.flags.ablate_difficulty_shuffle.then_some(cfg.seed));
        let shuffled_data;
        let dataset = match shuffle_seed {
            Some(seed) => {
                shuffled_data = shuffled(&data.dataset, seed)?;
                &shuffled_data
            }
            None => &data.dataset,
        };
        let model = checkpoint.into_model()?;
        let label = match (model.kind(), shuffle_seed) {
            (ModelKind::TextLens, Some(_)) => format!("{} (shuffled text)", model.kind()),
            (kind, _) => kind.to_string(),
        };
        let harness = Harness::new(dataset, &data.split)
            .with_off_target(cfg.eval.off_target)
            .with_label(cfg.dataset_label());
        for spec in &specs {
            harness.check_feasible(spec)?;
        }
        let predictor = LatentPredictor {
            model: &model,
            latent: cfg.eval_latent(),
        };
        for spec in &specs {
            let mut result =
                harness.run_condition(&predictor, spec, cfg.eval.n_reps, cfg.eval_seed())?;
            eprintln!(
                "{label} condition {}: AUC {:.4} ± {:.4}",
                spec.condition_id, result.auc_mean, result.auc_stderr
            );
            result.model = label.clone();
            results.push(result);
        }
    }
    Ok(results)
}

pub fn eval(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate(Purpose::Eval)?;
    let mut manifest = ManifestBuilder::start("eval", cfg);
    manifest.seed("eval_seed", cfg.eval_seed());
    for p in [cfg.items_path(), cfg.responses_path()] {
        manifest.input(p);
    }
    cfg.eval_checkpoints()
        .into_iter()
        .for_each(|p| manifest.input(p));
    let results = evaluate(cfg)?;
    let dir = cfg.eval_dir();
    create_dir(&dir)?;
    report(&results, &dir)?;
    let full = dir.join(EVAL_RESULTS_FILE);
    write_file(
        &full,
        serde_json::to_string_pretty(&results).map_err(LensError::from)?,
    )?;
    for name in ["results.csv", "plot_data.json", EVAL_RESULTS_FILE] {
        manifest.output(dir.join(name));
    }
    manifest.write(&dir)?;
    eprintln!("results written to {}", dir.display());
    Ok(())
}

pub fn report_cmd(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate(Purpose::Report)?;
    let mut manifest = ManifestBuilder::start("report", cfg);
    let mut results: Vec<EvalResult> = Vec::new();
    for path in cfg.report_inputs() {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let part: Vec<EvalResult> = serde_json::from_str(&text).map_err(|e| {
            CliError::Core(LensError::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })
        })?;
        results.extend(part);
        manifest.input(path);
    }
    let dir = cfg.report_dir();
    create_dir(&dir)?;
    report(&results, &dir)?;
    for name in ["results.csv", "plot_data.json"] {
        manifest.output(dir.join(name));
    }
    manifest.write(&dir)?;
    eprintln!("report written to {}", dir.display());
    Ok(())
}
