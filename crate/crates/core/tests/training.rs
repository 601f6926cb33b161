use lens_core::data::{
    generate_dataset, sample_students, simulate_responses, split_dataset, Dataset, DatasetSplit,
    Difficulty, Item, SyntheticConfig,
};
use lens_core::embeddings::{EmbeddingProvider, EmbeddingSource, FeaturizerConfig};
use lens_core::model::{
    Benchmark, Checkpoint, CheckpointMeta, InputObservation, ModelConfig, ModelKind,
};
use lens_core::train::{partition_student_batch, train, train_from, TrainPlan};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(n_students: usize, seed: u64) -> (Dataset, DatasetSplit) {
    let cfg = SyntheticConfig {
        n_students,
        ..SyntheticConfig::default()
    };
    let ds = generate_dataset(&cfg, seed).unwrap();
    let split = split_dataset(&ds, seed).unwrap();
    (ds, split)
}

fn text_provider() -> EmbeddingProvider {
    EmbeddingProvider::new(EmbeddingSource::TextFeatures {
        featurizer: FeaturizerConfig {
            dim: 256,
            bigrams: false,
        },
    })
    .unwrap()
}

fn tiny_plan(epochs: usize) -> TrainPlan {
    TrainPlan::new(ModelConfig::new(0.01, 4, 8, 6), epochs, 3)
}

#[test]
fn partition_examples() {
    let items = lens_core::data::generate_item_bank(2, 10, 1).unwrap();
    let responses: Vec<(&Item, bool)> = items.iter().map(|i| (i, i.item_id % 3 == 0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (inputs, queries) = partition_student_batch(&responses, (0.5, 0.5), &mut rng).unwrap();
    assert_eq!((inputs.len(), queries.len()), (10, 10));
    let mut ids: Vec<u32> = inputs
        .iter()
        .chain(&queries)
        .map(|o| o.item.item_id)
        .collect();
    ids.sort_unstable();
    assert_eq!(ids, (0..20).collect::<Vec<u32>>());

    for f in [(0.3, 0.3), (0.9, 0.9)] {
        let (i, q) = partition_student_batch(&responses[..2], f, &mut rng).unwrap();
        assert_eq!((i.len(), q.len()), (1, 1));
    }
    assert!(partition_student_batch(&responses[..1], (0.3, 0.9), &mut rng).is_none());

    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (i, q) = partition_student_batch(&responses, (0.3, 0.9), &mut rng).unwrap();
        let ids = |v: &[InputObservation<'_>]| v.iter().map(|o| o.item.item_id).collect::<Vec<_>>();
        (ids(&i), ids(&q))
    };
    assert_eq!(draw(5), draw(5));
}

#[test]
fn training_touches_only_seen_items() {
    let (ds, split) = small(200, 4);
    let (provider, log) = text_provider().with_access_log();
    train(&tiny_plan(2), ModelKind::TextLens, &ds, &split, provider).unwrap();
    let touched = log.items();
    assert!(!touched.is_empty());
    assert!(touched.iter().all(|id| split.items.is_seen(*id)));
    assert_eq!(touched, split.items.seen);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let (ds, split) = small(200, 6);
    let full = train(
        &tiny_plan(4),
        ModelKind::TextLens,
        &ds,
        &split,
        text_provider(),
    )
    .unwrap();
    let half = train(
        &tiny_plan(2),
        ModelKind::TextLens,
        &ds,
        &split,
        text_provider(),
    )
    .unwrap();
    let rest = train_from(&tiny_plan(4), half.model, 2, &ds, &split, |_| {}).unwrap();
    assert_eq!(rest.model.param_digest(), full.model.param_digest());
    assert_eq!(rest.log, full.log[2..]);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (ds, split) = small(200, 8);
    let trained = train(
        &tiny_plan(2),
        ModelKind::TextLens,
        &ds,
        &split,
        text_provider(),
    )
    .unwrap()
    .model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    let meta = CheckpointMeta {
        epochs_completed: 2,
        config_hash: "abc".into(),
        seed: 3,
        text_shuffle_seed: None,
    };
    Checkpoint::from_model(&trained, meta.clone())
        .save(&path)
        .unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.meta, meta);
    let restored = loaded.into_model().unwrap();
    assert_eq!(restored.param_digest(), trained.param_digest());

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let items = ds.items();
    for _ in 0..50 {
        let inputs: Vec<InputObservation<'_>> = items
            .choose_multiple(&mut rng, 7)
            .map(|item| InputObservation {
                item,
                correct: item.item_id % 2 == 0,
            })
            .collect();
        let query = items.choose(&mut rng).unwrap();
        assert_eq!(
            restored.predict(&inputs, query).unwrap().to_bits(),
            trained.predict(&inputs, query).unwrap().to_bits()
        );
    }
}

/// Desk-scale Text-LENS, trained once for the statistical checks below.
#[test]
fn desk_scale_text_lens_learns_proficiency() {
    let (ds, split) = small(2000, 1);
    let plan = TrainPlan::new(
        ModelConfig::published(Benchmark::LlmSim, ModelKind::TextLens),
        100,
        1,
    );
    let outcome = train(&plan, ModelKind::TextLens, &ds, &split, text_provider()).unwrap();
    let first = outcome.log.first().unwrap().validation_elbo;
    let last = outcome.log.last().unwrap().validation_elbo;
    assert_eq!(outcome.log.len(), 100);
    assert!(last < first, "validation ELBO {first} -> {last}");
    let model = outcome.model;

    let seen_of_skill = |skill: u32, except: u32| -> Vec<&Item> {
        ds.items()
            .iter()
            .filter(|i| {
                i.skill_id == skill && i.item_id != except && split.items.is_seen(i.item_id)
            })
            .collect()
    };

    // Top- vs bottom-decile proficiency on a Medium seen query.
    let query = ds
        .items()
        .iter()
        .find(|i| i.difficulty == Difficulty::Medium && split.items.is_seen(i.item_id))
        .unwrap();
    let pool = seen_of_skill(query.skill_id, query.item_id);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut scored: Vec<(f64, f64)> = split
        .students
        .test
        .iter()
        .map(|&s| {
            let inputs: Vec<InputObservation<'_>> = pool
                .choose_multiple(&mut rng, 19)
                .map(|item| InputObservation {
                    item,
                    correct: ds.response(s, item.item_id).unwrap(),
                })
                .collect();
            let theta = ds.profile(s).unwrap().theta[query.skill_id as usize];
            (theta, model.predict(&inputs, query).unwrap())
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tenth = scored.len() / 10;
    let mean = |v: &[(f64, f64)]| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;
    let (bottom, top) = (
        mean(&scored[..tenth]),
        mean(&scored[scored.len() - tenth..]),
    );
    assert!(top > bottom, "top decile {top}, bottom decile {bottom}");

    // More information lowers log-loss: 19 on-target inputs vs none, over
    // 600 students the model never saw.
    let cohort = sample_students(600, 5, 777).unwrap();
    let responses =
        simulate_responses(&cohort, ds.items(), SyntheticConfig::default().irt, 777).unwrap();
    let fresh = Dataset::new(ds.items().to_vec(), &responses).unwrap();
    let seen: Vec<&Item> = ds
        .items()
        .iter()
        .filter(|i| split.items.is_seen(i.item_id))
        .collect();
    let (mut with_inputs, mut without) = (0.0, 0.0);
    for p in &cohort {
        let q = *seen.choose(&mut rng).unwrap();
        let mut pool = seen_of_skill(q.skill_id, q.item_id);
        pool.shuffle(&mut rng);
        let inputs: Vec<InputObservation<'_>> = pool[..19]
            .iter()
            .map(|item| InputObservation {
                item,
                correct: fresh.response(p.student_id, item.item_id).unwrap(),
            })
            .collect();
        let y = fresh.response(p.student_id, q.item_id).unwrap();
        let loss = |prob: f64| -(if y { prob } else { 1.0 - prob }).ln();
        with_inputs += loss(model.predict(&inputs, q).unwrap());
        without += loss(model.predict(&[], q).unwrap());
    }
    let n = cohort.len() as f64;
    assert!(
        with_inputs / n <= without / n,
        "log-loss with inputs {} vs without {}",
        with_inputs / n,
        without / n
    );
}
