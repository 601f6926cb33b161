use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lens_cli::manifest::sha256_file;
use tempfile::TempDir;

fn lens(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lens"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn lens")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_ok(args: &[&str], cwd: &Path) {
    let out = lens(args, cwd);
    assert!(
        out.status.success(),
        "lens {args:?} failed:\n{}",
        stderr(&out)
    );
}

/// A small, fast dataset and model.
fn small(kind: &str, extra: &str) -> String {
    format!(
        r#"
seed = 7
out_dir = "out"

[dataset]
source = "generate"
n_students = 300

[model]
kind = "{kind}"
dist_dim = 8
encoder_hidden_dim = 12
accumulator_hidden_dim = 8

[train]
epochs = 2
{extra}
"#
    )
}

fn line_count(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = lens(&["train"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--config"));
}

#[test]
fn every_violation_is_reported_at_once() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        r#"
[dataset]
source = "generate"
cue_fidelity = 1.5
[model]
kind = "lens"
lr = -1.0
[train]
batch_size = 0
"#,
    );
    let out = lens(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for needle in ["cue_fidelity", "lr", "batch_size", "gen-data"] {
        assert!(err.contains(needle), "missing {needle} in:\n{err}");
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "typo = 1\n[dataset]\nsource = \"generate\"\nn_student = 3\n[model]\nkind = \"lens\"\n",
    );
    let out = lens(&["gen-data", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("`typo`") && err.contains("`dataset.n_student`"),
        "{err}"
    );
}

#[test]
fn missing_embedding_file_fails_before_training() {
    let dir = TempDir::new().unwrap();
    let gen = write_config(dir.path(), "gen.toml", &small("lens", ""));
    run_ok(&["gen-data", "--config", gen.to_str().unwrap()], dir.path());
    let text = small("text-lens", "").replace(
        "[model]",
        "[embedding]\nmode = \"file-vectors\"\npath = \"nope.jsonl\"\n\n[model]",
    );
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = lens(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.jsonl"));
    assert!(!dir.path().join("out/models").exists());
}

#[test]
fn gen_data_defaults_and_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[dataset]\nsource = \"generate\"\n[model]\nkind = \"lens\"\n",
    );
    let c = cfg.to_str().unwrap();
    run_ok(&["gen-data", "--config", c, "--out", "a"], dir.path());
    run_ok(&["gen-data", "--config", c, "--out", "b"], dir.path());
    let a = dir.path().join("a/data");
    let b = dir.path().join("b/data");
    assert_eq!(line_count(&a.join("items.jsonl")), 200);
    assert_eq!(line_count(&a.join("students.csv")), 2000 + 1);
    assert_eq!(line_count(&a.join("responses.csv")), 400_000 + 1);
    for f in ["items.jsonl", "responses.csv", "students.csv"] {
        assert_eq!(
            sha256_file(&a.join(f)).unwrap().sha256,
            sha256_file(&b.join(f)).unwrap().sha256,
            "{f} differs"
        );
    }
    assert!(a.join("manifest-gen-data.json").is_file());

    run_ok(
        &["gen-data", "--config", c, "--out", "s", "--seed", "2"],
        dir.path(),
    );
    assert_ne!(
        sha256_file(&a.join("responses.csv")).unwrap().sha256,
        sha256_file(&dir.path().join("s/data/responses.csv"))
            .unwrap()
            .sha256
    );
}

#[test]
fn train_eval_report_pipeline() {
    let dir = TempDir::new().unwrap();
    let eval = "\n[eval]\nn_reps = 2\ncheckpoints = [\"out/models/lens/checkpoint.json\", \"out/models/text-lens/checkpoint.json\"]\n";
    let lens_cfg = write_config(dir.path(), "lens.toml", &small("lens", ""));
    let text_cfg = write_config(dir.path(), "text.toml", &(small("text-lens", "") + eval));
    let l = lens_cfg.to_str().unwrap();
    let t = text_cfg.to_str().unwrap();
    run_ok(&["gen-data", "--config", l], dir.path());
    run_ok(&["train", "--config", l], dir.path());
    run_ok(&["train", "--config", t], dir.path());
    run_ok(&["eval", "--config", t], dir.path());
    let results = dir.path().join("out/eval/results.csv");
    assert_eq!(line_count(&results), 16 + 1);
    assert!(dir.path().join("out/eval/plot_data.json").is_file());
    assert!(dir.path().join("out/eval/manifest-eval.json").is_file());
    let log = dir.path().join("out/models/lens/train_log.csv");
    assert_eq!(
        fs::read_to_string(&log).unwrap().lines().next(),
        Some("epoch,train_elbo,validation_elbo")
    );
    assert_eq!(line_count(&log), 2 + 1);

    run_ok(&["report", "--config", t], dir.path());
    assert_eq!(
        fs::read_to_string(&results).unwrap(),
        fs::read_to_string(dir.path().join("out/report/results.csv")).unwrap()
    );
}

#[test]
fn resume_continues_exactly_and_rejects_changed_configs() {
    let dir = TempDir::new().unwrap();
    let straight = write_config(
        dir.path(),
        "a.toml",
        &small("lens", "").replace("epochs = 2", "epochs = 4"),
    );
    let a = straight.to_str().unwrap();
    run_ok(&["gen-data", "--config", a], dir.path());
    run_ok(&["train", "--config", a, "--out", "out"], dir.path());
    let full = fs::read(dir.path().join("out/models/lens/checkpoint.json")).unwrap();
    let full_log = fs::read_to_string(dir.path().join("out/models/lens/train_log.csv")).unwrap();

    let half = write_config(dir.path(), "b.toml", &small("lens", ""));
    run_ok(&["train", "--config", half.to_str().unwrap()], dir.path());
    let resume = write_config(
        dir.path(),
        "c.toml",
        &small("lens", "resume = true").replace("epochs = 2", "epochs = 4"),
    );
    run_ok(&["train", "--config", resume.to_str().unwrap()], dir.path());
    assert_eq!(
        fs::read(dir.path().join("out/models/lens/checkpoint.json")).unwrap(),
        full
    );
    assert_eq!(
        fs::read_to_string(dir.path().join("out/models/lens/train_log.csv")).unwrap(),
        full_log
    );

    let changed = write_config(
        dir.path(),
        "d.toml",
        &small("lens", "resume = true").replace("dist_dim = 8", "dist_dim = 8\nlr = 0.01"),
    );
    let out = lens(
        &["train", "--config", changed.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("different configuration"));
}

#[test]
fn grid_ranks_every_point() {
    let dir = TempDir::new().unwrap();
    let grid = "\n[grid]\nlr = [0.001, 0.005]\ndist_dim = [4, 8]\nencoder_hidden_dim = [8, 12]\naccumulator_hidden_dim = [4, 8]\nepochs = 1\nprobe_reps = 1\n";
    let cfg = write_config(
        dir.path(),
        "g.toml",
        &(small("lens", "").replace("epochs = 2", "epochs = 1") + grid),
    );
    let c = cfg.to_str().unwrap();
    run_ok(&["gen-data", "--config", c], dir.path());
    run_ok(&["grid", "--config", c], dir.path());
    let board = fs::read_to_string(dir.path().join("out/models/lens/leaderboard.csv")).unwrap();
    let rows: Vec<&str> = board.lines().skip(1).collect();
    assert_eq!(rows.len(), 16);
    let aucs: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert!(
        aucs.windows(2).all(|w| w[0] >= w[1]),
        "leaderboard not sorted: {aucs:?}"
    );
    assert!(dir.path().join("out/models/lens/checkpoint.json").is_file());
}

#[test]
fn infeasible_condition_is_reported_before_any_repetition() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &(small("lens", "").replace("epochs = 2", "epochs = 1") + "\n[eval]\nn_input = 100\n"),
    );
    let c = cfg.to_str().unwrap();
    run_ok(&["gen-data", "--config", c], dir.path());
    run_ok(&["train", "--config", c], dir.path());
    let out = lens(&["eval", "--config", c], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("100 needed"), "{}", stderr(&out));
    assert!(!dir.path().join("out/eval/results.csv").exists());
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &small("lens", ""));
    let c = cfg.to_str().unwrap();
    run_ok(&["gen-data", "--config", c], dir.path());
    let responses = dir.path().join("out/data/responses.csv");
    let mut text = fs::read_to_string(&responses).unwrap();
    text.push_str("0,not-an-item,1\n");
    fs::write(&responses, text).unwrap();
    let out = lens(&["train", "--config", c], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
