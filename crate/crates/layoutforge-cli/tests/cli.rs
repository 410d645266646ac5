//! End-to-end CLI checks at miniature scale: exit codes, reproducibility,
//! artifact layout, and the timesteps knob.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_layoutforge"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "\
[vocab]
kind = 3d
seed = 5

[schedules]
t_prior = 6
t_dec = 3

[model]
depth = 1
d_model = 32
heads = 2
d_edge = 8
d_cond = 16

[vq]
steps = 30
batch = 8
eval_every = 10

[train_prior]
steps = 10
batch = 4

[train_decoder]
steps = 10
batch = 4

[data]
n_samples = 30
split = 0.7,0.1,0.2
",
    )
    .unwrap();
    path
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let out = run(&["--config", "/nonexistent/lf.cfg", "schedule-check"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/lf.cfg"), "stderr was: {err}");
}

#[test]
fn unknown_task_is_a_validation_error() {
    let tmp = tempdir("task");
    let cfg = write_tiny_config(&tmp);
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.join("run").to_str().unwrap(),
        "task",
        "--task",
        "teleport",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn schedule_check_passes() {
    let tmp = tempdir("sched");
    let cfg = write_tiny_config(&tmp);
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.join("run").to_str().unwrap(),
        "schedule-check",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.matches("[PASS]").count() >= 5, "{text}");
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lf-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn full_pipeline_runs_and_is_reproducible() {
    let tmp = tempdir("full");
    let cfg = write_tiny_config(&tmp);
    let cfg = cfg.to_str().unwrap();

    // curate twice into different outputs: byte-identical corpora
    for name in ["run_a", "run_b"] {
        let out = run(&["--config", cfg, "--out", tmp.join(name).to_str().unwrap(), "curate"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(tmp.join("run_a/corpus/train.jsonl")).unwrap();
    let b = fs::read(tmp.join("run_b/corpus/train.jsonl")).unwrap();
    assert_eq!(a, b, "same seed and config must give identical corpora");
    // a different seed changes the corpus
    let out = run(&[
        "--config",
        cfg,
        "--seed",
        "99",
        "--out",
        tmp.join("run_c").to_str().unwrap(),
        "curate",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let c = fs::read(tmp.join("run_c/corpus/train.jsonl")).unwrap();
    assert_ne!(a, c);

    let outdir = tmp.join("run_a");
    let outdir = outdir.to_str().unwrap();
    for cmd in ["train-vq", "train-prior", "train-decoder"] {
        let out = run(&["--config", cfg, "--out", outdir, cmd]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(tmp.join("run_a/ckpt/vq_codebook.lfvq").exists());
    assert!(tmp.join("run_a/ckpt/prior.ckpt").exists());
    assert!(tmp.join("run_a/reports/prior_train.csv").exists());
    // the codebook file leads with its magic
    let cb = fs::read(tmp.join("run_a/ckpt/vq_codebook.lfvq")).unwrap();
    assert_eq!(&cb[..5], b"LFVQ1");

    // sampling with an explicit timesteps knob, recorded in the manifest
    let out = run(&[
        "--config", cfg, "--out", outdir, "--timesteps", "6+3", "sample", "--n", "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(tmp.join("run_a/manifest-sample.json")).unwrap();
    assert!(manifest.contains("\"timesteps\": \"6+3\""), "{manifest}");
    assert!(tmp.join("run_a/samples/samples_6+3.jsonl").exists());
    assert!(tmp.join("run_a/reports/sample_metrics_6+3.json").exists());

    // sampling twice with the same seed gives identical bytes
    let first = fs::read(tmp.join("run_a/samples/samples_6+3.jsonl")).unwrap();
    let out = run(&[
        "--config", cfg, "--out", outdir, "--timesteps", "6+3", "sample", "--n", "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let second = fs::read(tmp.join("run_a/samples/samples_6+3.jsonl")).unwrap();
    assert_eq!(first, second);

    // zero-shot task, eval and render all complete
    let out = run(&[
        "--config", cfg, "--out", outdir, "--timesteps", "6+3", "task", "--task", "rearrange",
        "--n", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "--config",
        cfg,
        "--out",
        outdir,
        "--timesteps",
        "6+3",
        "eval",
        "--input",
        tmp.join("run_a/samples/task_rearrange.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.join("run_a/reports/eval.json").exists());
    assert!(tmp.join("run_a/reports/eval_per_sample.csv").exists());
    let out = run(&["--config", cfg, "--out", outdir, "--timesteps", "6+3", "render"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.join("run_a/svg/samples_6+3_0000.svg").exists());
    // no temp files left behind by write-then-rename
    let leftovers: Vec<_> = walk(&tmp.join("run_a"))
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");

    let _ = fs::remove_dir_all(&tmp);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
    }
    out
}
