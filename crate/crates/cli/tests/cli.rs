use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nlpv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlpv")).args(args).output().expect("spawn nlpv")
}

fn ok(args: &[&str]) -> String {
    let out = nlpv(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn run_dir(stdout: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .expect("run directory line")
        .to_string()
}

#[test]
fn stage_by_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(ok(&["--seed", "4", "dataset", "gen", "--n", "10", "--out", &p(d, "corpus.jsonl")]).contains("20 sentences"));
    ok(&["--seed", "4", "perturb", "--corpus", &p(d, "corpus.jsonl"), "--n", "2", "--out", &p(d, "pert.jsonl")]);
    ok(&["--seed", "4", "perturb", "--corpus", &p(d, "corpus.jsonl"), "--n", "2", "--heldout", "--out", &p(d, "held.jsonl")]);
    ok(&[
        "embed", "toy", "--corpus", &p(d, "corpus.jsonl"), "--perturbations", &p(d, "pert.jsonl"), "--heldout",
        &p(d, "held.jsonl"), "--out", &p(d, "emb.jsonl"),
    ]);
    let kept = ok(&[
        "filter", "--corpus", &p(d, "corpus.jsonl"), "--perturbations", &p(d, "pert.jsonl"), "--embeddings",
        &p(d, "emb.jsonl"), "--out", &p(d, "kept.jsonl"), "--log", &p(d, "filter.jsonl"),
    ]);
    assert!(kept.starts_with("kept "));
    assert!(ok(&[
        "subspace", "build", "--corpus", &p(d, "corpus.jsonl"), "--embeddings", &p(d, "emb.jsonl"), "--perturbations",
        &p(d, "kept.jsonl"), "--out", &p(d, "subs.jsonl"),
    ])
    .contains("8 subspaces"));
    ok(&[
        "train", "--corpus", &p(d, "corpus.jsonl"), "--embeddings", &p(d, "emb.jsonl"), "--hidden", "8", "--epochs", "5",
        "--out", &p(d, "net.json"),
    ]);
    assert!(ok(&[
        "verify", "--network", &p(d, "net.json"), "--subspaces", &p(d, "subs.jsonl"), "--mode", "bab", "--max-regions",
        "16", "--time-budget-ms", "0", "--out", &p(d, "results.jsonl"),
    ])
    .contains("of 8 subspaces"));
    ok(&[
        "report", "--corpus", &p(d, "corpus.jsonl"), "--embeddings", &p(d, "emb.jsonl"), "--network", &p(d, "net.json"),
        "--subspaces", &p(d, "subs.jsonl"), "--results", &p(d, "results.jsonl"), "--heldout", &p(d, "held.jsonl"),
        "--csv", &p(d, "report.csv"), "--markdown", &p(d, "report.md"), "--json", &p(d, "metrics.json"),
    ]);
    let csv = fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("experiment,count,"));
    assert_eq!(fs::read_to_string(d.join("report.md")).unwrap().lines().count(), 3);
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "seed = 1\ntrain.epoch = 3\n").unwrap();
    let out = nlpv(&["pipeline", "run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("train.epoch"), "{err}");
}

#[test]
fn missing_input_file_is_reported() {
    let out = nlpv(&["report", "--corpus", "/nonexistent/c.jsonl", "--embeddings", "e", "--network", "n", "--subspaces", "s", "--results", "r"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/c.jsonl"));
}

#[test]
fn pipeline_export_and_reverify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "corpus.synth_n = 12\ntrain.hidden = 8\ntrain.epochs = 10\nsubspace.kind = eps_cube\nverify.mode = bab\nverify.max_regions = 32\nverify.time_budget_ms = 0\n",
    )
    .unwrap();
    let run = run_dir(&ok(&["--seed", "5", "pipeline", "run", cfg.to_str().unwrap()]));
    assert!(run.starts_with(tmp.path().join("runs").to_str().unwrap()));
    let other = run_dir(&ok(&["--seed", "6", "pipeline", "run", cfg.to_str().unwrap()]));
    assert_ne!(run, other, "seed override must change the run id");

    let bundle = p(tmp.path(), "bundle");
    assert!(ok(&["export", "bench", "--run", &run, "--out", &bundle]).contains("exported 10 queries"));
    let again = p(tmp.path(), "again.jsonl");
    ok(&["verify", "--bundle", &bundle, "--out", &again]);
    let status = |path: &str| -> Vec<String> {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["status"].to_string())
            .collect()
    };
    assert_eq!(status(&again), status(&format!("{run}/results.jsonl")));
}
