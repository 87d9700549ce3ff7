use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const ARTIFACTS: &[&str] = &[
    "corpus_structured.jsonl",
    "corpus_target.jsonl",
    "corpus_eval.jsonl",
    "mention_pool.jsonl",
    "mention_sets.jsonl",
    "graph.tsv",
    "ranking.tsv",
    "model.json",
    "distilled.tsv",
    "candidates.tsv",
    "predictions.tsv",
    "report.json",
    "pr_curve.csv",
    "manifest.json",
];

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
}

/// Copy of the committed fixture, with `extra` appended to its run.toml.
fn workdir(extra: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    if !extra.is_empty() {
        let path = dir.path().join("run.toml");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str(extra);
        std::fs::write(path, text).unwrap();
    }
    dir
}

fn relprop(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--config", "run.toml"];
    all.extend_from_slice(args);
    Command::new(env!("CARGO_BIN_EXE_relprop"))
        .args(&all)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    o
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = workdir("");
    let o = ok(relprop(dir.path(), &["run"]));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("micro  P="), "{stdout}");
    for a in ARTIFACTS {
        assert!(dir.path().join("out").join(a).is_file(), "{a} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let f1 = report["micro"]["f1"].as_f64().unwrap();
    assert!(f1 > 0.0 && f1 <= 1.0);
    assert!(report["ranking"]["mrr"].as_f64().is_some());
    let curve = std::fs::read_to_string(dir.path().join("out/pr_curve.csv")).unwrap();
    assert!(curve.starts_with("threshold,precision,recall\n"));
}

#[test]
fn stages_run_one_by_one_like_run() {
    let dir = workdir("");
    for stage in ["ingest", "mentions", "propagate", "train", "extract", "eval"] {
        ok(relprop(dir.path(), &[stage]));
    }
    ok(relprop(dir.path(), &["run", "--out", "again"]));
    for a in ARTIFACTS {
        let one = std::fs::read(dir.path().join("out").join(a)).unwrap();
        let two = std::fs::read(dir.path().join("again").join(a)).unwrap();
        assert!(one == two, "{a} differs between staged and one-shot runs");
    }
}

#[test]
fn train_before_propagate_names_the_missing_ranking() {
    let dir = workdir("");
    ok(relprop(dir.path(), &["ingest"]));
    ok(relprop(dir.path(), &["mentions"]));
    let o = relprop(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ranking artifact missing"), "{}", stderr(&o));
    assert!(stderr(&o).contains("relprop propagate"));
}

#[test]
fn every_stage_reports_its_missing_upstream() {
    let dir = workdir("");
    for (stage, needs) in [
        ("mentions", "ingest"),
        ("propagate", "mentions"),
        ("train", "propagate"),
        ("extract", "train"),
        ("eval", "extract"),
        ("sweep", "mentions"),
    ] {
        let o = relprop(dir.path(), &[stage]);
        assert_eq!(o.status.code(), Some(1), "{stage}");
        assert!(stderr(&o).contains(&format!("run `relprop {needs}` first")), "{stage}: {}", stderr(&o));
    }
}

#[test]
fn baseline_training_needs_no_ranking() {
    let dir = workdir("");
    ok(relprop(dir.path(), &["ingest"]));
    ok(relprop(dir.path(), &["mentions"]));
    ok(relprop(dir.path(), &["train", "--baseline", "DS_Target"]));
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"model\": \"DS_Target\""));
    ok(relprop(dir.path(), &["extract"]));
    ok(relprop(dir.path(), &["eval"]));
}

#[test]
fn changed_config_is_a_hash_mismatch() {
    let dir = workdir("");
    ok(relprop(dir.path(), &["run"]));
    let path = dir.path().join("run.toml");
    let text = std::fs::read_to_string(&path).unwrap().replace("n = 25", "n = 26");
    std::fs::write(&path, text).unwrap();
    let o = relprop(dir.path(), &["extract"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("config hash mismatch"), "{}", stderr(&o));
    // retraining clears it
    ok(relprop(dir.path(), &["train"]));
    ok(relprop(dir.path(), &["extract"]));
}

#[test]
fn seed_flag_changes_the_training_configuration() {
    let dir = workdir("");
    ok(relprop(dir.path(), &["run"]));
    let o = relprop(dir.path(), &["extract", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("config hash mismatch"));
}

#[test]
fn regenerated_upstream_makes_downstream_stale() {
    let dir = workdir("");
    ok(relprop(dir.path(), &["run"]));
    // different KB content changes the mention sets but not the config
    let triples = dir.path().join("triples.tsv");
    let text = std::fs::read_to_string(&triples).unwrap();
    let fewer: String = text.lines().skip(5).map(|l| format!("{l}\n")).collect();
    std::fs::write(&triples, fewer).unwrap();
    let o = relprop(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stale"), "{}", stderr(&o));
    ok(relprop(dir.path(), &["mentions"]));
    let o = relprop(dir.path(), &["train"]);
    assert!(stderr(&o).contains("re-run `relprop propagate`"), "{}", stderr(&o));
}

#[test]
fn tampered_artifact_is_rejected() {
    let dir = workdir("");
    ok(relprop(dir.path(), &["run"]));
    let ranking = dir.path().join("out/ranking.tsv");
    let mut text = std::fs::read_to_string(&ranking).unwrap();
    text.push_str("sideEffect\t999\tx:0:0:0-1\t0.5\n");
    std::fs::write(ranking, text).unwrap();
    let o = relprop(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ranking.tsv changed"), "{}", stderr(&o));
}

#[test]
fn rerunning_a_stage_is_byte_identical() {
    let dir = workdir("");
    ok(relprop(dir.path(), &["run"]));
    let before = std::fs::read(dir.path().join("out/manifest.json")).unwrap();
    ok(relprop(dir.path(), &["propagate"]));
    ok(relprop(dir.path(), &["train"]));
    let after = std::fs::read(dir.path().join("out/manifest.json")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn sweep_writes_one_row_per_strategy_and_n() {
    let dir = workdir("\n[sweep]\nn = [5, 10, 20]\nvariants = [\"RsRt\", \"RsCsRt\"]\n");
    ok(relprop(dir.path(), &["ingest"]));
    ok(relprop(dir.path(), &["mentions"]));
    let o = ok(relprop(dir.path(), &["sweep"]));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
    for variant in ["RsRt", "RsCsRt"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("out/sweep_{variant}.csv"))).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "strategy,n,precision,recall,f1");
        assert_eq!(lines.len(), 7, "{csv}");
        let keys: Vec<String> = lines[1..]
            .iter()
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(
            keys,
            ["Both,5", "Both,10", "Both,20", "Target,5", "Target,10", "Target,20"]
        );
    }
}

#[test]
fn infeasible_sweep_cells_are_left_empty() {
    // a structured-only graph has no target mentions to distill
    let dir = workdir("\n[sweep]\nn = [5]\nvariants = [\"RsCs\"]\n");
    ok(relprop(dir.path(), &["ingest"]));
    ok(relprop(dir.path(), &["mentions"]));
    ok(relprop(dir.path(), &["sweep"]));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep_RsCs.csv")).unwrap();
    assert!(csv.contains("\nTarget,5,,,\n"), "{csv}");
}

#[test]
fn runtime_failure_exits_with_two() {
    let dir = workdir("");
    let path = dir.path().join("run.toml");
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("variant = \"RsCsRt\"", "variant = \"RsCs\"")
        .replace("n = 25", "n = 25\nstrategy = \"Target\"");
    std::fs::write(&path, text).unwrap();
    let o = relprop(dir.path(), &["run"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("no positive examples"), "{}", stderr(&o));
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = workdir("");
    let missing = Command::new(env!("CARGO_BIN_EXE_relprop"))
        .args(["--config", "nope.toml", "ingest"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));

    let no_config = Command::new(env!("CARGO_BIN_EXE_relprop"))
        .arg("ingest")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(no_config.status.code(), Some(1));

    std::fs::remove_file(dir.path().join("gold.tsv")).unwrap();
    let o = relprop(dir.path(), &["ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paths.gold"), "{}", stderr(&o));

    let bad = workdir("\n[propagation]\nrestart_prob = 2.0\n");
    assert_eq!(relprop(bad.path(), &["ingest"]).status.code(), Some(1));

    let unknown = workdir("");
    std::fs::write(unknown.path().join("triples.tsv"), "treats\tx\ty\n").unwrap();
    ok(relprop(unknown.path(), &["ingest"]));
    let o = relprop(unknown.path(), &["mentions"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn synth_writes_a_runnable_configuration() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_relprop"))
        .args(["synth", "--small", "--seed", "3", "--out", "bench"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let bench = dir.path().join("bench");
    for f in ["schema.json", "triples.tsv", "concept_seeds.tsv", "structured.jsonl", "target.jsonl", "eval.jsonl", "gold.tsv", "run.toml"] {
        assert!(bench.join(f).is_file(), "{f}");
    }
    ok(relprop(&bench, &["run"]));
}

#[test]
fn unannotated_corpora_are_chunked_at_ingest() {
    let dir = workdir("");
    for name in ["structured.jsonl", "target.jsonl", "eval.jsonl"] {
        let path = dir.path().join(name);
        let mut out = String::new();
        for line in std::fs::read_to_string(&path).unwrap().lines() {
            let mut doc: serde_json::Value = serde_json::from_str(line).unwrap();
            for section in doc["sections"].as_array_mut().unwrap() {
                for s in section["sentences"].as_array_mut().unwrap() {
                    let s = s.as_object_mut().unwrap();
                    s.remove("np_chunks");
                    s.remove("coordinate_lists");
                }
            }
            out.push_str(&doc.to_string());
            out.push('\n');
        }
        std::fs::write(path, out).unwrap();
    }
    ok(relprop(dir.path(), &["run"]));
    let corpus = std::fs::read_to_string(dir.path().join("out/corpus_target.jsonl")).unwrap();
    assert!(corpus.contains("\"np_chunks\""));
}
