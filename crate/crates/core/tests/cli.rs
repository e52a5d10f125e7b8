use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

const TIERS: [&str; 4] = ["exceptional", "strong", "fair", "limited"];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tierbench"))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = Value>) {
    let text: String = lines.into_iter().map(|v| format!("{v}\n")).collect();
    fs::write(path, text).unwrap();
}

/// Eight pitches per tier, two logprob evaluators and a label-only one.
fn fixtures(dir: &Path) {
    write_lines(
        &dir.join("bench.jsonl"),
        TIERS.iter().flat_map(|t| {
            (0..8).map(move |i| json!({"id": format!("{t}-{i}"), "field": "economics", "text_full": format!("idea {t} {i}"), "truth": t}))
        }),
    );
    let mut preds = Vec::new();
    for (m, shift) in [("m1", 0usize), ("m2", 1)] {
        for (ti, t) in TIERS.iter().enumerate() {
            for i in 0..8 {
                let guess = if (i + shift) % 3 == 0 { TIERS[(ti + 1) % 4] } else { t };
                let lp: serde_json::Map<String, Value> =
                    TIERS.iter().map(|x| (x.to_string(), json!(if *x == guess { -0.3 } else { -2.0 - i as f64 / 10.0 }))).collect();
                preds.push(json!({"evaluator_id": m, "pitch_id": format!("{t}-{i}"), "kind": "logprob", "label_logprobs": lp}));
            }
        }
    }
    for t in TIERS {
        for i in 0..8 {
            let label = if i < 5 { t } else { "fair" };
            preds.push(json!({"evaluator_id": "m3", "pitch_id": format!("{t}-{i}"), "kind": "label_only", "label": label}));
        }
    }
    write_lines(&dir.join("preds.jsonl"), preds);
}

fn run(dir: &Path, args: &[&str]) -> (i32, Value) {
    let status = bin().current_dir(dir).args(args).output().unwrap();
    let out = args.iter().position(|a| *a == "--out").map(|i| args[i + 1]).unwrap();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join(out).join("manifest.json")).unwrap()).unwrap();
    (status.status.code().unwrap(), manifest)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn metrics_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let (code, manifest) = run(dir.path(), &["--out", "m", "--format", "csv", "metrics", "--bench", "bench.jsonl", "--preds", "preds.jsonl"]);
    assert_eq!(code, 0);
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert!(manifest["outputs"].as_array().unwrap().iter().all(|o| o["sha256"].as_str().unwrap().len() == 64));
    let metrics = read_json(&dir.path().join("m/metrics.json"));
    // m3 is right on 5 of 8 per tier, plus all 8 fair pitches
    let acc = metrics["evaluators"]["m3"]["report"]["accuracy"].as_f64().unwrap();
    assert!((acc - 23.0 / 32.0).abs() < 1e-12);
    assert!(fs::read_to_string(dir.path().join("m/metrics.csv")).unwrap().lines().count() == 4);

    // identical reruns give identical manifests apart from the output directory
    let (_, again) = run(dir.path(), &["--out", "m2", "--format", "csv", "metrics", "--bench", "bench.jsonl", "--preds", "preds.jsonl"]);
    let digests = |m: &Value| m["outputs"].as_array().unwrap().iter().map(|o| o["sha256"].clone()).collect::<Vec<_>>();
    assert_eq!(digests(&manifest), digests(&again));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let (code, manifest) = run(dir.path(), &["--out", "a", "metrics", "--bench", "missing.jsonl", "--preds", "preds.jsonl"]);
    assert_eq!((code, manifest["exit_code"].as_i64()), (2, Some(2)));
    assert_eq!(manifest["status"], "error");

    fs::write(dir.path().join("broken.jsonl"), "{\"id\": \"x\"}\n").unwrap();
    let (code, _) = run(dir.path(), &["--out", "b", "metrics", "--bench", "broken.jsonl", "--preds", "preds.jsonl"]);
    assert_eq!(code, 1);

    let out = bin().args(["stats", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn report_bundles_sections() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let (code, manifest) =
        run(dir.path(), &["--out", "r", "report", "--bench", "bench.jsonl", "--preds", "preds.jsonl", "--draws", "100"]);
    assert_eq!(code, 0, "{manifest}");
    for f in ["metrics.json", "stats.json", "consensus.json", "ensembles.json", "agreement.json", "charts.json", "calibration.json"] {
        assert!(dir.path().join("r").join(f).exists(), "{f} missing");
    }
    let consensus = read_json(&dir.path().join("r/consensus.json"));
    assert_eq!(consensus["rows"][0]["policy"], "3of3");
    let charts = read_json(&dir.path().join("r/charts.json"));
    assert!(charts["confusion_grids"]["m1"].is_array());
}

#[test]
fn collect_mock_then_pairwise() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let (code, manifest) = run(dir.path(), &["--out", "c", "collect", "--bench", "bench.jsonl", "--model", "mock", "--mock"]);
    assert_eq!(code, 0, "{manifest}");
    assert_eq!(manifest["summary"]["records"], 32);
    assert!(dir.path().join("c/prompt_expert.txt").exists());

    let (code, _) = run(dir.path(), &["--out", "p", "--seed", "4", "pairwise", "build", "--bench", "bench.jsonl", "--strata", "1:30,2:20,3:10"]);
    assert_eq!(code, 0);
    let pairs: Vec<Value> = fs::read_to_string(dir.path().join("p/pairs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pairs.len(), 60);
    write_lines(&dir.path().join("choices.jsonl"), pairs.iter().map(|p| json!({"pair_id": p["id"], "chosen": p["pitch_high"]})));
    let (code, _) = run(dir.path(), &["--out", "s", "pairwise", "score", "--pairs", "p/pairs.jsonl", "--choices", "choices.jsonl"]);
    assert_eq!(code, 0);
    assert_eq!(read_json(&dir.path().join("s/pairwise_score.json"))["overall"], json!({"correct": 60, "total": 60}));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "seed = 9\n[rlsim]\nsteps = 2\ngroup_size = 4\n").unwrap();
    let (code, manifest) = run(dir.path(), &["--config", "run.toml", "--out", "rl", "rlsim", "--group-size", "6"]);
    assert_eq!(code, 0);
    assert_eq!(manifest["seed"], 9);
    let cfg = &read_json(&dir.path().join("rl/rlsim.json"))["config"];
    assert_eq!((cfg["steps"].as_u64(), cfg["group_size"].as_u64()), (Some(2), Some(6)));
}
