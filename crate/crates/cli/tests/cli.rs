use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn del(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_del"))
        .current_dir(dir)
        .args(args)
        .env_remove("DEL_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = del(dir, args);
    assert!(
        out.status.success(),
        "del {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const QUICK: &str = "[train]\nsigma1 = 60\nsigma2 = 240\nmu_val = 80\nmu_gopt = 40\n";

/// Temp dir with a small `gen` dataset in `data/` and a short schedule in `quick.toml`.
fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen-data", "--preset", "gen", "--n", "400", "--seed", "3", "-o", "data"]);
    fs::write(tmp.path().join("quick.toml"), QUICK).unwrap();
    tmp
}

#[test]
fn gen_data_is_reproducible_and_guards_its_output() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    for dir in ["a", "b"] {
        ok(t, &["gen-data", "--preset", "spe", "--n", "500", "--seed", "7", "-o", dir]);
    }
    for f in ["data.jsonl", "data.schema.json", "rules.del", "truth.json", "manifest.json"] {
        assert_eq!(fs::read(t.join("a").join(f)).unwrap(), fs::read(t.join("b").join(f)).unwrap(), "{f}");
    }
    let manifest = json_file(&t.join("a/manifest.json"));
    assert_eq!(manifest["tool"], "del");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let again = del(t, &["gen-data", "--preset", "spe", "--n", "500", "--seed", "8", "-o", "a"]);
    assert!(!again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    ok(t, &["gen-data", "--preset", "spe", "--n", "500", "--seed", "8", "-o", "a", "--force"]);
    assert_ne!(fs::read(t.join("a/data.jsonl")).unwrap(), fs::read(t.join("b/data.jsonl")).unwrap());

    fs::create_dir(t.join("mine")).unwrap();
    fs::write(t.join("mine/notes.txt"), "keep").unwrap();
    assert!(!del(t, &["gen-data", "-o", "mine", "--force"]).status.success());
    assert!(t.join("mine/notes.txt").exists());
}

#[test]
fn spe_preset_has_its_positive_share() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["--json", "gen-data", "--preset", "spe", "--seed", "2", "-o", "spe"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    let share = v["positives"].as_f64().unwrap() / v["samples"].as_f64().unwrap();
    assert!((share - 0.379).abs() <= 0.02, "{share}");
}

#[test]
fn train_then_eval_reproduces_the_last_validation() {
    let tmp = workspace();
    let t = tmp.path();
    let stdout = ok(t, &["train", "--data", "data", "-o", "run", "--config", "quick.toml", "--seed", "5"]);
    assert!(stdout.contains("best: step"));
    let manifest = json_file(&t.join("run/manifest.json"));
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["details"]["snapshots"], 3);

    let last_line = fs::read_to_string(t.join("run/metrics.jsonl")).unwrap().lines().last().unwrap().to_string();
    let last: Value = serde_json::from_str(&last_line).unwrap();
    assert_eq!(last["step"], 240);
    let eval = ok(t, &["--json", "eval", "--snapshot", "run/snap_240.json", "--data", "data"]);
    let m: Value = serde_json::from_str(&eval).unwrap();
    for key in ["accuracy", "recall", "recall_prime", "false_neg", "false_pos", "false_critical_ratio"] {
        assert_eq!(m[key], last[key], "{key}");
    }

    let table = ok(t, &["eval", "--snapshot", "run/snap_240.json", "--data", "data/data.jsonl"]);
    assert!(table.contains("recall'"));
    assert!(table.contains("\"recall_prime\""));
}

#[test]
fn runs_do_not_depend_on_worker_count() {
    let tmp = workspace();
    let t = tmp.path();
    ok(t, &["--workers", "1", "train", "--data", "data", "-o", "one", "--config", "quick.toml"]);
    ok(t, &["--workers", "3", "train", "--data", "data", "-o", "three", "--config", "quick.toml"]);
    assert_eq!(fs::read(t.join("one/metrics.jsonl")).unwrap(), fs::read(t.join("three/metrics.jsonl")).unwrap());
    assert_eq!(fs::read(t.join("one/snap_240.json")).unwrap(), fs::read(t.join("three/snap_240.json")).unwrap());
}

#[test]
fn training_without_a_validation_step_fails() {
    let tmp = workspace();
    let t = tmp.path();
    fs::write(t.join("short.json"), r#"{"train": {"sigma1": 5, "sigma2": 20, "mu_val": 100}}"#).unwrap();
    let out = del(t, &["train", "--data", "data", "-o", "run", "--config", "short.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no snapshot"));
}

#[test]
fn ablation_flags_reach_the_snapshot() {
    let tmp = workspace();
    let t = tmp.path();
    ok(
        t,
        &["train", "--data", "data", "-o", "run", "--config", "quick.toml", "--no-assess", "--no-critical-loss"],
    );
    let snap = json_file(&t.join("run/snap_240.json"));
    assert_eq!(snap["masks_active"], false);
    assert!(snap["assess"].is_null());
    assert_eq!(snap["rule_config"]["critical_weight"], 0.0);
}

#[test]
fn explain_shows_critical_rows_and_rejects_bad_ids() {
    let tmp = workspace();
    let t = tmp.path();
    ok(t, &["train", "--data", "data", "-o", "run", "--config", "quick.toml"]);
    let data = fs::read_to_string(t.join("data/data.jsonl")).unwrap();
    let samples: Vec<Value> = data.lines().map(|l| serde_json::from_str(l).unwrap()).collect();

    let mut saw_failing = false;
    for (id, sample) in samples.iter().enumerate().take(60) {
        let out = ok(t, &["--json", "explain", "--snapshot", "run/snap_240.json", "--data", "data", "--sample", &id.to_string()]);
        let v: Value = serde_json::from_str(&out).unwrap();
        if v["predicted"] == 1 {
            saw_failing = true;
            let rows = v["explanation"]["critical_rows"].as_array().unwrap();
            let n = sample["x_seq"].as_array().unwrap().len();
            assert!(!rows.is_empty());
            assert!(rows.iter().all(|r| (r.as_u64().unwrap() as usize) < n));
        }
    }
    assert!(saw_failing);

    let text = ok(t, &["explain", "--snapshot", "run/snap_240.json", "--data", "data", "--sample", "0"]);
    assert!(text.contains("threshold"));
    assert!(text.contains("critical rows"));

    let bad = del(t, &["explain", "--snapshot", "run/snap_240.json", "--data", "data", "--sample", "400"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown sample id 400"));
}

#[test]
fn snapshots_reject_datasets_with_another_schema() {
    let tmp = workspace();
    let t = tmp.path();
    ok(t, &["train", "--data", "data", "-o", "run", "--config", "quick.toml"]);
    fs::create_dir(t.join("other")).unwrap();
    fs::write(
        t.join("other/data.schema.json"),
        r#"{"columns": [{"name": "position", "kind": "numeric"}], "base_len": 0}"#,
    )
    .unwrap();
    fs::write(t.join("other/data.jsonl"), "{\"x_seq\": [[1.0]], \"x_base\": [], \"y\": 1}\n").unwrap();
    for cmd in ["eval", "explain"] {
        let mut args = vec![cmd, "--snapshot", "run/snap_240.json", "--data", "other"];
        if cmd == "explain" {
            args.extend(["--sample", "0"]);
        }
        let out = del(t, &args);
        assert!(!out.status.success(), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("schema"), "{cmd}");
    }

    let snap = fs::read_to_string(t.join("run/snap_240.json")).unwrap();
    fs::write(t.join("broken.json"), snap.replace("\"rule_net\"", "\"rules_net\"")).unwrap();
    let out = del(t, &["eval", "--snapshot", "broken.json", "--data", "data"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshot error"));
}

#[test]
fn baseline_and_protocol_reports() {
    let tmp = workspace();
    let t = tmp.path();
    let br: Value = serde_json::from_str(&ok(t, &["--json", "br", "--data", "data"])).unwrap();
    assert!(br["recall"].as_f64().unwrap() >= 0.9);

    let out = ok(t, &["--json", "protocol", "--a", "data", "--b", "data", "--b-acc-threshold", "0.925", "--config", "quick.toml", "-o", "proto"]);
    let report: Value = serde_json::from_str(&out).unwrap();
    let tables = report["tables"].as_array().unwrap();
    assert_eq!(tables.len(), 4);
    // With both sides equal, open tests train and test on the same samples
    // under the same accuracy gate.
    for table in &tables[2..] {
        for row in table["rows"].as_array().unwrap() {
            assert_eq!(row["train"], row["test"], "{}", table["title"]);
        }
    }
    assert_eq!(json_file(&t.join("proto/report.json")), report);
    assert_eq!(json_file(&t.join("proto/manifest.json"))["command"], "protocol");
}
