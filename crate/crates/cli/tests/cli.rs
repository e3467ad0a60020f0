use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use ids_core::synth::{schema, to_csv, Generator, SyntheticConfig};

const BIN: &str = env!("CARGO_BIN_EXE_ids-pipeline");

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// Synthetic train/test CSVs, schema and a fast config in a temp dir.
    fn new(train_normal: usize, test_normal: usize, test_attack: usize, epochs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let g = Generator::new(SyntheticConfig { features: 8, ..Default::default() }, 11);
        fs::write(dir.path().join("train.csv"), to_csv(&g.dataset(train_normal, 0, 1))).unwrap();
        fs::write(dir.path().join("test.csv"), to_csv(&g.dataset(test_normal, test_attack, 2))).unwrap();
        fs::write(dir.path().join("schema.json"), serde_json::to_string(&schema(8)).unwrap()).unwrap();
        let cfg = serde_json::json!({
            "seed": 5,
            "schema": "schema.json",
            "train": "train.csv",
            "test": "test.csv",
            "pipeline": {
                "mscnn": {"filters_per_branch": 4},
                "lstm": {"window": 4, "code_dim": 6, "encoder_hidden": 8},
                "mscnn_train": {"epochs": epochs, "batch_size": 16, "learning_rate": 0.005},
                "lstm_train": {"epochs": epochs, "batch_size": 16, "learning_rate": 0.005},
                "forest": {"tree_count": 50, "subsample_size": 128}
            }
        });
        fs::write(dir.path().join("run.json"), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("run.json")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str], out: &str) -> Output {
        Command::new(BIN)
            .args(args)
            .arg("--config")
            .arg(self.config())
            .arg("--out")
            .arg(self.out(out))
            .env("ANOMALY_PIPELINE_LOG", "warn")
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", stderr(o));
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn same_seed_single_thread_runs_are_byte_identical() {
    let f = Fixture::new(300, 150, 50, 3);
    for out in ["a", "b"] {
        for cmd in ["preprocess", "train", "detect", "evaluate"] {
            assert_ok(&f.run(&[cmd, "--threads", "1"], out));
        }
    }
    for rel in [
        "verdicts.csv",
        "metrics.json",
        "roc.csv",
        "models/mscnn.json",
        "models/lstm-ae.json",
        "models/threshold.json",
    ] {
        assert_eq!(read(&f.out("a").join(rel)), read(&f.out("b").join(rel)), "{rel} differs");
    }
}

#[test]
fn outputs_have_documented_shape() {
    let f = Fixture::new(300, 150, 50, 2);
    assert_ok(&f.run(&["run"], "o"));
    let o = f.out("o");
    let verdicts = String::from_utf8(read(&o.join("verdicts.csv"))).unwrap();
    let mut lines = verdicts.lines();
    assert_eq!(lines.next().unwrap(), "record_index,epsilon,stage1,stage2,iforest_score,ground_truth");
    assert_eq!(lines.count(), 200);
    let roc = String::from_utf8(read(&o.join("roc.csv"))).unwrap();
    let rows: Vec<&str> = roc.lines().collect();
    assert_eq!(rows[0], "fpr,tpr,threshold");
    assert!(rows[1].starts_with("0,0,"));
    assert!(rows.last().unwrap().starts_with("1,1,"));
    let scores = String::from_utf8(read(&o.join("scores.csv"))).unwrap();
    assert!(scores.starts_with("index,epsilon,truth,stage1,stage2\n"));
    for c in ["confusion_stage1.csv", "confusion_stage2.csv"] {
        assert!(String::from_utf8(read(&o.join(c))).unwrap().starts_with("actual,predicted_attack,predicted_normal\n"));
    }
    let m: serde_json::Value = serde_json::from_slice(&read(&o.join("metrics.json"))).unwrap();
    for k in ["accuracy", "precision", "recall", "f1"] {
        let v = m["stage2"][k].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(m["auc"].as_f64().is_some());
    let man: serde_json::Value = serde_json::from_slice(&read(&o.join("manifest.json"))).unwrap();
    assert_eq!(man["dataset"]["train_rows"], 300);
    assert_eq!(man["dataset"]["test_rows"], 200);
    assert_eq!(man["seed"], 5);
    assert_eq!(man["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(man["model_digests"].as_object().unwrap().len(), 3);
    assert_eq!(man["metrics"], m);
}

#[test]
fn rerun_without_force_is_refused() {
    let f = Fixture::new(100, 40, 10, 1);
    assert_ok(&f.run(&["preprocess"], "o"));
    let again = f.run(&["preprocess"], "o");
    assert_eq!(code(&again), 1);
    assert!(stderr(&again).contains("--force"));
    assert_ok(&f.run(&["preprocess", "--force"], "o"));
}

#[test]
fn missing_schema_fails_before_any_output() {
    let f = Fixture::new(50, 10, 10, 1);
    fs::remove_file(f.dir.path().join("schema.json")).unwrap();
    let o = f.run(&["preprocess"], "o");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("schema.json"));
    assert!(!f.out("o").exists());
}

#[test]
fn missing_model_names_the_artifact() {
    let f = Fixture::new(100, 40, 10, 1);
    assert_ok(&f.run(&["preprocess"], "o"));
    let o = f.run(&["detect"], "o");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mscnn.json"), "{}", stderr(&o));
}

#[test]
fn detect_under_a_different_config_is_a_hash_mismatch() {
    let f = Fixture::new(100, 40, 10, 1);
    assert_ok(&f.run(&["preprocess"], "o"));
    assert_ok(&f.run(&["train"], "o"));
    let o = f.run(&["detect", "--seed", "6"], "o");
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert_ok(&f.run(&["detect"], "o"));
}

#[test]
fn no_normal_training_records_is_a_validation_error() {
    let f = Fixture::new(50, 10, 10, 1);
    let g = Generator::new(SyntheticConfig { features: 8, ..Default::default() }, 11);
    fs::write(f.dir.path().join("train.csv"), to_csv(&g.dataset(0, 30, 1))).unwrap();
    assert_ok(&f.run(&["preprocess"], "o"));
    let o = f.run(&["train"], "o");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no normal"));
    assert!(!f.out("o").join("models").exists());
}

#[test]
fn evaluate_rejects_unlabeled_verdicts() {
    let f = Fixture::new(50, 10, 10, 1);
    let o = f.out("o");
    fs::create_dir_all(&o).unwrap();
    fs::write(
        o.join("verdicts.csv"),
        "record_index,epsilon,stage1,stage2,iforest_score,ground_truth\n0,0.5,attack,attack,,\n",
    )
    .unwrap();
    let r = f.run(&["evaluate"], "o");
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("ground truth"));
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    let o = Command::new(BIN).args(["train", "--bogus"]).output().unwrap();
    assert_eq!(code(&o), 1);
    let o = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("preprocess"));
}

#[test]
fn smoke_run_is_fast() {
    let f = Fixture::new(500, 0, 0, 5);
    let g = Generator::new(SyntheticConfig { features: 8, ..Default::default() }, 11);
    fs::write(f.dir.path().join("test.csv"), to_csv(&g.dataset(80, 20, 2))).unwrap();
    let t0 = Instant::now();
    assert_ok(&f.run(&["run"], "o"));
    assert!(t0.elapsed().as_secs() < 300);
}

#[test]
fn all_normal_test_set_gives_few_attacks() {
    let f = Fixture::new(600, 0, 0, 8);
    let g = Generator::new(SyntheticConfig { features: 8, ..Default::default() }, 11);
    fs::write(f.dir.path().join("test.csv"), to_csv(&g.dataset(400, 0, 2))).unwrap();
    assert_ok(&f.run(&["preprocess"], "o"));
    assert_ok(&f.run(&["train"], "o"));
    assert_ok(&f.run(&["detect"], "o"));
    let v = ids_core::detector::read_verdicts(fs::File::open(f.out("o").join("verdicts.csv")).unwrap()).unwrap();
    let s1 = v.iter().filter(|r| r.stage1 == ids_core::ingest::Label::Attack).count();
    let s2 = v.iter().filter(|r| r.stage2 == ids_core::ingest::Label::Attack).count();
    // at most the contamination share of the normal partition plus the stage-1 tail
    let bound = (0.05 * (400 - s1) as f64).ceil() as usize + s1;
    assert!(s2 <= bound, "{s2} > {bound}");
    assert!(s1 <= 40, "stage-1 tail {s1}/400");
}
