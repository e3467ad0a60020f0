//! The four pipeline commands. Each one checks its inputs and refuses to
//! overwrite outputs (unless forced) before doing any work.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ids_core::detector::{detect, read_verdicts, train_models, write_verdicts, StageTiming, Threshold, TrainedModels};
use ids_core::ingest::{load_csv, read_encoded, write_encoded, FeatureRecord, Label, Preprocessor};
use ids_core::lstm_ae::LstmAeModel;
use ids_core::model_io::{sha256_hex, ModelFile};
use ids_core::mscnn::MscnnModel;
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Loaded;
use crate::error::{CliError, ResultExt};
use crate::report;

pub const TRAIN_ENCODED: &str = "preprocessed/train.csv";
pub const TEST_ENCODED: &str = "preprocessed/test.csv";
pub const PREPROCESSOR: &str = "preprocessed/preprocessor.json";
pub const SUMMARY: &str = "preprocessed/summary.json";
pub const MSCNN_MODEL: &str = "models/mscnn.json";
pub const LSTM_MODEL: &str = "models/lstm-ae.json";
pub const THRESHOLD: &str = "models/threshold.json";
pub const LOSS_HISTORY: &str = "models/loss_history.json";
pub const VERDICTS: &str = "verdicts.csv";
pub const METRICS: &str = "metrics.json";
pub const ROC: &str = "roc.csv";
pub const SCORES: &str = "scores.csv";
pub const CONFUSION_STAGE1: &str = "confusion_stage1.csv";
pub const CONFUSION_STAGE2: &str = "confusion_stage2.csv";
pub const MANIFEST: &str = "manifest.json";

pub struct Context {
    pub loaded: Loaded,
    pub force: bool,
}

impl Context {
    fn path(&self, rel: &str) -> PathBuf {
        self.loaded.out.join(rel)
    }

    fn refuse_overwrite(&self, outputs: &[&str]) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        match outputs.iter().find(|o| self.path(o).exists()) {
            Some(o) => Err(CliError::validation(format!(
                "{} already exists; pass --force to overwrite",
                self.path(o).display()
            ))),
            None => Ok(()),
        }
    }

    fn require(&self, inputs: &[&str]) -> Result<(), CliError> {
        match inputs.iter().find(|i| !self.path(i).exists()) {
            Some(i) => Err(CliError::validation(format!(
                "missing artifact {}; run the earlier pipeline commands first",
                self.path(i).display()
            ))),
            None => Ok(()),
        }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).or_runtime(format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).or_runtime(format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes).or_runtime(format!("writing {}", path.display()))?;
    tmp.persist(path).or_runtime(format!("renaming into {}", path.display()))?;
    Ok(())
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value).or_runtime("serializing JSON")?;
    out.push(b'\n');
    Ok(out)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).or_validation(format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).or_validation(format!("parsing {}", path.display()))
}

fn read_encoded_file(path: &Path) -> Result<Vec<FeatureRecord>, CliError> {
    let f = File::open(path).or_validation(format!("opening {}", path.display()))?;
    read_encoded(f).or_validation(format!("reading {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandTiming {
    pub command: String,
    pub seconds: f64,
    pub stages: Vec<StageTiming>,
}

fn write_timing(ctx: &Context, command: &str, start: Instant, stages: Vec<StageTiming>) -> Result<(), CliError> {
    let t = CommandTiming {
        command: command.into(),
        seconds: start.elapsed().as_secs_f64(),
        stages,
    };
    write_atomic(&ctx.path(&format!("timings/{command}.json")), &to_json_bytes(&t)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub config_hash: String,
    pub feature_width: usize,
    pub train_rows: usize,
    pub train_normal: usize,
    pub train_attack: usize,
    pub test_rows: usize,
    pub test_normal: usize,
    pub test_attack: usize,
}

fn count(records: &[FeatureRecord], label: Label) -> usize {
    records.iter().filter(|r| r.label == Some(label)).count()
}

pub fn preprocess(ctx: &Context) -> Result<(), CliError> {
    let start = Instant::now();
    let l = &ctx.loaded;
    let train_path = l.resolve(&l.config.train);
    let test_path = l.resolve(&l.config.test);
    for p in [&train_path, &test_path] {
        if !p.exists() {
            return Err(CliError::validation(format!("dataset file {} not found", p.display())));
        }
    }
    ctx.refuse_overwrite(&[TRAIN_ENCODED, TEST_ENCODED, PREPROCESSOR, SUMMARY])?;

    let load = |p: &Path, cap: Option<usize>| -> Result<Vec<FeatureRecord>, CliError> {
        let mut r = load_csv(p, &l.schema).or_validation(format!("{}", p.display()))?;
        if let Some(n) = cap {
            r.truncate(n);
        }
        Ok(r)
    };
    let train = load(&train_path, l.config.ingest.max_train_records)?;
    let test = load(&test_path, l.config.ingest.max_test_records)?;
    let pre = Preprocessor::fit(&train, &l.schema).or_validation("fitting preprocessor")?;
    let train = pre.apply(train, &l.schema).or_validation("encoding training records")?;
    let test = pre.apply(test, &l.schema).or_validation("encoding test records")?;

    let summary = DatasetSummary {
        config_hash: l.hash.clone(),
        feature_width: l.schema.feature_width(),
        train_rows: train.len(),
        train_normal: count(&train, Label::Normal),
        train_attack: count(&train, Label::Attack),
        test_rows: test.len(),
        test_normal: count(&test, Label::Normal),
        test_attack: count(&test, Label::Attack),
    };
    info!(
        "train: {} rows ({} normal, {} attack); test: {} rows ({} normal, {} attack)",
        summary.train_rows, summary.train_normal, summary.train_attack, summary.test_rows, summary.test_normal, summary.test_attack
    );

    for (rel, recs) in [(TRAIN_ENCODED, &train), (TEST_ENCODED, &test)] {
        let mut buf = Vec::new();
        write_encoded(&mut buf, recs).or_runtime(rel)?;
        write_atomic(&ctx.path(rel), &buf)?;
    }
    write_atomic(&ctx.path(PREPROCESSOR), &to_json_bytes(&pre)?)?;
    write_atomic(&ctx.path(SUMMARY), &to_json_bytes(&summary)?)?;
    write_timing(ctx, "preprocess", start, Vec::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LossHistory {
    mscnn: Vec<f64>,
    lstm: Vec<f64>,
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let start = Instant::now();
    ctx.require(&[TRAIN_ENCODED])?;
    ctx.refuse_overwrite(&[MSCNN_MODEL, LSTM_MODEL, THRESHOLD, LOSS_HISTORY])?;
    let records = read_encoded_file(&ctx.path(TRAIN_ENCODED))?;
    let normals: Vec<Vec<f64>> = records
        .into_iter()
        .filter(|r| r.label != Some(Label::Attack))
        .map(|r| r.encoded)
        .collect();
    if normals.is_empty() {
        return Err(CliError::validation("training set has no normal records"));
    }
    info!("training on {} normal records", normals.len());
    let mut stages = Vec::new();
    let models = train_models(&normals, &ctx.loaded.pipeline(), &mut stages).or_runtime("training")?;
    let hash = &ctx.loaded.hash;
    write_atomic(
        &ctx.path(MSCNN_MODEL),
        &ModelFile::new("mscnn", hash, &models.mscnn).to_json().or_runtime("serializing model")?,
    )?;
    write_atomic(
        &ctx.path(LSTM_MODEL),
        &ModelFile::new("lstm-ae", hash, &models.lstm).to_json().or_runtime("serializing model")?,
    )?;
    write_atomic(
        &ctx.path(THRESHOLD),
        &ModelFile::new("threshold", hash, &models.threshold).to_json().or_runtime("serializing threshold")?,
    )?;
    let losses = LossHistory {
        mscnn: models.mscnn_loss,
        lstm: models.lstm_loss,
    };
    write_atomic(&ctx.path(LOSS_HISTORY), &to_json_bytes(&losses)?)?;
    write_timing(ctx, "train", start, stages)
}

fn load_model<T: Serialize + DeserializeOwned>(ctx: &Context, rel: &str, arch: &str) -> Result<T, CliError> {
    let path = ctx.path(rel);
    let bytes = fs::read(&path).or_validation(format!("model file {}", path.display()))?;
    let file = ModelFile::<T>::from_json(&bytes, arch).or_validation(format!("model file {}", path.display()))?;
    if file.config_hash != ctx.loaded.hash {
        return Err(CliError::hash_mismatch(format!(
            "{} was trained under config {} but the current config hashes to {}; retrain or use the original config",
            path.display(),
            file.config_hash,
            ctx.loaded.hash
        )));
    }
    Ok(file.model)
}

pub fn detect_cmd(ctx: &Context) -> Result<(), CliError> {
    let start = Instant::now();
    ctx.require(&[TEST_ENCODED, MSCNN_MODEL, LSTM_MODEL, THRESHOLD])?;
    ctx.refuse_overwrite(&[VERDICTS])?;
    let models = TrainedModels {
        mscnn: load_model::<MscnnModel>(ctx, MSCNN_MODEL, "mscnn")?,
        lstm: load_model::<LstmAeModel>(ctx, LSTM_MODEL, "lstm-ae")?,
        threshold: load_model::<Threshold>(ctx, THRESHOLD, "threshold")?,
        mscnn_loss: Vec::new(),
        lstm_loss: Vec::new(),
    };
    let records = read_encoded_file(&ctx.path(TEST_ENCODED))?;
    let truth: Option<Vec<Label>> = records.iter().map(|r| r.label).collect();
    let rows: Vec<Vec<f64>> = records.into_iter().map(|r| r.encoded).collect();
    let mut stages = Vec::new();
    let verdicts =
        detect(&models, &rows, truth.as_deref(), &ctx.loaded.pipeline(), &mut stages).or_runtime("detection")?;
    let mut buf = Vec::new();
    write_verdicts(&mut buf, &verdicts).or_runtime("writing verdicts")?;
    write_atomic(&ctx.path(VERDICTS), &buf)?;
    write_timing(ctx, "detect", start, stages)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: Option<DatasetSummary>,
    pub timings: Vec<CommandTiming>,
    /// SHA-256 of each model file, keyed by path relative to the output dir.
    pub model_digests: BTreeMap<String, String>,
    pub metrics: report::MetricsReport,
}

pub fn evaluate(ctx: &Context) -> Result<(), CliError> {
    ctx.require(&[VERDICTS])?;
    ctx.refuse_overwrite(&[METRICS, ROC, SCORES, CONFUSION_STAGE1, CONFUSION_STAGE2, MANIFEST])?;
    let f = File::open(ctx.path(VERDICTS)).or_validation(VERDICTS)?;
    let verdicts = read_verdicts(f).or_validation(format!("reading {}", ctx.path(VERDICTS).display()))?;
    let eval = report::evaluate(&verdicts)?;
    let m = &eval.metrics;
    info!(
        "AUC {:.4}; stage1 acc {:.4} P {:.4} R {:.4} F1 {:.4}; stage2 acc {:.4} P {:.4} R {:.4} F1 {:.4}",
        m.auc,
        m.stage1.scalar.accuracy,
        m.stage1.scalar.precision,
        m.stage1.scalar.recall,
        m.stage1.scalar.f1,
        m.stage2.scalar.accuracy,
        m.stage2.scalar.precision,
        m.stage2.scalar.recall,
        m.stage2.scalar.f1
    );
    write_atomic(&ctx.path(METRICS), &to_json_bytes(m)?)?;
    write_atomic(&ctx.path(ROC), &report::roc_csv(&eval.roc)?)?;
    write_atomic(&ctx.path(SCORES), &report::scores_csv(&verdicts)?)?;
    write_atomic(&ctx.path(CONFUSION_STAGE1), &report::confusion_csv(&m.stage1.confusion)?)?;
    write_atomic(&ctx.path(CONFUSION_STAGE2), &report::confusion_csv(&m.stage2.confusion)?)?;

    let dataset = ctx.path(SUMMARY).exists().then(|| read_json(&ctx.path(SUMMARY))).transpose()?;
    let timings = ["preprocess", "train", "detect"]
        .iter()
        .map(|c| ctx.path(&format!("timings/{c}.json")))
        .filter(|p| p.exists())
        .map(|p| read_json(&p))
        .collect::<Result<Vec<CommandTiming>, _>>()?;
    let mut model_digests = BTreeMap::new();
    for rel in [MSCNN_MODEL, LSTM_MODEL, THRESHOLD] {
        if let Ok(bytes) = fs::read(ctx.path(rel)) {
            model_digests.insert(rel.to_string(), sha256_hex(&bytes));
        }
    }
    let manifest = Manifest {
        config_hash: ctx.loaded.hash.clone(),
        seed: ctx.loaded.config.seed,
        dataset,
        timings,
        model_digests,
        metrics: eval.metrics,
    };
    write_atomic(&ctx.path(MANIFEST), &to_json_bytes(&manifest)?)
}
