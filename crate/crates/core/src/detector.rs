//! Two-stage detection: threshold the LSTM-AE reconstruction error, then let
//! one isolation forest per partition flip that partition's outliers.

use std::fmt;
use std::io::{Read, Write};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iforest::{partition_outliers, ForestConfig, ForestError, IsolationForest, OutlierRule};
use crate::ingest::{to_feature_map, Label};
use crate::lstm_ae::{make_sequences, LstmAeConfig, LstmAeModel};
use crate::mscnn::{MscnnConfig, MscnnModel};
use crate::nn::train::{train, TrainError};
use crate::nn::{NnError, PoolSpec, Tensor, TrainConfig};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("threshold needs at least one training error")]
    EmptyErrors,
    #[error("reconstruction error {index} is not finite")]
    NonFinite { index: usize },
    #[error("length mismatch: {what} has {found}, expected {expected}")]
    Length { what: &'static str, expected: usize, found: usize },
    #[error("threshold multiplier k must be finite and >= 0, got {0}")]
    BadK(f64),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("verdict file: {0}")]
    Csv(#[from] csv::Error),
    #[error("verdict file row {row}: {message}")]
    Parse { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub k: f64,
}

/// `theta = mean + k * population std` of the normal training errors.
pub fn compute_threshold(errors: &[f64], k: f64) -> Result<Threshold, DetectError> {
    if errors.is_empty() {
        return Err(DetectError::EmptyErrors);
    }
    if !(k.is_finite() && k >= 0.0) {
        return Err(DetectError::BadK(k));
    }
    if let Some(index) = errors.iter().position(|e| !e.is_finite()) {
        return Err(DetectError::NonFinite { index });
    }
    let n = errors.len() as f64;
    let mu = errors.iter().sum::<f64>() / n;
    let sigma = (errors.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Threshold {
        theta: mu + k * sigma,
        mu,
        sigma,
        k,
    })
}

/// Stage-1 partition: indices (ascending) predicted normal and attack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage1 {
    pub normal: Vec<usize>,
    pub attack: Vec<usize>,
}

impl Stage1 {
    pub fn labels(&self) -> Vec<Label> {
        let mut out = vec![Label::Normal; self.normal.len() + self.attack.len()];
        for &i in &self.attack {
            out[i] = Label::Attack;
        }
        out
    }
}

/// Errors at or above theta are attacks.
pub fn stage1_classify(errors: &[f64], threshold: &Threshold) -> Stage1 {
    let (attack, normal) = (0..errors.len()).partition(|&i| errors[i] >= threshold.theta);
    Stage1 { normal, attack }
}

/// What the stage-2 forests see for each record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSpace {
    /// LSTM-AE error followed by the MSCNN latent vector.
    #[default]
    ErrorAndLatent,
    LatentOnly,
    ErrorOnly,
}

pub fn stage2_features(space: FeatureSpace, errors: &[f64], latents: &[Vec<f64>]) -> Vec<Vec<f64>> {
    errors
        .iter()
        .zip(latents)
        .map(|(&e, z)| match space {
            FeatureSpace::ErrorAndLatent => std::iter::once(e).chain(z.iter().copied()).collect(),
            FeatureSpace::LatentOnly => z.clone(),
            FeatureSpace::ErrorOnly => vec![e],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2 {
    pub labels: Vec<Label>,
    /// Score from the forest fit on the record's stage-1 partition; `None`
    /// when that partition was too small to fit a forest.
    pub scores: Vec<Option<f64>>,
    /// Outliers of the predicted-attack partition, relabeled normal.
    pub flipped_to_normal: Vec<usize>,
    /// Outliers of the predicted-normal partition, relabeled attack.
    pub flipped_to_attack: Vec<usize>,
}

/// Fits a forest on each stage-1 partition and flips its outliers.
/// Partitions with fewer than two rows pass through unchanged.
pub fn stage2_correct(
    features: &[Vec<f64>],
    stage1: &Stage1,
    forest: &ForestConfig,
    rule: OutlierRule,
    seed: u64,
) -> Result<Stage2, DetectError> {
    let n = stage1.normal.len() + stage1.attack.len();
    if features.len() != n {
        return Err(DetectError::Length {
            what: "stage-2 features",
            expected: n,
            found: features.len(),
        });
    }
    rule.validate()?;
    let mut labels = stage1.labels();
    let mut scores = vec![None; n];
    let mut flip = |part: &[usize], to: Label, seed: u64| -> Result<Vec<usize>, DetectError> {
        if part.len() < 2 {
            return Ok(Vec::new());
        }
        let rows: Vec<Vec<f64>> = part.iter().map(|&i| features[i].clone()).collect();
        let f = IsolationForest::fit(&rows, forest, seed)?;
        let p = partition_outliers(&f, &rows, rule)?;
        for (local, &s) in p.scores.iter().enumerate() {
            scores[part[local]] = Some(s);
        }
        let flipped: Vec<usize> = p.outliers.iter().map(|&local| part[local]).collect();
        for &i in &flipped {
            labels[i] = to;
        }
        Ok(flipped)
    };
    let flipped_to_normal = flip(&stage1.attack, Label::Normal, seed)?;
    let flipped_to_attack = flip(&stage1.normal, Label::Attack, seed.wrapping_add(1))?;
    Ok(Stage2 {
        labels,
        scores,
        flipped_to_normal,
        flipped_to_attack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub record_index: usize,
    pub epsilon: f64,
    pub stage1: Label,
    pub stage2: Label,
    pub iforest_score: Option<f64>,
    pub ground_truth: Option<Label>,
}

pub const VERDICT_HEADER: [&str; 6] = ["record_index", "epsilon", "stage1", "stage2", "iforest_score", "ground_truth"];

/// Writes verdicts as CSV; missing optional values are empty cells.
pub fn write_verdicts<W: Write>(writer: W, verdicts: &[DetectionVerdict]) -> Result<(), DetectError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VERDICT_HEADER)?;
    for v in verdicts {
        w.write_record([
            v.record_index.to_string(),
            v.epsilon.to_string(),
            v.stage1.to_string(),
            v.stage2.to_string(),
            v.iforest_score.map(|s| s.to_string()).unwrap_or_default(),
            v.ground_truth.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_verdicts<R: Read>(reader: R) -> Result<Vec<DetectionVerdict>, DetectError> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(VERDICT_HEADER) {
        return Err(DetectError::Parse {
            row: 0,
            message: format!("header must be {}", VERDICT_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |message: String| DetectError::Parse { row, message };
        let num = |k: usize| -> Result<f64, DetectError> {
            rec[k].parse().map_err(|_| bad(format!("{} is not a number: {:?}", VERDICT_HEADER[k], &rec[k])))
        };
        let label = |k: usize| -> Result<Label, DetectError> {
            Label::parse(&rec[k]).ok_or_else(|| bad(format!("{} is not a label: {:?}", VERDICT_HEADER[k], &rec[k])))
        };
        out.push(DetectionVerdict {
            record_index: rec[0].parse().map_err(|_| bad(format!("bad record_index {:?}", &rec[0])))?,
            epsilon: num(1)?,
            stage1: label(2)?,
            stage2: label(3)?,
            iforest_score: if rec[4].is_empty() { None } else { Some(num(4)?) },
            ground_truth: if rec[5].is_empty() { None } else { Some(label(5)?) },
        });
    }
    Ok(out)
}

/// MSCNN-AE settings that do not depend on the record width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MscnnOptions {
    pub filters_per_branch: usize,
    /// Defaults to `min(32, d - 1)`.
    pub latent_dim: Option<usize>,
    pub pool: PoolSpec,
}

impl Default for MscnnOptions {
    fn default() -> Self {
        Self {
            filters_per_branch: 8,
            latent_dim: None,
            pool: PoolSpec::default(),
        }
    }
}

impl MscnnOptions {
    pub fn resolve(&self, features: usize) -> MscnnConfig {
        let mut c = MscnnConfig::for_features(features);
        c.filters_per_branch = self.filters_per_branch;
        c.pool = self.pool;
        if let Some(l) = self.latent_dim {
            c.latent_dim = l;
        }
        c
    }
}

/// Everything the pipeline needs after ingest. Seeds for model init, shuffling
/// and the forests are all derived from `seed`; the `seed` fields inside the
/// train configs are ignored. `seed` itself is not part of the serialized
/// form; callers set it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mscnn: MscnnOptions,
    pub lstm: LstmAeConfig,
    pub mscnn_train: TrainConfig,
    pub lstm_train: TrainConfig,
    pub threshold_k: f64,
    pub forest: ForestConfig,
    pub outlier_rule: OutlierRule,
    pub stage2_features: FeatureSpace,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mscnn: MscnnOptions::default(),
            lstm: LstmAeConfig::default(),
            mscnn_train: TrainConfig::default(),
            lstm_train: TrainConfig::default(),
            threshold_k: 2.0,
            forest: ForestConfig::default(),
            outlier_rule: OutlierRule::default(),
            stage2_features: FeatureSpace::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SeedSlot {
    MscnnInit = 1,
    MscnnShuffle,
    LstmInit,
    LstmShuffle,
    Forests,
}

fn derive_seed(seed: u64, slot: SeedSlot) -> u64 {
    // splitmix64 finalizer over (seed, slot)
    let mut z = seed.wrapping_add((slot as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.lstm.validate().map_err(|e| format!("lstm: {e}"))?;
        self.mscnn_train.validate().map_err(|e| format!("mscnn_train: {e}"))?;
        self.lstm_train.validate().map_err(|e| format!("lstm_train: {e}"))?;
        self.forest.validate().map_err(|e| format!("forest: {e}"))?;
        self.outlier_rule.validate().map_err(|e| format!("outlier_rule: {e}"))?;
        if !(self.threshold_k.is_finite() && self.threshold_k >= 0.0) {
            return Err(format!("threshold_k must be finite and >= 0, got {}", self.threshold_k));
        }
        if self.mscnn.filters_per_branch == 0 {
            return Err("mscnn.filters_per_branch must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    MscnnTrain,
    LatentExtraction,
    LstmTrain,
    Threshold,
    Scoring,
    Stage1,
    Stage2,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::MscnnTrain => "mscnn-train",
            Stage::LatentExtraction => "latent-extraction",
            Stage::LstmTrain => "lstm-train",
            Stage::Threshold => "threshold",
            Stage::Scoring => "scoring",
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

fn at<E: std::error::Error + Send + Sync + 'static>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        source: Box::new(e),
    }
}

fn config_error(msg: String) -> PipelineError {
    PipelineError {
        stage: Stage::Config,
        source: msg.into(),
    }
}

/// Wall-clock seconds spent in one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub mscnn: MscnnModel,
    pub lstm: LstmAeModel,
    pub threshold: Threshold,
    pub mscnn_loss: Vec<f64>,
    pub lstm_loss: Vec<f64>,
}

fn clamp_batch(cfg: &TrainConfig, n: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: cfg.batch_size.min(n),
        seed,
        ..cfg.clone()
    }
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: Stage, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    let t0 = Instant::now();
    let out = f()?;
    let seconds = t0.elapsed().as_secs_f64();
    info!("{stage} done in {seconds:.2}s");
    timings.push(StageTiming { stage, seconds });
    Ok(out)
}

fn to_inputs(model: &MscnnModel, rows: &[Vec<f64>]) -> Result<Vec<Tensor>, NnError> {
    rows.iter().map(|r| model.input_tensor(&to_feature_map(r))).collect()
}

/// Trains both autoencoders on encoded normal records (in record order) and
/// fits the threshold on their training errors.
pub fn train_models(
    normals: &[Vec<f64>],
    config: &PipelineConfig,
    timings: &mut Vec<StageTiming>,
) -> Result<TrainedModels, PipelineError> {
    config.validate().map_err(config_error)?;
    if normals.is_empty() {
        return Err(at(Stage::MscnnTrain)(TrainError::EmptyTrainingSet));
    }
    let d = normals[0].len();
    if let Some(bad) = normals.iter().position(|r| r.len() != d) {
        return Err(config_error(format!("training record {bad} has {} features, expected {d}", normals[bad].len())));
    }
    let seed = config.seed;

    let (mscnn, mscnn_loss, inputs) = timed(timings, Stage::MscnnTrain, || {
        let mut m = MscnnModel::build(config.mscnn.resolve(d), derive_seed(seed, SeedSlot::MscnnInit)).map_err(at(Stage::Config))?;
        let inputs = to_inputs(&m, normals).map_err(at(Stage::MscnnTrain))?;
        let tc = clamp_batch(&config.mscnn_train, inputs.len(), derive_seed(seed, SeedSlot::MscnnShuffle));
        let report = train(&mut m, &inputs, &tc).map_err(at(Stage::MscnnTrain))?;
        Ok((m, report.loss_history, inputs))
    })?;

    let latents = timed(timings, Stage::LatentExtraction, || {
        mscnn.encode_batch(&inputs).map_err(at(Stage::LatentExtraction))
    })?;

    let (lstm, lstm_loss) = timed(timings, Stage::LstmTrain, || {
        let mut m = LstmAeModel::build(config.lstm, mscnn.config.latent_dim, derive_seed(seed, SeedSlot::LstmInit))
            .map_err(at(Stage::Config))?;
        let seqs = make_sequences(&latents, config.lstm.window, config.lstm.stride).map_err(at(Stage::LstmTrain))?;
        let tc = clamp_batch(&config.lstm_train, seqs.len(), derive_seed(seed, SeedSlot::LstmShuffle));
        let report = train(&mut m, &seqs, &tc).map_err(at(Stage::LstmTrain))?;
        Ok((m, report.loss_history))
    })?;

    let threshold = timed(timings, Stage::Threshold, || {
        let errors = lstm.score_records(&latents).map_err(at(Stage::Threshold))?;
        compute_threshold(&errors, config.threshold_k).map_err(at(Stage::Threshold))
    })?;
    info!(
        "threshold theta={:.6} (mu={:.6}, sigma={:.6}, k={})",
        threshold.theta, threshold.mu, threshold.sigma, threshold.k
    );

    Ok(TrainedModels {
        mscnn,
        lstm,
        threshold,
        mscnn_loss,
        lstm_loss,
    })
}

/// Scores `test` records (in record order) and runs both stages.
pub fn detect(
    models: &TrainedModels,
    test: &[Vec<f64>],
    truth: Option<&[Label]>,
    config: &PipelineConfig,
    timings: &mut Vec<StageTiming>,
) -> Result<Vec<DetectionVerdict>, PipelineError> {
    config.validate().map_err(config_error)?;
    if let Some(t) = truth {
        if t.len() != test.len() {
            return Err(config_error(format!("{} truths for {} test records", t.len(), test.len())));
        }
    }
    if test.is_empty() {
        return Ok(Vec::new());
    }
    let (latents, errors) = timed(timings, Stage::Scoring, || {
        let inputs = to_inputs(&models.mscnn, test).map_err(at(Stage::Scoring))?;
        let latents = models.mscnn.encode_batch(&inputs).map_err(at(Stage::Scoring))?;
        let errors = models.lstm.score_records(&latents).map_err(at(Stage::Scoring))?;
        Ok((latents, errors))
    })?;
    let s1 = timed(timings, Stage::Stage1, || Ok(stage1_classify(&errors, &models.threshold)))?;
    let s2 = timed(timings, Stage::Stage2, || {
        let feats = stage2_features(config.stage2_features, &errors, &latents);
        stage2_correct(&feats, &s1, &config.forest, config.outlier_rule, derive_seed(config.seed, SeedSlot::Forests))
            .map_err(at(Stage::Stage2))
    })?;
    info!(
        "stage1: {} normal / {} attack; stage2 flipped {} to normal, {} to attack",
        s1.normal.len(),
        s1.attack.len(),
        s2.flipped_to_normal.len(),
        s2.flipped_to_attack.len()
    );
    let s1_labels = s1.labels();
    Ok((0..test.len())
        .map(|i| DetectionVerdict {
            record_index: i,
            epsilon: errors[i],
            stage1: s1_labels[i],
            stage2: s2.labels[i],
            iforest_score: s2.scores[i],
            ground_truth: truth.map(|t| t[i]),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub models: TrainedModels,
    pub verdicts: Vec<DetectionVerdict>,
    pub timings: Vec<StageTiming>,
}

/// Trains on the normal records of `train` and detects on `test`. Both are
/// encoded feature vectors with labels; unlabeled training records are
/// treated as normal.
pub fn run_pipeline(
    train: &[(Vec<f64>, Option<Label>)],
    test: &[(Vec<f64>, Option<Label>)],
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let mut timings = Vec::new();
    let normals: Vec<Vec<f64>> = train
        .iter()
        .filter(|(_, l)| *l != Some(Label::Attack))
        .map(|(x, _)| x.clone())
        .collect();
    let models = train_models(&normals, config, &mut timings)?;
    let rows: Vec<Vec<f64>> = test.iter().map(|(x, _)| x.clone()).collect();
    let truth: Option<Vec<Label>> = test.iter().map(|(_, l)| *l).collect();
    let verdicts = detect(&models, &rows, truth.as_deref(), config, &mut timings)?;
    Ok(PipelineOutput {
        models,
        verdicts,
        timings,
    })
}
