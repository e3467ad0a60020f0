//! Evaluation products: metrics JSON and the CSVs behind the score scatter,
//! ROC curve and confusion matrices.

use ids_core::detector::DetectionVerdict;
use ids_core::ingest::Label;
use ids_core::metrics::{
    averaged_metrics, confusion, one_vs_rest, roc_auc, scalar_metrics, AveragedMetrics, ConfusionMatrix, RocCurve,
    ScalarMetrics,
};
use serde::Serialize;

use crate::error::{CliError, ResultExt};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub confusion: ConfusionMatrix,
    #[serde(flatten)]
    pub scalar: ScalarMetrics,
    #[serde(flatten)]
    pub averaged: AveragedMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub records: usize,
    pub attacks: usize,
    /// Area under the ROC curve of the reconstruction error.
    pub auc: f64,
    pub stage1: StageReport,
    pub stage2: StageReport,
}

pub struct Evaluation {
    pub metrics: MetricsReport,
    pub roc: RocCurve,
}

fn stage_report(pred: &[Label], truth: &[Label]) -> Result<StageReport, CliError> {
    let cm = confusion(pred, truth).or_runtime("confusion matrix")?;
    Ok(StageReport {
        confusion: cm,
        scalar: scalar_metrics(&cm).or_validation("metrics")?,
        averaged: averaged_metrics(&one_vs_rest(&cm)).or_validation("averaged metrics")?,
    })
}

pub fn evaluate(verdicts: &[DetectionVerdict]) -> Result<Evaluation, CliError> {
    if verdicts.is_empty() {
        return Err(CliError::validation("verdict file has no records"));
    }
    let truth: Vec<Label> = verdicts
        .iter()
        .map(|v| {
            v.ground_truth
                .ok_or_else(|| CliError::validation(format!("record {} has no ground truth", v.record_index)))
        })
        .collect::<Result<_, _>>()?;
    let eps: Vec<f64> = verdicts.iter().map(|v| v.epsilon).collect();
    let s1: Vec<Label> = verdicts.iter().map(|v| v.stage1).collect();
    let s2: Vec<Label> = verdicts.iter().map(|v| v.stage2).collect();
    let roc = roc_auc(&eps, &truth).or_validation("ROC")?;
    Ok(Evaluation {
        metrics: MetricsReport {
            records: verdicts.len(),
            attacks: truth.iter().filter(|&&l| l == Label::Attack).count(),
            auc: roc.auc,
            stage1: stage_report(&s1, &truth)?,
            stage2: stage_report(&s2, &truth)?,
        },
        roc,
    })
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).or_runtime("writing CSV")?;
    for r in rows {
        w.write_record(&r).or_runtime("writing CSV")?;
    }
    w.into_inner().map_err(|e| CliError::runtime(format!("writing CSV: {e}")))
}

/// `fpr,tpr,threshold`; the origin's threshold is `inf`.
pub fn roc_csv(roc: &RocCurve) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["fpr", "tpr", "threshold"],
        roc.points
            .iter()
            .map(|p| vec![p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()]),
    )
}

/// `index,epsilon,truth,stage1,stage2`.
pub fn scores_csv(verdicts: &[DetectionVerdict]) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["index", "epsilon", "truth", "stage1", "stage2"],
        verdicts.iter().map(|v| {
            vec![
                v.record_index.to_string(),
                v.epsilon.to_string(),
                v.ground_truth.map(|l| l.to_string()).unwrap_or_default(),
                v.stage1.to_string(),
                v.stage2.to_string(),
            ]
        }),
    )
}

/// `actual,predicted_attack,predicted_normal` with one row per actual class.
pub fn confusion_csv(cm: &ConfusionMatrix) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["actual", "predicted_attack", "predicted_normal"],
        [
            vec!["attack".into(), cm.tp.to_string(), cm.fn_.to_string()],
            vec!["normal".into(), cm.fp.to_string(), cm.tn.to_string()],
        ]
        .into_iter(),
    )
}
