//! Binary classification metrics with attack as the positive class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and truth lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("no records to evaluate")]
    Empty,
    #[error("ROC needs both classes; only {0} present")]
    SingleClass(Label),
    #[error("score {index} is not finite")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(predicted: &[Label], truth: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::Length(predicted.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Label::Attack, Label::Attack) => cm.tp += 1,
            (Label::Attack, Label::Normal) => cm.fp += 1,
            (Label::Normal, Label::Attack) => cm.fn_ += 1,
            (Label::Normal, Label::Normal) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Which ratios hit a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn scalar_metrics(cm: &ConfusionMatrix) -> Result<ScalarMetrics, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let (precision, dp) = ratio(tp, tp + fp);
    let (recall, dr) = ratio(tp, tp + fn_);
    let (f1, df) = f1_of(precision, recall);
    Ok(ScalarMetrics {
        accuracy: (tp + tn) / (tp + tn + fp + fn_),
        precision,
        recall,
        f1,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f1: df,
        },
    })
}

fn f1_of(p: f64, r: f64) -> (f64, bool) {
    ratio(2.0 * p * r, p + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub macro_avg: PrfScores,
    pub micro_avg: PrfScores,
}

/// Macro: unweighted mean of per-class scores. Micro: scores of summed counts.
pub fn averaged_metrics(per_class: &[ConfusionMatrix]) -> Result<AveragedMetrics, MetricsError> {
    if per_class.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = per_class.len() as f64;
    let mut mac = PrfScores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for cm in per_class {
        let tp = cm.tp as f64;
        let p = ratio(tp, tp + cm.fp as f64).0;
        let r = ratio(tp, tp + cm.fn_ as f64).0;
        mac.precision += p / k;
        mac.recall += r / k;
        mac.f1 += f1_of(p, r).0 / k;
    }
    let sum = per_class.iter().fold(ConfusionMatrix::default(), |a, c| a.add(c));
    let tp = sum.tp as f64;
    let p = ratio(tp, tp + sum.fp as f64).0;
    let r = ratio(tp, tp + sum.fn_ as f64).0;
    Ok(AveragedMetrics {
        macro_avg: mac,
        micro_avg: PrfScores {
            precision: p,
            recall: r,
            f1: f1_of(p, r).0,
        },
    })
}

/// One-vs-rest matrices for the binary problem: attack-positive first, then
/// normal-positive.
pub fn one_vs_rest(cm: &ConfusionMatrix) -> [ConfusionMatrix; 2] {
    [
        *cm,
        ConfusionMatrix {
            tp: cm.tn,
            fp: cm.fn_,
            fn_: cm.fp,
            tn: cm.tp,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Records with score >= threshold are predicted attack. Infinite for the
    /// origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC over distinct score values, descending; tied scores move in one step.
pub fn roc_auc(scores: &[f64], truth: &[Label]) -> Result<RocCurve, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::Length(scores.len(), truth.len()));
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite { index });
    }
    let pos = truth.iter().filter(|&&t| t == Label::Attack).count();
    let neg = truth.len() - pos;
    if pos == 0 {
        return Err(MetricsError::SingleClass(Label::Normal));
    }
    if neg == 0 {
        return Err(MetricsError::SingleClass(Label::Attack));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match truth[order[i]] {
                Label::Attack => tp += 1,
                Label::Normal => fp += 1,
            }
            i += 1;
        }
        let prev = *points.last().expect("origin present");
        let p = RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}
