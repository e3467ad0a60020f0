//! Synthetic traffic: correlated Gaussian records from a low-rank factor
//! model, with anomalies drawn from the same model and mean-shifted.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ingest::{ColumnKind, ColumnSpec, DatasetSchema, FeatureRecord, Label};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub features: usize,
    pub factors: usize,
    /// Std of the independent noise added to every feature.
    pub noise: f64,
    /// Added to every feature of an anomalous record.
    pub shift: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            features: 16,
            factors: 4,
            noise: 0.3,
            shift: 2.0,
        }
    }
}

/// A fixed factor model; `seed` fixes the loadings.
#[derive(Debug, Clone)]
pub struct Generator {
    config: SyntheticConfig,
    loadings: Vec<Vec<f64>>,
}

impl Generator {
    pub fn new(config: SyntheticConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (config.factors.max(1) as f64).sqrt();
        let loadings = (0..config.features)
            .map(|_| {
                (0..config.factors)
                    .map(|_| { let v: f64 = StandardNormal.sample(&mut rng); scale * v })
                    .collect()
            })
            .collect();
        Self { config, loadings }
    }

    pub fn sample(&self, label: Label, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z: Vec<f64> = (0..self.config.factors).map(|_| StandardNormal.sample(rng)).collect();
        let shift = if label == Label::Attack { self.config.shift } else { 0.0 };
        self.loadings
            .iter()
            .map(|row| {
                let e: f64 = StandardNormal.sample(rng);
                row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>() + self.config.noise * e + shift
            })
            .collect()
    }

    /// `normal` normal and `attack` attack records in shuffled order.
    pub fn dataset(&self, normal: usize, attack: usize, seed: u64) -> Vec<(Vec<f64>, Label)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<Label> = std::iter::repeat(Label::Normal)
            .take(normal)
            .chain(std::iter::repeat(Label::Attack).take(attack))
            .collect();
        labels.shuffle(&mut rng);
        labels.into_iter().map(|l| (self.sample(l, &mut rng), l)).collect()
    }
}

/// Columns `f0..f{d-1}` (numeric) followed by `label` (`normal` / `attack`).
pub fn schema(features: usize) -> DatasetSchema {
    let mut columns: Vec<ColumnSpec> = (0..features)
        .map(|k| ColumnSpec {
            name: format!("f{k}"),
            kind: ColumnKind::Numeric,
        })
        .collect();
    columns.push(ColumnSpec {
        name: "label".into(),
        kind: ColumnKind::Label,
    });
    DatasetSchema {
        header: true,
        columns,
        label_mapping: BTreeMap::from([("normal".to_string(), Label::Normal), ("attack".to_string(), Label::Attack)]),
        unmapped_label: None,
    }
}

/// Raw CSV text (with header) matching [`schema`].
pub fn to_csv(rows: &[(Vec<f64>, Label)]) -> String {
    let d = rows.first().map_or(0, |r| r.0.len());
    let mut out: Vec<String> = Vec::with_capacity(rows.len() + 1);
    let mut header: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    out.push(header.join(","));
    for (x, l) in rows {
        let mut cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        cells.push(l.as_str().into());
        out.push(cells.join(","));
    }
    out.push(String::new());
    out.join("\n")
}

/// Unencoded records as ingest would produce them from [`to_csv`].
pub fn to_records(rows: &[(Vec<f64>, Label)]) -> Vec<FeatureRecord> {
    rows.iter()
        .map(|(x, l)| {
            let mut raw: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            raw.push(l.as_str().into());
            FeatureRecord {
                raw,
                encoded: Vec::new(),
                label: Some(*l),
            }
        })
        .collect()
}
