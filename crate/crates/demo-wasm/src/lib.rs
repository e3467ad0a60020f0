//! Browser demo. Each exported function is a thin wrapper over a plain Rust
//! function so the logic is testable natively; structured results cross the
//! boundary as JSON strings.

use ids_core::detector::{compute_threshold, stage1_classify};
use ids_core::iforest::{ForestConfig, IsolationForest};
use ids_core::ingest::{FeatureMap, Label};
use ids_core::metrics::{confusion, roc_auc, scalar_metrics};
use ids_core::mscnn::{MscnnConfig, MscnnModel, BRANCH_KERNELS};
use ids_core::nn::conv::conv_extent;
use ids_core::nn::{PoolSpec, Trainable};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Isolation-forest scores on a `grid x grid` lattice over the unit square,
/// row-major from the top-left, for points given as `[x0, y0, x1, y1, ...]`.
pub fn heatmap(points: &[f64], trees: usize, subsample: usize, seed: u64, grid: usize) -> Result<Vec<f64>, String> {
    if points.len() % 2 != 0 {
        return Err("points must be x,y pairs".into());
    }
    let rows: Vec<Vec<f64>> = points.chunks(2).map(|p| p.to_vec()).collect();
    let cfg = ForestConfig {
        tree_count: trees,
        subsample_size: subsample,
    };
    let forest = IsolationForest::fit(&rows, &cfg, seed).map_err(|e| e.to_string())?;
    let step = 1.0 / grid.max(1) as f64;
    let mut out = Vec::with_capacity(grid * grid);
    for r in 0..grid {
        for c in 0..grid {
            let x = (c as f64 + 0.5) * step;
            let y = 1.0 - (r as f64 + 0.5) * step;
            out.push(forest.score(&[x, y]).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct ThresholdView {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub auc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    /// `[fpr, tpr]` pairs.
    pub roc: Vec<[f64; 2]>,
    pub normal_errors: Vec<f64>,
    pub attack_errors: Vec<f64>,
}

/// Simulated reconstruction errors: training normals and test normals drawn
/// from one log-normal, test attacks from one shifted by `separation`.
/// The threshold is fit on the training normals with multiplier `k`.
pub fn threshold_view(separation: f64, attack_fraction: f64, k: f64, n: usize, seed: u64) -> Result<ThresholdView, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Normal::new(-3.0, 0.5).map_err(|e| e.to_string())?;
    let mut draw = |shift: f64| (base.sample(&mut rng) + shift).exp();
    let train: Vec<f64> = (0..n).map(|_| draw(0.0)).collect();
    let n_attack = ((attack_fraction.clamp(0.0, 1.0) * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let truth: Vec<Label> = (0..n).map(|i| if i < n_attack { Label::Attack } else { Label::Normal }).collect();
    let errors: Vec<f64> = truth
        .iter()
        .map(|l| draw(if *l == Label::Attack { separation } else { 0.0 }))
        .collect();
    let th = compute_threshold(&train, k).map_err(|e| e.to_string())?;
    let pred = stage1_classify(&errors, &th).labels();
    let cm = confusion(&pred, &truth).map_err(|e| e.to_string())?;
    let m = scalar_metrics(&cm).map_err(|e| e.to_string())?;
    let roc = roc_auc(&errors, &truth).map_err(|e| e.to_string())?;
    let split = |want: Label| errors.iter().zip(&truth).filter(|(_, t)| **t == want).map(|(e, _)| *e).collect();
    Ok(ThresholdView {
        theta: th.theta,
        mu: th.mu,
        sigma: th.sigma,
        auc: roc.auc,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        tp: cm.tp,
        fp: cm.fp,
        fn_: cm.fn_,
        tn: cm.tn,
        roc: roc.points.iter().map(|p| [p.fpr, p.tpr]).collect(),
        normal_errors: split(Label::Normal),
        attack_errors: split(Label::Attack),
    })
}

#[derive(Debug, Serialize)]
pub struct ShapeView {
    pub features: usize,
    pub rows: usize,
    pub cols: usize,
    pub pad: usize,
    /// `[kernel, rows, cols, filters]` per branch.
    pub branches: Vec<[usize; 4]>,
    pub merged: [usize; 3],
    pub pooled: [usize; 3],
    pub latent: usize,
    pub parameters: usize,
    /// Cells of the feature map, 1-based feature index or 0 for padding.
    pub layout: Vec<usize>,
}

/// Layer shapes of the convolutional autoencoder for a `d`-feature record.
pub fn shapes(d: usize, filters: usize, latent: usize, pool: usize) -> Result<ShapeView, String> {
    if d < 2 {
        return Err("need at least 2 features".into());
    }
    let mut cfg = MscnnConfig::for_features(d);
    cfg.filters_per_branch = filters;
    cfg.latent_dim = latent;
    cfg.pool = PoolSpec { window: pool, stride: pool };
    let model = MscnnModel::build(cfg, 0).map_err(|e| e.to_string())?;
    let (pr, pc) = cfg.pooled_extent().map_err(|e| e.to_string())?;
    let branches = BRANCH_KERNELS
        .iter()
        .map(|&k| {
            // same padding: total k - 1 per axis, stride 1
            let r = conv_extent(cfg.rows, k, k - 1, 1).unwrap_or(0);
            let c = conv_extent(cfg.cols, k, k - 1, 1).unwrap_or(0);
            [k, r, c, filters]
        })
        .collect();
    let cells = cfg.rows * cfg.cols;
    Ok(ShapeView {
        features: d,
        rows: cfg.rows,
        cols: cfg.cols,
        pad: cells - d,
        branches,
        merged: [cfg.merged_channels(), cfg.rows, cfg.cols],
        pooled: [cfg.merged_channels(), pr, pc],
        latent,
        parameters: model.param_count(),
        layout: (0..cells).map(|i| if i < d { i + 1 } else { 0 }).collect(),
    })
}

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(|e| js_err(e.to_string()))
}

#[wasm_bindgen(js_name = iforestHeatmap)]
pub fn iforest_heatmap(points: &[f64], trees: usize, subsample: usize, seed: u32, grid: usize) -> Result<Vec<f64>, JsValue> {
    heatmap(points, trees, subsample, seed as u64, grid).map_err(js_err)
}

#[wasm_bindgen(js_name = thresholdExplorer)]
pub fn threshold_explorer(separation: f64, attack_fraction: f64, k: f64, n: usize, seed: u32) -> Result<String, JsValue> {
    to_json(&threshold_view(separation, attack_fraction, k, n, seed as u64).map_err(js_err)?)
}

#[wasm_bindgen(js_name = featureMapShapes)]
pub fn feature_map_shapes(d: usize, filters: usize, latent: usize, pool: usize) -> Result<String, JsValue> {
    to_json(&shapes(d, filters, latent, pool).map_err(js_err)?)
}

#[wasm_bindgen(js_name = extents)]
pub fn extents(d: usize) -> Vec<usize> {
    let (r, c) = FeatureMap::extents(d);
    vec![r, c]
}
