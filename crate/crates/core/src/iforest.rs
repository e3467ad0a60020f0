//! Isolation forest.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const EULER_GAMMA: f64 = 0.577_215_664_9;
const EXACT_HARMONIC_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("need at least 2 rows to fit a forest, got {0}")]
    TooFewRows(usize),
    #[error("c(n) is defined for n >= 2, got {0}")]
    Normalizer(usize),
    #[error("row {row} has {found} features, expected {expected}")]
    Dimension { row: usize, expected: usize, found: usize },
    #[error("invalid forest config: {0}")]
    Config(String),
    #[error("forest has no trees")]
    Unfitted,
}

/// Average path length of an unsuccessful binary-search-tree lookup over `n`
/// keys.
pub fn c_normalizer(n: usize) -> Result<f64, ForestError> {
    if n < 2 {
        return Err(ForestError::Normalizer(n));
    }
    Ok(2.0 * harmonic(n - 1) - 2.0 * (n as f64 - 1.0) / n as f64)
}

fn harmonic(i: usize) -> f64 {
    if i <= EXACT_HARMONIC_LIMIT {
        (1..=i).map(|k| 1.0 / k as f64).sum()
    } else {
        (i as f64).ln() + EULER_GAMMA
    }
}

/// Path adjustment for a leaf holding `m` samples: 0 for a singleton.
fn leaf_adjustment(m: usize) -> f64 {
    c_normalizer(m).unwrap_or(0.0)
}

/// `2^(-mean_path / c(n))`.
pub fn score_from_mean_path(mean_path: f64, n: usize) -> Result<f64, ForestError> {
    Ok((-mean_path / c_normalizer(n)?).exp2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub subsample_size: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            subsample_size: 256,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.tree_count == 0 {
            return Err(ForestError::Config("tree_count must be >= 1".into()));
        }
        if self.subsample_size < 2 {
            return Err(ForestError::Config("subsample_size must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub root: Node,
    pub height_limit: usize,
}

impl IsolationTree {
    fn build(data: &[Vec<f64>], rows: Vec<usize>, height_limit: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            root: grow(data, rows, 0, height_limit, rng),
            height_limit,
        }
    }

    /// Edges to the leaf reached by `x`, plus the leaf-size adjustment.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        let mut edges = 0usize;
        loop {
            match node {
                Node::Leaf { size } => return edges as f64 + leaf_adjustment(*size),
                Node::Split { feature, value, left, right } => {
                    node = if x[*feature] < *value { left } else { right };
                    edges += 1;
                }
            }
        }
    }
}

fn grow(data: &[Vec<f64>], rows: Vec<usize>, depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> Node {
    if rows.len() <= 1 || depth >= limit {
        return Node::Leaf { size: rows.len() };
    }
    let dim = data[rows[0]].len();
    let ranges: Vec<(usize, f64, f64)> = (0..dim)
        .filter_map(|f| {
            let (lo, hi) = rows
                .iter()
                .map(|&r| data[r][f])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            (lo < hi).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return Node::Leaf { size: rows.len() };
    }
    let (feature, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
    let value = loop {
        let v = rng.gen_range(lo..hi);
        if v > lo {
            break v;
        }
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| data[i][feature] < value);
    Node::Split {
        feature,
        value,
        left: Box::new(grow(data, l, depth + 1, limit, rng)),
        right: Box::new(grow(data, r, depth + 1, limit, rng)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    /// Effective subsample size: the configured size capped at the row count.
    pub subsample_size: usize,
    pub tree_count: usize,
    pub seed: u64,
    pub dim: usize,
}

/// Per-tree stream: tree `t` draws from `ChaCha8(seed)` on stream `t`.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn check_rows(rows: &[Vec<f64>], dim: usize) -> Result<(), ForestError> {
    match rows.iter().position(|r| r.len() != dim) {
        Some(row) => Err(ForestError::Dimension {
            row,
            expected: dim,
            found: rows[row].len(),
        }),
        None => Ok(()),
    }
}

impl IsolationForest {
    pub fn fit(data: &[Vec<f64>], config: &ForestConfig, seed: u64) -> Result<Self, ForestError> {
        config.validate()?;
        if data.len() < 2 {
            return Err(ForestError::TooFewRows(data.len()));
        }
        let dim = data[0].len();
        check_rows(data, dim)?;
        let n = config.subsample_size.min(data.len());
        let height_limit = (n as f64).log2().ceil() as usize;
        let trees = (0..config.tree_count)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t);
                let rows = sample(&mut rng, data.len(), n).into_vec();
                IsolationTree::build(data, rows, height_limit, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            subsample_size: n,
            tree_count: config.tree_count,
            seed,
            dim,
        })
    }

    pub fn mean_path_length(&self, x: &[f64]) -> Result<f64, ForestError> {
        if self.trees.is_empty() {
            return Err(ForestError::Unfitted);
        }
        if x.len() != self.dim {
            return Err(ForestError::Dimension {
                row: 0,
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, ForestError> {
        score_from_mean_path(self.mean_path_length(x)?, self.subsample_size)
    }

    pub fn score_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ForestError> {
        check_rows(rows, self.dim)?;
        rows.par_iter().map(|r| self.score(r)).collect()
    }
}

/// How scores are cut into inliers and outliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRule {
    /// The top `ceil(fraction * count)` scores are outliers.
    Contamination(f64),
    /// Outlier iff score > threshold.
    ScoreThreshold(f64),
}

impl Default for OutlierRule {
    fn default() -> Self {
        OutlierRule::Contamination(0.05)
    }
}

impl OutlierRule {
    pub fn validate(&self) -> Result<(), ForestError> {
        match *self {
            OutlierRule::Contamination(f) if !(f > 0.0 && f < 1.0) => {
                Err(ForestError::Config(format!("contamination must be in (0,1), got {f}")))
            }
            OutlierRule::ScoreThreshold(t) if !t.is_finite() => {
                Err(ForestError::Config(format!("score threshold must be finite, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// Row indices (ascending) split by an [`OutlierRule`], with the score of
/// every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
    pub scores: Vec<f64>,
}

/// `ceil(fraction * count)`, tolerant of representation error in the product.
pub fn contamination_count(fraction: f64, count: usize) -> usize {
    ((fraction * count as f64 - 1e-9).ceil().max(0.0) as usize).min(count)
}

pub fn partition_scores(scores: Vec<f64>, rule: OutlierRule) -> Result<Partition, ForestError> {
    rule.validate()?;
    let mut flagged = vec![false; scores.len()];
    match rule {
        OutlierRule::ScoreThreshold(t) => {
            for (f, &s) in flagged.iter_mut().zip(&scores) {
                *f = s > t;
            }
        }
        OutlierRule::Contamination(frac) => {
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            for &i in order.iter().take(contamination_count(frac, scores.len())) {
                flagged[i] = true;
            }
        }
    }
    let (outliers, inliers): (Vec<usize>, Vec<usize>) = (0..scores.len()).partition(|&i| flagged[i]);
    Ok(Partition {
        inliers,
        outliers,
        scores,
    })
}

pub fn partition_outliers(forest: &IsolationForest, rows: &[Vec<f64>], rule: OutlierRule) -> Result<Partition, ForestError> {
    rule.validate()?;
    if rows.is_empty() {
        return Ok(Partition {
            inliers: vec![],
            outliers: vec![],
            scores: vec![],
        });
    }
    partition_scores(forest.score_all(rows)?, rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, proptest, ProptestConfig};
    use rand_distr::{Distribution, Normal};

    fn blob(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn c_of_two_is_one() {
        assert_eq!(c_normalizer(2).unwrap(), 1.0);
        assert!(matches!(c_normalizer(1), Err(ForestError::Normalizer(1))));
        assert!(c_normalizer(0).is_err());
    }

    #[test]
    fn c_matches_closed_form_and_increases() {
        // 2 H(n-1) - 2(n-1)/n with H summed in exact rationals for small n
        let h3 = 1.0 + 0.5 + 1.0 / 3.0;
        assert!((c_normalizer(4).unwrap() - (2.0 * h3 - 1.5)).abs() < 1e-15);
        let mut ns: Vec<usize> = (2..30_000).step_by(7).chain(9_990..10_010).collect();
        ns.sort_unstable();
        ns.dedup();
        for w in ns.windows(2) {
            assert!(c_normalizer(w[1]).unwrap() > c_normalizer(w[0]).unwrap(), "c({}) vs c({})", w[0], w[1]);
        }
    }

    #[test]
    fn mean_path_equal_to_c_gives_half() {
        for n in [2, 17, 256, 50_000] {
            assert_eq!(score_from_mean_path(c_normalizer(n).unwrap(), n).unwrap(), 0.5);
        }
        assert!(score_from_mean_path(1e-12, 256).unwrap() > 0.999_999);
    }

    #[test]
    fn defaults_on_thousand_rows() {
        let data = blob(1000, 3, 1);
        let f = IsolationForest::fit(&data, &ForestConfig::default(), 9).unwrap();
        assert_eq!(f.trees.len(), 100);
        assert_eq!(f.subsample_size, 256);
        assert!(f.trees.iter().all(|t| t.height_limit == 8 && t.root.depth() <= 8));
        let total = |n: &Node| -> usize {
            fn go(n: &Node) -> usize {
                match n {
                    Node::Leaf { size } => *size,
                    Node::Split { left, right, .. } => go(left) + go(right),
                }
            }
            go(n)
        };
        assert!(f.trees.iter().all(|t| total(&t.root) == 256));
    }

    #[test]
    fn identical_rows_give_single_leaves() {
        let data = vec![vec![1.0, 2.0]; 10];
        let f = IsolationForest::fit(&data, &ForestConfig { tree_count: 5, subsample_size: 256 }, 0).unwrap();
        assert!(f.trees.iter().all(|t| t.root == Node::Leaf { size: 10 }));
        assert_eq!(f.trees[0].path_length(&[1.0, 2.0]), c_normalizer(10).unwrap());
        assert_eq!(f.score(&[1.0, 2.0]).unwrap(), 0.5);
    }

    #[test]
    fn two_singleton_leaves_give_path_one() {
        let data = vec![vec![0.0], vec![1.0]];
        let f = IsolationForest::fit(&data, &ForestConfig { tree_count: 3, subsample_size: 2 }, 4).unwrap();
        for t in &f.trees {
            for x in [-5.0, 0.0, 0.5, 1.0, 7.0] {
                assert_eq!(t.path_length(&[x]), 1.0);
            }
        }
    }

    #[test]
    fn too_few_rows_and_bad_dimensions() {
        assert!(matches!(
            IsolationForest::fit(&[vec![1.0]], &ForestConfig::default(), 0),
            Err(ForestError::TooFewRows(1))
        ));
        assert!(IsolationForest::fit(&[vec![1.0], vec![1.0, 2.0]], &ForestConfig::default(), 0).is_err());
        let f = IsolationForest::fit(&blob(20, 2, 0), &ForestConfig::default(), 0).unwrap();
        assert!(matches!(f.score(&[0.0]), Err(ForestError::Dimension { .. })));
        let empty = IsolationForest { trees: vec![], ..f };
        assert_eq!(empty.score(&[0.0, 0.0]), Err(ForestError::Unfitted));
    }

    #[test]
    fn same_seed_same_forest_regardless_of_threads() {
        let data = blob(300, 4, 2);
        let cfg = ForestConfig { tree_count: 20, subsample_size: 64 };
        let a = IsolationForest::fit(&data, &cfg, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| IsolationForest::fit(&data, &cfg, 11).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, IsolationForest::fit(&data, &cfg, 12).unwrap());
    }

    #[test]
    fn interior_point_has_longer_path_than_outlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        data.extend((0..100).map(|_| vec![rng.gen_range(10.0..11.0)]));
        let f = IsolationForest::fit(&data, &ForestConfig::default(), 5).unwrap();
        let interior = f.mean_path_length(&[0.5]).unwrap();
        let outlier = f.mean_path_length(&[30.0]).unwrap();
        // brute-force expectation over the built trees
        let brute = f.trees.iter().map(|t| t.path_length(&[0.5])).sum::<f64>() / 100.0;
        assert_eq!(interior, brute);
        assert!(interior > outlier);
    }

    #[test]
    fn outlier_outscores_centroid() {
        let data = blob(200, 2, 4);
        let f = IsolationForest::fit(&data, &ForestConfig::default(), 6).unwrap();
        let centroid = [0, 1].map(|j| data.iter().map(|r| r[j]).sum::<f64>() / 200.0);
        assert!(f.score(&[8.0, 8.0]).unwrap() > f.score(&centroid).unwrap());
    }

    #[test]
    fn contamination_ceiling_and_ties() {
        let p = partition_scores(vec![0.5; 100], OutlierRule::Contamination(0.05)).unwrap();
        assert_eq!(p.outliers, vec![0, 1, 2, 3, 4]);
        assert_eq!(p.inliers.len(), 95);
        assert_eq!(contamination_count(0.07, 100), 7);
        assert_eq!(contamination_count(0.05, 101), 6);
        assert_eq!(contamination_count(0.01, 3), 1);
        assert!(partition_scores(vec![0.1], OutlierRule::Contamination(1.0)).is_err());
        assert!(partition_scores(vec![0.1], OutlierRule::Contamination(0.0)).is_err());
    }

    #[test]
    fn threshold_one_flags_nothing_and_empty_input_is_fine() {
        let data = blob(100, 2, 7);
        let f = IsolationForest::fit(&data, &ForestConfig::default(), 1).unwrap();
        let p = partition_outliers(&f, &data, OutlierRule::ScoreThreshold(1.0)).unwrap();
        assert!(p.outliers.is_empty());
        assert_eq!(p.inliers.len(), 100);
        let e = partition_outliers(&f, &[], OutlierRule::Contamination(0.05)).unwrap();
        assert!(e.inliers.is_empty() && e.outliers.is_empty());
    }

    #[test]
    fn recovers_planted_shifted_points() {
        let mut data = blob(95, 3, 8);
        data.extend(blob(5, 3, 9).into_iter().map(|r| r.iter().map(|v| v + 7.0).collect()));
        let f = IsolationForest::fit(&data, &ForestConfig::default(), 2).unwrap();
        let p = partition_outliers(&f, &data, OutlierRule::Contamination(0.05)).unwrap();
        let hit = p.outliers.iter().filter(|&&i| i >= 95).count();
        assert!(hit >= 4, "recovered {hit}/5");
    }

    #[test]
    fn json_round_trip() {
        let f = IsolationForest::fit(&blob(50, 2, 1), &ForestConfig { tree_count: 4, subsample_size: 16 }, 3).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<IsolationForest>(&s).unwrap(), f);
    }

    fn check_splits(node: &Node, data: &[Vec<f64>], rows: &[usize]) -> bool {
        match node {
            Node::Leaf { size } => *size == rows.len(),
            Node::Split { feature, value, left, right } => {
                let vals: Vec<f64> = rows.iter().map(|&r| data[r][*feature]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data[i][*feature] < *value);
                lo < *value && *value < hi && check_splits(left, data, &l) && check_splits(right, data, &r)
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn split_values_lie_strictly_inside_node_range(
            data in prop::collection::vec(prop::collection::vec(-3i32..3, 2), 2..60),
            seed in any::<u64>(),
        ) {
            let data: Vec<Vec<f64>> = data.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
            let n = data.len();
            let f = IsolationForest::fit(&data, &ForestConfig { tree_count: 3, subsample_size: n }, seed).unwrap();
            let all: Vec<usize> = (0..n).collect();
            for t in &f.trees {
                prop_assert!(t.root.depth() <= t.height_limit);
                prop_assert!(check_splits(&t.root, &data, &all));
            }
            for r in &data {
                let s = f.score(r).unwrap();
                prop_assert!(s > 0.0 && s < 1.0);
            }
        }
    }
}
