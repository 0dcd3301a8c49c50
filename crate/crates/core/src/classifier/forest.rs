use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CapireError, Result};
use crate::rng::rng_for;

/// Serialization schema version of [`Forest`].
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(c) => c.clamp(1, d.max(1)),
        }
    }
}

/// How unequal class sizes are handled when growing trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassBalance {
    None,
    /// Weight each row by `n / (K * n_c)` in impurity and leaf totals.
    Weights,
    /// Each tree draws the smallest class size from every class.
    Undersample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub class_balance: ClassBalance,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: None,
            min_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            class_balance: ClassBalance::Undersample,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(CapireError::config("n_trees must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(CapireError::config("min_leaf must be at least 1"));
        }
        if self.max_depth == Some(0) {
            return Err(CapireError::config("max_depth must be at least 1 when set"));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(CapireError::config("max_features count must be at least 1"));
        }
        Ok(())
    }
}

/// Training data: row-major features (`NaN` = missing) and class indices
/// `0..n_classes`.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub x: &'a [f64],
    pub n_features: usize,
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl<'a> TrainingSet<'a> {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Missing values and values `<= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class weight totals of the training rows that reached the leaf.
    Leaf { counts: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = row[*feature];
                    i = if v.is_nan() || v <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Majority class of the reached leaf (ties to the lower class).
    pub fn vote(&self, row: &[f64]) -> usize {
        argmax(self.leaf(row))
    }
}

fn argmax(counts: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

/// Sum of squared class weights over total weight: `n - n * gini`.
fn purity(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    counts.iter().map(|c| c * c).sum::<f64>() / n
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

fn best_split_on(
    data: &TrainingSet<'_>,
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    weights: &[f64],
    total: &[f64],
) -> Option<(f64, f64)> {
    let mut vals: Vec<(f64, usize)> = rows
        .iter()
        .map(|&r| (data.value(r, feature), data.y[r]))
        .collect();
    vals.sort_by(|a, b| match (a.0.is_nan(), b.0.is_nan()) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Less,
        (false, true) => std::cmp::Ordering::Greater,
        _ => a.0.total_cmp(&b.0),
    });
    let n = vals.len();
    let same = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || a == b;
    if same(vals[0].0, vals[n - 1].0) {
        return None;
    }
    let mut left = vec![0.0f64; total.len()];
    let mut right = total.to_vec();
    let mut sq_l = 0.0f64;
    let mut sq_r: f64 = total.iter().map(|c| c * c).sum();
    let mut w_l = 0.0f64;
    let mut w_r: f64 = total.iter().sum();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let c = vals[i].1;
        let w = weights[c];
        sq_l += w * (2.0 * left[c] + w);
        sq_r -= w * (2.0 * right[c] - w);
        left[c] += w;
        right[c] -= w;
        w_l += w;
        w_r -= w;
        if i + 1 < min_leaf || n - i - 1 < min_leaf || same(vals[i].0, vals[i + 1].0) {
            continue;
        }
        if w_l <= 0.0 || w_r <= 0.0 {
            continue;
        }
        let score = sq_l / w_l + sq_r / w_r;
        if best.is_none_or(|b| score > b.0) {
            let (a, b) = (vals[i].0, vals[i + 1].0);
            let threshold = if a.is_nan() {
                b - 1.0 - b.abs()
            } else {
                let mid = a + (b - a) / 2.0;
                if mid < b {
                    mid
                } else {
                    a
                }
            };
            best = Some((score, threshold));
        }
    }
    best
}

fn grow_tree(
    data: &TrainingSet<'_>,
    cfg: &ForestConfig,
    weights: &[f64],
    mtry: usize,
    seed: u64,
    index: usize,
) -> (Tree, Vec<f64>) {
    let mut rng = rng_for(seed, "tree", index as u64);
    let n = data.n_rows();
    let sample: Vec<usize> = match (cfg.class_balance, cfg.bootstrap) {
        (ClassBalance::Undersample, _) => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes];
            (0..n).for_each(|r| by_class[data.y[r]].push(r));
            by_class.retain(|c| !c.is_empty());
            let m = by_class.iter().map(Vec::len).min().unwrap_or(0);
            let mut out = Vec::with_capacity(m * by_class.len());
            for rows in &mut by_class {
                if cfg.bootstrap {
                    out.extend((0..m).map(|_| rows[rng.random_range(0..rows.len())]));
                } else {
                    rows.shuffle(&mut rng);
                    out.extend_from_slice(&rows[..m]);
                }
            }
            out
        }
        (_, true) => (0..n).map(|_| rng.random_range(0..n)).collect(),
        (_, false) => (0..n).collect(),
    };
    let mut importance = vec![0.0; data.n_features];
    let mut nodes: Vec<Node> = Vec::new();
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, sample, 0)];
    nodes.push(Node::Leaf { counts: Vec::new() });
    let mut features: Vec<usize> = (0..data.n_features).collect();
    while let Some((id, rows, depth)) = stack.pop() {
        let mut counts = vec![0.0f64; data.n_classes];
        for &r in &rows {
            counts[data.y[r]] += weights[data.y[r]];
        }
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = cfg.max_depth.is_some_and(|m| depth >= m);
        let mut best: Option<BestSplit> = None;
        if !pure && !depth_done && rows.len() >= 2 * cfg.min_leaf {
            features.shuffle(&mut rng);
            let mut informative = 0;
            for &f in &features {
                if informative >= mtry {
                    break;
                }
                if let Some((score, threshold)) =
                    best_split_on(data, &rows, f, cfg.min_leaf, weights, &counts)
                {
                    informative += 1;
                    if best.as_ref().is_none_or(|b| score > b.score) {
                        best = Some(BestSplit {
                            score,
                            feature: f,
                            threshold,
                        });
                    }
                } else if rows.iter().any(|&r| {
                    let v = data.value(r, f);
                    let v0 = data.value(rows[0], f);
                    !((v.is_nan() && v0.is_nan()) || v == v0)
                }) {
                    // Non-constant but no admissible split under min_leaf.
                    informative += 1;
                }
            }
        }
        let parent = purity(&counts);
        match best {
            Some(b) if b.score > parent + 1e-12 => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&row| {
                    let v = data.value(row, b.feature);
                    v.is_nan() || v <= b.threshold
                });
                importance[b.feature] += b.score - parent;
                let left = nodes.len();
                nodes.push(Node::Leaf { counts: Vec::new() });
                let right = nodes.len();
                nodes.push(Node::Leaf { counts: Vec::new() });
                nodes[id] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
            _ => nodes[id] = Node::Leaf { counts },
        }
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    (Tree { nodes }, importance)
}

/// Random forest of Gini CART trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub schema_version: u32,
    pub n_features: usize,
    pub n_classes: usize,
    pub config: ForestConfig,
    pub seed: u64,
    pub trees: Vec<Tree>,
    /// Mean decrease in impurity, normalised to sum to 1.
    pub importances: Vec<f64>,
}

impl Forest {
    pub fn fit(data: &TrainingSet<'_>, cfg: &ForestConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = data.n_rows();
        if n == 0 || data.x.len() != n * data.n_features {
            return Err(CapireError::invalid(
                "training matrix shape does not match labels",
            ));
        }
        if data.y.iter().any(|&c| c >= data.n_classes) {
            return Err(CapireError::invalid("class index out of range"));
        }
        let mut present = vec![false; data.n_classes];
        data.y.iter().for_each(|&c| present[c] = true);
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(CapireError::Degenerate(
                "training set holds a single class".into(),
            ));
        }
        let mut class_n = vec![0usize; data.n_classes];
        data.y.iter().for_each(|&c| class_n[c] += 1);
        let k = present.iter().filter(|&&p| p).count() as f64;
        let weights: Vec<f64> = class_n
            .iter()
            .map(|&nc| match cfg.class_balance {
                ClassBalance::Weights if nc > 0 => n as f64 / (k * nc as f64),
                ClassBalance::Weights => 0.0,
                _ => 1.0,
            })
            .collect();
        let mtry = cfg.max_features.resolve(data.n_features);
        let grown: Vec<(Tree, Vec<f64>)> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| grow_tree(data, cfg, &weights, mtry, seed, t))
            .collect();
        let mut importances = vec![0.0; data.n_features];
        for (_, imp) in &grown {
            for (a, b) in importances.iter_mut().zip(imp) {
                *a += b;
            }
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Forest {
            schema_version: MODEL_SCHEMA_VERSION,
            n_features: data.n_features,
            n_classes: data.n_classes,
            config: cfg.clone(),
            seed,
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            importances,
        })
    }

    /// Tree-vote fractions per class.
    pub fn vote_distribution(&self, row: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.vote(row)] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }

    /// Class with most votes (ties to the lower class) and the vote distribution.
    pub fn predict_row(&self, row: &[f64]) -> Result<(usize, Vec<f64>)> {
        if row.len() != self.n_features {
            return Err(CapireError::SchemaMismatch(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        let dist = self.vote_distribution(row);
        let mut best = 0;
        for (c, &v) in dist.iter().enumerate() {
            if v > dist[best] {
                best = c;
            }
        }
        Ok((best, dist))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<usize>> {
        if self.n_features == 0 || !x.len().is_multiple_of(self.n_features) {
            return Err(CapireError::SchemaMismatch(
                "matrix width does not match model".into(),
            ));
        }
        x.par_chunks(self.n_features)
            .map(|r| self.predict_row(r).map(|(c, _)| c))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            x.extend([c as f64 * 3.0 + (i % 7) as f64 * 0.1, (i % 5) as f64]);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (x, y) = toy();
        let data = TrainingSet {
            x: &x,
            n_features: 2,
            y: &y,
            n_classes: 2,
        };
        let f = Forest::fit(
            &data,
            &ForestConfig {
                n_trees: 25,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert_eq!(f.predict(&x).unwrap(), y);
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(f.importances[0] > f.importances[1]);
        let (_, d) = f.predict_row(&x[..2]).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (x, y) = toy();
        let data = TrainingSet {
            x: &x,
            n_features: 2,
            y: &y,
            n_classes: 2,
        };
        let cfg = ForestConfig {
            n_trees: 10,
            ..Default::default()
        };
        let a = serde_json::to_string(&Forest::fit(&data, &cfg, 5).unwrap()).unwrap();
        let b = serde_json::to_string(&Forest::fit(&data, &cfg, 5).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_values_go_left_and_single_class_fails() {
        let x = vec![f64::NAN, f64::NAN, 1.0, 2.0, f64::NAN, 3.0];
        let y = vec![0, 0, 1, 1, 0, 1];
        let data = TrainingSet {
            x: &x,
            n_features: 1,
            y: &y,
            n_classes: 2,
        };
        let f = Forest::fit(
            &data,
            &ForestConfig {
                n_trees: 5,
                bootstrap: false,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert_eq!(f.predict(&x).unwrap(), y);
        assert_eq!(f.predict_row(&[f64::NAN]).unwrap().0, 0);
        let y1 = vec![0; 6];
        let data = TrainingSet {
            x: &x,
            n_features: 1,
            y: &y1,
            n_classes: 2,
        };
        assert!(matches!(
            Forest::fit(&data, &ForestConfig::default(), 0),
            Err(CapireError::Degenerate(_))
        ));
    }

    #[test]
    fn class_balance_modes() {
        // One feature cannot separate: 30 of class 0 and 10 of class 1 share x = 0.
        let mut x = vec![0.0; 40];
        let mut y = vec![0; 30];
        y.extend([1; 10]);
        x.extend([1.0; 5]);
        y.extend([1; 5]);
        let data = TrainingSet {
            x: &x,
            n_features: 1,
            y: &y,
            n_classes: 2,
        };
        let base = ForestConfig {
            n_trees: 3,
            bootstrap: false,
            ..Default::default()
        };
        let plain = Forest::fit(
            &data,
            &ForestConfig {
                class_balance: ClassBalance::None,
                ..base.clone()
            },
            0,
        )
        .unwrap();
        assert_eq!(plain.trees[0].leaf(&[0.0]), &[30.0, 10.0]);
        let balanced = Forest::fit(
            &data,
            &ForestConfig {
                class_balance: ClassBalance::Weights,
                ..base.clone()
            },
            0,
        )
        .unwrap();
        // Weighted: class 0 weight 45/60 = 0.75 each, class 1 weight 45/30 = 1.5 each.
        let leaf = balanced.trees[0].leaf(&[0.0]);
        assert!((leaf[0] - 22.5).abs() < 1e-9 && (leaf[1] - 15.0).abs() < 1e-9);
        assert_eq!(balanced.predict_row(&[1.0]).unwrap().0, 1);
        let under = Forest::fit(&data, &base, 0).unwrap();
        for t in &under.trees {
            let total: f64 = t
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { counts } => Some(counts.iter().sum::<f64>()),
                    _ => None,
                })
                .sum();
            assert_eq!(total, 30.0);
        }
    }
}
