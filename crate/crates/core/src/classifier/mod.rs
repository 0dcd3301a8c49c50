//! Early-warning classifier: a random forest predicting archetype
//! membership from the observation-window matrix.

mod forest;
mod importance;
mod metrics;
mod split;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forest::{
    ClassBalance, Forest, ForestConfig, MaxFeatures, Node, TrainingSet, Tree, MODEL_SCHEMA_VERSION,
};
pub use importance::{feature_importance, FeatureImportance, ImportanceReport};
pub use metrics::{classification_metrics, ClassMetrics, Metrics};
pub use split::{
    cohort_split, split, stratified_folds, stratified_split, SplitConfig, SplitMode, TrainTest,
};

use crate::archetype::NOISE;
use crate::domain::StudentId;
use crate::error::{CapireError, Result};
use crate::matrix::{Column, FeatureMatrix};
use crate::rng::{derive_seed, rng_for, stream_id};

/// Labelled rows of a feature matrix; residual (noise) students are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierData {
    pub student_ids: Vec<StudentId>,
    pub columns: Vec<Column>,
    pub x: Vec<f64>,
    /// Index into `classes`.
    pub y: Vec<usize>,
    /// Archetype id per class index, ascending.
    pub classes: Vec<i32>,
    pub cohort_years: Vec<i32>,
}

impl ClassifierData {
    pub fn new(matrix: &FeatureMatrix, labels: &[i32], cohort_years: &[i32]) -> Result<Self> {
        if labels.len() != matrix.n_rows() || cohort_years.len() != matrix.n_rows() {
            return Err(CapireError::invalid(
                "labels and cohort years must align with matrix rows",
            ));
        }
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != NOISE).collect();
        let mut classes: Vec<i32> = rows.iter().map(|&i| labels[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        let sub = matrix.select_rows(&rows);
        Ok(ClassifierData {
            student_ids: sub.student_ids.clone(),
            columns: sub.columns.clone(),
            y: rows
                .iter()
                .map(|&i| classes.binary_search(&labels[i]).expect("present"))
                .collect(),
            x: sub.data,
            classes,
            cohort_years: rows.iter().map(|&i| cohort_years[i]).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn subset(&self, rows: &[usize], y: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let d = self.n_features();
        let mut x = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            x.extend_from_slice(&self.x[r * d..(r + 1) * d]);
        }
        (x, rows.iter().map(|&r| y[r]).collect())
    }

    pub(crate) fn fit(
        &self,
        rows: &[usize],
        y: &[usize],
        cfg: &ForestConfig,
        seed: u64,
    ) -> Result<Forest> {
        let (x, yy) = self.subset(rows, y);
        Forest::fit(
            &TrainingSet {
                x: &x,
                n_features: self.n_features(),
                y: &yy,
                n_classes: self.classes.len(),
            },
            cfg,
            seed,
        )
    }

    pub(crate) fn score(&self, forest: &Forest, rows: &[usize], y: &[usize]) -> Result<Metrics> {
        let (x, truth) = self.subset(rows, y);
        let pred = forest.predict(&x)?;
        classification_metrics(&truth, &pred, &self.classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_leaf: Vec<usize>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            n_trees: vec![200],
            max_depth: vec![None, Some(10)],
            min_leaf: vec![1, 3],
        }
    }
}

impl TuningGrid {
    pub fn configs(&self, base: &ForestConfig) -> Vec<ForestConfig> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &min_leaf in &self.min_leaf {
                    out.push(ForestConfig {
                        n_trees,
                        max_depth,
                        min_leaf,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub config: ForestConfig,
    pub k: usize,
    pub fold_accuracy: Vec<f64>,
    pub fold_macro_f1: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt(),
    )
}

/// Stratified k-fold cross-validation over `rows` with labels `y`.
pub fn cross_validate(
    data: &ClassifierData,
    rows: &[usize],
    y: &[usize],
    cfg: &ForestConfig,
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    if k < 2 {
        return Err(CapireError::config("cross-validation needs k >= 2"));
    }
    let folds = stratified_folds(y, rows, k, seed);
    let scores: Vec<Metrics> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, r)| r.iter().copied())
                .collect();
            let forest = data.fit(&train, y, cfg, derive_seed(seed, f as u64))?;
            data.score(&forest, &folds[f], y)
        })
        .collect::<Result<_>>()?;
    let fold_accuracy: Vec<f64> = scores.iter().map(|m| m.accuracy).collect();
    let fold_macro_f1: Vec<f64> = scores.iter().map(|m| m.macro_f1).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&fold_accuracy);
    Ok(CvResult {
        config: cfg.clone(),
        k,
        mean_accuracy,
        std_accuracy,
        mean_macro_f1: mean_std(&fold_macro_f1).0,
        fold_accuracy,
        fold_macro_f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Accuracy of always predicting the most frequent training class.
    pub majority: f64,
    /// Expected accuracy of uniform random guessing, 1/K.
    pub uniform_random: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split_mode: SplitMode,
    pub split_year: Option<i32>,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: Vec<i32>,
    pub test: Metrics,
    pub cv: CvResult,
    pub tuning: Vec<CvResult>,
    pub baselines: Baselines,
}

/// Model artifact: column schema, archetype ids and the forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeModel {
    pub columns: Vec<String>,
    pub classes: Vec<i32>,
    pub forest: Forest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub student_id: StudentId,
    pub archetype: i32,
    /// Vote share per archetype, in `classes` order.
    pub distribution: Vec<f64>,
}

impl ArchetypeModel {
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<Prediction>> {
        let names = matrix.column_names();
        if names != self.columns {
            return Err(CapireError::SchemaMismatch(
                "matrix columns differ from the model's training schema".into(),
            ));
        }
        (0..matrix.n_rows())
            .map(|i| {
                let (c, distribution) = self.forest.predict_row(matrix.row(i))?;
                Ok(Prediction {
                    student_id: matrix.student_ids[i].clone(),
                    archetype: self.classes[c],
                    distribution,
                })
            })
            .collect()
    }
}

fn majority_baseline(train_y: &[usize], test_y: &[usize], k: usize) -> f64 {
    let mut counts = vec![0usize; k];
    train_y.iter().for_each(|&c| counts[c] += 1);
    let mut major = 0;
    for c in 0..k {
        if counts[c] > counts[major] {
            major = c;
        }
    }
    test_y.iter().filter(|&&c| c == major).count() as f64 / test_y.len() as f64
}

pub struct Trained {
    pub model: ArchetypeModel,
    pub split: TrainTest,
    pub report: EvalReport,
}

/// Splits, tunes the forest by cross-validated macro F1 on the training
/// part, refits the winner on all training rows and scores the test rows.
pub fn train_and_evaluate(
    data: &ClassifierData,
    split_cfg: &SplitConfig,
    base: &ForestConfig,
    grid: &TuningGrid,
    seed: u64,
) -> Result<Trained> {
    split_cfg.validate()?;
    if data.classes.len() < 2 {
        return Err(CapireError::Degenerate(format!(
            "{} archetype class(es); need at least 2",
            data.classes.len()
        )));
    }
    let tt = split(&data.y, &data.cohort_years, split_cfg, seed)?;
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(CapireError::config("tuning grid is empty"));
    }
    let cv_seed = derive_seed(seed, stream_id("cv"));
    let tuning: Vec<CvResult> = configs
        .iter()
        .map(|c| cross_validate(data, &tt.train, &data.y, c, split_cfg.k_folds, cv_seed))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in tuning.iter().enumerate() {
        if r.mean_macro_f1 > tuning[best].mean_macro_f1 {
            best = i;
        }
    }
    let chosen = tuning[best].clone();
    let forest = data.fit(
        &tt.train,
        &data.y,
        &chosen.config,
        derive_seed(seed, stream_id("forest")),
    )?;
    let test = data.score(&forest, &tt.test, &data.y)?;
    let train_y: Vec<usize> = tt.train.iter().map(|&r| data.y[r]).collect();
    let test_y: Vec<usize> = tt.test.iter().map(|&r| data.y[r]).collect();
    let k = data.classes.len();
    let report = EvalReport {
        split_mode: split_cfg.mode,
        split_year: tt.split_year,
        n_train: tt.train.len(),
        n_test: tt.test.len(),
        classes: data.classes.clone(),
        test,
        cv: chosen,
        tuning,
        baselines: Baselines {
            majority: majority_baseline(&train_y, &test_y, k),
            uniform_random: 1.0 / k as f64,
        },
    };
    let model = ArchetypeModel {
        columns: data.columns.iter().map(|c| c.name.clone()).collect(),
        classes: data.classes.clone(),
        forest,
    };
    Ok(Trained {
        model,
        split: tt,
        report,
    })
}

/// Cross-validated accuracy after shuffling the labels of all rows: a
/// control that should sit at chance level.
pub fn shuffled_label_control(
    data: &ClassifierData,
    cfg: &ForestConfig,
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    let mut y = data.y.clone();
    y.shuffle(&mut rng_for(seed, "label-shuffle", 0));
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    cross_validate(data, &rows, &y, cfg, k, seed)
}
