use serde::{Deserialize, Serialize};

use crate::classifier::{cohort_split, stratified_split, ClassifierData, ForestConfig, TrainTest};
use crate::error::{CapireError, Result};
use crate::rng::{derive_seed, stream_id};

/// Test accuracy of the same forest under a stratified random split and a
/// cohort split. A large positive gap means the random split benefits from
/// something that does not carry over to later cohorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDiscrepancy {
    pub random_accuracy: f64,
    pub cohort_accuracy: f64,
    /// `random_accuracy - cohort_accuracy`.
    pub gap: f64,
    pub split_year: i32,
    pub random_sizes: (usize, usize),
    pub cohort_sizes: (usize, usize),
}

pub fn split_discrepancy(
    data: &ClassifierData,
    cfg: &ForestConfig,
    train_fraction: f64,
    split_year: Option<i32>,
    seed: u64,
) -> Result<SplitDiscrepancy> {
    let mut years = data.cohort_years.clone();
    years.sort_unstable();
    years.dedup();
    if years.len() < 2 {
        return Err(CapireError::Degenerate(
            "single entry cohort: a cohort split is impossible".into(),
        ));
    }
    let random = stratified_split(&data.y, train_fraction, seed)?;
    let cohort = cohort_split(&data.cohort_years, train_fraction, split_year)?;
    let forest_seed = derive_seed(seed, stream_id("discrepancy"));
    let accuracy = |tt: &TrainTest| -> Result<f64> {
        let forest = data.fit(&tt.train, &data.y, cfg, forest_seed)?;
        Ok(data.score(&forest, &tt.test, &data.y)?.accuracy)
    };
    let random_accuracy = accuracy(&random)?;
    let cohort_accuracy = accuracy(&cohort)?;
    Ok(SplitDiscrepancy {
        random_accuracy,
        cohort_accuracy,
        gap: random_accuracy - cohort_accuracy,
        split_year: cohort.split_year.expect("cohort split sets a year"),
        random_sizes: (random.train.len(), random.test.len()),
        cohort_sizes: (cohort.train.len(), cohort.test.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StudentId;
    use crate::features::Level;
    use crate::matrix::Column;
    use rand::Rng as _;

    /// Two features: a signal `s` and the cohort year. Class is `s > 0`,
    /// flipped for cohorts from 2013 (the automatic split year) when `flip` is set.
    fn data(flip: bool, single_cohort: bool) -> ClassifierData {
        let mut rng = crate::rng::rng_for(9, "test", 0);
        let n = 600;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut years = Vec::new();
        for i in 0..n {
            let year = if single_cohort { 2010 } else { 2004 + (i % 12) };
            let s: f64 = rng.random_range(-1.0..1.0);
            let mut c = usize::from(s > 0.0);
            if flip && year >= 2013 {
                c = 1 - c;
            }
            x.extend([s, year as f64]);
            y.push(c);
            years.push(year);
        }
        ClassifierData {
            student_ids: (0..n).map(|i| StudentId(format!("s{i}"))).collect(),
            columns: ["signal", "cohort"]
                .map(|name| Column {
                    name: name.into(),
                    level: Level::N3,
                    indicator: false,
                })
                .to_vec(),
            x,
            y,
            classes: vec![0, 1],
            cohort_years: years,
        }
    }

    fn cfg() -> ForestConfig {
        ForestConfig {
            n_trees: 40,
            ..Default::default()
        }
    }

    #[test]
    fn stationary_rule_has_small_gap() {
        let r = split_discrepancy(&data(false, false), &cfg(), 0.7, None, 1).unwrap();
        assert!(r.random_accuracy > 0.9 && r.gap.abs() < 0.05, "{r:?}");
        assert_eq!(r.split_year, 2013);
    }

    #[test]
    fn cohort_dependent_rule_has_large_gap() {
        let r = split_discrepancy(&data(true, false), &cfg(), 0.7, None, 1).unwrap();
        assert!(r.random_accuracy > 0.85 && r.gap > 0.5, "{r:?}");
    }

    #[test]
    fn single_cohort_is_reported() {
        assert!(matches!(
            split_discrepancy(&data(false, true), &cfg(), 0.7, None, 1),
            Err(CapireError::Degenerate(_))
        ));
    }
}
