use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CapireError, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    StratifiedRandom,
    CohortTemporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub k_folds: usize,
    /// Cohort mode: first test cohort. When unset, the earliest year by
    /// which at least `train_fraction` of rows have entered.
    pub split_year: Option<i32>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            mode: SplitMode::StratifiedRandom,
            train_fraction: 0.7,
            k_folds: 5,
            split_year: None,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CapireError::config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.k_folds < 2 {
            return Err(CapireError::config("k_folds must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainTest {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub split_year: Option<i32>,
}

fn by_class(y: &[usize], rows: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        m.entry(y[r]).or_default().push(r);
    }
    m
}

/// Per class, `round(fraction * n_c)` members (clamped to `1..n_c`) go to
/// train; the rest go to test.
pub fn stratified_split(y: &[usize], fraction: f64, seed: u64) -> Result<TrainTest> {
    let rows: Vec<usize> = (0..y.len()).collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut members) in by_class(y, &rows) {
        if members.len() < 2 {
            return Err(CapireError::invalid(format!(
                "class {class} has fewer than 2 members; cannot stratify"
            )));
        }
        members.shuffle(&mut rng_for(seed, "split", class as u64));
        let k = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(TrainTest {
        train,
        test,
        split_year: None,
    })
}

/// Earlier cohorts train, cohorts from the split year on test.
pub fn cohort_split(cohorts: &[i32], fraction: f64, split_year: Option<i32>) -> Result<TrainTest> {
    let mut years: Vec<i32> = cohorts.to_vec();
    years.sort_unstable();
    years.dedup();
    if years.len() < 2 {
        return Err(CapireError::invalid(
            "a cohort split needs at least two entry cohorts",
        ));
    }
    let year = match split_year {
        Some(y) => y,
        None => {
            let n = cohorts.len() as f64;
            *years
                .iter()
                .skip(1)
                .find(|&&y| cohorts.iter().filter(|&&c| c < y).count() as f64 >= fraction * n)
                .unwrap_or(years.last().expect("non-empty"))
        }
    };
    let train: Vec<usize> = (0..cohorts.len()).filter(|&i| cohorts[i] < year).collect();
    let test: Vec<usize> = (0..cohorts.len()).filter(|&i| cohorts[i] >= year).collect();
    if train.is_empty() || test.is_empty() {
        return Err(CapireError::invalid(format!(
            "split year {year} leaves an empty train or test set"
        )));
    }
    Ok(TrainTest {
        train,
        test,
        split_year: Some(year),
    })
}

pub fn split(y: &[usize], cohorts: &[i32], cfg: &SplitConfig, seed: u64) -> Result<TrainTest> {
    cfg.validate()?;
    if y.len() != cohorts.len() {
        return Err(CapireError::invalid("labels and cohorts must align"));
    }
    match cfg.mode {
        SplitMode::StratifiedRandom => stratified_split(y, cfg.train_fraction, seed),
        SplitMode::CohortTemporal => cohort_split(cohorts, cfg.train_fraction, cfg.split_year),
    }
}

/// Stratified k folds over `rows`: members of each class are shuffled and
/// dealt round-robin, continuing across classes so fold sizes differ by at
/// most one.
pub fn stratified_folds(y: &[usize], rows: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut members) in by_class(y, rows) {
        members.shuffle(&mut rng_for(seed, "folds", class as u64));
        for m in members {
            folds[next % k].push(m);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cohort_mode_trains_on_earlier_years() {
        let cohorts = [2004, 2005, 2006, 2007, 2008, 2008];
        let s = cohort_split(&cohorts, 0.7, Some(2007)).unwrap();
        assert_eq!(s.train, vec![0, 1, 2]);
        assert!(s.test.iter().all(|&i| cohorts[i] >= 2007));
        assert!(cohort_split(&[2010; 5], 0.7, None).is_err());
    }

    #[test]
    fn singleton_class_cannot_be_stratified() {
        assert!(stratified_split(&[0, 0, 0, 1], 0.7, 1).is_err());
    }

    proptest! {
        #[test]
        fn stratification_preserves_proportions(sizes in prop::collection::vec(2usize..60, 2..8), seed in 0u64..50) {
            let y: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            let s = stratified_split(&y, 0.7, seed).unwrap();
            prop_assert_eq!(s.train.len() + s.test.len(), y.len());
            for (c, &n) in sizes.iter().enumerate() {
                let t = s.train.iter().filter(|&&i| y[i] == c).count() as f64;
                prop_assert!((t - 0.7 * n as f64).abs() <= 1.0);
            }
            let folds = stratified_folds(&y, &s.train, 5, seed);
            let lens: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            prop_assert_eq!(lens.iter().sum::<usize>(), s.train.len());
        }
    }
}
