use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Column, FeatureMatrix};
use crate::error::{CapireError, Result};
use crate::features::{formulas, FeatureDictionary, InteractionSpec, Level};

pub const INDICATOR_SUFFIX: &str = "_missing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationStrategy {
    /// Median of training rows in the same region, else the training median.
    RegionMedian,
    TrainingMean,
    /// Missing cells stay missing; absence is informative.
    Never,
    /// Interpolates per-term series; scalar columns pass through.
    Interpolate,
    Passthrough,
}

impl ImputationStrategy {
    fn fills(self) -> bool {
        matches!(self, Self::RegionMedian | Self::TrainingMean)
    }
}

/// Strategy per level, keyed "N1".."N4".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImputationPolicies(pub BTreeMap<String, ImputationStrategy>);

impl Default for ImputationPolicies {
    fn default() -> Self {
        Self(BTreeMap::from([
            ("N1".to_string(), ImputationStrategy::RegionMedian),
            ("N2".to_string(), ImputationStrategy::TrainingMean),
            ("N3".to_string(), ImputationStrategy::Never),
            ("N4".to_string(), ImputationStrategy::Interpolate),
        ]))
    }
}

impl ImputationPolicies {
    pub fn validate(&self) -> Result<()> {
        for key in self.0.keys() {
            if !Level::ALL.iter().any(|l| l.as_str() == key) {
                return Err(CapireError::config(format!(
                    "imputation policy references unknown level '{key}'"
                )));
            }
        }
        Ok(())
    }

    pub fn strategy(&self, level: Level) -> ImputationStrategy {
        self.0
            .get(level.as_str())
            .copied()
            .unwrap_or(ImputationStrategy::Passthrough)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnImputation {
    pub column: String,
    pub strategy: ImputationStrategy,
    /// Fallback fill value: the training mean or median.
    pub global: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_region: BTreeMap<String, f64>,
}

/// Fill values fitted on training rows, reusable on unseen rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub base_columns: Vec<String>,
    pub columns: Vec<ColumnImputation>,
    /// Interaction outputs recomputed from filled operands.
    pub interactions: InteractionSpec,
    pub indicator_columns: Vec<String>,
}

/// Fits fill values on `training` rows and applies them to every row.
///
/// Indicator columns `<name>_missing` are appended, in column order, for
/// every filled column and every interaction column.
pub fn impute(
    raw: &FeatureMatrix,
    regions: &[Option<String>],
    training: &[bool],
    policies: &ImputationPolicies,
    dictionary: &FeatureDictionary,
    interactions: &InteractionSpec,
) -> Result<(FeatureMatrix, ImputationModel)> {
    policies.validate()?;
    if regions.len() != raw.n_rows() || training.len() != raw.n_rows() {
        return Err(CapireError::invalid(
            "row metadata length does not match the matrix",
        ));
    }
    let mut columns = Vec::new();
    for (j, col) in raw.columns.iter().enumerate() {
        let strategy = dictionary
            .entry(&col.name)
            .and_then(|e| e.imputation)
            .unwrap_or_else(|| policies.strategy(col.level));
        if !strategy.fills() || interactions.contains(&col.name) {
            continue;
        }
        let train_vals: Vec<(usize, f64)> = (0..raw.n_rows())
            .filter(|&i| training[i])
            .map(|i| (i, raw.get(i, j)))
            .filter(|(_, v)| !v.is_nan())
            .collect();
        let all: Vec<f64> = train_vals.iter().map(|&(_, v)| v).collect();
        let (global, by_region) = match strategy {
            ImputationStrategy::TrainingMean => {
                (formulas::mean(&all).unwrap_or(0.0), BTreeMap::new())
            }
            _ => {
                let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for &(i, v) in &train_vals {
                    if let Some(r) = &regions[i] {
                        grouped.entry(r.clone()).or_default().push(v);
                    }
                }
                let by_region = grouped
                    .into_iter()
                    .map(|(r, v)| (r, formulas::median(&v).expect("non-empty")))
                    .collect();
                (formulas::median(&all).unwrap_or(0.0), by_region)
            }
        };
        columns.push(ColumnImputation {
            column: col.name.clone(),
            strategy,
            global,
            by_region,
        });
    }
    let mut indicator_columns: Vec<String> = raw
        .columns
        .iter()
        .filter(|c| columns.iter().any(|ci| ci.column == c.name) || interactions.contains(&c.name))
        .map(|c| format!("{}{INDICATOR_SUFFIX}", c.name))
        .collect();
    indicator_columns.dedup();
    let model = ImputationModel {
        base_columns: raw.column_names().into_iter().map(str::to_string).collect(),
        columns,
        interactions: interactions.clone(),
        indicator_columns,
    };
    let out = model.apply(raw, regions)?;
    Ok((out, model))
}

impl ImputationModel {
    pub fn apply(&self, raw: &FeatureMatrix, regions: &[Option<String>]) -> Result<FeatureMatrix> {
        if raw.column_names()
            != self
                .base_columns
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>()
        {
            return Err(CapireError::SchemaMismatch(
                "matrix columns differ from the fitted imputation model".into(),
            ));
        }
        let indicator_sources: Vec<usize> = self
            .indicator_columns
            .iter()
            .map(|n| {
                raw.column_index(n.strip_suffix(INDICATOR_SUFFIX).expect("suffix"))
                    .expect("fitted column")
            })
            .collect();
        let fills: Vec<(usize, &ColumnImputation)> = self
            .columns
            .iter()
            .map(|c| (raw.column_index(&c.column).expect("fitted column"), c))
            .collect();
        let products: Vec<(usize, Option<usize>, Option<usize>)> = self
            .interactions
            .0
            .iter()
            .filter_map(|p| {
                raw.column_index(&p.name)
                    .map(|j| (j, raw.column_index(&p.a), raw.column_index(&p.b)))
            })
            .collect();

        let mut columns = raw.columns.clone();
        columns.extend(
            indicator_sources
                .iter()
                .zip(&self.indicator_columns)
                .map(|(&j, name)| Column {
                    name: name.clone(),
                    level: raw.columns[j].level,
                    indicator: true,
                }),
        );
        let width = columns.len();
        let mut data = Vec::with_capacity(raw.n_rows() * width);
        for i in 0..raw.n_rows() {
            let mut row = raw.row(i).to_vec();
            let indicators: Vec<f64> = indicator_sources
                .iter()
                .map(|&j| if row[j].is_nan() { 1.0 } else { 0.0 })
                .collect();
            for &(j, ci) in &fills {
                if row[j].is_nan() {
                    row[j] = regions[i]
                        .as_ref()
                        .and_then(|r| ci.by_region.get(r))
                        .copied()
                        .unwrap_or(ci.global);
                }
            }
            for &(j, a, b) in &products {
                if row[j].is_nan() {
                    if let (Some(a), Some(b)) = (a, b) {
                        row[j] = row[a] * row[b];
                    }
                }
            }
            row.extend(indicators);
            data.extend(row);
        }
        Ok(FeatureMatrix {
            student_ids: raw.student_ids.clone(),
            columns,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StudentId;

    fn toy() -> (FeatureMatrix, Vec<Option<String>>) {
        let nan = f64::NAN;
        let columns = vec![
            Column {
                name: "deprivation_index".into(),
                level: Level::N1,
                indicator: false,
            },
            Column {
                name: "hs_gpa".into(),
                level: Level::N2,
                indicator: false,
            },
            Column {
                name: "grade_mean".into(),
                level: Level::N3,
                indicator: false,
            },
        ];
        #[rustfmt::skip]
        let data = vec![
            0.2, 7.0, 6.0,
            0.4, 8.0, nan,
            0.9, 6.6, 7.0,
            nan, nan, nan,
            0.31, 7.2, 5.0,
        ];
        let regions = ["A", "A", "B", "A", "A"]
            .iter()
            .map(|r| Some(r.to_string()))
            .collect();
        let ids = (0..5).map(|i| StudentId(format!("S{i}"))).collect();
        (
            FeatureMatrix {
                student_ids: ids,
                columns,
                data,
            },
            regions,
        )
    }

    #[test]
    fn fills_by_level_and_marks_indicators() {
        let (raw, regions) = toy();
        let training = vec![true; 5];
        let (m, model) = impute(
            &raw,
            &regions,
            &training,
            &ImputationPolicies::default(),
            &FeatureDictionary::builtin(),
            &InteractionSpec(vec![]),
        )
        .unwrap();
        assert_eq!(
            m.column_names(),
            vec![
                "deprivation_index",
                "hs_gpa",
                "grade_mean",
                "deprivation_index_missing",
                "hs_gpa_missing"
            ]
        );
        // region A training medians over {0.2, 0.4, 0.31} -> 0.31
        assert!((m.get(3, 0) - 0.31).abs() < 1e-12);
        // training mean of {7.0, 8.0, 6.6, 7.2} -> 7.2
        assert!((m.get(3, 1) - 7.2).abs() < 1e-12);
        assert!(m.get(1, 2).is_nan() && m.get(3, 2).is_nan());
        assert_eq!((m.get(3, 3), m.get(3, 4)), (1.0, 1.0));
        assert_eq!((m.get(0, 3), m.get(0, 4)), (0.0, 0.0));
        let ones: f64 = (0..5).map(|i| m.get(i, 3) + m.get(i, 4)).sum();
        let imputed = (0..5)
            .flat_map(|i| [0, 1].map(|j| raw.get(i, j).is_nan() as usize))
            .sum::<usize>();
        assert_eq!(ones as usize, imputed);
        assert_eq!(model.columns.len(), 2);
    }

    #[test]
    fn statistics_come_from_training_rows_only() {
        let (raw, regions) = toy();
        let training = vec![true, true, false, false, false];
        let (m, _) = impute(
            &raw,
            &regions,
            &training,
            &ImputationPolicies::default(),
            &FeatureDictionary::builtin(),
            &InteractionSpec(vec![]),
        )
        .unwrap();
        assert!((m.get(3, 1) - 7.5).abs() < 1e-12);
        assert!((m.get(3, 0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn unknown_level_is_config_error() {
        let (raw, regions) = toy();
        let mut p = ImputationPolicies::default();
        p.0.insert("N7".into(), ImputationStrategy::Never);
        let err = impute(
            &raw,
            &regions,
            &[true; 5],
            &p,
            &FeatureDictionary::builtin(),
            &InteractionSpec(vec![]),
        )
        .unwrap_err();
        assert!(matches!(err, CapireError::Config(_)));
    }
}
