use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CapireError, Result};
use crate::features::Level;
use crate::matrix::Column;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub rank: usize,
    pub feature: String,
    pub level: Level,
    pub indicator: bool,
    pub interaction: bool,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Descending importance, ties by column order.
    pub features: Vec<FeatureImportance>,
    pub level_shares: BTreeMap<Level, f64>,
    pub interaction_share: f64,
}

impl ImportanceReport {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "rank",
            "feature",
            "level",
            "indicator",
            "interaction",
            "importance",
        ])?;
        for f in &self.features {
            w.write_record([
                f.rank.to_string(),
                f.feature.clone(),
                f.level.as_str().to_string(),
                f.indicator.to_string(),
                f.interaction.to_string(),
                format!("{:.16e}", f.importance),
            ])?;
        }
        w.into_inner().map_err(|e| CapireError::Io(e.into_error()))
    }
}

/// Ranks impurity importances and aggregates them per level and over the
/// interaction columns named in `interactions`.
pub fn feature_importance(
    importances: &[f64],
    columns: &[Column],
    interactions: &[String],
) -> Result<ImportanceReport> {
    if importances.len() != columns.len() {
        return Err(CapireError::SchemaMismatch(format!(
            "{} importances for {} columns",
            importances.len(),
            columns.len()
        )));
    }
    let mut order: Vec<usize> = (0..columns.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let mut level_shares: BTreeMap<Level, f64> = Level::ALL.iter().map(|&l| (l, 0.0)).collect();
    let mut interaction_share = 0.0;
    let mut features = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        let c = &columns[i];
        let interaction = !c.indicator && interactions.contains(&c.name);
        *level_shares.entry(c.level).or_default() += importances[i];
        if interaction {
            interaction_share += importances[i];
        }
        features.push(FeatureImportance {
            rank: rank + 1,
            feature: c.name.clone(),
            level: c.level,
            indicator: c.indicator,
            interaction,
            importance: importances[i],
        });
    }
    Ok(ImportanceReport {
        features,
        level_shares,
        interaction_share,
    })
}
