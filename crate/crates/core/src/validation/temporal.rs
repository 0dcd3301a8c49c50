use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archetype::{discover, ClusteringParams, EmbeddingParams, Points, NOISE};
use crate::error::{CapireError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeDrift {
    pub archetype_id: i32,
    pub period1_members: usize,
    pub period2_members: usize,
    pub period1_attrition: Option<f64>,
    pub period2_attrition: Option<f64>,
    /// Period 2 rate minus period 1 rate.
    pub delta: Option<f64>,
    /// Set when the delta is undefined.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub split_year: i32,
    pub period1_size: usize,
    pub period2_size: usize,
    pub n_archetypes: usize,
    pub period2_residual: usize,
    pub archetypes: Vec<ArchetypeDrift>,
    pub max_abs_delta: Option<f64>,
}

/// Index of the nearest row of `reference` for each row of `queries`
/// (ties to the lower index).
pub fn nearest_neighbours(reference: &Points, queries: &Points) -> Vec<usize> {
    (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let row = queries.row(q);
            let mut best = (f64::INFINITY, 0usize);
            for r in 0..reference.len() {
                let d = crate::archetype::sq_dist(row, reference.row(r));
                if d < best.0 {
                    best = (d, r);
                }
            }
            best.1
        })
        .collect()
}

fn rate(flags: &[Option<u8>]) -> Option<f64> {
    let known: Vec<u8> = flags.iter().flatten().copied().collect();
    (!known.is_empty()).then(|| known.iter().map(|&f| f as f64).sum::<f64>() / known.len() as f64)
}

/// Fits archetypes on cohorts before `split_year`, assigns later cohorts to
/// the archetype of their nearest earlier student in feature space, and
/// compares attrition rates per archetype across the two periods.
/// Students with unknown outcome are left out of the rates.
pub fn temporal_stability(
    points: &Points,
    cohort_years: &[i32],
    attrition: &[Option<u8>],
    split_year: i32,
    embedding: &EmbeddingParams,
    clustering: &ClusteringParams,
    seed: u64,
) -> Result<TemporalReport> {
    if cohort_years.len() != points.len() || attrition.len() != points.len() {
        return Err(CapireError::invalid(
            "cohort years and attrition flags must align with points",
        ));
    }
    let p1: Vec<usize> = (0..points.len())
        .filter(|&i| cohort_years[i] < split_year)
        .collect();
    let p2: Vec<usize> = (0..points.len())
        .filter(|&i| cohort_years[i] >= split_year)
        .collect();
    if p1.is_empty() || p2.is_empty() {
        return Err(CapireError::invalid(format!(
            "split year {split_year} leaves an empty period ({} before, {} from)",
            p1.len(),
            p2.len()
        )));
    }
    let x1 = points.select(&p1);
    let sol = discover(&x1, embedding, clustering, seed)?;
    let nn = nearest_neighbours(&x1, &points.select(&p2));
    let l2: Vec<i32> = nn.iter().map(|&j| sol.labels[j]).collect();
    let mut archetypes = Vec::new();
    for r in &sol.retained {
        let f1: Vec<Option<u8>> = p1
            .iter()
            .zip(&sol.labels)
            .filter(|(_, &l)| l == r.id)
            .map(|(&i, _)| attrition[i])
            .collect();
        let f2: Vec<Option<u8>> = p2
            .iter()
            .zip(&l2)
            .filter(|(_, &l)| l == r.id)
            .map(|(&i, _)| attrition[i])
            .collect();
        let (a1, a2) = (rate(&f1), rate(&f2));
        let delta = a1.zip(a2).map(|(a, b)| b - a);
        let flag = match (f2.is_empty(), delta) {
            (true, _) => Some("no period-2 members".to_string()),
            (false, None) => Some("no known outcomes in one period".to_string()),
            _ => None,
        };
        archetypes.push(ArchetypeDrift {
            archetype_id: r.id,
            period1_members: f1.len(),
            period2_members: f2.len(),
            period1_attrition: a1,
            period2_attrition: a2,
            delta,
            flag,
        });
    }
    let max_abs_delta = archetypes
        .iter()
        .filter_map(|a| a.delta.map(f64::abs))
        .reduce(f64::max);
    Ok(TemporalReport {
        split_year,
        period1_size: p1.len(),
        period2_size: p2.len(),
        n_archetypes: sol.retained.len(),
        period2_residual: l2.iter().filter(|&&l| l == NOISE).count(),
        archetypes,
        max_abs_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbour_ties_go_low() {
        let r = Points::from_rows(&[vec![0.0], vec![2.0], vec![2.0]]).unwrap();
        let q = Points::from_rows(&[vec![1.9], vec![1.0], vec![-5.0]]).unwrap();
        assert_eq!(nearest_neighbours(&r, &q), vec![1, 0, 0]);
    }

    #[test]
    fn empty_period_is_an_error() {
        let pts = Points::from_rows(&vec![vec![0.0, 1.0]; 30]).unwrap();
        let r = temporal_stability(
            &pts,
            &[2010; 30],
            &[Some(0); 30],
            2020,
            &EmbeddingParams::default(),
            &ClusteringParams::default(),
            1,
        );
        assert!(matches!(r, Err(CapireError::InvalidInput(_))));
    }
}
