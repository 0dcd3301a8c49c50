use serde::{Deserialize, Serialize};

use crate::error::{CapireError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: i32,
    pub support: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// Unweighted mean F1 over classes with support or predictions.
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Rows are true classes, columns predicted, both in `classes` order.
    pub confusion: Vec<Vec<usize>>,
}

/// Metrics for class indices into `classes`. Undefined precision or recall
/// (no predictions / no support) counts as 0.
pub fn classification_metrics(
    truth: &[usize],
    predicted: &[usize],
    classes: &[i32],
) -> Result<Metrics> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(CapireError::invalid(
            "metrics need equally long, non-empty label vectors",
        ));
    }
    let k = classes.len();
    if truth.iter().chain(predicted).any(|&c| c >= k) {
        return Err(CapireError::invalid("class index out of range"));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let mut per_class = Vec::new();
    for c in 0..k {
        let support: usize = confusion[c].iter().sum();
        let pred: usize = (0..k).map(|r| confusion[r][c]).sum();
        if support == 0 && pred == 0 {
            continue;
        }
        let tp = confusion[c][c] as f64;
        let precision = if pred > 0 { tp / pred as f64 } else { 0.0 };
        let recall = if support > 0 {
            tp / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            class: classes[c],
            support,
            predicted: pred,
            precision,
            recall,
            f1,
        });
    }
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64;
    Ok(Metrics {
        n: truth.len(),
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1,
        per_class,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_hand_examples() {
        let m = classification_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], &[5, 6, 7]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(
            m.confusion,
            vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]
        );

        // truth 0,0,1,1; predicted 0,1,1,1: class0 p=1 r=.5 f=2/3; class1 p=2/3 r=1 f=.8
        let m = classification_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], &[0, 1]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert!((m.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        let cells: usize = m.confusion.iter().flatten().sum();
        assert_eq!(cells, 4);
    }
}
