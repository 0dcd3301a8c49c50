use std::collections::BTreeMap;

use crate::error::{CapireError, Result};

fn comb2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table. Every
/// label value, including the noise label, is an ordinary class. When the
/// expected and maximum indices coincide (both partitions trivial) the
/// result is 1.
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CapireError::invalid(format!(
            "label lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(CapireError::invalid(
            "adjusted Rand index needs at least 2 items",
        ));
    }
    let mut table: BTreeMap<(i32, i32), u64> = BTreeMap::new();
    let mut rows: BTreeMap<i32, u64> = BTreeMap::new();
    let mut cols: BTreeMap<i32, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| comb2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(),
            1.0
        );
        assert_eq!(
            adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, -1, -1]).unwrap(),
            1.0
        );
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
        // a = [0,0,1,1], b = [0,0,0,1]: index 1, sums 2 and 3, total 6,
        // expected 1, max 2.5 -> 0.
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap()).abs() < 1e-12);
    }
}
