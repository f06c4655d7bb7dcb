//! Agreement between two labelings of the same items.

use std::collections::BTreeMap;

use crate::error::EvalError;

/// Contingency counts with dense relabelled rows (first argument) and
/// columns (second argument).
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

pub fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let (da, ka) = dense(a);
    let (db, kb) = dense(b);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in da.iter().zip(&db) {
        table[i][j] += 1;
    }
    let row_sums = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency { table, row_sums, col_sums, n: a.len() as u64 })
}

impl Contingency {
    /// True when the two labelings are the same partition.
    pub fn is_bijective(&self) -> bool {
        self.row_sums.len() == self.col_sums.len()
            && self.table.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).ln()).sum()
}

/// Mutual information normalized by the arithmetic mean of the two
/// entropies. Identical partitions give exactly 1, including the case
/// where both put everything in one cluster.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, EvalError> {
    let c = contingency(a, b)?;
    if c.n == 0 {
        return Err(EvalError::Invalid("nmi of empty labelings".into()));
    }
    if c.is_bijective() {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let ha = entropy(&c.row_sums, n);
    let hb = entropy(&c.col_sums, n);
    let denom = 0.5 * (ha + hb);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (nij * n / (c.row_sums[i] as f64 * c.col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// Adjusted Rand index from contingency pair counts. When the expected
/// and maximal index coincide (for example one cluster on both sides)
/// the result is 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64, EvalError> {
    let c = contingency(a, b)?;
    let index: u128 = c.table.iter().flatten().map(|&x| pairs(x)).sum();
    let sum_a: u128 = c.row_sums.iter().map(|&x| pairs(x)).sum();
    let sum_b: u128 = c.col_sums.iter().map(|&x| pairs(x)).sum();
    let total = pairs(c.n);
    if total == 0 {
        return Ok(1.0);
    }
    let expected = sum_a as f64 * sum_b as f64 / total as f64;
    let max = 0.5 * (sum_a as f64 + sum_b as f64);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index as f64 - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions_score_one() {
        let a = [0, 0, 1, 1, 2, 2, 2];
        let renamed = [5, 5, 9, 9, 1, 1, 1];
        assert_eq!(nmi(&a, &renamed).unwrap(), 1.0);
        assert_eq!(ari(&a, &renamed).unwrap(), 1.0);
        assert_eq!(nmi(&[3; 5], &[3; 5]).unwrap(), 1.0);
        assert_eq!(ari(&[3; 5], &[3; 5]).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster_gives_zero_nmi() {
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 1, 2, 3], &[7, 7, 7, 7]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(nmi(&[0], &[0, 1]).unwrap_err(), EvalError::LengthMismatch(1, 2));
        assert!(ari(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn known_contingency_value() {
        // Contingency rows [2, 1] and [0, 3].
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 1, 1];
        let n = 6.0f64;
        let mi = 2.0 / n * (2.0 * n / (3.0 * 2.0)).ln()
            + 1.0 / n * (1.0 * n / (3.0 * 4.0)).ln()
            + 3.0 / n * (3.0 * n / (3.0 * 4.0)).ln();
        let hb = -(2.0 / n) * (2.0 / n).ln() - (4.0 / n) * (4.0 / n).ln();
        let expect = mi / (0.5 * (2f64.ln() + hb));
        assert!((nmi(&a, &b).unwrap() - expect).abs() < 1e-12);
    }
}
