//! K-fold evaluation of the Lasso regressor with a nested penalty search.
//!
//! For test fold `i`, fold `(i + 1) % k` is held out for validation. Each
//! grid value is fit on the remaining `k - 2` folds, the one with the
//! lowest validation MAE (first on ties) is refit on all `k - 1` training
//! folds and scored on fold `i`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lasso::{lambda_max, lasso_fit};
use crate::error::EvalError;
use crate::tensor::Tensor;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_GRID_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub task: String,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    /// Median of the per-fold choices.
    pub l1_weight: f64,
    pub folds: usize,
    pub fold_l1_weights: Vec<f64>,
}

/// Row indices of each fold after a seeded shuffle. Fold sizes differ by
/// at most one; the first `n % k` folds get the extra row.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let fold = order[start..start + len].to_vec();
            start += len;
            fold
        })
        .collect()
}

/// `len` log-spaced values from `1e-4 * lambda_max` up to `lambda_max`,
/// ascending. A zero `lambda_max` yields the single value 0.
pub fn default_grid(x: &Tensor, y: &[f64], len: usize) -> Result<Vec<f64>, EvalError> {
    let top = lambda_max(x, y)?;
    if top == 0.0 || len <= 1 {
        return Ok(vec![top]);
    }
    let lo = (top * 1e-4).ln();
    let hi = top.ln();
    Ok((0..len).map(|i| (lo + (hi - lo) * i as f64 / (len - 1) as f64).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldScores {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

/// MAE, RMSE and out-of-sample R^2 against the mean of `truth`. R^2 is 0
/// when `truth` has no spread.
pub fn scores(truth: &[f64], pred: &[f64]) -> FoldScores {
    let n = truth.len() as f64;
    let mae = truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / n;
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    FoldScores { mae, rmse: (ss_res / n).sqrt(), r2 }
}

fn subset(x: &Tensor, y: &[f64], rows: &[usize]) -> (Tensor, Vec<f64>) {
    (x.select_rows(rows), rows.iter().map(|&i| y[i]).collect())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

pub fn kfold_regress(
    task: &str,
    x: &Tensor,
    y: &[f64],
    k: usize,
    grid: Option<&[f64]>,
    seed: u64,
) -> Result<RegressionReport, EvalError> {
    let n = x.rows();
    if n != y.len() {
        return Err(EvalError::LengthMismatch(n, y.len()));
    }
    if k < 3 {
        return Err(EvalError::Invalid(format!("need at least 3 folds (train, validation, test), got {k}")));
    }
    if k > n {
        return Err(EvalError::Invalid(format!("{k} folds for {n} rows")));
    }
    let grid = match grid {
        Some(g) if g.is_empty() => return Err(EvalError::Invalid("empty l1 grid".into())),
        Some(g) => g.to_vec(),
        None => default_grid(x, y, DEFAULT_GRID_LEN)?,
    };
    let folds = fold_indices(n, k, seed);
    let mut totals = FoldScores { mae: 0.0, rmse: 0.0, r2: 0.0 };
    let mut chosen = Vec::with_capacity(k);
    for test in 0..k {
        let val = (test + 1) % k;
        let inner: Vec<usize> =
            (0..k).filter(|&f| f != test && f != val).flat_map(|f| folds[f].iter().copied()).collect();
        let (xi, yi) = subset(x, y, &inner);
        let (xv, yv) = subset(x, y, &folds[val]);
        let mut best = (f64::INFINITY, grid[0]);
        for &l in &grid {
            let mae = scores(&yv, &lasso_fit(&xi, &yi, l)?.predict(&xv)).mae;
            if mae < best.0 {
                best = (mae, l);
            }
        }
        let train: Vec<usize> = (0..k).filter(|&f| f != test).flat_map(|f| folds[f].iter().copied()).collect();
        let (xt, yt) = subset(x, y, &train);
        let (xs, ys) = subset(x, y, &folds[test]);
        let s = scores(&ys, &lasso_fit(&xt, &yt, best.1)?.predict(&xs));
        totals.mae += s.mae;
        totals.rmse += s.rmse;
        totals.r2 += s.r2;
        chosen.push(best.1);
    }
    let kf = k as f64;
    Ok(RegressionReport {
        task: task.to_string(),
        mae: totals.mae / kf,
        rmse: totals.rmse / kf,
        r2: totals.r2 / kf,
        l1_weight: median(&chosen),
        folds: k,
        fold_l1_weights: chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_rows() {
        let f = fold_indices(23, 5, 3);
        assert_eq!(f.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = f.concat();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(f, fold_indices(23, 5, 3));
        assert_ne!(f, fold_indices(23, 5, 4));
    }

    #[test]
    fn grid_is_log_spaced_and_ends_at_lambda_max() {
        let x = Tensor::from_fn(10, 2, |i, j| (i * (j + 1)) as f64 + (i % 3) as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 2.0).collect();
        let g = default_grid(&x, &y, 20).unwrap();
        let top = lambda_max(&x, &y).unwrap();
        assert_eq!(g.len(), 20);
        assert!((g[19] - top).abs() < 1e-12 * top);
        assert!((g[0] - 1e-4 * top).abs() < 1e-12 * top);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-9));
        assert_eq!(default_grid(&x, &[1.0; 10], 20).unwrap(), vec![0.0]);
    }

    #[test]
    fn noiseless_linear_target_is_recovered() {
        let x = Tensor::from_fn(40, 3, |i, j| ((i * 7 + j * 13) % 17) as f64 + 0.1 * j as f64 * i as f64);
        let y: Vec<f64> = (0..40).map(|i| 2.0 * x.get(i, 0) - x.get(i, 1) + 0.5 * x.get(i, 2) + 3.0).collect();
        let r = kfold_regress("linear", &x, &y, 5, Some(&[0.0, 0.01, 0.1]), 1).unwrap();
        assert!(r.r2 >= 0.999, "{r:?}");
        assert!(r.rmse >= r.mae);
    }

    #[test]
    fn constant_target_gives_zero_r2_and_mae() {
        let x = Tensor::from_fn(12, 2, |i, j| (i + j) as f64);
        let r = kfold_regress("flat", &x, &[4.0; 12], 5, None, 0).unwrap();
        assert_eq!(r.r2, 0.0);
        assert!(r.mae.abs() < 1e-12);
    }

    #[test]
    fn fold_count_errors() {
        let x = Tensor::zeros(4, 1);
        assert!(kfold_regress("t", &x, &[0.0; 4], 5, None, 0).is_err());
        assert!(kfold_regress("t", &x, &[0.0; 4], 2, None, 0).is_err());
        assert!(kfold_regress("t", &x, &[0.0; 3], 3, None, 0).is_err());
    }
}
