//! L1-regularized least squares by cyclic coordinate descent.
//!
//! Features are standardized internally; the objective is
//! `0.5 * |y_c - Z w|^2 / N + lambda * |w|_1` on the standardized matrix
//! `Z` and centred targets `y_c`. Returned coefficients are mapped back
//! to the original feature scale.

use crate::error::EvalError;
use crate::tensor::Tensor;

pub const TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    /// Coefficients on the original feature scale.
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Coefficients on the standardized scale, the ones the penalty sees.
    pub std_coef: Vec<f64>,
    pub l1_weight: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl LassoModel {
    pub fn predict(&self, x: &Tensor) -> Vec<f64> {
        (0..x.rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.coef).map(|(a, w)| a * w).sum::<f64>())
            .collect()
    }
}

/// Column-standardized copy of the design matrix.
#[derive(Debug, Clone)]
pub struct Standardized {
    /// Column-major standardized features; constant columns are all zero.
    pub columns: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant column.
    pub scales: Vec<f64>,
    pub y_mean: f64,
    pub y_centered: Vec<f64>,
}

pub fn standardize(x: &Tensor, y: &[f64]) -> Result<Standardized, EvalError> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(EvalError::LengthMismatch(n, y.len()));
    }
    if n == 0 || p == 0 {
        return Err(EvalError::Invalid(format!("lasso needs at least one row and one column, got {n}x{p}")));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("lasso"));
    }
    let nf = n as f64;
    let mut columns = Vec::with_capacity(p);
    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / nf;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let sd = var.sqrt();
        // Columns whose spread is pure round-off are treated as constant.
        let constant = sd <= 1e-12 * mean.abs().max(1.0);
        let scale = if constant { 0.0 } else { sd };
        columns.push(if constant { vec![0.0; n] } else { col.iter().map(|v| (v - mean) / sd).collect() });
        means.push(mean);
        scales.push(scale);
    }
    let y_mean = y.iter().sum::<f64>() / nf;
    Ok(Standardized { columns, means, scales, y_mean, y_centered: y.iter().map(|v| v - y_mean).collect() })
}

fn correlation(col: &[f64], r: &[f64]) -> f64 {
    col.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / col.len() as f64
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(x: &Tensor, y: &[f64]) -> Result<f64, EvalError> {
    let s = standardize(x, y)?;
    Ok(s.columns.iter().map(|c| correlation(c, &s.y_centered).abs()).fold(0.0, f64::max))
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of the subgradient optimality conditions, measured
/// on the standardized problem.
pub fn kkt_violation(s: &Standardized, w: &[f64], l1_weight: f64) -> f64 {
    let n = s.y_centered.len();
    let mut r = s.y_centered.clone();
    for (col, &wj) in s.columns.iter().zip(w) {
        if wj != 0.0 {
            for i in 0..n {
                r[i] -= col[i] * wj;
            }
        }
    }
    s.columns
        .iter()
        .zip(s.scales.iter().zip(w))
        .filter(|(_, (sc, _))| **sc > 0.0)
        .map(|(col, (_, &wj))| {
            let g = correlation(col, &r);
            if wj > 0.0 {
                (g - l1_weight).abs()
            } else if wj < 0.0 {
                (g + l1_weight).abs()
            } else {
                (g.abs() - l1_weight).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn lasso_fit(x: &Tensor, y: &[f64], l1_weight: f64) -> Result<LassoModel, EvalError> {
    if !(l1_weight >= 0.0) || !l1_weight.is_finite() {
        return Err(EvalError::Invalid(format!("l1 weight must be finite and non-negative, got {l1_weight}")));
    }
    let s = standardize(x, y)?;
    let n = s.y_centered.len();
    let p = s.columns.len();
    let mut w = vec![0.0; p];
    let mut r = s.y_centered.clone();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if s.scales[j] == 0.0 {
                continue;
            }
            let col = &s.columns[j];
            // Unit column variance makes the curvature of every coordinate 1.
            let rho = correlation(col, &r) + w[j];
            let new = soft(rho, l1_weight);
            let delta = new - w[j];
            if delta != 0.0 {
                for i in 0..n {
                    r[i] -= col[i] * delta;
                }
                w[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < TOLERANCE && kkt_violation(&s, &w, l1_weight) < TOLERANCE {
            converged = true;
            break;
        }
    }
    let coef: Vec<f64> = w.iter().zip(&s.scales).map(|(&wj, &sc)| if sc > 0.0 { wj / sc } else { 0.0 }).collect();
    let intercept = s.y_mean - coef.iter().zip(&s.means).map(|(c, m)| c * m).sum::<f64>();
    Ok(LassoModel { coef, intercept, std_coef: w, l1_weight, sweeps, converged })
}
