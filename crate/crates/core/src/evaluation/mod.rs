//! Downstream tasks: count regression with a cross-validated Lasso and
//! land-use clustering scored by NMI and ARI.

mod kfold;
mod kmeans;
mod lasso;
mod partition;

pub use kfold::{
    default_grid, fold_indices, kfold_regress, scores, FoldScores, RegressionReport, DEFAULT_FOLDS, DEFAULT_GRID_LEN,
};
pub use kmeans::{kmeans, kmeans_with, KMeansOptions, KMeansResult, MAX_ITERATIONS};
pub use lasso::{kkt_violation, lambda_max, lasso_fit, standardize, LassoModel, Standardized, MAX_SWEEPS, TOLERANCE};
pub use partition::{ari, contingency, nmi, Contingency};

use serde::{Deserialize, Serialize};

use crate::data::TaskTargets;
use crate::error::EvalError;
use crate::graph::View;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub task: String,
    pub clusters: usize,
    pub nmi: f64,
    pub ari: f64,
    pub assignments: Vec<usize>,
}

/// Which part of the `N x 4d` embedding the tasks consume.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSelection {
    #[default]
    Concatenated,
    Single(View),
}

/// Columns of one view, or the whole matrix.
pub fn select_view(embedding: &Tensor, selection: ViewSelection) -> Result<Tensor, EvalError> {
    match selection {
        ViewSelection::Concatenated => Ok(embedding.clone()),
        ViewSelection::Single(v) => {
            let (n, cols) = embedding.shape();
            if cols % 4 != 0 {
                return Err(EvalError::Invalid(format!("{cols} embedding columns do not split into four views")));
            }
            let d = cols / 4;
            Ok(Tensor::from_fn(n, d, |i, j| embedding.get(i, v.index() * d + j)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    /// Explicit penalty grid; `None` uses the log-spaced default.
    pub l1_grid: Option<Vec<f64>>,
    /// Cluster count; `None` uses the number of distinct land-use labels.
    pub clusters: Option<usize>,
    pub view: ViewSelection,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { folds: DEFAULT_FOLDS, seed: 0, l1_grid: None, clusters: None, view: ViewSelection::Concatenated }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metrics {
    Regression { mae: f64, rmse: f64, r2: f64 },
    Clustering { nmi: f64, ari: f64 },
}

/// One task's JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    pub config: EvalConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reports: Vec<TaskReport>,
    pub warnings: Vec<String>,
    /// Full clustering result, including per-region labels, when the
    /// clustering task ran.
    #[serde(skip)]
    pub clustering: Option<ClusteringReport>,
}

fn distinct(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Runs every task the targets support. Missing crime or land-use
/// columns skip that task with a warning.
pub fn evaluate(embedding: &Tensor, targets: &TaskTargets, config: &EvalConfig) -> Result<Evaluation, EvalError> {
    let x = select_view(embedding, config.view)?;
    if x.rows() != targets.checkin.len() {
        return Err(EvalError::LengthMismatch(x.rows(), targets.checkin.len()));
    }
    let grid = config.l1_grid.as_deref();
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    let regression = |task: &str, y: &[f64]| -> Result<TaskReport, EvalError> {
        let r = kfold_regress(task, &x, y, config.folds, grid, config.seed)?;
        Ok(TaskReport {
            task: r.task,
            metrics: Metrics::Regression { mae: r.mae, rmse: r.rmse, r2: r.r2 },
            l1_weight: Some(r.l1_weight),
            clusters: None,
            config: config.clone(),
            seed: config.seed,
        })
    };
    reports.push(regression("checkin", &targets.checkin)?);
    match &targets.crime {
        Some(crime) => reports.push(regression("crime", crime)?),
        None => warnings.push("no crime column; crime regression skipped".to_string()),
    }
    let mut clustering = None;
    match &targets.land_use {
        Some(labels) => {
            let k = config.clusters.unwrap_or_else(|| distinct(labels));
            let km = kmeans(&x, k, config.seed)?;
            let c = ClusteringReport {
                task: "land_use".into(),
                clusters: k,
                nmi: nmi(labels, &km.assignments)?,
                ari: ari(labels, &km.assignments)?,
                assignments: km.assignments,
            };
            reports.push(TaskReport {
                task: c.task.clone(),
                metrics: Metrics::Clustering { nmi: c.nmi, ari: c.ari },
                l1_weight: None,
                clusters: Some(k),
                config: config.clone(),
                seed: config.seed,
            });
            clustering = Some(c);
        }
        None => warnings.push("no land-use labels; clustering skipped".to_string()),
    }
    Ok(Evaluation { reports, warnings, clustering })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_columns_are_sliced() {
        let e = Tensor::from_fn(2, 8, |i, j| (10 * i + j) as f64);
        let f = select_view(&e, ViewSelection::Single(View::Function)).unwrap();
        assert_eq!(f, Tensor::from_rows(&[vec![4.0, 5.0], vec![14.0, 15.0]]));
        assert!(select_view(&Tensor::zeros(2, 6), ViewSelection::Single(View::Origin)).is_err());
    }

    #[test]
    fn missing_columns_become_warnings() {
        let e = Tensor::from_fn(10, 4, |i, j| ((i * 5 + j * 3) % 7) as f64);
        let targets = TaskTargets { checkin: (0..10).map(|i| i as f64).collect(), crime: None, land_use: None };
        let out = evaluate(&e, &targets, &EvalConfig::default()).unwrap();
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.warnings.len(), 2);
        assert!(out.clustering.is_none());
    }

    #[test]
    fn report_json_shape() {
        let e = Tensor::from_fn(10, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 + if i < 5 { 0.0 } else { 20.0 });
        let targets = TaskTargets {
            checkin: (0..10).map(|i| i as f64).collect(),
            crime: Some((0..10).map(|i| (i * i) as f64).collect()),
            land_use: Some((0..10).map(|i| i / 5).collect()),
        };
        let out = evaluate(&e, &targets, &EvalConfig::default()).unwrap();
        let v = serde_json::to_value(&out.reports).unwrap();
        assert_eq!(v[0]["task"], "checkin");
        assert!(v[0]["metrics"]["rmse"].is_number());
        assert_eq!(v[2]["metrics"]["nmi"], 1.0);
        assert_eq!(v[2]["clusters"], 2);
        assert_eq!(v[2]["seed"], 0);
    }
}
