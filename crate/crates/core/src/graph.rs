//! Region dependency graphs and their soft-threshold cleansing.
//!
//! Four dense graphs are built once from raw data: origin and destination
//! context similarity from trips, and function/semantics similarity from
//! POI and check-in counts. Only cleansing depends on trainable state.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureTable, TripSet};
use crate::error::{DataError, MathError};
use crate::math::{pairwise_cosine, soft_threshold};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    Origin,
    Destination,
    Function,
    Semantics,
}

impl View {
    pub const ALL: [View; 4] = [View::Origin, View::Destination, View::Function, View::Semantics];

    pub fn tag(self) -> &'static str {
        match self {
            View::Origin => "O",
            View::Destination => "D",
            View::Function => "F",
            View::Semantics => "S",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_tag(tag: &str) -> Option<View> {
        View::ALL.into_iter().find(|v| v.tag().eq_ignore_ascii_case(tag))
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub view: View,
    pub matrix: Tensor,
    /// Cleansing threshold, `>= 0`.
    pub tau: f64,
}

impl DependencyGraph {
    pub fn new(view: View, matrix: Tensor) -> Self {
        Self { view, matrix, tau: 0.0 }
    }

    pub fn n_regions(&self) -> usize {
        self.matrix.rows()
    }
}

/// `counts[i][j]` = number of trips from region `i` to region `j`.
pub fn trip_counts(trips: &TripSet) -> Tensor {
    let n = trips.n_regions();
    let mut counts = Tensor::zeros(n, n);
    for &(o, d) in trips.pairs() {
        counts.set(o, d, counts.get(o, d) + 1.0);
    }
    counts
}

/// Origin contexts (rows of `counts` normalized) and destination contexts
/// (columns normalized, stored as rows). Regions without trips get an
/// all-zero context.
pub fn context_distributions(counts: &Tensor) -> (Tensor, Tensor) {
    let n = counts.rows();
    let mut origin = counts.clone();
    for i in 0..n {
        let s: f64 = origin.row(i).iter().sum();
        if s > 0.0 {
            origin.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
    }
    let mut dest = counts.transpose();
    for i in 0..n {
        let s: f64 = dest.row(i).iter().sum();
        if s > 0.0 {
            dest.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
    }
    (origin, dest)
}

pub fn mobility_graphs(origin_ctx: &Tensor, dest_ctx: &Tensor) -> (DependencyGraph, DependencyGraph) {
    (
        DependencyGraph::new(View::Origin, pairwise_cosine(origin_ctx)),
        DependencyGraph::new(View::Destination, pairwise_cosine(dest_ctx)),
    )
}

/// Pairwise cosine similarity of region count rows.
pub fn feature_graph(table: &FeatureTable, view: View) -> DependencyGraph {
    DependencyGraph::new(view, pairwise_cosine(&table.counts))
}

/// All four graphs in [`View::ALL`] order.
pub fn build_graphs(data: &Dataset) -> [DependencyGraph; 4] {
    let counts = trip_counts(&data.trips);
    let (po, pd) = context_distributions(&counts);
    let (go, gd) = mobility_graphs(&po, &pd);
    [go, gd, feature_graph(&data.poi, View::Function), feature_graph(&data.checkins, View::Semantics)]
}

/// Soft-thresholds the graph with its own `tau`.
pub fn cleanse(graph: &DependencyGraph) -> Result<DependencyGraph, MathError> {
    Ok(DependencyGraph { view: graph.view, matrix: soft_threshold(&graph.matrix, graph.tau)?, tau: graph.tau })
}

/// Differentiable cleansing; adjoints flow to both the graph and `tau`.
pub fn cleanse_on_tape(tape: &mut Tape, graph: Var, tau: Var) -> Result<Var, MathError> {
    tape.soft_threshold(graph, tau)
}

/// Writes an `N x N` matrix as headerless CSV.
pub fn write_matrix_csv(matrix: &Tensor, path: &Path) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for i in 0..matrix.rows() {
        let line: Vec<String> = matrix.row(i).iter().map(f64::to_string).collect();
        writeln!(f, "{}", line.join(",")).map_err(io)?;
    }
    f.flush().map_err(io)
}
