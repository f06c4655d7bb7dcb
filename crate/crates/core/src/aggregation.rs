//! Global multi-head cosine attention over all regions of one view.
//!
//! Vertex features come from the cleansed graph: `h = G' P`, with `P` a
//! trainable `N x d` projection. `h` is split into `T` column blocks of
//! width `d / T`; head `t` projects its block back to `d` columns,
//! scores every pair by cosine similarity of the projected rows, and
//! softmax-normalizes each row over all *other* regions. Head outputs are
//! averaged and closed by a softmax, over the feature dimension by default
//! or over regions ([`OutputNorm`]).

use serde::{Deserialize, Serialize};

use crate::error::MathError;
use crate::tape::{Tape, Var};

/// Scoring rule for region pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionKind {
    /// Cosine similarity against every other region.
    #[default]
    Cosine,
    /// Scaled dot product restricted to nonzero edges of the cleansed
    /// graph (neighbourhood attention, used by the ablation).
    Neighborhood,
}

/// Axis of the softmax applied to the averaged head outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputNorm {
    /// Each region's row sums to one over the feature dimension.
    #[default]
    Features,
    /// Each feature column sums to one over the regions.
    Regions,
}

/// Handles to one head's intermediate results.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    /// Raw pairwise scores before normalization.
    pub scores: Var,
    /// Row-normalized attention coefficients, zero on the diagonal.
    pub attention: Var,
    pub output: Var,
}

/// `h = graph * proj`
pub fn init_view_features(tape: &mut Tape, graph: Var, proj: Var) -> Result<Var, MathError> {
    let (g, p) = (tape.value(graph), tape.value(proj));
    if g.rows() != g.cols() || g.cols() != p.rows() {
        return Err(MathError::ShapeMismatch { op: "init_view_features", left: g.shape(), right: p.shape() });
    }
    tape.matmul(graph, proj)
}

fn off_diagonal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|k| k / n != k % n).collect()
}

/// One cosine attention head over `h` (`N x w`) with projection `w x d`.
pub fn head_attention(tape: &mut Tape, h: Var, proj: Var) -> Result<HeadOutput, MathError> {
    let n = tape.value(h).rows();
    if n < 2 {
        return Err(MathError::Invalid(format!("attention needs at least 2 regions, got {n}")));
    }
    let projected = tape.matmul(h, proj)?;
    let unit = tape.row_normalize(projected);
    let scores = tape.matmul_nt(unit, unit)?;
    let attention = tape.masked_softmax_rows(scores, &off_diagonal_mask(n))?;
    let output = tape.matmul(attention, projected)?;
    Ok(HeadOutput { scores, attention, output })
}

/// Dot-product attention restricted to graph neighbours (`edges[i*n+j]`).
pub fn neighborhood_head(tape: &mut Tape, h: Var, proj: Var, edges: &[bool]) -> Result<HeadOutput, MathError> {
    let n = tape.value(h).rows();
    let projected = tape.matmul(h, proj)?;
    let width = tape.value(projected).cols() as f64;
    let raw = tape.matmul_nt(projected, projected)?;
    let scores = tape.scale(raw, 1.0 / width.sqrt());
    let mask: Vec<bool> = edges.iter().enumerate().map(|(k, &e)| e && k / n != k % n).collect();
    let attention = tape.masked_softmax_rows(scores, &mask)?;
    let output = tape.matmul(attention, projected)?;
    Ok(HeadOutput { scores, attention, output })
}

/// Averages `heads.len()` heads over column blocks of `h`, then applies a
/// row-wise softmax. `edges` is required for [`AttentionKind::Neighborhood`].
pub fn multi_head_aggregate(
    tape: &mut Tape,
    h: Var,
    heads: &[Var],
    kind: AttentionKind,
    edges: Option<&[bool]>,
) -> Result<(Var, Vec<HeadOutput>), MathError> {
    multi_head_aggregate_with(tape, h, heads, kind, edges, OutputNorm::Features)
}

/// [`multi_head_aggregate`] with a choice of output softmax axis.
pub fn multi_head_aggregate_with(
    tape: &mut Tape,
    h: Var,
    heads: &[Var],
    kind: AttentionKind,
    edges: Option<&[bool]>,
    norm: OutputNorm,
) -> Result<(Var, Vec<HeadOutput>), MathError> {
    let d = tape.value(h).cols();
    let t = heads.len();
    if t == 0 || d % t != 0 {
        return Err(MathError::Invalid(format!("{t} heads do not divide model dimension {d}")));
    }
    let width = d / t;
    let mut outputs = Vec::with_capacity(t);
    for (k, &proj) in heads.iter().enumerate() {
        let block = tape.columns(h, k * width, width)?;
        let head = match kind {
            AttentionKind::Cosine => head_attention(tape, block, proj)?,
            AttentionKind::Neighborhood => {
                let edges = edges.ok_or_else(|| MathError::Invalid("neighbourhood attention needs graph edges".into()))?;
                neighborhood_head(tape, block, proj, edges)?
            }
        };
        outputs.push(head);
    }
    let outs: Vec<Var> = outputs.iter().map(|o| o.output).collect();
    let total = tape.add_all(&outs)?;
    let mean = tape.scale(total, 1.0 / t as f64);
    let out = match norm {
        OutputNorm::Features => tape.softmax_rows(mean),
        OutputNorm::Regions => {
            let by_feature = tape.transpose(mean);
            let normalized = tape.softmax_rows(by_feature);
            tape.transpose(normalized)
        }
    };
    Ok((out, outputs))
}
