//! Cross-view fusion: shared-memory linear attention followed by a gated
//! blend of local and global representations.
//!
//! For each view `E_i` (`N x d`), scores against the key memory
//! `M_k` (`H x d`) are normalized twice, first with a softmax over regions
//! and then with an l1 normalization over the `H` memory slots, so every
//! row of the resulting `A_i` sums to one. The global representation is
//! `A_i M_v`. Cost is `O(N H d)` per view.

use serde::{Deserialize, Serialize};

use crate::error::MathError;
use crate::tape::{Tape, Var};

/// How per-view memory reads are turned into global representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryReadout {
    /// `Ê_i = A_i M_v` for each view.
    #[default]
    PerView,
    /// `Ê_i = sum_k A_k M_v`, the same for every view.
    SumOverViews,
}

#[derive(Debug, Clone, Copy)]
pub struct MemoryUnit {
    pub keys: Var,
    pub values: Var,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    /// Row-normalized memory attention per view (`N x H`).
    pub attention: Vec<Var>,
    pub global: Vec<Var>,
}

fn check_views(tape: &Tape, views: &[Var]) -> Result<(usize, usize), MathError> {
    let first = views.first().ok_or(MathError::Empty { op: "fusion" })?;
    let shape = tape.value(*first).shape();
    if let Some(bad) = views.iter().find(|v| tape.value(**v).shape() != shape) {
        return Err(MathError::ShapeMismatch { op: "fusion", left: shape, right: tape.value(*bad).shape() });
    }
    Ok(shape)
}

/// Double-normalized memory attention for one view.
pub fn memory_attention(tape: &mut Tape, view: Var, keys: Var) -> Result<Var, MathError> {
    let scores = tape.matmul_nt(view, keys)?;
    let by_slot = tape.transpose(scores);
    let over_regions = tape.softmax_rows(by_slot);
    let back = tape.transpose(over_regions);
    Ok(tape.l1_normalize_rows(back))
}

pub fn attentive_fusion(
    tape: &mut Tape,
    views: &[Var],
    memory: MemoryUnit,
    readout: MemoryReadout,
) -> Result<FusionOutput, MathError> {
    let (_, d) = check_views(tape, views)?;
    let (kd, vd) = (tape.value(memory.keys).shape(), tape.value(memory.values).shape());
    if kd.1 != d || vd != kd {
        return Err(MathError::ShapeMismatch { op: "attentive_fusion", left: kd, right: vd });
    }
    let attention: Vec<Var> = views.iter().map(|&v| memory_attention(tape, v, memory.keys)).collect::<Result<_, _>>()?;
    let reads: Vec<Var> = attention.iter().map(|&a| tape.matmul(a, memory.values)).collect::<Result<_, _>>()?;
    let global = match readout {
        MemoryReadout::PerView => reads,
        MemoryReadout::SumOverViews => {
            let total = tape.add_all(&reads)?;
            vec![total; views.len()]
        }
    };
    Ok(FusionOutput { attention, global })
}

/// Trainable projections of the quadratic self-attention baseline.
#[derive(Debug, Clone, Copy)]
pub struct SelfAttentionParams {
    pub query: Var,
    pub key: Var,
    pub value: Var,
}

/// `softmax(Q K^T) V` with `Q, K, V` linear in `view`. Returns the
/// attention matrix and the output.
pub fn self_attention_baseline(tape: &mut Tape, view: Var, params: SelfAttentionParams) -> Result<(Var, Var), MathError> {
    let q = tape.matmul(view, params.query)?;
    let k = tape.matmul(view, params.key)?;
    let v = tape.matmul(view, params.value)?;
    let scores = tape.matmul_nt(q, k)?;
    let attention = tape.softmax_rows(scores);
    let out = tape.matmul(attention, v)?;
    Ok((attention, out))
}

/// `sigmoid(a) * global + (1 - sigmoid(a)) * local` with `a` a `1 x 1`
/// gate logit.
pub fn gated_combine(tape: &mut Tape, local: Var, global: Var, gate_logit: Var) -> Result<Var, MathError> {
    let gate = tape.sigmoid(gate_logit);
    gated_combine_with(tape, local, global, gate)
}

/// [`gated_combine`] with an already squashed gate in `[0, 1]`.
pub fn gated_combine_with(tape: &mut Tape, local: Var, global: Var, gate: Var) -> Result<Var, MathError> {
    let diff = tape.sub(global, local)?;
    let moved = tape.scale_by(diff, gate)?;
    tape.add(local, moved)
}

/// Per-region softmax over views of `E_i W_f + b_f`, used to average the
/// views. Returns the fused `N x d` matrix and the `N x M` weights.
pub fn view_weighted_sum(tape: &mut Tape, views: &[Var], weight: Var, bias: Var) -> Result<(Var, Var), MathError> {
    check_views(tape, views)?;
    let logits: Vec<Var> = views
        .iter()
        .map(|&v| {
            let s = tape.matmul(v, weight)?;
            tape.add_row(s, bias)
        })
        .collect::<Result<_, _>>()?;
    let stacked = tape.hcat(&logits)?;
    let weights = tape.softmax_rows(stacked);
    let mut parts = Vec::with_capacity(views.len());
    for (k, &v) in views.iter().enumerate() {
        let w = tape.column(weights, k)?;
        parts.push(tape.mul_col(v, w)?);
    }
    Ok((tape.add_all(&parts)?, weights))
}

/// `beta * E'_i + (1 - beta) * E_F` for every view.
pub fn final_embeddings(tape: &mut Tape, gated: &[Var], fused: Var, beta: f64) -> Result<Vec<Var>, MathError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(MathError::Invalid(format!("beta must be in [0, 1], got {beta}")));
    }
    let shared = tape.scale(fused, 1.0 - beta);
    gated
        .iter()
        .map(|&e| {
            let own = tape.scale(e, beta);
            tape.add(own, shared)
        })
        .collect()
}
