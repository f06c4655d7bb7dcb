//! The full forward pass, recorded on a tape.

use crate::aggregation::{init_view_features, multi_head_aggregate_with, AttentionKind};
use crate::data::Dataset;
use crate::error::{MathError, TrainError};
use crate::fusion::{
    attentive_fusion, final_embeddings, gated_combine, self_attention_baseline, view_weighted_sum, MemoryUnit,
    SelfAttentionParams,
};
use crate::graph::{build_graphs, cleanse_on_tape, trip_counts, View};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::loss::{loss_odp, loss_reconstruction, od_distributions, total_loss, LossBreakdown};
use super::params::{gate_name, head_name, proj_name, tau_name, ModelParams, TrainConfig};

/// Static inputs of a training run: raw graphs and the trip count matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub graphs: [Tensor; 4],
    pub trip_counts: Tensor,
    pub n_trips: usize,
}

impl Prepared {
    pub fn new(dataset: &Dataset) -> Self {
        let graphs = build_graphs(dataset).map(|g| g.matrix);
        Self { graphs, trip_counts: trip_counts(&dataset.trips), n_trips: dataset.trips.len() }
    }

    pub fn from_parts(graphs: [Tensor; 4], trip_counts: Tensor) -> Self {
        let n_trips = trip_counts.sum().round() as usize;
        Self { graphs, trip_counts, n_trips }
    }

    pub fn n_regions(&self) -> usize {
        self.trip_counts.rows()
    }
}

/// Tape and handles of one forward pass.
pub struct Forward {
    pub tape: Tape,
    /// One leaf per registry entry, in registry order.
    pub params: Vec<Var>,
    pub cleansed: [Var; 4],
    /// Per-view aggregated embeddings before fusion.
    pub aggregated: [Var; 4],
    /// Per-view final embeddings.
    pub views: [Var; 4],
    pub p_o: Var,
    pub p_d: Var,
    pub total: Var,
    pub losses: LossBreakdown,
}

impl Forward {
    /// Concatenated final embeddings, `N x 4d`.
    pub fn embedding(&self) -> Tensor {
        let parts: Vec<&Tensor> = self.views.iter().map(|&v| self.tape.value(v)).collect();
        Tensor::hcat(&parts).expect("views share row count")
    }

    pub fn view(&self, view: View) -> &Tensor {
        self.tape.value(self.views[view.index()])
    }
}

fn lookup(params: &ModelParams, leaves: &[Var], name: &str) -> Result<Var, TrainError> {
    params
        .position(name)
        .map(|i| leaves[i])
        .ok_or_else(|| TrainError::Config(format!("parameter `{name}` missing from registry")))
}

/// Runs graphs -> cleansing -> aggregation -> fusion -> losses.
pub fn forward(prep: &Prepared, params: &ModelParams, config: &TrainConfig) -> Result<Forward, TrainError> {
    config.validate()?;
    let n = prep.n_regions();
    let ab = config.ablation;
    let mut tape = Tape::new();
    let leaves: Vec<Var> = params.entries().iter().map(|e| tape.leaf(e.value.clone())).collect();
    let p = |name: &str| lookup(params, &leaves, name);

    let mut cleansed = Vec::with_capacity(4);
    let mut aggregated = Vec::with_capacity(4);
    for v in View::ALL {
        let raw = tape.leaf(prep.graphs[v.index()].clone());
        let g = if ab.no_cleansing { raw } else { cleanse_on_tape(&mut tape, raw, p(&tau_name(v))?)? };
        cleansed.push(g);
        let h = init_view_features(&mut tape, g, p(&proj_name(v))?)?;
        let heads: Vec<Var> = (0..config.heads).map(|t| p(&head_name(v, t))).collect::<Result<_, _>>()?;
        let (e, _) = if ab.plain_attention {
            let edges: Vec<bool> = tape.value(g).data().iter().map(|&x| x != 0.0).collect();
            multi_head_aggregate_with(&mut tape, h, &heads, AttentionKind::Neighborhood, Some(&edges), config.output_norm)?
        } else {
            multi_head_aggregate_with(&mut tape, h, &heads, AttentionKind::Cosine, None, config.output_norm)?
        };
        aggregated.push(e);
    }

    let views: Vec<Var> = if ab.no_dual_stage {
        aggregated.clone()
    } else {
        let global: Vec<Var> = if ab.self_attention_fusion {
            let sa = SelfAttentionParams { query: p("self_attn.query")?, key: p("self_attn.key")?, value: p("self_attn.value")? };
            aggregated.iter().map(|&e| self_attention_baseline(&mut tape, e, sa).map(|(_, out)| out)).collect::<Result<_, _>>()?
        } else {
            let memory = MemoryUnit { keys: p("memory.keys")?, values: p("memory.values")? };
            attentive_fusion(&mut tape, &aggregated, memory, config.readout)?.global
        };
        let mut gated = Vec::with_capacity(4);
        for (v, (&e, &g)) in View::ALL.into_iter().zip(aggregated.iter().zip(&global)) {
            gated.push(gated_combine(&mut tape, e, g, p(&gate_name(v))?)?);
        }
        let (fused, _) = view_weighted_sum(&mut tape, &gated, p("fusion.weight")?, p("fusion.bias")?)?;
        final_embeddings(&mut tape, &gated, fused, config.beta)?
    };

    let [o, d, f, s] = [0, 1, 2, 3].map(|k| views[k]);
    let (p_o, p_d) = od_distributions(&mut tape, o, d)?;
    let odp_raw = loss_odp(&mut tape, p_o, p_d, &prep.trip_counts)?;
    let fp_raw = loss_reconstruction(&mut tape, f, cleansed[View::Function.index()])?;
    let sp_raw = loss_reconstruction(&mut tape, s, cleansed[View::Semantics.index()])?;
    let (odp, fp, sp) = if config.normalize_losses {
        let m = prep.n_trips.max(1) as f64;
        let nn = (n * n).max(1) as f64;
        (tape.scale(odp_raw, 1.0 / m), tape.scale(fp_raw, 1.0 / nn), tape.scale(sp_raw, 1.0 / nn))
    } else {
        (odp_raw, fp_raw, sp_raw)
    };
    let total = tape.add_all(&[odp, fp, sp])?;
    let val = |v: Var| tape.value(v).item();
    let losses = LossBreakdown {
        odp: val(odp),
        fp: val(fp),
        sp: val(sp),
        total: total_loss(val(odp), val(fp), val(sp))?,
        odp_raw: val(odp_raw),
        fp_raw: val(fp_raw),
        sp_raw: val(sp_raw),
    };
    let arr = |v: Vec<Var>| -> Result<[Var; 4], MathError> {
        v.try_into().map_err(|_| MathError::Invalid("expected four views".into()))
    };
    Ok(Forward {
        params: leaves,
        cleansed: arr(cleansed)?,
        aggregated: arr(aggregated)?,
        views: arr(views)?,
        p_o,
        p_d,
        total,
        losses,
        tape,
    })
}

/// Loss value and gradient for every registered parameter.
pub fn loss_and_gradients(
    prep: &Prepared,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<(Forward, Vec<Tensor>), TrainError> {
    let fwd = forward(prep, params, config)?;
    let grads = fwd.tape.backward(fwd.total)?;
    let out = fwd
        .params
        .iter()
        .zip(params.entries())
        .map(|(&v, e)| grads.get_or_zeros(v, e.value.shape()))
        .collect();
    Ok((fwd, out))
}

/// Row-wise argmax of the predicted destination distribution.
pub fn predicted_destinations(fwd: &Forward) -> Vec<usize> {
    let p = fwd.tape.value(fwd.p_o);
    (0..p.rows())
        .map(|i| {
            p.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &x)| if x > best.1 { (j, x) } else { best })
                .0
        })
        .collect()
}
