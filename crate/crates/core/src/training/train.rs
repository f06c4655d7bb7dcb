use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamState};
use crate::data::Dataset;
use crate::error::TrainError;
use crate::tensor::Tensor;

use super::loss::LossBreakdown;
use super::model::{forward, loss_and_gradients, Prepared};
use super::params::{ModelParams, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    /// Concatenated final embeddings (`N x 4d`) under the returned params.
    pub embeddings: Tensor,
    /// Losses of the returned params.
    pub final_losses: LossBreakdown,
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let prep = Prepared::new(dataset);
    let params = ModelParams::init(prep.n_regions(), config)?;
    train_prepared(&prep, params, config)
}

/// Full-batch training from the given initial parameters. The log holds
/// the loss evaluated before each epoch's update.
pub fn train_prepared(prep: &Prepared, mut params: ModelParams, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let decay = params.decay_mask();
    let mut values = params.values();
    let mut state = AdamState::new(&values, config.lr, config.weight_decay);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (fwd, grads) = loss_and_gradients(prep, &params, config).map_err(|e| match e {
            TrainError::NanComponent(component) => TrainError::NonFiniteLoss { epoch, component },
            other => other,
        })?;
        let l = fwd.losses;
        if let Some(component) = [("L_ODP", l.odp), ("L_FP", l.fp), ("L_SP", l.sp), ("total", l.total)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(name, _)| name)
        {
            return Err(TrainError::NonFiniteLoss { epoch, component });
        }
        log.push(EpochLog { epoch, losses: l });
        adam_step(&mut values, &grads, &decay, &mut state)?;
        params.set_values(values.clone());
        params.clamp_thresholds();
        values = params.values();
    }
    let fwd = forward(prep, &params, config)?;
    Ok(TrainOutcome { embeddings: fwd.embedding(), final_losses: fwd.losses, params, log })
}
