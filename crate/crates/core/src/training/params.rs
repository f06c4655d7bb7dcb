use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregation::OutputNorm;
use crate::error::TrainError;
use crate::fusion::MemoryReadout;
use crate::graph::View;
use crate::tensor::Tensor;

/// The four component ablations. Each switch replaces one stage of the
/// full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablation {
    /// Skip soft-threshold cleansing; no thresholds are created.
    #[serde(default)]
    pub no_cleansing: bool,
    /// Neighbourhood dot-product attention on cleansed edges instead of
    /// global cosine attention.
    #[serde(default)]
    pub plain_attention: bool,
    /// Quadratic self-attention instead of the memory readout.
    #[serde(default)]
    pub self_attention_fusion: bool,
    /// Use the aggregated views directly; no fusion stage at all.
    #[serde(default)]
    pub no_dual_stage: bool,
}

/// Named ablation variants accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationVariant {
    WithoutCleansing,
    WithoutGlobalAttention,
    WithoutAttentiveFusion,
    WithoutDualStage,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::WithoutCleansing,
        AblationVariant::WithoutGlobalAttention,
        AblationVariant::WithoutAttentiveFusion,
        AblationVariant::WithoutDualStage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::WithoutCleansing => "w/o-GCL",
            AblationVariant::WithoutGlobalAttention => "w/o-MGAM",
            AblationVariant::WithoutAttentiveFusion => "w/o-AFM",
            AblationVariant::WithoutDualStage => "w/o-DSGF",
        }
    }

    pub fn apply(self, ablation: &mut Ablation) {
        match self {
            AblationVariant::WithoutCleansing => ablation.no_cleansing = true,
            AblationVariant::WithoutGlobalAttention => ablation.plain_attention = true,
            AblationVariant::WithoutAttentiveFusion => ablation.self_attention_fusion = true,
            AblationVariant::WithoutDualStage => ablation.no_dual_stage = true,
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name().chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown ablation `{s}` (expected one of w/o-GCL, w/o-MGAM, w/o-AFM, w/o-DSGF)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dim: usize,
    pub heads: usize,
    pub memory: usize,
    pub beta: f64,
    pub seed: u64,
    /// Divide the OD loss by the trip count and the reconstruction losses
    /// by `N^2`.
    pub normalize_losses: bool,
    pub readout: MemoryReadout,
    /// Axis of the softmax closing each view's aggregation.
    pub output_norm: OutputNorm,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.005,
            weight_decay: 0.001,
            dim: 144,
            heads: 12,
            memory: 32,
            beta: 0.5,
            seed: 0,
            normalize_losses: true,
            readout: MemoryReadout::PerView,
            output_norm: OutputNorm::Regions,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.dim == 0 || self.heads == 0 || self.memory == 0 {
            return bad("dim, heads and memory must be positive".into());
        }
        if self.dim % self.heads != 0 {
            return bad(format!("heads ({}) must divide dim ({})", self.heads, self.dim));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning rate must be positive and weight decay non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must be in [0, 1], got {}", self.beta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Receives decoupled weight decay.
    pub decay: bool,
}

/// Ordered registry of every trainable tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<ParamEntry>", into = "Vec<ParamEntry>")]
pub struct ModelParams {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl From<Vec<ParamEntry>> for ModelParams {
    fn from(entries: Vec<ParamEntry>) -> Self {
        Self::from_entries(entries)
    }
}

impl From<ModelParams> for Vec<ParamEntry> {
    fn from(p: ModelParams) -> Self {
        p.entries
    }
}

pub(crate) fn proj_name(v: View) -> String {
    format!("proj.{v}")
}
pub(crate) fn head_name(v: View, t: usize) -> String {
    format!("head.{v}.{t}")
}
pub(crate) fn gate_name(v: View) -> String {
    format!("gate.{v}")
}
pub(crate) fn tau_name(v: View) -> String {
    format!("tau.{v}")
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

impl ModelParams {
    pub fn from_entries(entries: Vec<ParamEntry>) -> Self {
        let index = entries.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
        Self { entries, index }
    }

    /// Initializes every parameter the configured model needs for
    /// `n_regions` regions.
    pub fn init(n_regions: usize, config: &TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (n, d, t, h) = (n_regions, config.dim, config.heads, config.memory);
        let width = d / t;
        let ab = config.ablation;
        let mut entries = Vec::new();
        let mut push = |name: String, value: Tensor, decay: bool| entries.push(ParamEntry { name, value, decay });

        for v in View::ALL {
            push(proj_name(v), uniform(&mut rng, n, d, n), true);
            for k in 0..t {
                push(head_name(v, k), uniform(&mut rng, width, d, width), true);
            }
        }
        if !ab.no_dual_stage {
            if ab.self_attention_fusion {
                for role in ["query", "key", "value"] {
                    push(format!("self_attn.{role}"), uniform(&mut rng, d, d, d), true);
                }
            } else {
                let normal = Normal::new(0.0, 0.02).expect("valid sd");
                for role in ["keys", "values"] {
                    push(format!("memory.{role}"), Tensor::from_fn(h, d, |_, _| normal.sample(&mut rng)), true);
                }
            }
            for v in View::ALL {
                push(gate_name(v), Tensor::scalar(0.0), false);
            }
            push("fusion.weight".into(), uniform(&mut rng, d, 1, d), true);
            push("fusion.bias".into(), Tensor::scalar(0.0), false);
        }
        if !ab.no_cleansing {
            for v in View::ALL {
                push(tau_name(v), Tensor::scalar(0.0), false);
            }
        }
        Ok(Self::from_entries(entries))
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.entries[i].value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    pub fn values(&self) -> Vec<Tensor> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    pub fn decay_mask(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.decay).collect()
    }

    /// Replaces all values, keeping names and order.
    pub fn set_values(&mut self, values: Vec<Tensor>) {
        debug_assert_eq!(values.len(), self.entries.len());
        for (e, v) in self.entries.iter_mut().zip(values) {
            e.value = v;
        }
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> bool {
        match self.position(name) {
            Some(i) => {
                self.entries[i].value = value;
                true
            }
            None => false,
        }
    }

    /// Projects thresholds back onto `tau >= 0`.
    pub fn clamp_thresholds(&mut self) {
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with("tau.")) {
            e.value.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_model_registry() {
        let cfg = TrainConfig { dim: 8, heads: 2, memory: 4, ..TrainConfig::default() };
        let p = ModelParams::init(5, &cfg).unwrap();
        assert_eq!(p.get("proj.O").unwrap().shape(), (5, 8));
        assert_eq!(p.get("head.S.1").unwrap().shape(), (4, 8));
        assert_eq!(p.get("memory.keys").unwrap().shape(), (4, 8));
        assert_eq!(p.get("tau.F").unwrap().item(), 0.0);
        assert_eq!(p.get("gate.D").unwrap().item(), 0.0);
        // 4 proj + 8 heads + 2 memory + 4 gates + weight + bias + 4 tau
        assert_eq!(p.len(), 24);
        assert_eq!(p.scalar_count(), 4 * 40 + 8 * 32 + 2 * 32 + 4 + 8 + 1 + 4);
    }

    #[test]
    fn ablations_change_registry() {
        let base = TrainConfig { dim: 8, heads: 2, memory: 4, ..TrainConfig::default() };
        let mut cfg = base.clone();
        cfg.ablation.no_cleansing = true;
        assert!(!ModelParams::init(5, &cfg).unwrap().entries().iter().any(|e| e.name.starts_with("tau.")));
        let mut cfg = base.clone();
        cfg.ablation.self_attention_fusion = true;
        let p = ModelParams::init(5, &cfg).unwrap();
        assert!(p.contains("self_attn.query") && !p.contains("memory.keys"));
        let mut cfg = base;
        cfg.ablation.no_dual_stage = true;
        let p = ModelParams::init(5, &cfg).unwrap();
        assert!(!p.contains("gate.O") && !p.contains("fusion.weight"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { heads: 5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { beta: 1.2, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn ablation_names_parse() {
        for v in AblationVariant::ALL {
            assert_eq!(v.name().parse::<AblationVariant>().unwrap(), v);
        }
        assert_eq!("wo-gcl".parse::<AblationVariant>().unwrap(), AblationVariant::WithoutCleansing);
        assert!("w/o-XYZ".parse::<AblationVariant>().is_err());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = TrainConfig { dim: 8, heads: 2, memory: 4, ..TrainConfig::default() };
        assert_eq!(ModelParams::init(5, &cfg).unwrap(), ModelParams::init(5, &cfg).unwrap());
        let other = TrainConfig { seed: 1, ..cfg.clone() };
        assert_ne!(ModelParams::init(5, &cfg).unwrap(), ModelParams::init(5, &other).unwrap());
    }
}
