use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

use super::params::{ModelParams, TrainConfig};
use super::train::EpochLog;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub n_regions: usize,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, n_regions: usize, params: ModelParams) -> Self {
        Self { format_version: CHECKPOINT_VERSION, config, n_regions, params }
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let json = serde_json::to_string(self).map_err(|e| DataError::InvalidParameter(e.to_string()))?;
        fs::write(path, json).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| DataError::InvalidParameter(format!("{}: {e}", path.display())))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(DataError::InvalidParameter(format!(
                "{}: unsupported checkpoint version {}",
                path.display(),
                ck.format_version
            )));
        }
        Ok(ck)
    }
}

/// Writes `epoch,L_ODP,L_FP,L_SP,total` plus the unnormalized components.
pub fn write_loss_log(log: &[EpochLog], path: &Path) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut out = fs::File::create(path).map_err(io)?;
    let mut text = String::from("epoch,L_ODP,L_FP,L_SP,total,L_ODP_raw,L_FP_raw,L_SP_raw\n");
    for e in log {
        let l = &e.losses;
        text.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            e.epoch, l.odp, l.fp, l.sp, l.total, l.odp_raw, l.fp_raw, l.sp_raw
        ));
    }
    out.write_all(text.as_bytes()).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let cfg = TrainConfig { dim: 4, heads: 2, memory: 2, ..TrainConfig::default() };
        let params = ModelParams::init(3, &cfg).unwrap();
        let ck = Checkpoint::new(cfg, 3, params);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params.get("tau.O").unwrap().item(), 0.0);
    }

    #[test]
    fn rejects_unknown_version() {
        let cfg = TrainConfig { dim: 4, heads: 2, memory: 2, ..TrainConfig::default() };
        let mut ck = Checkpoint::new(cfg.clone(), 3, ModelParams::init(3, &cfg).unwrap());
        ck.format_version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
