use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, CommonArgs, DataArgs, EvalArgs, ModelArgs};
use crate::data::{generate_city, load_dataset, CityConfig, Dataset, DatasetPaths};
use crate::error::DataError;
use crate::evaluation::{EvalConfig, ViewSelection};
use crate::training::TrainConfig;

/// Everything a command needs, as read from `--config` and then
/// overridden by flags. Generated manifests are valid run configs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Synthetic city parameters; mutually exclusive with `data`.
    pub city: Option<CityConfig>,
    /// Dataset directory; mutually exclusive with `city`.
    pub data: Option<PathBuf>,
    pub n_regions: Option<usize>,
    pub out: Option<PathBuf>,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { dir: PathBuf, n_regions: Option<usize> },
    Generator(CityConfig),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Config file (if any) with the common flags applied. A seed flag
    /// sets every seed.
    pub fn from_common(common: &CommonArgs) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(seed) = common.seed {
            cfg.train.seed = seed;
            cfg.eval.seed = seed;
            if let Some(city) = cfg.city.as_mut() {
                city.seed = seed;
            }
        }
        if let Some(out) = &common.out {
            cfg.out = Some(out.clone());
        }
        Ok(cfg)
    }

    pub fn apply_data(&mut self, args: &DataArgs, seed: Option<u64>) -> Result<(), CliError> {
        if let Some(dir) = &args.data {
            if self.city.is_some() {
                return Err(CliError::Usage("config names a generator; --data would give two data sources".into()));
            }
            self.data = Some(dir.clone());
        }
        if args.n_regions.is_some() {
            self.n_regions = args.n_regions;
        }
        let generator_flags = args.regions.is_some()
            || args.districts.is_some()
            || args.trips.is_some()
            || args.noise.is_some()
            || args.poi_cats.is_some()
            || args.checkin_cats.is_some()
            || args.trip_mode.is_some();
        if generator_flags {
            if self.data.is_some() {
                return Err(CliError::Usage("generator flags given together with a data directory".into()));
            }
            let city = self.city.get_or_insert_with(|| CityConfig { seed: seed.unwrap_or(0), ..CityConfig::default() });
            city.n_regions = args.regions.unwrap_or(city.n_regions);
            city.n_districts = args.districts.unwrap_or(city.n_districts);
            city.n_trips = args.trips.unwrap_or(city.n_trips);
            city.noise_level = args.noise.unwrap_or(city.noise_level);
            city.n_poi_cats = args.poi_cats.unwrap_or(city.n_poi_cats);
            city.n_checkin_cats = args.checkin_cats.unwrap_or(city.n_checkin_cats);
            city.trip_mode = args.trip_mode.unwrap_or(city.trip_mode);
        }
        Ok(())
    }

    pub fn apply_model(&mut self, args: &ModelArgs) {
        let t = &mut self.train;
        t.epochs = args.epochs.unwrap_or(t.epochs);
        t.dim = args.dim.unwrap_or(t.dim);
        t.heads = args.heads.unwrap_or(t.heads);
        t.memory = args.memory.unwrap_or(t.memory);
        t.beta = args.beta.unwrap_or(t.beta);
        t.lr = args.lr.unwrap_or(t.lr);
        t.weight_decay = args.weight_decay.unwrap_or(t.weight_decay);
        for v in &args.ablate {
            v.apply(&mut t.ablation);
        }
    }

    pub fn apply_eval(&mut self, args: &EvalArgs) {
        let e = &mut self.eval;
        e.folds = args.folds.unwrap_or(e.folds);
        if args.clusters.is_some() {
            e.clusters = args.clusters;
        }
        if let Some(v) = args.view {
            e.view = ViewSelection::Single(v);
        }
    }

    /// The single data source, defaulting to the standard generator.
    pub fn source(&self) -> Result<DataSource, CliError> {
        match (&self.data, &self.city) {
            (Some(_), Some(_)) => Err(CliError::Usage("exactly one data source: `data` or `city`, not both".into())),
            (Some(dir), None) => Ok(DataSource::Files { dir: dir.clone(), n_regions: self.n_regions }),
            (None, Some(city)) => Ok(DataSource::Generator(city.clone())),
            (None, None) => Ok(DataSource::Generator(CityConfig { seed: self.train.seed, ..CityConfig::default() })),
        }
    }

    pub fn dataset(&self) -> Result<Dataset, CliError> {
        Ok(match self.source()? {
            DataSource::Files { dir, n_regions } => load_dataset(&DatasetPaths::in_dir(&dir), n_regions)?,
            DataSource::Generator(city) => generate_city(&city)?,
        })
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        let out = self.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))?;
        if !out.is_dir() {
            return Err(DataError::Io {
                path: out.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            }
            .into());
        }
        Ok(out)
    }
}
