//! Regions, trips, per-region category counts and downstream targets.

mod io;
mod synth;

pub use io::{load_dataset, write_dataset, DatasetPaths, CHECKINS_FILE, POI_FILE, REGIONS_FILE, TARGETS_FILE, TRIPS_FILE};
pub use synth::{generate_city, observed_destinations, CityConfig, TripMode};

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::tensor::Tensor;

/// The city partition. Region `i` is addressed internally by `i`; `ids`
/// holds the external identifier used in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    /// Land-use ground truth, one label per region when known.
    pub districts: Option<Vec<usize>>,
}

impl RegionSet {
    pub fn numbered(n: usize) -> Self {
        Self {
            ids: (0..n).map(|i| i.to_string()).collect(),
            names: (0..n).map(|i| format!("region_{i}")).collect(),
            districts: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Origin-destination trips. Repeated pairs are repeated trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSet {
    n_regions: usize,
    pairs: Vec<(usize, usize)>,
}

impl TripSet {
    pub fn new(n_regions: usize, pairs: Vec<(usize, usize)>) -> Result<Self, DataError> {
        if pairs.is_empty() {
            return Err(DataError::InvalidParameter("trip set must contain at least one trip".into()));
        }
        if let Some((row, &(o, d))) = pairs.iter().enumerate().find(|(_, &(o, d))| o >= n_regions || d >= n_regions) {
            let id = if o >= n_regions { o } else { d };
            return Err(DataError::UnknownRegion { file: "trips".into(), row, id: id.to_string() });
        }
        Ok(Self { n_regions, pairs })
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same trips with every region id mapped through `perm` (old -> new).
    pub fn relabel(&self, perm: &[usize]) -> TripSet {
        TripSet { n_regions: self.n_regions, pairs: self.pairs.iter().map(|&(o, d)| (perm[o], perm[d])).collect() }
    }
}

/// `N x C` non-negative count matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub categories: Vec<String>,
    pub counts: Tensor,
}

impl FeatureTable {
    pub fn new(categories: Vec<String>, counts: Tensor) -> Result<Self, DataError> {
        if categories.len() != counts.cols() {
            return Err(DataError::InvalidParameter(format!(
                "{} category names for {} columns",
                categories.len(),
                counts.cols()
            )));
        }
        if let Some(v) = counts.data().iter().find(|v| !(**v >= 0.0)) {
            return Err(DataError::InvalidParameter(format!("feature counts must be non-negative, got {v}")));
        }
        Ok(Self { categories, counts })
    }

    pub fn n_regions(&self) -> usize {
        self.counts.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTargets {
    pub checkin: Vec<f64>,
    /// Absent when the targets file has no crime column.
    pub crime: Option<Vec<f64>>,
    pub land_use: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub regions: RegionSet,
    pub trips: TripSet,
    pub poi: FeatureTable,
    pub checkins: FeatureTable,
    pub targets: TaskTargets,
}

impl Dataset {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }
}
