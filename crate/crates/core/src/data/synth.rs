//! Synthetic cities with planted district structure.
//!
//! Each district gets its own POI and check-in category profile. Region
//! profiles blend the district profile with a random one according to
//! `noise_level`, and trips mostly stay inside the origin's district.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureTable, RegionSet, TaskTargets, TripSet};
use crate::error::DataError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TripMode {
    /// Destinations drawn anywhere with probability `noise_level`, otherwise
    /// within the origin's district, mostly to its primary destination.
    #[default]
    Mixed,
    /// Every origin always travels to one fixed destination in its district.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityConfig {
    pub n_regions: usize,
    pub n_districts: usize,
    pub n_poi_cats: usize,
    pub n_checkin_cats: usize,
    pub n_trips: usize,
    pub noise_level: f64,
    pub seed: u64,
    #[serde(default)]
    pub trip_mode: TripMode,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            n_regions: 20,
            n_districts: 4,
            n_poi_cats: 8,
            n_checkin_cats: 12,
            n_trips: 2000,
            noise_level: 0.1,
            seed: 0,
            trip_mode: TripMode::Mixed,
        }
    }
}

const POI_TOTAL: (f64, f64) = (80.0, 120.0);
const CHECKIN_TOTAL: (f64, f64) = (400.0, 600.0);
const PROFILE_SPIKE: f64 = 8.0;
const CHECKIN_SCALE: f64 = 1000.0;
const CRIME_SCALE: f64 = 200.0;
/// Share of within-district trips that go to the origin's primary
/// destination; the rest pick a district member uniformly.
const PRIMARY_SHARE: f64 = 0.75;
/// Noise standard deviation as a fraction of the signal's.
const TARGET_NOISE_RATIO: f64 = 0.1;

impl CityConfig {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidParameter(m.to_string()));
        if self.n_regions == 0 {
            return bad("n_regions must be positive");
        }
        if self.n_districts == 0 || self.n_districts > self.n_regions {
            return bad("n_districts must be in 1..=n_regions");
        }
        if self.n_poi_cats == 0 || self.n_checkin_cats == 0 {
            return bad("category counts must be positive");
        }
        if self.n_trips == 0 {
            return bad("n_trips must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return bad("noise_level must be in [0, 1]");
        }
        Ok(())
    }
}

fn district_profiles(rng: &mut ChaCha8Rng, n_districts: usize, n_cats: usize) -> Vec<Vec<f64>> {
    (0..n_districts)
        .map(|k| {
            let mut p: Vec<f64> = (0..n_cats)
                .map(|c| 0.5 + rng.random::<f64>() + if c % n_districts == k { PROFILE_SPIKE } else { 0.0 })
                .collect();
            normalize(&mut p);
            p
        })
        .collect()
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
}

fn region_counts(
    rng: &mut ChaCha8Rng,
    districts: &[usize],
    profiles: &[Vec<f64>],
    noise: f64,
    total: (f64, f64),
) -> Tensor {
    let n_cats = profiles[0].len();
    let mut counts = Tensor::zeros(districts.len(), n_cats);
    for (r, &d) in districts.iter().enumerate() {
        let mut random: Vec<f64> = (0..n_cats).map(|_| rng.random::<f64>()).collect();
        normalize(&mut random);
        let size = rng.random_range(total.0..total.1);
        for c in 0..n_cats {
            let share = (1.0 - noise) * profiles[d][c] + noise * random[c];
            let lambda = (size * share).max(1e-9);
            let draw: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
            counts.set(r, c, draw);
        }
    }
    counts
}

fn noisy_linear_targets(rng: &mut ChaCha8Rng, districts: &[usize], features: &[Vec<f64>], scale: f64) -> Vec<f64> {
    let dim = features[0].len();
    let weights: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let signal: Vec<f64> =
        districts.iter().map(|&d| scale * features[d].iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>()).collect();
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let sd = (signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    let noise_sd = if sd > 0.0 { sd * TARGET_NOISE_RATIO } else { mean.abs() * TARGET_NOISE_RATIO };
    let normal = Normal::new(0.0, noise_sd.max(1e-12)).expect("finite sd");
    signal.into_iter().map(|s| s + normal.sample(rng)).collect()
}

/// Generates a complete dataset. Identical configs give identical output.
pub fn generate_city(config: &CityConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_regions;
    let k = config.n_districts;

    let mut districts: Vec<usize> = (0..n).map(|i| i % k).collect();
    districts.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (r, &d) in districts.iter().enumerate() {
        members[d].push(r);
    }

    let poi_profiles = district_profiles(&mut rng, k, config.n_poi_cats);
    let checkin_profiles = district_profiles(&mut rng, k, config.n_checkin_cats);
    let poi = region_counts(&mut rng, &districts, &poi_profiles, config.noise_level, POI_TOTAL);
    let checkins = region_counts(&mut rng, &districts, &checkin_profiles, config.noise_level, CHECKIN_TOTAL);

    let primary = primary_destinations(&mut rng, &members, n);
    let pairs = match config.trip_mode {
        TripMode::Mixed => (0..config.n_trips)
            .map(|_| {
                let o = rng.random_range(0..n);
                let d = if rng.random::<f64>() < config.noise_level {
                    rng.random_range(0..n)
                } else if rng.random::<f64>() < PRIMARY_SHARE {
                    primary[o]
                } else {
                    let m = &members[districts[o]];
                    m[rng.random_range(0..m.len())]
                };
                (o, d)
            })
            .collect(),
        TripMode::Deterministic => (0..config.n_trips).map(|t| (t % n, primary[t % n])).collect(),
    };

    let joint: Vec<Vec<f64>> = poi_profiles.iter().zip(&checkin_profiles).map(|(p, c)| [p.clone(), c.clone()].concat()).collect();
    let checkin_target = noisy_linear_targets(&mut rng, &districts, &joint, CHECKIN_SCALE);
    let crime_target = noisy_linear_targets(&mut rng, &districts, &joint, CRIME_SCALE);

    let mut regions = RegionSet::numbered(n);
    regions.districts = Some(districts.clone());
    let poi = FeatureTable::new((0..config.n_poi_cats).map(|c| format!("poi_{c}")).collect(), poi)?;
    let checkins = FeatureTable::new((0..config.n_checkin_cats).map(|c| format!("checkin_{c}")).collect(), checkins)?;
    Ok(Dataset {
        regions,
        trips: TripSet::new(n, pairs)?,
        poi,
        checkins,
        targets: TaskTargets { checkin: checkin_target, crime: Some(crime_target), land_use: Some(districts) },
    })
}

/// A bijection that maps each region to another region of its district
/// (a shuffled cycle per district).
fn primary_destinations(rng: &mut ChaCha8Rng, members: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut dest = vec![0; n];
    for m in members {
        let mut cycle = m.clone();
        cycle.shuffle(rng);
        for (i, &r) in cycle.iter().enumerate() {
            dest[r] = cycle[(i + 1) % cycle.len()];
        }
    }
    dest
}

/// Destination map used by [`TripMode::Deterministic`], recovered from the
/// trips (first destination seen per origin).
pub fn observed_destinations(trips: &TripSet) -> Vec<Option<usize>> {
    let mut dest = vec![None; trips.n_regions()];
    for &(o, d) in trips.pairs() {
        dest[o].get_or_insert(d);
    }
    dest
}
