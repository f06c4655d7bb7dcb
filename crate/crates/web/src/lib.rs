//! Browser bindings for three views of the model: the soft-threshold
//! curve, a cleansed dependency graph, and the region attention of one
//! view after a short training run.
//!
//! Every export has a plain Rust twin so the numbers can be tested
//! natively; the `#[wasm_bindgen]` wrappers only convert errors.

use regionembed::aggregation::{init_view_features, multi_head_aggregate_with, AttentionKind};
use regionembed::data::{generate_city, CityConfig, Dataset};
use regionembed::error::{DataError, MathError, TrainError};
use regionembed::graph::{build_graphs, View};
use regionembed::math::{soft_threshold, soft_threshold_dx, soft_threshold_scalar};
use regionembed::training::{train, Prepared, TrainConfig};
use regionembed::{Tape, Tensor};
use wasm_bindgen::prelude::*;

/// Largest city the page will build; keeps the heatmaps legible and the
/// training run interactive.
pub const MAX_REGIONS: usize = 64;
pub const MAX_EPOCHS: usize = 300;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("unknown view `{0}` (expected O, D, F or S)")]
    UnknownView(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl From<DemoError> for JsValue {
    fn from(e: DemoError) -> Self {
        JsValue::from_str(&e.to_string())
    }
}

fn parse_view(tag: &str) -> Result<View, DemoError> {
    View::from_tag(tag).ok_or_else(|| DemoError::UnknownView(tag.to_string()))
}

/// Sampled soft-threshold function and its slope.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ys(&self) -> Vec<f64> {
        self.ys.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn slopes(&self) -> Vec<f64> {
        self.slopes.clone()
    }
}

/// `points` evenly spaced samples on `[-extent, extent]`.
pub fn threshold_curve(tau: f64, extent: f64, points: usize) -> Result<Curve, DemoError> {
    if !(tau >= 0.0) {
        return Err(MathError::NegativeThreshold(tau).into());
    }
    if !(extent > 0.0) || !extent.is_finite() || points < 2 {
        return Err(DemoError::Invalid(format!("need a positive extent and at least 2 points, got {extent} and {points}")));
    }
    let step = 2.0 * extent / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|k| -extent + step * k as f64).collect();
    let ys = xs.iter().map(|&x| soft_threshold_scalar(x, tau)).collect();
    let slopes = xs.iter().map(|&x| soft_threshold_dx(x, tau)).collect();
    Ok(Curve { xs, ys, slopes })
}

#[wasm_bindgen(js_name = thresholdCurve)]
pub fn threshold_curve_js(tau: f64, extent: f64, points: usize) -> Result<Curve, JsValue> {
    Ok(threshold_curve(tau, extent, points)?)
}

/// Synthetic city parameters shared by the two graph operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct City {
    pub regions: usize,
    pub districts: usize,
    pub noise: f64,
    pub seed: u64,
}

impl City {
    fn dataset(self) -> Result<Dataset, DemoError> {
        if self.regions > MAX_REGIONS {
            return Err(DemoError::Invalid(format!("at most {MAX_REGIONS} regions, got {}", self.regions)));
        }
        let cfg = CityConfig {
            n_regions: self.regions,
            n_districts: self.districts,
            noise_level: self.noise,
            n_trips: 100 * self.regions,
            seed: self.seed,
            ..CityConfig::default()
        };
        Ok(generate_city(&cfg)?)
    }
}

/// Square matrix plus each region's planted district, for drawing.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    n: usize,
    values: Vec<f64>,
    districts: Vec<u32>,
    note: String,
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major `n * n` entries.
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn districts(&self) -> Vec<u32> {
        self.districts.clone()
    }

    /// One line summarizing the matrix, shown under the plot.
    #[wasm_bindgen(getter)]
    pub fn note(&self) -> String {
        self.note.clone()
    }
}

impl Heatmap {
    fn new(matrix: &Tensor, data: &Dataset, note: String) -> Self {
        let districts = data.regions.districts.as_ref().map_or_else(Vec::new, |d| d.iter().map(|&x| x as u32).collect());
        Self { n: matrix.rows(), values: matrix.data().to_vec(), districts, note }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// The view's dependency graph after soft-thresholding at `tau`.
pub fn cleansed_graph(city: City, view: &str, tau: f64) -> Result<Heatmap, DemoError> {
    let view = parse_view(view)?;
    let data = city.dataset()?;
    let raw = &build_graphs(&data)[view.index()].matrix;
    let cleansed = soft_threshold(raw, tau)?;
    let off_diagonal = |m: &Tensor| {
        let n = m.rows();
        (0..n * n).filter(|&k| k / n != k % n && m.data()[k] != 0.0).count()
    };
    let note = format!(
        "{view} graph, threshold {tau:.3}: {} of {} off-diagonal edges survive",
        off_diagonal(&cleansed),
        off_diagonal(raw)
    );
    Ok(Heatmap::new(&cleansed, &data, note))
}

#[wasm_bindgen(js_name = cleansedGraph)]
pub fn cleansed_graph_js(regions: usize, districts: usize, noise: f64, seed: u64, view: &str, tau: f64) -> Result<Heatmap, JsValue> {
    Ok(cleansed_graph(City { regions, districts, noise, seed }, view, tau)?)
}

/// Small model used for the attention map so a browser run stays quick.
pub fn demo_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, dim: 24, heads: 4, memory: 8, seed, ..TrainConfig::default() }
}

/// Head-averaged region-to-region attention of one view after `epochs`
/// training steps of the demo model. `tau` replaces the learned threshold
/// when given.
pub fn attention_map(city: City, view: &str, epochs: usize, tau: Option<f64>) -> Result<Heatmap, DemoError> {
    let view = parse_view(view)?;
    if epochs > MAX_EPOCHS {
        return Err(DemoError::Invalid(format!("at most {MAX_EPOCHS} epochs, got {epochs}")));
    }
    let data = city.dataset()?;
    let config = demo_config(epochs, city.seed);
    let outcome = train(&data, &config)?;
    let params = &outcome.params;
    let param = |name: String| params.get(&name).cloned().ok_or_else(|| DemoError::Invalid(format!("missing parameter {name}")));

    let prep = Prepared::new(&data);
    let tau = match tau {
        Some(t) => t,
        None => param(format!("tau.{view}"))?.item(),
    };
    let mut tape = Tape::new();
    let graph = tape.leaf(soft_threshold(&prep.graphs[view.index()], tau)?);
    let proj = tape.leaf(param(format!("proj.{view}"))?);
    let heads = (0..config.heads)
        .map(|t| Ok(tape.leaf(param(format!("head.{view}.{t}"))?)))
        .collect::<Result<Vec<_>, DemoError>>()?;
    let h = init_view_features(&mut tape, graph, proj)?;
    let (_, outputs) = multi_head_aggregate_with(&mut tape, h, &heads, AttentionKind::Cosine, None, config.output_norm)?;

    let n = data.n_regions();
    let mut mean = Tensor::zeros(n, n);
    for o in &outputs {
        mean.add_assign(tape.value(o.attention));
    }
    let mean = mean.scale(1.0 / outputs.len() as f64);
    let note = format!(
        "{view} view, {epochs} epochs, threshold {tau:.3}, final loss {:.4}",
        outcome.final_losses.total
    );
    Ok(Heatmap::new(&mean, &data, note))
}

#[wasm_bindgen(js_name = attentionMap)]
pub fn attention_map_js(
    regions: usize,
    districts: usize,
    noise: f64,
    seed: u64,
    view: &str,
    epochs: usize,
    tau: Option<f64>,
) -> Result<Heatmap, JsValue> {
    Ok(attention_map(City { regions, districts, noise, seed }, view, epochs, tau)?)
}
