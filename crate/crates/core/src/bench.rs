//! Wall-clock comparison of the memory fusion against quadratic
//! self-attention on random views.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::MathError;
use crate::fusion::{attentive_fusion, self_attention_baseline, MemoryReadout, MemoryUnit, SelfAttentionParams};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FusionTiming {
    pub n: usize,
    /// Median milliseconds of one forward pass.
    pub memory_ms: f64,
    pub self_attention_ms: f64,
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    Tensor::from_fn(rows, cols, |_, _| normal.sample(rng))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

struct Case {
    view: Tensor,
    keys: Tensor,
    values: Tensor,
    proj: Vec<Tensor>,
}

impl Case {
    fn new(n: usize, dim: usize, memory: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let view = random(&mut rng, n, dim);
        let keys = random(&mut rng, memory, dim);
        let values = random(&mut rng, memory, dim);
        let proj = (0..3).map(|_| random(&mut rng, dim, dim)).collect();
        Self { view, keys, values, proj }
    }

    fn memory_pass(&self) -> Result<(), MathError> {
        let mut tape = Tape::new();
        let v = tape.leaf(self.view.clone());
        let unit = MemoryUnit { keys: tape.leaf(self.keys.clone()), values: tape.leaf(self.values.clone()) };
        attentive_fusion(&mut tape, &[v], unit, MemoryReadout::PerView)?;
        Ok(())
    }

    fn self_pass(&self) -> Result<(), MathError> {
        let mut tape = Tape::new();
        let v = tape.leaf(self.view.clone());
        let params = SelfAttentionParams {
            query: tape.leaf(self.proj[0].clone()),
            key: tape.leaf(self.proj[1].clone()),
            value: tape.leaf(self.proj[2].clone()),
        };
        self_attention_baseline(&mut tape, v, params)?;
        Ok(())
    }
}

/// Shortest wall time of one timed sample; faster passes are repeated
/// until a sample lasts this long.
const MIN_SAMPLE: Duration = Duration::from_millis(50);

/// Runs `pass` once untimed and returns how many repeats fill a sample.
fn repeats(pass: impl Fn() -> Result<(), MathError>) -> Result<usize, MathError> {
    let start = Instant::now();
    pass()?;
    let once = start.elapsed().max(Duration::from_micros(1));
    Ok((MIN_SAMPLE.as_secs_f64() / once.as_secs_f64()).ceil().max(1.0) as usize)
}

/// Milliseconds per pass over one sample of `reps` passes.
fn sample(pass: impl Fn() -> Result<(), MathError>, reps: usize) -> Result<f64, MathError> {
    let start = Instant::now();
    for _ in 0..reps {
        pass()?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / reps as f64)
}

/// Times one view of each size through both fusions, keeping the median
/// of `runs` samples. Samples of different sizes are interleaved so that
/// machine load drifts hit every size alike.
pub fn fusion_timings(
    sizes: &[usize],
    dim: usize,
    memory: usize,
    runs: usize,
    seed: u64,
) -> Result<Vec<FusionTiming>, MathError> {
    if runs == 0 {
        return Err(MathError::Invalid("need at least one run".into()));
    }
    let cases: Vec<Case> = sizes.iter().map(|&n| Case::new(n, dim, memory, seed)).collect();
    let reps: Vec<(usize, usize)> = cases
        .iter()
        .map(|c| Ok((repeats(|| c.memory_pass())?, repeats(|| c.self_pass())?)))
        .collect::<Result<_, MathError>>()?;
    let mut times = vec![(Vec::with_capacity(runs), Vec::with_capacity(runs)); cases.len()];
    for _ in 0..runs {
        for ((case, &(rm, rs)), (mem, slf)) in cases.iter().zip(&reps).zip(times.iter_mut()) {
            mem.push(sample(|| case.memory_pass(), rm)?);
            slf.push(sample(|| case.self_pass(), rs)?);
        }
    }
    Ok(sizes
        .iter()
        .zip(times)
        .map(|(&n, (mem, slf))| FusionTiming { n, memory_ms: median(mem), self_attention_ms: median(slf) })
        .collect())
}

/// [`fusion_timings`] for a single size.
pub fn fusion_timing(n: usize, dim: usize, memory: usize, runs: usize, seed: u64) -> Result<FusionTiming, MathError> {
    Ok(fusion_timings(&[n], dim, memory, runs, seed)?.remove(0))
}
