//! Counter-based random streams and order-fixed Monte Carlo aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 0xB5EED;
pub const DEFAULT_WORKERS: usize = 4;

/// Value with standard error; the return type of every Monte Carlo quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
}

impl MCEstimate {
    pub fn exact(value: f64, seed: u64) -> Self {
        Self { value, std_error: 0.0, n: 0, seed }
    }

    /// |a - b| in units of the combined standard error.
    pub fn z_score(&self, other: &Self) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        let d = (self.value - other.value).abs();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

/// Sample budget and stream identity for a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
}

impl McConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, workers: DEFAULT_WORKERS }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// Same budget on an independent family of streams.
    pub fn derive(&self, tag: u64) -> Self {
        Self { seed: mix64(self.seed ^ mix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15))), ..*self }
    }
}

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `index` of the generator family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[inline]
pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_normal(rng: &mut impl Rng, z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Running mean and variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accum {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accum {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Accum) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *o;
            return;
        }
        let n = (self.count + o.count) as f64;
        let d = o.mean - self.mean;
        self.mean += d * o.count as f64 / n;
        self.m2 += o.m2 + d * d * self.count as f64 * o.count as f64 / n;
        self.count += o.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self, seed: u64) -> MCEstimate {
        MCEstimate { value: self.mean, std_error: self.std_error(), n: self.count, seed }
    }
}

/// Split `cfg.n` draws over `cfg.workers` blocks; block b runs on stream b with its
/// share of the draws. Blocks are merged in index order, so the result depends only
/// on (seed, n, workers).
pub fn run_blocks<F>(cfg: &McConfig, f: F) -> Accum
where
    F: Fn(&mut ChaCha8Rng, usize, &mut Accum) + Sync,
{
    let w = cfg.workers.max(1);
    let base = cfg.n / w;
    let extra = cfg.n % w;
    let parts: Vec<Accum> = (0..w)
        .into_par_iter()
        .map(|b| {
            let count = base + usize::from(b < extra);
            let mut rng = stream(cfg.seed, b as u64);
            let mut acc = Accum::default();
            if count > 0 {
                f(&mut rng, count, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = Accum::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Vector-valued variant: each block fills `dim` accumulators.
pub fn run_blocks_vec<F>(cfg: &McConfig, dim: usize, f: F) -> Vec<Accum>
where
    F: Fn(&mut ChaCha8Rng, usize, &mut [Accum]) + Sync,
{
    let w = cfg.workers.max(1);
    let base = cfg.n / w;
    let extra = cfg.n % w;
    let parts: Vec<Vec<Accum>> = (0..w)
        .into_par_iter()
        .map(|b| {
            let count = base + usize::from(b < extra);
            let mut rng = stream(cfg.seed, b as u64);
            let mut acc = vec![Accum::default(); dim];
            if count > 0 {
                f(&mut rng, count, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![Accum::default(); dim];
    for p in &parts {
        for (t, a) in total.iter_mut().zip(p) {
            t.merge(a);
        }
    }
    total
}
