//! Special functions and sampling primitives shared by every module.
//!
//! Draws on the hot path are taken in log space: sticks, Dirichlet weights
//! and Gamma variates with tiny shapes routinely underflow `f64` otherwise.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Below this argument `ln Γ(x)` is evaluated as `ln Γ(1 + x) − ln x`.
const SMALL_ARG: f64 = 0.5;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with a 64-bit stream selector, so distinct stream ids
/// with the same seed never overlap.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream, e.g. one per chain or per replication.
    pub fn child(&self, index: u64) -> RngStream {
        let mixed = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x9E37)));
        RngStream::new(mixed, index)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `ln Γ(x)` without range checks. Small arguments go through
/// `Γ(x) = Γ(1 + x) / x`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    if x < SMALL_ARG {
        statrs::function::gamma::ln_gamma(1.0 + x) - x.ln()
    } else {
        statrs::function::gamma::ln_gamma(x)
    }
}

/// Checked `ln Γ(x)` for `x > 0`.
pub fn log_gamma_stable(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::domain(format!("ln Γ requires a finite positive argument, got {x}")));
    }
    Ok(ln_gamma(x))
}

/// `ln B(a, b)`.
#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log of a unit-rate Gamma(shape) variate. For `shape < 1` this uses the
/// boost `G(a) = G(a + 1) · U^{1/a}`, so the result stays finite even when
/// the variate itself would underflow.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("valid gamma").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("valid gamma").sample(rng);
        // 1 - U lies in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        g.ln() + u.ln() / shape
    }
}

/// Gamma(shape, rate) draw; mean `shape / rate`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(Error::domain(format!("gamma requires shape, rate > 0 (got {shape}, {rate})")));
    }
    Ok((sample_log_gamma(shape, rng) - rate.ln()).exp())
}

/// `(ln ν, ln(1 − ν))` for `ν ~ Beta(a, b)`.
pub fn sample_log_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, f64) {
    let la = sample_log_gamma(a, rng);
    let lb = sample_log_gamma(b, rng);
    let total = log_add_exp(la, lb);
    (la - total, lb - total)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("beta requires a, b > 0 (got {a}, {b})")));
    }
    Ok(sample_log_beta(a, b, rng).0.exp())
}

/// Log-weights of a Dirichlet draw, normalised so that `log_sum_exp = 0`.
pub fn sample_log_dirichlet<R: Rng + ?Sized>(concentrations: &[f64], rng: &mut R) -> Vec<f64> {
    let mut logs: Vec<f64> = concentrations
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect();
    let total = log_sum_exp(&logs);
    for l in &mut logs {
        *l -= total;
    }
    logs
}

pub fn sample_dirichlet<R: Rng + ?Sized>(concentrations: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if concentrations.is_empty() {
        return Err(Error::domain("dirichlet requires at least one concentration"));
    }
    if let Some(bad) = concentrations.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::domain(format!("dirichlet concentration must be positive, got {bad}")));
    }
    let mut p: Vec<f64> = sample_log_dirichlet(concentrations, rng)
        .into_iter()
        .map(f64::exp)
        .collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    Ok(p)
}

/// Index drawn proportionally to nonnegative, unnormalised weights.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::domain(format!("categorical weight must be finite and >= 0, got {w}")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::domain("categorical weights are all zero"));
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = k;
            acc += w;
            if target < acc {
                return Ok(k);
            }
        }
    }
    Ok(last_positive)
}

/// Index drawn proportionally to `exp(log_weights)`. The slice is used as
/// scratch space and overwritten. Returns `None` if every entry is `-inf`
/// or any entry is NaN.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &mut [f64], rng: &mut R) -> Option<usize> {
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        if w.is_nan() {
            return None;
        }
        total += (*w - m).exp();
        *w = total;
    }
    let target = rng.random::<f64>() * total;
    // cumulative sums are nondecreasing
    let idx = log_weights.partition_point(|&c| c <= target);
    Some(idx.min(log_weights.len() - 1))
}

/// `ln(y!)`.
#[inline]
pub fn ln_factorial(y: u64) -> f64 {
    statrs::function::factorial::ln_factorial(y)
}

/// Sample mean and variance (unbiased).
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}
