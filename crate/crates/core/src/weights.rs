//! Stick-breaking weights for both model families and the slice thresholds
//! that let the infinite mixture be simulated with a finite truncation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::sample_log_beta;

pub const DEFAULT_KAPPA: f64 = 0.8;

/// Beta prior on the sticks: `ν_k ~ B(e0, (K−k) e0)` with `ν_K = 1` for a
/// finite mixture, `ν_k ~ B(1, α)` for a Dirichlet process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StickPrior {
    Finite { e0: f64, k: usize },
    Infinite { alpha: f64 },
}

/// Sticks and weights, stored in log space. `log_rest[k] = ln(1 − ν_k)`.
#[derive(Clone, Debug, Default)]
pub struct WeightState {
    log_sticks: Vec<f64>,
    log_rest: Vec<f64>,
    log_weights: Vec<f64>,
    /// `ln(1 − Σ_k η_k)` over the current truncation.
    log_residual: f64,
}

impl WeightState {
    pub fn from_log_sticks(log_sticks: Vec<f64>, log_rest: Vec<f64>) -> Self {
        debug_assert_eq!(log_sticks.len(), log_rest.len());
        let mut ws = WeightState {
            log_sticks: Vec::with_capacity(log_sticks.len()),
            log_rest: Vec::with_capacity(log_sticks.len()),
            log_weights: Vec::with_capacity(log_sticks.len()),
            log_residual: 0.0,
        };
        for (ls, lr) in log_sticks.into_iter().zip(log_rest) {
            ws.push_stick(ls, lr);
        }
        ws
    }

    /// Append one stick given `ln ν` and `ln(1 − ν)`.
    pub fn push_stick(&mut self, log_stick: f64, log_rest: f64) {
        self.log_weights.push(self.log_residual + log_stick);
        self.log_residual += log_rest;
        self.log_sticks.push(log_stick);
        self.log_rest.push(log_rest);
    }

    pub fn truncate(&mut self, len: usize) {
        self.log_sticks.truncate(len);
        self.log_rest.truncate(len);
        self.log_weights.truncate(len);
        self.log_residual = self.log_rest.iter().sum();
    }

    pub fn truncation(&self) -> usize {
        self.log_weights.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn sticks(&self) -> Vec<f64> {
        self.log_sticks.iter().map(|l| l.exp()).collect()
    }

    /// Mass not yet assigned to any of the current components.
    pub fn residual(&self) -> f64 {
        self.log_residual.exp()
    }

    pub fn log_residual(&self) -> f64 {
        self.log_residual
    }
}

/// `η_1 = ν_1`, `η_k = ν_k Π_{j<k} (1 − ν_j)`.
pub fn sticks_to_weights(sticks: &[f64]) -> Result<Vec<f64>> {
    let mut rest = 1.0;
    let mut out = Vec::with_capacity(sticks.len());
    for &v in sticks {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::domain(format!("stick {v} is outside (0, 1]")));
        }
        out.push(v * rest);
        rest *= 1.0 - v;
    }
    Ok(out)
}

/// Inverse of [`sticks_to_weights`]: `ν_k = η_k / (1 − Σ_{j<k} η_j)`.
pub fn weights_to_sticks(weights: &[f64]) -> Vec<f64> {
    let mut used = 0.0;
    weights
        .iter()
        .map(|&w| {
            let v = w / (1.0 - used);
            used += w;
            v.min(1.0)
        })
        .collect()
}

/// Draw the sticks from their full conditional given occupancy counts,
/// `ν_k | S ~ B(a_k + N_k, b_k + Σ_{l>k} N_l)`. For the finite family the
/// last stick is fixed at one so the weights sum to one.
pub fn sample_sticks_posterior<R: Rng + ?Sized>(
    counts: &[usize],
    prior: StickPrior,
    rng: &mut R,
) -> WeightState {
    let len = match prior {
        StickPrior::Finite { k, .. } => k,
        StickPrior::Infinite { .. } => counts.len(),
    };
    let mut tail: usize = counts.iter().take(len).sum();
    let mut ws = WeightState {
        log_sticks: Vec::with_capacity(len),
        log_rest: Vec::with_capacity(len),
        log_weights: Vec::with_capacity(len),
        log_residual: 0.0,
    };
    for j in 0..len {
        let nk = counts.get(j).copied().unwrap_or(0);
        tail -= nk;
        let (a, b) = match prior {
            StickPrior::Finite { e0, k } => (e0 + nk as f64, (k - j - 1) as f64 * e0 + tail as f64),
            StickPrior::Infinite { alpha } => (1.0 + nk as f64, alpha + tail as f64),
        };
        if b <= 0.0 {
            // last finite stick
            ws.push_stick(0.0, f64::NEG_INFINITY);
        } else {
            let (ls, lr) = sample_log_beta(a, b, rng);
            ws.push_stick(ls, lr);
        }
    }
    ws
}

/// Slice thresholds ξ_k. Finite mixtures use ξ_k ≡ 1 (no truncation);
/// the Dirichlet process uses ξ_k = (1 − κ) κ^{k−1}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SliceMode {
    Finite,
    Infinite { kappa: f64 },
}

pub fn slice_thresholds(mode: SliceMode, len: usize) -> Result<Vec<f64>> {
    match mode {
        SliceMode::Finite => Ok(vec![1.0; len]),
        SliceMode::Infinite { kappa } => {
            check_kappa(kappa)?;
            Ok((0..len).map(|k| slice_threshold(kappa, k)).collect())
        }
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    Ok(())
}

/// ξ for the zero-based component index `k`.
#[inline]
pub fn slice_threshold(kappa: f64, k: usize) -> f64 {
    (1.0 - kappa) * kappa.powi(k as i32)
}

/// Number of leading components with ξ_k > u.
pub fn slice_coverage(kappa: f64, u: f64) -> usize {
    if u >= 1.0 - kappa {
        return 0;
    }
    let guess = ((u / (1.0 - kappa)).ln() / kappa.ln()).ceil().max(0.0) as usize;
    // fix up rounding at the boundary
    let mut k = guess.saturating_sub(1);
    while slice_threshold(kappa, k) > u {
        k += 1;
    }
    k
}

/// Smallest K* with `1 − Σ_{k≤K*} η_k < slice_minimum`, or `None` if the
/// given weights never get there.
pub fn required_truncation(weights: &[f64], slice_minimum: f64) -> Option<usize> {
    let mut used = 0.0;
    for (k, w) in weights.iter().enumerate() {
        used += w;
        if 1.0 - used < slice_minimum {
            return Some(k + 1);
        }
    }
    None
}

/// Hard bound on the number of sticks drawn for the residual rule.
pub fn truncation_cap(alpha: f64, n_obs: usize) -> usize {
    10 * (alpha * (n_obs.max(2) as f64).ln()).ceil().max(0.0) as usize + 50
}

/// Grow a Dirichlet-process weight vector with prior sticks `B(1, α)`
/// until the residual mass falls below `slice_minimum`. Returns the number
/// of sticks added.
pub fn extend_to_residual<R: Rng + ?Sized>(
    ws: &mut WeightState,
    alpha: f64,
    slice_minimum: f64,
    cap: usize,
    rng: &mut R,
) -> Result<usize> {
    let target = slice_minimum.ln();
    let mut added = 0;
    while !(ws.log_residual < target) {
        if ws.truncation() >= cap {
            return Err(Error::Numerical {
                sweep: 0,
                message: format!(
                    "stick-breaking truncation exceeded cap {cap} (alpha = {alpha}, slice minimum = {slice_minimum:e})"
                ),
            });
        }
        let (ls, lr) = sample_log_beta(1.0, alpha, rng);
        ws.push_stick(ls, lr);
        added += 1;
    }
    Ok(added)
}

/// Append `n` prior sticks `B(1, α)`.
pub fn extend_by<R: Rng + ?Sized>(ws: &mut WeightState, alpha: f64, n: usize, rng: &mut R) {
    for _ in 0..n {
        let (ls, lr) = sample_log_beta(1.0, alpha, rng);
        ws.push_stick(ls, lr);
    }
}
