//! Marginal likelihoods `p(y | K)` for finite mixtures with conjugate
//! kernels.

use itertools::Itertools;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::ConjugateKernel;
use crate::math::{ln_gamma, log_add_exp, log_sum_exp, sample_log_dirichlet, RngStream};
use crate::partitions::{counts_of, log_prior_partition_sfm, SetPartitions};
use crate::sampler::{run_chain, ChainTrace, FullState, ModelSpec, PrecisionPrior, SamplerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvidenceMethod {
    Analytic,
    Enumeration,
    Bridge,
}

impl EvidenceMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvidenceMethod::Analytic => "analytic",
            EvidenceMethod::Enumeration => "enumeration",
            EvidenceMethod::Bridge => "bridge",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvidenceEstimate {
    pub log_value: f64,
    /// Zero for exact methods.
    pub std_error: f64,
    pub method: EvidenceMethod,
    pub k: usize,
}

impl EvidenceEstimate {
    pub fn is_exact(&self) -> bool {
        self.method != EvidenceMethod::Bridge
    }
}

/// Largest `K^N` accepted by [`log_evidence_enumeration`].
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Closed-form evidence of the one-component model.
pub fn log_evidence_k1<K: ConjugateKernel>(kernel: &K) -> Result<EvidenceEstimate> {
    kernel.check_conjugate()?;
    let all: Vec<usize> = (0..kernel.n_obs()).collect();
    Ok(EvidenceEstimate {
        log_value: kernel.log_marginal(&all),
        std_error: 0.0,
        method: EvidenceMethod::Analytic,
        k: 1,
    })
}

/// Exact evidence by summing `p(y | S) p(S | e0, K)` over every allocation.
///
/// Labelled allocations that induce the same set partition share both
/// factors, so the sum runs over set partitions with at most K blocks
/// weighted by the partition prior.
pub fn log_evidence_enumeration<K: ConjugateKernel>(kernel: &K, k: usize, e0: f64) -> Result<EvidenceEstimate> {
    kernel.check_conjugate()?;
    if k == 0 {
        return Err(Error::domain("K must be at least 1"));
    }
    let n = kernel.n_obs();
    if (k as f64).powf(n as f64) > ENUMERATION_LIMIT {
        return Err(Error::Unsupported(format!(
            "enumeration over K^N = {k}^{n} allocations exceeds the limit {ENUMERATION_LIMIT:e}"
        )));
    }
    if n == 0 {
        return Ok(EvidenceEstimate {
            log_value: 0.0,
            std_error: 0.0,
            method: EvidenceMethod::Enumeration,
            k,
        });
    }
    let mut terms = Vec::new();
    for labels in SetPartitions::new(n, k) {
        let blocks = labels.iter().copied().max().unwrap() + 1;
        let counts = counts_of(&labels, blocks);
        let mut members = vec![Vec::new(); blocks];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let lik: f64 = members.iter().map(|m| kernel.log_marginal(m)).sum();
        terms.push(lik + log_prior_partition_sfm(&counts, e0, k)?);
    }
    Ok(EvidenceEstimate {
        log_value: log_sum_exp(&terms),
        std_error: 0.0,
        method: EvidenceMethod::Enumeration,
        k,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BridgeOptions {
    /// Number of stored allocations used to build the importance density.
    pub s0: usize,
    /// Draws from the importance density; `None` uses as many as there are
    /// posterior draws.
    pub n_q_draws: Option<usize>,
    pub tolerance: f64,
    pub max_iter: usize,
    pub n_batches: usize,
    pub seed: u64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        BridgeOptions {
            s0: 100,
            n_q_draws: None,
            tolerance: 1e-6,
            max_iter: 1000,
            n_batches: 20,
            seed: 0,
        }
    }
}

/// Component posteriors and counts of one stored allocation.
struct Anchor<P> {
    counts: Vec<usize>,
    posts: Vec<P>,
}

struct BridgeModel<'a, K: ConjugateKernel> {
    kernel: &'a K,
    k: usize,
    e0: f64,
    anchors: Vec<Anchor<K::Posterior>>,
    perms: Vec<Vec<usize>>,
}

impl<K: ConjugateKernel> BridgeModel<'_, K> {
    fn log_dirichlet_prior(&self, log_w: &[f64]) -> f64 {
        let k = self.k as f64;
        ln_gamma(k * self.e0) - k * ln_gamma(self.e0) + (self.e0 - 1.0) * log_w.iter().sum::<f64>()
    }

    /// Unnormalised posterior `p(y | η, θ) p(η) Π p(θ_k)`.
    fn log_target(&self, point: &FullState<K::Params>) -> f64 {
        let n = self.kernel.n_obs();
        let mut scratch = vec![0.0; self.k];
        let mut lik = 0.0;
        for i in 0..n {
            for c in 0..self.k {
                scratch[c] = point.log_weights[c] + self.kernel.log_lik(&point.params[c], i);
            }
            lik += log_sum_exp(&scratch);
        }
        lik + self.log_dirichlet_prior(&point.log_weights)
            + point.params.iter().map(|p| self.kernel.log_prior_density(p)).sum::<f64>()
    }

    /// Importance density averaged over anchors and all label permutations.
    fn log_q(&self, point: &FullState<K::Params>) -> f64 {
        let k = self.k;
        let n = self.kernel.n_obs() as f64;
        let const_term = ln_gamma(k as f64 * self.e0 + n);
        let mut terms = Vec::with_capacity(self.anchors.len() * self.perms.len());
        let mut b = vec![0.0; k * k];
        for anchor in &self.anchors {
            for c in 0..k {
                for j in 0..k {
                    let a = self.e0 + anchor.counts[j] as f64;
                    b[c * k + j] = self.kernel.log_posterior_density(&anchor.posts[j], &point.params[c])
                        + (a - 1.0) * point.log_weights[c]
                        - ln_gamma(a);
                }
            }
            for perm in &self.perms {
                let s: f64 = perm.iter().enumerate().map(|(c, &j)| b[c * k + j]).sum();
                terms.push(const_term + s);
            }
        }
        log_sum_exp(&terms) - (terms.len() as f64).ln()
    }

    fn sample_q(&self, rng: &mut RngStream) -> FullState<K::Params> {
        use rand::Rng;
        let anchor = &self.anchors[rng.random_range(0..self.anchors.len())];
        let perm = &self.perms[rng.random_range(0..self.perms.len())];
        let conc: Vec<f64> = perm.iter().map(|&j| self.e0 + anchor.counts[j] as f64).collect();
        let log_weights = sample_log_dirichlet(&conc, rng);
        let params = perm.iter().map(|&j| self.kernel.sample_posterior(&anchor.posts[j], rng)).collect();
        FullState { log_weights, params }
    }
}

/// Fixed point of the optimal bridge, started from the geometric bridge.
/// `l1` are `ln p* − ln q` at posterior draws, `l2` at importance draws.
fn iterate_bridge(l1: &[f64], l2: &[f64], tolerance: f64, max_iter: usize) -> Result<f64> {
    let (nl, nm) = (l1.len() as f64, l2.len() as f64);
    let ln_s1 = (nl / (nl + nm)).ln();
    let ln_s2 = (nm / (nl + nm)).ln();
    let half2: Vec<f64> = l2.iter().map(|v| 0.5 * v).collect();
    let neg_half1: Vec<f64> = l1.iter().map(|v| -0.5 * v).collect();
    let mut log_r = log_sum_exp(&half2) - nm.ln() - (log_sum_exp(&neg_half1) - nl.ln());
    let mut num = vec![0.0; l2.len()];
    let mut den = vec![0.0; l1.len()];
    for _ in 0..max_iter {
        for (o, &v) in num.iter_mut().zip(l2) {
            *o = v - log_add_exp(ln_s1 + v, ln_s2 + log_r);
        }
        for (o, &v) in den.iter_mut().zip(l1) {
            *o = -log_add_exp(ln_s1 + v, ln_s2 + log_r);
        }
        let next = log_sum_exp(&num) - nm.ln() - (log_sum_exp(&den) - nl.ln());
        if !next.is_finite() {
            return Err(Error::Numerical {
                sweep: 0,
                message: "bridge sampling iteration diverged".into(),
            });
        }
        let delta = (next - log_r).abs();
        log_r = next;
        if delta < tolerance {
            return Ok(log_r);
        }
    }
    log::warn!("bridge sampling did not converge within {max_iter} iterations");
    Ok(log_r)
}

/// Full-permutation bridge sampling from a finite-mixture trace recorded
/// with full state and allocations at fixed `e0`.
pub fn log_evidence_bridge<K: ConjugateKernel>(
    kernel: &K,
    k: usize,
    e0: f64,
    trace: &ChainTrace<K::Params>,
    opts: &BridgeOptions,
) -> Result<EvidenceEstimate>
where
    K::Params: PartialEq,
{
    kernel.check_conjugate()?;
    if k == 1 {
        return log_evidence_k1(kernel);
    }
    if k == 0 || !(e0 > 0.0) {
        return Err(Error::domain("bridge sampling needs K >= 1 and e0 > 0"));
    }
    let draws: Vec<&FullState<K::Params>> = trace
        .records
        .iter()
        .map(|r| {
            r.full
                .as_ref()
                .filter(|f| f.params.len() == k)
                .ok_or_else(|| Error::domain("trace must record the full K-component state"))
        })
        .collect::<Result<_>>()?;
    let nl = draws.len();
    if nl < 2 * opts.n_batches.max(1) {
        return Err(Error::domain(format!("bridge sampling needs at least {} draws", 2 * opts.n_batches.max(1))));
    }
    if draws.iter().all(|d| d.params == draws[0].params && d.log_weights == draws[0].log_weights) {
        return Err(Error::Numerical {
            sweep: 0,
            message: "degenerate trace: every posterior draw is identical".into(),
        });
    }
    let s0 = opts.s0.clamp(1, nl);
    let n = kernel.n_obs();
    let mut anchors = Vec::with_capacity(s0);
    for j in 0..s0 {
        let r = &trace.records[j * nl / s0];
        let labels = r
            .allocations
            .as_ref()
            .ok_or_else(|| Error::domain("trace must record allocations"))?;
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l as usize].push(i);
        }
        debug_assert_eq!(labels.len(), n);
        anchors.push(Anchor {
            counts: members.iter().map(|m| m.len()).collect(),
            posts: members.iter().map(|m| kernel.posterior(m)).collect(),
        });
    }
    let model = BridgeModel {
        kernel,
        k,
        e0,
        anchors,
        perms: (0..k).permutations(k).collect(),
    };
    let nm = opts.n_q_draws.unwrap_or(nl).max(2 * opts.n_batches.max(1));
    let mut rng = RngStream::new(opts.seed, 0x00b2_1d9e);
    let q_draws: Vec<FullState<K::Params>> = (0..nm).map(|_| model.sample_q(&mut rng)).collect();
    let l1: Vec<f64> = draws.par_iter().map(|d| model.log_target(d) - model.log_q(d)).collect();
    let l2: Vec<f64> = q_draws.par_iter().map(|d| model.log_target(d) - model.log_q(d)).collect();
    if l1.iter().chain(&l2).any(|v| v.is_nan()) {
        return Err(Error::Numerical {
            sweep: 0,
            message: "NaN in bridge sampling log ratios".into(),
        });
    }
    let log_value = iterate_bridge(&l1, &l2, opts.tolerance, opts.max_iter)?;
    let nb = opts.n_batches.max(1);
    let std_error = if nb < 2 {
        0.0
    } else {
        let batch: Vec<f64> = (0..nb)
            .map(|b| {
                let a1 = &l1[b * nl / nb..(b + 1) * nl / nb];
                let a2 = &l2[b * nm / nb..(b + 1) * nm / nb];
                iterate_bridge(a1, a2, opts.tolerance, opts.max_iter)
            })
            .collect::<Result<_>>()?;
        let (_, var) = crate::math::mean_var(&batch);
        (var * nb as f64 / (nb - 1) as f64 / nb as f64).sqrt()
    };
    Ok(EvidenceEstimate {
        log_value,
        std_error,
        method: EvidenceMethod::Bridge,
        k,
    })
}

/// Sampler settings for the posterior draws feeding bridge sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeRun {
    pub n_burnin: usize,
    pub n_keep: usize,
    pub seed: u64,
    pub options: BridgeOptions,
}

impl Default for BridgeRun {
    fn default() -> Self {
        BridgeRun {
            n_burnin: 2000,
            n_keep: 5000,
            seed: 0,
            options: BridgeOptions::default(),
        }
    }
}

/// Run a fixed-`e0` finite-mixture chain and bridge-sample its evidence.
pub fn estimate_evidence_bridge<K: ConjugateKernel>(kernel: &K, k: usize, e0: f64, run: &BridgeRun) -> Result<EvidenceEstimate>
where
    K::Params: PartialEq,
{
    kernel.check_conjugate()?;
    if k == 1 {
        return log_evidence_k1(kernel);
    }
    let spec = ModelSpec::sfm(k, PrecisionPrior::Fixed(e0))?;
    let cfg = SamplerConfig {
        n_burnin: run.n_burnin,
        n_keep: run.n_keep,
        seed: run.seed,
        record_allocations: true,
        record_full_state: true,
        init_k: Some(k.min(kernel.n_obs())),
        ..SamplerConfig::default()
    };
    let trace = run_chain(kernel, &spec, &cfg)?;
    let mut opts = run.options.clone();
    opts.seed = opts.seed.wrapping_add(run.seed);
    log_evidence_bridge(kernel, k, e0, &trace, &opts)
}
