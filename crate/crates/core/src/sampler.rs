//! Unified stick-breaking Gibbs sampler for sparse finite mixtures and
//! Dirichlet process mixtures.
//!
//! One sweep runs (a) component parameters, (b) sticks, (c) allocations and
//! (d) a Metropolis step on the precision parameter. The finite family draws
//! allocations directly; the infinite family uses slice variables with
//! deterministic thresholds ξ_k so only finitely many components are ever
//! instantiated.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::math::{log_sum_exp, sample_log_categorical, RngStream};
use crate::partitions::{log_prior_partition_dpm, log_prior_partition_sfm, AllocationState};
use crate::weights::{
    extend_to_residual, sample_sticks_posterior, slice_coverage, slice_threshold, truncation_cap, StickPrior,
    WeightState, DEFAULT_KAPPA,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    /// Finite mixture with `K` components and weights `Dir_K(e0)`.
    Sfm { k: usize },
    /// Dirichlet process mixture with concentration α.
    Dpm,
}

/// Prior on the precision parameter (e0 for the finite family, α for the
/// Dirichlet process).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PrecisionPrior {
    Gamma { shape: f64, rate: f64 },
    /// `U(0, upper)`; typically `upper = d/2` with d the component dimension.
    Uniform { upper: f64 },
    Fixed(f64),
}

impl PrecisionPrior {
    fn validate(&self) -> Result<()> {
        match *self {
            PrecisionPrior::Gamma { shape, rate } if !(shape > 0.0 && rate > 0.0) => {
                Err(Error::domain("gamma precision prior needs positive shape and rate"))
            }
            PrecisionPrior::Uniform { upper } if !(upper > 0.0 && upper.is_finite()) => {
                Err(Error::domain("uniform precision prior needs a positive finite upper bound"))
            }
            PrecisionPrior::Fixed(v) if !(v > 0.0 && v.is_finite()) => Err(Error::domain("fixed precision must be positive")),
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PrecisionPrior::Gamma { shape, rate } => shape / rate,
            PrecisionPrior::Uniform { upper } => upper / 2.0,
            PrecisionPrior::Fixed(v) => v,
        }
    }

    /// Log density up to a constant; `-inf` outside the support.
    pub fn log_density(&self, v: f64) -> f64 {
        if !(v > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            PrecisionPrior::Gamma { shape, rate } => (shape - 1.0) * v.ln() - rate * v,
            PrecisionPrior::Uniform { upper } => {
                if v < upper {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            PrecisionPrior::Fixed(x) => {
                if v == x {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PrecisionPrior::Gamma { shape, rate } => (crate::math::sample_log_gamma(shape, rng) - rate.ln()).exp(),
            PrecisionPrior::Uniform { upper } => upper * rng.random::<f64>(),
            PrecisionPrior::Fixed(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchDirection {
    SfmToDpm,
    DpmToSfm,
}

/// Provenance of a prior obtained by [`match_prior`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchRecord {
    pub direction: MatchDirection,
    pub source_shape: f64,
    pub source_rate: f64,
    pub k: usize,
}

/// `e0 ~ G(a, b)` for K components corresponds to `α ~ G(a, b/K)`, and
/// `α ~ G(a, b)` to `e0 ~ G(a, bK)`.
pub fn match_prior(direction: MatchDirection, shape: f64, rate: f64, k: usize) -> Result<(f64, f64)> {
    if !(shape > 0.0 && rate > 0.0) || k == 0 {
        return Err(Error::domain("prior matching needs a, b > 0 and K >= 1"));
    }
    Ok(match direction {
        MatchDirection::SfmToDpm => (shape, rate / k as f64),
        MatchDirection::DpmToSfm => (shape, rate * k as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub precision_prior: PrecisionPrior,
    pub matched_from: Option<MatchRecord>,
}

impl ModelSpec {
    pub fn new(family: Family, precision_prior: PrecisionPrior) -> Result<Self> {
        if let Family::Sfm { k: 0 } = family {
            return Err(Error::domain("a finite mixture needs K >= 1"));
        }
        precision_prior.validate()?;
        Ok(ModelSpec {
            family,
            precision_prior,
            matched_from: None,
        })
    }

    pub fn sfm(k: usize, precision_prior: PrecisionPrior) -> Result<Self> {
        Self::new(Family::Sfm { k }, precision_prior)
    }

    pub fn dpm(precision_prior: PrecisionPrior) -> Result<Self> {
        Self::new(Family::Dpm, precision_prior)
    }

    /// DPM whose α prior matches the finite-mixture prior `e0 ~ G(a, b)` at K.
    pub fn dpm_matched_to_sfm(shape: f64, rate: f64, k: usize) -> Result<Self> {
        let (a, b) = match_prior(MatchDirection::SfmToDpm, shape, rate, k)?;
        let mut spec = Self::dpm(PrecisionPrior::Gamma { shape: a, rate: b })?;
        spec.matched_from = Some(MatchRecord {
            direction: MatchDirection::SfmToDpm,
            source_shape: shape,
            source_rate: rate,
            k,
        });
        Ok(spec)
    }

    /// Finite mixture with K components whose e0 prior matches `α ~ G(a, b)`.
    pub fn sfm_matched_to_dpm(shape: f64, rate: f64, k: usize) -> Result<Self> {
        let (a, b) = match_prior(MatchDirection::DpmToSfm, shape, rate, k)?;
        let mut spec = Self::sfm(k, PrecisionPrior::Gamma { shape: a, rate: b })?;
        spec.matched_from = Some(MatchRecord {
            direction: MatchDirection::DpmToSfm,
            source_shape: shape,
            source_rate: rate,
            k,
        });
        Ok(spec)
    }
}

const PRECISION_BATCH: u64 = 50;

/// Current precision value and its random-walk proposal on the log scale.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionState {
    pub value: f64,
    pub proposal_scale: f64,
    pub accept_count: u64,
    pub attempt_count: u64,
    batch_accept: u64,
    batch_attempt: u64,
}

impl PrecisionState {
    pub fn new(value: f64) -> Self {
        PrecisionState {
            value,
            proposal_scale: 0.5,
            accept_count: 0,
            attempt_count: 0,
            batch_accept: 0,
            batch_attempt: 0,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempt_count == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.attempt_count as f64
        }
    }

    /// Batch adaptation toward 20–50% acceptance.
    pub fn adapt(&mut self) {
        if self.batch_attempt < PRECISION_BATCH {
            return;
        }
        let rate = self.batch_accept as f64 / self.batch_attempt as f64;
        if rate < 0.2 {
            self.proposal_scale *= 0.8;
        } else if rate > 0.5 {
            self.proposal_scale *= 1.25;
        }
        self.proposal_scale = self.proposal_scale.clamp(1e-3, 20.0);
        self.batch_accept = 0;
        self.batch_attempt = 0;
    }
}

/// Log of `p(𝒞 | v) p(v) v`, the target of the precision update on the
/// log scale. `counts` may contain zeros.
pub fn log_precision_target(counts: &[usize], family: Family, prior: PrecisionPrior, v: f64) -> f64 {
    let hyper = prior.log_density(v);
    if hyper == f64::NEG_INFINITY {
        return hyper;
    }
    let partition = match family {
        Family::Sfm { k } => log_prior_partition_sfm(counts, v, k).unwrap_or(f64::NEG_INFINITY),
        Family::Dpm => log_prior_partition_dpm(counts, v),
    };
    partition + hyper + v.ln()
}

/// One random-walk Metropolis step on `ln v`. Fixed priors are a no-op.
pub fn mh_precision<R: Rng + ?Sized>(
    state: &mut PrecisionState,
    counts: &[usize],
    family: Family,
    prior: PrecisionPrior,
    rng: &mut R,
) {
    if let PrecisionPrior::Fixed(v) = prior {
        state.value = v;
        return;
    }
    let z: f64 = StandardNormal.sample(rng);
    let proposal = (state.value.ln() + state.proposal_scale * z).exp();
    state.attempt_count += 1;
    state.batch_attempt += 1;
    if !(proposal > 0.0 && proposal.is_finite()) {
        return;
    }
    let current = log_precision_target(counts, family, prior, state.value);
    let proposed = log_precision_target(counts, family, prior, proposal);
    if proposed == f64::NEG_INFINITY || proposed.is_nan() {
        return;
    }
    let log_u = rng.random::<f64>().ln();
    if log_u < proposed - current || current == f64::NEG_INFINITY {
        state.value = proposal;
        state.accept_count += 1;
        state.batch_accept += 1;
    }
}

/// Run configuration for one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub n_burnin: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub seed: u64,
    /// Initial number of groups; defaults to K for the finite family and
    /// `min(10, N)` for the Dirichlet process.
    pub init_k: Option<usize>,
    pub record_allocations: bool,
    /// Keep every component's parameters and weight, not only the occupied
    /// ones (needed by bridge sampling).
    pub record_full_state: bool,
    /// Adapt Metropolis proposal scales during burn-in.
    pub adapt: bool,
    pub kappa: f64,
    #[doc(hidden)]
    pub likelihood: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_burnin: 8000,
            n_keep: 8000,
            thin: 1,
            seed: 0,
            init_k: None,
            record_allocations: true,
            record_full_state: false,
            adapt: true,
            kappa: DEFAULT_KAPPA,
            likelihood: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentDraw<P> {
    /// Sampler-internal component index (zero-based, unidentified).
    pub component: usize,
    pub weight: f64,
    pub size: usize,
    pub params: P,
}

/// All K components of a finite-mixture state.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState<P> {
    pub log_weights: Vec<f64>,
    pub params: Vec<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord<P> {
    pub sweep: usize,
    pub kplus: usize,
    pub precision: f64,
    /// Observed-data mixture log-likelihood at this sweep's parameters.
    pub loglik: f64,
    /// Non-empty components in increasing index order.
    pub components: Vec<ComponentDraw<P>>,
    pub allocations: Option<Vec<u32>>,
    pub full: Option<FullState<P>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrace<P> {
    pub family: Family,
    pub n_obs: usize,
    pub records: Vec<SweepRecord<P>>,
    pub precision_acceptance: f64,
}

impl<P> ChainTrace<P> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn kplus(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.kplus).collect()
    }

    pub fn precision(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.precision).collect()
    }

    pub fn mean_precision(&self) -> f64 {
        self.records.iter().map(|r| r.precision).sum::<f64>() / self.records.len().max(1) as f64
    }
}

fn at_sweep(err: Error, sweep: usize) -> Error {
    match err {
        Error::Numerical { message, .. } => Error::Numerical { sweep, message },
        Error::Domain(message) => Error::Numerical { sweep, message },
        other => other,
    }
}

/// Sampler state for one chain. The kernel is passed to every call so the
/// data can change between sweeps (as in joint-distribution tests).
#[derive(Clone, Debug)]
pub struct Chain<K: Kernel> {
    spec: ModelSpec,
    alloc: AllocationState,
    thetas: Vec<K::Params>,
    weights: WeightState,
    precision: PrecisionState,
    kernel_state: K::State,
    sweeps_done: usize,
    kappa: f64,
    likelihood: bool,
    loglik: f64,
}

impl<K: Kernel> Chain<K> {
    pub fn initialize<R: Rng + ?Sized>(
        kernel: &K,
        spec: &ModelSpec,
        init_k: usize,
        cfg: &SamplerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let n = kernel.n_obs();
        if init_k < 1 {
            return Err(Error::domain("init_k must be at least 1"));
        }
        if n == 0 {
            return Err(Error::Data("cannot fit a mixture to an empty dataset".into()));
        }
        if init_k > n {
            return Err(Error::domain(format!("init_k = {init_k} exceeds N = {n}")));
        }
        if !(cfg.kappa > 0.0 && cfg.kappa < 1.0) {
            return Err(Error::domain("kappa must lie in (0, 1)"));
        }
        let n_components = match spec.family {
            Family::Sfm { k } => {
                if init_k > k {
                    return Err(Error::domain(format!("init_k = {init_k} exceeds K = {k}")));
                }
                k
            }
            Family::Dpm => init_k + 5,
        };
        let labels = kernel.initial_labels(init_k, rng);
        let alloc = AllocationState::new(labels, n_components)?;
        let mut kernel_state = kernel.initial_state();
        let members = alloc.members();
        let mut thetas = Vec::with_capacity(n_components);
        for m in &members {
            let theta = if m.is_empty() || !cfg.likelihood {
                kernel.sample_prior(&kernel_state, rng)
            } else {
                kernel.initial_params(m, &mut kernel_state, rng)?
            };
            thetas.push(theta);
        }
        let precision = PrecisionState::new(spec.precision_prior.mean());
        let weights = sample_sticks_posterior(alloc.counts(), stick_prior(spec.family, precision.value), rng);
        Ok(Chain {
            spec: *spec,
            alloc,
            thetas,
            weights,
            precision,
            kernel_state,
            sweeps_done: 0,
            kappa: cfg.kappa,
            likelihood: cfg.likelihood,
            loglik: f64::NAN,
        })
    }

    pub fn allocations(&self) -> &AllocationState {
        &self.alloc
    }

    pub fn params(&self) -> &[K::Params] {
        &self.thetas
    }

    pub fn weights(&self) -> &WeightState {
        &self.weights
    }

    pub fn precision(&self) -> &PrecisionState {
        &self.precision
    }

    pub fn kernel_state(&self) -> &K::State {
        &self.kernel_state
    }

    pub fn kplus(&self) -> usize {
        self.alloc.kplus()
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Mixture log-likelihood computed during the last allocation step.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// One full sweep. With `adapt`, proposal scales are tuned afterwards.
    pub fn sweep<R: Rng + ?Sized>(&mut self, kernel: &K, rng: &mut R, adapt: bool) -> Result<()> {
        let sweep = self.sweeps_done;
        let result = match self.spec.family {
            Family::Sfm { k } => self.sweep_sfm(kernel, k, rng),
            Family::Dpm => self.sweep_dpm(kernel, rng),
        };
        result.map_err(|e| at_sweep(e, sweep))?;
        mh_precision(
            &mut self.precision,
            self.alloc.counts(),
            self.spec.family,
            self.spec.precision_prior,
            rng,
        );
        if adapt {
            self.precision.adapt();
            kernel.adapt(&mut self.kernel_state);
        }
        debug_assert!(self.alloc.counts_consistent());
        self.sweeps_done += 1;
        Ok(())
    }

    /// Step (a): complete-data draws for occupied components, the shared
    /// hyperparameters given those, then prior draws for empty components.
    fn update_params<R: Rng + ?Sized>(&mut self, kernel: &K, rng: &mut R) -> Result<()> {
        let members = self.alloc.members();
        if self.likelihood {
            for (theta, m) in self.thetas.iter_mut().zip(&members) {
                if !m.is_empty() {
                    *theta = kernel.sample_conditional(m, theta, &mut self.kernel_state, rng)?;
                }
            }
            let occupied: Vec<&K::Params> = self
                .thetas
                .iter()
                .zip(&members)
                .filter(|(_, m)| !m.is_empty())
                .map(|(t, _)| t)
                .collect();
            kernel.update_shared(&occupied, &mut self.kernel_state, rng);
            for (theta, m) in self.thetas.iter_mut().zip(&members) {
                if m.is_empty() {
                    *theta = kernel.sample_prior(&self.kernel_state, rng);
                }
            }
        } else {
            for theta in self.thetas.iter_mut() {
                *theta = kernel.sample_prior(&self.kernel_state, rng);
            }
        }
        Ok(())
    }

    #[inline]
    fn obs_loglik(&self, kernel: &K, k: usize, i: usize) -> f64 {
        if self.likelihood {
            kernel.log_lik(&self.thetas[k], i)
        } else {
            0.0
        }
    }

    fn sweep_sfm<R: Rng + ?Sized>(&mut self, kernel: &K, k: usize, rng: &mut R) -> Result<()> {
        self.update_params(kernel, rng)?;
        self.weights = sample_sticks_posterior(self.alloc.counts(), StickPrior::Finite { e0: self.precision.value, k }, rng);
        let n = self.alloc.n_obs();
        let mut scratch = vec![0.0; k];
        let mut loglik = 0.0;
        let log_w = self.weights.log_weights().to_vec();
        for i in 0..n {
            for c in 0..k {
                scratch[c] = log_w[c] + self.obs_loglik(kernel, c, i);
            }
            loglik += log_sum_exp(&scratch);
            let new = sample_log_categorical(&mut scratch, rng).ok_or_else(|| Error::Numerical {
                sweep: 0,
                message: format!("allocation probabilities for observation {i} are all zero or non-finite"),
            })?;
            self.alloc.reassign(i, new);
        }
        self.loglik = loglik;
        Ok(())
    }

    fn sweep_dpm<R: Rng + ?Sized>(&mut self, kernel: &K, rng: &mut R) -> Result<()> {
        let alpha = self.precision.value;
        let occupied_len = self.alloc.max_occupied().map_or(0, |m| m + 1);
        self.alloc.resize_components(occupied_len)?;
        self.thetas.truncate(occupied_len);

        self.update_params(kernel, rng)?;
        self.weights = sample_sticks_posterior(self.alloc.counts(), StickPrior::Infinite { alpha }, rng);

        // (c-1) slice variables u_i ~ U(0, ξ_{S_i}), strictly inside
        let n = self.alloc.n_obs();
        let mut u = Vec::with_capacity(n);
        for i in 0..n {
            let xi = slice_threshold(self.kappa, self.alloc.label(i));
            let mut r: f64 = rng.random();
            while r == 0.0 {
                r = rng.random();
            }
            u.push(xi * r);
        }
        let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
        let covered = slice_coverage(self.kappa, u_min);
        let cap = truncation_cap(alpha, n).max(covered);
        if let Err(e) = extend_to_residual(&mut self.weights, alpha, u_min, cap, rng) {
            log::debug!("residual rule stopped at the cap: {e}");
        }
        while self.weights.truncation() < covered {
            crate::weights::extend_by(&mut self.weights, alpha, 1, rng);
        }
        let len = self.weights.truncation();
        self.alloc.resize_components(len)?;
        while self.thetas.len() < len {
            self.thetas.push(kernel.sample_prior(&self.kernel_state, rng));
        }

        // (c-2) S_i ∝ 1{u_i < ξ_k} / ξ_k · η_k f(y_i | θ_k)
        let log_w = self.weights.log_weights().to_vec();
        let log_xi: Vec<f64> = (0..len).map(|k| slice_threshold(self.kappa, k).ln()).collect();
        let mut scratch = Vec::with_capacity(len);
        let mut mix = vec![0.0; len];
        let mut loglik = 0.0;
        for i in 0..n {
            let cand = slice_coverage(self.kappa, u[i]).min(len);
            scratch.clear();
            for c in 0..len {
                let ll = self.obs_loglik(kernel, c, i);
                mix[c] = log_w[c] + ll;
                if c < cand {
                    scratch.push(log_w[c] - log_xi[c] + ll);
                }
            }
            loglik += log_sum_exp(&mix);
            let new = sample_log_categorical(&mut scratch, rng).ok_or_else(|| Error::Numerical {
                sweep: 0,
                message: format!("slice allocation for observation {i} has no admissible component"),
            })?;
            self.alloc.reassign(i, new);
        }
        self.loglik = loglik;
        Ok(())
    }

    pub fn record(&self, record_allocations: bool, record_full: bool) -> SweepRecord<K::Params> {
        let counts = self.alloc.counts();
        let log_w = self.weights.log_weights();
        let components = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| ComponentDraw {
                component: k,
                weight: log_w[k].exp(),
                size: c,
                params: self.thetas[k].clone(),
            })
            .collect();
        SweepRecord {
            sweep: self.sweeps_done,
            kplus: self.alloc.kplus(),
            precision: self.precision.value,
            loglik: self.loglik,
            components,
            allocations: record_allocations.then(|| self.alloc.labels().iter().map(|&l| l as u32).collect()),
            full: record_full.then(|| FullState {
                log_weights: log_w.to_vec(),
                params: self.thetas.clone(),
            }),
        }
    }
}

fn stick_prior(family: Family, value: f64) -> StickPrior {
    match family {
        Family::Sfm { k } => StickPrior::Finite { e0: value, k },
        Family::Dpm => StickPrior::Infinite { alpha: value },
    }
}

fn default_init_k(family: Family, n: usize) -> usize {
    match family {
        Family::Sfm { k } => k.min(n),
        Family::Dpm => 10.min(n),
    }
}

/// Run one chain on the RNG stream `(cfg.seed, stream)`.
pub fn run_chain_on_stream<K: Kernel>(
    kernel: &K,
    spec: &ModelSpec,
    cfg: &SamplerConfig,
    stream: u64,
) -> Result<ChainTrace<K::Params>> {
    if cfg.n_keep < 1 {
        return Err(Error::domain("n_keep must be at least 1"));
    }
    if cfg.thin < 1 {
        return Err(Error::domain("thin must be at least 1"));
    }
    let mut rng = RngStream::new(cfg.seed, stream);
    let init_k = cfg.init_k.unwrap_or_else(|| default_init_k(spec.family, kernel.n_obs()));
    let mut chain = Chain::initialize(kernel, spec, init_k, cfg, &mut rng)?;
    for s in 0..cfg.n_burnin {
        chain.sweep(kernel, &mut rng, cfg.adapt)?;
        if (s + 1) % 2000 == 0 {
            log::debug!("burn-in sweep {} of {}, K+ = {}", s + 1, cfg.n_burnin, chain.kplus());
        }
    }
    let mut records = Vec::with_capacity(cfg.n_keep);
    while records.len() < cfg.n_keep {
        for _ in 0..cfg.thin {
            chain.sweep(kernel, &mut rng, false)?;
        }
        if !chain.loglik.is_finite() && cfg.likelihood {
            return Err(Error::Numerical {
                sweep: chain.sweeps_done,
                message: "non-finite mixture log-likelihood".into(),
            });
        }
        records.push(chain.record(cfg.record_allocations, cfg.record_full_state));
    }
    Ok(ChainTrace {
        family: spec.family,
        n_obs: kernel.n_obs(),
        records,
        precision_acceptance: chain.precision.acceptance_rate(),
    })
}

/// Run one chain; deterministic given `cfg.seed`.
pub fn run_chain<K: Kernel>(kernel: &K, spec: &ModelSpec, cfg: &SamplerConfig) -> Result<ChainTrace<K::Params>> {
    run_chain_on_stream(kernel, spec, cfg, 0)
}

/// Independent chains on streams `0..n_chains`, run in parallel.
pub fn run_chains<K: Kernel>(
    kernel: &K,
    spec: &ModelSpec,
    cfg: &SamplerConfig,
    n_chains: usize,
) -> Result<Vec<ChainTrace<K::Params>>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain_on_stream(kernel, spec, cfg, c))
        .collect()
}

/// Concatenate chains into one trace with consecutive sweep indices.
pub fn pool_traces<P: Clone>(traces: &[ChainTrace<P>]) -> Option<ChainTrace<P>> {
    let first = traces.first()?;
    let mut records = Vec::new();
    for t in traces {
        for r in &t.records {
            let mut r = r.clone();
            r.sweep = records.len();
            records.push(r);
        }
    }
    let acc = traces.iter().map(|t| t.precision_acceptance).sum::<f64>() / traces.len() as f64;
    Some(ChainTrace {
        family: first.family,
        n_obs: first.n_obs,
        records,
        precision_acceptance: acc,
    })
}
