//! Component kernels: likelihood, complete-data posterior draws for occupied
//! components, and prior draws for empty ones.
//!
//! The sampler is generic over [`Kernel`]. Conjugate kernels additionally
//! implement [`ConjugateKernel`], which the marginal-likelihood estimators
//! need.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{CategoricalData, CountData, RegressionData};
use crate::error::{Error, Result};
use crate::math::{ln_factorial, ln_gamma, sample_gamma, sample_log_dirichlet, sample_log_gamma};

/// A component distribution family bound to a dataset.
pub trait Kernel: Send + Sync {
    /// Component-specific parameter θ_k.
    type Params: Clone + Debug + Send + Sync;
    /// State shared by all components: hierarchical hyperparameters and
    /// Metropolis proposal scales.
    type State: Clone + Debug + Send + Sync;

    fn name(&self) -> &'static str;

    fn n_obs(&self) -> usize;

    /// Dimension of θ_k.
    fn param_dim(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    /// Log density of observation `i` under θ.
    fn log_lik(&self, theta: &Self::Params, i: usize) -> f64;

    fn sample_prior<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> Self::Params;

    /// One draw (or one Metropolis transition) from `p(θ_k | S, y)` for the
    /// observations in `members`. `members` must be nonempty.
    fn sample_conditional<R: Rng + ?Sized>(
        &self,
        members: &[usize],
        current: &Self::Params,
        state: &mut Self::State,
        rng: &mut R,
    ) -> Result<Self::Params>;

    /// Starting value for a component that holds `members` at initialisation.
    fn initial_params<R: Rng + ?Sized>(
        &self,
        members: &[usize],
        state: &mut Self::State,
        rng: &mut R,
    ) -> Result<Self::Params> {
        let start = self.sample_prior(state, rng);
        self.sample_conditional(members, &start, state, rng)
    }

    /// Update shared hyperparameters given the parameters of the occupied
    /// components.
    fn update_shared<R: Rng + ?Sized>(&self, _occupied: &[&Self::Params], _state: &mut Self::State, _rng: &mut R) {}

    /// Called once per burn-in sweep when adaptation is enabled.
    fn adapt(&self, _state: &mut Self::State) {}

    /// Initial classification into `k` groups.
    fn initial_labels<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize>;

    /// Low-dimensional functional clustered during identification.
    fn functional(&self, theta: &Self::Params) -> Vec<f64>;

    fn summary_names(&self) -> Vec<String>;

    /// Interpretable parameter values, aligned with `summary_names`.
    fn summary(&self, theta: &Self::Params) -> Vec<f64>;

    /// Flat encoding used by trace sidecar files.
    fn flatten(&self, theta: &Self::Params) -> Vec<f64>;

    fn unflatten(&self, values: &[f64]) -> Result<Self::Params>;

    /// Sum of `log_lik` over `members`.
    fn subset_log_lik(&self, theta: &Self::Params, members: &[usize]) -> f64 {
        members.iter().map(|&i| self.log_lik(theta, i)).sum()
    }
}

/// Kernels with a closed-form complete-data posterior and marginal.
pub trait ConjugateKernel: Kernel {
    type Posterior: Clone + Debug + Send + Sync;

    /// Fails when the kernel is configured with a non-conjugate hierarchy.
    fn check_conjugate(&self) -> Result<()> {
        Ok(())
    }

    /// Complete-data posterior given `members`; the prior when empty.
    fn posterior(&self, members: &[usize]) -> Self::Posterior;

    fn log_posterior_density(&self, post: &Self::Posterior, theta: &Self::Params) -> f64;

    fn sample_posterior<R: Rng + ?Sized>(&self, post: &Self::Posterior, rng: &mut R) -> Self::Params;

    fn log_prior_density(&self, theta: &Self::Params) -> f64 {
        self.log_posterior_density(&self.posterior(&[]), theta)
    }

    /// `ln ∫ Π_{i∈members} f(y_i|θ) p(θ) dθ`.
    fn log_marginal(&self, members: &[usize]) -> f64;
}

fn empty_subset() -> Error {
    Error::domain("complete-data update called with an empty component; use a prior draw")
}

/// Split sorted indices into `k` contiguous rank groups.
fn rank_bins(order: &[usize], k: usize) -> Vec<usize> {
    let n = order.len();
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = (rank * k / n.max(1)).min(k.saturating_sub(1));
    }
    labels
}

// ---------------------------------------------------------------------------
// Latent class

/// Categorical probability tables of one latent class.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalParams {
    /// `probs[j][l] = π_{k,j,l}`.
    pub probs: Vec<Vec<f64>>,
    /// Flattened `ln π`, features concatenated.
    log_probs: Vec<f64>,
}

impl CategoricalParams {
    pub fn from_probs(probs: Vec<Vec<f64>>) -> Self {
        let log_probs = probs.iter().flatten().map(|p| p.ln()).collect();
        CategoricalParams { probs, log_probs }
    }

    fn from_log_probs(log_probs: Vec<Vec<f64>>) -> Self {
        let probs = log_probs
            .iter()
            .map(|f| f.iter().map(|l| l.exp()).collect())
            .collect();
        CategoricalParams {
            probs,
            log_probs: log_probs.into_iter().flatten().collect(),
        }
    }
}

/// Latent class kernel: independent categorical features given the class,
/// `π_{k,j} ~ Dir_{D_j}(g_{0,j})`.
#[derive(Clone, Debug)]
pub struct LatentClassKernel {
    data: CategoricalData,
    g0: Vec<f64>,
    offsets: Vec<usize>,
}

/// Dirichlet parameters per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalPosterior {
    pub alphas: Vec<Vec<f64>>,
}

impl LatentClassKernel {
    /// Symmetric prior with the same `g0` for every feature.
    pub fn new(data: CategoricalData, g0: f64) -> Result<Self> {
        let r = data.n_features();
        Self::with_feature_priors(data, vec![g0; r])
    }

    pub fn with_feature_priors(data: CategoricalData, g0: Vec<f64>) -> Result<Self> {
        if g0.len() != data.n_features() || g0.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::domain("one positive g0 per feature is required"));
        }
        let mut offsets = Vec::with_capacity(data.n_features());
        let mut acc = 0;
        for &d in data.cards() {
            offsets.push(acc);
            acc += d;
        }
        Ok(LatentClassKernel { data, g0, offsets })
    }

    pub fn data(&self) -> &CategoricalData {
        &self.data
    }

    fn category_counts(&self, members: &[usize]) -> Vec<Vec<usize>> {
        let mut counts: Vec<Vec<usize>> = self.data.cards().iter().map(|&d| vec![0; d]).collect();
        for &i in members {
            for (j, &c) in self.data.row(i).iter().enumerate() {
                counts[j][c as usize] += 1;
            }
        }
        counts
    }

    fn hamming(a: &[u16], b: &[u16]) -> usize {
        a.iter().zip(b).filter(|(x, y)| x != y).count()
    }
}

impl Kernel for LatentClassKernel {
    type Params = CategoricalParams;
    type State = ();

    fn name(&self) -> &'static str {
        "latent_class"
    }

    fn n_obs(&self) -> usize {
        self.data.n_obs()
    }

    fn param_dim(&self) -> usize {
        self.data.cards().iter().map(|d| d - 1).sum()
    }

    fn initial_state(&self) {}

    #[inline]
    fn log_lik(&self, theta: &CategoricalParams, i: usize) -> f64 {
        self.data
            .row(i)
            .iter()
            .zip(&self.offsets)
            .map(|(&c, &o)| theta.log_probs[o + c as usize])
            .sum()
    }

    fn sample_prior<R: Rng + ?Sized>(&self, _state: &(), rng: &mut R) -> CategoricalParams {
        self.sample_posterior(&self.posterior(&[]), rng)
    }

    fn sample_conditional<R: Rng + ?Sized>(
        &self,
        members: &[usize],
        _current: &CategoricalParams,
        _state: &mut (),
        rng: &mut R,
    ) -> Result<CategoricalParams> {
        if members.is_empty() {
            return Err(empty_subset());
        }
        Ok(self.sample_posterior(&self.posterior(members), rng))
    }

    fn initial_params<R: Rng + ?Sized>(&self, members: &[usize], _state: &mut (), rng: &mut R) -> Result<CategoricalParams> {
        if members.is_empty() {
            return Err(empty_subset());
        }
        Ok(self.sample_posterior(&self.posterior(members), rng))
    }

    /// k-modes on the code vectors (Hamming distance), seeded by D²
    /// sampling. Every group is guaranteed nonempty.
    fn initial_labels<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        let n = self.n_obs();
        let k = k.clamp(1, n.max(1));
        let r = self.data.n_features();
        let mut modes: Vec<Vec<u16>> = Vec::with_capacity(k);
        modes.push(self.data.row(rng.random_range(0..n)).to_vec());
        while modes.len() < k {
            let d2: Vec<f64> = (0..n)
                .map(|i| {
                    let d = modes.iter().map(|m| Self::hamming(self.data.row(i), m)).min().unwrap();
                    (d * d) as f64
                })
                .collect();
            let pick = crate::math::sample_categorical(&d2, rng).unwrap_or_else(|_| rng.random_range(0..n));
            modes.push(self.data.row(pick).to_vec());
        }
        let mut labels = vec![0usize; n];
        for _ in 0..20 {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let row = self.data.row(i);
                let best = (0..k).min_by_key(|&c| Self::hamming(row, &modes[c])).unwrap();
                if *label != best {
                    *label = best;
                    changed = true;
                }
            }
            for (c, mode) in modes.iter_mut().enumerate() {
                for j in 0..r {
                    let mut freq = vec![0usize; self.data.cards()[j]];
                    for i in (0..n).filter(|&i| labels[i] == c) {
                        freq[self.data.row(i)[j] as usize] += 1;
                    }
                    if freq.iter().any(|&f| f > 0) {
                        mode[j] = (0..freq.len()).max_by_key(|&l| (freq[l], std::cmp::Reverse(l))).unwrap() as u16;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        fill_empty_groups(&mut labels, k);
        labels
    }

    fn functional(&self, theta: &CategoricalParams) -> Vec<f64> {
        theta.probs.iter().flatten().copied().collect()
    }

    fn summary_names(&self) -> Vec<String> {
        self.data
            .names()
            .iter()
            .zip(self.data.cards())
            .flat_map(|(name, &d)| (1..=d).map(move |l| format!("{name}[{l}]")))
            .collect()
    }

    fn summary(&self, theta: &CategoricalParams) -> Vec<f64> {
        self.functional(theta)
    }

    fn flatten(&self, theta: &CategoricalParams) -> Vec<f64> {
        self.functional(theta)
    }

    fn unflatten(&self, values: &[f64]) -> Result<CategoricalParams> {
        let total: usize = self.data.cards().iter().sum();
        if values.len() != total {
            return Err(Error::Data(format!("expected {total} probabilities, got {}", values.len())));
        }
        let probs = self
            .offsets
            .iter()
            .zip(self.data.cards())
            .map(|(&o, &d)| values[o..o + d].to_vec())
            .collect();
        Ok(CategoricalParams::from_probs(probs))
    }
}

impl ConjugateKernel for LatentClassKernel {
    type Posterior = CategoricalPosterior;

    fn posterior(&self, members: &[usize]) -> CategoricalPosterior {
        let counts = self.category_counts(members);
        CategoricalPosterior {
            alphas: counts
                .iter()
                .zip(&self.g0)
                .map(|(c, &g)| c.iter().map(|&x| g + x as f64).collect())
                .collect(),
        }
    }

    fn log_posterior_density(&self, post: &CategoricalPosterior, theta: &CategoricalParams) -> f64 {
        let mut total = 0.0;
        for (j, alphas) in post.alphas.iter().enumerate() {
            let o = self.offsets[j];
            total += ln_gamma(alphas.iter().sum());
            for (l, &a) in alphas.iter().enumerate() {
                total -= ln_gamma(a);
                if a != 1.0 {
                    total += (a - 1.0) * theta.log_probs[o + l];
                }
            }
        }
        total
    }

    fn sample_posterior<R: Rng + ?Sized>(&self, post: &CategoricalPosterior, rng: &mut R) -> CategoricalParams {
        CategoricalParams::from_log_probs(post.alphas.iter().map(|a| sample_log_dirichlet(a, rng)).collect())
    }

    fn log_marginal(&self, members: &[usize]) -> f64 {
        let counts = self.category_counts(members);
        let n = members.len() as f64;
        counts
            .iter()
            .zip(&self.g0)
            .map(|(c, &g)| {
                let d = c.len() as f64;
                ln_gamma(d * g) - ln_gamma(n + d * g) + c.iter().map(|&x| ln_gamma(x as f64 + g) - ln_gamma(g)).sum::<f64>()
            })
            .sum()
    }
}

/// Move observations from the largest groups into empty ones.
fn fill_empty_groups(labels: &mut [usize], k: usize) {
    let n = labels.len();
    if n < k {
        return;
    }
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let largest = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
        let donor = labels.iter().rposition(|&l| l == largest).unwrap();
        labels[donor] = empty;
    }
}

// ---------------------------------------------------------------------------
// Poisson

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonParams {
    pub mu: f64,
    log_mu: f64,
}

impl PoissonParams {
    pub fn new(mu: f64) -> Self {
        PoissonParams { mu, log_mu: mu.ln() }
    }
}

/// Prior on the Gamma rate b0 of the component means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RatePrior {
    /// `b0 ~ G(g0, G0)`, updated every sweep.
    Hierarchical { g0: f64, big_g0: f64 },
    /// b0 held fixed; the kernel is then fully conjugate.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonState {
    pub b0: f64,
}

/// Poisson kernel with `μ_k | b0 ~ G(a0, b0)`.
#[derive(Clone, Debug)]
pub struct PoissonKernel {
    y: Vec<u64>,
    ln_fact: Vec<f64>,
    a0: f64,
    rate_prior: RatePrior,
}

/// `G(shape, rate)` posterior of μ_k.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaPosterior {
    pub shape: f64,
    pub rate: f64,
}

impl PoissonKernel {
    pub fn new(data: &CountData, a0: f64, rate_prior: RatePrior) -> Result<Self> {
        if !(a0 > 0.0) {
            return Err(Error::domain("a0 must be positive"));
        }
        match rate_prior {
            RatePrior::Hierarchical { g0, big_g0 } if !(g0 > 0.0 && big_g0 > 0.0) => {
                return Err(Error::domain("g0 and G0 must be positive"))
            }
            RatePrior::Fixed(b) if !(b > 0.0) => return Err(Error::domain("b0 must be positive")),
            _ => {}
        }
        Ok(PoissonKernel {
            y: data.y().to_vec(),
            ln_fact: data.y().iter().map(|&y| ln_factorial(y)).collect(),
            a0,
            rate_prior,
        })
    }

    /// `a0 = 0.1`, `g0 = 0.5`, `G0 = g0 ȳ / a0`.
    pub fn default_hierarchy(data: &CountData) -> Result<Self> {
        let (a0, g0) = (0.1, 0.5);
        let ybar = data.mean().max(1e-3);
        Self::new(data, a0, RatePrior::Hierarchical { g0, big_g0: g0 * ybar / a0 })
    }

    /// Same hierarchy with b0 fixed at its prior mean `g0 / G0`.
    pub fn default_fixed(data: &CountData) -> Result<Self> {
        let (a0, g0) = (0.1, 0.5);
        let ybar = data.mean().max(1e-3);
        Self::new(data, a0, RatePrior::Fixed(g0 / (g0 * ybar / a0)))
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn rate_prior(&self) -> RatePrior {
        self.rate_prior
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    fn b0_of(&self, state: &PoissonState) -> f64 {
        match self.rate_prior {
            RatePrior::Fixed(b) => b,
            RatePrior::Hierarchical { .. } => state.b0,
        }
    }

    fn fixed_b0(&self) -> f64 {
        match self.rate_prior {
            RatePrior::Fixed(b) => b,
            RatePrior::Hierarchical { g0, big_g0 } => g0 / big_g0,
        }
    }

    fn gamma_posterior(&self, members: &[usize], b0: f64) -> GammaPosterior {
        let s: u64 = members.iter().map(|&i| self.y[i]).sum();
        GammaPosterior {
            shape: self.a0 + s as f64,
            rate: b0 + members.len() as f64,
        }
    }
}

/// Conjugate draw `b0 ~ G(g0 + K a0, G0 + Σ_k μ_k)` over the supplied means.
pub fn update_poisson_hyper_b0<R: Rng + ?Sized>(mus: &[f64], a0: f64, g0: f64, big_g0: f64, rng: &mut R) -> Result<f64> {
    if let Some(m) = mus.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::domain(format!("component means must be positive, got {m}")));
    }
    let shape = g0 + mus.len() as f64 * a0;
    let rate = big_g0 + mus.iter().sum::<f64>();
    sample_gamma(shape, rate, rng)
}

impl Kernel for PoissonKernel {
    type Params = PoissonParams;
    type State = PoissonState;

    fn name(&self) -> &'static str {
        "poisson"
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> PoissonState {
        PoissonState { b0: self.fixed_b0() }
    }

    #[inline]
    fn log_lik(&self, theta: &PoissonParams, i: usize) -> f64 {
        self.y[i] as f64 * theta.log_mu - theta.mu - self.ln_fact[i]
    }

    fn sample_prior<R: Rng + ?Sized>(&self, state: &PoissonState, rng: &mut R) -> PoissonParams {
        let b0 = self.b0_of(state);
        gamma_params(self.a0, b0, rng)
    }

    fn sample_conditional<R: Rng + ?Sized>(
        &self,
        members: &[usize],
        _current: &PoissonParams,
        state: &mut PoissonState,
        rng: &mut R,
    ) -> Result<PoissonParams> {
        if members.is_empty() {
            return Err(empty_subset());
        }
        let post = self.gamma_posterior(members, self.b0_of(state));
        Ok(gamma_params(post.shape, post.rate, rng))
    }

    fn update_shared<R: Rng + ?Sized>(&self, occupied: &[&PoissonParams], state: &mut PoissonState, rng: &mut R) {
        if let RatePrior::Hierarchical { g0, big_g0 } = self.rate_prior {
            let shape = g0 + occupied.len() as f64 * self.a0;
            let rate = big_g0 + occupied.iter().map(|p| p.mu).sum::<f64>();
            state.b0 = (sample_log_gamma(shape, rng) - rate.ln()).exp().max(f64::MIN_POSITIVE);
        }
    }

    /// Quantile bins of the counts.
    fn initial_labels<R: Rng + ?Sized>(&self, k: usize, _rng: &mut R) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.y.len()).collect();
        order.sort_by_key(|&i| (self.y[i], i));
        rank_bins(&order, k.clamp(1, self.y.len().max(1)))
    }

    fn functional(&self, theta: &PoissonParams) -> Vec<f64> {
        vec![theta.log_mu]
    }

    fn summary_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn summary(&self, theta: &PoissonParams) -> Vec<f64> {
        vec![theta.mu]
    }

    fn flatten(&self, theta: &PoissonParams) -> Vec<f64> {
        vec![theta.mu]
    }

    fn unflatten(&self, values: &[f64]) -> Result<PoissonParams> {
        match values {
            [mu] if *mu > 0.0 => Ok(PoissonParams::new(*mu)),
            _ => Err(Error::Data("expected one positive Poisson mean".into())),
        }
    }
}

fn gamma_params<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> PoissonParams {
    // keep the mean strictly positive so ln μ stays finite
    let log_mu = (sample_log_gamma(shape, rng) - rate.ln()).max(-700.0);
    PoissonParams { mu: log_mu.exp(), log_mu }
}

impl ConjugateKernel for PoissonKernel {
    type Posterior = GammaPosterior;

    fn check_conjugate(&self) -> Result<()> {
        match self.rate_prior {
            RatePrior::Fixed(_) => Ok(()),
            RatePrior::Hierarchical { .. } => Err(Error::Unsupported(
                "marginal likelihoods need the Poisson kernel with b0 fixed".into(),
            )),
        }
    }

    fn posterior(&self, members: &[usize]) -> GammaPosterior {
        self.gamma_posterior(members, self.fixed_b0())
    }

    fn log_posterior_density(&self, post: &GammaPosterior, theta: &PoissonParams) -> f64 {
        post.shape * post.rate.ln() - ln_gamma(post.shape) + (post.shape - 1.0) * theta.log_mu - post.rate * theta.mu
    }

    fn sample_posterior<R: Rng + ?Sized>(&self, post: &GammaPosterior, rng: &mut R) -> PoissonParams {
        gamma_params(post.shape, post.rate, rng)
    }

    fn log_marginal(&self, members: &[usize]) -> f64 {
        let b0 = self.fixed_b0();
        let s: u64 = members.iter().map(|&i| self.y[i]).sum();
        let n = members.len() as f64;
        let a = self.a0 + s as f64;
        self.a0 * b0.ln() - ln_gamma(self.a0) + ln_gamma(a) - a * (b0 + n).ln()
            - members.iter().map(|&i| self.ln_fact[i]).sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// Count regression

/// Outcome distribution of a count GLM with log link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GlmFamily {
    Poisson,
    /// Negative binomial with component-specific dispersion ρ_k and prior
    /// `p(ρ) = 2c ρ / (ρ + c)³`.
    NegBin { c: f64 },
}

/// Scale constant giving the dispersion prior a median of 10.
pub fn negbin_default_c() -> f64 {
    10.0 / (1.0 + std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlmParams {
    pub beta: Vec<f64>,
    /// Dispersion; `None` for the Poisson family.
    pub rho: Option<f64>,
}

/// Random-walk proposal scales per coordinate (coefficients, then ln ρ).
#[derive(Clone, Debug, PartialEq)]
pub struct GlmState {
    pub log_scales: Vec<f64>,
    accepted: Vec<u64>,
    attempted: Vec<u64>,
    adapt_calls: u64,
    batches: u64,
}

impl GlmState {
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.attempted)
            .map(|(&a, &t)| if t == 0 { 0.0 } else { a as f64 / t as f64 })
            .collect()
    }
}

const ADAPT_BATCH: u64 = 50;
const TARGET_ACCEPT: f64 = 0.44;

/// Mixture-of-GLMs kernel for counts, `E[y_i] = exp(x_i β_k)`, with
/// `β_k ~ N(0, prior_var I)`.
#[derive(Clone, Debug)]
pub struct GlmKernel {
    data: RegressionData,
    ln_fact: Vec<f64>,
    family: GlmFamily,
    prior_var: f64,
}

impl GlmKernel {
    pub fn new(data: RegressionData, family: GlmFamily, prior_var: f64) -> Result<Self> {
        if !(prior_var > 0.0) {
            return Err(Error::domain("coefficient prior variance must be positive"));
        }
        if let GlmFamily::NegBin { c } = family {
            if !(c > 0.0) {
                return Err(Error::domain("dispersion prior scale must be positive"));
            }
        }
        let ln_fact = data.y().iter().map(|&y| ln_factorial(y)).collect();
        Ok(GlmKernel {
            data,
            ln_fact,
            family,
            prior_var,
        })
    }

    pub fn poisson(data: RegressionData) -> Result<Self> {
        Self::new(data, GlmFamily::Poisson, 4.0)
    }

    pub fn negbin(data: RegressionData) -> Result<Self> {
        Self::new(data, GlmFamily::NegBin { c: negbin_default_c() }, 4.0)
    }

    pub fn family(&self) -> GlmFamily {
        self.family
    }

    fn n_coef(&self) -> usize {
        self.data.n_cols()
    }

    #[inline]
    fn linear(&self, beta: &[f64], i: usize) -> f64 {
        self.data.row(i).iter().zip(beta).map(|(x, b)| x * b).sum()
    }

    #[inline]
    fn log_pmf(&self, eta: f64, rho: Option<f64>, i: usize) -> f64 {
        let y = self.data.y()[i];
        let yf = y as f64;
        match rho {
            None => yf * eta - eta.exp() - self.ln_fact[i],
            Some(rho) => negbin_log_pmf(y, eta, rho) - self.ln_fact[i],
        }
    }

    fn log_prior_beta(&self, beta: &[f64]) -> f64 {
        -0.5 * beta.iter().map(|b| b * b).sum::<f64>() / self.prior_var
    }

    fn subset_target(&self, beta: &[f64], rho: Option<f64>, members: &[usize]) -> f64 {
        members
            .iter()
            .map(|&i| self.log_pmf(self.linear(beta, i), rho, i))
            .sum()
    }
}

/// `ln [Γ(y+ρ)/Γ(ρ)] + ρ ln(ρ/(ρ+λ)) + y ln(λ/(ρ+λ))` with `λ = e^η`,
/// i.e. the negative binomial log pmf without the `−ln y!` term.
pub fn negbin_log_pmf(y: u64, eta: f64, rho: f64) -> f64 {
    let lambda = eta.exp();
    let yf = y as f64;
    let ratio = if y <= 64 {
        (0..y).map(|j| (rho + j as f64).ln()).sum()
    } else {
        ln_gamma(yf + rho) - ln_gamma(rho)
    };
    let log_rl = (rho + lambda).ln();
    ratio - rho * (lambda / rho).ln_1p() + yf * (eta - log_rl)
}

/// Log density of the dispersion prior `2c ρ / (ρ + c)³`.
pub fn log_rho_prior(rho: f64, c: f64) -> f64 {
    (2.0 * c).ln() + rho.ln() - 3.0 * (rho + c).ln()
}

/// Inverse-CDF draw from the dispersion prior; `F(m) = (m / (m + c))²`.
pub fn sample_rho_prior<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>();
    let s = u.sqrt().max(1e-300);
    c * s / (1.0 - s).max(1e-300)
}

impl Kernel for GlmKernel {
    type Params = GlmParams;
    type State = GlmState;

    fn name(&self) -> &'static str {
        match self.family {
            GlmFamily::Poisson => "poisson_glm",
            GlmFamily::NegBin { .. } => "negbin_glm",
        }
    }

    fn n_obs(&self) -> usize {
        self.data.n_obs()
    }

    fn param_dim(&self) -> usize {
        self.n_coef() + usize::from(matches!(self.family, GlmFamily::NegBin { .. }))
    }

    fn initial_state(&self) -> GlmState {
        let d = self.param_dim();
        GlmState {
            log_scales: vec![(0.3f64).ln(); d],
            accepted: vec![0; d],
            attempted: vec![0; d],
            adapt_calls: 0,
            batches: 0,
        }
    }

    #[inline]
    fn log_lik(&self, theta: &GlmParams, i: usize) -> f64 {
        self.log_pmf(self.linear(&theta.beta, i), theta.rho, i)
    }

    fn sample_prior<R: Rng + ?Sized>(&self, _state: &GlmState, rng: &mut R) -> GlmParams {
        let sd = self.prior_var.sqrt();
        let beta = (0..self.n_coef())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
            .collect();
        let rho = match self.family {
            GlmFamily::Poisson => None,
            GlmFamily::NegBin { c } => Some(sample_rho_prior(c, rng)),
        };
        GlmParams { beta, rho }
    }

    /// One coordinate-wise random-walk Metropolis pass over β_k and, for the
    /// negative binomial, one step on ln ρ_k.
    fn sample_conditional<R: Rng + ?Sized>(
        &self,
        members: &[usize],
        current: &GlmParams,
        state: &mut GlmState,
        rng: &mut R,
    ) -> Result<GlmParams> {
        if members.is_empty() {
            return Err(empty_subset());
        }
        let mut theta = current.clone();
        let mut cur = self.subset_target(&theta.beta, theta.rho, members) + self.log_prior_beta(&theta.beta);
        for j in 0..self.n_coef() {
            let step: f64 = StandardNormal.sample(rng);
            let old = theta.beta[j];
            theta.beta[j] = old + state.log_scales[j].exp() * step;
            let prop = self.subset_target(&theta.beta, theta.rho, members) + self.log_prior_beta(&theta.beta);
            state.attempted[j] += 1;
            if prop.is_finite() && rng.random::<f64>().ln() < prop - cur {
                cur = prop;
                state.accepted[j] += 1;
            } else {
                theta.beta[j] = old;
            }
        }
        if let (GlmFamily::NegBin { c }, Some(rho)) = (self.family, theta.rho) {
            let j = self.n_coef();
            let step: f64 = StandardNormal.sample(rng);
            let log_new = rho.ln() + state.log_scales[j].exp() * step;
            let new = log_new.exp();
            state.attempted[j] += 1;
            if new.is_finite() && new > 0.0 {
                // target on the log scale carries the Jacobian ρ
                let lik_old = self.subset_target(&theta.beta, Some(rho), members);
                let lik_new = self.subset_target(&theta.beta, Some(new), members);
                let old_t = lik_old + log_rho_prior(rho, c) + rho.ln();
                let new_t = lik_new + log_rho_prior(new, c) + log_new;
                if new_t.is_finite() && rng.random::<f64>().ln() < new_t - old_t {
                    theta.rho = Some(new);
                    state.accepted[j] += 1;
                }
            }
        }
        if theta.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical {
                sweep: 0,
                message: "non-finite regression coefficient".into(),
            });
        }
        Ok(theta)
    }

    /// Intercept at the log mean of the members, slopes at zero, followed by
    /// one Metropolis pass.
    fn initial_params<R: Rng + ?Sized>(&self, members: &[usize], state: &mut GlmState, rng: &mut R) -> Result<GlmParams> {
        if members.is_empty() {
            return Err(empty_subset());
        }
        let mean = members.iter().map(|&i| self.data.y()[i] as f64).sum::<f64>() / members.len() as f64;
        let mut beta = vec![0.0; self.n_coef()];
        beta[0] = (mean + 0.5).ln();
        let rho = match self.family {
            GlmFamily::Poisson => None,
            GlmFamily::NegBin { .. } => Some(10.0),
        };
        self.sample_conditional(members, &GlmParams { beta, rho }, state, rng)
    }

    fn adapt(&self, state: &mut GlmState) {
        state.adapt_calls += 1;
        if !state.adapt_calls.is_multiple_of(ADAPT_BATCH) {
            return;
        }
        state.batches += 1;
        let delta = (1.0 / (state.batches as f64).sqrt()).min(0.5);
        for j in 0..state.log_scales.len() {
            if state.attempted[j] == 0 {
                continue;
            }
            let rate = state.accepted[j] as f64 / state.attempted[j] as f64;
            if rate > TARGET_ACCEPT {
                state.log_scales[j] += delta;
            } else {
                state.log_scales[j] -= delta;
            }
            state.log_scales[j] = state.log_scales[j].clamp(-12.0, 3.0);
            state.accepted[j] = 0;
            state.attempted[j] = 0;
        }
    }

    /// Quantile bins of the response.
    fn initial_labels<R: Rng + ?Sized>(&self, k: usize, _rng: &mut R) -> Vec<usize> {
        let y = self.data.y();
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by_key(|&i| (y[i], i));
        rank_bins(&order, k.clamp(1, y.len().max(1)))
    }

    fn functional(&self, theta: &GlmParams) -> Vec<f64> {
        theta.beta.clone()
    }

    fn summary_names(&self) -> Vec<String> {
        let mut names = self.data.names().to_vec();
        if matches!(self.family, GlmFamily::NegBin { .. }) {
            names.push("rho".into());
        }
        names
    }

    fn summary(&self, theta: &GlmParams) -> Vec<f64> {
        self.flatten(theta)
    }

    fn flatten(&self, theta: &GlmParams) -> Vec<f64> {
        let mut v = theta.beta.clone();
        v.extend(theta.rho);
        v
    }

    fn unflatten(&self, values: &[f64]) -> Result<GlmParams> {
        let p = self.n_coef();
        match (self.family, values.len()) {
            (GlmFamily::Poisson, n) if n == p => Ok(GlmParams {
                beta: values.to_vec(),
                rho: None,
            }),
            (GlmFamily::NegBin { .. }, n) if n == p + 1 && values[p] > 0.0 => Ok(GlmParams {
                beta: values[..p].to_vec(),
                rho: Some(values[p]),
            }),
            _ => Err(Error::Data(format!("unexpected parameter length {}", values.len()))),
        }
    }
}
