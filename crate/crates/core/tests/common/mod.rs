//! Joint-distribution (Geweke) harness and new-cluster law checks shared by
//! the integration test targets.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use sparsemix::kernels::{CategoricalParams, GlmParams, Kernel, PoissonParams};
use sparsemix::math::{sample_log_categorical, sample_log_dirichlet, sample_log_gamma};
use sparsemix::partitions::{prob_new_cluster_dpm, prob_new_cluster_sfm};
use sparsemix::sampler::{Chain, Family};
use sparsemix::{CategoricalData, CountData, GlmFamily, GlmKernel, LatentClassKernel, ModelSpec, PoissonKernel, PrecisionPrior, RatePrior, RegressionData, RngStream, SamplerConfig};

/// Mean and batch-means standard error.
pub fn batch_mean_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let b = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|j| xs[j * b..(j + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

pub fn iid_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One named statistic: marginal mean, successive mean, z score.
#[derive(Debug, Clone)]
pub struct GewekeStat {
    pub name: String,
    pub marginal: f64,
    pub successive: f64,
    pub z: f64,
}

fn compare(names: &[&str], marginal: &[Vec<f64>], successive: &[Vec<f64>]) -> Vec<GewekeStat> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let m: Vec<f64> = marginal.iter().map(|s| s[j]).collect();
            let s: Vec<f64> = successive.iter().map(|s| s[j]).collect();
            let (mm, ms) = iid_mean_se(&m);
            let (sm, ss) = batch_mean_se(&s, 100);
            GewekeStat {
                name: name.to_string(),
                marginal: mm,
                successive: sm,
                z: (mm - sm) / (ms * ms + ss * ss).sqrt().max(1e-300),
            }
        })
        .collect()
}

/// Prior draw of the allocations of `n` observations for either family.
fn prior_allocations<R: Rng>(family: Family, precision: f64, n: usize, rng: &mut R) -> Vec<usize> {
    match family {
        Family::Sfm { k } => {
            let log_eta = sample_log_dirichlet(&vec![precision; k], rng);
            (0..n)
                .map(|_| sample_log_categorical(&mut log_eta.clone(), rng).unwrap())
                .collect()
        }
        Family::Dpm => {
            // Chinese restaurant process
            let mut labels = Vec::with_capacity(n);
            let mut sizes: Vec<f64> = Vec::new();
            for _ in 0..n {
                let mut w: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
                w.push(precision.ln());
                let c = sample_log_categorical(&mut w, rng).unwrap();
                if c == sizes.len() {
                    sizes.push(1.0);
                } else {
                    sizes[c] += 1.0;
                }
                labels.push(c);
            }
            labels
        }
    }
}

fn kplus_of(labels: &[usize]) -> usize {
    let mut l = labels.to_vec();
    l.sort_unstable();
    l.dedup();
    l.len()
}

fn cfg() -> SamplerConfig {
    SamplerConfig {
        adapt: false,
        ..SamplerConfig::default()
    }
}

pub const POISSON_A0: f64 = 2.0;

/// Rate prior for the Poisson joint-distribution test; the shape keeps the
/// fourth moment of y finite.
pub fn poisson_rate_prior(hierarchical: bool) -> RatePrior {
    if hierarchical {
        RatePrior::Hierarchical { g0: 10.0, big_g0: 10.0 }
    } else {
        RatePrior::Fixed(1.0)
    }
}

fn poisson_stats(y: &[u64], labels: &[usize], mus: &[f64], precision: f64) -> Vec<f64> {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<u64>() as f64 / n;
    vec![
        kplus_of(labels) as f64,
        precision,
        ybar,
        y.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n,
        mus[labels[0]],
        (labels[0] == labels[1]) as u8 as f64,
        (y[0] as f64) * (y[1] as f64),
    ]
}

pub const POISSON_STATS: [&str; 7] = ["K+", "precision", "mean y", "mean y^2", "mu_S1", "S1==S2", "y1*y2"];

/// Poisson joint-distribution test with N observations.
pub fn geweke_poisson(spec: &ModelSpec, hierarchical: bool, n: usize, cycles: usize, seed: u64) -> Vec<GewekeStat> {
    let rate = poisson_rate_prior(hierarchical);
    let mut rng = RngStream::new(seed, 0);
    let mut marginal = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let v = spec.precision_prior.sample(&mut rng);
        let labels = prior_allocations(spec.family, v, n, &mut rng);
        let b0 = match rate {
            RatePrior::Fixed(b) => b,
            RatePrior::Hierarchical { g0, big_g0 } => (sample_log_gamma(g0, &mut rng) - big_g0.ln()).exp(),
        };
        let kp = labels.iter().max().unwrap() + 1;
        let mus: Vec<f64> = (0..kp).map(|_| (sample_log_gamma(POISSON_A0, &mut rng) - b0.ln()).exp()).collect();
        let y: Vec<u64> = labels.iter().map(|&l| Poisson::new(mus[l]).unwrap().sample(&mut rng) as u64).collect();
        marginal.push(poisson_stats(&y, &labels, &mus, v));
    }

    let mut rng = RngStream::new(seed, 1);
    let mut y: Vec<u64> = (0..n).map(|i| (i % 3) as u64).collect();
    let kernel = |y: &[u64]| PoissonKernel::new(&CountData::new(y.to_vec()), POISSON_A0, rate).unwrap();
    let init_k = match spec.family {
        Family::Sfm { k } => k.min(n),
        Family::Dpm => 2,
    };
    let mut chain = Chain::initialize(&kernel(&y), spec, init_k, &cfg(), &mut rng).unwrap();
    let mut successive = Vec::with_capacity(cycles);
    let burn = cycles / 20;
    for c in 0..cycles + burn {
        chain.sweep(&kernel(&y), &mut rng, false).unwrap();
        let labels = chain.allocations().labels().to_vec();
        let mus: Vec<f64> = chain.params().iter().map(|p: &PoissonParams| p.mu).collect();
        y = labels.iter().map(|&l| Poisson::new(mus[l]).unwrap().sample(&mut rng) as u64).collect();
        if c >= burn {
            successive.push(poisson_stats(&y, &labels, &mus, chain.precision().value));
        }
    }
    compare(&POISSON_STATS, &marginal, &successive)
}

pub const CATEGORICAL_STATS: [&str; 6] = ["K+", "precision", "P(y1=1)", "pi_S1", "S1==S2", "y1==y2"];

const CARDS: [usize; 2] = [2, 3];

fn categorical_stats(rows: &[Vec<usize>], labels: &[usize], probs: &[Vec<Vec<f64>>], precision: f64) -> Vec<f64> {
    let n = rows.len() as f64;
    vec![
        kplus_of(labels) as f64,
        precision,
        rows.iter().filter(|r| r[0] == 1).count() as f64 / n,
        probs[labels[0]][1][0],
        (labels[0] == labels[1]) as u8 as f64,
        (rows[0][1] == rows[1][1]) as u8 as f64,
    ]
}

fn draw_rows<R: Rng>(labels: &[usize], probs: &[Vec<Vec<f64>>], rng: &mut R) -> Vec<Vec<usize>> {
    labels
        .iter()
        .map(|&l| {
            probs[l]
                .iter()
                .map(|p| sparsemix::math::sample_categorical(p, rng).unwrap() + 1)
                .collect()
        })
        .collect()
}

/// Latent class joint-distribution test with two features (2 and 3 levels).
pub fn geweke_categorical(spec: &ModelSpec, n: usize, cycles: usize, seed: u64) -> Vec<GewekeStat> {
    let g0 = 1.5;
    let mut rng = RngStream::new(seed, 0);
    let mut marginal = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let v = spec.precision_prior.sample(&mut rng);
        let labels = prior_allocations(spec.family, v, n, &mut rng);
        let kp = labels.iter().max().unwrap() + 1;
        let probs: Vec<Vec<Vec<f64>>> = (0..kp)
            .map(|_| {
                CARDS
                    .iter()
                    .map(|&d| sample_log_dirichlet(&vec![g0; d], &mut rng).iter().map(|l| l.exp()).collect())
                    .collect()
            })
            .collect();
        let rows = draw_rows(&labels, &probs, &mut rng);
        marginal.push(categorical_stats(&rows, &labels, &probs, v));
    }

    let mut rng = RngStream::new(seed, 1);
    let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![1 + i % 2, 1 + i % 3]).collect();
    let kernel = |rows: &[Vec<usize>]| LatentClassKernel::new(CategoricalData::new(rows, CARDS.to_vec()).unwrap(), g0).unwrap();
    let init_k = match spec.family {
        Family::Sfm { k } => k.min(n),
        Family::Dpm => 2,
    };
    let mut chain = Chain::initialize(&kernel(&rows), spec, init_k, &cfg(), &mut rng).unwrap();
    let mut successive = Vec::with_capacity(cycles);
    let burn = cycles / 20;
    for c in 0..cycles + burn {
        chain.sweep(&kernel(&rows), &mut rng, false).unwrap();
        let labels = chain.allocations().labels().to_vec();
        let probs: Vec<Vec<Vec<f64>>> = chain.params().iter().map(|p: &CategoricalParams| p.probs.clone()).collect();
        rows = draw_rows(&labels, &probs, &mut rng);
        if c >= burn {
            successive.push(categorical_stats(&rows, &labels, &probs, chain.precision().value));
        }
    }
    compare(&CATEGORICAL_STATS, &marginal, &successive)
}

/// Result of a new-cluster law check.
#[derive(Debug, Clone)]
pub struct LawCheck {
    pub empirical: f64,
    pub expected: f64,
    pub se: f64,
}

impl LawCheck {
    pub fn z(&self) -> f64 {
        (self.empirical - self.expected) / self.se.max(1e-300)
    }
}

/// Prior-only run at fixed precision: compare, for every observation, the
/// frequency of being a singleton with the new-cluster probability given
/// the other allocations.
pub fn new_cluster_law(family: Family, precision: f64, n: usize, sweeps: usize, seed: u64) -> LawCheck {
    let spec = ModelSpec::new(family, PrecisionPrior::Fixed(precision)).unwrap();
    let kernel = PoissonKernel::new(&CountData::new((0..n as u64).collect()), 1.0, RatePrior::Fixed(1.0)).unwrap();
    let cfg = SamplerConfig {
        likelihood: false,
        adapt: false,
        ..SamplerConfig::default()
    };
    let mut rng = RngStream::new(seed, 0);
    let init_k = match family {
        Family::Sfm { k } => k.min(n),
        Family::Dpm => 3.min(n),
    };
    let mut chain = Chain::initialize(&kernel, &spec, init_k, &cfg, &mut rng).unwrap();
    for _ in 0..200 {
        chain.sweep(&kernel, &mut rng, false).unwrap();
    }
    let mut diffs = Vec::with_capacity(sweeps);
    let mut emp = 0.0;
    let mut exp = 0.0;
    for _ in 0..sweeps {
        chain.sweep(&kernel, &mut rng, false).unwrap();
        let a = chain.allocations();
        let counts = a.counts();
        let kp = a.kplus();
        let (mut e_sum, mut p_sum) = (0.0, 0.0);
        for i in 0..n {
            let single = counts[a.label(i)] == 1;
            let kminus = if single { kp - 1 } else { kp };
            let p = match family {
                Family::Sfm { k } => prob_new_cluster_sfm(n, precision, k, kminus).unwrap(),
                Family::Dpm => prob_new_cluster_dpm(n, precision),
            };
            e_sum += single as u8 as f64;
            p_sum += p;
        }
        emp += e_sum / n as f64;
        exp += p_sum / n as f64;
        diffs.push((e_sum - p_sum) / n as f64);
    }
    let (_, se) = batch_mean_se(&diffs, 100);
    LawCheck {
        empirical: emp / sweeps as f64,
        expected: exp / sweeps as f64,
        se,
    }
}

pub const GLM_STATS: [&str; 7] = ["K+", "precision", "mean y", "beta0_S1", "beta1_S1", "ln rho_S1", "S1==S2"];

fn glm_draw_y<R: Rng>(x: &[f64], labels: &[usize], params: &[GlmParams], rng: &mut R) -> Vec<u64> {
    labels
        .iter()
        .zip(x)
        .map(|(&l, &xi)| {
            let p = &params[l];
            let mean = (p.beta[0] + p.beta[1] * xi).exp();
            let lambda = match p.rho {
                None => mean,
                Some(rho) => (sample_log_gamma(rho, rng) + (mean / rho).ln()).exp(),
            };
            if lambda > 0.0 {
                Poisson::new(lambda).unwrap().sample(rng) as u64
            } else {
                0
            }
        })
        .collect()
}

fn glm_stats(y: &[u64], labels: &[usize], params: &[GlmParams], precision: f64) -> Vec<f64> {
    let p = &params[labels[0]];
    vec![
        kplus_of(labels) as f64,
        precision,
        y.iter().sum::<u64>() as f64 / y.len() as f64,
        p.beta[0],
        p.beta[1],
        p.rho.map_or(0.0, f64::ln),
        (labels[0] == labels[1]) as u8 as f64,
    ]
}

/// Regression-mixture joint-distribution test with one covariate and
/// coefficient prior variance `prior_var`.
pub fn geweke_glm(spec: &ModelSpec, family: GlmFamily, prior_var: f64, n: usize, cycles: usize, seed: u64) -> Vec<GewekeStat> {
    let x: Vec<f64> = (0..n).map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) / n as f64).collect();
    let covariates: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let kernel = |y: &[u64]| GlmKernel::new(RegressionData::new(y.to_vec(), &covariates).unwrap(), family, prior_var).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let prior_kernel = kernel(&vec![0; n]);
    let state = prior_kernel.initial_state();
    let mut marginal = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let v = spec.precision_prior.sample(&mut rng);
        let labels = prior_allocations(spec.family, v, n, &mut rng);
        let kp = labels.iter().max().unwrap() + 1;
        let params: Vec<GlmParams> = (0..kp).map(|_| prior_kernel.sample_prior(&state, &mut rng)).collect();
        let y = glm_draw_y(&x, &labels, &params, &mut rng);
        marginal.push(glm_stats(&y, &labels, &params, v));
    }

    let mut rng = RngStream::new(seed, 1);
    let mut y: Vec<u64> = (0..n).map(|i| (i % 3) as u64).collect();
    let init_k = match spec.family {
        Family::Sfm { k } => k.min(n),
        Family::Dpm => 2,
    };
    let mut chain = Chain::initialize(&kernel(&y), spec, init_k, &cfg(), &mut rng).unwrap();
    let mut successive = Vec::with_capacity(cycles);
    let burn = cycles / 20;
    for c in 0..cycles + burn {
        chain.sweep(&kernel(&y), &mut rng, false).unwrap();
        let labels = chain.allocations().labels().to_vec();
        y = glm_draw_y(&x, &labels, chain.params(), &mut rng);
        if c >= burn {
            successive.push(glm_stats(&y, &labels, chain.params(), chain.precision().value));
        }
    }
    compare(&GLM_STATS, &marginal, &successive)
}
