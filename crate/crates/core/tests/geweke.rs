//! Joint-distribution tests for the configurations not covered by the
//! acceptance suite.

mod common;

use common::{geweke_categorical, geweke_poisson, new_cluster_law, GewekeStat};
use sparsemix::sampler::Family;
use sparsemix::{ModelSpec, PrecisionPrior};

const CYCLES: usize = 60_000;

fn check(label: &str, stats: &[GewekeStat]) {
    for s in stats {
        println!("{label}: {} marginal {:.4} successive {:.4} z {:.2}", s.name, s.marginal, s.successive, s.z);
    }
    let worst = stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max);
    assert!(worst < 4.0, "{label}: max |z| = {worst}");
}

fn dpm() -> ModelSpec {
    ModelSpec::dpm(PrecisionPrior::Gamma { shape: 2.0, rate: 2.0 }).unwrap()
}

fn sfm() -> ModelSpec {
    ModelSpec::sfm(3, PrecisionPrior::Gamma { shape: 2.0, rate: 2.0 }).unwrap()
}

#[test]
fn dpm_categorical() {
    check("dpm categorical", &geweke_categorical(&dpm(), 8, CYCLES, 201));
}

#[test]
fn dpm_poisson() {
    check("dpm poisson", &geweke_poisson(&dpm(), false, 8, CYCLES, 202));
}

#[test]
fn sfm_poisson_hierarchical_rate() {
    check("sfm poisson b0", &geweke_poisson(&sfm(), true, 8, CYCLES, 203));
}

#[test]
fn dpm_poisson_hierarchical_rate() {
    check("dpm poisson b0", &geweke_poisson(&dpm(), true, 8, CYCLES, 204));
}

#[test]
fn sfm_uniform_precision_prior() {
    let spec = ModelSpec::sfm(3, PrecisionPrior::Uniform { upper: 3.0 }).unwrap();
    check("sfm uniform", &geweke_categorical(&spec, 6, CYCLES, 205));
}

#[test]
fn new_cluster_laws_at_other_settings() {
    for (family, v, seed) in [(Family::Sfm { k: 3 }, 0.05, 301), (Family::Sfm { k: 20 }, 2.0, 302), (Family::Dpm, 0.2, 303)] {
        let law = new_cluster_law(family, v, 15, 100_000, seed);
        assert!(law.z().abs() < 3.5, "{family:?} at {v}: {} vs {} (z {})", law.empirical, law.expected, law.z());
    }
}

#[test]
fn sfm_poisson_regression() {
    let stats = common::geweke_glm(&sfm(), sparsemix::GlmFamily::Poisson, 0.5, 6, CYCLES, 206);
    check("sfm poisson glm", &stats);
}

#[test]
fn dpm_negbin_regression() {
    let family = sparsemix::GlmFamily::NegBin { c: sparsemix::kernels::negbin_default_c() };
    check("dpm negbin glm", &common::geweke_glm(&dpm(), family, 0.5, 6, CYCLES, 207));
}
