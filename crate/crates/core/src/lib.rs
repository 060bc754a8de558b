//! Bayesian clustering with sparse finite mixtures and Dirichlet process
//! mixtures of non-Gaussian kernels.
//!
//! A single stick-breaking Gibbs sampler ([`sampler`]) fits both families;
//! [`kernels`] supplies the component distributions, [`evidence`] the
//! marginal likelihoods of finite mixtures and [`postprocess`] the
//! posterior of K₊ and identified partitions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod datasets;
pub mod error;
pub mod evidence;
pub mod kernels;
pub mod math;
pub mod partitions;
pub mod postprocess;
pub mod sampler;
pub mod weights;

pub use data::{CategoricalData, CountData, Dataset, RegressionData};
pub use error::{Error, Result};
pub use kernels::{ConjugateKernel, GlmFamily, GlmKernel, Kernel, LatentClassKernel, PoissonKernel, RatePrior};
pub use math::RngStream;
pub use sampler::{run_chain, run_chains, ChainTrace, Family, ModelSpec, PrecisionPrior, SamplerConfig};
