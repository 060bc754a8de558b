//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sparsemix::datasets::load_fear;
use sparsemix::kernels::RatePrior;
use sparsemix::{data, CountData, GlmFamily, GlmKernel, LatentClassKernel, ModelSpec, PoissonKernel, PrecisionPrior};

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataConfig,
    pub kernel: KernelConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub iterations: Iterations,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub identify: IdentifyConfig,
    #[serde(default)]
    pub evidence: Option<EvidenceConfig>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Bundled datasets; currently only `fear`.
    Builtin { name: String },
    Categorical { path: PathBuf },
    Counts { path: PathBuf },
    Regression { path: PathBuf },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    LatentClass {
        #[serde(default = "unit")]
        g0: f64,
    },
    Poisson {
        #[serde(default)]
        a0: Option<f64>,
        #[serde(default)]
        g0: Option<f64>,
        #[serde(default)]
        big_g0: Option<f64>,
        /// Hold b0 at its prior mean `g0 / G0` instead of sampling it.
        #[serde(default)]
        fixed_b0: bool,
    },
    Glm {
        family: GlmFamilyConfig,
        #[serde(default)]
        prior_var: Option<f64>,
        #[serde(default)]
        c: Option<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum GlmFamilyConfig {
    Poisson,
    Negbin,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum FamilyConfig {
    Sfm,
    Dpm,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyConfig,
    #[serde(default)]
    pub k: Option<usize>,
    pub prior: PriorConfig,
    #[serde(default)]
    pub matching: Option<MatchingConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Gamma { shape: f64, rate: f64 },
    Uniform { upper: f64 },
    Fixed { value: f64 },
}

/// `prior` is stated on the scale of the other family and converted.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatchingConfig {
    pub from: FamilyConfig,
    /// K of the finite mixture when matching a DPM prior to it.
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Iterations {
    #[serde(default = "default_sweeps")]
    pub burnin: usize,
    #[serde(default = "default_sweeps")]
    pub keep: usize,
    #[serde(default = "one")]
    pub thin: usize,
}

fn default_sweeps() -> usize {
    8000
}

impl Default for Iterations {
    fn default() -> Self {
        Iterations {
            burnin: default_sweeps(),
            keep: default_sweeps(),
            thin: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    /// Number of classes to identify; the posterior mode of K₊ when absent.
    #[serde(default)]
    pub khat: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceMethodConfig {
    #[default]
    Auto,
    Enumeration,
    Bridge,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceConfig {
    #[serde(default = "one")]
    pub k_min: usize,
    pub k_max: usize,
    /// Fixed Dirichlet parameter; taken from a fixed model prior when absent.
    #[serde(default)]
    pub e0: Option<f64>,
    #[serde(default)]
    pub method: EvidenceMethodConfig,
    #[serde(default)]
    pub bridge_burnin: Option<usize>,
    #[serde(default)]
    pub bridge_keep: Option<usize>,
}

pub enum AnyKernel {
    LatentClass(LatentClassKernel),
    Poisson(PoissonKernel),
    Glm(GlmKernel),
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::User(format!("invalid config {}: {e}", path.display())))?;
        // relative data paths resolve against the config's directory
        if let Some(dir) = path.parent() {
            if let Some(p) = cfg.data.path_mut() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn override_data(&mut self, path: PathBuf) -> Result<(), CliError> {
        match self.data.path_mut() {
            Some(p) => {
                *p = path;
                Ok(())
            }
            None => Err(CliError::User("--data needs a file-based data section in the config".into())),
        }
    }

    pub fn spec(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let prior = match m.prior {
            PriorConfig::Gamma { shape, rate } => PrecisionPrior::Gamma { shape, rate },
            PriorConfig::Uniform { upper } => PrecisionPrior::Uniform { upper },
            PriorConfig::Fixed { value } => PrecisionPrior::Fixed(value),
        };
        let spec = match (m.family, m.matching) {
            (FamilyConfig::Sfm, None) => ModelSpec::sfm(self.finite_k()?, prior),
            (FamilyConfig::Dpm, None) => ModelSpec::dpm(prior),
            (FamilyConfig::Sfm, Some(MatchingConfig { from: FamilyConfig::Dpm, .. })) => {
                let (a, b) = gamma_of(prior)?;
                ModelSpec::sfm_matched_to_dpm(a, b, self.finite_k()?)
            }
            (FamilyConfig::Dpm, Some(MatchingConfig { from: FamilyConfig::Sfm, k })) => {
                let (a, b) = gamma_of(prior)?;
                let k = k.ok_or_else(|| CliError::User("matching from sfm needs matching.k".into()))?;
                ModelSpec::dpm_matched_to_sfm(a, b, k)
            }
            _ => return Err(CliError::User("matching.from must name the other family".into())),
        };
        spec.map_err(CliError::from)
    }

    pub fn finite_k(&self) -> Result<usize, CliError> {
        self.model
            .k
            .ok_or_else(|| CliError::User("model.k is required for the sfm family".into()))
    }

    pub fn kernel(&self) -> Result<AnyKernel, CliError> {
        let kernel = match (&self.kernel, &self.data) {
            (KernelConfig::LatentClass { g0 }, DataConfig::Builtin { name }) if name == "fear" => {
                AnyKernel::LatentClass(LatentClassKernel::new(load_fear(), *g0)?)
            }
            (_, DataConfig::Builtin { name }) if name != "fear" => {
                return Err(CliError::User(format!("unknown builtin dataset '{name}'")))
            }
            (KernelConfig::LatentClass { g0 }, DataConfig::Categorical { path }) => {
                check_exists(path)?;
                AnyKernel::LatentClass(LatentClassKernel::new(data::read_categorical_csv(path)?, *g0)?)
            }
            (KernelConfig::Poisson { a0, g0, big_g0, fixed_b0 }, DataConfig::Counts { path }) => {
                check_exists(path)?;
                let counts = data::read_counts_csv(path)?;
                AnyKernel::Poisson(poisson_kernel(&counts, *a0, *g0, *big_g0, *fixed_b0)?)
            }
            (KernelConfig::Glm { family, prior_var, c }, DataConfig::Regression { path }) => {
                check_exists(path)?;
                let reg = data::read_regression_csv(path)?;
                let family = match family {
                    GlmFamilyConfig::Poisson => GlmFamily::Poisson,
                    GlmFamilyConfig::Negbin => GlmFamily::NegBin {
                        c: c.unwrap_or_else(sparsemix::kernels::negbin_default_c),
                    },
                };
                AnyKernel::Glm(GlmKernel::new(reg, family, prior_var.unwrap_or(4.0))?)
            }
            _ => return Err(CliError::User("kernel type does not match the data format".into())),
        };
        Ok(kernel)
    }
}

impl DataConfig {
    fn path_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            DataConfig::Builtin { .. } => None,
            DataConfig::Categorical { path } | DataConfig::Counts { path } | DataConfig::Regression { path } => {
                Some(path)
            }
        }
    }
}

fn check_exists(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::User(format!("data file {} not found", path.display())))
    }
}

fn gamma_of(prior: PrecisionPrior) -> Result<(f64, f64), CliError> {
    match prior {
        PrecisionPrior::Gamma { shape, rate } => Ok((shape, rate)),
        _ => Err(CliError::User("prior matching needs a gamma prior".into())),
    }
}

fn poisson_kernel(
    counts: &CountData,
    a0: Option<f64>,
    g0: Option<f64>,
    big_g0: Option<f64>,
    fixed_b0: bool,
) -> Result<PoissonKernel, CliError> {
    let a0 = a0.unwrap_or(0.1);
    let g0 = g0.unwrap_or(0.5);
    let big_g0 = big_g0.unwrap_or_else(|| g0 * counts.mean().max(1e-3) / a0);
    let rate = if fixed_b0 {
        RatePrior::Fixed(g0 / big_g0)
    } else {
        RatePrior::Hierarchical { g0, big_g0 }
    };
    Ok(PoissonKernel::new(counts, a0, rate)?)
}
