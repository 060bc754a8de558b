mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsemix::datasets::{default_grid, run_simulation_study, write_study_csv, SimDesign};
use sparsemix::evidence::{
    estimate_evidence_bridge, log_evidence_enumeration, log_evidence_k1, BridgeRun, EvidenceEstimate,
    ENUMERATION_LIMIT,
};
use sparsemix::partitions::prior_kplus;
use sparsemix::postprocess::{identify, kplus_posterior, IdentifyOptions};
use sparsemix::sampler::pool_traces;
use sparsemix::{run_chains, ChainTrace, ConjugateKernel, Kernel, PrecisionPrior, RngStream, SamplerConfig};

use config::{AnyKernel, Config, EvidenceMethodConfig};

/// User errors exit with 2, numerical and runtime failures with 3.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<sparsemix::Error> for CliError {
    fn from(e: sparsemix::Error) -> Self {
        use sparsemix::Error as E;
        match e {
            E::Numerical { .. } | E::Identification { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::User(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::User(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "sparsemix", version, about = "Sparse finite and Dirichlet process mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Replace the data file named in the config.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and write the trace, K+ posterior and identified model.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Log marginal likelihood of a fixed-e0 finite mixture over a range of K.
    Evidence {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo prior pmf of the number of clusters.
    PriorKplus {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        e0: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulation study over the default prior grid on two-class latent class data.
    Simstudy {
        #[arg(long, default_value_t = 100)]
        n_obs: usize,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        #[arg(long, default_value_t = 8000)]
        burnin: usize,
        #[arg(long, default_value_t = 8000)]
        keep: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-identify a stored fit for a chosen number of classes.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Directory holding the output of a previous `fit`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        khat: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::User(_) => 2,
                CliError::Runtime(_) => 3,
            })
        }
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Fit { common, chains } => {
            let cfg = load(&common)?;
            let chains = chains.unwrap_or(cfg.chains).max(1);
            with_pool(common.workers, || match cfg.kernel()? {
                AnyKernel::LatentClass(k) => fit(&k, &cfg, chains, &common.out),
                AnyKernel::Poisson(k) => fit(&k, &cfg, chains, &common.out),
                AnyKernel::Glm(k) => fit(&k, &cfg, chains, &common.out),
            })
        }
        Command::Evidence { common } => {
            let cfg = load(&common)?;
            match cfg.kernel()? {
                AnyKernel::LatentClass(k) => evidence(&k, &cfg, &common.out),
                AnyKernel::Poisson(k) => evidence(&k, &cfg, &common.out),
                AnyKernel::Glm(_) => Err(CliError::User("evidence needs a conjugate kernel".into())),
            }
        }
        Command::PriorKplus { k, e0, n, draws, seed, out } => {
            if draws < 1 {
                return Err(CliError::User("draws must be at least 1".into()));
            }
            let pmf = prior_kplus(k, e0, n, draws, &mut RngStream::new(seed, 0))?;
            create_dir(&out)?;
            output::write_pmf(&out.join("prior_kplus.csv"), &pmf)
        }
        Command::Simstudy {
            n_obs,
            replications,
            burnin,
            keep,
            seed,
            workers,
            out,
        } => {
            let design = SimDesign::two_class(n_obs, replications, seed);
            let cfg = SamplerConfig {
                n_burnin: burnin,
                n_keep: keep,
                seed,
                ..SamplerConfig::default()
            };
            let res = run_simulation_study(&design, &default_grid()?, &cfg, workers)?;
            create_dir(&out)?;
            write_study_csv(&res.rows, out.join("study.csv"))?;
            output::write_replications(&out.join("replications.csv"), &res)
        }
        Command::Identify { common, run, khat } => {
            let cfg = load(&common)?;
            match cfg.kernel()? {
                AnyKernel::LatentClass(k) => reidentify(&k, &cfg, &run, khat, &common.out),
                AnyKernel::Poisson(k) => reidentify(&k, &cfg, &run, khat, &common.out),
                AnyKernel::Glm(k) => reidentify(&k, &cfg, &run, khat, &common.out),
            }
        }
    }
}

fn load(common: &Common) -> Result<Config, CliError> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(d) = &common.data {
        cfg.override_data(d.clone())?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    match workers {
        None => f(),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(f),
    }
}

fn sampler_config(cfg: &Config) -> SamplerConfig {
    SamplerConfig {
        n_burnin: cfg.iterations.burnin,
        n_keep: cfg.iterations.keep,
        thin: cfg.iterations.thin,
        seed: cfg.seed,
        ..SamplerConfig::default()
    }
}

fn fit<K: Kernel>(kernel: &K, cfg: &Config, chains: usize, out: &Path) -> Result<(), CliError> {
    let spec = cfg.spec()?;
    let traces = run_chains(kernel, &spec, &sampler_config(cfg), chains)?;
    let trace = pool_traces(&traces).ok_or_else(|| CliError::Runtime("no chains were run".into()))?;
    create_dir(out)?;
    output::write_trace(&out.join("trace.csv"), &trace)?;
    output::write_params(&out.join("params.csv"), kernel, &trace)?;
    output::write_allocations(&out.join("allocations.csv"), &trace)?;
    let post = kplus_posterior(&trace)?;
    output::write_kplus(&out.join("kplus.json"), &post, &trace)?;
    let khat = cfg.identify.khat.unwrap_or(post.mode);
    write_identified(kernel, &trace, khat, cfg.seed, out)
}

fn write_identified<K: Kernel>(
    kernel: &K,
    trace: &ChainTrace<K::Params>,
    khat: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let opts = IdentifyOptions {
        seed,
        ..IdentifyOptions::default()
    };
    let path = out.join("identified.json");
    match identify(trace, khat, |p| kernel.functional(p), |p| kernel.summary(p), &opts) {
        Ok(id) => output::write_identified(&path, kernel, &id),
        Err(e @ sparsemix::Error::Identification { .. }) => {
            log::warn!("{e}");
            output::write_identification_failure(&path, khat, &e.to_string())
        }
        Err(e) => Err(e.into()),
    }
}

fn reidentify<K: Kernel>(kernel: &K, cfg: &Config, run: &Path, khat: Option<usize>, out: &Path) -> Result<(), CliError> {
    let trace = output::read_trace(run, kernel, cfg.spec()?.family)?;
    let khat = match khat.or(cfg.identify.khat) {
        Some(k) => k,
        None => kplus_posterior(&trace)?.mode,
    };
    create_dir(out)?;
    write_identified(kernel, &trace, khat, cfg.seed, out)
}

fn evidence<K: ConjugateKernel>(kernel: &K, cfg: &Config, out: &Path) -> Result<(), CliError>
where
    K::Params: PartialEq,
{
    let ev = cfg
        .evidence
        .clone()
        .ok_or_else(|| CliError::User("config has no evidence section".into()))?;
    let e0 = match (ev.e0, cfg.spec()?.precision_prior) {
        (Some(e0), _) => e0,
        (None, PrecisionPrior::Fixed(e0)) => e0,
        _ => return Err(CliError::User("evidence needs evidence.e0 or a fixed model prior".into())),
    };
    if ev.k_min < 1 || ev.k_max < ev.k_min {
        return Err(CliError::User("evidence needs 1 <= k_min <= k_max".into()));
    }
    let mut rows: Vec<(usize, Result<EvidenceEstimate, String>)> = Vec::new();
    for k in ev.k_min..=ev.k_max {
        let fits = (k as f64).powi(kernel.n_obs() as i32) <= ENUMERATION_LIMIT;
        let run = BridgeRun {
            n_burnin: ev.bridge_burnin.unwrap_or(2000),
            n_keep: ev.bridge_keep.unwrap_or(5000),
            seed: cfg.seed,
            ..BridgeRun::default()
        };
        let est = match ev.method {
            _ if k == 1 => log_evidence_k1(kernel),
            EvidenceMethodConfig::Enumeration => log_evidence_enumeration(kernel, k, e0),
            EvidenceMethodConfig::Auto if fits => log_evidence_enumeration(kernel, k, e0),
            _ => estimate_evidence_bridge(kernel, k, e0, &run),
        };
        match est {
            Ok(e) => rows.push((k, Ok(e))),
            Err(e @ (sparsemix::Error::Unsupported(_) | sparsemix::Error::Domain(_))) => {
                log::warn!("K = {k}: {e}");
                rows.push((k, Err(e.to_string())));
            }
            Err(e) => return Err(e.into()),
        }
    }
    create_dir(out)?;
    output::write_evidence(&out.join("evidence.csv"), &rows)
}
