//! Embedded fear data, latent class simulation and the replication harness
//! for the simulation study.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::data::CategoricalData;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, LatentClassKernel};
use crate::math::{sample_categorical, splitmix64, RngStream};
use crate::postprocess::{adjusted_rand_index, error_rate, identify, kplus_posterior, IdentifyOptions};
use crate::sampler::{run_chain, ModelSpec, PrecisionPrior, SamplerConfig};

/// Counts indexed `[M][C][F]` (motor activity 1..4, crying 1..3, fear 1..3).
pub const FEAR_TABLE: [[[usize; 3]; 3]; 4] = [
    [[5, 4, 1], [0, 1, 2], [2, 0, 2]],
    [[15, 4, 2], [2, 3, 1], [4, 4, 2]],
    [[3, 3, 4], [0, 2, 3], [1, 1, 7]],
    [[2, 1, 2], [0, 1, 3], [0, 3, 3]],
];

/// Expand [`FEAR_TABLE`] to 93 rows of one-based `(M, C, F)` codes.
pub fn load_fear() -> CategoricalData {
    let mut rows = Vec::with_capacity(93);
    for (m, by_c) in FEAR_TABLE.iter().enumerate() {
        for (c, by_f) in by_c.iter().enumerate() {
            for (f, &count) in by_f.iter().enumerate() {
                for _ in 0..count {
                    rows.push(vec![m + 1, c + 1, f + 1]);
                }
            }
        }
    }
    CategoricalData::new(&rows, vec![4, 3, 3])
        .expect("embedded table is valid")
        .with_names(vec!["M".into(), "C".into(), "F".into()])
}

/// Two-class latent class design.
#[derive(Clone, Debug, PartialEq)]
pub struct SimDesign {
    pub n_obs: usize,
    pub weights: Vec<f64>,
    /// `occurrence[class][feature][category]`.
    pub occurrence: Vec<Vec<Vec<f64>>>,
    pub n_replications: usize,
    pub seed: u64,
}

impl SimDesign {
    /// Equal-size classes over three features with 3, 3 and 4 categories.
    pub fn two_class(n_obs: usize, n_replications: usize, seed: u64) -> Self {
        SimDesign {
            n_obs,
            weights: vec![0.5, 0.5],
            occurrence: vec![
                vec![vec![0.1, 0.1, 0.8], vec![0.1, 0.7, 0.2], vec![0.7, 0.1, 0.1, 0.1]],
                vec![vec![0.2, 0.6, 0.2], vec![0.2, 0.2, 0.6], vec![0.2, 0.1, 0.1, 0.6]],
            ],
            n_replications,
            seed,
        }
    }

    pub fn cards(&self) -> Vec<usize> {
        self.occurrence.first().map(|c| c.iter().map(|f| f.len()).collect()).unwrap_or_default()
    }

    /// Number of free parameters per component, Σ (D_j − 1).
    pub fn param_dim(&self) -> usize {
        self.cards().iter().map(|d| d - 1).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let close = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() < 1e-9 && v.iter().all(|p| *p >= 0.0);
        if self.weights.len() != self.occurrence.len() || self.weights.is_empty() || !close(&self.weights) {
            return Err(Error::domain("class weights must be a probability vector, one per class"));
        }
        let cards = self.cards();
        for class in &self.occurrence {
            if class.iter().map(|f| f.len()).collect::<Vec<_>>() != cards {
                return Err(Error::domain("every class needs the same feature layout"));
            }
            if !class.iter().all(|f| close(f)) {
                return Err(Error::domain("occurrence rows must sum to one"));
            }
        }
        Ok(())
    }
}

/// Draw one dataset; returns the data and one-based true class labels.
pub fn simulate_lca<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<(CategoricalData, Vec<usize>)> {
    design.validate()?;
    let mut rows = Vec::with_capacity(design.n_obs);
    let mut truth = Vec::with_capacity(design.n_obs);
    for _ in 0..design.n_obs {
        let class = sample_categorical(&design.weights, rng)?;
        truth.push(class + 1);
        let row = design.occurrence[class]
            .iter()
            .map(|p| sample_categorical(p, rng).map(|c| c + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((CategoricalData::new(&rows, design.cards())?, truth))
}

/// One model fitted in every replication.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyCell {
    /// Label of the underlying α prior, e.g. `G(1,20)`.
    pub prior: String,
    pub method: String,
    pub k: Option<usize>,
    pub spec: ModelSpec,
}

/// SFM with K = 10 and K = 20 and the DPM for each α prior, the finite
/// mixtures matched to the DPM prior.
pub fn default_grid() -> Result<Vec<StudyCell>> {
    let mut cells = Vec::new();
    for (a, b) in [(1.0, 20.0), (1.0, 2.0), (2.0, 1.0)] {
        let prior = format!("G({a},{b})");
        for k in [10, 20] {
            cells.push(StudyCell {
                prior: prior.clone(),
                method: "SFM".into(),
                k: Some(k),
                spec: ModelSpec::sfm_matched_to_dpm(a, b, k)?,
            });
        }
        cells.push(StudyCell {
            prior,
            method: "DPM".into(),
            k: None,
            spec: ModelSpec::dpm(PrecisionPrior::Gamma { shape: a, rate: b })?,
        });
    }
    Ok(cells)
}

/// Outcome of one model on one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub cell: usize,
    pub mean_precision: f64,
    pub khat: usize,
    /// `None` when identification failed.
    pub ari: Option<f64>,
    pub err: Option<f64>,
    pub failure: Option<String>,
}

/// Per-cell averages across replications.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub prior: String,
    pub method: String,
    pub k: Option<usize>,
    pub mean_precision: f64,
    pub mean_khat: f64,
    pub mean_ari: f64,
    pub mean_err: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResults {
    pub rows: Vec<StudyRow>,
    pub replications: Vec<ReplicationResult>,
}

/// Seed of the chain fitted to replication `rep` with model `cell`.
pub fn study_seed(base: u64, rep: usize, cell: usize) -> u64 {
    splitmix64(splitmix64(base ^ 0x5eed) ^ ((rep as u64) << 20) ^ cell as u64)
}

fn fit_cell(data: &CategoricalData, truth: &[usize], cell: &StudyCell, cfg: &SamplerConfig) -> Result<(f64, usize, f64, f64)> {
    let kernel = LatentClassKernel::new(data.clone(), 1.0)?;
    let trace = run_chain(&kernel, &cell.spec, cfg)?;
    let khat = kplus_posterior(&trace)?.mode;
    let opts = IdentifyOptions {
        seed: cfg.seed,
        ..IdentifyOptions::default()
    };
    let partition = if khat == 1 {
        vec![1; data.n_obs()]
    } else {
        identify(&trace, khat, |p| kernel.functional(p), |p| kernel.summary(p), &opts)?.final_partition
    };
    Ok((
        trace.mean_precision(),
        khat,
        adjusted_rand_index(&partition, truth)?,
        error_rate(&partition, truth)?,
    ))
}

/// Run every cell of `grid` on `design.n_replications` simulated datasets.
/// Replications run in parallel; `workers` bounds the pool size.
pub fn run_simulation_study(
    design: &SimDesign,
    grid: &[StudyCell],
    cfg: &SamplerConfig,
    workers: Option<usize>,
) -> Result<StudyResults> {
    design.validate()?;
    let work = || -> Vec<ReplicationResult> {
        (0..design.n_replications)
            .into_par_iter()
            .flat_map_iter(|rep| {
                let mut rng = RngStream::new(design.seed, rep as u64);
                let sim = simulate_lca(design, &mut rng);
                grid.iter()
                    .enumerate()
                    .map(|(c, cell)| {
                        let outcome = match &sim {
                            Ok((data, truth)) => {
                                let cfg = SamplerConfig {
                                    seed: study_seed(design.seed, rep, c),
                                    record_full_state: false,
                                    ..cfg.clone()
                                };
                                fit_cell(data, truth, cell, &cfg)
                            }
                            Err(e) => Err(Error::Data(e.to_string())),
                        };
                        match outcome {
                            Ok((pp, khat, ari, err)) => ReplicationResult {
                                replication: rep,
                                cell: c,
                                mean_precision: pp,
                                khat,
                                ari: Some(ari),
                                err: Some(err),
                                failure: None,
                            },
                            Err(e) => {
                                log::warn!("replication {rep}, cell {c}: {e}");
                                ReplicationResult {
                                    replication: rep,
                                    cell: c,
                                    mean_precision: f64::NAN,
                                    khat: 0,
                                    ari: None,
                                    err: None,
                                    failure: Some(e.to_string()),
                                }
                            }
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let replications = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::domain(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let rows = if design.n_replications == 0 {
        Vec::new()
    } else {
        grid.iter()
            .enumerate()
            .map(|(c, cell)| summarize_cell(cell, replications.iter().filter(|r| r.cell == c)))
            .collect()
    };
    Ok(StudyResults { rows, replications })
}

fn summarize_cell<'a>(cell: &StudyCell, results: impl Iterator<Item = &'a ReplicationResult>) -> StudyRow {
    let mut ok = Vec::new();
    let mut failed = 0;
    for r in results {
        match (r.ari, r.err) {
            (Some(a), Some(e)) => ok.push((r.mean_precision, r.khat as f64, a, e)),
            _ => failed += 1,
        }
    }
    let n = ok.len().max(1) as f64;
    let avg = |f: fn(&(f64, f64, f64, f64)) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(f).sum::<f64>() / n };
    StudyRow {
        prior: cell.prior.clone(),
        method: cell.method.clone(),
        k: cell.k,
        mean_precision: avg(|r| r.0),
        mean_khat: avg(|r| r.1),
        mean_ari: avg(|r| r.2),
        mean_err: avg(|r| r.3),
        n_ok: ok.len(),
        n_failed: failed,
    }
}

/// Columns: prior, method, K, E[pp|y], khat, ari, err, n_ok, n_failed.
pub fn write_study_csv(rows: &[StudyRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["prior", "method", "K", "E[pp|y]", "khat", "ari", "err", "n_ok", "n_failed"])?;
    for r in rows {
        w.write_record([
            r.prior.clone(),
            r.method.clone(),
            r.k.map_or_else(String::new, |k| k.to_string()),
            format!("{:.4}", r.mean_precision),
            format!("{:.3}", r.mean_khat),
            format!("{:.3}", r.mean_ari),
            format!("{:.3}", r.mean_err),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
