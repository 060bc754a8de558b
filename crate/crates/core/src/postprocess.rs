//! Posterior summaries: the distribution of K₊, identification of the
//! component labels by clustering parameter draws, and partition metrics.

use std::collections::HashMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::RngStream;
use crate::sampler::ChainTrace;

#[derive(Clone, Debug, PartialEq)]
pub struct KplusPosterior {
    /// `pmf[j] = P(K₊ = j + 1 | y)`, up to the largest observed value.
    pub pmf: Vec<f64>,
    pub mode: usize,
}

impl KplusPosterior {
    pub fn prob(&self, kplus: usize) -> f64 {
        if kplus == 0 {
            return 0.0;
        }
        self.pmf.get(kplus - 1).copied().unwrap_or(0.0)
    }
}

/// Empirical pmf of K₊; ties in the mode go to the smaller value.
pub fn kplus_pmf(values: &[usize]) -> Result<KplusPosterior> {
    if values.is_empty() {
        return Err(Error::domain("K+ posterior needs at least one draw"));
    }
    if values.contains(&0) {
        return Err(Error::domain("K+ values must be at least 1"));
    }
    let max = *values.iter().max().unwrap();
    let mut hist = vec![0usize; max];
    for &v in values {
        hist[v - 1] += 1;
    }
    let mut mode = 1;
    for (j, &h) in hist.iter().enumerate() {
        if h > hist[mode - 1] {
            mode = j + 1;
        }
    }
    let n = values.len() as f64;
    Ok(KplusPosterior {
        pmf: hist.into_iter().map(|h| h as f64 / n).collect(),
        mode,
    })
}

pub fn kplus_posterior<P>(trace: &ChainTrace<P>) -> Result<KplusPosterior> {
    kplus_pmf(&trace.kplus())
}

/// Best-of-restarts Lloyd clustering.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(point, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut RngStream, max_iter: usize) -> KMeans {
    let n = points.len();
    // k-means++ seeding
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            } else {
                // reseed an empty cell at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&i, &j| {
                        sq_dist(&points[i], &centroids[assignment[i]]).total_cmp(&sq_dist(&points[j], &centroids[assignment[j]]))
                    })
                    .unwrap();
                centroids[c] = points[far].clone();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    KMeans {
        centroids,
        assignment,
        inertia,
    }
}

/// k-means with `restarts` k-means++ initialisations; the lowest inertia
/// wins, ties going to the earliest restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return Err(Error::domain(format!("k-means needs 1 <= k <= n, got k = {k}, n = {}", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::domain("k-means points must be finite and of equal dimension"));
    }
    let master = RngStream::new(seed, 0x6b6d);
    let runs: Vec<KMeans> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| kmeans_once(points, k, &mut master.child(r), 300))
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.inertia < runs[best].inertia {
            best = i;
        }
    }
    Ok(runs.into_iter().nth(best).unwrap())
}

/// Posterior mean and shortest 95% interval of a scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Shortest interval holding a `level` fraction of the draws.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() || !(level > 0.0 && level <= 1.0) {
        return Err(Error::domain("HPD interval needs draws and a level in (0, 1]"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let m = ((level * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (sorted[0], sorted[m - 1]);
    for i in 1..=n - m {
        let (lo, hi) = (sorted[i], sorted[i + m - 1]);
        if hi - lo < best.1 - best.0 {
            best = (lo, hi);
        }
    }
    Ok(best)
}

fn summarize(draws: &[f64]) -> IntervalSummary {
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let (lower, upper) = hpd_interval(draws, 0.95).unwrap_or((mean, mean));
    IntervalSummary { mean, lower, upper }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSummary {
    pub weight: IntervalSummary,
    /// One entry per value returned by the summary projection.
    pub params: Vec<IntervalSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiedModel {
    pub khat: usize,
    /// Ordered by the lexicographic order of the k-means centroids.
    pub classes: Vec<ClassSummary>,
    /// One-based labels; empty when the trace holds no allocations.
    pub final_partition: Vec<usize>,
    pub n_draws_used: usize,
    pub n_draws_discarded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifyOptions {
    pub restarts: usize,
    pub min_sweeps: usize,
    /// Largest tolerated fraction of qualifying sweeps that are not uniquely
    /// labelled.
    pub max_discard: f64,
    pub seed: u64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            restarts: 20,
            min_sweeps: 50,
            max_discard: 0.5,
            seed: 0,
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Resolve label switching among sweeps with `K₊ = khat` by k-means on the
/// component functionals, then summarise the relabelled draws.
pub fn identify<P, F, S>(
    trace: &ChainTrace<P>,
    khat: usize,
    functional: F,
    summary: S,
    opts: &IdentifyOptions,
) -> Result<IdentifiedModel>
where
    F: Fn(&P) -> Vec<f64> + Sync,
    S: Fn(&P) -> Vec<f64>,
{
    if khat == 0 {
        return Err(Error::domain("khat must be at least 1"));
    }
    let qualifying: Vec<usize> = (0..trace.len()).filter(|&s| trace.records[s].kplus == khat).collect();
    if qualifying.len() < opts.min_sweeps.max(1) {
        return Err(Error::Identification {
            khat,
            message: format!(
                "only {} sweeps have K+ = {khat}; at least {} are required",
                qualifying.len(),
                opts.min_sweeps.max(1)
            ),
        });
    }

    // per qualifying sweep: cell of each of its khat components
    let cells: Vec<Vec<usize>> = if khat == 1 {
        vec![vec![0]; qualifying.len()]
    } else {
        let mut points: Vec<(Vec<f64>, usize, usize)> = Vec::with_capacity(qualifying.len() * khat);
        for (q, &s) in qualifying.iter().enumerate() {
            for (c, comp) in trace.records[s].components.iter().enumerate() {
                points.push((functional(&comp.params), q, c));
            }
        }
        // canonical point order makes the clustering independent of labels
        points.sort_by(|a, b| lex_cmp(&a.0, &b.0).then(a.1.cmp(&b.1)));
        let coords: Vec<Vec<f64>> = points.iter().map(|p| p.0.clone()).collect();
        let km = kmeans(&coords, khat, opts.restarts, opts.seed)?;
        let mut order: Vec<usize> = (0..khat).collect();
        order.sort_by(|&a, &b| lex_cmp(&km.centroids[a], &km.centroids[b]));
        let mut rank = vec![0; khat];
        for (r, &c) in order.iter().enumerate() {
            rank[c] = r;
        }
        let mut cells = vec![vec![0; khat]; qualifying.len()];
        for (p, &a) in points.iter().zip(&km.assignment) {
            cells[p.1][p.2] = rank[a];
        }
        cells
    };

    let mut kept = Vec::new();
    let mut discarded = 0;
    for (q, cell) in cells.iter().enumerate() {
        let mut seen = vec![false; khat];
        let unique = cell.iter().all(|&c| !std::mem::replace(&mut seen[c], true));
        if unique {
            kept.push(q);
        } else {
            discarded += 1;
        }
    }
    if discarded as f64 > opts.max_discard * qualifying.len() as f64 {
        return Err(Error::Identification {
            khat,
            message: format!(
                "{discarded} of {} qualifying sweeps are not uniquely labelled",
                qualifying.len()
            ),
        });
    }

    let mut weight_draws = vec![Vec::with_capacity(kept.len()); khat];
    let mut param_draws: Vec<Vec<Vec<f64>>> = vec![Vec::new(); khat];
    let n_obs = trace.n_obs;
    let mut votes: Vec<Vec<u32>> = Vec::new();
    let has_alloc = kept.iter().all(|&q| trace.records[qualifying[q]].allocations.is_some());
    if has_alloc {
        votes = vec![vec![0; khat]; n_obs];
    }
    for &q in &kept {
        let rec = &trace.records[qualifying[q]];
        let mut map = HashMap::with_capacity(khat);
        for (c, comp) in rec.components.iter().enumerate() {
            let cell = cells[q][c];
            map.insert(comp.component as u32, cell);
            weight_draws[cell].push(comp.weight);
            let values = summary(&comp.params);
            if param_draws[cell].is_empty() {
                param_draws[cell] = vec![Vec::with_capacity(kept.len()); values.len()];
            }
            for (d, v) in param_draws[cell].iter_mut().zip(values) {
                d.push(v);
            }
        }
        if has_alloc {
            for (i, l) in rec.allocations.as_ref().unwrap().iter().enumerate() {
                votes[i][map[l]] += 1;
            }
        }
    }
    let classes = (0..khat)
        .map(|c| ClassSummary {
            weight: summarize(&weight_draws[c]),
            params: param_draws[c].iter().map(|d| summarize(d)).collect(),
        })
        .collect();
    let final_partition = votes
        .iter()
        .map(|v| {
            let mut best = 0;
            for (c, &x) in v.iter().enumerate() {
                if x > v[best] {
                    best = c;
                }
            }
            best + 1
        })
        .collect();
    Ok(IdentifiedModel {
        khat,
        classes,
        final_partition,
        n_draws_used: kept.len(),
        n_draws_discarded: discarded,
    })
}

fn choose2(x: u64) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index of two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("label vectors differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        // both partitions trivial (one block or all singletons)
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Misclassification rate under the best one-to-one matching of predicted
/// to true labels.
pub fn error_rate(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::domain("label vectors differ in length"));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let index = |v: &[usize]| {
        let mut ids: Vec<usize> = v.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let pi = index(predicted);
    let ti = index(truth);
    let size = pi.len().max(ti.len());
    let mut m = Matrix::new(size, size, 0i64);
    for (&p, &t) in predicted.iter().zip(truth) {
        let r = pi.binary_search(&p).unwrap();
        let c = ti.binary_search(&t).unwrap();
        m[(r, c)] += 1;
    }
    let (matched, _) = kuhn_munkres(&m);
    Ok(1.0 - matched as f64 / predicted.len() as f64)
}
