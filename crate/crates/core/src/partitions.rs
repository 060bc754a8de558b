//! Allocation bookkeeping and the exact partition priors of both model
//! families.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::math::{ln_gamma, sample_log_dirichlet};

/// Component labels `S_1..S_N` (zero-based) with occupancy counts kept in
/// sync on every move.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationState {
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl AllocationState {
    /// Build from zero-based labels over `n_components` components.
    pub fn new(labels: Vec<usize>, n_components: usize) -> Result<Self> {
        let mut counts = vec![0; n_components];
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_components {
                return Err(Error::domain(format!(
                    "label {l} of observation {i} exceeds {n_components} components"
                )));
            }
            counts[l] += 1;
        }
        Ok(AllocationState { labels, counts })
    }

    /// A state that only carries counts, for evaluating priors.
    pub fn from_counts(counts: &[usize]) -> Self {
        let labels = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
            .collect();
        AllocationState {
            labels,
            counts: counts.to_vec(),
        }
    }

    pub fn n_obs(&self) -> usize {
        self.labels.len()
    }

    pub fn n_components(&self) -> usize {
        self.counts.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Number of non-empty components K₊.
    pub fn kplus(&self) -> usize {
        kplus(&self.counts)
    }

    /// Index of the highest occupied component.
    pub fn max_occupied(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0)
    }

    /// Move observation `i` to component `k`, updating counts in O(1).
    #[inline]
    pub fn reassign(&mut self, i: usize, k: usize) {
        let old = self.labels[i];
        if old != k {
            self.counts[old] -= 1;
            self.counts[k] += 1;
            self.labels[i] = k;
        }
    }

    /// Grow or shrink the component range. Shrinking below an occupied
    /// component is refused.
    pub fn resize_components(&mut self, n_components: usize) -> Result<()> {
        if let Some(m) = self.max_occupied() {
            if m >= n_components {
                return Err(Error::domain(format!(
                    "cannot truncate to {n_components} components: component {m} is occupied"
                )));
            }
        }
        self.counts.resize(n_components, 0);
        Ok(())
    }

    /// Observation indices per component.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.counts.iter().map(|&c| Vec::with_capacity(c)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// True iff the cached counts agree with a full recount of the labels.
    pub fn counts_consistent(&self) -> bool {
        let mut counts = vec![0; self.counts.len()];
        for &l in &self.labels {
            if l >= counts.len() {
                return false;
            }
            counts[l] += 1;
        }
        counts == self.counts
    }

    pub fn log_prior_sfm(&self, e0: f64, k: usize) -> Result<f64> {
        log_prior_partition_sfm(&self.counts, e0, k)
    }

    pub fn log_prior_dpm(&self, alpha: f64) -> f64 {
        log_prior_partition_dpm(&self.counts, alpha)
    }
}

/// Number of positive counts.
pub fn kplus(counts: &[usize]) -> usize {
    counts.iter().filter(|&&c| c > 0).count()
}

/// Log prior of the *partition* induced by `counts` under a K-component
/// symmetric Dirichlet(e0) weight prior:
///
/// `K!/(K−K₊)! · Γ(K e0)/Γ(N + K e0) · Π_{N_k>0} Γ(N_k + e0)/Γ(e0)`.
pub fn log_prior_partition_sfm(counts: &[usize], e0: f64, k: usize) -> Result<f64> {
    let kp = kplus(counts);
    if k < kp {
        return Err(Error::domain(format!("K = {k} is smaller than K+ = {kp}")));
    }
    if !(e0 > 0.0 && e0.is_finite()) {
        return Err(Error::domain(format!("e0 must be positive, got {e0}")));
    }
    let falling = ln_gamma(k as f64 + 1.0) - ln_gamma((k - kp) as f64 + 1.0);
    Ok(falling + log_prior_allocation_unchecked(counts, e0, k))
}

/// Log prior of one *labelled* allocation vector with these counts, i.e.
/// the Dirichlet-multinomial probability without the K!/(K−K₊)! factor.
pub fn log_prior_allocation_sfm(counts: &[usize], e0: f64, k: usize) -> Result<f64> {
    if k < kplus(counts) {
        return Err(Error::domain(format!("K = {k} is smaller than K+ = {}", kplus(counts))));
    }
    if !(e0 > 0.0 && e0.is_finite()) {
        return Err(Error::domain(format!("e0 must be positive, got {e0}")));
    }
    Ok(log_prior_allocation_unchecked(counts, e0, k))
}

fn log_prior_allocation_unchecked(counts: &[usize], e0: f64, k: usize) -> f64 {
    let n: usize = counts.iter().sum();
    let ke0 = k as f64 * e0;
    let lg_e0 = ln_gamma(e0);
    let occupied: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| ln_gamma(c as f64 + e0) - lg_e0)
        .sum();
    ln_gamma(ke0) - ln_gamma(n as f64 + ke0) + occupied
}

/// Log prior of the partition under a Dirichlet process with concentration
/// `alpha`: `α^{K₊} Γ(α)/Γ(N + α) Π_{N_k>0} Γ(N_k)`.
pub fn log_prior_partition_dpm(counts: &[usize], alpha: f64) -> f64 {
    let n: usize = counts.iter().sum();
    let mut kp = 0usize;
    let mut blocks = 0.0;
    for &c in counts.iter().filter(|&&c| c > 0) {
        kp += 1;
        blocks += ln_gamma(c as f64);
    }
    kp as f64 * alpha.ln() + ln_gamma(alpha) - ln_gamma(n as f64 + alpha) + blocks
}

/// Probability that observation i opens a new cluster under the SFM,
/// given `kplus_minus` clusters among the other `n − 1` observations.
pub fn prob_new_cluster_sfm(n: usize, e0: f64, k: usize, kplus_minus: usize) -> Result<f64> {
    if kplus_minus > k {
        return Err(Error::domain(format!("K+ = {kplus_minus} exceeds K = {k}")));
    }
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    let ke0 = k as f64 * e0;
    Ok(e0 * (k - kplus_minus) as f64 / (n as f64 - 1.0 + ke0))
}

/// Probability of opening a new cluster under the DPM: `α / (N − 1 + α)`.
pub fn prob_new_cluster_dpm(n: usize, alpha: f64) -> f64 {
    alpha / (n as f64 - 1.0 + alpha)
}

/// Monte Carlo estimate of the prior pmf of K₊ for N observations from a
/// K-component mixture with Dirichlet(e0) weights. Entry `j` is `P(K₊ = j+1)`.
pub fn prior_kplus<R: Rng + ?Sized>(
    k: usize,
    e0: f64,
    n: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if k == 0 || n == 0 || n_draws == 0 {
        return Err(Error::domain("prior_kplus needs K, N and n_draws >= 1"));
    }
    if !(e0 > 0.0 && e0.is_finite()) {
        return Err(Error::domain(format!("e0 must be positive, got {e0}")));
    }
    let alphas = vec![e0; k];
    let mut hist = vec![0usize; k];
    for _ in 0..n_draws {
        let log_eta = sample_log_dirichlet(&alphas, rng);
        // multinomial draw via sequential conditional binomials
        let mut remaining = n as u64;
        let mut rest_mass = 1.0f64;
        let mut occupied = 0;
        for (j, le) in log_eta.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let eta = le.exp();
            let nk = if j == k - 1 || rest_mass <= 0.0 {
                remaining
            } else {
                let p = (eta / rest_mass).clamp(0.0, 1.0);
                Binomial::new(remaining, p).expect("valid binomial").sample(rng)
            };
            if nk > 0 {
                occupied += 1;
            }
            remaining -= nk;
            rest_mass -= eta;
        }
        hist[occupied.max(1) - 1] += 1;
    }
    Ok(hist.into_iter().map(|h| h as f64 / n_draws as f64).collect())
}

/// Iterator over all set partitions of `n` items into at most `max_blocks`
/// blocks, as restricted-growth label vectors (first item in block 0, each
/// new block gets the next unused label).
pub struct SetPartitions {
    labels: Vec<usize>,
    block_max: Vec<usize>,
    max_blocks: usize,
    done: bool,
}

impl SetPartitions {
    pub fn new(n: usize, max_blocks: usize) -> Self {
        SetPartitions {
            labels: vec![0; n],
            block_max: vec![0; n],
            max_blocks: max_blocks.max(1),
            done: n == 0,
        }
    }
}

impl Iterator for SetPartitions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.labels.clone();
        // advance: find rightmost position that can be incremented
        let n = self.labels.len();
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            let prev_max = self.block_max[i - 1];
            let cap = (prev_max + 1).min(self.max_blocks - 1);
            if self.labels[i] < cap {
                self.labels[i] += 1;
                self.block_max[i] = prev_max.max(self.labels[i]);
                for j in i + 1..n {
                    self.labels[j] = 0;
                    self.block_max[j] = self.block_max[j - 1];
                }
                break;
            }
        }
        Some(out)
    }
}

/// Block sizes of a label vector over `n_components` components.
pub fn counts_of(labels: &[usize], n_components: usize) -> Vec<usize> {
    let mut c = vec![0; n_components];
    for &l in labels {
        c[l] += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;

    /// Every labelled allocation of n items over k components.
    fn all_allocations(n: usize, k: usize) -> Vec<Vec<usize>> {
        let total = k.pow(n as u32);
        (0..total)
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let l = code % k;
                        code /= k;
                        l
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn kplus_examples() {
        assert_eq!(kplus(&[3, 0, 2]), 2);
        assert_eq!(kplus(&[5]), 1);
        let mut c = vec![0; 10];
        c[9] = 7;
        assert_eq!(kplus(&c), 1);
    }

    #[test]
    fn sfm_two_point_examples() {
        // P(S1 = S2) under Dir(1, 1) is 2 E[η²] = 2/3
        let together = log_prior_partition_sfm(&[2, 0], 1.0, 2).unwrap();
        assert!((together - (2.0f64 / 3.0).ln()).abs() < 1e-12);
        let apart = log_prior_partition_sfm(&[1, 1], 1.0, 2).unwrap();
        assert!((apart - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(log_prior_partition_sfm(&[1, 1, 1], 1.0, 2).is_err());
    }

    #[test]
    fn dpm_two_point_examples() {
        let one = log_prior_partition_dpm(&[2], 1.0);
        let two = log_prior_partition_dpm(&[1, 1], 1.0);
        assert!((one - 0.5f64.ln()).abs() < 1e-12);
        assert!((two - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sfm_prior_normalises_over_labelled_allocations() {
        for n in 1..=5 {
            for k in 1..=3 {
                for &e0 in &[0.05, 1.0, 4.0] {
                    let total: f64 = all_allocations(n, k)
                        .iter()
                        .map(|a| log_prior_allocation_sfm(&counts_of(a, k), e0, k).unwrap().exp())
                        .sum();
                    assert!((total - 1.0).abs() < 1e-10, "n={n} k={k} e0={e0}: {total}");
                    let total_partitions: f64 = SetPartitions::new(n, k)
                        .map(|a| log_prior_partition_sfm(&counts_of(&a, n), e0, k).unwrap().exp())
                        .sum();
                    assert!((total_partitions - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn dpm_prior_normalises_over_set_partitions() {
        for n in 1..=4 {
            for &alpha in &[0.05, 1.0, 2.0, 7.5] {
                let parts: Vec<_> = SetPartitions::new(n, n).collect();
                let total: f64 = parts
                    .iter()
                    .map(|a| log_prior_partition_dpm(&counts_of(a, n), alpha).exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-10, "n={n} alpha={alpha}: {total}");
            }
        }
        // Bell numbers
        assert_eq!(SetPartitions::new(3, 3).count(), 5);
        assert_eq!(SetPartitions::new(4, 4).count(), 15);
        assert_eq!(SetPartitions::new(5, 2).count(), 16);
    }

    #[test]
    fn tiny_precision_is_finite() {
        let v = log_prior_partition_sfm(&[50, 43, 0, 0], 1e-10, 4).unwrap();
        assert!(v.is_finite());
        let v = log_prior_partition_dpm(&[50, 43], 1e-10);
        assert!(v.is_finite());
    }

    #[test]
    fn new_cluster_probabilities() {
        assert_eq!(prob_new_cluster_sfm(50, 0.3, 10, 10).unwrap(), 0.0);
        let p = prob_new_cluster_sfm(100, 0.005, 10, 2).unwrap();
        assert!((p - 0.005 * 8.0 / 99.05).abs() < 1e-15);
        assert!((p - 4.038e-4).abs() < 1e-6);
        // e0 → ∞ with one free component gives 1/K
        let p = prob_new_cluster_sfm(100, 1e9, 10, 9).unwrap();
        assert!((p - 0.1).abs() < 1e-6);
        assert!(prob_new_cluster_sfm(10, 1.0, 3, 4).is_err());

        assert_eq!(prob_new_cluster_dpm(2, 1.0), 0.5);
        assert!((prob_new_cluster_dpm(100, 0.05) - 5.048e-4).abs() < 1e-7);
        assert!(prob_new_cluster_dpm(100, 1e-300) < 1e-299);
    }

    #[test]
    fn sequential_urn_matches_prior() {
        // Simulate allocations one at a time with the SFM urn and compare
        // partition frequencies against the closed form.
        let (n, k, e0) = (4usize, 3usize, 0.7f64);
        let mut rng = RngStream::new(11, 0);
        let draws = 200_000;
        let mut freq = std::collections::HashMap::<Vec<usize>, usize>::new();
        for _ in 0..draws {
            let mut counts = vec![0usize; k];
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let w: Vec<f64> = counts.iter().map(|&c| c as f64 + e0).collect();
                let _ = i;
                let l = crate::math::sample_categorical(&w, &mut rng).unwrap();
                counts[l] += 1;
                labels.push(l);
            }
            // canonical restricted-growth form
            let mut map = vec![usize::MAX; k];
            let mut next = 0;
            let canon: Vec<usize> = labels
                .iter()
                .map(|&l| {
                    if map[l] == usize::MAX {
                        map[l] = next;
                        next += 1;
                    }
                    map[l]
                })
                .collect();
            *freq.entry(canon).or_default() += 1;
        }
        for part in SetPartitions::new(n, k) {
            let p = log_prior_partition_sfm(&counts_of(&part, n), e0, k).unwrap().exp();
            let f = *freq.get(&part).unwrap_or(&0) as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((f - p).abs() < 4.0 * se + 1e-9, "{part:?}: {f} vs {p}");
        }
    }

    #[test]
    fn prior_kplus_shapes() {
        let mut rng = RngStream::new(5, 1);
        let dense = prior_kplus(10, 4.0, 100, 20_000, &mut rng).unwrap();
        let mode = dense
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
            + 1;
        assert!(mode >= 8);
        let sparse = prior_kplus(10, 0.005, 100, 20_000, &mut rng).unwrap();
        assert!(sparse[0] > sparse[1..].iter().copied().fold(0.0, f64::max));
        assert!((sparse.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let single = prior_kplus(1, 0.3, 100, 100, &mut rng).unwrap();
        assert_eq!(single, vec![1.0]);
    }

    #[test]
    fn reassign_keeps_counts() {
        let mut s = AllocationState::new(vec![0, 0, 1, 2], 4).unwrap();
        s.reassign(0, 3);
        s.reassign(1, 1);
        assert_eq!(s.counts(), &[0, 2, 1, 1]);
        assert!(s.counts_consistent());
        assert_eq!(s.kplus(), 3);
        assert!(s.resize_components(3).is_err());
        s.resize_components(6).unwrap();
        assert_eq!(s.n_components(), 6);
        assert!(AllocationState::new(vec![0, 5], 3).is_err());
    }
}
