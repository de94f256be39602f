//! The sub-cluster split/merge sampler.
//!
//! Each sweep: (1) sample assignments given instantiated component
//! parameters and DP weights, shard-parallel; (2) resample component
//! parameters from NIW posteriors; (3) maintain two sub-clusters per
//! cluster (their own weights, parameters, and point assignments); (4)
//! propose splits of each cluster into its sub-clusters and merges of
//! random cluster pairs, with Metropolis-Hastings acceptance on conjugate
//! marginal likelihoods. New clusters only ever appear through splits, so
//! the parallel assignment step needs no new-cluster bookkeeping.
//!
//! Determinism: every random decision draws from a ChaCha stream derived
//! from (seed, sweep, role, shard); shard boundaries depend only on the
//! frame count and shard count, and shard outputs land in disjoint slices,
//! so results are reproducible for a fixed (seed, shards) regardless of
//! thread scheduling.

use super::niw::{
    log_predictive, marginal_log_likelihood, posterior, sample_gaussian, GaussParams, GaussStats,
    NiwPrior,
};
use super::{DpgmmConfig, DpgmmError, DpgmmResult};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

#[derive(Debug, Clone)]
pub(crate) struct SubComponent {
    pub stats: GaussStats,
    pub params: GaussParams,
    pub log_weight: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Cluster {
    pub stats: GaussStats,
    pub params: GaussParams,
    pub log_weight: f64,
    pub sub: [SubComponent; 2],
}

/// Fitted mixture: per-cluster sufficient statistics, sampled parameters,
/// mixture weights, and the final frame assignments.
#[derive(Debug, Clone)]
pub struct DpgmmState {
    pub(crate) clusters: Vec<Cluster>,
    pub assignments: Vec<usize>,
    pub(crate) sub_assignments: Vec<u8>,
    pub prior: NiwPrior,
    pub concentration: f64,
    /// Per-sweep joint data log-likelihood under the instantiated mixture.
    pub log_likelihood_trace: Vec<f64>,
}

impl DpgmmState {
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.stats.count()).collect()
    }

    pub fn cluster_mean(&self, k: usize) -> &DVector<f64> {
        &self.clusters[k].params.mean
    }
}

fn derive_rng(seed: u64, sweep: u64, role: u64, shard: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(sweep.wrapping_mul(0xBF58476D1CE4E5B9))
        .wrapping_add(role.wrapping_mul(0x94D049BB133111EB))
        .wrapping_add(shard.wrapping_mul(0xD6E8FEB86659FD93));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn to_vectors(frames: &ndarray::Array2<f64>) -> Vec<DVector<f64>> {
    frames
        .rows()
        .into_iter()
        .map(|r| DVector::from_iterator(r.len(), r.iter().copied()))
        .collect()
}

/// Contiguous shard ranges covering 0..n.
fn shard_ranges(n: usize, shards: usize) -> Vec<std::ops::Range<usize>> {
    let shards = shards.max(1);
    let base = n / shards;
    let extra = n % shards;
    let mut ranges = Vec::with_capacity(shards);
    let mut at = 0;
    for s in 0..shards {
        let len = base + usize::from(s < extra);
        ranges.push(at..at + len);
        at += len;
    }
    ranges
}

fn sample_categorical<R: Rng>(log_probs: &[f64], rng: &mut R) -> usize {
    let mx = log_probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut cumulative = Vec::with_capacity(log_probs.len());
    for &lp in log_probs {
        total += (lp - mx).exp();
        cumulative.push(total);
    }
    let u = rng.random::<f64>() * total;
    cumulative
        .iter()
        .position(|&c| u <= c)
        .unwrap_or(log_probs.len() - 1)
}

/// Clusters frames into a nonparametric Gaussian mixture. All frames start
/// in one cluster; splits grow the cluster count.
pub fn fit(frames: &ndarray::Array2<f64>, cfg: &DpgmmConfig) -> DpgmmResult<DpgmmState> {
    let init = vec![0usize; frames.nrows()];
    fit_with_assignments(frames, cfg, &init)
}

/// Like [`fit`] but starting from the given assignments (labels must be
/// dense in 0..K).
pub fn fit_with_assignments(
    frames: &ndarray::Array2<f64>,
    cfg: &DpgmmConfig,
    init: &[usize],
) -> DpgmmResult<DpgmmState> {
    cfg.validate()?;
    if frames.nrows() == 0 {
        return Err(DpgmmError::EmptyInput);
    }
    if init.len() != frames.nrows() {
        return Err(DpgmmError::InvalidConfig(format!(
            "initial assignments cover {} frames, data has {}",
            init.len(),
            frames.nrows()
        )));
    }
    let data = to_vectors(frames);
    let dim = data[0].len();
    let prior = match &cfg.prior {
        Some(p) => {
            p.validate()?;
            if p.dim() != dim {
                return Err(DpgmmError::DimMismatch {
                    expected: p.dim(),
                    got: dim,
                });
            }
            p.clone()
        }
        None => NiwPrior::from_data(&data)?,
    };

    let initial_k = init.iter().max().unwrap() + 1;
    let mut assignments = init.to_vec();
    let mut rng = derive_rng(cfg.seed, 0, 0, 0);
    let mut sub_assignments: Vec<u8> = vec![0; data.len()];
    for k in 0..initial_k {
        voronoi_subs(&data, &assignments, &mut sub_assignments, k, &mut rng);
    }

    let mut clusters = build_clusters(
        &data,
        &assignments,
        &mut sub_assignments,
        initial_k,
        &prior,
        &mut rng,
    );
    sample_weights(&mut clusters, cfg.concentration, &mut rng);

    let mut trace = Vec::with_capacity(cfg.iterations);

    for sweep in 0..cfg.iterations {
        // (1) Assignments given instantiated parameters, shard-parallel.
        assign_step(
            &data,
            &clusters,
            &mut assignments,
            &mut sub_assignments,
            cfg,
            sweep as u64,
        );

        // (2)+(3) Rebuild statistics, drop empty clusters, resample
        // parameters and sub-structure.
        let mut sweep_rng = derive_rng(cfg.seed, sweep as u64 + 1, 1, 0);
        relabel_dense(&mut assignments, &mut clusters);
        let k = clusters.len();
        clusters = build_clusters(
            &data,
            &assignments,
            &mut sub_assignments,
            k,
            &prior,
            &mut sweep_rng,
        );
        sample_weights(&mut clusters, cfg.concentration, &mut sweep_rng);

        // (4) Split/merge proposals.
        if cfg.split_merge_enabled {
            propose_splits(
                &data,
                &mut clusters,
                &mut assignments,
                &mut sub_assignments,
                &prior,
                cfg.concentration,
                &mut sweep_rng,
            );
            propose_merges(
                &mut clusters,
                &mut assignments,
                &prior,
                cfg.concentration,
                &mut sweep_rng,
            );
            sample_weights(&mut clusters, cfg.concentration, &mut sweep_rng);
        }

        trace.push(joint_data_log_likelihood(&data, &clusters, &assignments));
    }

    Ok(DpgmmState {
        clusters,
        assignments,
        sub_assignments,
        prior,
        concentration: cfg.concentration,
        log_likelihood_trace: trace,
    })
}

/// Hard argmax assignment of each frame under the fitted mixture.
pub fn predict(state: &DpgmmState, frames: &ndarray::Array2<f64>) -> DpgmmResult<Vec<usize>> {
    if frames.nrows() == 0 {
        return Ok(Vec::new());
    }
    if frames.ncols() != state.prior.dim() {
        return Err(DpgmmError::DimMismatch {
            expected: state.prior.dim(),
            got: frames.ncols(),
        });
    }
    let dim = frames.ncols();
    let rows: Vec<usize> = (0..frames.nrows()).collect();
    let labels: Vec<usize> = rows
        .par_iter()
        .map(|&r| {
            let mut scratch = vec![0.0; dim];
            let x: Vec<f64> = frames.row(r).iter().copied().collect();
            let mut best = 0usize;
            let mut best_lp = f64::NEG_INFINITY;
            for (k, c) in state.clusters.iter().enumerate() {
                let lp = c.log_weight + c.params.log_pdf(&x, &mut scratch);
                if lp > best_lp {
                    best_lp = lp;
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(labels)
}

fn assign_step(
    data: &[DVector<f64>],
    clusters: &[Cluster],
    assignments: &mut [usize],
    sub_assignments: &mut [u8],
    cfg: &DpgmmConfig,
    sweep: u64,
) {
    let dim = data[0].len();
    let ranges = shard_ranges(data.len(), cfg.shards);
    // Split the output buffers into disjoint shard slices so rayon tasks
    // write without coordination.
    let mut assign_slices: Vec<&mut [usize]> = Vec::with_capacity(ranges.len());
    let mut sub_slices: Vec<&mut [u8]> = Vec::with_capacity(ranges.len());
    {
        let mut rest_a: &mut [usize] = assignments;
        let mut rest_s: &mut [u8] = sub_assignments;
        for r in &ranges {
            let (head_a, tail_a) = rest_a.split_at_mut(r.len());
            let (head_s, tail_s) = rest_s.split_at_mut(r.len());
            assign_slices.push(head_a);
            sub_slices.push(head_s);
            rest_a = tail_a;
            rest_s = tail_s;
        }
    }
    let seed = cfg.seed;
    ranges
        .par_iter()
        .zip(assign_slices.par_iter_mut().zip(sub_slices.par_iter_mut()))
        .enumerate()
        .for_each(|(shard, (range, (assign_out, sub_out)))| {
            let mut rng = derive_rng(seed, sweep, 2, shard as u64);
            let mut scratch = vec![0.0; dim];
            let mut log_probs = vec![0.0; clusters.len()];
            for (offset, i) in range.clone().enumerate() {
                let x = data[i].as_slice();
                for (k, c) in clusters.iter().enumerate() {
                    log_probs[k] = c.log_weight + c.params.log_pdf(x, &mut scratch);
                }
                let k = sample_categorical(&log_probs, &mut rng);
                assign_out[offset] = k;
                let c = &clusters[k];
                let lp0 = c.sub[0].log_weight + c.sub[0].params.log_pdf(x, &mut scratch);
                let lp1 = c.sub[1].log_weight + c.sub[1].params.log_pdf(x, &mut scratch);
                sub_out[offset] = sample_categorical(&[lp0, lp1], &mut rng) as u8;
            }
        });
}

/// Compacts labels to 0..K (dropping empties) and syncs the cluster list
/// length; contents are rebuilt afterwards.
fn relabel_dense(assignments: &mut [usize], clusters: &mut Vec<Cluster>) {
    let k = clusters.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut remap = vec![usize::MAX; k];
    let mut next = 0usize;
    for (old, &c) in counts.iter().enumerate() {
        if c > 0 {
            remap[old] = next;
            next += 1;
        }
    }
    // Retain non-empty clusters in order.
    let mut old_index = 0usize;
    clusters.retain(|_| {
        let keep = counts[old_index] > 0;
        old_index += 1;
        keep
    });
    for a in assignments.iter_mut() {
        *a = remap[*a];
    }
}

/// Rebuilds cluster and sub-cluster statistics and samples fresh component
/// parameters. Empty sub-clusters are re-randomized.
fn build_clusters(
    data: &[DVector<f64>],
    assignments: &[usize],
    sub_assignments: &mut [u8],
    k: usize,
    prior: &NiwPrior,
    rng: &mut ChaCha8Rng,
) -> Vec<Cluster> {
    let dim = data[0].len();
    let mut stats: Vec<GaussStats> = (0..k).map(|_| GaussStats::empty(dim)).collect();
    for (x, &a) in data.iter().zip(assignments) {
        stats[a].add(x);
    }

    let mut sub_stats: Vec<[GaussStats; 2]> = (0..k)
        .map(|_| [GaussStats::empty(dim), GaussStats::empty(dim)])
        .collect();
    let accumulate_subs = |sub_stats: &mut Vec<[GaussStats; 2]>, sub_assignments: &[u8]| {
        for s in sub_stats.iter_mut() {
            s[0] = GaussStats::empty(dim);
            s[1] = GaussStats::empty(dim);
        }
        for ((x, &a), &b) in data.iter().zip(assignments).zip(sub_assignments.iter()) {
            sub_stats[a][usize::from(b)].add(x);
        }
    };
    accumulate_subs(&mut sub_stats, sub_assignments);

    // A sub-cluster pair with an empty side cannot support a split proposal;
    // re-seed that cluster's sub labels.
    for k_i in 0..k {
        let n = stats[k_i].count();
        if n >= 2 && (sub_stats[k_i][0].count() == 0 || sub_stats[k_i][1].count() == 0) {
            voronoi_subs(data, assignments, sub_assignments, k_i, rng);
        }
    }
    accumulate_subs(&mut sub_stats, sub_assignments);

    stats
        .into_iter()
        .zip(sub_stats)
        .map(|(s, subs)| {
            let params = sample_gaussian(&posterior(prior, &s), rng);
            let sub = subs.map(|ss| {
                let params = sample_gaussian(&posterior(prior, &ss), rng);
                SubComponent {
                    stats: ss,
                    params,
                    log_weight: 0.0,
                }
            });
            Cluster {
                stats: s,
                params,
                log_weight: 0.0,
                sub,
            }
        })
        .collect()
}

/// Instantiates mixture weights pi ~ Dir(N_1..N_K, alpha) (the alpha stick
/// is discarded: new clusters only arise from splits) and per-cluster
/// sub-weights ~ Dir(N_l + alpha/2, N_r + alpha/2).
fn sample_weights(clusters: &mut [Cluster], alpha: f64, rng: &mut ChaCha8Rng) {
    let mut draws = Vec::with_capacity(clusters.len() + 1);
    for c in clusters.iter() {
        let shape = c.stats.n.max(1e-3);
        draws.push(Gamma::new(shape, 1.0).expect("valid gamma").sample(rng));
    }
    draws.push(Gamma::new(alpha, 1.0).expect("valid gamma").sample(rng));
    let total: f64 = draws.iter().sum();
    for (c, w) in clusters.iter_mut().zip(&draws) {
        c.log_weight = (w / total).max(1e-300).ln();
    }
    for c in clusters.iter_mut() {
        let g0 = Gamma::new(c.sub[0].stats.n + alpha / 2.0, 1.0)
            .expect("valid gamma")
            .sample(rng);
        let g1 = Gamma::new(c.sub[1].stats.n + alpha / 2.0, 1.0)
            .expect("valid gamma")
            .sample(rng);
        let t = g0 + g1;
        c.sub[0].log_weight = (g0 / t).max(1e-300).ln();
        c.sub[1].log_weight = (g1 / t).max(1e-300).ln();
    }
}

fn log_split_hastings(
    prim: &GaussStats,
    left: &GaussStats,
    right: &GaussStats,
    prior: &NiwPrior,
    alpha: f64,
) -> f64 {
    alpha.ln()
        + ln_gamma(left.n) + marginal_log_likelihood(prior, left)
        + ln_gamma(right.n) + marginal_log_likelihood(prior, right)
        - ln_gamma(prim.n)
        - marginal_log_likelihood(prior, prim)
}

fn log_merge_hastings(
    merged: &GaussStats,
    left: &GaussStats,
    right: &GaussStats,
    prior: &NiwPrior,
    alpha: f64,
) -> f64 {
    -log_split_hastings(merged, left, right, prior, alpha) + ln_gamma(alpha)
        - 2.0 * ln_gamma(alpha / 2.0)
        - ln_gamma(merged.n + alpha)
        + ln_gamma(left.n + alpha / 2.0)
        + ln_gamma(right.n + alpha / 2.0)
}

fn propose_splits(
    data: &[DVector<f64>],
    clusters: &mut Vec<Cluster>,
    assignments: &mut [usize],
    sub_assignments: &mut [u8],
    prior: &NiwPrior,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) {
    let existing = clusters.len();
    for k in 0..existing {
        let (n0, n1) = (
            clusters[k].sub[0].stats.count(),
            clusters[k].sub[1].stats.count(),
        );
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let log_h = log_split_hastings(
            &clusters[k].stats,
            &clusters[k].sub[0].stats,
            &clusters[k].sub[1].stats,
            prior,
            alpha,
        );
        if std::env::var("ZRS_DPGMM_DEBUG").is_ok() {
            let m0 = &clusters[k].sub[0].stats.sum / clusters[k].sub[0].stats.n;
            let m1 = &clusters[k].sub[1].stats.sum / clusters[k].sub[1].stats.n;
            eprintln!(
                "split k={k} n=({}, {}) log_h={log_h:.1} sub_means=({:.2},{:.2})/({:.2},{:.2})",
                n0, n1, m0[0], m0[1], m1[0], m1[1]
            );
        }
        if rng.random::<f64>().ln() >= log_h {
            continue;
        }
        // Accept: sub-cluster 0 keeps label k, sub-cluster 1 becomes a new
        // cluster at the end; both daughters get fresh random sub labels.
        let new_label = clusters.len();
        let left = clusters[k].sub[0].stats.clone();
        let right = clusters[k].sub[1].stats.clone();
        for (i, a) in assignments.iter_mut().enumerate() {
            if *a == k {
                if sub_assignments[i] == 1 {
                    *a = new_label;
                }
                sub_assignments[i] = u8::from(rng.random::<bool>());
            }
        }
        let make = |stats: GaussStats, rng: &mut ChaCha8Rng| -> Cluster {
            let params = sample_gaussian(&posterior(prior, &stats), rng);
            let dim = stats.sum.len();
            let sub = [0, 1].map(|_| SubComponent {
                stats: GaussStats::empty(dim),
                params: sample_gaussian(&posterior(prior, &stats), rng),
                log_weight: (0.5f64).ln(),
            });
            Cluster {
                stats,
                params,
                log_weight: 0.0,
                sub,
            }
        };
        let mut left_cluster = make(left, rng);
        let mut right_cluster = make(right, rng);
        rebuild_sub_stats(data, assignments, sub_assignments, k, &mut left_cluster);
        rebuild_sub_stats(
            data,
            assignments,
            sub_assignments,
            new_label,
            &mut right_cluster,
        );
        clusters[k] = left_cluster;
        clusters.push(right_cluster);
    }
}

fn rebuild_sub_stats(
    data: &[DVector<f64>],
    assignments: &[usize],
    sub_assignments: &[u8],
    label: usize,
    cluster: &mut Cluster,
) {
    let dim = data[0].len();
    let mut s = [GaussStats::empty(dim), GaussStats::empty(dim)];
    for (i, &a) in assignments.iter().enumerate() {
        if a == label {
            s[usize::from(sub_assignments[i])].add(&data[i]);
        }
    }
    cluster.sub[0].stats = s[0].clone();
    cluster.sub[1].stats = s[1].clone();
}

fn propose_merges(
    clusters: &mut Vec<Cluster>,
    assignments: &mut [usize],
    prior: &NiwPrior,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) {
    if clusters.len() < 2 {
        return;
    }
    // Random disjoint pairs over the current clusters.
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut merged_away: Vec<Option<usize>> = vec![None; clusters.len()];
    for pair in order.chunks(2) {
        let [a, b] = match pair {
            [a, b] => [*a, *b],
            _ => continue,
        };
        let merged = clusters[a].stats.merged(&clusters[b].stats);
        let log_h = log_merge_hastings(&merged, &clusters[a].stats, &clusters[b].stats, prior, alpha);
        if rng.random::<f64>().ln() >= log_h {
            continue;
        }
        // Accept: b's points fold into a; the old clusters become a's
        // sub-clusters, which is exactly the state a future split reverses.
        let params = sample_gaussian(&posterior(prior, &merged), rng);
        let sub = [
            SubComponent {
                stats: clusters[a].stats.clone(),
                params: clusters[a].params.clone(),
                log_weight: (0.5f64).ln(),
            },
            SubComponent {
                stats: clusters[b].stats.clone(),
                params: clusters[b].params.clone(),
                log_weight: (0.5f64).ln(),
            },
        ];
        clusters[a] = Cluster {
            stats: merged,
            params,
            log_weight: 0.0,
            sub,
        };
        merged_away[b] = Some(a);
    }
    if merged_away.iter().all(|m| m.is_none()) {
        return;
    }
    // Compact labels after merges.
    let k = clusters.len();
    let mut remap = vec![usize::MAX; k];
    let mut next = 0usize;
    for old in 0..k {
        if merged_away[old].is_none() {
            remap[old] = next;
            next += 1;
        }
    }
    for a in assignments.iter_mut() {
        let target = match merged_away[*a] {
            Some(into) => into,
            None => *a,
        };
        *a = remap[target];
    }
    let mut old_index = 0usize;
    clusters.retain(|_| {
        let keep = merged_away[old_index].is_none();
        old_index += 1;
        keep
    });
}

fn joint_data_log_likelihood(
    data: &[DVector<f64>],
    clusters: &[Cluster],
    assignments: &[usize],
) -> f64 {
    let dim = data[0].len();
    let mut scratch = vec![0.0; dim];
    let mut total = 0.0;
    for (x, &a) in data.iter().zip(assignments) {
        let c = &clusters[a];
        total += c.log_weight + c.params.log_pdf(x.as_slice(), &mut scratch);
    }
    total
}

/// Convenience re-export of the conjugate posterior predictive for use in
/// collapsed computations and tests.
pub fn cluster_log_predictive(
    stats: &GaussStats,
    prior: &NiwPrior,
    x: &DVector<f64>,
) -> DpgmmResult<f64> {
    log_predictive(stats, prior, x)
}
