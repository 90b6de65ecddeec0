//! Mutual information between feature columns, pair ranking and triplet formation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Result, UfceError};
use crate::kdtree::{KdTree, Metric};
use crate::scalar::{digamma, Scalar};

pub const DEFAULT_MI_NEIGHBORS: usize = 3;
const JITTER: f64 = 1e-10;

/// How a column is treated by the estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Discrete,
}

/// A scored, unordered feature pair with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiPair {
    pub i: usize,
    pub j: usize,
    /// Estimated mutual information in nats.
    pub score: f64,
}

/// Estimates I(a; b) in nats with `k` neighbors, clipped at 0.
///
/// Continuous pairs use the KSG estimator (first variant, max-norm); mixed
/// pairs use the nearest-neighbor estimator for one discrete variable; two
/// discrete columns use the plug-in estimate.
pub fn estimate_mi<T: Scalar>(a: &[T], kind_a: ColumnKind, b: &[T], kind_b: ColumnKind, k: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(UfceError::Dimension { expected: a.len(), got: b.len() });
    }
    if k == 0 {
        return Err(UfceError::Argument("k must be at least 1".into()));
    }
    if a.len() <= k {
        return Err(UfceError::Argument(format!("need more than k = {k} samples, got {}", a.len())));
    }
    let a: Vec<f64> = a.iter().map(|v| v.to_f64_lossy()).collect();
    let b: Vec<f64> = b.iter().map(|v| v.to_f64_lossy()).collect();
    if is_constant(&a) || is_constant(&b) {
        return Ok(0.0);
    }
    let mi = match (kind_a, kind_b) {
        (ColumnKind::Continuous, ColumnKind::Continuous) => ksg(&prepare(&a), &prepare(&b), k),
        (ColumnKind::Discrete, ColumnKind::Continuous) => mixed(&prepare(&b), &a, k),
        (ColumnKind::Continuous, ColumnKind::Discrete) => mixed(&prepare(&a), &b, k),
        (ColumnKind::Discrete, ColumnKind::Discrete) => plug_in(&a, &b),
    };
    Ok(mi.max(0.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Standardises a column and adds a tiny jitter seeded by the column's own
/// content, so ties are broken identically whichever side of a pair it is on.
fn prepare(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let mut hasher = Sha256::new();
    for x in v {
        hasher.update(x.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    v.iter().map(|x| (x - mean) / sd + JITTER * rng.random_range(-1.0..1.0)).collect()
}

/// Number of values strictly within `radius` of `center` in a sorted column.
fn count_strict(sorted: &[f64], center: f64, radius: f64) -> usize {
    let lo = sorted.partition_point(|&v| v <= center - radius);
    let hi = sorted.partition_point(|&v| v < center + radius);
    hi.saturating_sub(lo)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn ksg(x: &[f64], y: &[f64], k: usize) -> f64 {
    let n = x.len();
    let points: Vec<Vec<f64>> = x.iter().zip(y).map(|(&a, &b)| vec![a, b]).collect();
    let tree = KdTree::build(&points, 2, Metric::Chebyshev);
    let (sx, sy) = (sorted(x), sorted(y));
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        let eps = tree.nearest(p, k, Some(i)).last().map_or(0.0, |h| h.distance);
        // Counts exclude the point itself.
        let nx = count_strict(&sx, x[i], eps).saturating_sub(1);
        let ny = count_strict(&sy, y[i], eps).saturating_sub(1);
        acc += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }
    digamma(k as f64) + digamma(n as f64) - acc / n as f64
}

fn mixed(c: &[f64], labels: &[f64], k: usize) -> f64 {
    let mut codes = sorted(labels);
    codes.dedup();
    let mut radius = vec![0.0; c.len()];
    let mut k_used = vec![0usize; c.len()];
    let mut label_count = vec![0usize; c.len()];
    for &code in &codes {
        let members: Vec<usize> = (0..c.len()).filter(|&i| labels[i] == code).collect();
        if members.len() < 2 {
            continue;
        }
        let kk = k.min(members.len() - 1);
        let pts: Vec<Vec<f64>> = members.iter().map(|&i| vec![c[i]]).collect();
        let tree = KdTree::build(&pts, 1, Metric::Chebyshev);
        for (local, &i) in members.iter().enumerate() {
            radius[i] = tree.nearest(&pts[local], kk, Some(local)).last().map_or(0.0, |h| h.distance);
            k_used[i] = kk;
            label_count[i] = members.len();
        }
    }
    let kept: Vec<usize> = (0..c.len()).filter(|&i| label_count[i] > 1).collect();
    if kept.is_empty() {
        return 0.0;
    }
    let all = sorted(&kept.iter().map(|&i| c[i]).collect::<Vec<_>>());
    let m = kept.len() as f64;
    let (mut sk, mut sl, mut sm) = (0.0, 0.0, 0.0);
    for &i in &kept {
        // Count includes the point itself.
        let within = count_strict(&all, c[i], radius[i]).max(1);
        sk += digamma(k_used[i] as f64);
        sl += digamma(label_count[i] as f64);
        sm += digamma(within as f64);
    }
    digamma(m) + (sk - sl - sm) / m
}

fn plug_in(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (mut ua, mut ub) = (sorted(a), sorted(b));
    ua.dedup();
    ub.dedup();
    let idx = |u: &[f64], v: f64| u.partition_point(|&w| w < v);
    let mut joint = vec![vec![0usize; ub.len()]; ua.len()];
    for (&x, &y) in a.iter().zip(b) {
        joint[idx(&ua, x)][idx(&ub, y)] += 1;
    }
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum::<usize>() as f64 / n).collect();
    let pb: Vec<f64> = (0..ub.len()).map(|j| joint.iter().map(|r| r[j]).sum::<usize>() as f64 / n).collect();
    let mut mi = 0.0;
    for (ia, row) in joint.iter().enumerate() {
        for (ib, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (pa[ia] * pb[ib])).ln();
            }
        }
    }
    mi
}

/// Scores every unordered pair of `features` and sorts descending by score,
/// ties by `(i, j)`.
pub fn rank_pairs<T: Scalar>(dataset: &Dataset<T>, features: &[usize], k: usize) -> Result<Vec<MiPair>> {
    let mut feats = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    if feats.len() < 2 {
        return Err(UfceError::Argument("at least two features are needed to rank pairs".into()));
    }
    if let Some(&bad) = feats.iter().find(|&&f| f >= dataset.dim()) {
        return Err(UfceError::Argument(format!("feature index {bad} out of range")));
    }
    let kinds: Vec<ColumnKind> = dataset
        .schema
        .features
        .iter()
        .map(|f| if f.is_categorical() { ColumnKind::Discrete } else { ColumnKind::Continuous })
        .collect();
    let columns: Vec<Vec<T>> = (0..dataset.dim()).map(|j| dataset.column(j)).collect();
    let mut pairs = Vec::new();
    for (a, &i) in feats.iter().enumerate() {
        for &j in &feats[a + 1..] {
            pairs.push((i, j));
        }
    }
    let mut scored = pairs
        .par_iter()
        .map(|&(i, j)| {
            estimate_mi(&columns[i], kinds[i], &columns[j], kinds[j], k).map(|score| MiPair { i, j, score })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.i, a.j).cmp(&(b.i, b.j))));
    Ok(scored)
}

/// Extends each of the first `top_m` pairs with every user feature not already
/// in the pair. Pairs keep their ranking order, user features their schema order.
pub fn form_triplets(pairs: &[MiPair], user_features: &[usize], top_m: usize) -> Vec<[usize; 3]> {
    let mut users = user_features.to_vec();
    users.sort_unstable();
    users.dedup();
    let mut out = Vec::new();
    for p in pairs.iter().take(top_m) {
        for &u in &users {
            if u != p.i && u != p.j {
                out.push([p.i, p.j, u]);
            }
        }
    }
    out
}
