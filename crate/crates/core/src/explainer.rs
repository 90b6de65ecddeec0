//! Counterfactual search: one-, two- and three-feature perturbations within the
//! user's feasible region, and selection of the closest valid candidate.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{desired_space, fit_scaler, Dataset, Instance, Schema};
use crate::error::{Result, UfceError};
use crate::metrics::{changed_features, prox_euc, prox_euc_scale, prox_jac, DEFAULT_ACTIONABLE_THRESHOLD};
use crate::mi::{form_triplets, rank_pairs, MiPair, DEFAULT_MI_NEIGHBORS};
use crate::model::{train_feature_predictor, BlackBox, FeaturePredictor};
use crate::neighborhood::{
    build_tree, intervals, Embedding, FeatureBound, IntervalMode, NeighborTree, PerturbationMap, RadiusPolicy, Subspace,
};
use crate::plausibility::{fit_lof, LofModel, DEFAULT_LOF_NEIGHBORS, DEFAULT_LOF_THRESHOLD};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Single,
    Double,
    Triple,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Single, Method::Double, Method::Triple];

    pub fn label(self) -> &'static str {
        match self {
            Method::Single => "UFCE1",
            Method::Double => "UFCE2",
            Method::Triple => "UFCE3",
        }
    }

    /// Largest number of features the method may change.
    pub fn max_changes(self) -> usize {
        match self {
            Method::Single => 1,
            Method::Double => 2,
            Method::Triple => 3,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    /// Desired label.
    pub t: u8,
    /// Weight of the rescaled numeric distance in δ.
    pub lambda: f64,
    pub steps_per_feature: usize,
    pub traverse_samples: usize,
    pub radius: RadiusPolicy,
    pub interval_mode: IntervalMode,
    pub seed: u64,
    /// Number of top-ranked pairs used by the two- and three-feature searches.
    pub top_m: usize,
    pub mi_neighbors: usize,
    pub lof_neighbors: usize,
    pub lof_threshold: f64,
    pub actionable_threshold: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            t: 1,
            lambda: 1.0,
            steps_per_feature: 100,
            traverse_samples: 100,
            radius: RadiusPolicy::default(),
            interval_mode: IntervalMode::Strict,
            seed: 0,
            top_m: 5,
            mi_neighbors: DEFAULT_MI_NEIGHBORS,
            lof_neighbors: DEFAULT_LOF_NEIGHBORS,
            lof_threshold: DEFAULT_LOF_THRESHOLD,
            actionable_threshold: DEFAULT_ACTIONABLE_THRESHOLD,
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t > 1 {
            return Err(UfceError::Argument(format!("desired label must be 0 or 1, got {}", self.t)));
        }
        if !(self.lambda >= 0.0) {
            return Err(UfceError::Argument("lambda must be non-negative".into()));
        }
        if self.steps_per_feature < 2 {
            return Err(UfceError::Argument("steps_per_feature must be at least 2".into()));
        }
        if self.traverse_samples == 0 {
            return Err(UfceError::Argument("traverse_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateCE<T> {
    pub z: Instance<T>,
    pub method: Method,
    /// Indices of the features that differ from the explained instance.
    pub changed: Vec<usize>,
    pub valid: bool,
    pub plausible: bool,
    pub delta: f64,
}

/// Everything computed for one explanation request.
#[derive(Clone, Debug)]
pub struct Explanation<T> {
    pub candidates: Vec<CandidateCE<T>>,
    pub subspace: Subspace<T>,
    pub warnings: Vec<String>,
    pub radius: T,
    pub neighbors: usize,
    /// Wall-clock seconds per method, in `Method::ALL` order. The two- and
    /// three-feature searches include the neighborhood construction they need.
    pub seconds: [f64; 3],
}

impl<T> Explanation<T> {
    pub fn by_method(&self, method: Method) -> impl Iterator<Item = &CandidateCE<T>> {
        self.candidates.iter().filter(move |c| c.method == method)
    }
}

/// Neighborhood and subspace for one instance.
#[derive(Clone, Debug)]
pub struct Region<T> {
    pub subspace: Subspace<T>,
    pub warnings: Vec<String>,
    pub radius: T,
    pub neighbors: usize,
}

/// A pluggable producer of counterfactual candidates.
pub trait CandidateSource<T: Scalar>: Send + Sync {
    fn name(&self) -> String;

    fn generate(&self, x: &Instance<T>, p: &PerturbationMap<T>, limit: usize) -> Result<Vec<CandidateCE<T>>>;
}

/// Trained artifacts shared by every explanation over one training set.
#[derive(Clone)]
pub struct Ufce<T: Scalar> {
    pub schema: Schema<T>,
    pub config: ExplainConfig,
    pub model: Arc<dyn BlackBox<T>>,
    pub desired: Dataset<T>,
    pub tree: NeighborTree<T>,
    pub lof: LofModel<T>,
    pub predictors: Vec<FeaturePredictor<T>>,
    /// All feature pairs of the training set, ranked by mutual information.
    pub mi_pairs: Vec<MiPair>,
    euc_scale: f64,
}

impl<T: Scalar> Ufce<T> {
    pub fn new(train: &Dataset<T>, model: Arc<dyn BlackBox<T>>, config: ExplainConfig) -> Result<Self> {
        config.validate()?;
        if model.dim() != train.dim() {
            return Err(UfceError::Dimension { expected: train.dim(), got: model.dim() });
        }
        let desired = desired_space(train, config.t)?;
        let scaler = fit_scaler(train)?;
        let tree = build_tree(&desired, &scaler)?;
        let k_lof = config.lof_neighbors.min(desired.len().saturating_sub(1)).max(1);
        let lof = fit_lof(&desired, Embedding::new(&train.schema, scaler), k_lof, T::lit(config.lof_threshold))?;
        let predictors =
            (0..train.dim()).into_par_iter().map(|j| train_feature_predictor(train, j)).collect::<Result<Vec<_>>>()?;
        let all: Vec<usize> = (0..train.dim()).collect();
        let mi_pairs = if all.len() >= 2 { rank_pairs(train, &all, config.mi_neighbors)? } else { Vec::new() };
        Ok(Ufce {
            euc_scale: prox_euc_scale(&train.schema),
            schema: train.schema.clone(),
            config,
            model,
            desired,
            tree,
            lof,
            predictors,
            mi_pairs,
        })
    }

    /// A copy with different δ weight, plausibility threshold, interval mode and seed.
    pub fn with_options(&self, lambda: f64, lof_threshold: f64, mode: IntervalMode, seed: u64) -> Self {
        let mut u = self.clone();
        u.config.lambda = lambda;
        u.config.lof_threshold = lof_threshold;
        u.config.interval_mode = mode;
        u.config.seed = seed;
        u.lof.threshold = T::lit(lof_threshold);
        u
    }

    /// δ(z, x): categorical mismatch share plus λ times the MAD-weighted numeric
    /// distance rescaled to [0, 1].
    pub fn delta(&self, z: &[T], x: &[T]) -> f64 {
        delta(z, x, &self.schema, self.config.lambda, self.euc_scale)
    }

    pub fn is_valid(&self, z: &[T]) -> Result<bool> {
        Ok(self.model.predict(z)? == self.config.t)
    }

    fn accept(&self, z: &[T]) -> Result<bool> {
        Ok(self.is_valid(z)? && self.lof.is_plausible(z))
    }

    fn candidate(&self, z: Instance<T>, x: &[T], method: Method) -> CandidateCE<T> {
        let changed = changed_features(&z, x, &self.schema);
        let delta = self.delta(&z, x);
        CandidateCE { z, method, changed, valid: true, plausible: true, delta }
    }

    /// Rejects malformed instances and instances that already get label t.
    pub fn check_instance(&self, x: &Instance<T>) -> Result<()> {
        self.schema.validate(x)?;
        if self.is_valid(x)? {
            return Err(UfceError::NothingToExplain { label: self.config.t });
        }
        Ok(())
    }

    /// Nearest neighborhood of `x` and its intersection with `p`.
    pub fn region(&self, x: &Instance<T>, p: &PerturbationMap<T>) -> Result<Region<T>> {
        let nb = self.tree.neighborhood(x, &self.config.radius);
        if nb.rows.is_empty() {
            return Ok(Region {
                subspace: Subspace::new(),
                warnings: vec![format!("no desired-space neighbors within radius {}", nb.radius)],
                radius: nb.radius,
                neighbors: 0,
            });
        }
        let (subspace, warnings) = intervals(&nb.rows, p, &self.schema, self.config.interval_mode)?;
        Ok(Region { subspace, warnings, radius: nb.radius, neighbors: nb.rows.len() })
    }

    /// Ranked pairs restricted to `features`, first `top_m` only.
    pub fn pairs_for(&self, features: &[usize]) -> Vec<MiPair> {
        self.mi_pairs
            .iter()
            .filter(|p| features.contains(&p.i) && features.contains(&p.j))
            .take(self.config.top_m)
            .copied()
            .collect()
    }

    /// One-feature search over the user's bounds. Numeric features are searched
    /// by bisection over a grid of `steps_per_feature` steps, falling back to a
    /// linear scan; categorical features are flipped. Returns at most one
    /// candidate per feature, closest first.
    pub fn single_f(&self, x: &Instance<T>, p: &PerturbationMap<T>, limit: usize) -> Result<Vec<CandidateCE<T>>> {
        let mut out = Vec::new();
        for &(f, bound) in &p.entries {
            if self.schema.features[f].protected {
                continue;
            }
            let found = match bound {
                FeatureBound::Range { lower, upper } => self.bisect(x, f, lower, upper)?,
                FeatureBound::Toggle { alternate, .. } => {
                    let mut z = x.clone();
                    z[f] = alternate;
                    if self.accept(&z)? {
                        Some(z)
                    } else {
                        None
                    }
                }
            };
            if let Some(z) = found {
                out.push(self.candidate(z, x, Method::Single));
            }
        }
        Ok(top_k(out, limit))
    }

    fn bisect(&self, x: &Instance<T>, f: usize, lower: T, upper: T) -> Result<Option<Instance<T>>> {
        if !(upper > lower) {
            return Ok(None);
        }
        let step = (upper - lower) / T::from_usize_lossy(self.config.steps_per_feature);
        let (mut start, mut end) = (lower, upper);
        let mut best: Option<Instance<T>> = None;
        while start <= end {
            let mid = (start + end) / T::lit(2.0);
            let mut z = x.clone();
            z[f] = mid;
            if self.accept(&z)? {
                if best.as_ref().is_none_or(|b| (mid - x[f]).abs() < (b[f] - x[f]).abs()) {
                    best = Some(z);
                }
                end = mid - step;
            } else {
                start = mid + step;
            }
        }
        if best.is_none() {
            for s in 0..=self.config.steps_per_feature {
                let v = if s == self.config.steps_per_feature { upper } else { lower + step * T::from_usize_lossy(s) };
                let mut z = x.clone();
                z[f] = v;
                if self.accept(&z)? {
                    return Ok(Some(z));
                }
            }
        }
        Ok(best)
    }

    /// Two-feature search over the top MI pairs inside the subspace.
    pub fn double_f(&self, x: &Instance<T>, subspace: &Subspace<T>, pairs: &[MiPair], limit: usize) -> Result<Vec<CandidateCE<T>>> {
        let mut out = Vec::new();
        for pair in pairs {
            if let Some(z) = self.perturb_group(x, subspace, &[pair.i, pair.j])? {
                out.push(self.candidate(z, x, Method::Double));
            }
        }
        Ok(top_k(dedup(out), limit))
    }

    /// Three-feature search over triplets built from the top MI pairs.
    pub fn triple_f(&self, x: &Instance<T>, subspace: &Subspace<T>, triplets: &[[usize; 3]], limit: usize) -> Result<Vec<CandidateCE<T>>> {
        let mut out = Vec::new();
        for tri in triplets {
            if let Some(z) = self.perturb_group(x, subspace, tri)? {
                out.push(self.candidate(z, x, Method::Triple));
            }
        }
        Ok(top_k(dedup(out), limit))
    }

    /// Perturbs a group of features together. The first numeric member is
    /// traversed over sorted samples of its subspace range; the others are
    /// predicted in order from the rest of the instance and clamped into the
    /// subspace. An all-categorical group is flipped outright.
    fn perturb_group(&self, x: &Instance<T>, subspace: &Subspace<T>, group: &[usize]) -> Result<Option<Instance<T>>> {
        let mut bounds = Vec::with_capacity(group.len());
        for &f in group {
            if self.schema.features[f].protected {
                return Ok(None);
            }
            match subspace.get(f) {
                Some(b) => bounds.push((f, *b)),
                None => return Ok(None),
            }
        }
        let Some(pos) = bounds.iter().position(|(_, b)| matches!(b, FeatureBound::Range { .. })) else {
            let mut z = x.clone();
            for &(f, b) in &bounds {
                if let FeatureBound::Toggle { alternate, .. } = b {
                    z[f] = alternate;
                }
            }
            return Ok(if self.accept(&z)? { Some(z) } else { None });
        };
        let (lead, lead_bound) = bounds.remove(pos);
        let FeatureBound::Range { lower, upper } = lead_bound else { unreachable!("lead feature is numeric") };
        let samples = self.traverse_space(group, lower, upper);
        let (mut lo, hi) = (0usize, samples.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            let mut z = x.clone();
            z[lead] = samples[mid];
            for &(f, b) in &bounds {
                z[f] = b.clamp(self.predictors[f].predict_from(&z)?);
            }
            if self.accept(&z)? {
                return Ok(Some(z));
            }
            lo = mid + 1;
        }
        Ok(None)
    }

    /// Sorted uniform draws from [lower, upper], seeded by the group.
    fn traverse_space(&self, group: &[usize], lower: T, upper: T) -> Vec<T> {
        let mut seed = self.config.seed;
        for &f in group {
            seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(f as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = upper - lower;
        let mut s: Vec<T> =
            (0..self.config.traverse_samples).map(|_| lower + width * T::lit(rng.random::<f64>())).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        s
    }

    /// Runs all three searches. Each method contributes up to `limit` candidates.
    pub fn explain(&self, x: &Instance<T>, p: &PerturbationMap<T>, limit: usize) -> Result<Explanation<T>> {
        self.check_instance(x)?;
        p.validate(&self.schema, x)?;
        let mut seconds = [0.0; 3];
        let mut candidates = Vec::new();
        if p.is_empty() {
            return Ok(Explanation {
                candidates,
                subspace: Subspace::new(),
                warnings: Vec::new(),
                radius: T::zero(),
                neighbors: 0,
                seconds,
            });
        }

        let clock = Instant::now();
        candidates.extend(self.single_f(x, p, limit)?);
        seconds[0] = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let region = self.region(x, p)?;
        let f2change = p.features();
        let pairs = self.pairs_for(&f2change);
        let prep = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        candidates.extend(self.double_f(x, &region.subspace, &pairs, limit)?);
        seconds[1] = prep + clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let triplets = form_triplets(&pairs, &f2change, self.config.top_m);
        candidates.extend(self.triple_f(x, &region.subspace, &triplets, limit)?);
        seconds[2] = prep + clock.elapsed().as_secs_f64();

        Ok(Explanation {
            candidates,
            subspace: region.subspace,
            warnings: region.warnings,
            radius: region.radius,
            neighbors: region.neighbors,
            seconds,
        })
    }
}

pub fn delta<T: Scalar>(z: &[T], x: &[T], schema: &Schema<T>, lambda: f64, euc_scale: f64) -> f64 {
    prox_jac(z, x, schema) + lambda * prox_euc(z, x, schema).0 / euc_scale
}

fn rank_order<T>(a: &CandidateCE<T>, b: &CandidateCE<T>) -> Ordering {
    a.delta
        .total_cmp(&b.delta)
        .then(a.changed.len().cmp(&b.changed.len()))
        .then(a.method.cmp(&b.method))
}

/// Valid candidates ordered by δ, then fewer changes, then method; first `k`.
pub fn top_k<T>(candidates: Vec<CandidateCE<T>>, k: usize) -> Vec<CandidateCE<T>> {
    let mut valid: Vec<CandidateCE<T>> = candidates.into_iter().filter(|c| c.valid).collect();
    valid.sort_by(rank_order);
    valid.truncate(k);
    valid
}

/// The valid candidate with the smallest δ.
pub fn select_best<T: Clone>(candidates: &[CandidateCE<T>]) -> Option<CandidateCE<T>> {
    candidates.iter().filter(|c| c.valid).min_by(|a, b| rank_order(a, b)).cloned()
}

fn dedup<T: PartialEq>(mut candidates: Vec<CandidateCE<T>>) -> Vec<CandidateCE<T>> {
    let mut out: Vec<CandidateCE<T>> = Vec::with_capacity(candidates.len());
    for c in candidates.drain(..) {
        if !out.iter().any(|o| o.z == c.z) {
            out.push(c);
        }
    }
    out
}

/// One search method of a [`Ufce`] as a stand-alone candidate source.
pub struct MethodSource<'a, T: Scalar> {
    pub ufce: &'a Ufce<T>,
    pub method: Method,
}

impl<T: Scalar> CandidateSource<T> for MethodSource<'_, T> {
    fn name(&self) -> String {
        self.method.label().to_string()
    }

    fn generate(&self, x: &Instance<T>, p: &PerturbationMap<T>, limit: usize) -> Result<Vec<CandidateCE<T>>> {
        let u = self.ufce;
        u.check_instance(x)?;
        p.validate(&u.schema, x)?;
        if self.method == Method::Single {
            return u.single_f(x, p, limit);
        }
        let region = u.region(x, p)?;
        let f2change = p.features();
        let pairs = u.pairs_for(&f2change);
        match self.method {
            Method::Double => u.double_f(x, &region.subspace, &pairs, limit),
            _ => u.triple_f(x, &region.subspace, &form_triplets(&pairs, &f2change, u.config.top_m), limit),
        }
    }
}
