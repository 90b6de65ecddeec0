//! Nearest neighborhood in the desired space and its intersection with the
//! user's feasible ranges.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, Scaler, Schema};
use crate::error::{Result, UfceError};
use crate::kdtree::{Hit, KdTree, Metric};
use crate::scalar::Scalar;

/// Maps raw instances into the space used for neighbor and outlier queries:
/// numeric features min-max scaled, categorical features as their code index
/// (0 or 1), so a categorical mismatch adds 1 to the squared distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding<T> {
    pub scaler: Scaler<T>,
    /// Category codes per feature; `None` for numeric features.
    pub categories: Vec<Option<[T; 2]>>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(schema: &Schema<T>, scaler: Scaler<T>) -> Self {
        Embedding { scaler, categories: schema.features.iter().map(|f| f.categories).collect() }
    }

    pub fn embed(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| match self.categories[j] {
                Some([a, _]) => {
                    if v == a {
                        T::zero()
                    } else {
                        T::one()
                    }
                }
                None => self.scaler.scale_value(j, v),
            })
            .collect()
    }

    pub fn distance(&self, a: &[T], b: &[T]) -> T {
        Metric::Euclidean.distance(&self.embed(a), &self.embed(b))
    }
}

/// KD-tree over the embedded desired-space rows. Hit indices refer to `rows`.
#[derive(Clone, Debug)]
pub struct NeighborTree<T> {
    pub embedding: Embedding<T>,
    pub rows: Vec<Instance<T>>,
    tree: KdTree<T>,
}

pub fn build_tree<T: Scalar>(desired: &Dataset<T>, scaler: &Scaler<T>) -> Result<NeighborTree<T>> {
    if desired.is_empty() {
        return Err(UfceError::EmptyInput("desired space has no rows".into()));
    }
    let embedding = Embedding::new(&desired.schema, scaler.clone());
    let points: Vec<Vec<T>> = desired.rows.iter().map(|r| embedding.embed(r)).collect();
    let tree = KdTree::build(&points, desired.dim(), Metric::Euclidean);
    Ok(NeighborTree { embedding, rows: desired.rows.clone(), tree })
}

impl<T: Scalar> NeighborTree<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    /// Desired-space rows within `radius` of `x`, ascending by distance.
    pub fn fnn(&self, x: &[T], radius: T) -> Vec<Hit<T>> {
        self.tree.within(&self.embedding.embed(x), radius)
    }

    /// Distance from `x` to the farthest desired-space row.
    pub fn farthest_distance(&self, x: &[T]) -> T {
        let q = self.embedding.embed(x);
        (0..self.tree.len()).fold(T::zero(), |m, i| m.max(Metric::Euclidean.distance(&q, self.tree.point(i))))
    }

    /// Neighborhood under a radius policy: start from a fraction of the
    /// farthest distance and double until enough neighbors are found.
    pub fn neighborhood(&self, x: &[T], policy: &RadiusPolicy) -> Neighborhood<T> {
        let mut radius = T::lit(policy.fraction) * self.farthest_distance(x);
        if radius <= T::zero() {
            radius = T::epsilon();
        }
        let mut hits = self.fnn(x, radius);
        let mut doublings = 0;
        while hits.len() < policy.min_neighbors && doublings < policy.max_doublings {
            radius = radius + radius;
            hits = self.fnn(x, radius);
            doublings += 1;
        }
        Neighborhood { radius, rows: hits.iter().map(|h| self.rows[h.index].clone()).collect(), hits }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusPolicy {
    /// Initial radius as a fraction of the distance to the farthest desired-space row.
    pub fraction: f64,
    pub min_neighbors: usize,
    pub max_doublings: usize,
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        RadiusPolicy { fraction: 0.25, min_neighbors: 5, max_doublings: 3 }
    }
}

#[derive(Clone, Debug)]
pub struct Neighborhood<T> {
    pub radius: T,
    pub hits: Vec<Hit<T>>,
    pub rows: Vec<Instance<T>>,
}

/// A feasible region for one feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureBound<T> {
    /// Numeric range in raw units, inclusive.
    Range { lower: T, upper: T },
    /// A binary categorical feature that may move from `current` to `alternate`.
    Toggle { current: T, alternate: T },
}

impl<T: Scalar> FeatureBound<T> {
    pub fn contains(&self, v: T) -> bool {
        match *self {
            FeatureBound::Range { lower, upper } => v >= lower && v <= upper,
            FeatureBound::Toggle { current, alternate } => v == current || v == alternate,
        }
    }

    /// Clamps a numeric value into the range; toggles pass through.
    pub fn clamp(&self, v: T) -> T {
        match *self {
            FeatureBound::Range { lower, upper } => v.max(lower).min(upper),
            FeatureBound::Toggle { .. } => v,
        }
    }
}

/// Per-feature bounds keyed by feature index, in insertion order. Used both for
/// the user's perturbation map and for the derived subspace.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundMap<T> {
    pub entries: Vec<(usize, FeatureBound<T>)>,
}

pub type PerturbationMap<T> = BoundMap<T>;
pub type Subspace<T> = BoundMap<T>;

impl<T: Scalar> BoundMap<T> {
    pub fn new() -> Self {
        BoundMap { entries: Vec::new() }
    }

    /// Inserts or replaces the bound for `feature`.
    pub fn insert(&mut self, feature: usize, bound: FeatureBound<T>) {
        match self.entries.iter_mut().find(|(f, _)| *f == feature) {
            Some(slot) => slot.1 = bound,
            None => self.entries.push((feature, bound)),
        }
    }

    pub fn get(&self, feature: usize) -> Option<&FeatureBound<T>> {
        self.entries.iter().find(|(f, _)| *f == feature).map(|(_, b)| b)
    }

    pub fn contains_feature(&self, feature: usize) -> bool {
        self.get(feature).is_some()
    }

    pub fn features(&self) -> Vec<usize> {
        self.entries.iter().map(|(f, _)| *f).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the map against a schema and the instance it applies to.
    pub fn validate(&self, schema: &Schema<T>, x: &[T]) -> Result<()> {
        for &(f, bound) in &self.entries {
            let spec = schema
                .features
                .get(f)
                .ok_or_else(|| UfceError::Argument(format!("feature index {f} out of range")))?;
            match bound {
                FeatureBound::Range { lower, upper } => {
                    if spec.is_categorical() {
                        return Err(UfceError::Argument(format!("`{}` is categorical; a range is not allowed", spec.name)));
                    }
                    if !(lower <= upper) {
                        return Err(UfceError::Argument(format!("`{}`: lower bound exceeds upper bound", spec.name)));
                    }
                }
                FeatureBound::Toggle { current, alternate } => {
                    if spec.is_numeric() {
                        return Err(UfceError::Argument(format!("`{}` is numeric; a toggle is not allowed", spec.name)));
                    }
                    if current != x[f] || alternate != spec.alternate_code(current) {
                        return Err(UfceError::Argument(format!(
                            "`{}`: toggle must go from the instance's code to the other code",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    /// Clamp both ends of the user range to the neighborhood hull.
    Strict,
    /// Branch order of the original pseudocode; may leave one end unclamped.
    Literal,
}

/// Intersects the user's bounds with the ranges spanned by the neighbors.
/// Features whose intersection is empty are dropped with a warning.
pub fn intervals<T: Scalar>(
    nn: &[Instance<T>],
    p: &PerturbationMap<T>,
    schema: &Schema<T>,
    mode: IntervalMode,
) -> Result<(Subspace<T>, Vec<String>)> {
    if nn.is_empty() {
        return Err(UfceError::EmptyInput("no neighbors to build a subspace from".into()));
    }
    let mut subspace = Subspace::new();
    let mut warnings = Vec::new();
    for &(f, bound) in &p.entries {
        let name = &schema.features[f].name;
        match bound {
            FeatureBound::Range { lower, upper } => {
                let lo_nn = nn.iter().map(|r| r[f]).fold(T::infinity(), T::min);
                let hi_nn = nn.iter().map(|r| r[f]).fold(T::neg_infinity(), T::max);
                let (lo, hi) = match mode {
                    IntervalMode::Strict => (lower.max(lo_nn), upper.min(hi_nn)),
                    IntervalMode::Literal => {
                        if upper >= hi_nn {
                            (lower, hi_nn)
                        } else if lower <= lo_nn {
                            (lo_nn, upper)
                        } else {
                            (lower, upper)
                        }
                    }
                };
                if lo > hi {
                    warnings.push(format!(
                        "`{name}`: feasible range [{lower}, {upper}] does not meet the neighborhood range [{lo_nn}, {hi_nn}]; feature dropped"
                    ));
                } else {
                    subspace.insert(f, FeatureBound::Range { lower: lo, upper: hi });
                }
            }
            FeatureBound::Toggle { current, alternate } => {
                subspace.insert(f, FeatureBound::Toggle { current, alternate });
            }
        }
    }
    Ok((subspace, warnings))
}
