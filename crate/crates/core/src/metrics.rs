//! Evaluation metrics over (x, z) pairs and their aggregation.

use serde::{Deserialize, Serialize};

use crate::data::Schema;
use crate::model::mean_std;
use crate::scalar::Scalar;

/// Numeric values closer than this count as unchanged.
pub const CHANGE_TOLERANCE: f64 = 1e-9;
/// Denominator used in place of a zero MAD.
pub const MAD_EPSILON: f64 = 1e-9;
pub const DEFAULT_ACTIONABLE_THRESHOLD: f64 = 0.3;

/// Indices of features that differ between `z` and `x`.
pub fn changed_features<T: Scalar>(z: &[T], x: &[T], schema: &Schema<T>) -> Vec<usize> {
    (0..x.len())
        .filter(|&j| {
            if schema.features[j].is_categorical() {
                z[j] != x[j]
            } else {
                (z[j] - x[j]).abs().to_f64_lossy() > CHANGE_TOLERANCE
            }
        })
        .collect()
}

/// Number and fraction of changed features.
pub fn sparsity<T: Scalar>(z: &[T], x: &[T], schema: &Schema<T>) -> (usize, f64) {
    let count = changed_features(z, x, schema).len();
    let d = x.len().max(1);
    (count, count as f64 / d as f64)
}

/// Share of categorical features that differ: 0 when all agree, 1 when all
/// differ, 0 when there are no categorical features.
pub fn prox_jac<T: Scalar>(z: &[T], x: &[T], schema: &Schema<T>) -> f64 {
    let cats = schema.categorical_indices();
    if cats.is_empty() {
        return 0.0;
    }
    let mismatched = cats.iter().filter(|&&j| z[j] != x[j]).count();
    mismatched as f64 / cats.len() as f64
}

/// Sum of absolute numeric differences, each divided by the feature's MAD.
/// Returns the distance and the names of features whose MAD was zero.
pub fn prox_euc<T: Scalar>(z: &[T], x: &[T], schema: &Schema<T>) -> (f64, Vec<String>) {
    let mut total = 0.0;
    let mut warnings = Vec::new();
    for j in schema.numeric_indices() {
        let f = &schema.features[j];
        let diff = (z[j] - x[j]).abs().to_f64_lossy();
        let mad = f.mad.to_f64_lossy();
        let denom = if mad > 0.0 {
            mad
        } else {
            if diff > 0.0 {
                warnings.push(f.name.clone());
            }
            MAD_EPSILON
        };
        total += diff / denom;
    }
    (total, warnings)
}

/// Upper bound of `prox_euc` over the observed ranges, used to rescale it to [0, 1].
pub fn prox_euc_scale<T: Scalar>(schema: &Schema<T>) -> f64 {
    let s: f64 = schema
        .numeric_indices()
        .into_iter()
        .map(|j| {
            let f = &schema.features[j];
            let mad = f.mad.to_f64_lossy();
            let range = (f.observed_max - f.observed_min).to_f64_lossy();
            if mad > 0.0 {
                range / mad
            } else {
                0.0
            }
        })
        .sum();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Share of changed features that are in the user's list; 0 when nothing changed.
pub fn actionability<T: Scalar>(z: &[T], x: &[T], schema: &Schema<T>, user_features: &[usize]) -> f64 {
    let changed = changed_features(z, x, schema);
    if changed.is_empty() {
        return 0.0;
    }
    let inside = changed.iter().filter(|j| user_features.contains(j)).count();
    inside as f64 / changed.len() as f64
}

pub fn feasibility(valid: bool, plausible: bool, actionability: f64, threshold: f64) -> bool {
    valid && plausible && actionability >= threshold
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sparsity_count: usize,
    pub sparsity_fraction: f64,
    pub prox_jac: f64,
    pub prox_euc: f64,
    pub actionability: f64,
    pub valid: bool,
    pub plausible: bool,
    pub feasible: bool,
}

impl MetricsRecord {
    pub fn compute<T: Scalar>(
        z: &[T],
        x: &[T],
        schema: &Schema<T>,
        user_features: &[usize],
        valid: bool,
        plausible: bool,
        threshold: f64,
    ) -> Self {
        let (sparsity_count, sparsity_fraction) = sparsity(z, x, schema);
        let act = actionability(z, x, schema, user_features);
        MetricsRecord {
            sparsity_count,
            sparsity_fraction,
            prox_jac: prox_jac(z, x, schema),
            prox_euc: prox_euc(z, x, schema).0,
            actionability: act,
            valid,
            plausible,
            feasible: feasibility(valid, plausible, act, threshold),
        }
    }
}

/// Means and standard deviations over generated counterfactuals only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub count: usize,
    pub prox_jac: Stat,
    pub prox_euc: Stat,
    pub sparsity: Stat,
    pub actionability: Stat,
    pub plausibility: Stat,
    pub feasibility: Stat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Stat { mean, std }
    }
}

pub fn summarize(records: &[MetricsRecord]) -> MetricsSummary {
    let col = |f: &dyn Fn(&MetricsRecord) -> f64| Stat::of(&records.iter().map(f).collect::<Vec<_>>());
    MetricsSummary {
        count: records.len(),
        prox_jac: col(&|r| r.prox_jac),
        prox_euc: col(&|r| r.prox_euc),
        sparsity: col(&|r| r.sparsity_count as f64),
        actionability: col(&|r| r.actionability),
        plausibility: col(&|r| f64::from(u8::from(r.plausible))),
        feasibility: col(&|r| f64::from(u8::from(r.feasible))),
    }
}
