//! Request and response documents, and the handlers behind them.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use ufce_core::data::{FeatureKind, Instance};
use ufce_core::explainer::{top_k, Method};
use ufce_core::metrics::MetricsRecord;
use ufce_core::model::CvSummary;
use ufce_core::neighborhood::{FeatureBound, IntervalMode, PerturbationMap};

use crate::error::ApiError;
use crate::registry::Artifacts;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub dataset: String,
    /// Feature name to value; must name every feature.
    pub instance: BTreeMap<String, f64>,
    /// Desired label.
    #[serde(default = "default_t")]
    pub t: u8,
    /// Feature name to `[lower, upper]` (numeric) or `[current, alternate]` (categorical).
    #[serde(default)]
    pub constraints: BTreeMap<String, [f64; 2]>,
    /// Features the user allows to change; defaults to the constraint keys.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub options: ExplainOptions,
}

fn default_t() -> u8 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainOptions {
    pub lambda: f64,
    pub lof_threshold: f64,
    pub actionable_threshold: f64,
    pub strict_intersection: bool,
    pub max_candidates: usize,
    pub seed: u64,
    /// Include wall-clock time in the response (makes responses non-reproducible).
    pub timing: bool,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        let c = ufce_core::explainer::ExplainConfig::default();
        ExplainOptions {
            lambda: c.lambda,
            lof_threshold: c.lof_threshold,
            actionable_threshold: c.actionable_threshold,
            strict_intersection: true,
            max_candidates: 5,
            seed: 0,
            timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub feature: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub z: BTreeMap<String, f64>,
    pub method: Method,
    pub label: String,
    pub delta: f64,
    pub lof_score: f64,
    pub metrics: MetricsRecord,
    pub changes: Vec<Change>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub candidates: Vec<CandidateView>,
    pub subspace: BTreeMap<String, [f64; 2]>,
    pub warnings: Vec<String>,
    pub radius: f64,
    pub neighbors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

/// Runs the explainer for a request against loaded artifacts.
pub fn handle_explain(art: &Artifacts, req: &ExplainRequest) -> Result<ExplainResponse, ApiError> {
    let clock = Instant::now();
    let schema = &art.dataset.schema;
    if req.t != art.ufce.config.t {
        return Err(ApiError::Unprocessable(format!(
            "this service explains towards label {}; got t = {}",
            art.ufce.config.t, req.t
        )));
    }
    if let Some(unknown) = req.instance.keys().find(|k| schema.index_of(k).is_err()) {
        return Err(ApiError::Unprocessable(format!("instance has unknown feature `{unknown}`")));
    }
    let mut x = Vec::with_capacity(schema.len());
    for f in &schema.features {
        match req.instance.get(&f.name) {
            Some(&v) => x.push(v),
            None => return Err(ApiError::Unprocessable(format!("instance is missing feature `{}`", f.name))),
        }
    }
    let x = Instance(x);
    schema.validate(&x)?;

    let allowed: Option<Vec<&str>> = req.features.as_ref().map(|v| v.iter().map(String::as_str).collect());
    if let Some(list) = &allowed {
        if let Some(unknown) = list.iter().find(|k| schema.index_of(k).is_err()) {
            return Err(ApiError::Unprocessable(format!("feature list names unknown feature `{unknown}`")));
        }
    }
    let mut p = PerturbationMap::new();
    for (name, &[a, b]) in &req.constraints {
        let j = schema
            .index_of(name)
            .map_err(|_| ApiError::Unprocessable(format!("constraint on unknown feature `{name}`")))?;
        let spec = &schema.features[j];
        if spec.protected {
            return Err(ApiError::Unprocessable(format!("`{name}` is protected and cannot be constrained")));
        }
        if allowed.as_ref().is_some_and(|l| !l.contains(&name.as_str())) {
            continue;
        }
        let bound = match spec.kind {
            FeatureKind::Numeric => FeatureBound::Range { lower: a, upper: b },
            FeatureKind::Categorical => FeatureBound::Toggle { current: a, alternate: b },
        };
        p.insert(j, bound);
    }
    p.entries.sort_by_key(|(j, _)| *j);
    p.validate(schema, &x).map_err(|e| ApiError::Unprocessable(e.to_string()))?;

    let o = &req.options;
    if o.max_candidates == 0 {
        return Err(ApiError::Unprocessable("max_candidates must be positive".into()));
    }
    let mode = if o.strict_intersection { IntervalMode::Strict } else { IntervalMode::Literal };
    let ufce = art.ufce.with_options(o.lambda, o.lof_threshold, mode, o.seed);
    let explanation = ufce.explain(&x, &p, o.max_candidates)?;

    let user = p.features();
    let mut candidates = Vec::new();
    for c in top_k(explanation.candidates, usize::MAX) {
        let valid = ufce.model.predict(&c.z)? == ufce.config.t;
        let plausible = ufce.lof.is_plausible(&c.z);
        let metrics = MetricsRecord::compute(&c.z, &x, schema, &user, valid, plausible, o.actionable_threshold);
        if !metrics.feasible {
            continue;
        }
        candidates.push(CandidateView {
            z: schema.features.iter().zip(c.z.iter()).map(|(f, &v)| (f.name.clone(), v)).collect(),
            method: c.method,
            label: c.method.label().to_string(),
            delta: c.delta,
            lof_score: ufce.lof.score(&c.z),
            metrics,
            changes: c
                .changed
                .iter()
                .map(|&j| Change { feature: schema.features[j].name.clone(), before: x[j], after: c.z[j] })
                .collect(),
        });
        if candidates.len() == o.max_candidates {
            break;
        }
    }
    let subspace = explanation
        .subspace
        .entries
        .iter()
        .map(|&(j, b)| {
            let pair = match b {
                FeatureBound::Range { lower, upper } => [lower, upper],
                FeatureBound::Toggle { current, alternate } => [current, alternate],
            };
            (schema.features[j].name.clone(), pair)
        })
        .collect();
    Ok(ExplainResponse {
        candidates,
        subspace,
        warnings: explanation.warnings,
        radius: explanation.radius,
        neighbors: explanation.neighbors,
        elapsed_seconds: o.timing.then(|| clock.elapsed().as_secs_f64()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    pub kind: FeatureKind,
    pub min: f64,
    pub max: f64,
    pub mad: f64,
    pub protected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub rows: usize,
    pub label: String,
    pub positive_rate: f64,
    pub features: Vec<FeatureSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvSummary>,
}

pub fn summary(art: &Artifacts) -> DatasetSummary {
    let ds = &art.dataset;
    DatasetSummary {
        id: art.id.clone(),
        rows: ds.len(),
        label: ds.schema.label.clone(),
        positive_rate: ds.positive_rate(),
        features: ds
            .schema
            .features
            .iter()
            .map(|f| FeatureSummary {
                name: f.name.clone(),
                kind: f.kind,
                min: f.observed_min,
                max: f.observed_max,
                mad: f.mad,
                protected: f.protected,
                categories: f.categories,
            })
            .collect(),
        cv: art.cv.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedPair {
    pub i: String,
    pub j: String,
    pub score: f64,
}

pub fn named_pairs(art: &Artifacts) -> Vec<NamedPair> {
    let f = &art.dataset.schema.features;
    art.ufce
        .mi_pairs
        .iter()
        .map(|p| NamedPair { i: f[p.i].name.clone(), j: f[p.j].name.clone(), score: p.score })
        .collect()
}
