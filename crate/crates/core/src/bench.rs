//! Experiment harness: simulated user feedback, pooled explanation runs and
//! report tables.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_folds, Dataset, Instance, Schema};
use crate::error::{Result, UfceError};
use crate::explainer::{CandidateCE, ExplainConfig, Explanation, Method, Ufce};
use crate::metrics::{summarize, MetricsRecord};
use crate::model::{train_logistic, BlackBox, LogisticConfig};
use crate::neighborhood::{FeatureBound, PerturbationMap};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeedbackLevel {
    VL,
    L,
    M,
    F,
    MF,
}

impl FeedbackLevel {
    pub const ALL: [FeedbackLevel; 5] = [FeedbackLevel::VL, FeedbackLevel::L, FeedbackLevel::M, FeedbackLevel::F, FeedbackLevel::MF];

    /// Share of each feature's MAD added to its upper bound.
    pub fn fraction(self) -> f64 {
        match self {
            FeedbackLevel::VL => 0.2,
            FeedbackLevel::L => 0.4,
            FeedbackLevel::M => 0.6,
            FeedbackLevel::F => 0.8,
            FeedbackLevel::MF => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeedbackLevel::VL => "VL",
            FeedbackLevel::L => "L",
            FeedbackLevel::M => "M",
            FeedbackLevel::F => "F",
            FeedbackLevel::MF => "MF",
        }
    }
}

/// Feedback that allows every unprotected numeric feature to grow by
/// `fraction` of its MAD and every unprotected categorical feature to flip.
pub fn make_feedback<T: Scalar>(fraction: f64, x: &[T], schema: &Schema<T>) -> PerturbationMap<T> {
    feedback_with(x, schema, |j| x[j] + T::lit(fraction) * schema.features[j].mad)
}

/// Feedback with upper bounds drawn uniformly from (x, observed_max].
pub fn random_feedback<T: Scalar>(x: &[T], schema: &Schema<T>, rng: &mut impl Rng) -> PerturbationMap<T> {
    feedback_with(x, schema, |j| {
        let room = schema.features[j].observed_max - x[j];
        if room > T::zero() {
            // 1 − U[0, 1) lies in (0, 1].
            x[j] + room * T::lit(1.0 - rng.random::<f64>())
        } else {
            x[j]
        }
    })
}

fn feedback_with<T: Scalar>(x: &[T], schema: &Schema<T>, mut upper: impl FnMut(usize) -> T) -> PerturbationMap<T> {
    let mut p = PerturbationMap::new();
    for (j, f) in schema.features.iter().enumerate() {
        if f.protected {
            continue;
        }
        if f.is_categorical() {
            p.insert(j, FeatureBound::Toggle { current: x[j], alternate: f.alternate_code(x[j]) });
        } else {
            p.insert(j, FeatureBound::Range { lower: x[j], upper: upper(j) });
        }
    }
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub pool_size: usize,
    /// Candidates each method may contribute per instance.
    pub per_method: usize,
    pub folds: usize,
    pub repetitions: usize,
    /// MAD share used for the multi-dataset comparison.
    pub rq3_fraction: f64,
    pub explain: ExplainConfig,
    pub logistic: LogisticConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            pool_size: 50,
            per_method: 5,
            folds: 5,
            repetitions: 10,
            rq3_fraction: 0.5,
            explain: ExplainConfig::default(),
            logistic: LogisticConfig::default(),
        }
    }
}

/// A trained explainer and a pool of instances to explain.
pub struct Setup<T: Scalar> {
    pub ufce: Ufce<T>,
    pub pool: Vec<Instance<T>>,
    /// Held-out rows the model does not assign the desired label.
    pub eligible: usize,
}

/// Trains on `train` and draws the pool from `test` rows that the model does
/// not already assign the desired label.
pub fn setup<T: Scalar>(train: &Dataset<T>, test: &Dataset<T>, config: &BenchConfig, seed: u64) -> Result<Setup<T>> {
    let model = train_logistic(train, &config.logistic)?;
    let mut explain = config.explain.clone();
    explain.seed = seed;
    let t = explain.t;
    let mut candidates = Vec::new();
    for row in &test.rows {
        if model.predict(row)? != t {
            candidates.push(row.clone());
        }
    }
    let eligible = candidates.len();
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    candidates.truncate(config.pool_size);
    let ufce = Ufce::new(train, Arc::new(model), explain)?;
    Ok(Setup { ufce, pool: candidates, eligible })
}

/// Train/test split used by the single-dataset experiments: the first of
/// `folds` seeded folds is held out.
pub fn holdout<T: Scalar>(dataset: &Dataset<T>, config: &BenchConfig, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let mut folds = split_folds(dataset, config.folds, seed)?;
    let first = folds.swap_remove(0);
    Ok((first.train, first.test))
}

/// What one method produced for one instance.
#[derive(Clone, Debug)]
pub struct MethodOutcome<T> {
    /// The nearest feasible candidate, or the nearest one if none is feasible.
    pub chosen: Option<(CandidateCE<T>, MetricsRecord)>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct InstanceOutcome<T> {
    pub x: Instance<T>,
    pub feedback: PerturbationMap<T>,
    pub explanation: Option<Explanation<T>>,
    pub methods: [MethodOutcome<T>; 3],
    pub error: Option<String>,
}

/// Explains `x` under `p` and re-checks every candidate: validity against the
/// model, plausibility against LOF and actionability against the feedback keys.
pub fn evaluate_instance<T: Scalar>(ufce: &Ufce<T>, x: &Instance<T>, p: &PerturbationMap<T>, per_method: usize) -> InstanceOutcome<T> {
    let empty = || MethodOutcome { chosen: None, seconds: 0.0 };
    let explanation = match ufce.explain(x, p, per_method) {
        Ok(e) => e,
        Err(e) => {
            return InstanceOutcome {
                x: x.clone(),
                feedback: p.clone(),
                explanation: None,
                methods: [empty(), empty(), empty()],
                error: Some(e.to_string()),
            }
        }
    };
    let user = p.features();
    let threshold = ufce.config.actionable_threshold;
    let mut methods = [empty(), empty(), empty()];
    for (slot, method) in Method::ALL.into_iter().enumerate() {
        let mut scored: Vec<(CandidateCE<T>, MetricsRecord)> = explanation
            .by_method(method)
            .map(|c| {
                let valid = ufce.model.predict(&c.z).map(|l| l == ufce.config.t).unwrap_or(false);
                let plausible = ufce.lof.is_plausible(&c.z);
                (c.clone(), MetricsRecord::compute(&c.z, x, &ufce.schema, &user, valid, plausible, threshold))
            })
            .collect();
        scored.sort_by(|a, b| b.1.feasible.cmp(&a.1.feasible).then(a.0.delta.total_cmp(&b.0.delta)));
        methods[slot] = MethodOutcome { chosen: scored.into_iter().next(), seconds: explanation.seconds[slot] };
    }
    InstanceOutcome { x: x.clone(), feedback: p.clone(), explanation: Some(explanation), methods, error: None }
}

/// Evaluates a pool in parallel; results keep pool order.
pub fn evaluate_pool<T: Scalar>(
    ufce: &Ufce<T>,
    pool: &[Instance<T>],
    per_method: usize,
    feedback: impl Fn(usize, &Instance<T>) -> PerturbationMap<T> + Sync,
) -> Vec<InstanceOutcome<T>> {
    pool.par_iter()
        .enumerate()
        .map(|(i, x)| evaluate_instance(ufce, x, &feedback(i, x), per_method))
        .collect()
}

/// One line of a report: one method under one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub method: String,
    pub pool: usize,
    pub generated: usize,
    pub plausible: usize,
    pub actionable: usize,
    pub feasible: usize,
    pub feasible_pct: f64,
    pub prox_jac_mean: f64,
    pub prox_jac_std: f64,
    pub prox_euc_mean: f64,
    pub prox_euc_std: f64,
    pub sparsity_mean: f64,
    pub sparsity_std: f64,
    pub actionability_mean: f64,
    pub actionability_std: f64,
    pub failures: usize,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub condition: String,
    pub method: String,
    /// Wall-clock seconds the method spent over the whole pool, divided by the
    /// number of CEs it produced; 0 when it produced none.
    pub mean_seconds: f64,
    pub total_seconds: f64,
    /// CEs produced.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub dataset: String,
    pub seed: u64,
    pub config: BenchConfig,
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

/// Tallies one method's outcomes over a pool.
pub fn tally<T: Scalar>(condition: &str, method: Method, outcomes: &[&InstanceOutcome<T>], threshold: f64) -> (ReportRow, TimingRow) {
    let slot = method as usize;
    let records: Vec<MetricsRecord> =
        outcomes.iter().filter_map(|o| o.methods[slot].chosen.as_ref().map(|(_, r)| r.clone())).collect();
    let total_seconds: f64 = outcomes.iter().map(|o| o.methods[slot].seconds).sum();
    let summary = summarize(&records);
    let pool = outcomes.len();
    let feasible = records.iter().filter(|r| r.feasible).count();
    let note = if pool == 0 { "no instance in the pool lacks the desired label".to_string() } else { String::new() };
    let row = ReportRow {
        condition: condition.to_string(),
        method: method.label().to_string(),
        pool,
        generated: records.len(),
        plausible: records.iter().filter(|r| r.plausible).count(),
        actionable: records.iter().filter(|r| r.actionability >= threshold).count(),
        feasible,
        feasible_pct: if pool == 0 { 0.0 } else { feasible as f64 / pool as f64 * 100.0 },
        prox_jac_mean: summary.prox_jac.mean,
        prox_jac_std: summary.prox_jac.std,
        prox_euc_mean: summary.prox_euc.mean,
        prox_euc_std: summary.prox_euc.std,
        sparsity_mean: summary.sparsity.mean,
        sparsity_std: summary.sparsity.std,
        actionability_mean: summary.actionability.mean,
        actionability_std: summary.actionability.std,
        failures: outcomes.iter().filter(|o| o.error.is_some()).count(),
        note,
    };
    let produced = records.len();
    let timing = TimingRow {
        condition: condition.to_string(),
        method: method.label().to_string(),
        mean_seconds: if produced == 0 { 0.0 } else { total_seconds / produced as f64 },
        total_seconds,
        samples: produced,
    };
    (row, timing)
}

fn tally_all<T: Scalar>(
    condition: &str,
    outcomes: &[&InstanceOutcome<T>],
    threshold: f64,
    rows: &mut Vec<ReportRow>,
    timing: &mut Vec<TimingRow>,
) {
    for method in Method::ALL {
        let (r, t) = tally(condition, method, outcomes, threshold);
        rows.push(r);
        timing.push(t);
    }
}

/// Constraint levels: the same pool explained under each feedback level.
pub fn run_rq1<T: Scalar>(name: &str, dataset: &Dataset<T>, config: &BenchConfig, seed: u64) -> Result<(ExperimentReport, TimingReport)> {
    let (train, test) = holdout(dataset, config, seed)?;
    let s = setup(&train, &test, config, seed)?;
    let threshold = s.ufce.config.actionable_threshold;
    let (mut rows, mut timing) = (Vec::new(), Vec::new());
    for level in FeedbackLevel::ALL {
        let outcomes = evaluate_pool(&s.ufce, &s.pool, config.per_method, |_, x| make_feedback(level.fraction(), x, &s.ufce.schema));
        tally_all(level.name(), &outcomes.iter().collect::<Vec<_>>(), threshold, &mut rows, &mut timing);
    }
    Ok((report("rq1", name, seed, config, rows), TimingReport { rows: timing }))
}

/// Randomised feedback, repeated; the `all` condition pools every repetition.
pub fn run_rq2<T: Scalar>(name: &str, dataset: &Dataset<T>, config: &BenchConfig, seed: u64) -> Result<(ExperimentReport, TimingReport)> {
    let (train, test) = holdout(dataset, config, seed)?;
    let s = setup(&train, &test, config, seed)?;
    let threshold = s.ufce.config.actionable_threshold;
    let (mut rows, mut timing) = (Vec::new(), Vec::new());
    let mut all = Vec::new();
    for rep in 0..config.repetitions {
        let outcomes = evaluate_pool(&s.ufce, &s.pool, config.per_method, |i, x| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((rep * s.pool.len() + i) as u64 + 1);
            random_feedback(x, &s.ufce.schema, &mut rng)
        });
        tally_all(&format!("rep-{}", rep + 1), &outcomes.iter().collect::<Vec<_>>(), threshold, &mut rows, &mut timing);
        all.extend(outcomes);
    }
    tally_all("all", &all.iter().collect::<Vec<_>>(), threshold, &mut rows, &mut timing);
    Ok((report("rq2", name, seed, config, rows), TimingReport { rows: timing }))
}

/// Every dataset under k-fold cross-validation with feedback at a fixed MAD share.
pub fn run_rq3<T: Scalar>(datasets: &[(String, Dataset<T>)], config: &BenchConfig, seed: u64) -> Result<(ExperimentReport, TimingReport)> {
    let (mut rows, mut timing) = (Vec::new(), Vec::new());
    for (name, dataset) in datasets {
        let mut outcomes = Vec::new();
        let mut threshold = config.explain.actionable_threshold;
        for fold in split_folds(dataset, config.folds, seed)? {
            let s = setup(&fold.train, &fold.test, config, seed)?;
            threshold = s.ufce.config.actionable_threshold;
            outcomes.extend(evaluate_pool(&s.ufce, &s.pool, config.per_method, |_, x| {
                make_feedback(config.rq3_fraction, x, &s.ufce.schema)
            }));
        }
        tally_all(name, &outcomes.iter().collect::<Vec<_>>(), threshold, &mut rows, &mut timing);
    }
    let label = datasets.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(",");
    Ok((report("rq3", &label, seed, config, rows), TimingReport { rows: timing }))
}

fn report(experiment: &str, dataset: &str, seed: u64, config: &BenchConfig, rows: Vec<ReportRow>) -> ExperimentReport {
    ExperimentReport { experiment: experiment.into(), dataset: dataset.into(), seed, config: config.clone(), rows }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => rows_to_csv(&report.rows),
        ReportFormat::Markdown => Ok(markdown(report)),
    }
}

const CSV_HEADER: &str = "condition,method,pool,generated,plausible,actionable,feasible,feasible_pct,prox_jac_mean,prox_jac_std,prox_euc_mean,prox_euc_std,sparsity_mean,sparsity_std,actionability_mean,actionability_std,failures,note";

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| UfceError::Argument(e.to_string()))?;
    Ok(format!("{CSV_HEADER}\n{}", String::from_utf8_lossy(&body)))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(UfceError::from)).collect()
}

fn markdown(report: &ExperimentReport) -> String {
    let mut out = format!("# {} on {} (seed {})\n", report.experiment, report.dataset, report.seed);
    let mut conditions: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !conditions.contains(&r.condition.as_str()) {
            conditions.push(&r.condition);
        }
    }
    if conditions.is_empty() {
        out.push_str("\n| method | pool | plaus | act | feas | feas % | prox-Jac | prox-Euc | sparsity | actionability |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    }
    for c in conditions {
        let _ = writeln!(out, "\n## {c}\n");
        out.push_str("| method | pool | plaus | act | feas | feas % | prox-Jac | prox-Euc | sparsity | actionability |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
        for r in report.rows.iter().filter(|r| r.condition == c) {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {:.1} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
                r.method,
                r.pool,
                r.plausible,
                r.actionable,
                r.feasible,
                r.feasible_pct,
                r.prox_jac_mean,
                r.prox_jac_std,
                r.prox_euc_mean,
                r.prox_euc_std,
                r.sparsity_mean,
                r.sparsity_std,
                r.actionability_mean,
                r.actionability_std
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureKind, FeatureSchema};

    fn schema() -> Schema<f64> {
        let f = |name: &str, kind, mad, protected| FeatureSchema {
            name: String::from(name),
            kind,
            observed_min: 0.0,
            observed_max: 200.0,
            mad,
            protected,
            categories: (kind == FeatureKind::Categorical).then_some([0.0, 1.0]),
        };
        Schema {
            features: vec![
                f("income", FeatureKind::Numeric, 50.10, false),
                f("family", FeatureKind::Numeric, 1.0, true),
                f("online", FeatureKind::Categorical, 0.0, false),
                f("flat", FeatureKind::Numeric, 0.0, false),
            ],
            label: "y".into(),
        }
    }

    #[test]
    fn levels_scale_mad() {
        let s = schema();
        let x = [40.0, 2.0, 1.0, 5.0];
        let vl = make_feedback(FeedbackLevel::VL.fraction(), &x, &s);
        let FeatureBound::Range { upper, .. } = vl.get(0).copied().unwrap() else { panic!() };
        assert!((upper - 40.0 - 10.02).abs() < 1e-9);
        let mf = make_feedback(FeedbackLevel::MF.fraction(), &x, &s);
        let FeatureBound::Range { upper, .. } = mf.get(0).copied().unwrap() else { panic!() };
        assert!((upper - 40.0 - 50.10).abs() < 1e-9);
        assert_eq!(mf.get(2), Some(&FeatureBound::Toggle { current: 1.0, alternate: 0.0 }));
        assert_eq!(mf.get(3), Some(&FeatureBound::Range { lower: 5.0, upper: 5.0 }));
        assert!(!mf.contains_feature(1));
        assert!(FeedbackLevel::ALL.windows(2).all(|w| w[0].fraction() < w[1].fraction()));
    }

    #[test]
    fn random_feedback_bounds() {
        let s = schema();
        let x = [50.0, 2.0, 0.0, 200.0];
        let draw = |seed| random_feedback(&x, &s, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(draw(3), draw(3));
        assert_eq!(draw(3).get(3), Some(&FeatureBound::Range { lower: 200.0, upper: 200.0 }));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1000;
        let mut total = 0.0;
        for _ in 0..n {
            let FeatureBound::Range { lower, upper } = *random_feedback(&x, &s, &mut rng).get(0).unwrap() else { panic!() };
            assert!(upper > lower && upper <= 200.0);
            total += upper - lower;
        }
        let mean = total / n as f64;
        assert!((mean - 75.0).abs() < 0.05 * 75.0, "{mean}");
    }

    #[test]
    fn empty_report_has_headers_only() {
        let r = report("rq1", "toy", 0, &BenchConfig::default(), Vec::new());
        let csv = emit_report(&r, ReportFormat::Csv).unwrap();
        assert_eq!(csv.trim_end(), CSV_HEADER);
        assert!(rows_from_csv(&csv).unwrap().is_empty());
        let md = emit_report(&r, ReportFormat::Markdown).unwrap();
        assert!(md.contains("| method |"));
    }
}
