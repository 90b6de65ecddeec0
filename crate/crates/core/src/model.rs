//! Black-box classifier interface, the built-in logistic regression, and the
//! per-feature predictors used to keep multi-feature perturbations consistent.

use serde::{Deserialize, Serialize};

use crate::data::{fit_scaler, split_folds, Dataset, FeatureKind, FeatureSchema, Instance, Scaler, Schema};
use crate::error::{Result, UfceError};
use crate::scalar::Scalar;

/// Any binary classifier over raw-unit instances.
pub trait BlackBox<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Probability of class 1.
    fn predict_proba(&self, x: &[T]) -> Result<T>;

    fn predict(&self, x: &[T]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= T::lit(0.5)))
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Training stops once the loss decreases by less than this between epochs.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { learning_rate: 1.0, epochs: 5000, l2: 1e-4, tolerance: 1e-7 }
    }
}

/// Logistic regression over min-max scaled inputs. Callers pass raw units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub scaler: Scaler<T>,
}

impl<T: Scalar> LogisticModel<T> {
    pub fn decision(&self, x: &[T]) -> Result<T> {
        if x.len() != self.weights.len() {
            return Err(UfceError::Dimension { expected: self.weights.len(), got: x.len() });
        }
        Ok(self
            .weights
            .iter()
            .enumerate()
            .map(|(j, &w)| w * self.scaler.scale_value(j, x[j]))
            .sum::<T>()
            + self.bias)
    }
}

impl<T: Scalar> BlackBox<T> for LogisticModel<T> {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, x: &[T]) -> Result<T> {
        Ok(sigmoid(self.decision(x)?))
    }
}

/// Fitted model plus the per-epoch training loss.
#[derive(Clone, Debug)]
pub struct TrainedLogistic<T> {
    pub model: LogisticModel<T>,
    pub losses: Vec<f64>,
}

pub fn train_logistic<T: Scalar>(train: &Dataset<T>, config: &LogisticConfig) -> Result<LogisticModel<T>> {
    train_logistic_traced(train, config).map(|t| t.model)
}

/// Full-batch gradient descent on the L2-regularised log loss, from zero weights.
pub fn train_logistic_traced<T: Scalar>(train: &Dataset<T>, config: &LogisticConfig) -> Result<TrainedLogistic<T>> {
    if train.is_empty() {
        return Err(UfceError::EmptyInput("empty training set".into()));
    }
    if let Some(&first) = train.labels.first() {
        if train.labels.iter().all(|&l| l == first) {
            return Err(UfceError::DegenerateLabels { label: first });
        }
    }
    let scaler = fit_scaler(train)?;
    let d = train.dim();
    let n = train.len() as f64;
    // Work in f64 regardless of T; the scaled design matrix is small.
    let xs: Vec<Vec<f64>> = train
        .rows
        .iter()
        .map(|r| scaler.apply(r).iter().map(|v| v.to_f64_lossy()).collect())
        .collect();
    let ys: Vec<f64> = train.labels.iter().map(|&l| f64::from(l)).collect();

    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mut losses = Vec::new();
    let mut grad = vec![0.0f64; d];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let p = sigmoid(z);
            loss += log_loss(z, y);
            let r = p - y;
            for (g, &xj) in grad.iter_mut().zip(x) {
                *g += r * xj;
            }
            grad_b += r;
        }
        loss = loss / n + 0.5 * config.l2 * w.iter().map(|v| v * v).sum::<f64>();
        if let Some(&prev) = losses.last() {
            if prev - loss < config.tolerance {
                losses.push(loss);
                break;
            }
        }
        losses.push(loss);
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj -= config.learning_rate * (g / n + config.l2 * *wj);
        }
        b -= config.learning_rate * grad_b / n;
    }
    Ok(TrainedLogistic {
        model: LogisticModel { weights: w.into_iter().map(T::lit).collect(), bias: T::lit(b), scaler },
        losses,
    })
}

/// Numerically stable −[y ln σ(z) + (1 − y) ln(1 − σ(z))].
fn log_loss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - y * z
}

pub fn accuracy<T: Scalar, B: BlackBox<T> + ?Sized>(model: &B, data: &Dataset<T>) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (x, &y) in data.rows.iter().zip(&data.labels) {
        if model.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub mean_accuracy: f64,
    /// Sample standard deviation across folds.
    pub std_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

pub fn cross_validate<T: Scalar>(dataset: &Dataset<T>, k: usize, seed: u64, config: &LogisticConfig) -> Result<CvSummary> {
    let folds = split_folds(dataset, k, seed)?;
    let mut accs = Vec::with_capacity(k);
    for fold in &folds {
        let model = train_logistic(&fold.train, config)?;
        accs.push(accuracy(&model, &fold.test)?);
    }
    let (mean, std) = mean_std(&accs);
    Ok(CvSummary { mean_accuracy: mean, std_accuracy: std, fold_accuracies: accs })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PredictorKind<T> {
    /// Least squares: coefficients over the remaining features plus an intercept.
    Regressor { coefficients: Vec<T>, intercept: T },
    /// Logistic model predicting whether the target holds its second code.
    Classifier { model: LogisticModel<T> },
}

/// Predicts one feature from the other d − 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePredictor<T> {
    pub target: usize,
    pub kind: PredictorKind<T>,
    pub observed_min: T,
    pub observed_max: T,
    pub categories: Option<[T; 2]>,
}

const RIDGE_FALLBACK: f64 = 1e-6;

pub fn train_feature_predictor<T: Scalar>(train: &Dataset<T>, target: usize) -> Result<FeaturePredictor<T>> {
    let d = train.dim();
    if target >= d {
        return Err(UfceError::Argument(format!("target feature {target} out of range (d = {d})")));
    }
    if train.is_empty() {
        return Err(UfceError::EmptyInput("empty training set".into()));
    }
    let spec = &train.schema.features[target];
    let kind = match spec.kind {
        FeatureKind::Numeric => {
            let xs: Vec<Vec<f64>> = train
                .rows
                .iter()
                .map(|r| r.without(target).iter().map(|v| v.to_f64_lossy()).collect())
                .collect();
            let ys: Vec<f64> = train.rows.iter().map(|r| r[target].to_f64_lossy()).collect();
            let (coef, intercept) = least_squares(&xs, &ys);
            PredictorKind::Regressor { coefficients: coef.into_iter().map(T::lit).collect(), intercept: T::lit(intercept) }
        }
        FeatureKind::Categorical => {
            let [_, second] = spec.categories.expect("categorical feature has codes");
            let schema = Schema {
                features: train
                    .schema
                    .features
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != target)
                    .map(|(_, f)| f.clone())
                    .collect::<Vec<FeatureSchema<T>>>(),
                label: spec.name.clone(),
            };
            let rows = train.rows.iter().map(|r| Instance(r.without(target))).collect();
            let labels: Vec<u8> = train.rows.iter().map(|r| u8::from(r[target] == second)).collect();
            let derived = Dataset { schema, rows, labels };
            let model = match train_logistic(&derived, &LogisticConfig::default()) {
                Ok(m) => m,
                // A code never observed in training: predict the observed one.
                Err(UfceError::DegenerateLabels { label }) => LogisticModel {
                    weights: vec![T::zero(); d - 1],
                    bias: if label == 1 { T::lit(30.0) } else { T::lit(-30.0) },
                    scaler: fit_scaler(&derived)?,
                },
                Err(e) => return Err(e),
            };
            PredictorKind::Classifier { model }
        }
    };
    Ok(FeaturePredictor {
        target,
        kind,
        observed_min: spec.observed_min,
        observed_max: spec.observed_max,
        categories: spec.categories,
    })
}

impl<T: Scalar> FeaturePredictor<T> {
    /// Predicts the target from the other features (target column removed).
    /// Numeric output is clamped to the observed range; categorical output is a code.
    pub fn predict_feature(&self, partial: &[T]) -> Result<T> {
        match &self.kind {
            PredictorKind::Regressor { coefficients, intercept } => {
                if partial.len() != coefficients.len() {
                    return Err(UfceError::Dimension { expected: coefficients.len(), got: partial.len() });
                }
                let raw = coefficients.iter().zip(partial).map(|(&c, &v)| c * v).sum::<T>() + *intercept;
                Ok(raw.max(self.observed_min).min(self.observed_max))
            }
            PredictorKind::Classifier { model } => {
                let [first, second] = self.categories.expect("categorical predictor has codes");
                Ok(if model.predict(partial)? == 1 { second } else { first })
            }
        }
    }

    /// Convenience: predicts from a full instance, ignoring its target slot.
    pub fn predict_from(&self, x: &Instance<T>) -> Result<T> {
        self.predict_feature(&x.without(self.target))
    }
}

/// Ordinary least squares on standardised columns via the normal equations.
/// Falls back to a small ridge term when the Gram matrix is singular.
pub fn least_squares(xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, f64) {
    let n = xs.len();
    let p = xs.first().map_or(0, Vec::len);
    if n == 0 {
        return (vec![0.0; p], 0.0);
    }
    let nf = n as f64;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let mut means = vec![0.0; p];
    for x in xs {
        for (m, v) in means.iter_mut().zip(x) {
            *m += v / nf;
        }
    }
    let mut scales = vec![0.0; p];
    for x in xs {
        for j in 0..p {
            scales[j] += (x[j] - means[j]).powi(2) / nf;
        }
    }
    let scales: Vec<f64> = scales.into_iter().map(|s| if s > 0.0 { s.sqrt() } else { 1.0 }).collect();

    let mut gram = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    let mut z = vec![0.0; p];
    for (x, &y) in xs.iter().zip(ys) {
        for j in 0..p {
            z[j] = (x[j] - means[j]) / scales[j];
        }
        for a in 0..p {
            rhs[a] += z[a] * (y - y_mean);
            for b in a..p {
                gram[a][b] += z[a] * z[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }
    let beta_std = solve(gram.clone(), rhs.clone()).unwrap_or_else(|| {
        let mut ridge = gram;
        for (a, row) in ridge.iter_mut().enumerate() {
            row[a] += RIDGE_FALLBACK * nf;
        }
        solve(ridge, rhs).unwrap_or_else(|| vec![0.0; p])
    });
    let coef: Vec<f64> = beta_std.iter().zip(&scales).map(|(b, s)| b / s).collect();
    let intercept = y_mean - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    (coef, intercept)
}

/// Gaussian elimination with partial pivoting; `None` on a (near-)singular system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let p = b.len();
    let scale = a.iter().enumerate().map(|(i, r)| r[i].abs()).fold(0.0f64, f64::max).max(1.0);
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..p {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; p];
    for row in (0..p).rev() {
        let s: f64 = (row + 1..p).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{read_dataset, SchemaConfig};

    fn dataset(csv: &str, categorical: &[&str]) -> Dataset<f64> {
        let cfg = SchemaConfig {
            label: "y".into(),
            categorical: categorical.iter().map(|s| s.to_string()).collect(),
            protected: vec![],
            positive_class: "1".into(),
        };
        read_dataset(csv.as_bytes(), &cfg).unwrap()
    }

    fn identity_scaler(d: usize) -> Scaler<f64> {
        Scaler { mins: vec![0.0; d], maxs: vec![1.0; d], numeric: vec![true; d] }
    }

    #[test]
    fn zero_model_predicts_one_at_half() {
        let m = LogisticModel { weights: vec![0.0, 0.0], bias: 0.0, scaler: identity_scaler(2) };
        assert_eq!(m.predict_proba(&[3.0, -4.0]).unwrap(), 0.5);
        assert_eq!(m.predict(&[3.0, -4.0]).unwrap(), 1);
    }

    #[test]
    fn closed_form_probability() {
        let m = LogisticModel { weights: vec![2.0, -1.0], bias: 0.0, scaler: identity_scaler(2) };
        let p = m.predict_proba(&[1.0, 0.0]).unwrap();
        assert!((p - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
        assert!((p - 0.8808).abs() < 1e-4);
        assert!(m.predict_proba(&[1.0]).is_err());
    }

    #[test]
    fn sigmoid_saturates() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!(sigmoid(40.0f32) > 0.999_999);
    }

    #[test]
    fn separable_training_and_determinism() {
        let mut csv = String::from("a,b,y\n");
        for i in -20..=20 {
            if i == 0 {
                continue;
            }
            csv.push_str(&format!("{i},{},{}\n", (i * 7) % 5, u8::from(i > 0)));
        }
        let ds = dataset(&csv, &[]);
        let cfg = LogisticConfig::default();
        let t = train_logistic_traced(&ds, &cfg).unwrap();
        assert_eq!(accuracy(&t.model, &ds).unwrap(), 1.0);
        assert!(t.losses.last().unwrap() <= t.losses.first().unwrap());
        assert!(t.losses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let again = train_logistic(&ds, &cfg).unwrap();
        assert_eq!(t.model.weights, again.weights);

        let cv = cross_validate(&ds, 5, 1, &cfg).unwrap();
        assert_eq!(cv.mean_accuracy, 1.0);
        assert_eq!(cv.std_accuracy, 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let ds = dataset("a,y\n1,1\n2,1\n", &[]);
        assert!(matches!(
            train_logistic(&ds, &LogisticConfig::default()),
            Err(UfceError::DegenerateLabels { label: 1 })
        ));
    }

    #[test]
    fn regressor_recovers_linear_relation() {
        let mut csv = String::from("a,b,c,y\n");
        for i in 0..40 {
            let a = i as f64 * 0.5;
            let c = (i * 13 % 7) as f64;
            csv.push_str(&format!("{a},{},{c},{}\n", 2.0 * a, i % 2));
        }
        let ds = dataset(&csv, &[]);
        let p = train_feature_predictor(&ds, 1).unwrap();
        assert!((p.predict_feature(&[3.0, 1.0]).unwrap() - 6.0).abs() < 1e-6);
        // clamped to observed range [0, 39]
        assert_eq!(p.predict_feature(&[100.0, 1.0]).unwrap(), 39.0);
        assert!(p.predict_feature(&[1.0]).is_err());
    }

    #[test]
    fn singular_design_falls_back_to_ridge() {
        // b duplicates a: the Gram matrix is singular.
        let mut csv = String::from("a,b,t,y\n");
        for i in 0..30 {
            let a = i as f64;
            csv.push_str(&format!("{a},{a},{},{}\n", 3.0 * a + 1.0, i % 2));
        }
        let ds = dataset(&csv, &[]);
        let p = train_feature_predictor(&ds, 2).unwrap();
        let pred = p.predict_feature(&[10.0, 10.0]).unwrap();
        assert!((pred - 31.0).abs() < 1e-3, "{pred}");
    }

    #[test]
    fn categorical_target_classifier() {
        let mut csv = String::from("a,c,y\n");
        for i in -25i32..25 {
            csv.push_str(&format!("{i},{},{}\n", u8::from(i >= 0), i.rem_euclid(2)));
        }
        let ds = dataset(&csv, &["c"]);
        let p = train_feature_predictor(&ds, 1).unwrap();
        let correct = ds.rows.iter().filter(|r| p.predict_from(r).unwrap() == r[1]).count();
        assert!(correct as f64 / ds.len() as f64 >= 0.99);
        assert_eq!(p.predict_feature(&[20.0]).unwrap(), 1.0);
        assert_eq!(p.predict_feature(&[-20.0]).unwrap(), 0.0);
    }

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
