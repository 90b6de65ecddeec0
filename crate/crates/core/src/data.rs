//! Tabular data: feature schema, instances, datasets, folds and min-max scaling.

use std::fs::File;
use std::io::Read;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, UfceError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Binary categorical feature; codes are unordered labels.
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema<T> {
    pub name: String,
    pub kind: FeatureKind,
    pub observed_min: T,
    pub observed_max: T,
    /// Median absolute deviation, in feature units.
    pub mad: T,
    pub protected: bool,
    /// The two category codes of a categorical feature, ascending.
    pub categories: Option<[T; 2]>,
}

impl<T: Scalar> FeatureSchema<T> {
    pub fn is_numeric(&self) -> bool {
        self.kind == FeatureKind::Numeric
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    /// The other code of a binary categorical feature. Numeric features return `v`.
    pub fn alternate_code(&self, v: T) -> T {
        match self.categories {
            Some([a, b]) if v == a => b,
            Some([a, _]) => a,
            None => v,
        }
    }

    /// Index (0 or 1) of `v` among the category codes.
    pub fn code_index(&self, v: T) -> Option<usize> {
        self.categories.and_then(|c| c.iter().position(|&code| code == v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema<T> {
    pub features: Vec<FeatureSchema<T>>,
    /// Name of the label column in the source file.
    pub label: String,
}

impl<T: Scalar> Schema<T> {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| UfceError::Schema(format!("unknown feature `{name}`")))
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        self.indices_where(|f| f.is_numeric())
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        self.indices_where(|f| f.is_categorical())
    }

    pub fn protected_indices(&self) -> Vec<usize> {
        self.indices_where(|f| f.protected)
    }

    pub fn mads(&self) -> Vec<T> {
        self.features.iter().map(|f| f.mad).collect()
    }

    fn indices_where(&self, pred: impl Fn(&FeatureSchema<T>) -> bool) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| pred(f))
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks dimensionality and that categorical slots hold a schema code.
    pub fn validate(&self, x: &Instance<T>) -> Result<()> {
        if x.len() != self.len() {
            return Err(UfceError::Dimension { expected: self.len(), got: x.len() });
        }
        for (f, &v) in self.features.iter().zip(x.iter()) {
            if !v.is_finite() {
                return Err(UfceError::Schema(format!("feature `{}` is not finite", f.name)));
            }
            if f.is_categorical() && f.code_index(v).is_none() {
                return Err(UfceError::Schema(format!(
                    "feature `{}` holds {v}, which is not one of its category codes",
                    f.name
                )));
            }
        }
        Ok(())
    }

    /// Stable fingerprint of the feature layout (names, kinds, codes), used to
    /// tie persisted models to the dataset they were trained on.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for f in &self.features {
            hasher.update(f.name.as_bytes());
            hasher.update([0u8, f.kind as u8, f.protected as u8]);
            if let Some([a, b]) = f.categories {
                hasher.update(a.to_f64_lossy().to_le_bytes());
                hasher.update(b.to_f64_lossy().to_le_bytes());
            }
        }
        hasher.update(self.label.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// One row of feature values in schema order. Categorical slots hold codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Instance<T>(pub Vec<T>);

impl<T> Deref for Instance<T> {
    type Target = Vec<T>;
    fn deref(&self) -> &Vec<T> {
        &self.0
    }
}

impl<T> DerefMut for Instance<T> {
    fn deref_mut(&mut self) -> &mut Vec<T> {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Instance<T> {
    fn from(v: Vec<T>) -> Self {
        Instance(v)
    }
}

impl<T: Scalar> Instance<T> {
    /// Copy of the instance with column `j` removed.
    pub fn without(&self, j: usize) -> Vec<T> {
        self.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub schema: Schema<T>,
    pub rows: Vec<Instance<T>>,
    /// Ground-truth labels in {0, 1}.
    pub labels: Vec<u8>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(schema: Schema<T>, rows: Vec<Instance<T>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(UfceError::Argument(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(UfceError::Argument(format!("label {bad} is not binary")));
        }
        for row in &rows {
            schema.validate(row)?;
        }
        Ok(Dataset { schema, rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.schema.len()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.labels.len() as f64
    }

    /// Rows at `indices`, in the given order, sharing this dataset's schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Recomputes min, max and MAD of every feature from the rows held here.
    pub fn refresh_statistics(&mut self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(UfceError::EmptyInput("cannot compute statistics of an empty dataset".into()));
        }
        for j in 0..self.dim() {
            let col = self.column(j);
            let f = &mut self.schema.features[j];
            f.observed_min = col.iter().copied().fold(T::infinity(), T::min);
            f.observed_max = col.iter().copied().fold(T::neg_infinity(), T::max);
            f.mad = compute_mad(&col)?;
        }
        Ok(())
    }
}

/// JSON schema descriptor accompanying a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub label: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub protected: Vec<String>,
    /// Label value mapped to class 1; every other value maps to 0.
    #[serde(deserialize_with = "string_or_number")]
    pub positive_class: String,
}

fn string_or_number<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    match v {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        other => Err(serde::de::Error::custom(format!("unsupported positive_class {other}"))),
    }
}

impl SchemaConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| UfceError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn is_positive(&self, cell: &str) -> bool {
        let cell = cell.trim();
        if cell == self.positive_class.trim() {
            return true;
        }
        match (cell.parse::<f64>(), self.positive_class.trim().parse::<f64>()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>, config: &SchemaConfig) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| UfceError::io(path, e))?;
    read_dataset(file, config)
}

/// Reads a header-bearing CSV. Statistics (min, max, MAD) are computed from the rows read.
pub fn read_dataset<T: Scalar, R: Read>(reader: R, config: &SchemaConfig) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(UfceError::EmptyInput("file has no header row".into()));
    }
    let label_col = headers
        .iter()
        .position(|h| *h == config.label)
        .ok_or_else(|| UfceError::Schema(format!("label column `{}` not found", config.label)))?;
    for name in config.categorical.iter().chain(&config.protected) {
        if !headers.contains(name) {
            return Err(UfceError::Schema(format!("column `{name}` not found")));
        }
    }
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_col).collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| UfceError::Parse {
                row: r,
                column: headers[c].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(UfceError::Parse { row: r, column: headers[c].clone(), value: cell.to_owned() });
            }
            values.push(T::lit(v));
        }
        labels.push(u8::from(config.is_positive(record.get(label_col).unwrap_or(""))));
        rows.push(Instance(values));
    }
    if rows.is_empty() {
        return Err(UfceError::EmptyInput("file has no data rows".into()));
    }

    let mut features = Vec::with_capacity(feature_cols.len());
    for (j, &c) in feature_cols.iter().enumerate() {
        let name = headers[c].clone();
        let categorical = config.categorical.contains(&name);
        let categories = if categorical {
            let mut codes: Vec<T> = rows.iter().map(|r| r[j]).collect();
            codes.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            codes.dedup();
            match codes.len() {
                1 => {
                    let v = codes[0];
                    if v == T::zero() || v == T::one() {
                        Some([T::zero(), T::one()])
                    } else {
                        Some([v, v + T::one()])
                    }
                }
                2 => Some([codes[0], codes[1]]),
                count => return Err(UfceError::UnsupportedCardinality { column: name, count }),
            }
        } else {
            None
        };
        features.push(FeatureSchema {
            protected: config.protected.contains(&name),
            name,
            kind: if categorical { FeatureKind::Categorical } else { FeatureKind::Numeric },
            observed_min: T::zero(),
            observed_max: T::zero(),
            mad: T::zero(),
            categories,
        });
    }
    let mut ds = Dataset::new(Schema { features, label: config.label.clone() }, rows, labels)?;
    ds.refresh_statistics()?;
    Ok(ds)
}

/// Median; even-length inputs use the midpoint of the two central values.
pub fn median<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(UfceError::Argument("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of non-finite values"));
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0) })
}

/// Median absolute deviation: median(|v − median(v)|).
pub fn compute_mad<T: Scalar>(values: &[T]) -> Result<T> {
    let m = median(values)?;
    let dev: Vec<T> = values.iter().map(|&v| (v - m).abs()).collect();
    median(&dev)
}

/// Training rows whose ground-truth label equals `t`, in original order.
pub fn desired_space<T: Scalar>(dataset: &Dataset<T>, t: u8) -> Result<Dataset<T>> {
    if t > 1 {
        return Err(UfceError::Argument(format!("label {t} is not binary")));
    }
    let idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == t).collect();
    if idx.is_empty() {
        return Err(UfceError::DesiredSpaceEmpty { label: t });
    }
    Ok(dataset.subset(&idx))
}

#[derive(Clone, Debug)]
pub struct Fold<T> {
    /// Training rows, with schema statistics recomputed from them alone.
    pub train: Dataset<T>,
    /// Held-out rows, carrying the training split's schema.
    pub test: Dataset<T>,
    pub test_indices: Vec<usize>,
}

/// Seeded k-fold partition. The first `n % k` folds hold one extra row.
pub fn split_folds<T: Scalar>(dataset: &Dataset<T>, k: usize, seed: u64) -> Result<Vec<Fold<T>>> {
    if k < 2 {
        return Err(UfceError::Argument(format!("k = {k}; at least 2 folds are required")));
    }
    let n = dataset.len();
    if k > n {
        return Err(UfceError::Argument(format!("k = {k} exceeds the {n} available rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test_idx = order[start..start + size].to_vec();
        test_idx.sort_unstable();
        let mut train_idx: Vec<usize> = order[..start].iter().chain(&order[start + size..]).copied().collect();
        train_idx.sort_unstable();
        start += size;

        let mut train = dataset.subset(&train_idx);
        train.refresh_statistics()?;
        let mut test = dataset.subset(&test_idx);
        test.schema = train.schema.clone();
        folds.push(Fold { train, test, test_indices: test_idx });
    }
    Ok(folds)
}

/// Per-feature min-max scaler. Categorical slots pass through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler<T> {
    pub mins: Vec<T>,
    pub maxs: Vec<T>,
    pub numeric: Vec<bool>,
}

pub fn fit_scaler<T: Scalar>(dataset: &Dataset<T>) -> Result<Scaler<T>> {
    if dataset.is_empty() {
        return Err(UfceError::EmptyInput("cannot fit a scaler on an empty dataset".into()));
    }
    let d = dataset.dim();
    let mut mins = vec![T::infinity(); d];
    let mut maxs = vec![T::neg_infinity(); d];
    for row in &dataset.rows {
        for j in 0..d {
            mins[j] = mins[j].min(row[j]);
            maxs[j] = maxs[j].max(row[j]);
        }
    }
    let numeric = dataset.schema.features.iter().map(FeatureSchema::is_numeric).collect();
    Ok(Scaler { mins, maxs, numeric })
}

impl<T: Scalar> Scaler<T> {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn scale_value(&self, j: usize, v: T) -> T {
        if !self.numeric[j] {
            return v;
        }
        let width = self.maxs[j] - self.mins[j];
        if width > T::zero() {
            (v - self.mins[j]) / width
        } else {
            T::zero()
        }
    }

    pub fn unscale_value(&self, j: usize, v: T) -> T {
        if !self.numeric[j] {
            return v;
        }
        self.mins[j] + v * (self.maxs[j] - self.mins[j])
    }

    pub fn apply(&self, x: &[T]) -> Instance<T> {
        Instance(x.iter().enumerate().map(|(j, &v)| self.scale_value(j, v)).collect())
    }

    pub fn invert(&self, x: &[T]) -> Instance<T> {
        Instance(x.iter().enumerate().map(|(j, &v)| self.unscale_value(j, v)).collect())
    }
}
