//! Datasets on disk and the artifacts trained from them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use ufce_core::data::{load_dataset, Scaler, SchemaConfig};
use ufce_core::explainer::{ExplainConfig, Ufce};
use ufce_core::model::{cross_validate, train_logistic, CvSummary, LogisticConfig, LogisticModel};
use ufce_core::{Dataset, UfceError};

use crate::error::ApiError;

pub const DATA_DIR_ENV: &str = "UFCE_DATA_DIR";
pub const CV_SEED: u64 = 0;

/// Persisted classifier, tied to the schema it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_hash: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler: Scaler<f64>,
}

impl ModelFile {
    pub fn from_model(model: &LogisticModel<f64>, dataset: &Dataset) -> Self {
        ModelFile {
            schema_hash: dataset.schema.fingerprint(),
            weights: model.weights.clone(),
            bias: model.bias,
            scaler: model.scaler.clone(),
        }
    }

    /// The model, if it was trained on data with the same schema as `dataset`.
    pub fn into_model(self, dataset: &Dataset) -> Result<LogisticModel<f64>, UfceError> {
        let expected = dataset.schema.fingerprint();
        if self.schema_hash != expected {
            return Err(UfceError::Schema(format!(
                "model was trained on schema {}, dataset has schema {expected}",
                self.schema_hash
            )));
        }
        if self.weights.len() != dataset.dim() {
            return Err(UfceError::Dimension { expected: dataset.dim(), got: self.weights.len() });
        }
        Ok(LogisticModel { weights: self.weights, bias: self.bias, scaler: self.scaler })
    }
}

/// Everything needed to answer requests about one dataset.
pub struct Artifacts {
    pub id: String,
    pub dataset: Dataset,
    pub model: Arc<LogisticModel<f64>>,
    pub ufce: Ufce<f64>,
    pub cv: Option<CvSummary>,
}

impl Artifacts {
    /// Trains a model on the whole dataset and builds the explainer around it.
    pub fn train(id: &str, dataset: Dataset, with_cv: bool) -> Result<Self, UfceError> {
        let config = LogisticConfig::default();
        let model = train_logistic(&dataset, &config)?;
        let cv = if with_cv { Some(cross_validate(&dataset, 5, CV_SEED, &config)?) } else { None };
        Self::with_model(id, dataset, model, cv)
    }

    pub fn with_model(id: &str, dataset: Dataset, model: LogisticModel<f64>, cv: Option<CvSummary>) -> Result<Self, UfceError> {
        let model = Arc::new(model);
        let ufce = Ufce::new(&dataset, model.clone(), ExplainConfig::default())?;
        Ok(Artifacts { id: id.to_string(), dataset, model, ufce, cv })
    }
}

/// Path pair for a dataset id: `<dir>/<id>.csv` and `<dir>/<id>.schema.json`.
pub fn dataset_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}.csv")), dir.join(format!("{id}.schema.json")))
}

/// Loads a CSV with its schema descriptor; the descriptor defaults to the
/// sibling `<stem>.schema.json`.
pub fn load_with_schema(csv: &Path, schema: Option<&Path>) -> Result<Dataset, UfceError> {
    let schema_path = match schema {
        Some(p) => p.to_path_buf(),
        None => csv.with_extension("schema.json"),
    };
    let config = SchemaConfig::from_file(&schema_path)?;
    load_dataset(csv, &config)
}

type Slot = Arc<OnceLock<Result<Arc<Artifacts>, String>>>;

/// Datasets available under a directory, with artifacts built on first use.
pub struct Registry {
    dir: PathBuf,
    slots: Mutex<BTreeMap<String, Slot>>,
}

impl Registry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Registry { dir: dir.into(), slots: Mutex::new(BTreeMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Ids of every `<id>.csv` with a matching `<id>.schema.json`, sorted.
    pub fn list(&self) -> Vec<String> {
        let Ok(entries) = std::fs::read_dir(&self.dir) else { return Vec::new() };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".csv")).map(str::to_string))
            .filter(|id| dataset_paths(&self.dir, id).1.is_file())
            .collect();
        ids.sort();
        ids
    }

    pub fn contains(&self, id: &str) -> bool {
        let (csv, schema) = dataset_paths(&self.dir, id);
        !id.contains(['/', '\\']) && csv.is_file() && schema.is_file()
    }

    /// Artifacts for `id`, building them once. Blocks while building.
    pub fn get(&self, id: &str) -> Result<Arc<Artifacts>, ApiError> {
        if !self.contains(id) {
            return Err(ApiError::NotFound(format!("unknown dataset `{id}`")));
        }
        let slot = {
            let mut slots = self.slots.lock().expect("registry lock");
            slots.entry(id.to_string()).or_default().clone()
        };
        slot.get_or_init(|| {
            let (csv, schema) = dataset_paths(&self.dir, id);
            load_with_schema(&csv, Some(&schema))
                .and_then(|ds| Artifacts::train(id, ds, true))
                .map(Arc::new)
                .map_err(|e| e.to_string())
        })
        .clone()
        .map_err(ApiError::Internal)
    }

    /// Raw dataset for `id`, without training anything.
    pub fn dataset(&self, id: &str) -> Result<Dataset, ApiError> {
        if !self.contains(id) {
            return Err(ApiError::NotFound(format!("unknown dataset `{id}`")));
        }
        let (csv, schema) = dataset_paths(&self.dir, id);
        load_with_schema(&csv, Some(&schema)).map_err(|e| ApiError::Internal(e.to_string()))
    }
}
