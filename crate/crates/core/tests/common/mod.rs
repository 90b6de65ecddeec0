#![allow(dead_code)]

pub mod equivalence;

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ufce_core::data::{load_dataset, read_dataset, Dataset, SchemaConfig};
use ufce_core::explainer::{ExplainConfig, Ufce};
use ufce_core::model::BlackBox;
use ufce_core::neighborhood::Embedding;
use ufce_core::Result;

pub const DATASETS: [&str; 5] = ["graduate", "bank", "wine", "bupa", "movie"];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn shipped(name: &str) -> Dataset<f64> {
    let dir = data_dir();
    let cfg = SchemaConfig::from_file(dir.join(format!("{name}.schema.json"))).expect("schema");
    load_dataset(dir.join(format!("{name}.csv")), &cfg).expect("dataset")
}

/// Builds a dataset from named columns; the last column is the 0/1 label `y`.
pub fn table(names: &[&str], categorical: &[&str], protected: &[&str], rows: &[Vec<f64>], labels: &[u8]) -> Dataset<f64> {
    let mut text = names.join(",") + ",y\n";
    for (r, l) in rows.iter().zip(labels) {
        let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        text += &format!("{},{l}\n", cells.join(","));
    }
    let cfg = SchemaConfig {
        label: "y".into(),
        categorical: categorical.iter().map(|s| s.to_string()).collect(),
        protected: protected.iter().map(|s| s.to_string()).collect(),
        positive_class: "1".into(),
    };
    read_dataset(text.as_bytes(), &cfg).expect("table")
}

/// Class 1 exactly when `w·x + b >= 0`.
pub struct LinearRule {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BlackBox<f64> for LinearRule {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let s: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        Ok(if s >= 0.0 { 1.0 } else { 0.0 })
    }
}

/// Class 1 when feature `j` is at least `at`.
pub fn threshold_rule(dim: usize, j: usize, at: f64) -> LinearRule {
    let mut weights = vec![0.0; dim];
    weights[j] = 1.0;
    LinearRule { weights, bias: -at }
}

pub fn permissive() -> ExplainConfig {
    ExplainConfig { lof_threshold: 1e12, ..ExplainConfig::default() }
}

pub fn explainer(train: &Dataset<f64>, model: LinearRule, config: ExplainConfig) -> Ufce<f64> {
    Ufce::new(train, Arc::new(model), config).expect("explainer")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random numeric table with `d` columns of uniform values on [0, 10).
pub fn uniform_table(rng: &mut impl Rng, n: usize, d: usize) -> Dataset<f64> {
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    table(&refs, &[], &[], &rows, &labels)
}

/// Textbook LOF, quadratic in the reference size. Reference rows exclude
/// themselves from their own neighbor lists; queries do not.
pub struct BruteLof {
    points: Vec<Vec<f64>>,
    k: usize,
    k_dist: Vec<f64>,
    lrd: Vec<f64>,
    embedding: Embedding<f64>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn knn(points: &[Vec<f64>], q: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> =
        points.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(i, p)| (i, euclid(p, q))).collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(k);
    d
}

impl BruteLof {
    pub fn fit(reference: &Dataset<f64>, embedding: Embedding<f64>, k: usize) -> Self {
        let points: Vec<Vec<f64>> = reference.rows.iter().map(|r| embedding.embed(r)).collect();
        let neigh: Vec<Vec<(usize, f64)>> = (0..points.len()).map(|i| knn(&points, &points[i], k, Some(i))).collect();
        let k_dist: Vec<f64> = neigh.iter().map(|n| n[k - 1].1).collect();
        let lrd = neigh
            .iter()
            .map(|n| {
                let reach: f64 = n.iter().map(|&(o, d)| k_dist[o].max(d)).sum::<f64>() / k as f64;
                1.0 / reach.max(1e-12)
            })
            .collect();
        BruteLof { points, k, k_dist, lrd, embedding }
    }

    pub fn score(&self, z: &[f64]) -> f64 {
        let q = self.embedding.embed(z);
        let n = knn(&self.points, &q, self.k, None);
        let reach: f64 = n.iter().map(|&(o, d)| self.k_dist[o].max(d)).sum::<f64>() / self.k as f64;
        let own = 1.0 / reach.max(1e-12);
        n.iter().map(|&(o, _)| self.lrd[o]).sum::<f64>() / self.k as f64 / own
    }
}

/// δ written out directly: positional categorical mismatch share plus λ times
/// the MAD-weighted numeric distance divided by Σ range/MAD over features with
/// a positive MAD (1 if that sum is zero).
pub fn delta_oracle(z: &[f64], x: &[f64], ds: &Dataset<f64>, lambda: f64) -> f64 {
    let f = &ds.schema.features;
    let cats: Vec<usize> = (0..f.len()).filter(|&j| f[j].is_categorical()).collect();
    let jac = if cats.is_empty() { 0.0 } else { cats.iter().filter(|&&j| z[j] != x[j]).count() as f64 / cats.len() as f64 };
    let mad = |j: usize| if f[j].mad > 0.0 { f[j].mad } else { 1e-9 };
    let nums: Vec<usize> = (0..f.len()).filter(|&j| f[j].is_numeric()).collect();
    let euc: f64 = nums.iter().map(|&j| (z[j] - x[j]).abs() / mad(j)).sum();
    let scale: f64 =
        nums.iter().filter(|&&j| f[j].mad > 0.0).map(|&j| (f[j].observed_max - f[j].observed_min) / f[j].mad).sum();
    jac + lambda * euc / if scale > 0.0 { scale } else { 1.0 }
}
