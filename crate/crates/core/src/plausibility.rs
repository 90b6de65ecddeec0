//! Local Outlier Factor against a reference population.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Result, UfceError};
use crate::kdtree::{KdTree, Metric};
use crate::neighborhood::Embedding;
use crate::scalar::Scalar;

pub const DEFAULT_LOF_NEIGHBORS: usize = 20;
pub const DEFAULT_LOF_THRESHOLD: f64 = 1.5;
const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct LofModel<T> {
    pub embedding: Embedding<T>,
    pub k: usize,
    pub threshold: T,
    tree: KdTree<T>,
    k_distance: Vec<T>,
    lrd: Vec<T>,
}

/// Fits LOF on `reference`; k-distances and local reachability densities of
/// every reference row are computed once here.
pub fn fit_lof<T: Scalar>(reference: &Dataset<T>, embedding: Embedding<T>, k: usize, threshold: T) -> Result<LofModel<T>> {
    if k == 0 {
        return Err(UfceError::Argument("LOF needs at least one neighbor".into()));
    }
    if reference.len() <= k {
        return Err(UfceError::Argument(format!(
            "LOF with k = {k} needs more than {k} reference rows, got {}",
            reference.len()
        )));
    }
    let points: Vec<Vec<T>> = reference.rows.iter().map(|r| embedding.embed(r)).collect();
    let tree = KdTree::build(&points, reference.dim(), Metric::Euclidean);
    let neighbors: Vec<_> = (0..points.len()).into_par_iter().map(|i| tree.nearest(&points[i], k, Some(i))).collect();
    let k_distance: Vec<T> = neighbors.iter().map(|hits| hits[k - 1].distance).collect();
    let lrd = neighbors
        .iter()
        .map(|hits| {
            let reach = hits.iter().map(|h| k_distance[h.index].max(h.distance)).sum::<T>() / T::from_usize_lossy(k);
            T::one() / reach.max(T::lit(DISTANCE_FLOOR))
        })
        .collect();
    Ok(LofModel { embedding, k, threshold, tree, k_distance, lrd })
}

impl<T: Scalar> LofModel<T> {
    /// LOF of a raw instance: mean ratio of its neighbors' densities to its own.
    pub fn score(&self, z: &[T]) -> T {
        let q = self.embedding.embed(z);
        let hits = self.tree.nearest(&q, self.k, None);
        let kf = T::from_usize_lossy(hits.len());
        let reach = hits.iter().map(|h| self.k_distance[h.index].max(h.distance)).sum::<T>() / kf;
        let own = T::one() / reach.max(T::lit(DISTANCE_FLOOR));
        hits.iter().map(|h| self.lrd[h.index]).sum::<T>() / kf / own
    }

    pub fn is_plausible(&self, z: &[T]) -> bool {
        self.score(z) <= self.threshold
    }

    pub fn len(&self) -> usize {
        self.lrd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lrd.is_empty()
    }

    pub fn local_reachability_densities(&self) -> &[T] {
        &self.lrd
    }
}
