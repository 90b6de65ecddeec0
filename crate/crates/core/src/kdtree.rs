//! Static k-d tree over points of a fixed dimension with radius and k-nearest queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scalar::Scalar;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// Max-norm (L∞).
    Chebyshev,
}

impl Metric {
    pub fn distance<T: Scalar>(self, a: &[T], b: &[T]) -> T {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt(),
            Metric::Chebyshev => a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs())),
        }
    }
}

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: T, left: usize, right: usize },
}

/// A neighbor returned by a query: the point's insertion index and its distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit<T> {
    pub index: usize,
    pub distance: T,
}

fn hit_order<T: Scalar>(a: &Hit<T>, b: &Hit<T>) -> Ordering {
    a.distance
        .partial_cmp(&b.distance)
        .unwrap_or(Ordering::Equal)
        .then(a.index.cmp(&b.index))
}

struct HeapEntry<T>(Hit<T>);

impl<T: Scalar> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        hit_order(&self.0, &other.0) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for HeapEntry<T> {}
impl<T: Scalar> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        hit_order(&self.0, &other.0)
    }
}

#[derive(Clone, Debug)]
pub struct KdTree<T> {
    dim: usize,
    points: Vec<T>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
    metric: Metric,
}

impl<T: Scalar> KdTree<T> {
    /// Builds a tree over `points`, each of length `dim`. Splits at the median of
    /// the widest coordinate.
    pub fn build(points: &[Vec<T>], dim: usize, metric: Metric) -> Self {
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            assert_eq!(p.len(), dim, "point dimensionality");
            flat.extend_from_slice(p);
        }
        let mut tree = KdTree { dim, points: flat, order: (0..points.len()).collect(), nodes: Vec::new(), metric };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Depth of the deepest leaf (a single leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], n: usize) -> usize {
            match nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(&self.nodes, 0)
        }
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        if dim.1 <= T::zero() {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = dim.0;
        let mid = start + (end - start) / 2;
        let (points, d) = (&self.points, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * d + dim].partial_cmp(&points[b * d + dim]).unwrap_or(Ordering::Equal)
        });
        let value = self.points[self.order[mid] * self.dim + dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> (usize, T) {
        let mut best = (0, T::neg_infinity());
        for k in 0..self.dim {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for &i in &self.order[start..end] {
                let v = self.points[i * self.dim + k];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (k, hi - lo);
            }
        }
        best
    }

    /// All points within `radius` of `query` (inclusive), ascending by distance then index.
    pub fn within(&self, query: &[T], radius: T) -> Vec<Hit<T>> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.within_node(0, query, radius, &mut out);
        }
        out.sort_by(hit_order);
        out
    }

    fn within_node(&self, n: usize, query: &[T], radius: T, out: &mut Vec<Hit<T>>) {
        match self.nodes[n] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let distance = self.metric.distance(query, self.point(i));
                    if distance <= radius {
                        out.push(Hit { index: i, distance });
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[dim] - value;
                if diff <= radius {
                    self.within_node(left, query, radius, out);
                }
                if -diff <= radius {
                    self.within_node(right, query, radius, out);
                }
            }
        }
    }

    /// The `k` nearest points, ascending by distance then index. `skip` excludes one
    /// point index (used for leave-one-out queries on the tree's own points).
    pub fn nearest(&self, query: &[T], k: usize, skip: Option<usize>) -> Vec<Hit<T>> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.nearest_node(0, query, k, skip, &mut heap);
        let mut hits: Vec<Hit<T>> = heap.into_iter().map(|e| e.0).collect();
        hits.sort_by(hit_order);
        hits
    }

    fn nearest_node(
        &self,
        n: usize,
        query: &[T],
        k: usize,
        skip: Option<usize>,
        heap: &mut BinaryHeap<HeapEntry<T>>,
    ) {
        match self.nodes[n] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == skip {
                        continue;
                    }
                    let hit = Hit { index: i, distance: self.metric.distance(query, self.point(i)) };
                    if heap.len() < k {
                        heap.push(HeapEntry(hit));
                    } else if hit_order(&hit, &heap.peek().expect("non-empty heap").0) == Ordering::Less {
                        heap.pop();
                        heap.push(HeapEntry(hit));
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[dim] - value;
                let (near, far) = if diff <= T::zero() { (left, right) } else { (right, left) };
                self.nearest_node(near, query, k, skip, heap);
                let bound = heap.peek().map(|e| e.0.distance);
                if heap.len() < k || bound.is_some_and(|b| diff.abs() <= b) {
                    self.nearest_node(far, query, k, skip, heap);
                }
            }
        }
    }

    /// Number of points strictly closer than `radius`.
    pub fn count_strictly_within(&self, query: &[T], radius: T) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut count = 0;
        self.count_node(0, query, radius, &mut count);
        count
    }

    fn count_node(&self, n: usize, query: &[T], radius: T, count: &mut usize) {
        match self.nodes[n] {
            Node::Leaf { start, end } => {
                *count += self.order[start..end]
                    .iter()
                    .filter(|&&i| self.metric.distance(query, self.point(i)) < radius)
                    .count();
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[dim] - value;
                if diff < radius {
                    self.count_node(left, query, radius, count);
                }
                if -diff < radius {
                    self.count_node(right, query, radius, count);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn knn_matches_scan() {
        for metric in [Metric::Euclidean, Metric::Chebyshev] {
            let pts = random_points(300, 3, 11);
            let tree = KdTree::build(&pts, 3, metric);
            for (qi, q) in pts.iter().enumerate().take(40) {
                let got = tree.nearest(q, 7, Some(qi));
                let mut all: Vec<Hit<f64>> = pts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != qi)
                    .map(|(i, p)| Hit { index: i, distance: metric.distance(q, p) })
                    .collect();
                all.sort_by(hit_order);
                assert_eq!(got, all[..7].to_vec());
            }
        }
    }

    #[test]
    fn strict_count_matches_scan() {
        let pts = random_points(200, 2, 5);
        let tree = KdTree::build(&pts, 2, Metric::Chebyshev);
        let q = [0.4, 0.6];
        let expected = pts.iter().filter(|p| Metric::Chebyshev.distance(&q, p) < 0.1).count();
        assert_eq!(tree.count_strictly_within(&q, 0.1), expected);
    }

    #[test]
    fn duplicates_and_depth() {
        let pts = vec![vec![1.0f64, 1.0]; 50];
        let tree = KdTree::build(&pts, 2, Metric::Euclidean);
        assert_eq!(tree.within(&[1.0, 1.0], 0.0).len(), 50);
        assert_eq!(tree.depth(), 0);

        let pts = random_points(1000, 4, 9);
        let tree = KdTree::build(&pts, 4, Metric::Euclidean);
        let bound = (1000f64).log2().ceil() as usize;
        assert!(tree.depth() <= bound, "depth {} > {bound}", tree.depth());
    }
}
