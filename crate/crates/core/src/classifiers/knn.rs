//! k-nearest-neighbour classification over an exact kd-tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{check_training, majority, Feature, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k % 2 == 0 {
            return Err(Error::Config(format!("knn k must be an odd positive integer, got {}", self.k)));
        }
        Ok(())
    }
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Stored training set plus a kd-tree over it. Serialises as points and labels only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "KnnRepr", into = "KnnRepr")]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    points: Vec<Feature>,
    labels: Vec<Label>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Serialize, Deserialize)]
struct KnnRepr {
    k: usize,
    n_classes: usize,
    points: Vec<Feature>,
    labels: Vec<Label>,
}

impl From<KnnRepr> for KnnModel {
    fn from(r: KnnRepr) -> Self {
        KnnModel::build(r.k, r.n_classes, r.points, r.labels)
    }
}

impl From<KnnModel> for KnnRepr {
    fn from(m: KnnModel) -> Self {
        KnnRepr { k: m.k, n_classes: m.n_classes, points: m.points, labels: m.labels }
    }
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dist2(a: &Feature, b: &Feature) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

impl KnnModel {
    pub fn fit(x: &[Feature], y: &[Label], n_classes: usize, params: &KnnParams) -> Result<Self> {
        params.validate()?;
        check_training(x, y, n_classes)?;
        if params.k > x.len() {
            return Err(Error::Precondition(format!(
                "knn k = {} exceeds training size {}",
                params.k,
                x.len()
            )));
        }
        Ok(Self::build(params.k, n_classes, x.to_vec(), y.to_vec()))
    }

    fn build(k: usize, n_classes: usize, points: Vec<Feature>, labels: Vec<Label>) -> Self {
        let mut m = KnnModel {
            k,
            n_classes,
            order: (0..points.len()).collect(),
            points,
            labels,
            nodes: Vec::new(),
        };
        let n = m.points.len();
        if n > 0 {
            m.build_node(0, n);
        }
        m
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let points = &self.points;
        let slice = &self.order[start..end];
        let axis = (0..3)
            .max_by(|&a, &b| {
                let spread = |ax: usize| {
                    let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(points[i][ax]), hi.max(points[i][ax]))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b)).then(b.cmp(&a))
            })
            .unwrap();
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Indices of the `k` nearest training points, ordered by (distance, index).
    pub fn neighbours(&self, q: &Feature) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        if !self.nodes.is_empty() {
            self.search(0, q, &mut heap);
        }
        let mut found: Vec<Candidate> = heap.into_vec();
        found.sort();
        found.into_iter().map(|c| c.index).collect()
    }

    fn search(&self, node: usize, q: &Feature, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate { d2: dist2(q, &self.points[i]), index: i };
                    if heap.len() < self.k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, heap);
                // ties at equal distance can still win on index, so only prune strictly farther planes
                if heap.len() < self.k || diff * diff <= heap.peek().unwrap().d2 {
                    self.search(far, q, heap);
                }
            }
        }
    }

    /// Majority label among the `k` nearest; ties go to the smaller label.
    pub fn classify(&self, q: &Feature) -> Label {
        majority(self.neighbours(q).into_iter().map(|i| self.labels[i]), self.n_classes)
    }
}
