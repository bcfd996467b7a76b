//! Random forest of Gini CART trees grown level by level over a shared presort.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training, majority, Feature, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { tree_count: 100, max_depth: 12, min_leaf: 5, features_per_split: 2 }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::Config("forest tree_count must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("forest min_leaf must be positive".into()));
        }
        if !(1..=3).contains(&self.features_per_split) {
            return Err(Error::Config(format!(
                "forest features_per_split must be 1, 2 or 3, got {}",
                self.features_per_split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "kebab-case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// `counts` are bootstrap-weighted class counts of the training samples reaching the leaf.
    Leaf { label: Label, counts: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn classify(&self, x: &Feature) -> Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { label, .. } => return *label,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

const DEAD: u32 = u32::MAX;

struct Work {
    node: usize,
    counts: Vec<u32>,
    total: u32,
}

#[derive(Clone)]
struct Scan {
    left: Vec<u32>,
    left_total: u32,
    last: f64,
    best_score: f64,
    best: Option<(usize, f64)>,
}

/// Σ c² / n over both sides; larger means purer children.
fn purity(left: &[u32], left_total: u32, counts: &[u32], total: u32) -> f64 {
    let right_total = total - left_total;
    let mut l = 0.0;
    let mut r = 0.0;
    for (c, lc) in counts.iter().zip(left) {
        l += (*lc as f64).powi(2);
        r += ((c - lc) as f64).powi(2);
    }
    l / left_total as f64 + r / right_total as f64
}

/// One entry of a per-feature sorted list.
#[derive(Clone, Copy)]
struct Entry {
    index: u32,
    label: u32,
    value: f64,
}

/// Per-feature sample order, shared by every tree of a forest.
struct Presorted([Vec<Entry>; 3]);

impl Presorted {
    fn new(x: &[Feature], y: &[Label]) -> Self {
        Presorted(std::array::from_fn(|f| {
            let mut idx: Vec<u32> = (0..x.len() as u32).collect();
            idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
            idx.into_iter()
                .map(|i| Entry { index: i, label: y[i as usize] as u32, value: x[i as usize][f] })
                .collect()
        }))
    }
}

fn grow_tree<R: Rng>(
    x: &[Feature],
    y: &[Label],
    n_classes: usize,
    sorted: &Presorted,
    weights: &[u32],
    params: &ForestParams,
    rng: &mut R,
) -> Tree {
    let mut nodes = vec![TreeNode::Leaf { label: 0, counts: vec![] }];
    // (node slot on the current level, bootstrap weight) per sample
    let mut state: Vec<(u32, u32)> = weights.iter().map(|&w| (if w > 0 { 0 } else { DEAD }, w)).collect();
    // sorted lists restricted to samples still in an open node
    let mut lists: [Vec<Entry>; 3] =
        std::array::from_fn(|f| sorted.0[f].iter().filter(|e| weights[e.index as usize] > 0).copied().collect());
    let mut root_counts = vec![0u32; n_classes];
    for (i, &w) in weights.iter().enumerate() {
        root_counts[y[i]] += w;
    }
    let root_total = root_counts.iter().sum();
    let mut level = vec![Work { node: 0, counts: root_counts, total: root_total }];
    let mut depth = 0;

    while !level.is_empty() {
        let mut chosen: Vec<[bool; 3]> = Vec::with_capacity(level.len());
        for w in &level {
            let pure = w.counts.iter().filter(|&&c| c > 0).count() <= 1;
            let mut mask = [false; 3];
            if depth < params.max_depth && !pure && w.total >= 2 * params.min_leaf as u32 {
                for f in index::sample(rng, 3, params.features_per_split) {
                    mask[f] = true;
                }
            }
            chosen.push(mask);
        }

        let fresh = Scan { left: vec![0; n_classes], left_total: 0, last: f64::NAN, best_score: f64::NEG_INFINITY, best: None };
        let mut scans: Vec<Scan> = vec![fresh.clone(); level.len()];
        for f in 0..3 {
            if !chosen.iter().any(|m| m[f]) {
                continue;
            }
            for s in scans.iter_mut() {
                s.left.iter_mut().for_each(|c| *c = 0);
                s.left_total = 0;
                s.last = f64::NAN;
            }
            for &Entry { index: i, label, value: v } in &lists[f] {
                let (slot, weight) = state[i as usize];
                if slot == DEAD || !chosen[slot as usize][f] {
                    continue;
                }
                let slot = slot as usize;
                let w = &level[slot];
                let s = &mut scans[slot];
                if s.left_total > 0 && v > s.last {
                    let right_total = w.total - s.left_total;
                    if s.left_total >= params.min_leaf as u32 && right_total >= params.min_leaf as u32 {
                        let score = purity(&s.left, s.left_total, &w.counts, w.total);
                        if score > s.best_score {
                            let mid = 0.5 * (s.last + v);
                            let threshold = if mid < v { mid } else { s.last };
                            s.best_score = score;
                            s.best = Some((f, threshold));
                        }
                    }
                }
                s.left[label as usize] += weight;
                s.left_total += weight;
                s.last = v;
            }
        }

        // decide splits and lay out the next level
        let mut next: Vec<Work> = Vec::new();
        let mut child_slots: Vec<Option<(usize, f64, u32, u32)>> = Vec::with_capacity(level.len());
        for (w, s) in level.iter().zip(&scans) {
            let parent: f64 = w.counts.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() / w.total as f64;
            match s.best {
                Some((f, t)) if s.best_score > parent + 1e-12 * w.total as f64 => {
                    let left_node = nodes.len();
                    nodes.push(TreeNode::Leaf { label: 0, counts: vec![] });
                    nodes.push(TreeNode::Leaf { label: 0, counts: vec![] });
                    nodes[w.node] = TreeNode::Split { feature: f, threshold: t, left: left_node, right: left_node + 1 };
                    let l = next.len() as u32;
                    next.push(Work { node: left_node, counts: vec![0; n_classes], total: 0 });
                    next.push(Work { node: left_node + 1, counts: vec![0; n_classes], total: 0 });
                    child_slots.push(Some((f, t, l, l + 1)));
                }
                _ => {
                    let label = majority_counts(&w.counts);
                    nodes[w.node] = TreeNode::Leaf { label, counts: w.counts.clone() };
                    child_slots.push(None);
                }
            }
        }
        for (i, (slot, weight)) in state.iter_mut().enumerate() {
            if *slot == DEAD {
                continue;
            }
            match child_slots[*slot as usize] {
                Some((f, t, l, r)) => {
                    let c = if x[i][f] <= t { l } else { r };
                    let w = &mut next[c as usize];
                    w.counts[y[i]] += *weight;
                    w.total += *weight;
                    *slot = c;
                }
                None => *slot = DEAD,
            }
        }
        for list in lists.iter_mut() {
            list.retain(|e| state[e.index as usize].0 != DEAD);
        }
        level = next;
        depth += 1;
    }
    Tree { nodes }
}

fn majority_counts(counts: &[u32]) -> Label {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

impl ForestModel {
    /// Each tree gets its own random stream derived from `seed` and the tree index.
    pub fn fit(x: &[Feature], y: &[Label], n_classes: usize, params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        check_training(x, y, n_classes)?;
        if x.len() >= u32::MAX as usize / 2 {
            return Err(Error::Precondition("training set too large for the forest".into()));
        }
        let mut present = vec![false; n_classes];
        y.iter().for_each(|&l| present[l] = true);
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Precondition("forest training needs at least two classes".into()));
        }
        let sorted = Presorted::new(x, y);
        let n = x.len();
        let trees = (0..params.tree_count)
            .map(|t| {
                let mut rng = crate::rng::stream(seed, crate::rng::Purpose::Model, t as u64);
                let mut weights = vec![0u32; n];
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1;
                }
                grow_tree(x, y, n_classes, &sorted, &weights, params, &mut rng)
            })
            .collect();
        Ok(ForestModel { params: *params, n_classes, trees })
    }

    pub fn votes(&self, x: &Feature) -> Vec<usize> {
        let mut v = vec![0; self.n_classes];
        for t in &self.trees {
            v[t.classify(x)] += 1;
        }
        v
    }

    /// Majority vote over trees; ties go to the smaller label.
    pub fn classify(&self, x: &Feature) -> Label {
        majority(self.trees.iter().map(|t| t.classify(x)), self.n_classes)
    }
}
