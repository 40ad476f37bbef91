//! Greedy binary CART tree with optional reduced-error pruning.
//!
//! Splits minimize weighted Gini impurity over midpoints between consecutive
//! distinct feature values. Candidate splits are compared exactly on integer
//! class counts; ties go to the lowest feature index, then the lowest
//! threshold. Rows are kept presorted per feature and partitioned stably down
//! the tree, so each level costs `O(rows x features)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::BinaryData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        pos: u64,
        neg: u64,
    },
    Leaf {
        pos: u64,
        neg: u64,
    },
}

impl TreeNode {
    pub fn counts(&self) -> (u64, u64) {
        match *self {
            TreeNode::Split { pos, neg, .. } | TreeNode::Leaf { pos, neg } => (pos, neg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pruning {
    None,
    /// Hold out `holdout` of the training rows (seeded), grow on the rest,
    /// then collapse every subtree whose removal does not lower holdout
    /// accuracy.
    ReducedError { holdout: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub prune: Pruning,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            prune: Pruning::ReducedError {
                holdout: 0.1,
                seed: 0,
            },
        }
    }
}

impl TreeParams {
    pub fn unpruned() -> Self {
        Self {
            prune: Pruning::None,
            ..Self::default()
        }
    }
}

/// Flattened tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Parse("tree has no nodes".into()));
        }
        for n in &nodes {
            if let TreeNode::Split { left, right, .. } = *n {
                if left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::Parse("tree child index out of range".into()));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] <= threshold { left } else { right },
                TreeNode::Leaf { .. } => return &self.nodes[i],
            }
        }
    }

    /// Leaf majority (ties negative) and the leaf's positive fraction.
    pub fn predict(&self, x: &[f64]) -> (bool, f64) {
        let (pos, neg) = self.leaf_for(x).counts();
        let total = pos + neg;
        let score = if total == 0 { 0.0 } else { pos as f64 / total as f64 };
        (pos > neg, score)
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Chosen split of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
}

/// Exact score of a partition: `(aL * nR + aR * nL) / (nL * nR)` with
/// `a = pos^2 + neg^2`. Larger is purer; it equals `n - n * weighted Gini`
/// up to the common factor.
#[derive(Debug, Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn new(lp: u64, ln: u64, rp: u64, rn: u64) -> Self {
        let (nl, nr) = ((lp + ln) as u128, (rp + rn) as u128);
        let al = (lp as u128).pow(2) + (ln as u128).pow(2);
        let ar = (rp as u128).pow(2) + (rn as u128).pow(2);
        Self {
            num: al * nr + ar * nl,
            den: nl * nr,
        }
    }

    fn beats(&self, other: &Purity) -> bool {
        match (self.num.checked_mul(other.den), other.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a > b,
            _ => (self.num as f64 / self.den as f64) > (other.num as f64 / other.den as f64),
        }
    }
}

/// Threshold strictly between `a < b` such that `a <= t < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t >= b || t < a {
        a
    } else {
        t
    }
}

struct Grower<'a> {
    data: &'a BinaryData,
    max_depth: Option<usize>,
    min_leaf: usize,
    mtry: Option<usize>,
    rng: Option<&'a mut ChaCha8Rng>,
    goes_left: Vec<bool>,
    nodes: Vec<TreeNode>,
}

struct Work {
    node: usize,
    depth: usize,
    /// Per feature, the node's rows sorted by that feature.
    sorted: Vec<Vec<u32>>,
}

impl<'a> Grower<'a> {
    fn best_split(&self, sorted: &[Vec<u32>], features: &[usize], pos: u64, neg: u64) -> Option<SplitChoice> {
        let n = sorted[0].len();
        let min_leaf = self.min_leaf.max(1);
        let mut best: Option<(Purity, SplitChoice)> = None;
        for &f in features {
            let col = self.data.column(f);
            let rows = &sorted[f];
            let (mut lp, mut ln) = (0u64, 0u64);
            for i in 0..n - 1 {
                let r = rows[i] as usize;
                if self.data.label(r) {
                    lp += 1;
                } else {
                    ln += 1;
                }
                let (v, next) = (col[r], col[rows[i + 1] as usize]);
                if v == next {
                    continue;
                }
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let score = Purity::new(lp, ln, pos - lp, neg - ln);
                if best.as_ref().is_none_or(|(b, _)| score.beats(b)) {
                    best = Some((
                        score,
                        SplitChoice {
                            feature: f,
                            threshold: midpoint(v, next),
                        },
                    ));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.n_features();
        match (self.mtry, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = rand::seq::index::sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn grow(mut self, rows: Vec<u32>) -> DecisionTree {
        let d = self.data.n_features();
        let sorted: Vec<Vec<u32>> = (0..d)
            .map(|f| {
                let col = self.data.column(f);
                let mut r = rows.clone();
                r.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                r
            })
            .collect();
        self.nodes.push(TreeNode::Leaf { pos: 0, neg: 0 });
        let mut stack = vec![Work {
            node: 0,
            depth: 0,
            sorted,
        }];
        while let Some(work) = stack.pop() {
            let rows = &work.sorted[0];
            let pos = rows.iter().filter(|&&r| self.data.label(r as usize)).count() as u64;
            let neg = rows.len() as u64 - pos;
            let n = rows.len();
            let stop = pos == 0
                || neg == 0
                || self.max_depth.is_some_and(|m| work.depth >= m)
                || n < 2 * self.min_leaf.max(1);
            let split = if stop {
                None
            } else {
                let features = self.candidate_features();
                self.best_split(&work.sorted, &features, pos, neg)
            };
            let Some(split) = split else {
                self.nodes[work.node] = TreeNode::Leaf { pos, neg };
                continue;
            };
            let col = self.data.column(split.feature);
            for &r in &work.sorted[0] {
                self.goes_left[r as usize] = col[r as usize] <= split.threshold;
            }
            let mut left_sorted = Vec::with_capacity(d);
            let mut right_sorted = Vec::with_capacity(d);
            for list in work.sorted {
                let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.goes_left[r as usize]);
                left_sorted.push(l);
                right_sorted.push(r);
            }
            let left = self.nodes.len();
            let right = left + 1;
            self.nodes.push(TreeNode::Leaf { pos: 0, neg: 0 });
            self.nodes.push(TreeNode::Leaf { pos: 0, neg: 0 });
            self.nodes[work.node] = TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
                pos,
                neg,
            };
            // right pushed first so the left subtree is grown first
            stack.push(Work {
                node: right,
                depth: work.depth + 1,
                sorted: right_sorted,
            });
            stack.push(Work {
                node: left,
                depth: work.depth + 1,
                sorted: left_sorted,
            });
        }
        DecisionTree { nodes: self.nodes }
    }
}

/// Grows an unpruned tree on `rows` (duplicates allowed). With `mtry`, each
/// node draws that many candidate features from `rng`.
pub(crate) fn grow_tree(
    data: &BinaryData,
    rows: Vec<u32>,
    max_depth: Option<usize>,
    min_leaf: usize,
    mtry: Option<usize>,
    rng: Option<&mut ChaCha8Rng>,
) -> DecisionTree {
    Grower {
        data,
        max_depth,
        min_leaf,
        mtry,
        rng,
        goes_left: vec![false; data.n_rows()],
        nodes: Vec::new(),
    }
    .grow(rows)
}

/// Root split a fresh tree would choose on all rows, if any.
pub fn root_split(data: &BinaryData, min_leaf: usize) -> Option<SplitChoice> {
    match grow_tree(data, (0..data.n_rows() as u32).collect(), Some(1), min_leaf, None, None).nodes[0] {
        TreeNode::Split {
            feature, threshold, ..
        } => Some(SplitChoice { feature, threshold }),
        TreeNode::Leaf { .. } => None,
    }
}

pub fn train_tree(data: &BinaryData, params: &TreeParams) -> Result<DecisionTree> {
    if data.n_rows() == 0 {
        return Err(Error::EmptyData);
    }
    let all: Vec<u32> = (0..data.n_rows() as u32).collect();
    match params.prune {
        Pruning::None => Ok(grow_tree(data, all, params.max_depth, params.min_leaf, None, None)),
        Pruning::ReducedError { holdout, seed } => {
            if !(0.0..1.0).contains(&holdout) {
                return Err(Error::InvalidParameter(format!(
                    "holdout fraction must be in [0, 1), got {holdout}"
                )));
            }
            let mut order = all;
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n_hold = ((order.len() as f64) * holdout).round() as usize;
            let n_hold = n_hold.min(order.len() - 1);
            let (hold, grow) = order.split_at(n_hold);
            let mut grow = grow.to_vec();
            grow.sort_unstable();
            let tree = grow_tree(data, grow, params.max_depth, params.min_leaf, None, None);
            if hold.is_empty() {
                return Ok(tree);
            }
            let before = holdout_errors(&tree, data, hold);
            let pruned = reduced_error_prune(tree, data, hold);
            let after = holdout_errors(&pruned, data, hold);
            assert!(after <= before, "pruning raised holdout errors ({before} -> {after})");
            Ok(pruned)
        }
    }
}

fn holdout_errors(tree: &DecisionTree, data: &BinaryData, rows: &[u32]) -> usize {
    let mut x = vec![0.0; data.n_features()];
    rows.iter()
        .filter(|&&r| {
            data.fill_row(r as usize, &mut x);
            tree.predict(&x).0 != data.label(r as usize)
        })
        .count()
}

fn reduced_error_prune(tree: DecisionTree, data: &BinaryData, holdout: &[u32]) -> DecisionTree {
    let mut nodes = tree.nodes;

    fn leaf_errors(node: &TreeNode, data: &BinaryData, rows: &[u32]) -> usize {
        let (pos, neg) = node.counts();
        let predict = pos > neg;
        rows.iter().filter(|&&r| data.label(r as usize) != predict).count()
    }

    // post-order: returns holdout errors of the (possibly pruned) subtree
    fn prune(nodes: &mut [TreeNode], i: usize, data: &BinaryData, rows: &[u32]) -> usize {
        let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            pos,
            neg,
        } = nodes[i]
        else {
            return leaf_errors(&nodes[i], data, rows);
        };
        let col = data.column(feature);
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| col[r as usize] <= threshold);
        let sub = prune(nodes, left, data, &lrows) + prune(nodes, right, data, &rrows);
        let as_leaf = leaf_errors(&nodes[i], data, rows);
        if as_leaf <= sub {
            nodes[i] = TreeNode::Leaf { pos, neg };
            as_leaf
        } else {
            sub
        }
    }

    prune(&mut nodes, 0, data, holdout);
    compact(&nodes)
}

/// Drops unreachable nodes, renumbering in pre-order.
fn compact(nodes: &[TreeNode]) -> DecisionTree {
    let mut out: Vec<TreeNode> = Vec::new();
    let mut stack = vec![(0usize, None::<(usize, bool)>)];
    while let Some((i, parent)) = stack.pop() {
        let id = out.len();
        out.push(nodes[i]);
        if let Some((p, is_left)) = parent {
            if let TreeNode::Split { left, right, .. } = &mut out[p] {
                if is_left {
                    *left = id;
                } else {
                    *right = id;
                }
            }
        }
        if let TreeNode::Split { left, right, .. } = nodes[i] {
            stack.push((right, Some((id, false))));
            stack.push((left, Some((id, true))));
        }
    }
    DecisionTree { nodes: out }
}
