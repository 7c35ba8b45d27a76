//! CART classification trees and their bagged ensemble.
//!
//! Features are ordinal integer codes. A split sends rows with
//! `value <= threshold` left, where the threshold is the midpoint between two
//! consecutive values observed at the node. Split quality is the weighted
//! Gini decrease, compared in exact integer arithmetic so ties are real ties;
//! ties go to the lower feature index, then the lower threshold.
//!
//! Leaves carry globally unique terminal ids, numbered left to right within
//! each tree and contiguously across trees in tree order.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Current on-disk model format.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Read access to a table of ordinal features and a class target.
pub trait FeatureTable: Sync {
    fn n_rows(&self) -> usize;
    fn n_features(&self) -> usize;
    /// Number of target classes; targets lie in `0..n_classes`.
    fn n_classes(&self) -> usize;
    fn value(&self, row: usize, feature: usize) -> u32;
    fn target(&self, row: usize) -> u32;
    /// Upper bound on the values of `feature`.
    fn max_value(&self, feature: usize) -> u32;
}

/// Row-major in-memory feature table.
#[derive(Debug, Clone)]
pub struct DenseTable {
    rows: Vec<Vec<u32>>,
    targets: Vec<u32>,
    n_features: usize,
    n_classes: usize,
    max_values: Vec<u32>,
}

impl DenseTable {
    pub fn new(rows: Vec<Vec<u32>>, targets: Vec<u32>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: targets.len(),
            });
        }
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::ArityMismatch {
                expected: n_features,
                got: bad.len(),
            });
        }
        let max_values = (0..n_features)
            .map(|f| rows.iter().map(|r| r[f]).max().unwrap_or(0))
            .collect();
        let n_classes = targets.iter().max().map_or(0, |&m| m as usize + 1);
        Ok(Self {
            rows,
            targets,
            n_features,
            n_classes,
            max_values,
        })
    }
}

impl FeatureTable for DenseTable {
    fn n_rows(&self) -> usize {
        self.rows.len()
    }
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn value(&self, row: usize, feature: usize) -> u32 {
        self.rows[row][feature]
    }
    fn target(&self, row: usize) -> u32 {
        self.targets[row]
    }
    fn max_value(&self, feature: usize) -> u32 {
        self.max_values[feature]
    }
}

/// Gini impurity `1 - sum p_k^2` of a class histogram.
pub fn gini(histogram: &[u64]) -> Result<f64> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    let sq: u128 = histogram.iter().map(|&c| c as u128 * c as u128).sum();
    Ok(1.0 - sq as f64 / (total as f64 * total as f64))
}

/// Axis-aligned threshold split: `value <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, value: u32) -> bool {
        f64::from(value) <= self.threshold
    }
}

/// `sum_left c^2 / n_left + sum_right c^2 / n_right` as an exact fraction.
/// Larger is better: the weighted child impurity is `(W - score) / W`.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn cmp(&self, other: &Score) -> Ordering {
        match (
            self.num.checked_mul(other.den),
            other.num.checked_mul(self.den),
        ) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => {
                let a = self.num as f64 / self.den as f64;
                let b = other.num as f64 / other.den as f64;
                a.partial_cmp(&b).unwrap_or(Ordering::Equal)
            }
        }
    }
}

/// A chosen split and its quality.
#[derive(Debug, Clone, Copy)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    /// Decrease in weighted Gini impurity from parent to children.
    pub gini_decrease: f64,
    pub left_weight: u64,
    pub right_weight: u64,
    score: Score,
}

#[derive(Default)]
struct Scratch {
    hist: Vec<u64>,
    value_weight: Vec<u64>,
    left: Vec<u64>,
    right: Vec<u64>,
    triples: Vec<(u32, u32, u64)>,
}

/// Best split of the node formed by `rows` (with optional integer weights,
/// e.g. bootstrap multiplicities) over `candidates`.
///
/// Returns `None` when no candidate split strictly reduces impurity.
pub fn best_split<T: FeatureTable + ?Sized>(
    table: &T,
    rows: &[u32],
    weights: Option<&[u32]>,
    candidates: &[usize],
) -> Option<SplitCandidate> {
    let ones;
    let weights = match weights {
        Some(w) => w,
        None => {
            ones = vec![1u32; rows.len()];
            &ones
        }
    };
    let mut scratch = Scratch::default();
    let parent = class_counts(table, rows, weights);
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    best_split_with(table, rows, weights, &parent, &sorted, 1, &mut scratch)
}

fn class_counts<T: FeatureTable + ?Sized>(table: &T, rows: &[u32], weights: &[u32]) -> Vec<u64> {
    let mut counts = vec![0u64; table.n_classes()];
    for (&r, &w) in rows.iter().zip(weights) {
        counts[table.target(r as usize) as usize] += u64::from(w);
    }
    counts
}

/// `candidates` must be sorted ascending.
fn best_split_with<T: FeatureTable + ?Sized>(
    table: &T,
    rows: &[u32],
    weights: &[u32],
    parent: &[u64],
    candidates: &[usize],
    min_leaf: u64,
    scratch: &mut Scratch,
) -> Option<SplitCandidate> {
    let total: u64 = parent.iter().sum();
    if total < 2 {
        return None;
    }
    let parent_sq: u128 = parent.iter().map(|&c| c as u128 * c as u128).sum();
    let parent_score = Score {
        num: parent_sq,
        den: total as u128,
    };
    let mut best: Option<SplitCandidate> = None;
    for &f in candidates {
        if let Some(c) = best_for_feature(table, rows, weights, parent, f, min_leaf, scratch) {
            let better = match &best {
                None => c.score.cmp(&parent_score) == Ordering::Greater,
                Some(b) => c.score.cmp(&b.score) == Ordering::Greater,
            };
            if better {
                best = Some(c);
            }
        }
    }
    best.map(|mut c| {
        let w = total as f64;
        c.gini_decrease = c.score.num as f64 / c.score.den as f64 / w - parent_sq as f64 / (w * w);
        c
    })
}

/// Sweep state shared by the dense and sparse scans.
struct Sweep<'a> {
    left: &'a mut [u64],
    right: &'a mut [u64],
    a: u128,
    b: u128,
    n_left: u64,
    n_right: u64,
    prev: Option<u32>,
    best: Option<(Score, f64, u64, u64)>,
    min_leaf: u64,
}

impl Sweep<'_> {
    /// Called on reaching a new observed value `v`, before moving it left.
    fn boundary(&mut self, v: u32) {
        if let Some(prev) = self.prev {
            if self.n_left >= self.min_leaf && self.n_right >= self.min_leaf {
                let (nl, nr) = (self.n_left as u128, self.n_right as u128);
                let score = Score {
                    num: self.a * nr + self.b * nl,
                    den: nl * nr,
                };
                let better = self
                    .best
                    .as_ref()
                    .is_none_or(|(s, ..)| score.cmp(s) == Ordering::Greater);
                if better {
                    let threshold = (f64::from(prev) + f64::from(v)) / 2.0;
                    self.best = Some((score, threshold, self.n_left, self.n_right));
                }
            }
        }
        self.prev = Some(v);
    }

    fn move_left(&mut self, class: usize, k: u64) {
        let (k, cl, cr) = (
            k as u128,
            self.left[class] as u128,
            self.right[class] as u128,
        );
        self.a = self.a + 2 * cl * k + k * k;
        self.b = self.b + k * k - 2 * cr * k;
        self.left[class] += k as u64;
        self.right[class] -= k as u64;
        self.n_left += k as u64;
        self.n_right -= k as u64;
    }
}

fn best_for_feature<T: FeatureTable + ?Sized>(
    table: &T,
    rows: &[u32],
    weights: &[u32],
    parent: &[u64],
    feature: usize,
    min_leaf: u64,
    scratch: &mut Scratch,
) -> Option<SplitCandidate> {
    let n_classes = parent.len();
    let n_values = table.max_value(feature) as usize + 1;
    let total: u64 = parent.iter().sum();

    scratch.left.clear();
    scratch.left.resize(n_classes, 0);
    scratch.right.clear();
    scratch.right.extend_from_slice(parent);
    let mut sweep = Sweep {
        left: &mut scratch.left,
        right: &mut scratch.right,
        a: 0,
        b: parent.iter().map(|&c| c as u128 * c as u128).sum(),
        n_left: 0,
        n_right: total,
        prev: None,
        best: None,
        min_leaf,
    };

    let dense_cost = n_values.saturating_mul(n_classes);
    if dense_cost <= 4 * rows.len() + 64 {
        let hist = &mut scratch.hist;
        hist.clear();
        hist.resize(dense_cost, 0);
        let vw = &mut scratch.value_weight;
        vw.clear();
        vw.resize(n_values, 0);
        for (&r, &w) in rows.iter().zip(weights) {
            let r = r as usize;
            let v = table.value(r, feature) as usize;
            let c = table.target(r) as usize;
            hist[v * n_classes + c] += u64::from(w);
            vw[v] += u64::from(w);
        }
        for v in 0..n_values {
            if vw[v] == 0 {
                continue;
            }
            sweep.boundary(v as u32);
            for (c, &k) in hist[v * n_classes..(v + 1) * n_classes].iter().enumerate() {
                if k > 0 {
                    sweep.move_left(c, k);
                }
            }
        }
    } else {
        let triples = &mut scratch.triples;
        triples.clear();
        triples.extend(
            rows.iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0)
                .map(|(&r, &w)| {
                    let r = r as usize;
                    (table.value(r, feature), table.target(r), u64::from(w))
                }),
        );
        triples.sort_unstable_by_key(|&(v, c, _)| (v, c));
        let mut i = 0;
        while i < triples.len() {
            let (v, c, _) = triples[i];
            if sweep.prev != Some(v) {
                sweep.boundary(v);
            }
            let mut k = 0;
            while i < triples.len() && triples[i].0 == v && triples[i].1 == c {
                k += triples[i].2;
                i += 1;
            }
            sweep.move_left(c as usize, k);
        }
    }

    sweep.best.map(|(score, threshold, nl, nr)| SplitCandidate {
        rule: SplitRule { feature, threshold },
        gini_decrease: 0.0,
        left_weight: nl,
        right_weight: nr,
        score,
    })
}

/// Single tree or bagged forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    SingleTree,
    Forest,
}

/// Ensemble hyper-parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub mode: ForestMode,
    /// Features tried per split; `None` means `ceil(sqrt(features))` in forest
    /// mode and all features for a single tree.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl ForestParams {
    /// Bagged forest of `trees` trees with bootstrap and random feature subsets.
    pub fn forest(trees: usize, seed: u64) -> Self {
        Self {
            trees,
            mode: ForestMode::Forest,
            mtry: None,
            bootstrap: true,
            min_leaf: 1,
            max_depth: None,
            seed,
        }
    }

    /// One tree on all rows, all features considered at every split.
    pub fn single_tree(seed: u64) -> Self {
        Self {
            trees: 1,
            mode: ForestMode::SingleTree,
            mtry: None,
            bootstrap: false,
            min_leaf: 1,
            max_depth: None,
            seed,
        }
    }

    /// Effective features per split for a table with `n_features` columns.
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        match (self.mtry, self.mode) {
            (Some(m), _) => m,
            (None, ForestMode::Forest) => (n_features as f64).sqrt().ceil() as usize,
            (None, ForestMode::SingleTree) => n_features,
        }
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::InvalidParameter(
                "tree count must be at least 1".into(),
            ));
        }
        if self.mode == ForestMode::SingleTree && self.trees != 1 {
            return Err(Error::InvalidParameter(
                "single-tree mode requires exactly one tree".into(),
            ));
        }
        let mtry = self.resolved_mtry(n_features);
        if mtry == 0 || mtry > n_features {
            return Err(Error::InvalidParameter(format!(
                "mtry {mtry} outside 1..={n_features}"
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidParameter(
                "min_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Tree node. Children are indices into the owning tree's node array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        samples: u64,
    },
    Leaf {
        terminal: u32,
        samples: u64,
        /// Sparse `(class, weighted count)` pairs, ascending by class.
        histogram: Vec<(u32, u64)>,
    },
}

impl Node {
    pub fn samples(&self) -> u64 {
        match self {
            Node::Split { samples, .. } | Node::Leaf { samples, .. } => *samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
    pub first_terminal: u32,
    pub n_terminals: u32,
}

impl TreeModel {
    /// Terminal id reached by a row whose feature `f` is `value(f)`.
    #[inline]
    pub fn route_with(&self, value: impl Fn(usize) -> u32) -> u32 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if f64::from(value(*feature as usize)) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { terminal, .. } => return *terminal,
            }
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Node> {
        let mut out = Vec::with_capacity(self.n_terminals as usize);
        let mut stack = vec![0usize];
        while let Some(at) = stack.pop() {
            match &self.nodes[at] {
                Node::Split { left, right, .. } => {
                    stack.push(*right as usize);
                    stack.push(*left as usize);
                }
                leaf @ Node::Leaf { .. } => out.push(leaf),
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Split { left, right, .. } = &self.nodes[at] {
                stack.push((*left as usize, d + 1));
                stack.push((*right as usize, d + 1));
            }
        }
        best
    }

    /// Renumber leaves left to right starting at `first`.
    fn number_terminals(&mut self, first: u32) {
        let mut next = first;
        let mut stack = vec![0usize];
        while let Some(at) = stack.pop() {
            match &mut self.nodes[at] {
                Node::Split { left, right, .. } => {
                    let (l, r) = (*left as usize, *right as usize);
                    stack.push(r);
                    stack.push(l);
                }
                Node::Leaf { terminal, .. } => {
                    *terminal = next;
                    next += 1;
                }
            }
        }
        self.first_terminal = first;
        self.n_terminals = next - first;
    }
}

/// Trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub params: ForestParams,
    pub n_features: usize,
    pub n_classes: usize,
    pub total_terminals: u32,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// One terminal id per tree for a feature vector of training arity.
    ///
    /// Values never seen in training are compared against thresholds like
    /// any other integer.
    pub fn route(&self, row: &[u32]) -> Result<Vec<u32>> {
        if row.len() != self.n_features {
            return Err(Error::ArityMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(self
            .trees
            .iter()
            .map(|t| t.route_with(|f| row[f]))
            .collect())
    }

    /// Route row `r` of `table`, appending one terminal id per tree to `out`.
    #[inline]
    pub fn route_row_into<T: FeatureTable + ?Sized>(
        &self,
        table: &T,
        r: usize,
        out: &mut Vec<u32>,
    ) {
        out.extend(
            self.trees
                .iter()
                .map(|t| t.route_with(|f| table.value(r, f))),
        );
    }

    /// Sample weight of every terminal, indexed by terminal id.
    pub fn terminal_samples(&self) -> Vec<u64> {
        let mut out = vec![0; self.total_terminals as usize];
        for tree in &self.trees {
            for leaf in tree.leaves() {
                if let Node::Leaf {
                    terminal, samples, ..
                } = leaf
                {
                    out[*terminal as usize] = *samples;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }
}

/// Train the ensemble on every row of `table`.
///
/// Tree `k` draws its bootstrap sample and feature subsets from
/// [`rng::stream`]`(params.seed, [k])`, so the model is identical for a
/// fixed seed whatever the number of worker threads.
pub fn train_forest<T: FeatureTable + ?Sized>(
    table: &T,
    params: &ForestParams,
) -> Result<ForestModel> {
    if table.n_rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n_features = table.n_features();
    params.validate(n_features)?;
    let mtry = params.resolved_mtry(n_features);

    let mut trees: Vec<TreeModel> = (0..params.trees)
        .into_par_iter()
        .map(|k| grow_tree(table, params, mtry, k))
        .collect();

    let mut next = 0u32;
    for tree in &mut trees {
        tree.number_terminals(next);
        next += tree.n_terminals;
    }
    Ok(ForestModel {
        format_version: MODEL_FORMAT_VERSION,
        params: params.clone(),
        n_features,
        n_classes: table.n_classes(),
        total_terminals: next,
        trees,
    })
}

fn grow_tree<T: FeatureTable + ?Sized>(
    table: &T,
    params: &ForestParams,
    mtry: usize,
    k: usize,
) -> TreeModel {
    let mut rng = rng::stream(params.seed, &[k as u64]);
    let m = table.n_rows();

    let (mut rows, mut weights): (Vec<u32>, Vec<u32>) = if params.bootstrap {
        let mut counts = vec![0u32; m];
        for _ in 0..m {
            counts[rng.gen_range(0..m)] += 1;
        }
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(r, &c)| (r as u32, c))
            .unzip()
    } else {
        ((0..m as u32).collect(), vec![1; m])
    };

    let n_features = table.n_features();
    let min_leaf = params.min_leaf as u64;
    let mut scratch = Scratch::default();
    let mut order: Vec<usize> = (0..n_features).collect();
    let mut tried: Vec<usize> = Vec::with_capacity(n_features);
    let mut nodes: Vec<Node> = vec![Node::Leaf {
        terminal: 0,
        samples: 0,
        histogram: vec![],
    }];
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];

    while let Some((at, start, end, depth)) = stack.pop() {
        let node_rows = &rows[start..end];
        let node_weights = &weights[start..end];
        let counts = class_counts(table, node_rows, node_weights);
        let total: u64 = counts.iter().sum();
        let impure = counts.iter().filter(|&&c| c > 0).count() > 1;
        let can_split =
            impure && total >= 2 * min_leaf && params.max_depth.is_none_or(|d| depth < d);

        let split = if can_split {
            tried.clear();
            for i in 0..n_features {
                if tried.len() == mtry {
                    break;
                }
                let j = rng.gen_range(i..n_features);
                order.swap(i, j);
                let f = order[i];
                if !is_constant(table, node_rows, f) {
                    tried.push(f);
                }
            }
            tried.sort_unstable();
            best_split_with(
                table,
                node_rows,
                node_weights,
                &counts,
                &tried,
                min_leaf,
                &mut scratch,
            )
        } else {
            None
        };

        match split {
            None => {
                let histogram = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(c, &n)| (c as u32, n))
                    .collect();
                nodes[at] = Node::Leaf {
                    terminal: 0,
                    samples: total,
                    histogram,
                };
            }
            Some(c) => {
                let mid = partition(
                    table,
                    &mut rows[start..end],
                    &mut weights[start..end],
                    &c.rule,
                ) + start;
                let left = nodes.len();
                nodes.push(Node::Leaf {
                    terminal: 0,
                    samples: 0,
                    histogram: vec![],
                });
                nodes.push(Node::Leaf {
                    terminal: 0,
                    samples: 0,
                    histogram: vec![],
                });
                nodes[at] = Node::Split {
                    feature: c.rule.feature as u32,
                    threshold: c.rule.threshold,
                    left: left as u32,
                    right: left as u32 + 1,
                    samples: total,
                };
                stack.push((left + 1, mid, end, depth + 1));
                stack.push((left, start, mid, depth + 1));
            }
        }
    }

    TreeModel {
        nodes,
        first_terminal: 0,
        n_terminals: 0,
    }
}

fn is_constant<T: FeatureTable + ?Sized>(table: &T, rows: &[u32], f: usize) -> bool {
    let mut it = rows.iter().map(|&r| table.value(r as usize, f));
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}

/// Move left-going rows to the front; returns the boundary.
fn partition<T: FeatureTable + ?Sized>(
    table: &T,
    rows: &mut [u32],
    weights: &mut [u32],
    rule: &SplitRule,
) -> usize {
    let mut mid = 0;
    for i in 0..rows.len() {
        if rule.goes_left(table.value(rows[i] as usize, rule.feature)) {
            rows.swap(i, mid);
            weights.swap(i, mid);
            mid += 1;
        }
    }
    mid
}
