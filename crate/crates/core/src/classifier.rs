//! Random forest of CART trees with Gini impurity, for binary classification
//! of word pairs.
//!
//! Training is deterministic: rows are put in a canonical order first, and
//! tree `t` draws its bootstrap sample and per-node feature subsets from a
//! ChaCha8 generator seeded with `seed` on stream `t`. Trees are grown in
//! parallel, and the worker count never changes the result.
//!
//! # Model file
//!
//! A forest is stored as a pretty-printed JSON document:
//!
//! ```text
//! {
//!   "format": "dialex-forest",
//!   "version": 1,
//!   "rng": "chacha8-seed_from_u64-stream_per_tree",
//!   "feature_order": ["DICE2", ..., "PHONDIST"],
//!   "params": { "n_trees": 100, "criterion": "gini", "max_features": 3, ... },
//!   "trees": [
//!     { "nodes": [
//!         { "split": { "feature": 0, "threshold": 0.5, "left": 1, "right": 2 } },
//!         { "leaf": { "counts": [2.0, 0.0] } },
//!         { "leaf": { "counts": [0.0, 2.0] } } ] },
//!     ...
//!   ]
//! }
//! ```
//!
//! Node 0 is the root. A sample goes left when `value <= threshold`. Leaf
//! counts are `[negative, positive]` (weighted) sample counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stringsim::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};

pub const FORMAT_NAME: &str = "dialex-forest";
pub const FORMAT_VERSION: u32 = 1;
pub const RNG_NAME: &str = "chacha8-seed_from_u64-stream_per_tree";

/// Default decision threshold on the positive-class probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A German lemma, a dialect candidate, their features and the gold label
/// (`true` = translation).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub german: String,
    pub dialect: String,
    pub features: FeatureVector,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitCriterion {
    Gini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub criterion: SplitCriterion,
    /// Features examined per split.
    pub max_features: usize,
    /// Draw an n-out-of-n bootstrap sample for every tree.
    pub bootstrap: bool,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Sample weight of positive rows (negative rows weigh 1).
    pub positive_weight: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            criterion: SplitCriterion::Gini,
            max_features: 3, // floor(sqrt(12))
            bootstrap: true,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
            positive_weight: 1.0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1".into());
        }
        if !(1..=FEATURE_COUNT).contains(&self.max_features) {
            return bad(format!("max_features must be in 1..={FEATURE_COUNT}, got {}", self.max_features));
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be >= 2".into());
        }
        if !(self.positive_weight.is_finite() && self.positive_weight > 0.0) {
            return bad(format!("positive_weight must be > 0, got {}", self.positive_weight));
        }
        Ok(())
    }
}

/// Gini impurity `1 - sum(p_i^2)` of a class-count vector.
pub fn gini(counts: &[f64]) -> Result<f64> {
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::InvalidArgument(format!("invalid class counts {counts:?}")));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("class counts sum to zero".into()));
    }
    Ok(1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>())
}

#[inline]
fn gini2(neg: f64, pos: f64) -> f64 {
    let total = neg + pos;
    let (pn, pp) = (neg / total, pos / total);
    1.0 - pn * pn - pp * pp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [f64; 2],
    },
}

/// A chosen split and the weighted Gini decrease it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Training rows in canonical order plus per-row sample weights.
struct Samples<'a> {
    x: Vec<&'a FeatureVector>,
    y: Vec<bool>,
    w: Vec<f64>,
}

impl Samples<'_> {
    fn counts(&self, idx: &[usize]) -> [f64; 2] {
        let mut c = [0.0; 2];
        for &i in idx {
            c[usize::from(self.y[i])] += self.w[i];
        }
        c
    }

    fn is_constant(&self, idx: &[usize], feature: usize) -> bool {
        let first = self.x[idx[0]].get(feature);
        idx.iter().all(|&i| self.x[i].get(feature) == first)
    }

    /// Best split of `idx` over `features`, scanning features in ascending
    /// order and thresholds in ascending order; only a strictly better
    /// decrease replaces the incumbent.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<Split> {
        let parent = self.counts(idx);
        let total = parent[0] + parent[1];
        let parent_gini = gini2(parent[0], parent[1]);
        if parent_gini <= 0.0 {
            return None;
        }
        let mut features = features.to_vec();
        features.sort_unstable();
        features.dedup();

        let mut best: Option<Split> = None;
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        for &f in &features {
            column.clear();
            column.extend(idx.iter().map(|&i| (self.x[i].get(f), i)));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut left = [0.0; 2];
            for pos in 0..column.len() - 1 {
                let (value, i) = column[pos];
                left[usize::from(self.y[i])] += self.w[i];
                let next = column[pos + 1].0;
                if next <= value {
                    continue;
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let wl = left[0] + left[1];
                let wr = total - wl;
                let decrease =
                    parent_gini - (wl / total) * gini2(left[0], left[1]) - (wr / total) * gini2(right[0], right[1]);
                if decrease > 0.0 && best.is_none_or(|b| decrease > b.impurity_decrease) {
                    let mut threshold = (value + next) / 2.0;
                    if threshold >= next {
                        threshold = value;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        impurity_decrease: decrease,
                    });
                }
            }
        }
        best
    }
}

/// Best Gini split of `rows` restricted to `features`: candidate thresholds
/// are midpoints between consecutive distinct values; ties go to the lower
/// feature index, then the lower threshold. `None` if no split lowers the
/// impurity.
pub fn best_split(rows: &[(FeatureVector, bool)], features: &[usize]) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let samples = Samples {
        x: rows.iter().map(|(x, _)| x).collect(),
        y: rows.iter().map(|(_, y)| *y).collect(),
        w: vec![1.0; rows.len()],
    };
    let idx: Vec<usize> = (0..rows.len()).collect();
    samples.best_split(&idx, features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Builds a tree from its node array (root first), checking that it is a
    /// well-formed binary tree with in-range feature indices and non-empty
    /// leaves.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        let tree = Tree { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Schema("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; n];
        for (id, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= FEATURE_COUNT {
                        return Err(Error::Schema(format!("node {id}: feature index {feature} out of range")));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Schema(format!("node {id}: non-finite threshold")));
                    }
                    for child in [left, right] {
                        if child <= id || child >= n {
                            return Err(Error::Schema(format!("node {id}: bad child index {child}")));
                        }
                        parents[child] += 1;
                    }
                }
                Node::Leaf { counts } => {
                    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || counts[0] + counts[1] <= 0.0 {
                        return Err(Error::Schema(format!("node {id}: invalid leaf counts {counts:?}")));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::Schema("node array is not a tree".into()));
        }
        Ok(())
    }

    fn leaf(&self, x: &[f64; FEATURE_COUNT]) -> [f64; 2] {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Positive-class fraction of the leaf `x` falls into.
    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        let [neg, pos] = self.leaf(x.values());
        pos / (neg + pos)
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestDocument {
    format: String,
    version: u32,
    rng: String,
    feature_order: Vec<String>,
    params: ForestParams,
    trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    params: ForestParams,
    feature_order: Vec<String>,
    trees: Vec<Tree>,
}

fn frozen_order() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

impl Forest {
    /// Assembles a forest from already-built trees using the frozen feature
    /// order. `params.n_trees` is set to the number of trees.
    pub fn from_trees(mut params: ForestParams, trees: Vec<Tree>) -> Result<Self> {
        params.n_trees = trees.len();
        params.validate()?;
        for tree in &trees {
            tree.validate()?;
        }
        Ok(Forest {
            params,
            feature_order: frozen_order(),
            trees,
        })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_order(&self) -> &[String] {
        &self.feature_order
    }

    /// Errors if the model was trained with a different feature order than
    /// the one this library computes.
    pub fn check_feature_order(&self) -> Result<()> {
        if self.feature_order.iter().map(String::as_str).eq(FEATURE_NAMES) {
            Ok(())
        } else {
            Err(Error::FeatureOrderMismatch {
                found: self.feature_order.clone(),
            })
        }
    }

    /// Mean positive-class leaf fraction over all trees.
    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_proba(x)).sum();
        sum / self.trees.len() as f64
    }

    /// [`Forest::predict_proba`] on an unchecked slice.
    pub fn predict_proba_slice(&self, values: &[f64]) -> Result<f64> {
        Ok(self.predict_proba(&FeatureVector::from_slice(values)?))
    }

    /// Positive iff the probability is at least `threshold`.
    pub fn classify(&self, x: &FeatureVector, threshold: f64) -> Result<bool> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidArgument(format!("threshold must be in (0, 1), got {threshold}")));
        }
        Ok(self.predict_proba(x) >= threshold)
    }

    /// Serializes the model file (see the module docs for the schema).
    pub fn to_bytes(&self) -> Vec<u8> {
        let doc = ForestDocument {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            rng: RNG_NAME.into(),
            feature_order: self.feature_order.clone(),
            params: self.params.clone(),
            trees: self.trees.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("forest serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: ForestDocument =
            serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
        if doc.format != FORMAT_NAME {
            return Err(Error::Schema(format!("unknown format {:?}", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported schema version {}", doc.version)));
        }
        if doc.rng != RNG_NAME {
            return Err(Error::Schema(format!("unknown generator {:?}", doc.rng)));
        }
        if doc.feature_order.len() != FEATURE_COUNT {
            return Err(Error::Schema(format!(
                "feature order lists {} features, expected {FEATURE_COUNT}",
                doc.feature_order.len()
            )));
        }
        doc.params.validate().map_err(|e| Error::Schema(e.to_string()))?;
        if doc.trees.len() != doc.params.n_trees {
            return Err(Error::Schema(format!(
                "params declare {} trees, document has {}",
                doc.params.n_trees,
                doc.trees.len()
            )));
        }
        for (t, tree) in doc.trees.iter().enumerate() {
            tree.validate().map_err(|e| Error::Schema(format!("tree {t}: {e}")))?;
        }
        Ok(Forest {
            params: doc.params,
            feature_order: doc.feature_order,
            trees: doc.trees,
        })
    }
}

/// Canonical row order: features, then label, then the word pair.
fn canonical_order(data: &[LabeledPair]) -> Vec<&LabeledPair> {
    let mut rows: Vec<&LabeledPair> = data.iter().collect();
    rows.sort_by(|a, b| {
        a.features
            .values()
            .iter()
            .zip(b.features.values())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.label.cmp(&b.label))
            .then_with(|| a.german.cmp(&b.german))
            .then_with(|| a.dialect.cmp(&b.dialect))
    });
    rows
}

fn grow_tree(samples: &Samples<'_>, params: &ForestParams, tree_index: usize) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(tree_index as u64);
    let n = samples.y.len();
    let root: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };

    let mut nodes: Vec<Node> = vec![Node::Leaf { counts: [0.0; 2] }];
    let mut stack = vec![(0usize, root, 0usize)];
    let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
    while let Some((id, idx, depth)) = stack.pop() {
        let counts = samples.counts(&idx);
        let splittable = idx.len() >= params.min_samples_split
            && params.max_depth.is_none_or(|d| depth < d)
            && counts[0] > 0.0
            && counts[1] > 0.0;
        let split = if splittable {
            // Draw features in random order until `max_features` non-constant
            // ones are found; constant features do not count.
            for i in (1..FEATURE_COUNT).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let chosen: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&f| !samples.is_constant(&idx, f))
                .take(params.max_features)
                .collect();
            samples.best_split(&idx, &chosen)
        } else {
            None
        };
        match split {
            Some(s) => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| samples.x[i].get(s.feature) <= s.threshold);
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { counts: [0.0; 2] });
                nodes.push(Node::Leaf { counts: [0.0; 2] });
                nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: l,
                    right: r,
                };
                stack.push((r, right, depth + 1));
                stack.push((l, left, depth + 1));
            }
            None => nodes[id] = Node::Leaf { counts },
        }
    }
    Tree { nodes }
}

/// Trains a forest. Rows are first sorted canonically, so the input order
/// does not matter; trees are grown in parallel on the current rayon pool.
pub fn train_forest(data: &[LabeledPair], params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let rows = canonical_order(data);
    let samples = Samples {
        x: rows.iter().map(|r| &r.features).collect(),
        y: rows.iter().map(|r| r.label).collect(),
        w: rows
            .iter()
            .map(|r| if r.label { params.positive_weight } else { 1.0 })
            .collect(),
    };
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(&samples, params, t))
        .collect();
    Ok(Forest {
        params: params.clone(),
        feature_order: frozen_order(),
        trees,
    })
}
