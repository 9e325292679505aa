//! CART regression trees and bagged forests with in-bag bookkeeping.
//!
//! Each tree records how often every training row was drawn into its bootstrap
//! sample, so out-of-bag membership can be queried after fitting.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::CompleteDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::Stream;

/// Random Forest hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub ntree: usize,
    /// Candidate features per split; `None` means `max(1, floor(p / 3))`.
    pub mtry: Option<usize>,
    pub nodesize: usize,
    pub sample_with_replacement: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            ntree: 100,
            mtry: None,
            nodesize: 5,
            sample_with_replacement: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        ForestConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| (p / 3).max(1))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::InvalidParameter("ntree must be >= 1".into()));
        }
        if self.nodesize == 0 {
            return Err(Error::InvalidParameter("nodesize must be >= 1".into()));
        }
        let mtry = self.resolved_mtry(p);
        if mtry == 0 || mtry > p {
            return Err(Error::InvalidParameter(format!("mtry {mtry} not in 1..={p}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        /// Training rows (with bootstrap multiplicity) reaching this leaf.
        count: usize,
    },
}

/// A fitted regression tree. Node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    inbag: Vec<u32>,
    uses_feature: Vec<bool>,
}

impl Tree {
    /// Assemble a tree from explicit nodes and in-bag counts.
    pub fn from_parts(nodes: Vec<Node>, inbag: Vec<u32>, p: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("tree needs at least one node".into()));
        }
        let mut uses_feature = vec![false; p];
        for node in &nodes {
            if let Node::Split { feature, left, right, .. } = *node {
                if feature >= p || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::InvalidParameter("split references out of range".into()));
                }
                uses_feature[feature] = true;
            }
        }
        Ok(Tree {
            nodes,
            inbag,
            uses_feature,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn inbag_counts(&self) -> &[u32] {
        &self.inbag
    }

    pub fn uses_feature(&self, j: usize) -> bool {
        self.uses_feature.get(j).copied().unwrap_or(false)
    }

    pub fn is_leaf_only(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Rows with in-bag count zero, ascending.
    pub fn oob_rows(&self) -> Vec<usize> {
        self.inbag
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Route a point given by a feature accessor; `x[f] <= threshold` goes left.
    #[inline]
    pub fn predict_with(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_with(|f| x[f])
    }
}

pub fn predict_tree(tree: &Tree, x: &[f64]) -> f64 {
    tree.predict(x)
}

/// An ensemble of regression trees sharing one training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    config: ForestConfig,
    p: usize,
    n: usize,
}

impl Forest {
    pub fn from_trees(trees: Vec<Tree>, config: ForestConfig, p: usize) -> Result<Self> {
        let n = trees.first().map_or(0, |t| t.inbag.len());
        if trees.iter().any(|t| t.inbag.len() != n) {
            return Err(Error::Dimension("trees disagree on training size".into()));
        }
        Ok(Forest { trees, config, p, n })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn n_train(&self) -> usize {
        self.n
    }

    pub fn oob_indices(&self, t: usize) -> Result<Vec<usize>> {
        self.trees
            .get(t)
            .map(Tree::oob_rows)
            .ok_or_else(|| Error::InvalidParameter(format!("tree index {t} out of range")))
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    /// Out-of-bag prediction for every training row; `None` when a row is in-bag everywhere.
    pub fn oob_predictions(&self, data: &CompleteDataset) -> Vec<Option<f64>> {
        let mut sums = vec![0.0; self.n];
        let mut counts = vec![0u32; self.n];
        for tree in &self.trees {
            for (i, &c) in tree.inbag.iter().enumerate() {
                if c == 0 {
                    sums[i] += tree.predict_with(|f| data.features.get(i, f));
                    counts[i] += 1;
                }
            }
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s / f64::from(c)))
            .collect()
    }
}

/// Fit a forest; tree `t` draws from the stream derived from `(cfg.seed, t)`.
pub fn fit_forest(data: &CompleteDataset, cfg: &ForestConfig) -> Result<Forest> {
    let n = data.n();
    let p = data.p();
    if n < 2 {
        return Err(Error::TooSmall(format!("forest needs n >= 2, got {n}")));
    }
    cfg.validate(p)?;
    let root = Stream::new(cfg.seed);
    let mtry = cfg.resolved_mtry(p);
    let trees = exec::map_range(cfg.ntree, |t| {
        let mut rng = root.child(t as u64).rng();
        let mut inbag = vec![0u32; n];
        let sample: Vec<u32> = if cfg.sample_with_replacement {
            (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    inbag[i] += 1;
                    i as u32
                })
                .collect()
        } else {
            inbag.iter_mut().for_each(|c| *c = 1);
            (0..n as u32).collect()
        };
        grow_tree(data, sample, inbag, mtry, cfg.nodesize, &mut rng)
    });
    Ok(Forest {
        trees,
        config: cfg.clone(),
        p,
        n,
    })
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn leaf(samples: &[u32], y: &[f64]) -> Node {
    let sum: f64 = samples.iter().map(|&i| y[i as usize]).sum();
    Node::Leaf {
        value: sum / samples.len() as f64,
        count: samples.len(),
    }
}

fn grow_tree(
    data: &CompleteDataset,
    mut samples: Vec<u32>,
    inbag: Vec<u32>,
    mtry: usize,
    nodesize: usize,
    rng: &mut impl Rng,
) -> Tree {
    let p = data.p();
    let y = &data.response;
    let mut nodes: Vec<Node> = Vec::new();
    let mut uses_feature = vec![false; p];
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
    // (node slot, start, end) ranges into `samples`
    let mut stack = vec![(0usize, 0usize, samples.len())];
    nodes.push(Node::Leaf { value: 0.0, count: 0 });

    while let Some((slot, start, end)) = stack.pop() {
        let node_samples = &mut samples[start..end];
        let count = node_samples.len();
        let split = if count >= 2 * nodesize && !is_constant(node_samples, y) {
            best_split(data, node_samples, mtry, nodesize, rng, &mut pairs)
        } else {
            None
        };
        let Some(split) = split else {
            nodes[slot] = leaf(node_samples, y);
            continue;
        };
        let col = data.features.col(split.feature);
        let mid = partition(node_samples, |i| col[i as usize] <= split.threshold);
        uses_feature[split.feature] = true;
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { value: 0.0, count: 0 });
        nodes.push(Node::Leaf { value: 0.0, count: 0 });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, start + mid, end));
        stack.push((left, start, start + mid));
    }
    Tree {
        nodes,
        inbag,
        uses_feature,
    }
}

fn is_constant(samples: &[u32], y: &[f64]) -> bool {
    let first = y[samples[0] as usize];
    samples.iter().all(|&i| y[i as usize] == first)
}

/// Stable-order-agnostic in-place partition; returns the size of the `true` part.
fn partition(xs: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..xs.len() {
        if pred(xs[k]) {
            xs.swap(mid, k);
            mid += 1;
        }
    }
    mid
}

/// Greedy variance-reduction split over `mtry` sampled features.
///
/// Ties resolve to the lowest feature index, then the lowest threshold.
fn best_split(
    data: &CompleteDataset,
    samples: &[u32],
    mtry: usize,
    nodesize: usize,
    rng: &mut impl Rng,
    pairs: &mut Vec<(f64, f64)>,
) -> Option<SplitCandidate> {
    let p = data.p();
    let y = &data.response;
    let mut features: Vec<usize> = sample_indices(rng, p, mtry).into_vec();
    features.sort_unstable();

    let count = samples.len();
    let total: f64 = samples.iter().map(|&i| y[i as usize]).sum();
    let parent_score = total * total / count as f64;
    let mut best: Option<SplitCandidate> = None;

    for &f in &features {
        let col = data.features.col(f);
        pairs.clear();
        pairs.extend(samples.iter().map(|&i| (col[i as usize], y[i as usize])));
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if pairs[0].0 == pairs[count - 1].0 {
            continue;
        }
        let mut left_sum = 0.0;
        for k in 0..count - 1 {
            left_sum += pairs[k].1;
            let n_left = k + 1;
            if n_left < nodesize {
                continue;
            }
            if count - n_left < nodesize {
                break;
            }
            let (lo, hi) = (pairs[k].0, pairs[k + 1].0);
            if lo == hi {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / (count - n_left) as f64;
            if score > parent_score && best.as_ref().is_none_or(|b| score > b.score) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitCandidate {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
    }
    best
}
