use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{argmax, entropy, Dataset, MlError};

/// Gains at or below this are treated as no information.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Minimum instance weight on either side of a split.
    pub min_leaf: usize,
    /// Maximum number of splits on any root-to-leaf path; 0 means unlimited.
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 2,
            max_depth: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Training weight per class reaching this leaf.
        dist: Vec<f64>,
    },
    Split {
        attr: usize,
        /// Values `<= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        /// Share of known-valued training weight that went left; used to
        /// route instances missing `attr`.
        left_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub n_classes: usize,
    pub params: TreeParams,
}

/// One admissible binary split at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub attr: usize,
    pub threshold: f64,
    pub gain: f64,
    pub gain_ratio: f64,
    pub left_weight: f64,
    pub right_weight: f64,
    pub missing_weight: f64,
}

/// Enumerates every admissible split of the weighted `items` over `attrs`.
///
/// Thresholds are midpoints between consecutive distinct values. Instances
/// missing the attribute contribute through the known-weight fraction of the
/// gain and as a third partition of the split information.
pub fn scan_splits(
    data: &Dataset,
    items: &[(usize, f64)],
    attrs: &[usize],
    min_leaf: usize,
    mut visit: impl FnMut(&SplitCandidate),
) {
    let n_classes = data.n_classes();
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return;
    }
    let min_leaf = min_leaf as f64;
    let mut known: Vec<(f64, usize, f64)> = Vec::with_capacity(items.len());
    let mut left = vec![0.0; n_classes];
    let mut right = vec![0.0; n_classes];

    for &attr in attrs {
        known.clear();
        for &(idx, w) in items {
            let inst = &data.instances[idx];
            if let Some(v) = inst.values[attr] {
                known.push((v, inst.label, w));
            }
        }
        if known.len() < 2 {
            continue;
        }
        known.sort_by(|a, b| a.0.total_cmp(&b.0));

        left.iter_mut().for_each(|x| *x = 0.0);
        right.iter_mut().for_each(|x| *x = 0.0);
        for &(_, label, w) in &known {
            right[label] += w;
        }
        let known_weight: f64 = right.iter().sum();
        let missing = (total - known_weight).max(0.0);
        let known_entropy = entropy(&right);
        let mut left_weight = 0.0;

        for i in 0..known.len() - 1 {
            let (v, label, w) = known[i];
            left[label] += w;
            right[label] -= w;
            left_weight += w;
            let next = known[i + 1].0;
            if v == next {
                continue;
            }
            let right_weight = known_weight - left_weight;
            if left_weight < min_leaf || right_weight < min_leaf {
                continue;
            }
            let info = (left_weight * entropy(&left) + right_weight * entropy(&right)) / known_weight;
            let gain = known_weight / total * (known_entropy - info);
            if gain <= MIN_GAIN {
                continue;
            }
            let split_info = entropy(&[left_weight, right_weight, missing]);
            if split_info <= 0.0 {
                continue;
            }
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next {
                threshold = v;
            }
            visit(&SplitCandidate {
                attr,
                threshold,
                gain,
                gain_ratio: gain / split_info,
                left_weight,
                right_weight,
                missing_weight: missing,
            });
        }
    }
}

fn best_split(data: &Dataset, items: &[(usize, f64)], attrs: &[usize], min_leaf: usize) -> Option<SplitCandidate> {
    let mut best: Option<SplitCandidate> = None;
    scan_splits(data, items, attrs, min_leaf, |c| {
        if best.is_none_or(|b| c.gain_ratio > b.gain_ratio) {
            best = Some(*c);
        }
    });
    best
}

/// Tree induction shared by the plain tree and the forest members.
pub(crate) struct Grower<'a, F> {
    pub data: &'a Dataset,
    pub params: TreeParams,
    /// Fills the candidate attribute list for the next node.
    pub choose_attrs: F,
    pub nodes: Vec<Node>,
}

impl<'a, F: FnMut(&mut Vec<usize>)> Grower<'a, F> {
    pub fn grow(mut self, items: Vec<(usize, f64)>) -> TreeModel {
        let mut attrs = Vec::with_capacity(self.data.n_attributes());
        self.node(items, 0, &mut attrs);
        TreeModel {
            nodes: self.nodes,
            n_classes: self.data.n_classes(),
            params: self.params,
        }
    }

    fn node(&mut self, items: Vec<(usize, f64)>, depth: usize, attrs: &mut Vec<usize>) -> usize {
        let mut dist = vec![0.0; self.data.n_classes()];
        for &(idx, w) in &items {
            dist[self.data.instances[idx].label] += w;
        }
        let total: f64 = dist.iter().sum();
        let pure = dist.iter().filter(|w| **w > 0.0).count() <= 1;
        let depth_capped = self.params.max_depth > 0 && depth >= self.params.max_depth;
        let min_leaf = self.params.min_leaf.max(1);

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { dist });
        if pure || depth_capped || total < 2.0 * min_leaf as f64 {
            return id;
        }

        attrs.clear();
        (self.choose_attrs)(attrs);
        let Some(split) = best_split(self.data, &items, attrs, min_leaf) else {
            return id;
        };

        let known = split.left_weight + split.right_weight;
        let left_fraction = split.left_weight / known;
        let mut left_items = Vec::new();
        let mut right_items = Vec::new();
        for (idx, w) in items {
            match self.data.instances[idx].values[split.attr] {
                Some(v) if v <= split.threshold => left_items.push((idx, w)),
                Some(_) => right_items.push((idx, w)),
                None => {
                    left_items.push((idx, w * left_fraction));
                    right_items.push((idx, w * (1.0 - left_fraction)));
                }
            }
        }
        let left = self.node(left_items, depth + 1, attrs);
        let right = self.node(right_items, depth + 1, attrs);
        self.nodes[id] = Node::Split {
            attr: split.attr,
            threshold: split.threshold,
            left,
            right,
            left_fraction,
        };
        id
    }
}

pub fn train_tree(data: &Dataset, params: TreeParams) -> Result<TreeModel, MlError> {
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    if params.min_leaf == 0 {
        return Err(MlError::BadParams("min_leaf must be at least 1"));
    }
    let n_attrs = data.n_attributes();
    let items = data
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (i, inst.weight))
        .collect();
    Ok(Grower {
        data,
        params,
        choose_attrs: |out: &mut Vec<usize>| out.extend(0..n_attrs),
        nodes: Vec::new(),
    }
    .grow(items))
}

impl TreeModel {
    /// Class probabilities. Instances missing a split attribute descend both
    /// branches, weighted by the training split.
    pub fn distribution(&self, values: &[Option<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        self.accumulate(0, values, 1.0, &mut out);
        out
    }

    fn accumulate(&self, id: usize, values: &[Option<f64>], share: f64, out: &mut [f64]) {
        match &self.nodes[id] {
            Node::Leaf { dist } => {
                let total: f64 = dist.iter().sum();
                if total > 0.0 {
                    for (o, d) in out.iter_mut().zip(dist) {
                        *o += share * d / total;
                    }
                }
            }
            Node::Split {
                attr,
                threshold,
                left,
                right,
                left_fraction,
            } => match values.get(*attr).copied().flatten() {
                Some(v) if v <= *threshold => self.accumulate(*left, values, share, out),
                Some(_) => self.accumulate(*right, values, share, out),
                None => {
                    self.accumulate(*left, values, share * left_fraction, out);
                    self.accumulate(*right, values, share * (1.0 - left_fraction), out);
                }
            },
        }
    }

    pub fn predict_class(&self, values: &[Option<f64>]) -> usize {
        argmax(&self.distribution(values))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { dist } => Some(dist.as_slice()),
            Node::Split { .. } => None,
        })
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.nodes[0] {
            Node::Split { attr, threshold, .. } => Some((*attr, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}
