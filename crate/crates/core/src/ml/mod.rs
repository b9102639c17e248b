//! Supervised learners and their evaluation harness.
//!
//! Trees split on the C4.5 gain ratio with fractional routing of instances
//! whose split attribute is missing. Forests bag such trees with per-node
//! attribute subsampling and vote. The MLP is a single sigmoid hidden layer
//! with a softmax output trained by per-instance SGD.

mod dataset;
mod eval;
mod forest;
mod grid;
mod merit;
mod mlp;
mod model;
mod tree;

pub use dataset::{Dataset, Instance};
pub use eval::{cross_validate, stratified_folds, ConfusionMatrix, CvOutcome};
pub use forest::{train_forest, ForestModel, ForestParams};
pub use grid::{forest_grid, tree_grid, tune_grid, GridRow};
pub use merit::{best_threshold_gain, info_gain_merit, MeritReport};
pub use mlp::{train_mlp, MlpGradient, MlpModel, MlpParams};
pub use model::{Algorithm, AlgorithmParams, Model, Prediction, TrainedModel};
pub use tree::{scan_splits, train_tree, Node, SplitCandidate, TreeModel, TreeParams};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MlError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least {needed} instances, have {got}")]
    TooFewInstances { needed: usize, got: usize },
    #[error("label {label} outside the {classes}-class set")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("expected {expected} attribute values, got {got}")]
    AttributeCount { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    BadParams(&'static str),
}

/// Shannon entropy, in bits, of a weighted class distribution.
pub fn entropy(dist: &[f64]) -> f64 {
    let total: f64 = dist.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    dist.iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let p = w / total;
            -p * libm::log2(p)
        })
        .sum()
}

/// Index of the largest score; ties resolve to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_basics() {
        assert_eq!(entropy(&[5.0, 0.0]), 0.0);
        assert!((entropy(&[2.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!((entropy(&[1.0, 1.0, 1.0, 1.0]) - 2.0).abs() < 1e-15);
        assert_eq!(entropy(&[]), 0.0);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }
}
