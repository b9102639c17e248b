use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::Grower;
use super::{argmax, Dataset, MlError, TreeModel, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// 0 means unlimited.
    pub max_depth: usize,
    pub attrs_per_split: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn new(n_trees: usize, max_depth: usize, attrs_per_split: usize) -> Self {
        ForestParams {
            n_trees,
            max_depth,
            attrs_per_split,
            min_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub params: ForestParams,
    pub seed: u64,
    pub n_classes: usize,
}

/// Tree `i` draws from a generator seeded with `seed + i`.
pub fn train_forest(data: &Dataset, params: ForestParams, seed: u64) -> Result<ForestModel, MlError> {
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let n_attrs = data.n_attributes();
    if params.n_trees == 0 {
        return Err(MlError::BadParams("n_trees must be at least 1"));
    }
    if params.attrs_per_split == 0 || params.attrs_per_split > n_attrs {
        return Err(MlError::BadParams("attrs_per_split must be in 1..=attributes"));
    }
    if params.min_leaf == 0 {
        return Err(MlError::BadParams("min_leaf must be at least 1"));
    }

    let n = data.len();
    let tree_params = TreeParams {
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
    };
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut counts = vec![0u32; n];
    for t in 0..params.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let items: Vec<(usize, f64)> = if params.bootstrap {
            counts.iter_mut().for_each(|c| *c = 0);
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
            counts
                .iter()
                .enumerate()
                .filter(|(_, c)| **c > 0)
                .map(|(i, c)| (i, *c as f64 * data.instances[i].weight))
                .collect()
        } else {
            data.instances
                .iter()
                .enumerate()
                .map(|(i, inst)| (i, inst.weight))
                .collect()
        };

        let m = params.attrs_per_split;
        let mut pool: Vec<usize> = (0..n_attrs).collect();
        let choose = |out: &mut Vec<usize>| {
            if m == n_attrs {
                out.extend(0..n_attrs);
                return;
            }
            // partial Fisher-Yates
            for i in 0..m {
                let j = rng.gen_range(i..n_attrs);
                pool.swap(i, j);
            }
            out.extend_from_slice(&pool[..m]);
            out.sort_unstable();
        };
        trees.push(
            Grower {
                data,
                params: tree_params,
                choose_attrs: choose,
                nodes: Vec::new(),
            }
            .grow(items),
        );
    }
    Ok(ForestModel {
        trees,
        params,
        seed,
        n_classes: data.n_classes(),
    })
}

impl ForestModel {
    /// Vote shares of the member trees.
    pub fn votes(&self, values: &[Option<f64>]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict_class(values)] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }

    pub fn predict_class(&self, values: &[Option<f64>]) -> usize {
        argmax(&self.votes(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::train_tree;

    fn toy() -> Dataset {
        let mut d = Dataset::new(&["a", "b"], &["x", "y"]);
        for i in 0..40 {
            let a = i as f64;
            let b = ((i * 7) % 11) as f64;
            d.push(vec![Some(a), Some(b)], usize::from(a + b > 25.0)).unwrap();
        }
        d
    }

    #[test]
    fn degenerate_forest_matches_tree() {
        let d = toy();
        let mut p = ForestParams::new(1, 0, 2);
        p.bootstrap = false;
        p.min_leaf = 2;
        let f = train_forest(&d, p, 5).unwrap();
        let t = train_tree(
            &d,
            TreeParams {
                min_leaf: 2,
                max_depth: 0,
            },
        )
        .unwrap();
        assert_eq!(f.trees[0], t);
    }

    #[test]
    fn seeded_determinism() {
        let d = toy();
        let p = ForestParams::new(7, 4, 1);
        assert_eq!(train_forest(&d, p, 11).unwrap(), train_forest(&d, p, 11).unwrap());
        assert_ne!(train_forest(&d, p, 11).unwrap(), train_forest(&d, p, 12).unwrap());
    }

    #[test]
    fn bad_params() {
        let d = toy();
        assert!(train_forest(&d, ForestParams::new(0, 3, 1), 0).is_err());
        assert!(train_forest(&d, ForestParams::new(3, 3, 3), 0).is_err());
        let empty = Dataset::new(&["a"], &["x"]);
        assert_eq!(
            train_forest(&empty, ForestParams::new(3, 3, 1), 0),
            Err(MlError::EmptyDataset)
        );
    }

    #[test]
    fn majority_vote_with_class_order_ties() {
        let leaf = |c: usize| TreeModel {
            nodes: vec![crate::ml::Node::Leaf {
                dist: if c == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] },
            }],
            n_classes: 2,
            params: TreeParams::default(),
        };
        let mut f = ForestModel {
            trees: vec![leaf(0), leaf(0), leaf(1)],
            params: ForestParams::new(3, 0, 1),
            seed: 0,
            n_classes: 2,
        };
        assert_eq!(f.predict_class(&[]), 0);
        f.trees = vec![leaf(1), leaf(0)];
        assert_eq!(f.votes(&[]), vec![0.5, 0.5]);
        assert_eq!(f.predict_class(&[]), 0);
    }
}
