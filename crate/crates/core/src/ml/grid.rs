use alloc::vec::Vec;
use core::fmt;

use super::{cross_validate, AlgorithmParams, ConfusionMatrix, Dataset, ForestParams, MlError, TreeParams};

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub params: AlgorithmParams,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl fmt::Display for GridRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} accuracy={:.4}", self.params, self.accuracy)
    }
}

/// Cross-validates every grid point; rows come back best first, ties in grid
/// order.
pub fn tune_grid(data: &Dataset, grid: &[AlgorithmParams], k: usize, seed: u64) -> Result<Vec<GridRow>, MlError> {
    if grid.is_empty() {
        return Err(MlError::BadParams("empty grid"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for params in grid {
        let cv = cross_validate(data, params, k, seed)?;
        log::debug!("grid {} -> {:.4}", params, cv.accuracy);
        rows.push(GridRow {
            params: *params,
            accuracy: cv.accuracy,
            confusion: cv.confusion,
        });
    }
    rows.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy));
    Ok(rows)
}

/// Depth-major forest grid.
pub fn forest_grid(
    depths: impl IntoIterator<Item = usize>,
    attrs: impl IntoIterator<Item = usize> + Clone,
    n_trees: usize,
) -> Vec<AlgorithmParams> {
    let mut grid = Vec::new();
    for depth in depths {
        for a in attrs.clone() {
            grid.push(AlgorithmParams::Forest(ForestParams::new(n_trees, depth, a)));
        }
    }
    grid
}

pub fn tree_grid(min_leaves: impl IntoIterator<Item = usize>) -> Vec<AlgorithmParams> {
    min_leaves
        .into_iter()
        .map(|m| {
            AlgorithmParams::Tree(TreeParams {
                min_leaf: m,
                max_depth: 0,
            })
        })
        .collect()
}
