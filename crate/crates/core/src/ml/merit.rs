use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{entropy, stratified_folds, Dataset};

/// Average information gain per attribute, highest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritReport {
    pub scores: Vec<(String, f64)>,
}

impl MeritReport {
    pub fn score(&self, attribute: &str) -> Option<f64> {
        self.scores.iter().find(|(a, _)| a == attribute).map(|(_, s)| *s)
    }
}

/// Largest class-entropy reduction achievable by one threshold on `attr`,
/// over the listed instances that have a value for it. Missing values are
/// dropped and the remaining weights renormalized.
pub fn best_threshold_gain(data: &Dataset, indices: &[usize], attr: usize) -> f64 {
    let n_classes = data.n_classes();
    let mut known: Vec<(f64, usize, f64)> = indices
        .iter()
        .filter_map(|&i| {
            let inst = &data.instances[i];
            inst.values[attr].map(|v| (v, inst.label, inst.weight))
        })
        .collect();
    if known.is_empty() {
        return 0.0;
    }
    known.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut right = vec![0.0; n_classes];
    for &(_, l, w) in &known {
        right[l] += w;
    }
    let total: f64 = right.iter().sum();
    let base = entropy(&right);
    let mut left = vec![0.0; n_classes];
    let mut left_weight = 0.0;
    let mut best_info = base;
    for i in 0..known.len() - 1 {
        let (v, l, w) = known[i];
        left[l] += w;
        right[l] -= w;
        left_weight += w;
        if v == known[i + 1].0 {
            continue;
        }
        let right_weight = total - left_weight;
        let info = (left_weight * entropy(&left) + right_weight * entropy(&right)) / total;
        if info < best_info {
            best_info = info;
        }
    }
    (base - best_info).max(0.0)
}

/// Merit of every attribute averaged over the training portions of a
/// stratified k-fold split.
pub fn info_gain_merit(data: &Dataset, k: usize, seed: u64) -> MeritReport {
    let n_attrs = data.n_attributes();
    let mut sums = vec![0.0; n_attrs];
    let k = k.min(data.len());
    let portions: Vec<Vec<usize>> = if k < 2 {
        vec![(0..data.len()).collect()]
    } else {
        let folds = stratified_folds(data, k, seed);
        (0..k)
            .map(|f| (0..data.len()).filter(|i| folds[*i] != f).collect())
            .collect()
    };
    for indices in &portions {
        for (attr, sum) in sums.iter_mut().enumerate() {
            *sum += best_threshold_gain(data, indices, attr);
        }
    }
    let mut scores: Vec<(String, f64)> = data
        .attribute_names
        .iter()
        .cloned()
        .zip(sums.iter().map(|s| s / portions.len() as f64))
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
    MeritReport { scores }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_copy_gets_full_entropy_and_constant_gets_zero() {
        let mut d = Dataset::new(&["copy", "constant"], &["x", "y"]);
        for i in 0..40 {
            d.push(vec![Some((i % 2) as f64), Some(3.0)], i % 2).unwrap();
        }
        let report = info_gain_merit(&d, 10, 0);
        assert!((report.score("copy").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.score("constant").unwrap(), 0.0);
        assert_eq!(report.scores[0].0, "copy");
    }

    #[test]
    fn missing_values_are_excluded() {
        let mut d = Dataset::new(&["a"], &["x", "y"]);
        d.push(vec![Some(0.0)], 0).unwrap();
        d.push(vec![Some(1.0)], 1).unwrap();
        d.push(vec![None], 1).unwrap();
        d.push(vec![None], 1).unwrap();
        // the two known values split perfectly: 1 bit
        assert!((best_threshold_gain(&d, &[0, 1, 2, 3], 0) - 1.0).abs() < 1e-12);
    }
}
