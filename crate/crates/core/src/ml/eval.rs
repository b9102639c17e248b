use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AlgorithmParams, Dataset, MlError};

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[String]) -> Self {
        ConfusionMatrix {
            classes: classes.to_vec(),
            counts: vec![vec![0; classes.len()]; classes.len()],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.trace() as f64 / total as f64
    }

    /// Fraction of each true class predicted correctly.
    pub fn recall(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[i] as f64 / n as f64
                }
            })
            .collect()
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "truth\\pred")?;
        for c in &self.classes {
            write!(f, "\t{c}")?;
        }
        writeln!(f)?;
        for (c, row) in self.classes.iter().zip(&self.counts) {
            write!(f, "{c}")?;
            for v in row {
                write!(f, "\t{v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// Out-of-fold prediction for every instance.
    pub predictions: Vec<usize>,
    pub folds: Vec<usize>,
}

impl CvOutcome {
    /// Accuracy restricted to instances accepted by `keep`.
    pub fn accuracy_where(&self, data: &Dataset, keep: impl Fn(usize) -> bool) -> Option<f64> {
        let (mut hit, mut n) = (0usize, 0usize);
        for (i, inst) in data.instances.iter().enumerate() {
            if keep(i) {
                n += 1;
                hit += usize::from(self.predictions[i] == inst.label);
            }
        }
        (n > 0).then(|| hit as f64 / n as f64)
    }
}

/// Fold index per instance. Each class is shuffled and dealt round-robin,
/// continuing from where the previous class stopped, so per-class fold sizes
/// differ by at most one.
pub fn stratified_folds(data: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; data.len()];
    let mut next = 0;
    for class in 0..data.n_classes() {
        let mut members: Vec<usize> = data
            .instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.label == class)
            .map(|(i, _)| i)
            .collect();
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        for idx in members {
            folds[idx] = next % k;
            next += 1;
        }
    }
    folds
}

/// Stratified k-fold cross-validation. Fold `f` trains with seed `seed + f`.
pub fn cross_validate(data: &Dataset, params: &AlgorithmParams, k: usize, seed: u64) -> Result<CvOutcome, MlError> {
    if k < 2 {
        return Err(MlError::BadParams("k must be at least 2"));
    }
    if data.len() < k {
        return Err(MlError::TooFewInstances {
            needed: k,
            got: data.len(),
        });
    }
    let folds = stratified_folds(data, k, seed);
    let mut predictions = vec![0; data.len()];
    let mut confusion = ConfusionMatrix::new(&data.class_names);
    for fold in 0..k {
        let train: Vec<usize> = (0..data.len()).filter(|i| folds[*i] != fold).collect();
        let model = params.fit(&data.subset(&train), seed.wrapping_add(fold as u64))?;
        for (i, inst) in data.instances.iter().enumerate() {
            if folds[i] == fold {
                let p = model.predict_class(&inst.values);
                predictions[i] = p;
                confusion.record(inst.label, p);
            }
        }
    }
    let accuracy = confusion.accuracy();
    Ok(CvOutcome {
        confusion,
        accuracy,
        predictions,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::TreeParams;

    #[test]
    fn folds_are_stratified() {
        let mut d = Dataset::new(&["a"], &["x", "y", "z"]);
        for i in 0..53 {
            d.push(vec![Some(i as f64)], i % 3).unwrap();
        }
        let folds = stratified_folds(&d, 10, 4);
        for class in 0..3 {
            let mut per_fold = [0usize; 10];
            for (i, inst) in d.instances.iter().enumerate() {
                if inst.label == class {
                    per_fold[folds[i]] += 1;
                }
            }
            let max = per_fold.iter().max().unwrap();
            let min = per_fold.iter().min().unwrap();
            assert!(max - min <= 1, "{per_fold:?}");
        }
    }

    #[test]
    fn label_leak_gives_perfect_accuracy() {
        let mut d = Dataset::new(&["leak", "noise"], &["x", "y"]);
        for i in 0..60 {
            let label = (i * 7 % 5) % 2;
            d.push(vec![Some(label as f64), Some((i % 13) as f64)], label).unwrap();
        }
        let out = cross_validate(
            &d,
            &AlgorithmParams::Tree(TreeParams {
                min_leaf: 1,
                max_depth: 0,
            }),
            10,
            1,
        )
        .unwrap();
        assert_eq!(out.accuracy, 1.0);
        assert_eq!(out.accuracy, out.confusion.trace() as f64 / d.len() as f64);
    }

    #[test]
    fn too_few_instances() {
        let mut d = Dataset::new(&["a"], &["x"]);
        d.push(vec![Some(1.0)], 0).unwrap();
        assert_eq!(
            cross_validate(&d, &AlgorithmParams::Tree(TreeParams::default()), 10, 0),
            Err(MlError::TooFewInstances { needed: 10, got: 1 })
        );
    }
}
