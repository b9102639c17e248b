use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{
    argmax, train_forest, train_mlp, train_tree, Dataset, ForestModel, ForestParams, MlError, MlpModel, MlpParams,
    TreeModel, TreeParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tree,
    Forest,
    Mlp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tree => "tree",
            Algorithm::Forest => "forest",
            Algorithm::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum AlgorithmParams {
    Tree(TreeParams),
    Forest(ForestParams),
    Mlp(MlpParams),
}

impl AlgorithmParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            AlgorithmParams::Tree(_) => Algorithm::Tree,
            AlgorithmParams::Forest(_) => Algorithm::Forest,
            AlgorithmParams::Mlp(_) => Algorithm::Mlp,
        }
    }

    pub fn fit(&self, data: &Dataset, seed: u64) -> Result<Model, MlError> {
        Ok(match self {
            AlgorithmParams::Tree(p) => Model::Tree(train_tree(data, *p)?),
            AlgorithmParams::Forest(p) => Model::Forest(train_forest(data, *p, seed)?),
            AlgorithmParams::Mlp(p) => Model::Mlp(train_mlp(data, *p, seed)?),
        })
    }

    /// Identifier operating point: 100 trees, depth 9, one attribute per split.
    pub fn default_identifier() -> Self {
        AlgorithmParams::Forest(ForestParams::new(100, 9, 1))
    }

    /// Resolution operating point: 100 trees, depth 5, three attributes per split.
    pub fn default_resolution() -> Self {
        AlgorithmParams::Forest(ForestParams::new(100, 5, 3))
    }
}

/// `key=value` pairs, comma separated, e.g. `depth=9,attrs=1,trees=100`.
impl fmt::Display for AlgorithmParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmParams::Tree(p) => write!(f, "min_leaf={},depth={}", p.min_leaf, p.max_depth),
            AlgorithmParams::Forest(p) => write!(
                f,
                "depth={},attrs={},trees={},min_leaf={},bootstrap={}",
                p.max_depth, p.attrs_per_split, p.n_trees, p.min_leaf, p.bootstrap
            ),
            AlgorithmParams::Mlp(p) => write!(
                f,
                "hidden={},epochs={},lr={}",
                p.hidden_units, p.epochs, p.learning_rate
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f64>,
}

impl Model {
    pub fn scores(&self, values: &[Option<f64>]) -> Vec<f64> {
        match self {
            Model::Tree(t) => t.distribution(values),
            Model::Forest(f) => f.votes(values),
            Model::Mlp(m) => m.probabilities(values),
        }
    }

    pub fn predict(&self, values: &[Option<f64>]) -> Prediction {
        let scores = self.scores(values);
        Prediction {
            class: argmax(&scores),
            scores,
        }
    }

    pub fn predict_class(&self, values: &[Option<f64>]) -> usize {
        self.predict(values).class
    }
}

/// A fitted model together with the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub attribute_names: Vec<String>,
    pub class_names: Vec<String>,
    pub params: AlgorithmParams,
    pub seed: u64,
    pub model: Model,
}

impl TrainedModel {
    pub fn train(data: &Dataset, params: AlgorithmParams, seed: u64) -> Result<TrainedModel, MlError> {
        Ok(TrainedModel {
            attribute_names: data.attribute_names.clone(),
            class_names: data.class_names.clone(),
            params,
            seed,
            model: params.fit(data, seed)?,
        })
    }

    pub fn predict(&self, values: &[Option<f64>]) -> Prediction {
        self.model.predict(values)
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.class_names[class]
    }

    pub fn describe(&self) -> String {
        format!("{} {}", self.params.algorithm().name(), self.params)
    }
}
