//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vidtel_core::ml::TrainedModel;

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "vidtel-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn model_to_string(model: &TrainedModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    serde_json::to_string(&file).expect("models serialize")
}

pub fn model_from_str(text: &str) -> std::result::Result<TrainedModel, String> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.format != MODEL_FORMAT {
        return Err(format!("not a model file (format {:?})", file.format));
    }
    if file.version != MODEL_VERSION {
        return Err(format!("unsupported model version {}", file.version));
    }
    Ok(file.model)
}

pub fn write_model(path: &Path, model: &TrainedModel) -> Result<()> {
    std::fs::write(path, model_to_string(model) + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vidtel_core::ml::{AlgorithmParams, Dataset, ForestParams, MlpParams, TreeParams};

    fn toy() -> Dataset {
        let mut d = Dataset::new(&["x", "y"], &["a", "b"]);
        for i in 0..20 {
            let x = i as f64;
            d.push(
                vec![Some(x), if i % 3 == 0 { None } else { Some(x * 0.5) }],
                usize::from(i >= 10),
            )
            .unwrap();
        }
        d
    }

    #[test]
    fn all_models_round_trip() {
        let d = toy();
        for params in [
            AlgorithmParams::Tree(TreeParams::default()),
            AlgorithmParams::Forest(ForestParams::new(5, 3, 1)),
            AlgorithmParams::Mlp(MlpParams {
                epochs: 5,
                ..MlpParams::default()
            }),
        ] {
            let m = TrainedModel::train(&d, params, 3).unwrap();
            let text = model_to_string(&m);
            let back = model_from_str(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(model_to_string(&back), text);
        }
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(model_from_str("{}").is_err());
        let m = TrainedModel::train(&toy(), AlgorithmParams::Tree(TreeParams::default()), 0).unwrap();
        let text = model_to_string(&m).replace("\"version\":1", "\"version\":9");
        assert!(model_from_str(&text).unwrap_err().contains("version"));
    }
}
