use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GcnModel, GnnError, TrainConfig};
use crate::graph::EntityVocabulary;

pub const CHECKPOINT_FORMAT: &str = "stepgraph-checkpoint/1";

/// Self-describing JSON model file: format tag, vocabulary, architecture
/// and every parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub vocabulary: EntityVocabulary,
    pub model: GcnModel,
    pub train_config: TrainConfig,
    /// Seed of the dataset split the model was trained on.
    pub split_seed: u64,
    pub class_names: Vec<String>,
}

impl Checkpoint {
    pub fn new(
        vocabulary: EntityVocabulary,
        model: GcnModel,
        train_config: TrainConfig,
        split_seed: u64,
        class_names: Vec<String>,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            vocabulary,
            model,
            train_config,
            split_seed,
            class_names,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GnnError> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => {
                return Err(GnnError::UnsupportedFormat(
                    other.unwrap_or("<missing>").to_string(),
                ))
            }
        }
        let ckpt: Self = serde_json::from_value(value)?;
        ckpt.model.config.validate()?;
        if ckpt.model.config.input_dim != ckpt.vocabulary.len() {
            return Err(GnnError::DimensionMismatch(format!(
                "model input width {} but vocabulary has {} tokens",
                ckpt.model.config.input_dim,
                ckpt.vocabulary.len()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GnnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GnnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
