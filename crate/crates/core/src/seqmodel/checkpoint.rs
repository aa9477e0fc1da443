//! Versioned JSON checkpoints: config header, featurizer fingerprint, and
//! every named parameter tensor. Serialization is deterministic, so equal
//! models produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::diagram::PatchFeaturizer;
use super::model::{ModelConfig, Param, Parameters, SeqModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    featurizer_weights_sha256: String,
    params: Vec<Param>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed accessing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {message}")]
    Format { path: String, message: String },
    #[error("checkpoint vocab size {found} does not match the vocabulary ({expected})")]
    VocabMismatch { found: usize, expected: usize },
}

pub fn save_checkpoint(model: &SeqModel, path: &Path) -> Result<(), CheckpointError> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config: model.config,
        featurizer_weights_sha256: model.featurizer().weights_hash(),
        params: model.params.entries.clone(),
    };
    let json = serde_json::to_string(&file).expect("checkpoint serializes");
    fs::write(path, json)
        .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

/// Load a checkpoint. When `expected_vocab_size` is given, a mismatch is an
/// error — decoding with the wrong vocabulary would silently garble output.
pub fn load_checkpoint(
    path: &Path,
    expected_vocab_size: Option<usize>,
) -> Result<SeqModel, CheckpointError> {
    let display = path.display().to_string();
    let body = fs::read_to_string(path)
        .map_err(|source| CheckpointError::Io { path: display.clone(), source })?;
    let file: CheckpointFile = serde_json::from_str(&body)
        .map_err(|e| CheckpointError::Format { path: display.clone(), message: e.to_string() })?;
    if file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format {
            path: display,
            message: format!("unsupported version {}", file.version),
        });
    }
    if let Some(expected) = expected_vocab_size {
        if file.config.vocab_size != expected {
            return Err(CheckpointError::VocabMismatch {
                found: file.config.vocab_size,
                expected,
            });
        }
    }
    let template = SeqModel::new(file.config, 0)
        .map_err(|e| CheckpointError::Format { path: display.clone(), message: e.to_string() })?;
    // Shape and name check against a freshly built layout.
    if template.params.entries.len() != file.params.len() {
        return Err(CheckpointError::Format {
            path: display,
            message: format!(
                "parameter count {} does not match architecture ({})",
                file.params.len(),
                template.params.entries.len()
            ),
        });
    }
    for (expected, stored) in template.params.entries.iter().zip(&file.params) {
        if expected.name != stored.name || !expected.tensor.same_shape(&stored.tensor) {
            return Err(CheckpointError::Format {
                path: display,
                message: format!("parameter '{}' has unexpected name or shape", stored.name),
            });
        }
    }
    let featurizer = PatchFeaturizer::from_seed(file.config.featurizer_seed, file.config.d_model);
    if featurizer.weights_hash() != file.featurizer_weights_sha256 {
        return Err(CheckpointError::Format {
            path: display,
            message: "featurizer fingerprint mismatch".into(),
        });
    }
    let mut model = template;
    model.params = Parameters { entries: file.params };
    Ok(model)
}
