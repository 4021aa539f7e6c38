//! JSON checkpoints. Floats are written in shortest round-trip form and
//! parsed exactly, so a save/load cycle reproduces every parameter bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelKind;
use crate::models::ModelParams;

pub const FORMAT: &str = "reviewrank-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    pub dim: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Hash of the split manifest the model was trained on.
    pub split_hash: String,
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub params: ModelParams,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("reading checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path} is not valid: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("checkpoint {path} has format `{format}` version {version}; expected `{FORMAT}` version {VERSION}")]
    Format { path: String, format: String, version: u32 },
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io { path: p.clone(), source })?;
        let ck = Self::from_json(&text).map_err(|source| CheckpointError::Json { path: p.clone(), source })?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(CheckpointError::Format {
                path: p,
                format: ck.format,
                version: ck.version,
            });
        }
        Ok(ck)
    }
}
