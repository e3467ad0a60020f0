//! Versioned JSON model files and config hashing.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "ids-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a model file (format {0:?})")]
    Format(String),
    #[error("unsupported model file version {found} (this build reads {MODEL_VERSION})")]
    Version { found: u32 },
    #[error("model file holds a {found:?} model, expected {expected:?}")]
    Architecture { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile<T> {
    pub format: String,
    pub version: u32,
    pub architecture: String,
    /// Hash of the run config the model was trained under.
    pub config_hash: String,
    pub model: T,
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    architecture: String,
}

impl<T: Serialize> ModelFile<T> {
    pub fn new(architecture: &str, config_hash: &str, model: T) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            architecture: architecture.into(),
            config_hash: config_hash.into(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>, ModelIoError> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

impl<T: DeserializeOwned> ModelFile<T> {
    /// Parses a model file, checking format, version and architecture before
    /// the model body.
    pub fn from_json(bytes: &[u8], architecture: &str) -> Result<Self, ModelIoError> {
        let env: Envelope = serde_json::from_slice(bytes)?;
        if env.format != MODEL_FORMAT {
            return Err(ModelIoError::Format(env.format));
        }
        if env.version != MODEL_VERSION {
            return Err(ModelIoError::Version { found: env.version });
        }
        if env.architecture != architecture {
            return Err(ModelIoError::Architecture {
                expected: architecture.into(),
                found: env.architecture,
            });
        }
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the compact JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String, ModelIoError> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm_ae::{LstmAeConfig, LstmAeModel};
    use crate::mscnn::{MscnnConfig, MscnnModel};

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn models_round_trip_bit_exact() {
        let m = MscnnModel::build(MscnnConfig::for_features(17), 3).unwrap();
        let f = ModelFile::new("mscnn", "h", m);
        let back = ModelFile::<MscnnModel>::from_json(&f.to_json().unwrap(), "mscnn").unwrap();
        assert_eq!(back, f);
        let l = LstmAeModel::build(LstmAeConfig::default(), 5, 4).unwrap();
        let f = ModelFile::new("lstm-ae", "h", l);
        assert_eq!(ModelFile::<LstmAeModel>::from_json(&f.to_json().unwrap(), "lstm-ae").unwrap(), f);
    }

    #[test]
    fn envelope_checks() {
        let f = ModelFile::new("mscnn", "h", 1u8);
        let bytes = f.to_json().unwrap();
        assert!(matches!(
            ModelFile::<u8>::from_json(&bytes, "lstm-ae"),
            Err(ModelIoError::Architecture { .. })
        ));
        let v2 = String::from_utf8(bytes).unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(ModelFile::<u8>::from_json(v2.as_bytes(), "mscnn"), Err(ModelIoError::Version { found: 2 })));
        let other = br#"{"format":"x","version":1,"architecture":"mscnn"}"#;
        assert!(matches!(ModelFile::<u8>::from_json(other, "mscnn"), Err(ModelIoError::Format(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = config_hash(&LstmAeConfig::default()).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&LstmAeConfig::default()).unwrap());
        assert_ne!(a, config_hash(&LstmAeConfig { window: 9, ..Default::default() }).unwrap());
    }
}
