//! Run configuration: one JSON document per run. Relative paths resolve
//! against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use ids_core::detector::PipelineConfig;
use ids_core::ingest::DatasetSchema;
use ids_core::model_io::config_hash;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ResultExt};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    /// Keep only the first N training records.
    pub max_train_records: Option<usize>,
    /// Keep only the first N test records.
    pub max_test_records: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub schema: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    /// Where artifacts go; `--out` overrides. Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub ingest: IngestOptions,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

/// A validated config plus everything derived from it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub schema: DatasetSchema,
    pub out: PathBuf,
    pub hash: String,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.config.seed,
            ..self.config.pipeline.clone()
        }
    }
}

/// Reads and validates the config, applying `--seed` and `--out` overrides.
/// Nothing is written.
pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).or_validation(format!("reading config {}", path.display()))?;
    let mut config: RunConfig = serde_json::from_str(&text).or_validation(format!("parsing config {}", path.display()))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config
        .pipeline
        .validate()
        .map_err(|e| CliError::validation(format!("config {}: pipeline.{e}", path.display())))?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    let schema_path = resolve(&config.schema);
    let schema = DatasetSchema::load(&schema_path).or_validation(format!("schema {}", schema_path.display()))?;
    let out = match (out, &config.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => resolve(o),
        (None, None) => return Err(CliError::validation("no output directory: pass --out or set output_dir")),
    };
    let hash = config_hash(&config).or_validation("hashing config")?;
    Ok(Loaded {
        config,
        base_dir,
        schema,
        out,
        hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    const SCHEMA: &str = r#"{"columns": [{"name": "a", "kind": "numeric"}, {"name": "label", "kind": "label"}],
        "label_mapping": {"normal": "normal", "attack": "attack"}}"#;

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "s.json", SCHEMA);
        let cfg = write(
            dir.path(),
            "run.json",
            r#"{"seed": 3, "schema": "s.json", "train": "tr.csv", "test": "/abs/te.csv", "output_dir": "out"}"#,
        );
        let l = load(&cfg, None, None).unwrap();
        assert_eq!(l.resolve(&l.config.train), dir.path().join("tr.csv"));
        assert_eq!(l.resolve(&l.config.test), PathBuf::from("/abs/te.csv"));
        assert_eq!(l.out, dir.path().join("out"));
        assert_eq!(l.pipeline().seed, 3);
    }

    #[test]
    fn hash_ignores_output_dir_but_tracks_seed_and_settings() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "s.json", SCHEMA);
        let base = r#""schema": "s.json", "train": "a", "test": "b""#;
        let a = write(dir.path(), "a.json", &format!(r#"{{"seed": 1, {base}, "output_dir": "x"}}"#));
        let b = write(dir.path(), "b.json", &format!(r#"{{"seed": 1, {base}, "output_dir": "y"}}"#));
        let c = write(
            dir.path(),
            "c.json",
            &format!(r#"{{"seed": 1, {base}, "pipeline": {{"threshold_k": 3.0}}}}"#),
        );
        let ha = load(&a, None, None).unwrap().hash;
        assert_eq!(ha, load(&b, None, None).unwrap().hash);
        assert_ne!(ha, load(&a, Some(2), None).unwrap().hash);
        assert_ne!(ha, load(&c, None, Some(Path::new("o"))).unwrap().hash);
    }

    #[test]
    fn validation_failures() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "s.json", SCHEMA);
        let no_seed = write(dir.path(), "n.json", r#"{"schema": "s.json", "train": "a", "test": "b"}"#);
        assert!(load(&no_seed, None, Some(Path::new("o"))).is_err());
        let missing_schema = write(dir.path(), "m.json", r#"{"seed": 0, "schema": "nope.json", "train": "a", "test": "b"}"#);
        let e = load(&missing_schema, None, Some(Path::new("o"))).unwrap_err();
        assert!(e.message.contains("nope.json"));
        let no_out = write(dir.path(), "o.json", r#"{"seed": 0, "schema": "s.json", "train": "a", "test": "b"}"#);
        assert!(load(&no_out, None, None).is_err());
        let bad_k = write(
            dir.path(),
            "k.json",
            r#"{"seed": 0, "schema": "s.json", "train": "a", "test": "b", "pipeline": {"threshold_k": -1}}"#,
        );
        assert!(load(&bad_k, None, Some(Path::new("o"))).is_err());
        let unknown = write(dir.path(), "u.json", r#"{"seed": 0, "schema": "s.json", "train": "a", "test": "b", "bogus": 1}"#);
        assert!(load(&unknown, None, Some(Path::new("o"))).is_err());
    }
}
