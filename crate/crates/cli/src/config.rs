//! Application configuration: JSON file, defaults, and environment
//! overrides (`CASPER_<UPPER_FIELD>` for top-level fields).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use casper_core::augmentation::AugmentationConfig;
use casper_core::embedding::{self, BuiltinEmbedderSpec};
use casper_core::evaluation::GuidedPolicy;
use casper_core::generation::{ExternalSpec, Generator, GeneratorSpec, Transport};
use casper_core::retrieval::{Embedder, RetrievalConfig};
use casper_core::scenarios::LabelMapping;

use crate::error::CliError;

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8855";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
}

/// Embedder selection for index construction and query embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Builtin {
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default = "default_hash_seed")]
        seed: u64,
        #[serde(default = "default_char_ngram")]
        char_ngram: usize,
    },
    Precomputed { path: PathBuf },
}

fn default_dimension() -> usize {
    embedding::DEFAULT_DIMENSION
}

fn default_hash_seed() -> u64 {
    embedding::DEFAULT_HASH_SEED
}

fn default_char_ngram() -> usize {
    embedding::DEFAULT_CHAR_NGRAM
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Builtin {
            dimension: default_dimension(),
            seed: default_hash_seed(),
            char_ngram: default_char_ngram(),
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> Result<Embedder<f64>, CliError> {
        match self {
            EmbedderConfig::Builtin {
                dimension,
                seed,
                char_ngram,
            } => Ok(Embedder::Builtin(BuiltinEmbedderSpec {
                dimension: *dimension,
                seed: *seed,
                char_ngram: *char_ngram,
            })),
            EmbedderConfig::Precomputed { path } => {
                let table = embedding::load_precomputed(path).map_err(CliError::data)?;
                Embedder::precomputed(table).map_err(CliError::data)
            }
        }
    }
}

/// Generator selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Echo,
    TemplateCopy,
    Lookup {
        path: PathBuf,
    },
    ExternalHttp {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
    },
    ExternalProcess {
        command: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
    },
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_max_in_flight() -> usize {
    4
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Echo
    }
}

impl GeneratorConfig {
    /// Parse the CLI shorthand: `echo`, `template-copy`, `lookup:PATH`,
    /// `http:URL`, or `process:COMMAND LINE`.
    pub fn from_cli(spec: &str, timeout_ms: u64, max_in_flight: usize) -> Result<Self, CliError> {
        if spec == "echo" {
            return Ok(GeneratorConfig::Echo);
        }
        if spec == "template-copy" {
            return Ok(GeneratorConfig::TemplateCopy);
        }
        if let Some(path) = spec.strip_prefix("lookup:") {
            return Ok(GeneratorConfig::Lookup { path: path.into() });
        }
        if let Some(url) = spec.strip_prefix("http:") {
            let url = if url.starts_with("//") {
                format!("http:{url}")
            } else {
                url.to_string()
            };
            return Ok(GeneratorConfig::ExternalHttp {
                url,
                timeout_ms,
                max_in_flight,
            });
        }
        if let Some(command_line) = spec.strip_prefix("process:") {
            let command: Vec<String> =
                command_line.split_whitespace().map(String::from).collect();
            if command.is_empty() {
                return Err(CliError::usage("process: requires a command"));
            }
            return Ok(GeneratorConfig::ExternalProcess {
                command,
                timeout_ms,
                max_in_flight,
            });
        }
        Err(CliError::usage(format!(
            "unknown generator {spec:?} (expected echo, template-copy, lookup:PATH, http:URL, or process:CMD)"
        )))
    }

    pub fn build(&self) -> Result<Generator, CliError> {
        let spec = match self {
            GeneratorConfig::Echo => GeneratorSpec::Echo,
            GeneratorConfig::TemplateCopy => GeneratorSpec::TemplateCopy,
            GeneratorConfig::Lookup { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                let table: BTreeMap<String, String> = serde_json::from_str(&text)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                GeneratorSpec::Lookup(table)
            }
            GeneratorConfig::ExternalHttp {
                url,
                timeout_ms,
                max_in_flight,
            } => GeneratorSpec::External(ExternalSpec {
                transport: Transport::Http { url: url.clone() },
                timeout_ms: *timeout_ms,
                max_in_flight: *max_in_flight,
            }),
            GeneratorConfig::ExternalProcess {
                command,
                timeout_ms,
                max_in_flight,
            } => GeneratorSpec::External(ExternalSpec {
                transport: Transport::Subprocess {
                    command: command.clone(),
                },
                timeout_ms: *timeout_ms,
                max_in_flight: *max_in_flight,
            }),
        };
        Generator::from_spec(spec).map_err(CliError::from)
    }
}

/// Guided-tag policy selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuidedPolicyConfig {
    Never,
    Always,
    Watch { mapping: PathBuf },
}

impl Default for GuidedPolicyConfig {
    fn default() -> Self {
        GuidedPolicyConfig::Never
    }
}

impl GuidedPolicyConfig {
    /// Parse the CLI shorthand: `never`, `always`, or `watch:PATH`.
    pub fn from_cli(value: &str) -> Result<Self, CliError> {
        match value {
            "never" => Ok(GuidedPolicyConfig::Never),
            "always" => Ok(GuidedPolicyConfig::Always),
            other => match other.strip_prefix("watch:") {
                Some(path) => Ok(GuidedPolicyConfig::Watch {
                    mapping: path.into(),
                }),
                None => Err(CliError::usage(format!(
                    "unknown guided policy {value:?} (expected never, always, or watch:PATH)"
                ))),
            },
        }
    }

    pub fn build(&self) -> Result<GuidedPolicy, CliError> {
        Ok(match self {
            GuidedPolicyConfig::Never => GuidedPolicy::Never,
            GuidedPolicyConfig::Always => GuidedPolicy::Always,
            GuidedPolicyConfig::Watch { mapping } => {
                let mapping = LabelMapping::load(mapping).map_err(CliError::data)?;
                GuidedPolicy::WatchLabels(mapping.watch_labels())
            }
        })
    }
}

/// Top-level application config; mirrors the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub dataset: DatasetPaths,
    pub embedder: EmbedderConfig,
    pub retrieval: RetrievalConfig,
    pub augmentation: AugmentationConfig,
    pub generator: GeneratorConfig,
    pub guided_policy: GuidedPolicyConfig,
    pub index_snapshot: Option<PathBuf>,
    pub bind_addr: String,
    pub log_level: String,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetPaths::default(),
            embedder: EmbedderConfig::default(),
            retrieval: RetrievalConfig::default(),
            augmentation: AugmentationConfig::default(),
            generator: GeneratorConfig::default(),
            guided_policy: GuidedPolicyConfig::default(),
            index_snapshot: None,
            bind_addr: DEFAULT_BIND_ADDR.to_string(),
            log_level: "info".to_string(),
        }
    }
}

impl AppConfig {
    /// Load from a JSON file, then apply environment overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut config: AppConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        config.apply_env_overrides(|name| std::env::var(name).ok());
        Ok(config)
    }

    /// Override top-level scalar fields from `CASPER_*` variables.
    pub fn apply_env_overrides(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(addr) = get("CASPER_BIND_ADDR") {
            self.bind_addr = addr;
        }
        if let Some(level) = get("CASPER_LOG_LEVEL") {
            self.log_level = level;
        }
        if let Some(path) = get("CASPER_INDEX_SNAPSHOT") {
            self.index_snapshot = Some(path.into());
        }
    }

    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Check that every referenced path exists.
    pub fn validate_paths(&self) -> Result<(), CliError> {
        let mut check = |path: Option<&PathBuf>, what: &str| -> Result<(), CliError> {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(CliError::data(format!(
                        "{what} path {} does not exist",
                        path.display()
                    )));
                }
            }
            Ok(())
        };
        check(self.dataset.train.as_ref(), "dataset.train")?;
        check(self.dataset.dev.as_ref(), "dataset.dev")?;
        check(self.index_snapshot.as_ref(), "index_snapshot")?;
        if let EmbedderConfig::Precomputed { path } = &self.embedder {
            check(Some(path), "embedder.path")?;
        }
        if let GeneratorConfig::Lookup { path } = &self.generator {
            check(Some(path), "generator.path")?;
        }
        if let GuidedPolicyConfig::Watch { mapping } = &self.guided_policy {
            check(Some(mapping), "guided_policy.mapping")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let config = AppConfig {
            index_snapshot: Some("i.snap".into()),
            generator: GeneratorConfig::ExternalHttp {
                url: "http://127.0.0.1:9000/v1/generate".into(),
                timeout_ms: 500,
                max_in_flight: 2,
            },
            ..Default::default()
        };
        let dumped = config.dump();
        let loaded: AppConfig = serde_json::from_str(&dumped).unwrap();
        assert_eq!(loaded, config);
    }

    #[test]
    fn env_overrides_apply() {
        let mut config = AppConfig::default();
        config.apply_env_overrides(|name| match name {
            "CASPER_BIND_ADDR" => Some("0.0.0.0:9999".to_string()),
            "CASPER_LOG_LEVEL" => Some("debug".to_string()),
            "CASPER_INDEX_SNAPSHOT" => Some("other.snap".to_string()),
            _ => None,
        });
        assert_eq!(config.bind_addr, "0.0.0.0:9999");
        assert_eq!(config.log_level, "debug");
        assert_eq!(config.index_snapshot, Some("other.snap".into()));
    }

    #[test]
    fn generator_cli_shorthands() {
        assert_eq!(
            GeneratorConfig::from_cli("echo", 10, 1).unwrap(),
            GeneratorConfig::Echo
        );
        assert!(matches!(
            GeneratorConfig::from_cli("lookup:gold.json", 10, 1).unwrap(),
            GeneratorConfig::Lookup { .. }
        ));
        assert!(matches!(
            GeneratorConfig::from_cli("http://host/path", 10, 1).unwrap(),
            GeneratorConfig::ExternalHttp { .. }
        ));
        assert!(matches!(
            GeneratorConfig::from_cli("process:cat -", 10, 1).unwrap(),
            GeneratorConfig::ExternalProcess { .. }
        ));
        assert!(GeneratorConfig::from_cli("nope", 10, 1).is_err());
    }

    #[test]
    fn guided_policy_shorthands() {
        assert_eq!(
            GuidedPolicyConfig::from_cli("never").unwrap(),
            GuidedPolicyConfig::Never
        );
        assert_eq!(
            GuidedPolicyConfig::from_cli("always").unwrap(),
            GuidedPolicyConfig::Always
        );
        assert!(matches!(
            GuidedPolicyConfig::from_cli("watch:map.tsv").unwrap(),
            GuidedPolicyConfig::Watch { .. }
        ));
        assert!(GuidedPolicyConfig::from_cli("sometimes").is_err());
    }
}
