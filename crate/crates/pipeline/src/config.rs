//! Layered runtime configuration: built-in defaults, then a TOML file, then
//! `CTPHISH_*` environment variables, then command-line flags. The file
//! schema is strict; unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctlog::{LogSource, RetryPolicy};
use crate::intel::Source;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub workers: usize,
    pub chunk_size: u64,
    pub gap: u64,
    pub poll_interval_secs: u64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub store_dir: PathBuf,
    pub logs: Vec<LogConfig>,
    pub feeds: Vec<FeedConfig>,
    pub filters: FilterPaths,
    pub retry: RetryConfig,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            workers: 4,
            chunk_size: 256,
            gap: 0,
            poll_interval_secs: 10,
            threshold: 0.5,
            model_path: None,
            store_dir: PathBuf::from("store"),
            logs: Vec::new(),
            feeds: Vec::new(),
            filters: FilterPaths::default(),
            retry: RetryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogConfig {
    pub name: String,
    pub base_url: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope_year: Option<i32>,
}

impl LogConfig {
    pub fn to_source(&self) -> LogSource {
        LogSource {
            name: self.name.clone(),
            base_url: self.base_url.clone(),
            scope_year: self.scope_year,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedConfig {
    pub source: Source,
    /// URL or local path handed to ingest-feeds.
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_mins: Option<u64>,
}

impl FeedConfig {
    pub fn interval(&self) -> Duration {
        let mins = self.interval_mins.unwrap_or(match self.source {
            Source::OpenPhish => 720,
            _ => 60,
        });
        Duration::from_secs(mins * 60)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benign_services: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub popular_domains: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub malicious_domains: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryConfig {
    pub base_ms: u64,
    pub factor: u32,
    pub cap_ms: u64,
    pub max_attempts: u32,
}

impl Default for RetryConfig {
    fn default() -> RetryConfig {
        RetryConfig { base_ms: 1000, factor: 2, cap_ms: 60_000, max_attempts: 8 }
    }
}

impl RetryConfig {
    pub fn to_policy(&self) -> RetryPolicy {
        RetryPolicy {
            base: Duration::from_millis(self.base_ms),
            factor: self.factor,
            cap: Duration::from_millis(self.cap_ms),
            max_attempts: self.max_attempts,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let raw = std::fs::read_to_string(path)?;
        let config: PipelineConfig =
            toml::from_str(&raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn dump(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(ConfigError::Invalid("chunk_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::Invalid(format!(
                "threshold {} outside [0,1]",
                self.threshold
            )));
        }
        let mut names = BTreeSet::new();
        for log in &self.logs {
            if !names.insert(log.name.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate log name {:?}", log.name)));
            }
            log.to_source()
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("log {:?}: {e}", log.name)))?;
        }
        for feed in &self.feeds {
            if feed.interval() < Duration::from_secs(60) {
                return Err(ConfigError::Invalid(format!(
                    "feed {} interval below one minute",
                    feed.source
                )));
            }
        }
        Ok(())
    }

    /// Applies `CTPHISH_*` overrides. The iterator is injectable so tests
    /// never mutate process environment.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix("CTPHISH_") else { continue };
            let parse_err =
                |e: &dyn std::fmt::Display| ConfigError::Invalid(format!("{key}={value}: {e}"));
            match name {
                "WORKERS" => self.workers = value.parse().map_err(|e| parse_err(&e))?,
                "CHUNK_SIZE" => self.chunk_size = value.parse().map_err(|e| parse_err(&e))?,
                "GAP" => self.gap = value.parse().map_err(|e| parse_err(&e))?,
                "POLL_INTERVAL_SECS" => {
                    self.poll_interval_secs = value.parse().map_err(|e| parse_err(&e))?
                }
                "THRESHOLD" => self.threshold = value.parse().map_err(|e| parse_err(&e))?,
                "MODEL_PATH" => self.model_path = Some(PathBuf::from(value)),
                "STORE_DIR" => self.store_dir = PathBuf::from(value),
                _ => {
                    return Err(ConfigError::Invalid(format!("unknown variable {key}")));
                }
            }
        }
        Ok(())
    }

    /// Creates the store layout (cursors live in a subdirectory).
    pub fn ensure_store(&self) -> Result<(), ConfigError> {
        std::fs::create_dir_all(self.cursor_dir())?;
        Ok(())
    }

    pub fn intel_path(&self) -> PathBuf {
        self.store_dir.join("intel.jsonl")
    }

    pub fn results_path(&self) -> PathBuf {
        self.store_dir.join("results.jsonl")
    }

    pub fn cursor_dir(&self) -> PathBuf {
        self.store_dir.join("cursors")
    }

    pub fn sources(&self) -> Vec<LogSource> {
        self.logs.iter().map(LogConfig::to_source).collect()
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_secs(self.poll_interval_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_dump_load_is_fixed_point() {
        let mut config = PipelineConfig::default();
        config.logs.push(LogConfig {
            name: "argon2020".into(),
            base_url: "https://ct.example.org/logs/argon2020".into(),
            scope_year: Some(2020),
        });
        config.feeds.push(FeedConfig {
            source: Source::OpenPhish,
            input: "https://feed.example.org/feed.txt".into(),
            interval_mins: None,
        });
        config.model_path = Some(PathBuf::from("model.json"));
        config.filters.popular_domains = Some(PathBuf::from("top1m.txt"));
        let dumped = config.dump();
        let reloaded: PipelineConfig = toml::from_str(&dumped).unwrap();
        assert_eq!(reloaded, config);
        assert_eq!(reloaded.dump(), dumped);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>("workrs = 2\n").unwrap_err();
        assert!(err.to_string().contains("workrs"));
        assert!(toml::from_str::<PipelineConfig>("[[logs]]\nname = \"a\"\nbase_url = \"https://a\"\ncolor = 3\n").is_err());
    }

    #[test]
    fn validation_rejects_duplicates_and_bad_urls() {
        let mut config = PipelineConfig::default();
        config.logs.push(LogConfig { name: "a".into(), base_url: "https://x".into(), scope_year: None });
        config.logs.push(LogConfig { name: "a".into(), base_url: "https://y".into(), scope_year: None });
        assert!(matches!(config.validate(), Err(ConfigError::Invalid(_))));
        config.logs[1].name = "b".into();
        config.logs[1].base_url = "ftp://y".into();
        assert!(matches!(config.validate(), Err(ConfigError::Invalid(_))));
        config.logs[1].base_url = "https://y".into();
        assert!(config.validate().is_ok());
    }

    #[test]
    fn env_layer_overrides_file_values() {
        let mut config = PipelineConfig::default();
        config
            .apply_env(vec![
                ("CTPHISH_WORKERS".to_string(), "9".to_string()),
                ("CTPHISH_THRESHOLD".to_string(), "0.25".to_string()),
                ("HOME".to_string(), "/root".to_string()),
            ])
            .unwrap();
        assert_eq!(config.workers, 9);
        assert_eq!(config.threshold, 0.25);
        let err = config
            .apply_env(vec![("CTPHISH_WRKRS".to_string(), "9".to_string())])
            .unwrap_err();
        assert!(err.to_string().contains("CTPHISH_WRKRS"));
    }

    #[test]
    fn feed_intervals_have_source_defaults_and_floor() {
        let feed = FeedConfig { source: Source::OpenPhish, input: "f".into(), interval_mins: None };
        assert_eq!(feed.interval(), Duration::from_secs(12 * 3600));
        let feed = FeedConfig { source: Source::PhishTank, input: "f".into(), interval_mins: None };
        assert_eq!(feed.interval(), Duration::from_secs(3600));
        let mut config = PipelineConfig::default();
        config.feeds.push(FeedConfig {
            source: Source::PhishTank,
            input: "f".into(),
            interval_mins: Some(0),
        });
        assert!(config.validate().is_err());
    }
}
