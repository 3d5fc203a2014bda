//! Application configuration: a TOML file overridden by `COURSEWARE_*`
//! environment variables. Secrets are never read from the file; each model
//! section names the variable that holds its key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::gateway::{ConfigError, Gateway, GatewayConfig};
use crate::pipeline::PipelineConfig;
use crate::service::{
    EditPolicy, Service, ServiceError, SqliteRepository, SystemClock, ANALYSIS_TTL_HOURS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub gateway: GatewayConfig,
    pub store_path: PathBuf,
    pub analysis_cache_ttl_hours: i64,
    pub pipeline: PipelineConfig,
    pub edit: EditPolicy,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            gateway: GatewayConfig::default(),
            store_path: PathBuf::from("courseware.db"),
            analysis_cache_ttl_hours: ANALYSIS_TTL_HOURS,
            pipeline: PipelineConfig::default(),
            edit: EditPolicy::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.analysis_cache_ttl_hours <= 0 {
            return Err(ConfigError::Invalid(
                "analysis_cache_ttl_hours must be positive".into(),
            ));
        }
        self.gateway.validate()
    }

    /// Reads `path` if given (defaults otherwise), then applies overrides.
    pub fn load(
        path: Option<&Path>,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_overrides(lookup)?;
        Ok(config)
    }

    /// `COURSEWARE_STORE_PATH`, `COURSEWARE_CACHE_TTL_HOURS`, plus the
    /// gateway overrides.
    pub fn apply_overrides(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = lookup("COURSEWARE_STORE_PATH").filter(|v| !v.trim().is_empty()) {
            self.store_path = PathBuf::from(v);
        }
        if let Some(v) = lookup("COURSEWARE_CACHE_TTL_HOURS").filter(|v| !v.trim().is_empty()) {
            self.analysis_cache_ttl_hours = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("COURSEWARE_CACHE_TTL_HOURS={v}")))?;
        }
        self.gateway.apply_overrides(&lookup)?;
        self.validate()
    }

    /// A service over the SQLite store at `store_path`.
    pub fn build_service(&self, gateway: Gateway) -> Result<Service, ServiceError> {
        let repo = SqliteRepository::open(&self.store_path)?;
        Ok(Service::new(Arc::new(repo), gateway, Arc::new(SystemClock))
            .with_pipeline_config(self.pipeline)
            .with_edit_policy(self.edit)
            .with_cache_ttl(Duration::hours(self.analysis_cache_ttl_hours)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = AppConfig::from_toml("store_path = \"/tmp/x.db\"\n[edit]\ndiff_attempts = 5\n")
            .unwrap();
        assert_eq!(c.store_path, PathBuf::from("/tmp/x.db"));
        assert_eq!(c.edit.diff_attempts, 5);
        assert_eq!(c.edit.context_radius, 40);
        assert_eq!(c.pipeline, PipelineConfig::default());
        assert_eq!(c.gateway, GatewayConfig::default());
    }

    #[test]
    fn env_overrides_file() {
        let c = AppConfig::load(None, |k| match k {
            "COURSEWARE_STORE_PATH" => Some("/var/cw.db".into()),
            "COURSEWARE_CACHE_TTL_HOURS" => Some("6".into()),
            "COURSEWARE_TEXT_MODEL" => Some("other".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.store_path, PathBuf::from("/var/cw.db"));
        assert_eq!(c.analysis_cache_ttl_hours, 6);
        assert_eq!(c.gateway.text_generation.model_id, "other");
        assert!(
            AppConfig::load(None, |k| (k == "COURSEWARE_CACHE_TTL_HOURS")
                .then(|| "soon".into()))
            .is_err()
        );
    }

    #[test]
    fn shipped_file_parses() {
        let text = include_str!("../config/courseware.toml");
        let c = AppConfig::from_toml(text).unwrap();
        assert_eq!(c.gateway, GatewayConfig::default());
        assert_eq!(c.edit, EditPolicy::default());
    }
}
