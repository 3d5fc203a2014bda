use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ConfigKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    pub fallback_model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Base URL of an OpenAI-style chat-completions API.
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    2
}

fn default_endpoint() -> String {
    "https://open.bigmodel.cn/api/paas/v4".to_string()
}

fn default_key_env() -> String {
    "COURSEWARE_API_KEY".to_string()
}

impl ModelConfig {
    pub fn validate(&self, key: ConfigKey) -> Result<(), ConfigError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError::Invalid(format!(
                "{}: temperature {} outside [0, 2]",
                key.as_str(),
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ConfigError::Invalid(format!(
                "{}: max_output_tokens must be positive",
                key.as_str()
            )));
        }
        if self.model_id.trim().is_empty() {
            return Err(ConfigError::Invalid(format!(
                "{}: empty model_id",
                key.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub text_generation: ModelConfig,
    pub multimodal_analysis: ModelConfig,
    /// Further endpoints, listed but not used by the retry ladder.
    #[serde(default)]
    pub extra_fallback_endpoints: Vec<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            text_generation: ModelConfig {
                model_id: "glm-4.7".into(),
                fallback_model_id: "glm-4.6".into(),
                temperature: 0.3,
                max_output_tokens: 8192,
                timeout_secs: default_timeout(),
                max_retries: default_retries(),
                endpoint: default_endpoint(),
                api_key_env: default_key_env(),
            },
            multimodal_analysis: ModelConfig {
                model_id: "glm-4.6v".into(),
                fallback_model_id: "glm-4.5v".into(),
                temperature: 0.2,
                max_output_tokens: 4096,
                timeout_secs: default_timeout(),
                max_retries: default_retries(),
                endpoint: default_endpoint(),
                api_key_env: default_key_env(),
            },
            extra_fallback_endpoints: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl GatewayConfig {
    pub fn for_key(&self, key: ConfigKey) -> &ModelConfig {
        match key {
            ConfigKey::TextGeneration => &self.text_generation,
            ConfigKey::MultiModalAnalysis => &self.multimodal_analysis,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.text_generation.validate(ConfigKey::TextGeneration)?;
        self.multimodal_analysis
            .validate(ConfigKey::MultiModalAnalysis)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `COURSEWARE_*` overrides from `lookup` (normally the process
    /// environment): `TEXT_MODEL`, `TEXT_FALLBACK_MODEL`, `VISION_MODEL`,
    /// `VISION_FALLBACK_MODEL`, `ENDPOINT`, `TIMEOUT_SECS`, `MAX_RETRIES`.
    pub fn apply_overrides(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        let get =
            |name: &str| lookup(&format!("COURSEWARE_{name}")).filter(|v| !v.trim().is_empty());
        if let Some(v) = get("TEXT_MODEL") {
            self.text_generation.model_id = v;
        }
        if let Some(v) = get("TEXT_FALLBACK_MODEL") {
            self.text_generation.fallback_model_id = v;
        }
        if let Some(v) = get("VISION_MODEL") {
            self.multimodal_analysis.model_id = v;
        }
        if let Some(v) = get("VISION_FALLBACK_MODEL") {
            self.multimodal_analysis.fallback_model_id = v;
        }
        if let Some(v) = get("ENDPOINT") {
            self.text_generation.endpoint = v.clone();
            self.multimodal_analysis.endpoint = v;
        }
        if let Some(v) = get("TIMEOUT_SECS") {
            let secs = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("COURSEWARE_TIMEOUT_SECS={v}")))?;
            self.text_generation.timeout_secs = secs;
            self.multimodal_analysis.timeout_secs = secs;
        }
        if let Some(v) = get("MAX_RETRIES") {
            let n = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("COURSEWARE_MAX_RETRIES={v}")))?;
            self.text_generation.max_retries = n;
            self.multimodal_analysis.max_retries = n;
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_model_parameters() {
        let c = GatewayConfig::default();
        assert_eq!(
            (
                c.text_generation.temperature,
                c.text_generation.max_output_tokens
            ),
            (0.3, 8192)
        );
        assert_eq!(
            (
                c.multimodal_analysis.temperature,
                c.multimodal_analysis.max_output_tokens
            ),
            (0.2, 4096)
        );
        assert_eq!(c.text_generation.timeout_secs, 120);
        assert_eq!(c.text_generation.max_retries, 2);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_temperature() {
        let mut c = GatewayConfig::default();
        c.text_generation.temperature = 2.5;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        let mut c = GatewayConfig::default();
        c.multimodal_analysis.max_output_tokens = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = GatewayConfig::default();
        c.apply_overrides(|k| match k {
            "COURSEWARE_TEXT_MODEL" => Some("other-model".into()),
            "COURSEWARE_MAX_RETRIES" => Some("1".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.text_generation.model_id, "other-model");
        assert_eq!(c.multimodal_analysis.max_retries, 1);
        assert!(c
            .apply_overrides(|k| (k == "COURSEWARE_TIMEOUT_SECS").then(|| "soon".into()))
            .is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = GatewayConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(GatewayConfig::from_toml(&text).unwrap(), c);
    }
}
