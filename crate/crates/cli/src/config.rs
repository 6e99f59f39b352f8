//! Pipeline configuration, read from TOML or JSON.
//!
//! Every field has a default, so an empty file (or no file) is a valid config.
//! Command-line flags override the values here.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sqa_forge_core::augment::DirectionalLexicon;
use sqa_forge_core::metrics::MatchPolicy;
use sqa_forge_core::reweight::ReweightConfig;

pub const DEFAULT_API_KEY_ENV: &str = "SQA_FORGE_LLM_API_KEY";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub scenes: Vec<PathBuf>,
    pub qa: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub decision_log: Option<PathBuf>,
    pub qualification: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub enabled: bool,
    /// Chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub retries: u32,
    pub temperature: f64,
    /// Optional file replacing the built-in rotation prompt template.
    pub template: Option<PathBuf>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            endpoint: String::new(),
            model: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 60,
            max_in_flight: 4,
            retries: 2,
            temperature: 0.0,
            template: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSettings {
    pub host: String,
    pub port: u16,
    /// Distinct reviewers needed before an item leaves Pending.
    pub required_reviews: usize,
}

impl Default for ReviewSettings {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".to_string(),
            port: 8080,
            required_reviews: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    /// `em` or `em_r`.
    pub matcher: String,
    pub seed: u64,
    pub reweight: ReweightConfig,
    pub llm: LlmSettings,
    pub review: ReviewSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            matcher: "em_r".to_string(),
            seed: 0,
            reweight: ReweightConfig::default(),
            llm: LlmSettings::default(),
            review: ReviewSettings::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: Config = if json {
            serde_json::from_str(text).context("parsing JSON config")?
        } else {
            toml::from_str(text).context("parsing TOML config")?
        };
        cfg.reweight.validate().context("invalid [reweight] section")?;
        if MatchPolicy::parse(&cfg.matcher).is_none() {
            bail!("unknown matcher '{}' (expected em or em_r)", cfg.matcher);
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text, path.extension().is_some_and(|e| e == "json"))
    }

    pub fn matcher(&self, flag: Option<&str>) -> Result<MatchPolicy> {
        let name = flag.unwrap_or(&self.matcher);
        MatchPolicy::parse(name).with_context(|| format!("unknown matcher '{name}' (expected em or em_r)"))
    }

    pub fn lexicon(&self, flag: Option<&Path>) -> Result<DirectionalLexicon> {
        let Some(path) = flag.or(self.paths.lexicon.as_deref()) else {
            return Ok(DirectionalLexicon::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading lexicon {}", path.display()))?;
        let lexicon = if path.extension().is_some_and(|e| e == "json") {
            DirectionalLexicon::from_json(&text)
        } else {
            DirectionalLexicon::from_toml(&text)
        };
        lexicon.with_context(|| format!("loading lexicon {}", path.display()))
    }
}
