use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use regex::Regex;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tod_core::corpus::{CitationRules, MetadataRules, SplitterConfig};
use tod_core::evaluation::SplitConfig;
use tod_core::extraction::{FeatureDefinition, StepMode, PUNITIVE_FEATURE_ID};
use tod_core::gateway::{
    Gateway, GatewayMode, HttpTransport, ModelSettings, RetryPolicy, DEFAULT_API_KEY_VAR, DEFAULT_BASE_URL,
};
use tod_core::prompts::PromptSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub fixtures: Option<PathBuf>,
    pub base_url: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub requests_per_second: Option<f64>,
    pub max_attempts: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Live,
            fixtures: None,
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key_env: DEFAULT_API_KEY_VAR.to_string(),
            requests_per_second: None,
            max_attempts: RetryPolicy::default().max_attempts,
        }
    }
}

/// Optional TOML files overriding the built-in ingestion rules.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleFiles {
    pub splitter: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub citations: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelSettings,
    pub gateway: GatewayConfig,
    pub prompts_dir: Option<PathBuf>,
    pub rules: RuleFiles,
    pub feature: String,
    pub split: SplitConfig,
    /// Probability of a positive label for the random baseline.
    pub random_p: f64,
    pub step_mode: StepMode,
    pub output_dir: PathBuf,
    /// Worker threads; unset uses one per core.
    pub parallelism: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: ModelSettings::default(),
            gateway: GatewayConfig::default(),
            prompts_dir: None,
            rules: RuleFiles::default(),
            feature: PUNITIVE_FEATURE_ID.to_string(),
            split: SplitConfig::default(),
            random_p: 0.4,
            step_mode: StepMode::default(),
            output_dir: PathBuf::from("out"),
            parallelism: None,
        }
    }
}

/// Replaces `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate(text: &str) -> Result<String> {
    let var = Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid pattern");
    let mut missing = Vec::new();
    let out = var.replace_all(text, |c: &regex::Captures| {
        std::env::var(&c[1]).unwrap_or_else(|_| {
            missing.push(c[1].to_string());
            String::new()
        })
    });
    if !missing.is_empty() {
        bail!("config references unset environment variable(s): {}", missing.join(", "));
    }
    Ok(out.into_owned())
}

impl PipelineConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: Self = toml::from_str(&interpolate(&text)?).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.output_dir);
        for p in [
            &mut config.gateway.fixtures,
            &mut config.prompts_dir,
            &mut config.rules.splitter,
            &mut config.rules.metadata,
            &mut config.rules.citations,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature != PUNITIVE_FEATURE_ID {
            bail!("unknown feature {:?}; only {PUNITIVE_FEATURE_ID:?} is defined", self.feature);
        }
        if !(0.0..=1.0).contains(&self.random_p) {
            bail!("random_p must lie in [0, 1], got {}", self.random_p);
        }
        if !(0.0..=2.0).contains(&self.model.temperature) {
            bail!("temperature must lie in [0, 2], got {}", self.model.temperature);
        }
        for (what, path) in [
            ("prompts_dir", &self.prompts_dir),
            ("rules.splitter", &self.rules.splitter),
            ("rules.metadata", &self.rules.metadata),
            ("rules.citations", &self.rules.citations),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{what} {} does not exist", p.display());
                }
            }
        }
        match (self.gateway.mode, &self.gateway.fixtures) {
            (Mode::Record | Mode::Replay, None) => bail!("{:?} mode needs a fixture path", self.gateway.mode),
            (Mode::Replay, Some(p)) if !p.exists() => bail!("fixture file {} does not exist", p.display()),
            _ => {}
        }
        Ok(())
    }

    pub fn prompts(&self) -> Result<PromptSet> {
        Ok(match &self.prompts_dir {
            Some(dir) => PromptSet::with_overrides(dir)?,
            None => PromptSet::default(),
        })
    }

    pub fn feature(&self) -> FeatureDefinition {
        FeatureDefinition::punitive_component()
    }

    pub fn splitter(&self) -> Result<SplitterConfig> {
        load_rules(&self.rules.splitter)
    }

    pub fn metadata_rules(&self) -> Result<MetadataRules> {
        load_rules(&self.rules.metadata)
    }

    pub fn citation_rules(&self) -> Result<CitationRules> {
        load_rules(&self.rules.citations)
    }

    pub fn gateway(&self) -> Result<Gateway> {
        let g = &self.gateway;
        let transport = || -> Result<Arc<HttpTransport>> { Ok(Arc::new(HttpTransport::from_env(&g.base_url, &g.api_key_env)?)) };
        let fixtures = || g.fixtures.clone().expect("validated");
        let mut builder = match g.mode {
            Mode::Live => Gateway::builder(GatewayMode::Live).transport(transport()?),
            Mode::Record => Gateway::builder(GatewayMode::Record(fixtures())).transport(transport()?),
            Mode::Replay => Gateway::builder(GatewayMode::Replay(fixtures())),
        };
        builder = builder.retry(RetryPolicy {
            max_attempts: g.max_attempts.max(1),
            ..RetryPolicy::default()
        });
        if let Some(rps) = g.requests_per_second {
            builder = builder.requests_per_second(rps);
        }
        Ok(builder.build()?)
    }
}

fn load_rules<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}
