//! Pipeline configuration file.
//!
//! TOML, kebab-case keys. `${NAME}` anywhere in the file is replaced by the
//! environment variable `NAME` before parsing; an unset variable is an
//! error. The config hash recorded in graph manifests is the SHA-256 of the
//! file text before interpolation, so secrets never reach the hash input.
//!
//! ```toml
//! embedder = "clip"
//! extractor = "llm"
//! answerer = "llm"             # optional, defaults to extractor
//! keyword-extractor = "llm"    # optional, stopword rule when absent
//! kg-mode = "text-image"       # or "image-only"
//! deterministic = true
//! workers = 4
//! on-error = "skip"            # or "abort"
//!
//! [chain]
//! stages = ["captioner", "detailer"]
//! steps = 1
//!
//! [verifier]
//! tau = 0.25
//!
//! [tau-overrides]
//! crisis = 0.25
//! science = 0.20
//!
//! [retrieval]
//! mode = "hybrid"
//! top-k-triplets = 10
//! top-k-chunks = 5
//!
//! [eval]
//! question-template = "{text}"
//!
//! [backends.captioner]
//! kind = "expert"
//! transport = "remote"
//! endpoint-url = "${VLM_URL}"
//! model-name = "some-vlm"
//! api-key-env = "VLM_KEY"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{ChainStage, ChainStrategy, ExpertChain, ExpertChainSpec, DEFAULT_STAGE_TEMPLATE};
use crate::error::{Error, Result};
use crate::gateway::{connect, BackendKind, BackendSpec, ConnectOptions, SharedBackend};
use crate::kg::OnError;
use crate::retriever::{RetrievalBackends, RetrievalMode, RetrievalRequest};
use crate::verifier::VerifierConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KgMode {
    /// Chunks hold the verified description only.
    ImageOnly,
    /// Chunks hold the verified description followed by the item's text.
    #[default]
    TextImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ChainConfig {
    /// Backend names, in cascade order.
    pub stages: Vec<String>,
    #[serde(default = "one")]
    pub steps: usize,
    /// One template per stage; the default template when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<Vec<String>>,
    #[serde(default)]
    pub strategy: ChainStrategy,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct RetrievalDefaults {
    pub mode: RetrievalMode,
    pub top_k_triplets: usize,
    pub top_k_chunks: usize,
}

impl Default for RetrievalDefaults {
    fn default() -> Self {
        RetrievalDefaults {
            mode: RetrievalMode::Hybrid,
            top_k_triplets: 10,
            top_k_chunks: 5,
        }
    }
}

impl RetrievalDefaults {
    pub fn request(&self, query: &str) -> RetrievalRequest {
        RetrievalRequest {
            query: query.to_string(),
            mode: self.mode,
            top_k_triplets: self.top_k_triplets,
            top_k_chunks: self.top_k_chunks,
        }
    }
}

pub const DEFAULT_QUESTION_TEMPLATE: &str = "{text}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Slots: `{id}`, `{text}`, `{image_path}`.
    pub question_template: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            question_template: DEFAULT_QUESTION_TEMPLATE.to_string(),
        }
    }
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PipelineConfig {
    pub chain: ChainConfig,
    #[serde(default)]
    pub verifier: VerifierConfig,
    /// Dataset name → τ.
    #[serde(default)]
    pub tau_overrides: BTreeMap<String, f64>,
    pub backends: BTreeMap<String, BackendSpec>,
    pub embedder: String,
    pub extractor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answerer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword_extractor: Option<String>,
    #[serde(default)]
    pub kg_mode: KgMode,
    #[serde(default)]
    pub retrieval: RetrievalDefaults,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub on_error: OnError,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(skip)]
    pub config_hash: Option<String>,
}

/// Replace `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| Error::invalid("unterminated `${` in config"))?;
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::invalid(format!("bad variable name `{name}` in config")));
        }
        let value = lookup(name)
            .ok_or_else(|| Error::invalid(format!("environment variable `{name}` is not set")))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl PipelineConfig {
    /// Parse and validate a config file's text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let expanded = interpolate_env(text, |n| std::env::var(n).ok())?;
        let mut config: PipelineConfig = toml::from_str(&expanded).map_err(|e| {
            let line = e
                .span()
                .map(|s| expanded[..s.start].matches('\n').count() + 1);
            Error::format(line, e.message().to_string())
        })?;
        config.config_hash = Some(config_hash(text));
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn backend_of(&self, field: &str, name: &str, kind: BackendKind) -> Result<&BackendSpec> {
        let spec = self
            .backends
            .get(name)
            .ok_or_else(|| Error::invalid(format!("{field}: no backend named `{name}`")))?;
        if spec.kind != kind {
            return Err(Error::invalid(format!(
                "{field}: backend `{name}` is a {} backend, expected {kind}",
                spec.kind
            )));
        }
        Ok(spec)
    }

    pub fn answerer_name(&self) -> &str {
        self.answerer.as_deref().unwrap_or(&self.extractor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        for (name, spec) in &self.backends {
            spec.validate()
                .map_err(|e| Error::invalid(format!("backends.{name}: {e}")))?;
        }
        self.backend_of("embedder", &self.embedder, BackendKind::Embedder)?;
        self.backend_of("extractor", &self.extractor, BackendKind::Extractor)?;
        self.backend_of("answerer", self.answerer_name(), BackendKind::Extractor)?;
        if let Some(k) = &self.keyword_extractor {
            self.backend_of("keyword-extractor", k, BackendKind::Extractor)?;
        }
        for (i, name) in self.chain.stages.iter().enumerate() {
            self.backend_of(&format!("chain.stages[{i}]"), name, BackendKind::Expert)?;
        }
        if let Some(t) = &self.chain.templates {
            if t.len() != self.chain.stages.len() {
                return Err(Error::invalid("chain.templates: need one template per stage"));
            }
        }
        self.verifier.validate()?;
        for (dataset, tau) in &self.tau_overrides {
            if !(0.0..=1.0).contains(tau) {
                return Err(Error::invalid(format!("tau-overrides.{dataset}: {tau} outside [0, 1]")));
            }
        }
        let diagnostics = crate::chain::validate_chain_spec(&self.chain_spec()?);
        if let Some(d) = diagnostics.first() {
            return Err(Error::invalid(d.to_string()));
        }
        Ok(())
    }

    pub fn chain_spec(&self) -> Result<ExpertChainSpec> {
        let stages = self
            .chain
            .stages
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let backend = self
                    .backends
                    .get(name)
                    .ok_or_else(|| Error::invalid(format!("chain.stages[{i}]: no backend named `{name}`")))?
                    .clone();
                let prompt_template = self
                    .chain
                    .templates
                    .as_ref()
                    .and_then(|t| t.get(i).cloned())
                    .unwrap_or_else(|| DEFAULT_STAGE_TEMPLATE.to_string());
                Ok(ChainStage {
                    backend,
                    prompt_template,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExpertChainSpec {
            stages,
            steps: self.chain.steps,
            strategy: self.chain.strategy,
        })
    }

    /// Verifier settings for a dataset, with its τ override applied.
    pub fn verifier_for(&self, dataset: &str) -> VerifierConfig {
        match self.tau_overrides.get(dataset) {
            Some(tau) => self.verifier.clone().with_tau(*tau),
            None => self.verifier.clone(),
        }
    }

    pub fn connect_options(&self) -> ConnectOptions {
        ConnectOptions {
            deterministic: self.deterministic,
        }
    }
}

/// Every backend a config names, connected.
pub struct Backends {
    pub chain: ExpertChain,
    pub embedder: SharedBackend,
    pub extractor: SharedBackend,
    pub answerer: SharedBackend,
    pub keyword_extractor: Option<SharedBackend>,
}

impl Backends {
    pub fn connect(config: &PipelineConfig) -> Result<Self> {
        let opts = config.connect_options();
        let get = |name: &str| connect(&config.backends[name], opts);
        Ok(Backends {
            chain: ExpertChain::new(&config.chain_spec()?, opts)?,
            embedder: get(&config.embedder)?,
            extractor: get(&config.extractor)?,
            answerer: get(config.answerer_name())?,
            keyword_extractor: config.keyword_extractor.as_deref().map(get).transpose()?,
        })
    }

    pub fn retrieval(&self) -> RetrievalBackends<'_> {
        RetrievalBackends {
            embedder: self.embedder.as_ref(),
            keyword_extractor: self.keyword_extractor.as_deref(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const STUB: &str = r#"
embedder = "emb"
extractor = "ext"

[chain]
stages = ["cap"]

[tau-overrides]
science = 0.2

[backends.cap]
kind = "expert"
transport = "stub"
stub-reply = "fixed:a flood"

[backends.emb]
kind = "embedder"
transport = "stub"
stub-seed = 3

[backends.ext]
kind = "extractor"
transport = "stub"
stub-reply = "token-graph"
"#;

    #[test]
    fn parses_minimal_config() {
        let c = PipelineConfig::from_toml_str(STUB).unwrap();
        assert_eq!(c.workers, 1);
        assert_eq!(c.kg_mode, KgMode::TextImage);
        assert_eq!(c.answerer_name(), "ext");
        assert_eq!(c.verifier_for("science").tau, 0.2);
        assert_eq!(c.verifier_for("crisis").tau, 0.25);
        assert_eq!(c.config_hash.as_deref().unwrap().len(), 64);
        assert!(Backends::connect(&c).is_ok());
    }

    #[test]
    fn unknown_backend_name_is_rejected() {
        let text = STUB.replace("stages = [\"cap\"]", "stages = [\"nope\"]");
        let err = PipelineConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let text = STUB.replace("embedder = \"emb\"", "embedder = \"ext\"");
        assert!(matches!(
            PipelineConfig::from_toml_str(&text),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_workers_is_rejected() {
        let text = format!("workers = 0\n{STUB}");
        assert!(PipelineConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = PipelineConfig::from_toml_str("embedder = \n").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(1), .. }), "{err:?}");
    }

    #[test]
    fn env_interpolation() {
        let lookup = |n: &str| (n == "HOST").then(|| "http://h".to_string());
        assert_eq!(interpolate_env("url = \"${HOST}/v1\"", lookup).unwrap(), "url = \"http://h/v1\"");
        assert!(interpolate_env("${MISSING}", lookup).is_err());
        assert!(interpolate_env("${HOST", lookup).is_err());
        assert_eq!(interpolate_env("no vars", lookup).unwrap(), "no vars");
    }
}
