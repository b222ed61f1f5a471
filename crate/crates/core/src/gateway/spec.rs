use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a backend plays in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// Vision-language model producing image descriptions.
    Expert,
    /// Text/image encoder producing embedding vectors.
    Embedder,
    /// Text LLM used for extraction, keyword generation and answering.
    Extractor,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Expert => "expert",
            BackendKind::Embedder => "embedder",
            BackendKind::Extractor => "extractor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    Remote,
    Stub,
}

/// Substring rule for stub completion backends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    pub pattern: String,
    pub reply: String,
}

pub const DEFAULT_STUB_DIMENSION: usize = 64;
pub const DEFAULT_BACKOFF_BASE_MS: u64 = 500;

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_base_ms() -> u64 {
    DEFAULT_BACKOFF_BASE_MS
}

/// Declarative description of one model backend, as it appears in the
/// pipeline configuration under `[backends.<name>]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub transport: Transport,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Embedding width. Stub embedders default to 64; remote embedders
    /// check responses against it when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,

    #[serde(default)]
    pub stub_seed: u64,
    /// Stub behavior, e.g. `fixed:a cat`, `echo-append:[detail]`,
    /// `identity`, `canned`, `echo-first-line`, `tag-caption`, `token-graph`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub_reply: Option<String>,
    /// Canned replies keyed by the lowercase hex SHA-256 of the prompt.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stub_table: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stub_rules: Vec<StubRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub_default: Option<String>,
    /// Fail every call whose prompt or image location contains this string.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub_fail_on: Option<String>,
}

impl BackendSpec {
    fn base(kind: BackendKind, transport: Transport) -> Self {
        BackendSpec {
            kind,
            transport,
            endpoint_url: String::new(),
            model_name: String::new(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
            api_key_env: None,
            dimension: None,
            stub_seed: 0,
            stub_reply: None,
            stub_table: BTreeMap::new(),
            stub_rules: Vec::new(),
            stub_default: None,
            stub_fail_on: None,
        }
    }

    pub fn stub(kind: BackendKind) -> Self {
        let mut spec = Self::base(kind, Transport::Stub);
        spec.model_name = format!("stub-{kind}");
        spec
    }

    pub fn stub_expert(reply: &str) -> Self {
        Self::stub(BackendKind::Expert).with_stub_reply(reply)
    }

    pub fn stub_embedder(seed: u64) -> Self {
        let mut spec = Self::stub(BackendKind::Embedder);
        spec.stub_seed = seed;
        spec
    }

    pub fn stub_extractor(reply: &str) -> Self {
        Self::stub(BackendKind::Extractor).with_stub_reply(reply)
    }

    pub fn remote(kind: BackendKind, endpoint_url: &str, model_name: &str) -> Self {
        let mut spec = Self::base(kind, Transport::Remote);
        spec.endpoint_url = endpoint_url.to_string();
        spec.model_name = model_name.to_string();
        spec
    }

    pub fn with_stub_reply(mut self, reply: &str) -> Self {
        self.stub_reply = Some(reply.to_string());
        self
    }

    pub fn with_model_name(mut self, name: &str) -> Self {
        self.model_name = name.to_string();
        self
    }

    pub fn with_dimension(mut self, dimension: usize) -> Self {
        self.dimension = Some(dimension);
        self
    }

    pub fn with_rule(mut self, pattern: &str, reply: &str) -> Self {
        self.stub_rules.push(StubRule {
            pattern: pattern.to_string(),
            reply: reply.to_string(),
        });
        self
    }

    pub fn with_fail_on(mut self, pattern: &str) -> Self {
        self.stub_fail_on = Some(pattern.to_string());
        self
    }

    /// Human-readable identity recorded in provenance and manifests.
    pub fn identity(&self) -> String {
        if self.model_name.is_empty() {
            format!("{}-{}", self.transport_name(), self.kind)
        } else {
            self.model_name.clone()
        }
    }

    fn transport_name(&self) -> &'static str {
        match self.transport {
            Transport::Remote => "remote",
            Transport::Stub => "stub",
        }
    }

    pub fn embedding_dimension(&self) -> Option<usize> {
        match self.transport {
            Transport::Stub => Some(self.dimension.unwrap_or(DEFAULT_STUB_DIMENSION)),
            Transport::Remote => self.dimension,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.transport == Transport::Remote && self.endpoint_url.trim().is_empty() {
            return Err(Error::invalid(format!(
                "remote {} backend `{}` needs an endpoint-url",
                self.kind,
                self.identity()
            )));
        }
        if self.timeout_ms == 0 {
            return Err(Error::invalid("timeout-ms must be positive"));
        }
        if self.dimension == Some(0) {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(())
    }
}
