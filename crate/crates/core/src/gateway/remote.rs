use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::embedding::EmbeddingVector;
use super::retry::RetryPolicy;
use super::spec::{BackendKind, BackendSpec};
use super::{require_kind, ConnectOptions, ModelBackend};
use crate::corpus::ImageRecord;
use crate::error::{Error, Result};

/// Client for an OpenAI-compatible server: `POST {endpoint}/chat/completions`
/// for experts and extractors, `POST {endpoint}/embeddings` for embedders.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    spec: BackendSpec,
    client: Client,
    api_key: Option<String>,
    policy: RetryPolicy,
}

enum Failure {
    Retriable(String),
    Fatal(Error),
}

impl RemoteBackend {
    pub fn new(spec: BackendSpec, options: ConnectOptions) -> Result<Self> {
        spec.validate()?;
        let api_key = match &spec.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::invalid(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let client = Client::builder()
            .timeout(Duration::from_millis(spec.timeout_ms))
            .build()
            .map_err(|e| Error::invalid(format!("http client: {e}")))?;
        let policy = RetryPolicy::new(
            Duration::from_millis(spec.backoff_base_ms),
            spec.max_retries,
            !options.deterministic,
        );
        Ok(RemoteBackend {
            spec,
            client,
            api_key,
            policy,
        })
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.policy
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.spec.endpoint_url.trim_end_matches('/'))
    }

    fn protocol(&self, message: impl Into<String>) -> Error {
        Error::Protocol {
            backend: self.identity(),
            message: message.into(),
        }
    }

    fn attempt(&self, url: &str, body: &Value) -> std::result::Result<Value, Failure> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retriable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retriable(e.to_string()))?;
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Retriable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(
                self.protocol(format!("HTTP {status}: {}", truncate(&text, 200))),
            ));
        }
        serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(self.protocol(format!("response is not JSON: {e}"))))
    }

    /// POST with exponential backoff on transport errors, 429 and 5xx.
    fn post(&self, route: &str, body: &Value) -> Result<Value> {
        let url = self.url(route);
        let mut last = String::new();
        for attempt in 0..=self.policy.max_retries {
            if attempt > 0 {
                let delay = self.policy.delay(attempt - 1);
                tracing::debug!(backend = %self.identity(), attempt, ?delay, "retrying");
                std::thread::sleep(delay);
            }
            match self.attempt(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retriable(msg)) => last = msg,
            }
        }
        Err(Error::RetriableBackend {
            backend: self.identity(),
            attempts: self.policy.max_retries + 1,
            message: last,
        })
    }

    fn chat(&self, content: Value) -> Result<String> {
        let body = json!({
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": content}],
        });
        let resp = self.post("chat/completions", &body)?;
        parse_chat_content(&resp).ok_or_else(|| self.protocol("missing choices[0].message.content"))
    }

    fn embed(&self, input: Value) -> Result<EmbeddingVector> {
        let body = json!({"model": self.spec.model_name, "input": input});
        let resp = self.post("embeddings", &body)?;
        let values = parse_embedding(&resp)
            .ok_or_else(|| self.protocol("missing data[0].embedding"))?;
        if values.is_empty() {
            return Err(self.protocol("empty embedding"));
        }
        if let Some(dim) = self.spec.dimension {
            if values.len() != dim {
                return Err(self.protocol(format!(
                    "embedding has dimension {}, configured {dim}",
                    values.len()
                )));
            }
        }
        Ok(EmbeddingVector::new(values))
    }
}

impl ModelBackend for RemoteBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn describe(&self, image: &ImageRecord, prompt: &str, _prior: &str) -> Result<String> {
        require_kind(&self.spec, BackendKind::Expert)?;
        let url = image_url(image)?;
        self.chat(json!([
            {"type": "text", "text": prompt},
            {"type": "image_url", "image_url": {"url": url}},
        ]))
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        require_kind(&self.spec, BackendKind::Embedder)?;
        if text.trim().is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        self.embed(json!(text))
    }

    /// Image inputs use the multimodal embeddings convention
    /// `"input": [{"image": <url>}]`.
    fn embed_image(&self, image: &ImageRecord) -> Result<EmbeddingVector> {
        require_kind(&self.spec, BackendKind::Embedder)?;
        let url = image_url(image)?;
        self.embed(json!([{"image": url}]))
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        require_kind(&self.spec, BackendKind::Extractor)?;
        self.chat(json!(prompt))
    }
}

/// URL images pass through; local files become base64 data URLs.
pub(crate) fn image_url(image: &ImageRecord) -> Result<String> {
    if image.is_url() {
        return Ok(image.location.clone());
    }
    let bytes = image.read_bytes()?;
    if bytes.is_empty() {
        return Err(Error::Corpus(format!("{} is empty", image.location)));
    }
    let mime = match image
        .location
        .rsplit('.')
        .next()
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    };
    Ok(format!("data:{mime};base64,{}", BASE64.encode(bytes)))
}

fn parse_chat_content(resp: &Value) -> Option<String> {
    let content = resp.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let texts: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            (!texts.is_empty()).then(|| texts.concat())
        }
        _ => None,
    }
}

fn parse_embedding(resp: &Value) -> Option<Vec<f32>> {
    resp.get("data")?
        .get(0)?
        .get("embedding")?
        .as_array()?
        .iter()
        .map(|v| v.as_f64().map(|f| f as f32))
        .collect()
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
