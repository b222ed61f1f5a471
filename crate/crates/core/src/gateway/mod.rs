//! Model backends behind one trait: vision-language experts, embedders and
//! text LLMs. Every backend is either a remote service speaking the
//! OpenAI-compatible wire protocol or a deterministic stub.

mod embedding;
mod remote;
mod retry;
mod spec;
mod stub;

use std::sync::Arc;

pub use embedding::{cosine_similarity, stub_text_embedding, stub_tokens, EmbeddingVector};
pub use remote::RemoteBackend;
pub use retry::RetryPolicy;
pub use spec::{
    BackendKind, BackendSpec, StubRule, Transport, DEFAULT_BACKOFF_BASE_MS, DEFAULT_STUB_DIMENSION,
};
pub use stub::{prompt_hash, StubBackend, StubBehavior};

use crate::chain::{Description, Provenance, DEFAULT_STAGE_TEMPLATE};
use crate::corpus::ImageRecord;
use crate::error::{Error, Result};

/// One model service. Implementations must be safe to call from several
/// pipeline workers at once.
pub trait ModelBackend: Send + Sync {
    fn spec(&self) -> &BackendSpec;

    /// One expert invocation conditioned on the image, the rendered stage
    /// prompt and the previous expert's description.
    fn describe(&self, image: &ImageRecord, prompt: &str, prior: &str) -> Result<String>;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;

    fn embed_image(&self, image: &ImageRecord) -> Result<EmbeddingVector>;

    fn complete(&self, prompt: &str) -> Result<String>;

    fn identity(&self) -> String {
        self.spec().identity()
    }
}

pub type SharedBackend = Arc<dyn ModelBackend>;

#[derive(Debug, Clone, Copy, Default)]
pub struct ConnectOptions {
    /// Disables retry jitter.
    pub deterministic: bool,
}

/// Instantiate the backend a spec describes.
pub fn connect(spec: &BackendSpec, options: ConnectOptions) -> Result<SharedBackend> {
    spec.validate()?;
    Ok(match spec.transport {
        Transport::Stub => Arc::new(StubBackend::new(spec.clone())?),
        Transport::Remote => Arc::new(RemoteBackend::new(spec.clone(), options)?),
    })
}

pub(crate) fn require_kind(spec: &BackendSpec, kind: BackendKind) -> Result<()> {
    if spec.kind == kind {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "backend `{}` is a {} backend, a {kind} backend is required",
            spec.identity(),
            spec.kind
        )))
    }
}

/// Single expert step with the default stage prompt. The returned
/// description extends the prior's provenance by one entry.
pub fn describe_image(
    image: &ImageRecord,
    prior: &Description,
    backend: &dyn ModelBackend,
) -> Result<Description> {
    let prompt = crate::chain::render_stage_prompt(DEFAULT_STAGE_TEMPLATE, &prior.text);
    let text = backend.describe(image, &prompt, &prior.text)?;
    let mut provenance = prior.provenance.clone();
    provenance.push(Provenance {
        stage: 0,
        step: 0,
        model: backend.identity(),
    });
    Ok(Description {
        text,
        provenance,
        verified: false,
        source_image: image.location.clone(),
    })
}

pub fn embed_text(text: &str, backend: &dyn ModelBackend) -> Result<EmbeddingVector> {
    backend.embed_text(text)
}

pub fn embed_image(image: &ImageRecord, backend: &dyn ModelBackend) -> Result<EmbeddingVector> {
    backend.embed_image(image)
}

pub fn complete(prompt: &str, backend: &dyn ModelBackend) -> Result<String> {
    backend.complete(prompt)
}
