use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use super::embedding::{stub_text_embedding, stub_tokens, EmbeddingVector};
use super::spec::{BackendKind, BackendSpec, DEFAULT_STUB_DIMENSION};
use super::{require_kind, ModelBackend};
use crate::corpus::ImageRecord;
use crate::error::{Error, Result};
use crate::kg::extract::{self, ExtractedEntity, ExtractedRelation};
use crate::retriever::is_stopword;

/// Lowercase hex SHA-256 of a prompt, the key of canned stub replies.
pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// What a stub expert or completion backend replies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubBehavior {
    /// `fixed:<text>` always returns `<text>`.
    Fixed(String),
    /// `echo-append:<marker>` returns the prior (or prompt) plus the marker.
    EchoAppend(String),
    /// `identity` returns the prior (or prompt) unchanged.
    Identity,
    /// `canned` looks up the prompt hash table, then substring rules, then
    /// the default reply.
    Canned,
    /// `echo-first-line` returns the first line of the prompt.
    EchoFirstLine,
    /// `tag-caption` (experts) appends "The image shows <tags>." to the prior.
    TagCaption,
    /// `token-graph` answers extraction prompts with one entity per content
    /// word of the embedded text and a chain of co-occurrence relations.
    TokenGraph,
}

impl StubBehavior {
    pub fn parse(raw: &str) -> Result<Self> {
        if let Some(rest) = raw.strip_prefix("fixed:") {
            return Ok(StubBehavior::Fixed(rest.trim_start().to_string()));
        }
        if let Some(rest) = raw.strip_prefix("echo-append:") {
            return Ok(StubBehavior::EchoAppend(rest.trim_start().to_string()));
        }
        match raw.trim() {
            "identity" => Ok(StubBehavior::Identity),
            "canned" => Ok(StubBehavior::Canned),
            "echo-first-line" => Ok(StubBehavior::EchoFirstLine),
            "token-graph" => Ok(StubBehavior::TokenGraph),
            "tag-caption" => Ok(StubBehavior::TagCaption),
            other => Err(Error::invalid(format!("unknown stub behavior `{other}`"))),
        }
    }

    fn default_for(kind: BackendKind) -> Self {
        match kind {
            BackendKind::Expert => StubBehavior::Identity,
            _ => StubBehavior::Canned,
        }
    }
}

/// Deterministic stand-in for a remote model; a pure function of its
/// inputs and the spec.
#[derive(Debug, Clone)]
pub struct StubBackend {
    spec: BackendSpec,
    behavior: StubBehavior,
    dimension: usize,
}

impl StubBackend {
    pub fn new(spec: BackendSpec) -> Result<Self> {
        let behavior = match &spec.stub_reply {
            Some(raw) => StubBehavior::parse(raw)?,
            None => StubBehavior::default_for(spec.kind),
        };
        let dimension = spec.dimension.unwrap_or(DEFAULT_STUB_DIMENSION);
        if dimension == 0 {
            return Err(Error::invalid("stub dimension must be positive"));
        }
        Ok(StubBackend {
            spec,
            behavior,
            dimension,
        })
    }

    pub fn behavior(&self) -> &StubBehavior {
        &self.behavior
    }

    fn check_injected_failure(&self, haystacks: &[&str]) -> Result<()> {
        if let Some(pattern) = &self.spec.stub_fail_on {
            if haystacks.iter().any(|h| h.contains(pattern.as_str())) {
                return Err(Error::RetriableBackend {
                    backend: self.identity(),
                    attempts: self.spec.max_retries + 1,
                    message: format!("injected failure on `{pattern}`"),
                });
            }
        }
        Ok(())
    }

    fn canned(&self, prompt: &str) -> String {
        if let Some(reply) = self.spec.stub_table.get(&prompt_hash(prompt)) {
            return reply.clone();
        }
        if let Some(rule) = self
            .spec
            .stub_rules
            .iter()
            .find(|r| prompt.contains(r.pattern.as_str()))
        {
            return rule.reply.clone();
        }
        self.spec.stub_default.clone().unwrap_or_default()
    }

    fn reply(&self, base: &str, prompt: &str) -> String {
        match &self.behavior {
            StubBehavior::Fixed(text) => text.clone(),
            StubBehavior::EchoAppend(marker) => {
                if base.trim().is_empty() {
                    marker.clone()
                } else {
                    format!("{base} {marker}")
                }
            }
            StubBehavior::Identity | StubBehavior::TagCaption => base.to_string(),
            StubBehavior::Canned => self.canned(prompt),
            StubBehavior::EchoFirstLine => prompt.lines().next().unwrap_or_default().to_string(),
            StubBehavior::TokenGraph => token_graph_reply(prompt),
        }
    }
}

impl ModelBackend for StubBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn describe(&self, image: &ImageRecord, prompt: &str, prior: &str) -> Result<String> {
        require_kind(&self.spec, BackendKind::Expert)?;
        image.ensure_resolvable()?;
        self.check_injected_failure(&[&image.location, &image.id])?;
        if self.behavior == StubBehavior::TagCaption {
            let caption = if image.tags.is_empty() {
                format!("The image shows {}.", image.id)
            } else {
                format!("The image shows {}.", image.tags.join(" "))
            };
            return Ok(if prior.trim().is_empty() {
                caption
            } else {
                format!("{prior} {caption}")
            });
        }
        Ok(self.reply(prior, prompt))
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        require_kind(&self.spec, BackendKind::Embedder)?;
        if text.trim().is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        self.check_injected_failure(&[text])?;
        Ok(stub_text_embedding(text, self.spec.stub_seed, self.dimension))
    }

    /// Embeds the image's tag words; untagged images embed a digest of
    /// their file bytes instead.
    fn embed_image(&self, image: &ImageRecord) -> Result<EmbeddingVector> {
        require_kind(&self.spec, BackendKind::Embedder)?;
        self.check_injected_failure(&[&image.location, &image.id])?;
        let text = if image.tags.is_empty() {
            let bytes = image.read_bytes()?;
            format!("image-{}", &prompt_hash_bytes(&bytes)[..16])
        } else {
            image.tags.join(" ")
        };
        Ok(stub_text_embedding(&text, self.spec.stub_seed, self.dimension))
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        require_kind(&self.spec, BackendKind::Extractor)?;
        self.check_injected_failure(&[prompt])?;
        Ok(self.reply(prompt, prompt))
    }
}

fn prompt_hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

const TOKEN_GRAPH_MAX_ENTITIES: usize = 8;

fn token_graph_reply(prompt: &str) -> String {
    let text = extract::embedded_chunk_text(prompt).unwrap_or(prompt);
    let mut seen = BTreeSet::new();
    let words: Vec<String> = stub_tokens(text)
        .filter(|t| t.chars().count() >= 3 && !is_stopword(t))
        .filter(|t| seen.insert(t.clone()))
        .take(TOKEN_GRAPH_MAX_ENTITIES)
        .collect();
    let entities: Vec<ExtractedEntity> = words
        .iter()
        .map(|w| ExtractedEntity {
            name: w.clone(),
            entity_type: "concept".into(),
            description: format!("{w} is mentioned in the source text"),
        })
        .collect();
    let relations: Vec<ExtractedRelation> = words
        .windows(2)
        .map(|pair| ExtractedRelation {
            source: pair[0].clone(),
            target: pair[1].clone(),
            description: "co-occurs with".into(),
            keywords: vec!["co-occurrence".into()],
            weight: 1.0,
        })
        .collect();
    extract::serialize_records(&entities, &relations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_image() -> (tempfile::TempDir, ImageRecord) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i1.png");
        std::fs::write(&path, b"not really a png").unwrap();
        let rec = ImageRecord::new("i1", path.to_str().unwrap());
        (dir, rec)
    }

    #[test]
    fn fixed_and_echo_append_experts() {
        let (_dir, img) = tmp_image();
        let fixed = StubBackend::new(BackendSpec::stub_expert("fixed:a map of the US")).unwrap();
        assert_eq!(fixed.describe(&img, "p", "").unwrap(), "a map of the US");
        let echo = StubBackend::new(BackendSpec::stub_expert("echo-append:[detail]")).unwrap();
        assert_eq!(echo.describe(&img, "p", "a map").unwrap(), "a map [detail]");
        assert_eq!(echo.describe(&img, "p", "").unwrap(), "[detail]");
    }

    #[test]
    fn tag_caption_expert() {
        let (_dir, img) = tmp_image();
        let stub = StubBackend::new(BackendSpec::stub_expert("tag-caption")).unwrap();
        assert_eq!(stub.describe(&img, "p", "").unwrap(), "The image shows i1.");
        let img = img.with_tags(["flood", "bridge"]);
        assert_eq!(
            stub.describe(&img, "p", "Water.").unwrap(),
            "Water. The image shows flood bridge."
        );
    }

    #[test]
    fn missing_image_is_a_corpus_error() {
        let stub = StubBackend::new(BackendSpec::stub_expert("fixed:x")).unwrap();
        let img = ImageRecord::new("gone", "/no/such/file.png");
        assert!(matches!(stub.describe(&img, "", ""), Err(Error::Corpus(_))));
    }

    #[test]
    fn embedder_contracts() {
        let stub = StubBackend::new(BackendSpec::stub_embedder(7)).unwrap();
        let a = stub.embed_text("flood").unwrap();
        assert_eq!(a, stub.embed_text("flood").unwrap());
        assert_ne!(a, stub.embed_text("drought").unwrap());
        assert!(matches!(stub.embed_text(""), Err(Error::InvalidInput(_))));

        let img = ImageRecord::new("i", "unused.png").with_tags(["map", "US"]);
        assert_eq!(
            stub.embed_image(&img).unwrap(),
            stub.embed_text("map US").unwrap()
        );
        assert_eq!(stub.embed_image(&img).unwrap(), stub.embed_image(&img).unwrap());
    }

    #[test]
    fn untagged_image_embeds_file_digest() {
        let (_dir, img) = tmp_image();
        let stub = StubBackend::new(BackendSpec::stub_embedder(1)).unwrap();
        let v = stub.embed_image(&img).unwrap();
        assert_eq!(v.dimension(), DEFAULT_STUB_DIMENSION);
        assert!(!v.is_zero());
        let missing = ImageRecord::new("m", "/no/such.png");
        assert!(matches!(stub.embed_image(&missing), Err(Error::Corpus(_))));
    }

    #[test]
    fn canned_lookup_order() {
        let mut spec = BackendSpec::stub(BackendKind::Extractor).with_rule("flood", "water");
        spec.stub_table.insert(prompt_hash("exact prompt"), "from table".into());
        spec.stub_default = Some("fallback".into());
        let stub = StubBackend::new(spec).unwrap();
        assert_eq!(stub.complete("exact prompt").unwrap(), "from table");
        assert_eq!(stub.complete("a flood prompt").unwrap(), "water");
        assert_eq!(stub.complete("other").unwrap(), "fallback");
    }

    #[test]
    fn kind_mismatch_is_invalid_input() {
        let stub = StubBackend::new(BackendSpec::stub_embedder(0)).unwrap();
        assert!(matches!(stub.complete("x"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn injected_failure_is_retriable_error() {
        let stub =
            StubBackend::new(BackendSpec::stub_extractor("fixed:ok").with_fail_on("boom")).unwrap();
        assert_eq!(stub.complete("fine").unwrap(), "ok");
        assert!(matches!(
            stub.complete("a boom here"),
            Err(Error::RetriableBackend { .. })
        ));
    }

    #[test]
    fn unknown_behavior_rejected() {
        assert!(StubBehavior::parse("sing").is_err());
        assert_eq!(
            StubBehavior::parse("fixed: a cat").unwrap(),
            StubBehavior::Fixed("a cat".into())
        );
    }
}
