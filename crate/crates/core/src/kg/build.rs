use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::extract::{build_extraction_prompt, parse_extraction_output, ExtractionOutput};
use super::{Chunk, GraphManifest, KnowledgeGraph};
use crate::chain::Description;
use crate::error::{Error, Result};
use crate::gateway::ModelBackend;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnError {
    #[default]
    Skip,
    Abort,
}

/// Chunk text: the verified description, followed by the external text on
/// a new line when there is any.
pub fn chunk_text(description: &str, external: Option<&str>) -> String {
    let description = description.trim();
    match external.map(str::trim).filter(|t| !t.is_empty()) {
        Some(t) if description.is_empty() => t.to_string(),
        Some(t) => format!("{description}\n{t}"),
        None => description.to_string(),
    }
}

/// Content-addressed chunk id over the image location and the text.
pub fn chunk_id_for(source_image: Option<&str>, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(source_image.unwrap_or_default().as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    let hex: String = h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("chunk-{hex}")
}

/// A chunk that has been embedded and extracted but not yet merged.
#[derive(Debug, Clone)]
pub struct PreparedChunk {
    pub chunk: Chunk,
    pub extraction: ExtractionOutput,
}

#[derive(Debug)]
pub struct BuildFailure {
    pub chunk_id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct BuildOutcome {
    pub graph: KnowledgeGraph,
    pub failures: Vec<BuildFailure>,
    pub diagnostics: Vec<String>,
    /// Items that produced no chunk because their text was empty.
    pub empty_items: usize,
}

/// Incremental graph construction. `prepare` only talks to backends and
/// may run on many workers; `commit` is the single writer.
pub struct GraphBuilder<'a> {
    embedder: &'a dyn ModelBackend,
    extractor: &'a dyn ModelBackend,
    pub on_error: OnError,
    outcome: BuildOutcome,
}

impl<'a> GraphBuilder<'a> {
    pub fn new(embedder: &'a dyn ModelBackend, extractor: &'a dyn ModelBackend) -> Self {
        let mut outcome = BuildOutcome::default();
        outcome.graph.manifest.backends.insert("embedder".into(), embedder.identity());
        outcome.graph.manifest.backends.insert("extractor".into(), extractor.identity());
        GraphBuilder {
            embedder,
            extractor,
            on_error: OnError::Skip,
            outcome,
        }
    }

    pub fn with_manifest(mut self, manifest: GraphManifest) -> Self {
        let backends = std::mem::take(&mut self.outcome.graph.manifest.backends);
        self.outcome.graph.manifest = manifest;
        self.outcome.graph.manifest.backends.extend(backends);
        self
    }

    /// Embed and extract one chunk. `Ok(None)` when there is no text.
    pub fn prepare(
        embedder: &dyn ModelBackend,
        extractor: &dyn ModelBackend,
        description: &Description,
        external: Option<&str>,
    ) -> std::result::Result<Option<PreparedChunk>, BuildFailure> {
        let text = chunk_text(&description.text, external);
        if text.is_empty() {
            return Ok(None);
        }
        let source_image = (!description.source_image.is_empty()).then(|| description.source_image.clone());
        let chunk_id = chunk_id_for(source_image.as_deref(), &text);
        let fail = |error: Error| BuildFailure {
            chunk_id: chunk_id.clone(),
            error,
        };
        let embedding = embedder.embed_text(&text).map_err(fail)?;
        let prompt = build_extraction_prompt(&text).map_err(fail)?;
        let raw = extractor.complete(&prompt).map_err(fail)?;
        Ok(Some(PreparedChunk {
            chunk: Chunk {
                chunk_id: chunk_id.clone(),
                text,
                embedding,
                source_image,
            },
            extraction: parse_extraction_output(&raw),
        }))
    }

    pub fn commit(&mut self, prepared: PreparedChunk) {
        let id = prepared.chunk.chunk_id.clone();
        for d in &prepared.extraction.diagnostics {
            self.outcome.diagnostics.push(format!("{id}: {d}"));
        }
        let skipped = self.outcome.graph.merge(
            &prepared.extraction.entities,
            &prepared.extraction.relations,
            prepared.chunk,
        );
        for s in skipped {
            self.outcome.diagnostics.push(format!("{id}: {s}"));
        }
    }

    /// Record a failed item; under `abort` the failure becomes the error.
    pub fn record_failure(&mut self, failure: BuildFailure) -> Result<()> {
        match self.on_error {
            OnError::Abort => Err(Error::Chunk {
                chunk_id: failure.chunk_id,
                source: Box::new(failure.error),
            }),
            OnError::Skip => {
                tracing::warn!(chunk = %failure.chunk_id, error = %failure.error, "skipping chunk");
                self.outcome.failures.push(failure);
                Ok(())
            }
        }
    }

    pub fn add(&mut self, description: &Description, external: Option<&str>) -> Result<bool> {
        match Self::prepare(self.embedder, self.extractor, description, external) {
            Ok(Some(prepared)) => {
                self.commit(prepared);
                Ok(true)
            }
            Ok(None) => {
                self.outcome.empty_items += 1;
                Ok(false)
            }
            Err(failure) => self.record_failure(failure).map(|_| false),
        }
    }

    pub fn note_empty(&mut self) {
        self.outcome.empty_items += 1;
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.outcome.graph
    }

    pub fn finish(self) -> BuildOutcome {
        self.outcome
    }
}

/// Build a graph from verified descriptions, each optionally paired with
/// external text.
pub fn build_graph(
    corpus: &[(Description, Option<String>)],
    embedder: &dyn ModelBackend,
    extractor: &dyn ModelBackend,
    on_error: OnError,
) -> Result<BuildOutcome> {
    let mut builder = GraphBuilder::new(embedder, extractor);
    builder.on_error = on_error;
    for (description, external) in corpus {
        builder.add(description, external.as_deref())?;
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ImageRecord;
    use crate::gateway::{BackendSpec, StubBackend};

    const FLOOD: &str = r#"("entity"<|>FLOOD<|>EVENT<|>rising water)##<|COMPLETE|>"#;

    fn verified(location: &str, text: &str) -> Description {
        let mut d = Description::from_text(&ImageRecord::new("x", location), text);
        d.verified = true;
        d
    }

    fn stubs(reply: &str) -> (StubBackend, StubBackend) {
        (
            StubBackend::new(BackendSpec::stub_embedder(1)).unwrap(),
            StubBackend::new(BackendSpec::stub_extractor(&format!("fixed:{reply}"))).unwrap(),
        )
    }

    #[test]
    fn chunk_text_concatenation() {
        assert_eq!(chunk_text("a cat.", None), "a cat.");
        assert_eq!(chunk_text("a cat.", Some("  ")), "a cat.");
        assert_eq!(chunk_text("a cat.", Some("caption")), "a cat.\ncaption");
        assert_eq!(chunk_text("", Some("caption")), "caption");
    }

    #[test]
    fn one_item_one_entity() {
        let (emb, ext) = stubs(FLOOD);
        let out = build_graph(
            &[(verified("a.png", "Flood waters rose."), None)],
            &emb,
            &ext,
            OnError::Abort,
        )
        .unwrap();
        assert_eq!(out.graph.entity_count(), 1);
        assert_eq!(out.graph.chunk_count(), 1);
        let e = out.graph.entity("flood").unwrap();
        assert!(e.image_links.contains("a.png"));
    }

    #[test]
    fn no_items_empty_graph_with_manifest() {
        let (emb, ext) = stubs(FLOOD);
        let out = build_graph(&[], &emb, &ext, OnError::Abort).unwrap();
        assert!(out.graph.is_empty());
        assert_eq!(out.graph.manifest.backends.len(), 2);
    }

    #[test]
    fn same_entity_from_two_items() {
        let (emb, ext) = stubs(FLOOD);
        let out = build_graph(
            &[
                (verified("a.png", "Flood one."), None),
                (verified("b.png", "Flood two."), None),
            ],
            &emb,
            &ext,
            OnError::Abort,
        )
        .unwrap();
        assert_eq!(out.graph.entity_count(), 1);
        assert_eq!(out.graph.entity("flood").unwrap().source_chunk_ids.len(), 2);
    }

    #[test]
    fn failures_skip_or_abort() {
        let emb = StubBackend::new(BackendSpec::stub_embedder(1)).unwrap();
        let ext = StubBackend::new(
            BackendSpec::stub_extractor(&format!("fixed:{FLOOD}")).with_fail_on("poison"),
        )
        .unwrap();
        let corpus = vec![
            (verified("a.png", "fine text"), None),
            (verified("b.png", "poison text"), None),
        ];
        let out = build_graph(&corpus, &emb, &ext, OnError::Skip).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.graph.chunk_count(), 1);
        let err = build_graph(&corpus, &emb, &ext, OnError::Abort).unwrap_err();
        assert!(matches!(err, Error::Chunk { .. }));
    }
}
