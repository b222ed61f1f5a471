//! Augmented prompt assembly and answering.
//!
//! Layout of the full text (no trailing newline):
//!
//! ```text
//! <query>
//! Evidence:
//! [head]->label->[tail]
//! ...
//! Image sources:
//! <location>
//! ...
//! Passages:
//! <chunk text>
//! ```
//!
//! Each section is present only when it has lines; an empty subgraph yields
//! the bare query.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Relation};
use crate::retriever::{retrieve, RetrievalBackends, RetrievalRequest, RetrievedSubgraph};
use crate::gateway::ModelBackend;

pub const EVIDENCE_HEADER: &str = "Evidence:";
pub const IMAGE_HEADER: &str = "Image sources:";
pub const PASSAGE_HEADER: &str = "Passages:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedPrompt {
    pub query: String,
    pub rendered_evidence: Vec<String>,
    pub image_links: Vec<String>,
    pub full_text: String,
}

fn escape(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        if matches!(c, '\\' | '[' | ']') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                out.push(n);
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// `[head]->label->[tail]` with display names bracket-escaped.
pub fn render_triplet(relation: &Relation, graph: &KnowledgeGraph) -> Result<String> {
    let name = |key: &str| {
        graph
            .entity(key)
            .map(|e| escape(&e.display_name))
            .ok_or_else(|| Error::CorruptGraph(format!("relation endpoint `{key}` is not an entity")))
    };
    Ok(format!(
        "[{}]->{}->[{}]",
        name(&relation.head)?,
        relation.label,
        name(&relation.tail)?
    ))
}

fn is_escaped(bytes: &[u8], pos: usize) -> bool {
    bytes[..pos].iter().rev().take_while(|b| **b == b'\\').count() % 2 == 1
}

/// Inverse of [`render_triplet`]: `(head, label, tail)` display names.
pub fn parse_triplet_line(line: &str) -> Option<(String, String, String)> {
    let bytes = line.as_bytes();
    if bytes.first() != Some(&b'[') || bytes.last() != Some(&b']') || bytes.len() < 2 {
        return None;
    }
    let head_end = (1..bytes.len()).find(|&i| bytes[i] == b']' && !is_escaped(bytes, i))?;
    if !line.get(head_end + 1..)?.starts_with("->") {
        return None;
    }
    let rest_start = head_end + 3;
    let tail_open = (rest_start..bytes.len() - 1)
        .rev()
        .find(|&i| bytes[i] == b'[' && !is_escaped(bytes, i))?;
    if tail_open < rest_start + 2 || &line[tail_open - 2..tail_open] != "->" {
        return None;
    }
    let label = &line[rest_start..tail_open - 2];
    Some((
        unescape(&line[1..head_end]),
        label.to_string(),
        unescape(&line[tail_open + 1..line.len() - 1]),
    ))
}

pub fn augment_prompt(
    query: &str,
    subgraph: &RetrievedSubgraph,
    graph: &KnowledgeGraph,
) -> Result<AugmentedPrompt> {
    let mut evidence = Vec::with_capacity(subgraph.triplets.len());
    let mut links: Vec<String> = Vec::new();
    for t in &subgraph.triplets {
        evidence.push(render_triplet(&t.relation, graph)?);
        for key in [&t.relation.head, &t.relation.tail] {
            let entity = graph.entity(key).expect("checked by render_triplet");
            for link in &entity.image_links {
                if !links.contains(link) {
                    links.push(link.clone());
                }
            }
        }
    }

    let mut full_text = query.to_string();
    let mut section = |header: &str, lines: &mut dyn Iterator<Item = &str>| {
        let mut lines = lines.peekable();
        if lines.peek().is_some() {
            full_text.push('\n');
            full_text.push_str(header);
            for l in lines {
                full_text.push('\n');
                full_text.push_str(l);
            }
        }
    };
    section(EVIDENCE_HEADER, &mut evidence.iter().map(String::as_str));
    section(IMAGE_HEADER, &mut links.iter().map(String::as_str));
    section(
        PASSAGE_HEADER,
        &mut subgraph.chunks.iter().map(|c| c.chunk.text.as_str()),
    );

    Ok(AugmentedPrompt {
        query: query.to_string(),
        rendered_evidence: evidence,
        image_links: links,
        full_text,
    })
}

/// Retrieve, augment and complete. Backend failures carry the prompt.
pub fn answer(
    query: &str,
    graph: &KnowledgeGraph,
    request: &RetrievalRequest,
    backends: RetrievalBackends<'_>,
    answerer: &dyn ModelBackend,
) -> Result<(String, AugmentedPrompt)> {
    let request = RetrievalRequest {
        query: query.to_string(),
        ..request.clone()
    };
    let subgraph = retrieve(&request, graph, backends)?;
    let prompt = augment_prompt(query, &subgraph, graph)?;
    match answerer.complete(&prompt.full_text) {
        Ok(text) => Ok((text, prompt)),
        Err(e) => Err(Error::Answer {
            prompt: Box::new(prompt),
            source: Box::new(e),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendSpec, StubBackend};
    use crate::kg::{Chunk, ExtractedEntity, ExtractedRelation};
    use crate::gateway::EmbeddingVector;
    use crate::retriever::{RetrievalMode, ScoredRelation, TripletScore};

    fn graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        let ents = vec![ExtractedEntity {
            name: "Flood".into(),
            entity_type: "event".into(),
            description: "water".into(),
        }];
        let rels = vec![ExtractedRelation {
            source: "Flood".into(),
            target: "Bridge [north]".into(),
            description: "damages".into(),
            keywords: vec![],
            weight: 1.0,
        }];
        g.merge(
            &ents,
            &rels,
            Chunk {
                chunk_id: "c1".into(),
                text: "t".into(),
                embedding: EmbeddingVector::new(vec![1.0]),
                source_image: Some("img/a.png".into()),
            },
        );
        g
    }

    fn subgraph(g: &KnowledgeGraph) -> RetrievedSubgraph {
        RetrievedSubgraph {
            triplets: g
                .relations()
                .map(|r| ScoredRelation {
                    relation: r.clone(),
                    score: TripletScore {
                        overlap: 1,
                        weight: r.weight,
                    },
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn renders_and_escapes() {
        let g = graph();
        let r = g.relations().next().unwrap();
        let line = render_triplet(r, &g).unwrap();
        assert_eq!(line, r"[Flood]->damages->[Bridge \[north\]]");
        assert_eq!(
            parse_triplet_line(&line).unwrap(),
            ("Flood".into(), "damages".into(), "Bridge [north]".into())
        );
    }

    #[test]
    fn dangling_endpoint_is_corrupt() {
        let g = graph();
        let mut r = g.relations().next().unwrap().clone();
        r.head = "ghost".into();
        assert!(matches!(render_triplet(&r, &g), Err(Error::CorruptGraph(_))));
    }

    #[test]
    fn empty_subgraph_is_bare_query() {
        let g = graph();
        let p = augment_prompt("why?", &RetrievedSubgraph::default(), &g).unwrap();
        assert_eq!(p.full_text, "why?");
    }

    #[test]
    fn image_links_are_listed_once() {
        let g = graph();
        let p = augment_prompt("q", &subgraph(&g), &g).unwrap();
        assert_eq!(p.image_links, ["img/a.png"]);
        assert_eq!(
            p.full_text,
            "q\nEvidence:\n[Flood]->damages->[Bridge \\[north\\]]\nImage sources:\nimg/a.png"
        );
    }

    #[test]
    fn echo_answerer_returns_query() {
        let g = graph();
        let emb = StubBackend::new(BackendSpec::stub_embedder(1)).unwrap();
        let ans = StubBackend::new(BackendSpec::stub_extractor("echo-first-line")).unwrap();
        let backends = RetrievalBackends {
            embedder: &emb,
            keyword_extractor: None,
        };
        let req = RetrievalRequest::new("flood", RetrievalMode::Hybrid);
        let (text, prompt) = answer("what about the flood", &g, &req, backends, &ans).unwrap();
        assert_eq!(text, "what about the flood");
        assert_eq!(prompt.rendered_evidence.len(), 1);
    }

    #[test]
    fn answer_error_keeps_prompt() {
        let g = graph();
        let emb = StubBackend::new(BackendSpec::stub_embedder(1)).unwrap();
        let ans =
            StubBackend::new(BackendSpec::stub_extractor("fixed:x").with_fail_on("Evidence")).unwrap();
        let backends = RetrievalBackends {
            embedder: &emb,
            keyword_extractor: None,
        };
        let req = RetrievalRequest::new("flood", RetrievalMode::Local);
        match answer("flood", &g, &req, backends, &ans) {
            Err(Error::Answer { prompt, .. }) => assert!(prompt.full_text.starts_with("flood\n")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["", "[a]", "a->b->[c]", "[a]->b->c", "[a]-b->[c]", "[a\\]->b->[c]"] {
            assert!(parse_triplet_line(bad).is_none(), "{bad}");
        }
    }
}
