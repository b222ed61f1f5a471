//! Reference retrieval by exhaustive scan, for testing the indexed path.
//!
//! Walks every relation and every chunk directly; no adjacency lists, no
//! precomputed folds, and its own cosine.

use super::{
    extract_keywords, hybrid_budget, merge_ranked, sort_triplets, RetrievalBackends,
    RetrievalMode, RetrievalRequest, RetrievedSubgraph, ScoredChunk, ScoredRelation, TripletScore,
};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Relation};

fn entity_matches(graph: &KnowledgeGraph, key: &str, kw: &str) -> bool {
    let e = graph.entity(key).expect("graph integrity");
    e.key.to_lowercase().contains(kw) || e.description.to_lowercase().contains(kw)
}

fn local_score(graph: &KnowledgeGraph, r: &Relation, keywords: &[String]) -> usize {
    keywords
        .iter()
        .filter(|kw| entity_matches(graph, &r.head, kw) || entity_matches(graph, &r.tail, kw))
        .count()
}

fn global_score(r: &Relation, keywords: &[String]) -> usize {
    keywords
        .iter()
        .filter(|kw| {
            r.label.to_lowercase().contains(kw.as_str())
                || r.keywords
                    .iter()
                    .any(|rk| rk.to_lowercase().contains(kw.as_str()))
        })
        .count()
}

fn scan(
    graph: &KnowledgeGraph,
    k: usize,
    score: impl Fn(&Relation) -> usize,
) -> Vec<ScoredRelation> {
    let mut out: Vec<ScoredRelation> = graph
        .relations()
        .filter_map(|r| {
            let overlap = score(r);
            (overlap > 0).then(|| ScoredRelation {
                relation: r.clone(),
                score: TripletScore {
                    overlap,
                    weight: r.weight,
                },
            })
        })
        .collect();
    sort_triplets(&mut out);
    out.truncate(k);
    out
}

fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

pub fn brute_force_retrieve(
    request: &RetrievalRequest,
    graph: &KnowledgeGraph,
    backends: RetrievalBackends<'_>,
) -> Result<RetrievedSubgraph> {
    let (keywords, mut diagnostics) = extract_keywords(&request.query, backends.keyword_extractor)?;
    let k = request.top_k_triplets;
    let local = |k: usize| scan(graph, k, |r| local_score(graph, r, &keywords.low_level));
    let global = |k: usize| scan(graph, k, |r| global_score(r, &keywords.high_level));

    let triplets = match request.mode {
        RetrievalMode::Naive => Vec::new(),
        RetrievalMode::Local => local(k),
        RetrievalMode::Global => global(k),
        RetrievalMode::Hybrid | RetrievalMode::Mix => {
            let (lk, gk) = hybrid_budget(k);
            merge_ranked(local(lk), global(gk))
        }
    };

    let mut chunks = Vec::new();
    let wants_chunks = matches!(request.mode, RetrievalMode::Naive | RetrievalMode::Mix);
    if wants_chunks && request.top_k_chunks > 0 && graph.chunk_count() > 0 {
        let q = backends.embedder.embed_text(&request.query)?;
        if q.values().iter().all(|v| *v == 0.0) {
            diagnostics.push("query embedded to the zero vector; no chunks ranked".into());
        } else {
            for c in graph.chunks() {
                if c.embedding.dimension() != q.dimension() {
                    return Err(Error::invalid("embedding dimension mismatch"));
                }
                if let Some(score) = cosine(q.values(), c.embedding.values()) {
                    chunks.push(ScoredChunk {
                        chunk: c.clone(),
                        score,
                    });
                }
            }
            chunks.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
            });
            chunks.truncate(request.top_k_chunks);
        }
    }

    Ok(RetrievedSubgraph {
        triplets,
        chunks,
        keywords,
        diagnostics,
    })
}
