//! Query-time subgraph retrieval.
//!
//! Five modes:
//!
//! * `naive` ranks chunks by cosine similarity to the query; no triplets.
//! * `local` matches low-level keywords against entity keys and
//!   descriptions and returns the 1-hop relations of matched entities.
//! * `global` matches high-level keywords against relation labels and
//!   keywords.
//! * `hybrid` merges local (⌈k/2⌉ slots) and global (⌊k/2⌋ slots).
//! * `mix` is hybrid's triplets plus naive's chunks.
//!
//! Keyword matching is case-folded substring containment. Triplets are
//! ranked by (matching keyword count, relation weight), chunks by cosine;
//! ties break on the canonical relation key or the chunk id, ascending.

mod keywords;
pub mod oracle;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use keywords::{
    extract_keywords, fallback_keywords, is_stopword, keyword_prompt, parse_keyword_reply,
    Keywords, STOPWORDS,
};

use crate::error::{Error, Result};
use crate::gateway::{cosine_similarity, EmbeddingVector, ModelBackend};
use crate::kg::{Chunk, KnowledgeGraph, Relation, RelationKey};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMode {
    Naive,
    Local,
    Global,
    #[default]
    Hybrid,
    Mix,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 5] = [
        RetrievalMode::Naive,
        RetrievalMode::Local,
        RetrievalMode::Global,
        RetrievalMode::Hybrid,
        RetrievalMode::Mix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::Naive => "naive",
            RetrievalMode::Local => "local",
            RetrievalMode::Global => "global",
            RetrievalMode::Hybrid => "hybrid",
            RetrievalMode::Mix => "mix",
        }
    }
}

impl std::fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RetrievalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(RetrievalMode::Naive),
            "local" => Ok(RetrievalMode::Local),
            "global" => Ok(RetrievalMode::Global),
            "hybrid" => Ok(RetrievalMode::Hybrid),
            "mix" => Ok(RetrievalMode::Mix),
            other => Err(Error::invalid(format!("unknown retrieval mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalRequest {
    pub query: String,
    pub mode: RetrievalMode,
    pub top_k_triplets: usize,
    pub top_k_chunks: usize,
}

impl RetrievalRequest {
    pub fn new(query: &str, mode: RetrievalMode) -> Self {
        RetrievalRequest {
            query: query.to_string(),
            mode,
            top_k_triplets: 10,
            top_k_chunks: 5,
        }
    }

    pub fn with_top_k(mut self, triplets: usize, chunks: usize) -> Self {
        self.top_k_triplets = triplets;
        self.top_k_chunks = chunks;
        self
    }
}

/// Lexicographic triplet score: matching keyword count, then weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletScore {
    pub overlap: usize,
    pub weight: f64,
}

impl Eq for TripletScore {}

impl Ord for TripletScore {
    fn cmp(&self, other: &Self) -> Ordering {
        self.overlap
            .cmp(&other.overlap)
            .then_with(|| self.weight.total_cmp(&other.weight))
    }
}

impl PartialOrd for TripletScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRelation {
    pub relation: Relation,
    pub score: TripletScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSubgraph {
    pub triplets: Vec<ScoredRelation>,
    pub chunks: Vec<ScoredChunk>,
    pub keywords: Keywords,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl RetrievedSubgraph {
    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty() && self.chunks.is_empty()
    }
}

#[derive(Clone, Copy)]
pub struct RetrievalBackends<'a> {
    pub embedder: &'a dyn ModelBackend,
    /// Extractor asked for query keywords; the stopword rule is used without one.
    pub keyword_extractor: Option<&'a dyn ModelBackend>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexTarget {
    Chunks,
    Entities,
}

/// Ranked id with its cosine score.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorHit {
    pub id: String,
    pub score: f64,
}

pub(crate) fn sort_triplets(list: &mut [ScoredRelation]) {
    list.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then_with(|| a.relation.key().cmp(&b.relation.key()))
    });
}

fn sort_hits(hits: &mut [VectorHit]) {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
}

/// Union of two ranked lists keeping each relation's higher score.
pub(crate) fn merge_ranked(a: Vec<ScoredRelation>, b: Vec<ScoredRelation>) -> Vec<ScoredRelation> {
    let mut best: BTreeMap<RelationKey, ScoredRelation> = BTreeMap::new();
    for sr in a.into_iter().chain(b) {
        let key = sr.relation.key();
        match best.get(&key) {
            Some(existing) if existing.score >= sr.score => {}
            _ => {
                best.insert(key, sr);
            }
        }
    }
    let mut out: Vec<ScoredRelation> = best.into_values().collect();
    sort_triplets(&mut out);
    out
}

pub(crate) fn hybrid_budget(k: usize) -> (usize, usize) {
    (k.div_ceil(2), k / 2)
}

struct IndexedRelation {
    label: String,
    keywords: Vec<String>,
}

/// Precomputed lookup structures over one graph.
pub struct Retriever<'g> {
    graph: &'g KnowledgeGraph,
    relations: Vec<&'g Relation>,
    folded: Vec<IndexedRelation>,
    entity_keys: Vec<&'g str>,
    entity_desc: Vec<String>,
    adjacency: HashMap<&'g str, Vec<usize>>,
    entity_vectors: Option<Vec<(String, EmbeddingVector)>>,
}

impl<'g> Retriever<'g> {
    pub fn new(graph: &'g KnowledgeGraph) -> Self {
        let relations: Vec<&Relation> = graph.relations().collect();
        let mut adjacency: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in relations.iter().enumerate() {
            adjacency.entry(r.head.as_str()).or_default().push(i);
            if r.tail != r.head {
                adjacency.entry(r.tail.as_str()).or_default().push(i);
            }
        }
        let folded = relations
            .iter()
            .map(|r| IndexedRelation {
                label: r.label.to_lowercase(),
                keywords: r.keywords.iter().map(|k| k.to_lowercase()).collect(),
            })
            .collect();
        Retriever {
            graph,
            relations,
            folded,
            entity_keys: graph.entities().map(|e| e.key.as_str()).collect(),
            entity_desc: graph.entities().map(|e| e.description.to_lowercase()).collect(),
            adjacency,
            entity_vectors: None,
        }
    }

    /// Embed every entity (`name: description`) for entity-level vector search.
    pub fn index_entities(&mut self, embedder: &dyn ModelBackend) -> Result<()> {
        let vectors = self
            .graph
            .entities()
            .map(|e| {
                let text = if e.description.is_empty() {
                    e.display_name.clone()
                } else {
                    format!("{}: {}", e.display_name, e.description)
                };
                Ok((e.key.clone(), embedder.embed_text(&text)?))
            })
            .collect::<Result<Vec<_>>>()?;
        self.entity_vectors = Some(vectors);
        Ok(())
    }

    /// Exact cosine top-k by exhaustive scan. Zero vectors are not ranked.
    pub fn vector_topk(
        &self,
        query: &EmbeddingVector,
        target: IndexTarget,
        k: usize,
    ) -> Result<Vec<VectorHit>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut hits = Vec::new();
        let mut score = |id: &str, v: &EmbeddingVector| -> Result<()> {
            match cosine_similarity(query, v) {
                Ok(s) => hits.push(VectorHit {
                    id: id.to_string(),
                    score: s,
                }),
                Err(Error::DegenerateEmbedding(_)) => {}
                Err(e) => return Err(e),
            }
            Ok(())
        };
        match target {
            IndexTarget::Chunks => {
                for c in self.graph.chunks() {
                    score(&c.chunk_id, &c.embedding)?;
                }
            }
            IndexTarget::Entities => {
                let vectors = self
                    .entity_vectors
                    .as_ref()
                    .ok_or_else(|| Error::invalid("entity vectors are not indexed"))?;
                for (id, v) in vectors {
                    score(id, v)?;
                }
            }
        }
        sort_hits(&mut hits);
        hits.truncate(k);
        Ok(hits)
    }

    fn local(&self, keywords: &[String], k: usize) -> Vec<ScoredRelation> {
        if k == 0 || keywords.is_empty() {
            return Vec::new();
        }
        // keyword-index bitmaps per matched entity
        let mut matched: HashMap<&str, Vec<bool>> = HashMap::new();
        for (key, desc) in self.entity_keys.iter().zip(&self.entity_desc) {
            let hits: Vec<bool> = keywords
                .iter()
                .map(|kw| key.contains(kw.as_str()) || desc.contains(kw.as_str()))
                .collect();
            if hits.iter().any(|h| *h) {
                matched.insert(key, hits);
            }
        }
        let mut candidates: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
        for (key, hits) in &matched {
            for &ri in self.adjacency.get(key).map(Vec::as_slice).unwrap_or_default() {
                let slot = candidates
                    .entry(ri)
                    .or_insert_with(|| vec![false; keywords.len()]);
                for (s, h) in slot.iter_mut().zip(hits) {
                    *s |= *h;
                }
            }
        }
        let mut out: Vec<ScoredRelation> = candidates
            .into_iter()
            .map(|(ri, hits)| ScoredRelation {
                relation: self.relations[ri].clone(),
                score: TripletScore {
                    overlap: hits.iter().filter(|h| **h).count(),
                    weight: self.relations[ri].weight,
                },
            })
            .collect();
        sort_triplets(&mut out);
        out.truncate(k);
        out
    }

    fn global(&self, keywords: &[String], k: usize) -> Vec<ScoredRelation> {
        if k == 0 || keywords.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<ScoredRelation> = self
            .folded
            .iter()
            .enumerate()
            .filter_map(|(ri, f)| {
                let overlap = keywords
                    .iter()
                    .filter(|kw| {
                        f.label.contains(kw.as_str())
                            || f.keywords.iter().any(|rk| rk.contains(kw.as_str()))
                    })
                    .count();
                (overlap > 0).then(|| ScoredRelation {
                    relation: self.relations[ri].clone(),
                    score: TripletScore {
                        overlap,
                        weight: self.relations[ri].weight,
                    },
                })
            })
            .collect();
        sort_triplets(&mut out);
        out.truncate(k);
        out
    }

    fn naive(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn ModelBackend,
        diagnostics: &mut Vec<String>,
    ) -> Result<Vec<ScoredChunk>> {
        if k == 0 || self.graph.chunk_count() == 0 {
            return Ok(Vec::new());
        }
        let q = embedder.embed_text(query)?;
        if q.is_zero() {
            diagnostics.push("query embedded to the zero vector; no chunks ranked".into());
            return Ok(Vec::new());
        }
        Ok(self
            .vector_topk(&q, IndexTarget::Chunks, k)?
            .into_iter()
            .map(|hit| ScoredChunk {
                chunk: self.graph.chunk(&hit.id).expect("hit ids come from the graph").clone(),
                score: hit.score,
            })
            .collect())
    }

    pub fn retrieve(
        &self,
        request: &RetrievalRequest,
        backends: RetrievalBackends<'_>,
    ) -> Result<RetrievedSubgraph> {
        let (keywords, mut diagnostics) =
            extract_keywords(&request.query, backends.keyword_extractor)?;
        let k = request.top_k_triplets;
        let triplets = match request.mode {
            RetrievalMode::Naive => Vec::new(),
            RetrievalMode::Local => self.local(&keywords.low_level, k),
            RetrievalMode::Global => self.global(&keywords.high_level, k),
            RetrievalMode::Hybrid | RetrievalMode::Mix => {
                let (lk, gk) = hybrid_budget(k);
                merge_ranked(
                    self.local(&keywords.low_level, lk),
                    self.global(&keywords.high_level, gk),
                )
            }
        };
        let chunks = match request.mode {
            RetrievalMode::Naive | RetrievalMode::Mix => self.naive(
                &request.query,
                request.top_k_chunks,
                backends.embedder,
                &mut diagnostics,
            )?,
            _ => Vec::new(),
        };
        Ok(RetrievedSubgraph {
            triplets,
            chunks,
            keywords,
            diagnostics,
        })
    }
}

/// Retrieve the subgraph relevant to a query.
pub fn retrieve(
    request: &RetrievalRequest,
    graph: &KnowledgeGraph,
    backends: RetrievalBackends<'_>,
) -> Result<RetrievedSubgraph> {
    Retriever::new(graph).retrieve(request, backends)
}

/// Exact top-k over the graph's chunks or (embedded on the fly) entities.
pub fn vector_topk(
    graph: &KnowledgeGraph,
    query: &EmbeddingVector,
    target: IndexTarget,
    k: usize,
    embedder: Option<&dyn ModelBackend>,
) -> Result<Vec<VectorHit>> {
    let mut r = Retriever::new(graph);
    if target == IndexTarget::Entities {
        let embedder = embedder.ok_or_else(|| Error::invalid("entity search needs an embedder"))?;
        r.index_entities(embedder)?;
    }
    r.vector_topk(query, target, k)
}
