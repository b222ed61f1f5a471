//! Knowledge graph: entities keyed by normalized name, directed labelled
//! relations between them, and the text chunks they were extracted from.
//! Entities remember the storage locations of the images behind their
//! chunks, which is how the graph links back to visual data.

mod build;
pub mod extract;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use build::{
    build_graph, chunk_id_for, chunk_text, BuildFailure, BuildOutcome, GraphBuilder, OnError,
    PreparedChunk,
};
pub use extract::{
    build_extraction_prompt, parse_extraction_output, serialize_records, ExtractedEntity,
    ExtractedRelation, ExtractionOutput, ParseDiagnostic,
};
pub use store::{graph_file_paths, load_graph, save_graph, GRAPH_FILES, GRAPH_SCHEMA_VERSION};

use crate::gateway::EmbeddingVector;

pub const UNKNOWN_TYPE: &str = "unknown";
pub const DESCRIPTION_SEPARATOR: &str = "; ";
pub const DEFAULT_RELATION_LABEL: &str = "related to";

/// Case-folded, whitespace-collapsed entity name.
pub fn normalize_key(name: &str) -> String {
    collapse_whitespace(&name.to_lowercase())
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn append_segment(target: &mut String, segment: &str) {
    let segment = segment.trim();
    if segment.is_empty() {
        return;
    }
    if !target.is_empty() {
        target.push_str(DESCRIPTION_SEPARATOR);
    }
    target.push_str(segment);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub key: String,
    pub display_name: String,
    pub entity_type: String,
    pub description: String,
    pub image_links: BTreeSet<String>,
    pub source_chunk_ids: BTreeSet<String>,
}

impl Entity {
    pub fn new(display_name: &str, entity_type: &str, description: &str) -> Self {
        let entity_type = entity_type.trim();
        Entity {
            key: normalize_key(display_name),
            display_name: collapse_whitespace(display_name),
            entity_type: if entity_type.is_empty() {
                UNKNOWN_TYPE.to_string()
            } else {
                entity_type.to_string()
            },
            description: description.trim().to_string(),
            image_links: BTreeSet::new(),
            source_chunk_ids: BTreeSet::new(),
        }
    }

    fn absorb(&mut self, other: &Entity) {
        if self.entity_type == UNKNOWN_TYPE && other.entity_type != UNKNOWN_TYPE {
            self.entity_type = other.entity_type.clone();
        }
        append_segment(&mut self.description, &other.description);
        self.image_links.extend(other.image_links.iter().cloned());
        self.source_chunk_ids
            .extend(other.source_chunk_ids.iter().cloned());
    }
}

/// Identity of a relation: `(head, label, tail)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationKey {
    pub head: String,
    pub label: String,
    pub tail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub head: String,
    pub tail: String,
    pub label: String,
    pub description: String,
    pub keywords: Vec<String>,
    pub weight: f64,
    pub source_chunk_ids: BTreeSet<String>,
}

impl Relation {
    pub fn key(&self) -> RelationKey {
        RelationKey {
            head: self.head.clone(),
            label: self.label.clone(),
            tail: self.tail.clone(),
        }
    }

    fn absorb(&mut self, other: &Relation) {
        append_segment(&mut self.description, &other.description);
        for kw in &other.keywords {
            if !self.keywords.contains(kw) {
                self.keywords.push(kw.clone());
            }
        }
        self.weight += other.weight;
        self.source_chunk_ids
            .extend(other.source_chunk_ids.iter().cloned());
    }
}

/// Unit of text fed to the extractor and indexed for vector retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub text: String,
    pub embedding: EmbeddingVector,
    pub source_image: Option<String>,
}

/// Build metadata stored next to the graph files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Backend role → model identity.
    #[serde(default)]
    pub backends: BTreeMap<String, String>,
    /// Omitted in deterministic builds so outputs stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

/// Entities, relations and chunks. Relations are unique by
/// `(head, label, tail)`; both endpoints always exist as entities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    entities: BTreeMap<String, Entity>,
    relations: BTreeMap<RelationKey, Relation>,
    chunks: BTreeMap<String, Chunk>,
    pub manifest: GraphManifest,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&self, key: &str) -> Option<&Entity> {
        self.entities.get(key)
    }

    pub fn entities(&self) -> impl ExactSizeIterator<Item = &Entity> {
        self.entities.values()
    }

    /// Relations in canonical order (head, label, tail).
    pub fn relations(&self) -> impl ExactSizeIterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn relation(&self, key: &RelationKey) -> Option<&Relation> {
        self.relations.get(key)
    }

    pub fn chunks(&self) -> impl ExactSizeIterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn chunk(&self, id: &str) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty() && self.chunks.is_empty()
    }

    pub fn register_chunk(&mut self, chunk: Chunk) {
        self.chunks.insert(chunk.chunk_id.clone(), chunk);
    }

    /// Merge one extraction batch that came from `chunk`.
    ///
    /// Entities colliding on their normalized key merge (descriptions joined
    /// with `"; "`, links and chunk ids unioned). Relation endpoints missing
    /// from the graph become `unknown`-typed placeholder entities. The
    /// chunk id and image location are attached to every entity the batch
    /// names, as an entity record or as a relation endpoint. Returns one
    /// message per skipped record.
    pub fn merge(
        &mut self,
        entities: &[ExtractedEntity],
        relations: &[ExtractedRelation],
        chunk: Chunk,
    ) -> Vec<String> {
        let mut skipped = Vec::new();
        let chunk_id = chunk.chunk_id.clone();
        let image = chunk.source_image.clone();
        self.register_chunk(chunk);

        let stamp = |e: &mut Entity| {
            e.source_chunk_ids.insert(chunk_id.clone());
            if let Some(img) = &image {
                e.image_links.insert(img.clone());
            }
        };

        for extracted in entities {
            let mut incoming = Entity::new(
                &extracted.name,
                &extracted.entity_type,
                &extracted.description,
            );
            if incoming.key.is_empty() {
                skipped.push("entity with empty name".to_string());
                continue;
            }
            stamp(&mut incoming);
            self.upsert_entity(incoming);
        }

        for extracted in relations {
            let head = normalize_key(&extracted.source);
            let tail = normalize_key(&extracted.target);
            if head.is_empty() || tail.is_empty() {
                skipped.push("relation with empty endpoint".to_string());
                continue;
            }
            for (key, raw) in [(&head, &extracted.source), (&tail, &extracted.target)] {
                match self.entities.get_mut(key) {
                    Some(existing) => stamp(existing),
                    None => {
                        let mut placeholder = Entity::new(raw, UNKNOWN_TYPE, "");
                        stamp(&mut placeholder);
                        self.entities.insert(key.clone(), placeholder);
                    }
                }
            }
            let mut label = collapse_whitespace(&extracted.description);
            if label.is_empty() {
                label = DEFAULT_RELATION_LABEL.to_string();
            }
            let relation = Relation {
                head,
                tail,
                description: extracted.description.trim().to_string(),
                label,
                keywords: extracted.keywords.clone(),
                weight: extracted.weight.max(0.0),
                source_chunk_ids: BTreeSet::from([chunk_id.clone()]),
            };
            self.upsert_relation(relation);
        }
        skipped
    }

    /// Insert or merge an entity by key.
    pub fn upsert_entity(&mut self, entity: Entity) {
        match self.entities.get_mut(&entity.key) {
            Some(existing) => existing.absorb(&entity),
            None => {
                self.entities.insert(entity.key.clone(), entity);
            }
        }
    }

    /// Insert or merge a relation. Missing endpoints get placeholders.
    pub fn upsert_relation(&mut self, relation: Relation) {
        for key in [&relation.head, &relation.tail] {
            if !self.entities.contains_key(key) {
                let placeholder = Entity::new(key, UNKNOWN_TYPE, "");
                self.entities.insert(key.clone(), placeholder);
            }
        }
        match self.relations.get_mut(&relation.key()) {
            Some(existing) => existing.absorb(&relation),
            None => {
                self.relations.insert(relation.key(), relation);
            }
        }
    }

    /// Every relation endpoint exists and every entity key is normalized.
    pub fn check_integrity(&self) -> Result<(), String> {
        for (key, e) in &self.entities {
            if *key != e.key {
                return Err(format!("entity stored under `{key}` has key `{}`", e.key));
            }
            if normalize_key(key) != *key || key.is_empty() {
                return Err(format!("entity key `{key}` is not normalized"));
            }
        }
        for r in self.relations.values() {
            for end in [&r.head, &r.tail] {
                if !self.entities.contains_key(end) {
                    return Err(format!(
                        "relation ({}, {}, {}) references missing entity `{end}`",
                        r.head, r.label, r.tail
                    ));
                }
            }
            if !(r.weight >= 0.0) {
                return Err(format!("relation ({}, {}) has negative weight", r.head, r.tail));
            }
        }
        Ok(())
    }

    /// Relations touching an entity, in canonical order.
    pub fn incident_relations<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Relation> {
        self.relations
            .values()
            .filter(move |r| r.head == key || r.tail == key)
    }

    pub(crate) fn from_parts(
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        chunks: Vec<Chunk>,
        manifest: GraphManifest,
    ) -> Result<Self, String> {
        let mut g = KnowledgeGraph {
            manifest,
            ..Default::default()
        };
        for e in entities {
            if g.entities.insert(e.key.clone(), e).is_some() {
                return Err("duplicate entity key".into());
            }
        }
        for r in relations {
            let key = r.key();
            if g.relations.insert(key.clone(), r).is_some() {
                return Err(format!(
                    "duplicate relation ({}, {}, {})",
                    key.head, key.label, key.tail
                ));
            }
        }
        for c in chunks {
            if g.chunks.insert(c.chunk_id.clone(), c).is_some() {
                return Err("duplicate chunk id".into());
            }
        }
        g.check_integrity()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(id: &str, image: Option<&str>) -> Chunk {
        Chunk {
            chunk_id: id.into(),
            text: "t".into(),
            embedding: EmbeddingVector::new(vec![1.0]),
            source_image: image.map(Into::into),
        }
    }

    fn ent(name: &str, desc: &str) -> ExtractedEntity {
        ExtractedEntity {
            name: name.into(),
            entity_type: "event".into(),
            description: desc.into(),
        }
    }

    fn rel(s: &str, t: &str, label: &str) -> ExtractedRelation {
        ExtractedRelation {
            source: s.into(),
            target: t.into(),
            description: label.into(),
            keywords: vec!["k".into()],
            weight: 0.5,
        }
    }

    #[test]
    fn keys_normalize() {
        assert_eq!(normalize_key("  New   York\tCity "), "new york city");
        assert_eq!(normalize_key(&normalize_key("A  B")), normalize_key("A  B"));
    }

    #[test]
    fn colliding_entities_merge() {
        let mut g = KnowledgeGraph::new();
        g.merge(&[ent("Flood", "rising water")], &[], chunk("c1", Some("a.png")));
        g.merge(&[ent("FLOOD", "in Houston")], &[], chunk("c2", Some("b.png")));
        assert_eq!(g.entity_count(), 1);
        let e = g.entity("flood").unwrap();
        assert_eq!(e.display_name, "Flood");
        assert_eq!(e.description.split(DESCRIPTION_SEPARATOR).count(), 2);
        assert_eq!(e.image_links.len(), 2);
        assert_eq!(e.source_chunk_ids.len(), 2);
    }

    #[test]
    fn dangling_endpoint_gets_placeholder() {
        let mut g = KnowledgeGraph::new();
        g.merge(&[ent("a", "")], &[rel("a", "b", "helps")], chunk("c1", Some("x.png")));
        let b = g.entity("b").unwrap();
        assert_eq!(b.entity_type, UNKNOWN_TYPE);
        assert!(b.image_links.contains("x.png"));
        assert!(g.check_integrity().is_ok());
    }

    #[test]
    fn placeholder_type_upgrades_later() {
        let mut g = KnowledgeGraph::new();
        g.merge(&[], &[rel("a", "b", "r")], chunk("c1", None));
        g.merge(&[ent("B", "now known")], &[], chunk("c2", None));
        assert_eq!(g.entity("b").unwrap().entity_type, "event");
    }

    #[test]
    fn empty_batch_only_registers_chunk() {
        let mut g = KnowledgeGraph::new();
        g.merge(&[ent("a", "d")], &[], chunk("c1", None));
        let before_entities: Vec<_> = g.entities().cloned().collect();
        g.merge(&[], &[], chunk("c2", None));
        assert_eq!(g.entities().cloned().collect::<Vec<_>>(), before_entities);
        assert_eq!(g.chunk_count(), 2);
    }

    #[test]
    fn duplicate_relations_accumulate() {
        let mut g = KnowledgeGraph::new();
        g.merge(&[], &[rel("a", "b", "helps")], chunk("c1", None));
        g.merge(&[], &[rel("A", "B", "helps")], chunk("c2", None));
        assert_eq!(g.relation_count(), 1);
        let r = g.relations().next().unwrap();
        assert_eq!(r.weight, 1.0);
        assert_eq!(r.source_chunk_ids.len(), 2);
        assert_eq!(r.keywords, ["k"]);
    }

    #[test]
    fn empty_label_gets_default() {
        let mut g = KnowledgeGraph::new();
        g.merge(&[], &[rel("a", "b", "  ")], chunk("c1", None));
        assert_eq!(g.relations().next().unwrap().label, DEFAULT_RELATION_LABEL);
    }
}
