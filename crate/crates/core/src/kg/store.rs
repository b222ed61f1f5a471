//! On-disk graph layout.
//!
//! A graph directory holds four files:
//!
//! | file              | header `schema`  | one record per line                                               |
//! |-------------------|------------------|-------------------------------------------------------------------|
//! | `entities.jsonl`  | `mmkg.entities`  | `key, name, type, description, image_links[], chunk_ids[]`        |
//! | `relations.jsonl` | `mmkg.relations` | `head, label, tail, description, keywords[], weight, chunk_ids[]` |
//! | `chunks.jsonl`    | `mmkg.chunks`    | `id, text, source_image, embedding[]`                             |
//! | `manifest.json`   | `mmkg.manifest`  | single object: build metadata                                     |
//!
//! Every `.jsonl` file opens with `{"schema":..,"version":1}`. Records are
//! written in canonical order so equal graphs serialize to equal bytes.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Chunk, Entity, GraphManifest, KnowledgeGraph, Relation};
use crate::error::{Error, Result};
use crate::gateway::EmbeddingVector;
use crate::jsonl;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;
pub const GRAPH_FILES: [&str; 4] = [
    "entities.jsonl",
    "relations.jsonl",
    "chunks.jsonl",
    "manifest.json",
];

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityLine {
    key: String,
    name: String,
    #[serde(rename = "type")]
    entity_type: String,
    description: String,
    image_links: BTreeSet<String>,
    chunk_ids: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationLine {
    head: String,
    label: String,
    tail: String,
    description: String,
    keywords: Vec<String>,
    weight: f64,
    chunk_ids: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChunkLine {
    id: String,
    text: String,
    source_image: Option<String>,
    embedding: EmbeddingVector,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    schema: String,
    version: u32,
    #[serde(flatten)]
    manifest: GraphManifest,
}

pub fn graph_file_paths(dir: &Path) -> Vec<PathBuf> {
    GRAPH_FILES.iter().map(|f| dir.join(f)).collect()
}

fn write_jsonl<T: Serialize>(path: &Path, schema: &str, records: impl Iterator<Item = T>) -> Result<()> {
    let mut out = jsonl::line(&Header {
        schema: schema.to_string(),
        version: GRAPH_SCHEMA_VERSION,
    });
    for r in records {
        out.push_str(&jsonl::line(&r));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn save_graph(graph: &KnowledgeGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(
        &dir.join(GRAPH_FILES[0]),
        "mmkg.entities",
        graph.entities().map(|e| EntityLine {
            key: e.key.clone(),
            name: e.display_name.clone(),
            entity_type: e.entity_type.clone(),
            description: e.description.clone(),
            image_links: e.image_links.clone(),
            chunk_ids: e.source_chunk_ids.clone(),
        }),
    )?;
    write_jsonl(
        &dir.join(GRAPH_FILES[1]),
        "mmkg.relations",
        graph.relations().map(|r| RelationLine {
            head: r.head.clone(),
            label: r.label.clone(),
            tail: r.tail.clone(),
            description: r.description.clone(),
            keywords: r.keywords.clone(),
            weight: r.weight,
            chunk_ids: r.source_chunk_ids.clone(),
        }),
    )?;
    write_jsonl(
        &dir.join(GRAPH_FILES[2]),
        "mmkg.chunks",
        graph.chunks().map(|c| ChunkLine {
            id: c.chunk_id.clone(),
            text: c.text.clone(),
            source_image: c.source_image.clone(),
            embedding: c.embedding.clone(),
        }),
    )?;
    let manifest = ManifestFile {
        schema: "mmkg.manifest".into(),
        version: GRAPH_SCHEMA_VERSION,
        manifest: graph.manifest.clone(),
    };
    let path = dir.join(GRAPH_FILES[3]);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn check_header(path: &Path, line_no: usize, header: &Header, schema: &str) -> Result<()> {
    if header.schema != schema {
        return Err(Error::format(
            Some(line_no),
            format!("{}: expected schema {schema}, found {}", path.display(), header.schema),
        ));
    }
    if header.version != GRAPH_SCHEMA_VERSION {
        return Err(Error::format(
            Some(line_no),
            format!(
                "{}: schema version {} is not supported (expected {GRAPH_SCHEMA_VERSION})",
                path.display(),
                header.version
            ),
        ));
    }
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = jsonl::records(&text);
    let (line_no, first) = lines
        .next()
        .ok_or_else(|| Error::format(Some(1), format!("{}: missing header", path.display())))?;
    let header: Header = serde_json::from_str(first)
        .map_err(|e| Error::format(Some(line_no), format!("{}: bad header: {e}", path.display())))?;
    check_header(path, line_no, &header, schema)?;
    lines
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::format(Some(n), format!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn load_graph(dir: &Path) -> Result<KnowledgeGraph> {
    let entities: Vec<EntityLine> = read_jsonl(&dir.join(GRAPH_FILES[0]), "mmkg.entities")?;
    let relations: Vec<RelationLine> = read_jsonl(&dir.join(GRAPH_FILES[1]), "mmkg.relations")?;
    let chunks: Vec<ChunkLine> = read_jsonl(&dir.join(GRAPH_FILES[2]), "mmkg.chunks")?;

    let manifest_path = dir.join(GRAPH_FILES[3]);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(None, format!("{}: {e}", manifest_path.display())))?;
    check_header(
        &manifest_path,
        1,
        &Header {
            schema: manifest.schema,
            version: manifest.version,
        },
        "mmkg.manifest",
    )?;

    KnowledgeGraph::from_parts(
        entities
            .into_iter()
            .map(|e| Entity {
                key: e.key,
                display_name: e.name,
                entity_type: e.entity_type,
                description: e.description,
                image_links: e.image_links,
                source_chunk_ids: e.chunk_ids,
            })
            .collect(),
        relations
            .into_iter()
            .map(|r| Relation {
                head: r.head,
                tail: r.tail,
                label: r.label,
                description: r.description,
                keywords: r.keywords,
                weight: r.weight,
                source_chunk_ids: r.chunk_ids,
            })
            .collect(),
        chunks
            .into_iter()
            .map(|c| Chunk {
                chunk_id: c.id,
                text: c.text,
                embedding: c.embedding,
                source_image: c.source_image,
            })
            .collect(),
        manifest.manifest,
    )
    .map_err(Error::CorruptGraph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{ExtractedEntity, ExtractedRelation};

    fn sample() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        let ents: Vec<ExtractedEntity> = ["Flood", "Bridge", "Houston"]
            .iter()
            .map(|n| ExtractedEntity {
                name: n.to_string(),
                entity_type: "thing".into(),
                description: format!("about {n}"),
            })
            .collect();
        let rels = vec![
            ExtractedRelation {
                source: "Flood".into(),
                target: "Bridge".into(),
                description: "damages".into(),
                keywords: vec!["harm".into()],
                weight: 0.75,
            },
            ExtractedRelation {
                source: "Flood".into(),
                target: "Houston".into(),
                description: "located in".into(),
                keywords: vec![],
                weight: 1.0,
            },
        ];
        g.merge(
            &ents,
            &rels,
            Chunk {
                chunk_id: "c1".into(),
                text: "Flood damages bridge in Houston.".into(),
                embedding: EmbeddingVector::new(vec![0.1, -0.2, 0.3]),
                source_image: Some("img/1.png".into()),
            },
        );
        g.manifest.config_hash = Some("abc".into());
        g
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample();
        assert_eq!((g.entity_count(), g.relation_count()), (3, 2));
        save_graph(&g, dir.path()).unwrap();
        assert_eq!(load_graph(dir.path()).unwrap(), g);
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&KnowledgeGraph::new(), dir.path()).unwrap();
        assert_eq!(load_graph(dir.path()).unwrap(), KnowledgeGraph::new());
    }

    #[test]
    fn ghost_entity_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&sample(), dir.path()).unwrap();
        let path = dir.path().join("relations.jsonl");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str(
            r#"{"head":"flood","label":"haunts","tail":"ghost","description":"","keywords":[],"weight":1.0,"chunk_ids":[]}"#,
        );
        text.push('\n');
        fs::write(&path, text).unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::CorruptGraph(_))));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&sample(), dir.path()).unwrap();
        let path = dir.path().join("entities.jsonl");
        let text = fs::read_to_string(&path)
            .unwrap()
            .replacen("\"version\":1", "\"version\":99", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn unnormalized_key_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&sample(), dir.path()).unwrap();
        let path = dir.path().join("entities.jsonl");
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"key\":\"houston\"", "\"key\":\"Houston\"");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::CorruptGraph(_))));
    }
}
