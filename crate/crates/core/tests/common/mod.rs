//! Shared fixtures: a stub corpus on disk and a matching pipeline config.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mmkg::corpus::{CorpusManifest, ImageRecord};

pub const TOPICS: [(&str, [&str; 3]); 4] = [
    ("flood", ["flood", "river", "bridge"]),
    ("fire", ["fire", "forest", "smoke"]),
    ("storm", ["storm", "wind", "roof"]),
    ("quake", ["quake", "rubble", "street"]),
];

/// `n` items `item-00..`, cycling through the topics. Image files are
/// written next to the manifest.
pub fn corpus(dir: &Path, n: usize, with_text: bool) -> CorpusManifest {
    fs::create_dir_all(dir.join("images")).unwrap();
    let items = (0..n)
        .map(|i| {
            let (label, tags) = TOPICS[i % TOPICS.len()];
            let id = format!("item-{i:02}");
            let rel = format!("images/{id}.png");
            fs::write(dir.join(&rel), format!("fake png {i}")).unwrap();
            let mut rec = ImageRecord::new(&id, &rel).with_tags(tags).with_label(label);
            rec.base_dir = Some(dir.to_path_buf());
            if with_text {
                rec = rec.with_text(&format!("Field report {id} mentions {label} damage."));
            }
            rec
        })
        .collect();
    CorpusManifest::new("desk", items)
}

pub fn write_corpus(dir: &Path, n: usize, with_text: bool) -> PathBuf {
    let manifest = corpus(dir, n, with_text);
    let path = dir.join("corpus.jsonl");
    manifest.save(&path).unwrap();
    path
}

pub const QUESTION_TEMPLATE: &str = "Question {id}: what disaster does {image_path} show?";

/// Stub config: a tag-caption expert followed by an off-topic expert, a
/// 256-dimension hash embedder, the token-graph extractor and a canned
/// answerer with the given `(pattern, reply)` rules.
pub fn stub_config(extra: &str, answers: &[(String, String)]) -> String {
    let mut text = format!(
        r#"embedder = "emb"
extractor = "ext"
answerer = "ans"
deterministic = true
{extra}

[chain]
stages = ["cap", "chatter"]
steps = 1

[verifier]
tau = 0.25

[eval]
question-template = "{QUESTION_TEMPLATE}"

[backends.cap]
kind = "expert"
transport = "stub"
stub-reply = "tag-caption"

[backends.chatter]
kind = "expert"
transport = "stub"
stub-reply = "echo-append:A cat sleeps on a sofa nearby."

[backends.emb]
kind = "embedder"
transport = "stub"
stub-seed = 11
dimension = 256

[backends.ext]
kind = "extractor"
transport = "stub"
stub-reply = "token-graph"

[backends.ans]
kind = "extractor"
transport = "stub"
stub-reply = "canned"
stub-default = "unknown"
"#
    );
    for (pattern, reply) in answers {
        text.push_str(&format!(
            "\n[[backends.ans.stub-rules]]\npattern = {pattern:?}\nreply = {reply:?}\n"
        ));
    }
    text
}

/// Rules that answer each item's question with its gold label.
pub fn oracle_answers(manifest: &CorpusManifest) -> Vec<(String, String)> {
    manifest
        .items
        .iter()
        .map(|i| (format!("Question {}:", i.id), i.label.clone().unwrap()))
        .collect()
}

/// Every file under `dir`, keyed by relative path.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub const GOLDEN_QUERY: &str = "What damaged the bridge in Houston?";

/// Two chunks (flood and storm images) and five relations, returned in the
/// rank order the golden files use.
pub fn golden_fixture() -> (mmkg::kg::KnowledgeGraph, Vec<mmkg::kg::Relation>) {
    use mmkg::gateway::EmbeddingVector;
    use mmkg::kg::{Chunk, ExtractedEntity, ExtractedRelation, KnowledgeGraph, RelationKey};

    let ent = |name: &str, ty: &str| ExtractedEntity {
        name: name.into(),
        entity_type: ty.into(),
        description: format!("{name} in the reports"),
    };
    let rel = |s: &str, t: &str, label: &str, w: f64| ExtractedRelation {
        source: s.into(),
        target: t.into(),
        description: label.into(),
        keywords: vec!["damage".into()],
        weight: w,
    };
    let chunk = |id: &str, image: &str| Chunk {
        chunk_id: id.into(),
        text: format!("text of {id}"),
        embedding: EmbeddingVector::new(vec![1.0, 0.0]),
        source_image: Some(image.into()),
    };
    let mut g = KnowledgeGraph::new();
    g.merge(
        &[ent("Flood", "event"), ent("Bridge", "structure"), ent("Houston", "place")],
        &[rel("Flood", "Bridge", "damages", 2.0), rel("Flood", "Houston", "located in", 1.0)],
        chunk("c1", "img/flood.png"),
    );
    g.merge(
        &[ent("Storm", "event")],
        &[
            rel("Storm", "Roof [north]", "tears off", 3.0),
            rel("Storm", "Houston", "hits", 1.0),
            rel("Houston", "Flood", "flooded by", 0.5),
        ],
        chunk("c2", "img/storm.png"),
    );
    let order = [
        ("storm", "tears off", "roof [north]"),
        ("flood", "damages", "bridge"),
        ("storm", "hits", "houston"),
        ("flood", "located in", "houston"),
        ("houston", "flooded by", "flood"),
    ];
    let ranked = order
        .iter()
        .map(|(h, l, t)| {
            g.relation(&RelationKey {
                head: h.to_string(),
                label: l.to_string(),
                tail: t.to_string(),
            })
            .expect("fixture relation")
            .clone()
        })
        .collect();
    (g, ranked)
}

pub fn subgraph_of(relations: &[mmkg::kg::Relation]) -> mmkg::retriever::RetrievedSubgraph {
    use mmkg::retriever::{RetrievedSubgraph, ScoredRelation, TripletScore};
    RetrievedSubgraph {
        triplets: relations
            .iter()
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

pub fn golden(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}
