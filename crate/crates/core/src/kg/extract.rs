//! Extraction prompt and the delimited record grammar LLM extractors answer in.
//!
//! ```text
//! ("entity"<|>FLOOD<|>EVENT<|>rising water)##
//! ("relationship"<|>FLOOD<|>BRIDGE<|>damages<|>infrastructure, disaster<|>0.9)##
//! <|COMPLETE|>
//! ```
//!
//! Records are parenthesized field lists separated by `##`; fields are
//! separated by `<|>`; the stream ends at `<|COMPLETE|>`. Parsing is total:
//! malformed records are skipped, each with one diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIELD_DELIMITER: &str = "<|>";
pub const RECORD_DELIMITER: &str = "##";
pub const COMPLETION_DELIMITER: &str = "<|COMPLETE|>";

const TEXT_OPEN: &str = "\n-Text-\n";
const TEXT_CLOSE: &str = "\n-Output-";

const EXTRACTION_TEMPLATE: &str = "-Goal-
Given a text document, identify all entities in it and the relationships among those entities.

-Format-
Field delimiter: <|>
Record delimiter: ##
Completion delimiter: <|COMPLETE|>

-Steps-
1. For each entity, output one record:
(\"entity\"<|><entity_name><|><entity_type><|><entity_description>)
2. For each pair of clearly related entities, output one record:
(\"relationship\"<|><source_entity><|><target_entity><|><relation_label><|><relation_keywords><|><relation_strength>)
- relation_label: a short phrase naming the relation, such as \"is a type of\", \"part of\" or \"has property\"
- relation_keywords: comma-separated high-level keywords summarizing the relation
- relation_strength: a non-negative number
3. Separate records with the record delimiter.
4. When finished, output the completion delimiter.
";

/// Entity record as emitted by the extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub name: String,
    pub entity_type: String,
    pub description: String,
}

/// Relationship record as emitted by the extractor. `description` doubles
/// as the relation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    pub source: String,
    pub target: String,
    pub description: String,
    pub keywords: Vec<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    /// 0-based index of the offending record, if the problem is record-local.
    pub record: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.record {
            Some(i) => write!(f, "record {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// A parenthesized record split into its fields; `fields[0]` is the kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    /// Position among the record candidates of the stream.
    pub index: usize,
    pub fields: Vec<String>,
}

impl RawRecord {
    pub fn kind(&self) -> &str {
        self.fields.first().map(String::as_str).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractionOutput {
    pub entities: Vec<ExtractedEntity>,
    pub relations: Vec<ExtractedRelation>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

fn clean_field(raw: &str) -> String {
    let t = raw.trim();
    let t = t
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(t);
    t.trim().to_string()
}

/// Split `##`-separated pieces further where a new line opens a record, so
/// newline-separated records also parse.
fn record_candidates(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in body.split(RECORD_DELIMITER) {
        let mut current = String::new();
        for line in piece.lines() {
            if line.trim_start().starts_with('(') && !current.trim().is_empty() {
                out.push(std::mem::take(&mut current));
            }
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(line);
        }
        if !current.trim().is_empty() {
            out.push(current);
        }
    }
    out
}

/// Split a raw stream into records. Never fails.
pub fn parse_records(raw: &str) -> (Vec<RawRecord>, Vec<ParseDiagnostic>) {
    let mut diagnostics = Vec::new();
    let body = match raw.find(COMPLETION_DELIMITER) {
        Some(pos) => &raw[..pos],
        None => {
            if !raw.trim().is_empty() {
                diagnostics.push(ParseDiagnostic {
                    record: None,
                    message: "missing completion delimiter".into(),
                });
            }
            raw
        }
    };

    let mut records = Vec::new();
    for (i, candidate) in record_candidates(body).iter().enumerate() {
        let trimmed = candidate.trim();
        let Some(inner) = trimmed.strip_prefix('(').and_then(|s| s.strip_suffix(')')) else {
            diagnostics.push(ParseDiagnostic {
                record: Some(i),
                message: "record is not parenthesized".into(),
            });
            continue;
        };
        records.push(RawRecord {
            index: i,
            fields: inner.split(FIELD_DELIMITER).map(clean_field).collect(),
        });
    }
    (records, diagnostics)
}

/// Keywords field: comma-separated, trimmed, blanks dropped.
pub fn split_keywords(field: &str) -> Vec<String> {
    field
        .split(',')
        .map(clean_field)
        .filter(|k| !k.is_empty())
        .collect()
}

/// Parse an extractor reply into entity and relationship records.
pub fn parse_extraction_output(raw: &str) -> ExtractionOutput {
    let (records, mut diagnostics) = parse_records(raw);
    let mut out = ExtractionOutput::default();
    for rec in &records {
        let diag = |message: String| ParseDiagnostic {
            record: Some(rec.index),
            message,
        };
        match rec.kind().to_ascii_lowercase().as_str() {
            "entity" => {
                if rec.fields.len() != 4 {
                    diagnostics.push(diag(format!(
                        "entity record needs 4 fields, found {}",
                        rec.fields.len()
                    )));
                    continue;
                }
                if rec.fields[1].is_empty() {
                    diagnostics.push(diag("entity name is empty".into()));
                    continue;
                }
                out.entities.push(ExtractedEntity {
                    name: rec.fields[1].clone(),
                    entity_type: rec.fields[2].clone(),
                    description: rec.fields[3].clone(),
                });
            }
            "relationship" => {
                if rec.fields.len() != 6 {
                    diagnostics.push(diag(format!(
                        "relationship record needs 6 fields, found {}",
                        rec.fields.len()
                    )));
                    continue;
                }
                if rec.fields[1].is_empty() || rec.fields[2].is_empty() {
                    diagnostics.push(diag("relationship endpoint is empty".into()));
                    continue;
                }
                let weight = match rec.fields[5].parse::<f64>() {
                    Ok(w) if w.is_finite() && w >= 0.0 => w,
                    _ => {
                        diagnostics.push(diag(format!(
                            "unparsable weight `{}`, using 1.0",
                            rec.fields[5]
                        )));
                        1.0
                    }
                };
                out.relations.push(ExtractedRelation {
                    source: rec.fields[1].clone(),
                    target: rec.fields[2].clone(),
                    description: rec.fields[3].clone(),
                    keywords: split_keywords(&rec.fields[4]),
                    weight,
                });
            }
            other => diagnostics.push(diag(format!("unknown record kind `{other}`"))),
        }
    }
    out.diagnostics = diagnostics;
    out
}

/// Print records in the canonical form `parse_extraction_output` reads back.
pub fn serialize_records(entities: &[ExtractedEntity], relations: &[ExtractedRelation]) -> String {
    let mut records: Vec<String> = Vec::with_capacity(entities.len() + relations.len());
    for e in entities {
        records.push(format!(
            "(\"entity\"{d}{}{d}{}{d}{})",
            e.name,
            e.entity_type,
            e.description,
            d = FIELD_DELIMITER
        ));
    }
    for r in relations {
        records.push(format!(
            "(\"relationship\"{d}{}{d}{}{d}{}{d}{}{d}{})",
            r.source,
            r.target,
            r.description,
            r.keywords.join(", "),
            r.weight,
            d = FIELD_DELIMITER
        ));
    }
    let mut out = String::new();
    for rec in records {
        out.push_str(&rec);
        out.push_str(RECORD_DELIMITER);
        out.push('\n');
    }
    out.push_str(COMPLETION_DELIMITER);
    out
}

/// True when `field` survives a print/parse round trip unchanged.
pub fn is_canonical_field(field: &str) -> bool {
    field == field.trim()
        && !field.contains(FIELD_DELIMITER)
        && !field.contains(RECORD_DELIMITER)
        && !field.contains(COMPLETION_DELIMITER)
        && !field.contains('\n')
        && !field.contains('\r')
        && !(field.len() >= 2 && field.starts_with('"') && field.ends_with('"'))
}

/// Prompt asking the extractor for records over one chunk of text.
pub fn build_extraction_prompt(text: &str) -> Result<String> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot build an extraction prompt for empty text"));
    }
    Ok(format!("{EXTRACTION_TEMPLATE}{TEXT_OPEN}{text}{TEXT_CLOSE}\n"))
}

/// The chunk text embedded in an extraction prompt.
pub fn embedded_chunk_text(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(TEXT_OPEN)? + TEXT_OPEN.len();
    let len = prompt[start..].rfind(TEXT_CLOSE)?;
    Some(&prompt[start..start + len])
}
