//! Exact-match accuracy over a labelled manifest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{Backends, PipelineConfig};
use crate::augment::answer;
use crate::corpus::{CorpusManifest, ImageRecord};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;

/// Fill `{id}`, `{text}` and `{image_path}`.
pub fn render_question(template: &str, image: &ImageRecord) -> String {
    template
        .replace("{id}", &image.id)
        .replace("{image_path}", &image.location)
        .replace("{text}", image.text.as_deref().unwrap_or_default())
}

/// Case-folded, trimmed form used for matching.
pub fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub gold: String,
    pub predicted: String,
    pub correct: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// gold label → predicted answer → count, both normalized.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub results: Vec<EvalItem>,
}

pub fn evaluate(
    manifest: &CorpusManifest,
    graph: &KnowledgeGraph,
    config: &PipelineConfig,
    backends: &Backends,
) -> Result<EvalReport> {
    let unlabelled: Vec<&str> = manifest
        .items
        .iter()
        .filter(|i| i.label.as_deref().map_or(true, |l| l.trim().is_empty()))
        .map(|i| i.id.as_str())
        .collect();
    if !unlabelled.is_empty() {
        return Err(Error::invalid(format!(
            "items without a label: {}",
            unlabelled.join(", ")
        )));
    }

    let mut report = EvalReport::default();
    for image in &manifest.items {
        let question = render_question(&config.eval.question_template, image);
        let request = config.retrieval.request(&question);
        let (reply, _) = answer(
            &question,
            graph,
            &request,
            backends.retrieval(),
            backends.answerer.as_ref(),
        )?;
        let gold = normalize_answer(image.label.as_deref().unwrap_or_default());
        let predicted = normalize_answer(&reply);
        let correct = gold == predicted;
        *report
            .confusion
            .entry(gold.clone())
            .or_default()
            .entry(predicted.clone())
            .or_default() += 1;
        report.correct += usize::from(correct);
        report.results.push(EvalItem {
            id: image.id.clone(),
            gold,
            predicted,
            correct,
        });
    }
    report.items = manifest.items.len();
    report.accuracy = if report.items == 0 {
        0.0
    } else {
        report.correct as f64 / report.items as f64
    };
    Ok(report)
}
