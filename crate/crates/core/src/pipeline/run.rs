//! describe → verify → build over a corpus manifest.
//!
//! Items are processed by a pool of `workers` threads; the graph is only
//! written by the calling thread, which commits results in manifest order.
//! Output is therefore the same for any pool size.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{Backends, KgMode, PipelineConfig};
use crate::chain::Description;
use crate::corpus::{CorpusManifest, ImageRecord};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::kg::{save_graph, GraphBuilder, GraphManifest, KnowledgeGraph, OnError, PreparedChunk};
use crate::verifier::{prune, PruneOutcome, VerifierConfig};

pub const RUN_REPORT_FILE: &str = "run_report.jsonl";
pub const SCORES_DIR: &str = "scores";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemStatus {
    Processed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemReport {
    pub id: String,
    pub status: ItemStatus,
    pub windows_kept: usize,
    pub windows_pruned: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub items: usize,
    pub processed: usize,
    pub skipped: usize,
    pub windows_kept: usize,
    pub windows_pruned: usize,
    pub entities: usize,
    pub relations: usize,
    pub chunks: usize,
    pub errors: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub aborted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub config_hash: Option<String>,
    pub items: Vec<ItemReport>,
    pub summary: RunSummary,
    /// Extraction and merge diagnostics, prefixed by chunk id.
    pub build_diagnostics: Vec<String>,
}

#[derive(Serialize)]
struct ReportHeader<'a> {
    schema: &'a str,
    version: u32,
    dataset: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<&'a str>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum ReportLine<'a> {
    Item(&'a ItemReport),
    Diagnostic { message: &'a str },
    Summary(&'a RunSummary),
}

impl RunReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = jsonl::line(&ReportHeader {
            schema: "mmkg.run-report",
            version: 1,
            dataset: &self.dataset,
            config_hash: self.config_hash.as_deref(),
        });
        for item in &self.items {
            out.push_str(&jsonl::line(&ReportLine::Item(item)));
        }
        for message in &self.build_diagnostics {
            out.push_str(&jsonl::line(&ReportLine::Diagnostic { message }));
        }
        out.push_str(&jsonl::line(&ReportLine::Summary(&self.summary)));
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RUN_REPORT_FILE);
        fs::write(&path, self.to_jsonl()).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Write per-window scores to `scores/<item id>.jsonl`.
    pub emit_scores: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub graph: KnowledgeGraph,
    pub report: RunReport,
}

/// Chain output for one image, pruned after the last stage (and after every
/// stage when the verifier asks for it).
pub fn describe_and_verify(
    image: &ImageRecord,
    verifier: &VerifierConfig,
    backends: &Backends,
) -> Result<(Description, PruneOutcome)> {
    let embedder = backends.embedder.as_ref();
    let raw = if verifier.prune_each_stage {
        backends.chain.run_with_hook(image, &mut |d, _, _| {
            *d = prune(image, d, verifier, embedder)?.description;
            Ok(())
        })?
    } else {
        backends.chain.run(image)?
    };
    let outcome = prune(image, &raw, verifier, embedder)?;
    Ok((raw, outcome))
}

struct ItemResult {
    prune: Option<PruneOutcome>,
    prepared: std::result::Result<Option<PreparedChunk>, Error>,
}

fn process_item(
    image: &ImageRecord,
    verifier: &VerifierConfig,
    kg_mode: KgMode,
    backends: &Backends,
) -> ItemResult {
    let outcome = match describe_and_verify(image, verifier, backends) {
        Ok((_, outcome)) => outcome,
        Err(e) => {
            return ItemResult {
                prune: None,
                prepared: Err(e),
            }
        }
    };
    let external = match kg_mode {
        KgMode::ImageOnly => None,
        KgMode::TextImage => image.external_text(),
    };
    let prepared = GraphBuilder::prepare(
        backends.embedder.as_ref(),
        backends.extractor.as_ref(),
        &outcome.description,
        external,
    )
    .map_err(|f| Error::Chunk {
        chunk_id: f.chunk_id,
        source: Box::new(f.error),
    });
    ItemResult {
        prune: Some(outcome),
        prepared,
    }
}

fn process_all(
    manifest: &CorpusManifest,
    config: &PipelineConfig,
    verifier: &VerifierConfig,
    backends: &Backends,
) -> Vec<Option<ItemResult>> {
    let n = manifest.items.len();
    let slots: Vec<Mutex<Option<ItemResult>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let abort = config.on_error == OnError::Abort;
    let work = || loop {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= n {
            break;
        }
        let result = process_item(&manifest.items[i], verifier, config.kg_mode, backends);
        if abort && result.prepared.is_err() {
            stop.store(true, Ordering::Relaxed);
        }
        *slots[i].lock().expect("slot lock") = Some(result);
    };
    let workers = config.workers.clamp(1, n.max(1));
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock"))
        .collect()
}

fn score_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.jsonl")
}

fn write_scores(dir: &Path, id: &str, outcome: &PruneOutcome) -> Result<()> {
    #[derive(Serialize)]
    struct Header<'a> {
        schema: &'a str,
        version: u32,
        item: &'a str,
    }
    let dir = dir.join(SCORES_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut text = jsonl::line(&Header {
        schema: "mmkg.scores",
        version: 1,
        item: id,
    });
    for r in outcome.score_records() {
        text.push_str(&jsonl::line(&r));
    }
    let path = dir.join(score_file_name(id));
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn unix_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or_default();
    format!("unix:{secs}")
}

/// Build a graph from a corpus and write it, the run report and optional
/// score files into `out_dir`. The report is written even when the run
/// aborts.
pub fn run_pipeline(
    manifest: &CorpusManifest,
    config: &PipelineConfig,
    out_dir: &Path,
    options: RunOptions,
) -> Result<RunOutcome> {
    let backends = Backends::connect(config)?;
    run_with_backends(manifest, config, &backends, out_dir, options)
}

pub fn run_with_backends(
    manifest: &CorpusManifest,
    config: &PipelineConfig,
    backends: &Backends,
    out_dir: &Path,
    options: RunOptions,
) -> Result<RunOutcome> {
    let verifier = config.verifier_for(&manifest.dataset_name);
    verifier.validate()?;

    let mut graph_manifest = GraphManifest {
        config_hash: config.config_hash.clone(),
        dataset: (!manifest.dataset_name.is_empty()).then(|| manifest.dataset_name.clone()),
        created_at: (!config.deterministic).then(unix_timestamp),
        ..Default::default()
    };
    for (i, name) in config.chain.stages.iter().enumerate() {
        graph_manifest
            .backends
            .insert(format!("expert.{i}"), config.backends[name].identity());
    }
    let mut builder = GraphBuilder::new(backends.embedder.as_ref(), backends.extractor.as_ref())
        .with_manifest(graph_manifest);
    builder.on_error = config.on_error;

    let results = process_all(manifest, config, &verifier, backends);

    let mut report = RunReport {
        dataset: manifest.dataset_name.clone(),
        config_hash: config.config_hash.clone(),
        ..Default::default()
    };
    let mut abort_error = None;
    for (image, result) in manifest.items.iter().zip(results) {
        let Some(result) = result else { break };
        let mut item = ItemReport {
            id: image.id.clone(),
            status: ItemStatus::Processed,
            windows_kept: 0,
            windows_pruned: 0,
            chunk_id: None,
            error: None,
            diagnostics: Vec::new(),
        };
        if let Some(p) = &result.prune {
            item.windows_kept = p.kept_count();
            item.windows_pruned = p.pruned_count();
            item.diagnostics = p.diagnostics.iter().map(ToString::to_string).collect();
            if options.emit_scores {
                write_scores(out_dir, &image.id, p)?;
            }
        }
        match result.prepared {
            Ok(Some(prepared)) => {
                item.chunk_id = Some(prepared.chunk.chunk_id.clone());
                builder.commit(prepared);
            }
            Ok(None) => builder.note_empty(),
            Err(e) => {
                tracing::warn!(item = %image.id, error = %e, "item failed");
                item.status = ItemStatus::Skipped;
                item.error = Some(e.to_string());
                if config.on_error == OnError::Abort {
                    abort_error = Some(e);
                }
            }
        }
        report.items.push(item);
        if abort_error.is_some() {
            break;
        }
    }

    let outcome = builder.finish();
    let graph = outcome.graph;
    let s = &mut report.summary;
    s.items = manifest.items.len();
    s.processed = report.items.iter().filter(|i| i.status == ItemStatus::Processed).count();
    s.skipped = report.items.len() - s.processed;
    s.errors = s.skipped;
    s.windows_kept = report.items.iter().map(|i| i.windows_kept).sum();
    s.windows_pruned = report.items.iter().map(|i| i.windows_pruned).sum();
    s.entities = graph.entity_count();
    s.relations = graph.relation_count();
    s.chunks = graph.chunk_count();
    s.aborted = abort_error.is_some();
    report.build_diagnostics = outcome.diagnostics;

    report.save(out_dir)?;
    if let Some(e) = abort_error {
        return Err(e);
    }
    save_graph(&graph, out_dir)?;
    Ok(RunOutcome { graph, report })
}
