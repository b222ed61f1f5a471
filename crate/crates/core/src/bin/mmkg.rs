use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mmkg::augment::{answer, render_triplet};
use mmkg::corpus::{ingest, CorpusManifest};
use mmkg::kg::load_graph;
use mmkg::pipeline::{
    describe_and_verify, evaluate, run_with_backends, stats, Backends, PipelineConfig, RunOptions,
};
use mmkg::retriever::{retrieve, RetrievalMode};
use mmkg::{Error, Result};

/// Build multimodal knowledge graphs from image corpora and query them.
#[derive(Parser)]
#[command(name = "mmkg", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Graph directory to write or read.
    #[arg(long, global = true, default_value = "graph")]
    graph_dir: PathBuf,
    /// Disable retry jitter and timestamps.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArgs {
    /// Corpus manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,
    /// Only these item ids.
    #[arg(long = "id")]
    ids: Vec<String>,
}

#[derive(Args)]
struct RetrievalArgs {
    query: String,
    #[arg(long)]
    mode: Option<RetrievalMode>,
    /// Triplet budget.
    #[arg(long)]
    top_k: Option<usize>,
    /// Chunk budget (naive and mix modes).
    #[arg(long)]
    top_k_chunks: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the expert chain and print raw descriptions.
    Describe(ManifestArgs),
    /// Describe and prune; print kept text and window counts.
    Verify {
        #[command(flatten)]
        items: ManifestArgs,
        /// Include every window's score.
        #[arg(long)]
        emit_scores: bool,
    },
    /// Build the graph directory from a manifest.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        /// Also write scores/<id>.jsonl into the graph directory.
        #[arg(long)]
        emit_scores: bool,
    },
    /// Print the retrieved subgraph as JSON lines.
    Query(RetrievalArgs),
    /// Answer a query with graph evidence.
    Answer {
        #[command(flatten)]
        retrieval: RetrievalArgs,
        /// Print the augmented prompt before the answer.
        #[arg(long)]
        show_prompt: bool,
    },
    /// Exact-match accuracy over a labelled manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Entity, relation and chunk counts and on-disk size.
    Stats,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("--config is required for this command".into()))?;
    let mut config = PipelineConfig::load(path)?;
    config.deterministic |= cli.deterministic;
    Ok(config)
}

fn load_items(args: &ManifestArgs) -> Result<CorpusManifest> {
    let mut manifest = ingest(&args.manifest)?;
    if !args.ids.is_empty() {
        for id in &args.ids {
            if !manifest.items.iter().any(|i| &i.id == id) {
                return Err(Error::InvalidInput(format!("no item with id `{id}`")));
            }
        }
        manifest.items.retain(|i| args.ids.contains(&i.id));
    }
    Ok(manifest)
}

fn request(config: &PipelineConfig, args: &RetrievalArgs) -> mmkg::retriever::RetrievalRequest {
    let mut req = config.retrieval.request(&args.query);
    if let Some(m) = args.mode {
        req.mode = m;
    }
    if let Some(k) = args.top_k {
        req.top_k_triplets = k;
    }
    if let Some(k) = args.top_k_chunks {
        req.top_k_chunks = k;
    }
    req
}

fn io(source: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn emit(out: &mut impl Write, value: serde_json::Value) -> Result<()> {
    writeln!(out, "{value}").map_err(io)
}

fn run(cli: &Cli) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Describe(args) => {
            let config = load_config(cli)?;
            let backends = Backends::connect(&config)?;
            for image in load_items(args)?.items {
                let d = backends.chain.run(&image)?;
                emit(&mut out, json!({"id": image.id, "description": d}))?;
            }
        }
        Command::Verify { items, emit_scores } => {
            let config = load_config(cli)?;
            let backends = Backends::connect(&config)?;
            let manifest = load_items(items)?;
            let verifier = config.verifier_for(&manifest.dataset_name);
            for image in &manifest.items {
                let (raw, outcome) = describe_and_verify(image, &verifier, &backends)?;
                let mut record = json!({
                    "id": image.id,
                    "raw": raw.text,
                    "verified": outcome.description.text,
                    "kept": outcome.kept_count(),
                    "pruned": outcome.pruned_count(),
                    "diagnostics": outcome.diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>(),
                });
                if *emit_scores {
                    record["scores"] = json!(outcome.score_records());
                }
                emit(&mut out, record)?;
            }
        }
        Command::Build {
            manifest,
            emit_scores,
        } => {
            let config = load_config(cli)?;
            let backends = Backends::connect(&config)?;
            let manifest = ingest(manifest)?;
            let outcome = run_with_backends(
                &manifest,
                &config,
                &backends,
                &cli.graph_dir,
                RunOptions {
                    emit_scores: *emit_scores,
                },
            )?;
            emit(&mut out, json!(outcome.report.summary))?;
        }
        Command::Query(args) => {
            let config = load_config(cli)?;
            let backends = Backends::connect(&config)?;
            let graph = load_graph(&cli.graph_dir)?;
            let sub = retrieve(&request(&config, args), &graph, backends.retrieval())?;
            emit(&mut out, json!({"record": "keywords", "low_level": sub.keywords.low_level, "high_level": sub.keywords.high_level}))?;
            for (rank, t) in sub.triplets.iter().enumerate() {
                emit(
                    &mut out,
                    json!({
                        "record": "triplet",
                        "rank": rank + 1,
                        "head": t.relation.head,
                        "label": t.relation.label,
                        "tail": t.relation.tail,
                        "overlap": t.score.overlap,
                        "weight": t.score.weight,
                        "rendered": render_triplet(&t.relation, &graph)?,
                    }),
                )?;
            }
            for (rank, c) in sub.chunks.iter().enumerate() {
                emit(
                    &mut out,
                    json!({
                        "record": "chunk",
                        "rank": rank + 1,
                        "id": c.chunk.chunk_id,
                        "score": c.score,
                        "source_image": c.chunk.source_image,
                        "text": c.chunk.text,
                    }),
                )?;
            }
            for d in &sub.diagnostics {
                emit(&mut out, json!({"record": "diagnostic", "message": d}))?;
            }
        }
        Command::Answer {
            retrieval,
            show_prompt,
        } => {
            let config = load_config(cli)?;
            let backends = Backends::connect(&config)?;
            let graph = load_graph(&cli.graph_dir)?;
            let req = request(&config, retrieval);
            let result = answer(
                &retrieval.query,
                &graph,
                &req,
                backends.retrieval(),
                backends.answerer.as_ref(),
            );
            let (text, prompt) = match result {
                Ok(pair) => pair,
                Err(Error::Answer { prompt, source }) => {
                    if *show_prompt {
                        eprintln!("{}", prompt.full_text);
                    }
                    return Err(*source);
                }
                Err(e) => return Err(e),
            };
            if *show_prompt {
                writeln!(out, "{}\n----", prompt.full_text).map_err(io)?;
            }
            writeln!(out, "{text}").map_err(io)?;
        }
        Command::Eval { manifest, json } => {
            let config = load_config(cli)?;
            let backends = Backends::connect(&config)?;
            let graph = load_graph(&cli.graph_dir)?;
            let manifest = ingest(manifest)?;
            let report = evaluate(&manifest, &graph, &config, &backends)?;
            if *json {
                emit(&mut out, serde_json::to_value(&report).expect("report serializes"))?;
            } else {
                    writeln!(
                    out,
                    "accuracy {:.3} ({}/{})",
                    report.accuracy, report.correct, report.items
                )
                .map_err(io)?;
                for (gold, row) in &report.confusion {
                    for (predicted, n) in row {
                        writeln!(out, "{gold}\t{predicted}\t{n}").map_err(io)?;
                    }
                }
            }
        }
        Command::Stats => {
            let s = stats(&cli.graph_dir)?;
            writeln!(
                out,
                "entities {}\nrelations {}\nchunks {}\nbytes {}",
                s.entities, s.relations, s.chunks, s.bytes
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
