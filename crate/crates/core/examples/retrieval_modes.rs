//! Query the sample graph in each retrieval mode.
//!
//! cargo run --example retrieval_modes ["QUERY"]

use std::path::Path;

use mmkg::corpus::ingest;
use mmkg::pipeline::{run_pipeline, Backends, PipelineConfig, RunOptions};
use mmkg::retriever::{retrieve, RetrievalMode, RetrievalRequest};

fn main() -> mmkg::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let query = std::env::args().nth(1).unwrap_or_else(|| "flood near the bridge".into());

    let config = PipelineConfig::load(&data.join("config.toml"))?;
    let manifest = ingest(&data.join("corpus.jsonl"))?;
    let out = std::env::temp_dir().join("mmkg-example-retrieval");
    let graph = run_pipeline(&manifest, &config, &out, RunOptions::default())?.graph;
    let backends = Backends::connect(&config)?;

    for mode in RetrievalMode::ALL {
        let request = RetrievalRequest::new(&query, mode).with_top_k(4, 2);
        let found = retrieve(&request, &graph, backends.retrieval())?;
        println!("== {mode}");
        if found.is_empty() {
            println!("  (nothing matched)");
        }
        for t in &found.triplets {
            let r = &t.relation;
            println!("  {} -[{}]-> {}  overlap {} weight {}", r.head, r.label, r.tail, t.score.overlap, t.score.weight);
        }
        for c in &found.chunks {
            println!("  chunk {} {:.3}", c.chunk.chunk_id, c.score);
        }
        for d in &found.diagnostics {
            println!("  note: {d}");
        }
    }
    Ok(())
}
