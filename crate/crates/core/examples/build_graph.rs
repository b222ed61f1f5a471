//! Run the whole pipeline over the sample corpus and write the graph.
//!
//! cargo run --example build_graph [OUT_DIR]

use std::path::{Path, PathBuf};

use mmkg::corpus::ingest;
use mmkg::pipeline::{run_pipeline, stats, PipelineConfig, RunOptions};

fn main() -> mmkg::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mmkg-example-graph"));

    let config = PipelineConfig::load(&data.join("config.toml"))?;
    let manifest = ingest(&data.join("corpus.jsonl"))?;
    let outcome = run_pipeline(&manifest, &config, &out, RunOptions { emit_scores: true })?;

    for item in &outcome.report.items {
        println!(
            "{:<10} {:?} kept {} pruned {}",
            item.id, item.status, item.windows_kept, item.windows_pruned
        );
    }
    let s = stats(&out)?;
    println!(
        "\n{} entities, {} relations, {} chunks, {} bytes in {}",
        s.entities,
        s.relations,
        s.chunks,
        s.bytes,
        out.display()
    );
    Ok(())
}
