//! Score the answerer against the labels in the sample corpus.
//!
//! cargo run --example evaluate

use std::path::Path;

use mmkg::corpus::ingest;
use mmkg::pipeline::{evaluate, run_pipeline, Backends, PipelineConfig, RunOptions};

fn main() -> mmkg::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let config = PipelineConfig::load(&data.join("config.toml"))?;
    let manifest = ingest(&data.join("corpus.jsonl"))?;
    let out = std::env::temp_dir().join("mmkg-example-eval");
    let graph = run_pipeline(&manifest, &config, &out, RunOptions::default())?.graph;
    let backends = Backends::connect(&config)?;

    let report = evaluate(&manifest, &graph, &config, &backends)?;
    for item in &report.results {
        let mark = if item.correct { "ok " } else { "bad" };
        println!("{mark} {:<10} gold {:<6} predicted {}", item.id, item.gold, item.predicted);
    }
    println!("\naccuracy {:.3} ({}/{})", report.accuracy, report.correct, report.items);
    for (gold, row) in &report.confusion {
        for (predicted, n) in row {
            println!("{gold} -> {predicted}: {n}");
        }
    }
    Ok(())
}
