//! Answer a question from retrieved evidence and show the prompt the
//! answerer saw.
//!
//! cargo run --example augmented_answer ["QUESTION"]

use std::path::Path;

use mmkg::augment::answer;
use mmkg::corpus::ingest;
use mmkg::pipeline::{run_pipeline, Backends, PipelineConfig, RunOptions};

fn main() -> mmkg::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let question = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "What happened to the bridge during the flood?".into());

    let config = PipelineConfig::load(&data.join("config.toml"))?;
    let manifest = ingest(&data.join("corpus.jsonl"))?;
    let out = std::env::temp_dir().join("mmkg-example-answer");
    let graph = run_pipeline(&manifest, &config, &out, RunOptions::default())?.graph;
    let backends = Backends::connect(&config)?;

    let request = config.retrieval.request(&question);
    let (reply, prompt) = answer(&question, &graph, &request, backends.retrieval(), backends.answerer.as_ref())?;
    println!("{}\n----\n{reply}", prompt.full_text);
    Ok(())
}
