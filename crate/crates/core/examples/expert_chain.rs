//! Describe one image with a two-expert chain, run for two steps.
//!
//! cargo run --example expert_chain

use std::path::Path;

use mmkg::chain::{run_chain, ExpertChainSpec};
use mmkg::corpus::ImageRecord;
use mmkg::gateway::BackendSpec;

fn main() -> mmkg::Result<()> {
    let mut image = ImageRecord::new("harbor", "images/harbor.png").with_tags(["flood", "river", "bridge"]);
    image.base_dir = Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data"));

    // The captioner names what it sees; the second expert refines the prior
    // description by appending a detail.
    let spec = ExpertChainSpec::sequential(vec![
        BackendSpec::stub_expert("tag-caption").with_model_name("captioner"),
        BackendSpec::stub_expert("echo-append:Water covers the lower deck.").with_model_name("detailer"),
    ])
    .with_steps(2);

    let description = run_chain(&image, &spec)?;
    println!("{}\n", description.text);
    for p in &description.provenance {
        println!("step {} stage {}: {}", p.step, p.stage, p.model);
    }
    Ok(())
}
