//! Score each sentence of a description against the image and drop the
//! ones below tau, then sweep tau to see how much text survives.
//!
//! cargo run --example similarity_pruning

use mmkg::chain::Description;
use mmkg::corpus::ImageRecord;
use mmkg::gateway::{BackendSpec, StubBackend};
use mmkg::verifier::{prune, threshold_sweep, VerifierConfig};

fn main() -> mmkg::Result<()> {
    let image = ImageRecord::new("harbor", "images/harbor.png").with_tags(["flood", "river", "bridge"]);
    let embedder = StubBackend::new(BackendSpec::stub_embedder(11).with_dimension(256))?;
    let text = "The river has flooded the bridge. Flood water reaches the road. \
                A cat sleeps on a sofa nearby. The sky is a pleasant shade of blue.";
    let description = Description::from_text(&image, text);

    let config = VerifierConfig::default();
    let outcome = prune(&image, &description, &config, &embedder)?;
    for (window, kept) in outcome.windows.iter().zip(&outcome.kept) {
        let mark = if *kept { "keep" } else { "drop" };
        println!("{mark} {:.3}  {}", window.score.unwrap_or(0.0), window.text);
    }
    println!("\nverified: {}", outcome.description.text);
    for d in &outcome.diagnostics {
        println!("note: {d}");
    }

    let taus = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    println!("\ntau   tokens kept");
    for row in threshold_sweep(&image, &description, &taus, &config, &embedder)? {
        println!("{:.2}  {}", row.tau, row.retained_tokens);
    }
    Ok(())
}
