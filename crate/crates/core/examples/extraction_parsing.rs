//! Turn raw extractor output into entities and relations. Malformed
//! records are reported, never fatal.
//!
//! cargo run --example extraction_parsing

use mmkg::kg::{build_extraction_prompt, parse_extraction_output, serialize_records};

const RAW: &str = r#"("entity"<|>FLOOD<|>EVENT<|>Water over the banks of the river)##
("entity"<|>OLD BRIDGE<|>STRUCTURE<|>Closed to traffic)##
("relationship"<|>FLOOD<|>OLD BRIDGE<|>cuts off<|>access, damage<|>0.9)##
("relationship"<|>FLOOD<|>missing weight<|>oops)##
("entity"<|>HALF A RECORD##
<|COMPLETE|>"#;

fn main() -> mmkg::Result<()> {
    let prompt = build_extraction_prompt("The river crested overnight and the old bridge is closed.")?;
    println!("prompt starts: {}...\n", prompt.lines().next().unwrap_or_default());

    let parsed = parse_extraction_output(RAW);
    for e in &parsed.entities {
        println!("entity   {} ({}) {}", e.name, e.entity_type, e.description);
    }
    for r in &parsed.relations {
        println!("relation {} -[{}]-> {} keywords={:?} weight={}", r.source, r.description, r.target, r.keywords, r.weight);
    }
    for d in &parsed.diagnostics {
        println!("skipped  {d}");
    }

    // Canonical records survive a serialize/parse round trip unchanged.
    let again = parse_extraction_output(&serialize_records(&parsed.entities, &parsed.relations));
    println!("\nround trip identical: {}", again.entities == parsed.entities && again.relations == parsed.relations);
    Ok(())
}
