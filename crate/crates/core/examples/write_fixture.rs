//! Regenerates `fixtures/pipeline/` from the synthetic generator.

use std::path::Path;

use facetrank_core::synthetic::{write_pipeline_fixture, FixtureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/pipeline");
    write_pipeline_fixture(&dir, &FixtureConfig::default(), "../agreement")?;
    println!("wrote {}", dir.display());
    Ok(())
}
