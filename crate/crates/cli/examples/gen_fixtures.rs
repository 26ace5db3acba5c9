//! Regenerates the example datasets under `fixtures/` and their expected
//! analysis summaries.
//!
//! cargo run -p aquitrend-cli --example gen_fixtures

use std::path::PathBuf;

use aquitrend::analysis::{Analysis, AnalysisOptions};
use aquitrend::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    std::fs::create_dir_all(root.join("expected"))?;
    for name in ["basic", "comprehensive"] {
        let files = synth::by_name(name).expect("known fixture");
        files.write_dir(&root.join(name))?;
        let opts = AnalysisOptions { today: Some(synth::fixture_today()), ..Default::default() };
        let a = Analysis::run(files.tables(), &opts)?;
        let summary = serde_json::to_string_pretty(&synth::fixture_summary(&a))? + "\n";
        std::fs::write(root.join("expected").join(format!("{name}.json")), summary)?;
        println!("wrote fixtures/{name}");
    }
    Ok(())
}
