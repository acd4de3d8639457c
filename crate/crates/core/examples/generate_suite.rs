//! Regenerate the shipped synthetic suite.
//!
//! ```text
//! cargo run --example generate_suite -- suites/hermetic
//! ```

use vprefine::suite::{generate, DEFAULT_SEED, DEFAULT_TASKS};

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "suites/hermetic".to_string());
    let suite = generate(DEFAULT_SEED, DEFAULT_TASKS);
    suite.write(&dir)?;
    let defective = suite.tasks.iter().filter(|t| t.defect.is_some()).count();
    println!(
        "wrote {} tasks ({defective} with injected defects) to {dir}",
        suite.tasks.len()
    );
    Ok(())
}
