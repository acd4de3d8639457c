//! Evaluate the shipped hermetic suite, with and without visual feedback.
//!
//! ```text
//! cargo run --example evaluate_suite
//! ```

use vprefine::codebase::{Codebase, CodebaseStore};
use vprefine::orchestrator::{load_tasks, Engine, EngineConfig};
use vprefine::prompting::{MockClient, Templates};
use vprefine::runtime::SyntheticBackend;

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/suites/hermetic");
    let tasks = load_tasks(format!("{dir}/tasks.jsonl")).expect("tasks load");
    let templates = Templates::builtin();
    for visual in [true, false] {
        let client =
            MockClient::from_file(format!("{dir}/mock_script.json")).expect("script loads");
        let mut config = EngineConfig::default();
        config.channels.visual = visual;
        let store = CodebaseStore::in_memory(Codebase::new());
        let engine = Engine::new(config, &client, &templates, &SyntheticBackend);
        let (report, _) = engine.evaluate(&tasks, &store, 4);
        println!(
            "visual feedback {:<3}  accuracy {:.2}  by iteration {:?}  lint {:.2} -> {:.2}  avg iterations {:.2}",
            if visual { "on" } else { "off" },
            report.accuracy,
            report.accuracy_by_iteration,
            report.mean_lint_score_draft,
            report.mean_lint_score_final,
            report.avg_iterations
        );
        for f in &report.failures {
            println!("    {}: {}", f.task_id, f.reason);
        }
    }
}
