//! One task through the whole loop: decompose, generate, execute, collect
//! feedback, refine, and write the result back to the codebase. The model
//! is scripted: its first program reads an undefined name, the refinement
//! fixes it.

use vprefine::codebase::{Codebase, CodebaseStore};
use vprefine::orchestrator::{Engine, EngineConfig};
use vprefine::prompting::{MockClient, MockScript, Templates};
use vprefine::runtime::{load_scene, SyntheticBackend};
use vprefine::suite::prompt_key;

const QUERY: &str = "How many red cups are there?";
const DRAFT: &str = "\
# step 1: Find the cups
cups = find(image, \"cup\")
# step 2: Keep the red cups
n = 0
for c in cups:
    if verify_property(c, \"cup\", \"red\"):
        n = n + 1
# step 3: Answer with the count
return total
";

fn main() {
    let fixed = DRAFT.replace("return total", "return n");
    let script = MockScript::default()
        .rule(
            prompt_key("DECOMPOSE", QUERY),
            &["1. Find the cups\n2. Keep the red cups\n3. Answer with the count"],
        )
        .rule(prompt_key("GENERATE", QUERY), &[DRAFT])
        .rule(prompt_key("REFINE", QUERY), &[&fixed]);
    let client = MockClient::new(script);
    let templates = Templates::builtin();
    let scene = load_scene(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/data/kitchen.json"
    ))
    .expect("scene loads");
    let store = CodebaseStore::in_memory(Codebase::new());

    let engine = Engine::new(
        EngineConfig::default(),
        &client,
        &templates,
        &SyntheticBackend,
    );
    let report = engine.run_task("demo", QUERY, &scene, &store, None);
    for it in &report.iterations {
        println!(
            "iteration {}: lint {:.1}, {} errors, {} warnings, answer {:?}{}",
            it.index,
            it.lint_score,
            it.feedback.errors(),
            it.feedback.warnings(),
            it.execution.result.as_ref().map(|v| v.to_answer()),
            if it.stopped_early { " (done)" } else { "" }
        );
        for item in it
            .feedback
            .items
            .iter()
            .filter(|i| i.severity >= vprefine::analysis::Severity::Warning)
        {
            println!("    [{}] {}", item.severity, item.message);
        }
    }
    println!(
        "codebase: {:?}, {} entries",
        report.codebase_action,
        store.read().len()
    );
}
