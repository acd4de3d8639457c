//! Seed an empty codebase from a sample of unlabeled queries, using a
//! scripted model. Programs that fail analysis or crash are not kept.

use vprefine::codebase::{bootstrap, BootstrapOptions, BootstrapTask, Codebase};
use vprefine::prompting::{MockClient, MockScript, Templates};
use vprefine::runtime::{load_scene, SyntheticBackend};
use vprefine::suite::prompt_key;

const CLEAN: &str = "# step 1: Find the cups\ncups = find(image, \"cup\")\n# step 2: Count them\nreturn count(cups)\n";
const BROKEN: &str = "# step 1: Find the cups\ncups = find(image, \"cup\")\n# step 2: Count them\nreturn count(mugs)\n";

fn main() {
    let scene = load_scene(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/data/kitchen.json"
    ))
    .expect("scene loads");
    let mut script = MockScript::default();
    let mut tasks = Vec::new();
    for i in 0..10 {
        let query = format!("Shelf {i}: how many cups are there?");
        script = script
            .rule(
                prompt_key("DECOMPOSE", &query),
                &["1. Find the cups\n2. Count them"],
            )
            .rule(
                prompt_key("GENERATE", &query),
                &[if i % 2 == 0 { CLEAN } else { BROKEN }],
            );
        tasks.push(BootstrapTask {
            query,
            scene: scene.clone(),
        });
    }
    let client = MockClient::new(script);
    let mut cb = Codebase::new();
    let opts = BootstrapOptions {
        fraction: 0.5,
        seed: 1,
        ..Default::default()
    };
    let report = bootstrap(
        &mut cb,
        &tasks,
        opts,
        &client,
        &Templates::builtin(),
        &SyntheticBackend,
    )
    .expect("bootstrap runs");
    println!("selected: {:#?}", report.selected);
    for s in &report.skipped {
        println!("skipped {:?}: {}", s.query, s.reason);
    }
    println!("codebase now holds {} draft entries", cb.len());
}
