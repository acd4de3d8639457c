//! Collect the rule-based feedback bundle for a program whose answer is
//! not actually derived from the image.

use vprefine::analysis::analyze;
use vprefine::dsl::parse;
use vprefine::feedback::{collect, FeedbackChannels, FeedbackInput};
use vprefine::runtime::{execute, load_scene, Limits, SyntheticBackend};

const SOURCE: &str = "\
# step 1: Find the dogs
dogs = find(image, \"dog\")
# step 2: Find the cats
cats = find(image, \"cats\")
# step 3: Answer
return \"yes\"
";

fn main() {
    let scene = load_scene(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/data/kitchen.json"
    ))
    .expect("scene loads");
    let program = parse(SOURCE).expect("parses");
    let diagnostics = analyze(&program);
    let execution = execute(&program, &scene, &SyntheticBackend, Limits::default());
    let input = FeedbackInput {
        query: "Is there a dog next to a cat?",
        program: &program,
        diagnostics: &diagnostics,
        execution: &execution,
        scene: &scene,
        backend: &SyntheticBackend,
    };
    let operator = vec!["the answer ignores both searches".to_string()];
    let bundle = collect(&input, FeedbackChannels::default(), &operator, None);
    print!("{}", bundle.render());
    println!(
        "errors {} warnings {} info {} -> needs refinement: {}",
        bundle.counts.error,
        bundle.counts.warning,
        bundle.counts.info,
        bundle.needs_refinement()
    );
}
