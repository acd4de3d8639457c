//! Execute a program against a scene graph and print the trace.

use vprefine::dsl::parse;
use vprefine::runtime::{execute, load_scene, Limits, SyntheticBackend};

const SOURCE: &str = "\
# step 1: Find the cups
cups = find(image, \"cup\")
# step 2: Keep those on the table
tables = find(image, \"table\")
n = 0
for c in cups:
    if related(c, \"on\", get(tables, 0)):
        n = n + 1
# step 3: Answer
return n
";

fn main() {
    let scene = load_scene(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/data/kitchen.json"
    ))
    .expect("scene loads");
    let program = parse(SOURCE).expect("parses");
    let result = execute(&program, &scene, &SyntheticBackend, Limits::default());
    for e in &result.trace {
        let what = e.name.as_deref().or(e.primitive.as_deref()).unwrap_or("");
        println!(
            "#{:<3} line {:>2} step {:<4} {:<15} {:<8} {}  deps {:?}",
            e.seq,
            e.line,
            e.step_id.map_or("-".to_string(), |s| s.to_string()),
            format!("{:?}", e.kind),
            what,
            e.value_snapshot,
            e.deps
        );
    }
    match (&result.result, &result.runtime_error) {
        (Some(v), _) => println!("answer: {}", v.to_answer()),
        (None, Some(e)) => println!("runtime error at line {}: {}", e.line, e.message),
        _ => println!("no answer"),
    }
    println!("steps used: {}", result.steps_used);
}
