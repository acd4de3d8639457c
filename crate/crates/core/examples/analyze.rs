//! Run the static checker over a program with a few planted problems.

use vprefine::analysis::{analyze, lint_score};
use vprefine::dsl::parse;

const SOURCE: &str = "\
cups = find(image, \"cup\")
count = 2
for c in cups:
    n = 1
return hcenter(c, n) + total
x = 1
";

fn main() {
    let program = parse(SOURCE).expect("parses");
    let diagnostics = analyze(&program);
    for d in &diagnostics {
        println!(
            "line {:>2}  {:<7}  {:<28}  {}",
            d.line, d.severity, d.code, d.message
        );
    }
    println!("lint score: {:.1}", lint_score(&program, &diagnostics));
}
