//! Parse a program written with loose spacing and print its canonical form.

use vprefine::dsl::{parse, print_program};

const SOURCE: &str = "\
# step 1: Find the cups
cups=find( image,'cup' )
# step 2: Keep the red ones
red = 0
for c in cups:
    if verify_property(c,\"cup\",\"red\"):
        red = red+1
# step 3: Answer
return red
";

fn main() {
    let program = match parse(SOURCE) {
        Ok(p) => p,
        Err(errors) => {
            for e in errors {
                eprintln!("{e}");
            }
            std::process::exit(1);
        }
    };
    let canonical = print_program(&program);
    print!("{canonical}");

    let again = parse(&canonical).expect("canonical text parses");
    assert!(program.structurally_eq(&again));
    println!("--\nsteps: {:?}", program.steps());

    // Errors carry a line and what was expected.
    let err = parse("if count(cups) > 1\n    return 1\n").unwrap_err();
    println!("error: {}", err[0]);
}
