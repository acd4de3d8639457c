//! Mask a program down to its logical skeleton, the form retrieved examples
//! take in generation prompts.

use vprefine::analysis::{abstract_code, abstract_code_with, MaskOptions};
use vprefine::dsl::parse;

fn main() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/corpus/programs/count_red_apples.vp"
    );
    let text = std::fs::read_to_string(path).expect("corpus file");
    let program = parse(&text).expect("parses");
    println!("original:\n{text}");

    let masked = abstract_code(&program);
    println!("masked:\n{}", masked.text);
    println!("skeleton: {:?}\n", masked.skeleton);

    let opaque = abstract_code_with(&program, MaskOptions { mask_callees: true });
    println!("with callees masked:\n{}", opaque.text);
}
