//! Build a small codebase, retrieve examples for a new query and assemble
//! the generation prompt.

use vprefine::codebase::{retrieve, Codebase, CodebaseEntry, EntryStatus, Similarity};
use vprefine::dsl::{Origin, SourceProgram};
use vprefine::prompting::{build_al_prompt, Templates};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus/programs");
    let library = [
        ("How many red apples are there?", "count_red_apples.vp"),
        ("Is there a dog?", "exists_dog.vp"),
        ("What color is the car?", "color_of_car.vp"),
        ("Is the cup on the table?", "relation_on.vp"),
        ("How many muffins are there?", "count_muffins.vp"),
    ];
    let mut cb = Codebase::new();
    for (query, file) in library {
        let text = std::fs::read_to_string(format!("{dir}/{file}")).expect("corpus file");
        let entry = CodebaseEntry::new(
            query,
            vec![],
            SourceProgram::new(text, Origin::User),
            EntryStatus::Draft,
        )
        .expect("clean program");
        cb.upsert(entry).expect("valid entry");
    }

    let query = "How many red cups are there?";
    let hits = retrieve(&cb, query, 3);
    for e in &hits {
        println!(
            "{:.3}  {}",
            Similarity::between(query, &e.query).value(),
            e.query
        );
    }

    let steps = vec![
        "Find the cups".to_string(),
        "Keep the red cups".to_string(),
        "Count them".to_string(),
    ];
    let al = build_al_prompt(query, &steps, &hits, 2, &Templates::builtin()).expect("renders");
    println!("\n{}", al.rendered);
}
