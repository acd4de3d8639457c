//! Prompt construction and model-driven generation.
//!
//! A query is first decomposed into numbered logical steps. Those steps,
//! together with masked programs retrieved from the codebase, form the
//! abstract logical prompt ([`AlPrompt`]) from which a program is generated.
//! Every model reply is validated; a bad reply gets exactly one corrective
//! follow-up before the call is declared failed.

mod client;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{abstract_code, AbstractCode};
use crate::codebase::{CodebaseEntry, Similarity};
use crate::dsl::{Origin, ParseError, Program, SourceProgram};

pub use client::{
    transcript, ChatMessage, CompletionParams, HttpClient, MockClient, MockRule, MockScript,
    ModelClient, ModelError, Role,
};
pub use templates::{placeholders, render_template, TemplateName, Templates, TEMPLATE_VERSION};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template} is missing slot {slot}")]
    MissingSlot { template: String, slot: String },
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("malformed model reply: {0}")]
    MalformedModelReply(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// System message sent with every request.
pub const SYSTEM_PROMPT: &str = "You write short programs in a small visual-programming language \
to answer questions about an image. Follow the requested output format exactly.";

/// Grammar summary placed in GENERATE prompts.
pub const GRAMMAR_SUMMARY: &str = "\
Language:
- one statement per line; blocks are indented by exactly 4 spaces
- statements: `name = expr`, `if expr:` with optional `else:`, `for name in expr:`, `return expr`
- expressions: strings, numbers, True/False, names, calls f(a, b), indexing xs[i],
  not, unary -, + - * /, == != < <= > >=, and, or
- `image` is the whole picture
- find(patch, name) -> list of patches; exists(patch, name) -> bool
- query(patch, question) -> text; verify_property(patch, name, property) -> bool
- related(patch, predicate, patch) -> bool
- count(list), get(list, i), hcenter(p), vcenter(p), width(p), height(p)";

/// Parse `N. text` (or `N) text`) lines; other lines are ignored. Numbers
/// must run 1, 2, ... without gaps.
pub fn parse_numbered_steps(reply: &str) -> Result<Vec<String>, String> {
    let mut steps = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        let digits: String = line.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            continue;
        }
        let rest = &line[digits.len()..];
        let Some(text) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) else {
            continue;
        };
        let n: usize = digits
            .parse()
            .map_err(|_| format!("bad step number {digits}"))?;
        if n != steps.len() + 1 {
            return Err(format!("expected step {}, found step {n}", steps.len() + 1));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(format!("step {n} is empty"));
        }
        steps.push(text.to_string());
    }
    if steps.is_empty() {
        return Err("no numbered steps found".into());
    }
    Ok(steps)
}

fn initial_messages(prompt: String) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(SYSTEM_PROMPT),
        ChatMessage::user(prompt),
    ]
}

/// Decompose `query` into ordered logical steps.
pub fn generate_logical_steps(
    query: &str,
    client: &dyn ModelClient,
    templates: &Templates,
) -> Result<Vec<String>, PromptError> {
    let prompt = templates.render(TemplateName::Decompose, &[("QUERY", query)])?;
    let mut messages = initial_messages(prompt);
    let params = CompletionParams::default();
    let reply = client.complete(&messages, &params)?;
    let problem = match parse_numbered_steps(&reply) {
        Ok(steps) => return Ok(steps),
        Err(e) => e,
    };
    messages.push(ChatMessage::user(format!(
        "Your reply could not be used: {problem}. Reply with numbered lines `1. ...`, `2. ...` only."
    )));
    let reply = client.complete(&messages, &params)?;
    parse_numbered_steps(&reply).map_err(PromptError::MalformedModelReply)
}

/// Abstract logical prompt: steps plus masked example programs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlPrompt {
    pub query: String,
    pub steps: Vec<String>,
    pub abstract_codes: Vec<AbstractCode>,
    /// Id of the entry each abstract code came from.
    pub donors: Vec<String>,
    /// Similarity of each donor's query to the joined steps.
    pub similarities: Vec<f64>,
    pub rendered: String,
}

pub fn render_steps(steps: &[String]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}\n", i + 1))
        .collect()
}

fn render_examples(codes: &[AbstractCode]) -> String {
    if codes.is_empty() {
        return "(none)\n".to_string();
    }
    codes
        .iter()
        .enumerate()
        .map(|(i, c)| format!("Example {}:\n{}", i + 1, c.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Order retrieved entries by similarity of their query to the joined
/// steps (ties by id), keep `k`, and render the GENERATE template.
pub fn build_al_prompt(
    query: &str,
    steps: &[String],
    retrieved: &[&CodebaseEntry],
    k: usize,
    templates: &Templates,
) -> Result<AlPrompt, PromptError> {
    let joined = steps.join(" ");
    let mut scored: Vec<(Similarity, &CodebaseEntry)> = retrieved
        .iter()
        .map(|e| (Similarity::between(&e.query, &joined), *e))
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    scored.truncate(k);
    for (score, e) in &scored {
        let per_step: Vec<String> = steps
            .iter()
            .map(|s| format!("{:.3}", Similarity::between(&e.query, s).value()))
            .collect();
        log::debug!(
            "example {} whole-steps {:.3} per-step [{}]",
            e.id,
            score.value(),
            per_step.join(", ")
        );
    }
    let abstract_codes: Vec<AbstractCode> = scored
        .iter()
        .map(|(_, e)| match e.code.parse() {
            Ok(ast) => abstract_code(&ast),
            Err(_) => e.abstract_code.clone(),
        })
        .collect();
    let rendered = templates.render(
        TemplateName::Generate,
        &[
            ("QUERY", query),
            ("GRAMMAR", GRAMMAR_SUMMARY),
            ("STEPS", &render_steps(steps)),
            ("EXAMPLES", &render_examples(&abstract_codes)),
        ],
    )?;
    Ok(AlPrompt {
        query: query.to_string(),
        steps: steps.to_vec(),
        donors: scored.iter().map(|(_, e)| e.id.clone()).collect(),
        similarities: scored.iter().map(|(s, _)| s.value()).collect(),
        abstract_codes,
        rendered,
    })
}

/// A program produced by the model, with notes on any validation problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedProgram {
    pub program: SourceProgram,
    /// Problems found in replies, in order. Empty when the first reply was
    /// accepted.
    pub notes: Vec<String>,
    /// Whether the returned program passed validation.
    pub valid: bool,
}

/// Program text from a reply: the first fenced block if there is one,
/// otherwise the whole reply.
pub fn extract_code(reply: &str) -> String {
    let mut lines = reply.lines();
    let mut inside = None::<Vec<&str>>;
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            if let Some(body) = inside.take() {
                return body.join("\n") + "\n";
            }
            inside = Some(Vec::new());
        } else if let Some(body) = inside.as_mut() {
            body.push(line);
        }
    }
    match inside {
        Some(body) => body.join("\n") + "\n",
        None => reply.trim_matches('\n').to_string() + "\n",
    }
}

/// Step comments 1..=`n_steps` that are absent from `program`.
pub fn missing_steps(program: &Program, n_steps: usize) -> Vec<u32> {
    let present: Vec<u32> = program.steps().iter().map(|(id, _)| *id).collect();
    (1..=n_steps as u32)
        .filter(|i| !present.contains(i))
        .collect()
}

enum Checked {
    Ok,
    Incomplete(String),
    Broken(String),
}

fn check_reply(text: &str, n_steps: usize) -> Checked {
    match crate::dsl::parse(text) {
        Err(errs) => Checked::Broken(
            errs.iter()
                .map(ParseError::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ),
        Ok(ast) => {
            let missing = missing_steps(&ast, n_steps);
            if missing.is_empty() {
                Checked::Ok
            } else {
                let list: Vec<String> = missing.iter().map(u32::to_string).collect();
                Checked::Incomplete(format!("missing step comments: [{}]", list.join(", ")))
            }
        }
    }
}

/// Ask for a program with the given prompt, validating the reply and
/// re-asking once. A reply that parses but lacks step comments is returned
/// best-effort; one that never parses is an error.
pub fn request_program(
    prompt: String,
    n_steps: usize,
    origin: Origin,
    client: &dyn ModelClient,
) -> Result<GeneratedProgram, PromptError> {
    let mut messages = initial_messages(prompt);
    let params = CompletionParams::default();
    let mut notes = Vec::new();
    let first = extract_code(&client.complete(&messages, &params)?);
    let problem = match check_reply(&first, n_steps) {
        Checked::Ok => {
            return Ok(GeneratedProgram {
                program: SourceProgram::new(first, origin),
                notes,
                valid: true,
            })
        }
        Checked::Incomplete(p) | Checked::Broken(p) => p,
    };
    notes.push(problem.clone());
    messages.push(ChatMessage::user(format!(
        "The program you sent has problems: {problem}. Reply with the complete corrected program only."
    )));
    let second = extract_code(&client.complete(&messages, &params)?);
    match check_reply(&second, n_steps) {
        Checked::Ok => Ok(GeneratedProgram {
            program: SourceProgram::new(second, origin),
            notes,
            valid: true,
        }),
        Checked::Incomplete(p) => {
            notes.push(p);
            Ok(GeneratedProgram {
                program: SourceProgram::new(second, origin),
                notes,
                valid: false,
            })
        }
        Checked::Broken(p) => Err(PromptError::MalformedModelReply(format!(
            "no parsable program after one retry: {p}"
        ))),
    }
}

/// Generate a program from an abstract logical prompt.
pub fn generate_program(
    al: &AlPrompt,
    client: &dyn ModelClient,
) -> Result<GeneratedProgram, PromptError> {
    request_program(
        al.rendered.clone(),
        al.steps.len(),
        Origin::Generated,
        client,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebase::EntryStatus;

    fn mock(rules: &[(&str, &[&str])]) -> MockClient {
        let mut s = MockScript::default();
        for (m, r) in rules {
            s = s.rule(*m, r);
        }
        MockClient::new(s)
    }

    #[test]
    fn numbered_steps() {
        assert_eq!(parse_numbered_steps("1. do x").unwrap(), vec!["do x"]);
        assert_eq!(
            parse_numbered_steps(
                "Sure:\n1. find the muffins on the table\n2) count the number of muffins\n"
            )
            .unwrap(),
            vec![
                "find the muffins on the table",
                "count the number of muffins"
            ]
        );
        assert!(parse_numbered_steps("1. a\n3. c").is_err());
        assert!(parse_numbered_steps("no steps").is_err());
    }

    #[test]
    fn decompose_retries_once() {
        let c = mock(&[("### DECOMPOSE\nQuery: q", &["nonsense", "1. a\n2. b"])]);
        let steps = generate_logical_steps("q", &c, &Templates::builtin()).unwrap();
        assert_eq!(steps, vec!["a", "b"]);
        let c = mock(&[("### DECOMPOSE\nQuery: q", &["1. a\n3. c", "1. a\n3. c"])]);
        assert!(matches!(
            generate_logical_steps("q", &c, &Templates::builtin()),
            Err(PromptError::MalformedModelReply(_))
        ));
    }

    fn entry(query: &str) -> CodebaseEntry {
        CodebaseEntry::new(
            query,
            vec![],
            SourceProgram::new(
                "xs = find(image, \"cup\")\nreturn count(xs)\n",
                Origin::Generated,
            ),
            EntryStatus::Refined,
        )
        .unwrap()
    }

    #[test]
    fn al_prompt_ordering() {
        let steps = vec![
            "find the red mugs".to_string(),
            "count the mugs".to_string(),
        ];
        let a = entry("count the red mugs");
        let b = entry("is there a dog");
        let c = entry("where is the cat");
        let t = Templates::builtin();
        let al = build_al_prompt("how many red mugs", &steps, &[&b, &a, &c], 2, &t).unwrap();
        assert_eq!(al.donors[0], a.id);
        assert_eq!(al.abstract_codes.len(), 2);
        assert!(al.similarities.windows(2).all(|w| w[0] >= w[1]));
        let empty = build_al_prompt("q", &steps, &[], 2, &t).unwrap();
        assert!(empty.abstract_codes.is_empty());
        assert!(empty
            .rendered
            .contains("1. find the red mugs\n2. count the mugs\n"));
        assert_eq!(
            empty.rendered,
            build_al_prompt("q", &steps, &[], 2, &t).unwrap().rendered
        );
    }

    fn al(steps: usize) -> AlPrompt {
        let steps: Vec<String> = (1..=steps).map(|i| format!("s{i}")).collect();
        build_al_prompt("q", &steps, &[], 2, &Templates::builtin()).unwrap()
    }

    const GOOD: &str =
        "# step 1: find\nms = find(image, \"muffin\")\n# step 2: count\nreturn count(ms)\n";

    #[test]
    fn happy_path_in_fence() {
        let fenced = format!("Here you go:\n```python\n{GOOD}```\n");
        let c = mock(&[("### GENERATE", &[fenced.as_str()])]);
        let g = generate_program(&al(2), &c).unwrap();
        assert!(g.valid && g.notes.is_empty());
        assert_eq!(g.program.text, GOOD);
    }

    #[test]
    fn missing_step_triggers_reask() {
        let partial = "# step 1: find\nms = find(image, \"muffin\")\nreturn count(ms)\n";
        let c = mock(&[
            ("missing step comments: [2]", &[GOOD]),
            ("### GENERATE", &[partial]),
        ]);
        let g = generate_program(&al(2), &c).unwrap();
        assert!(g.valid);
        assert_eq!(g.notes, vec!["missing step comments: [2]"]);
        assert_eq!(c.calls(), 2);
    }

    #[test]
    fn parse_error_reask_carries_line() {
        let c = mock(&[
            ("line 2: expected indented block", &[GOOD]),
            (
                "### GENERATE",
                &["if exists(image, \"dog\"):\nreturn \"yes\"\n"],
            ),
        ]);
        assert!(generate_program(&al(2), &c).unwrap().valid);
        let c = mock(&[("### GENERATE", &["x = (", "x = ("])]);
        assert!(matches!(
            generate_program(&al(2), &c),
            Err(PromptError::MalformedModelReply(_))
        ));
    }
}
