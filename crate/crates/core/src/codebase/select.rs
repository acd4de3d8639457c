use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::CodebaseEntry;
use crate::analysis::{analyze, lint_score};
use crate::dsl::SourceProgram;
use crate::feedback::FeedbackBundle;
use crate::prompting::{ChatMessage, CompletionParams, ModelClient, TemplateName, Templates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Survivor {
    Draft,
    Refined,
}

/// One side of a draft-vs-refined comparison.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub code: &'a SourceProgram,
    pub feedback: &'a FeedbackBundle,
}

impl Candidate<'_> {
    fn lint(&self) -> f64 {
        match self.code.parse() {
            Ok(ast) => lint_score(&ast, &analyze(&ast)),
            Err(_) => 0.0,
        }
    }

    /// Fewer errors, then fewer warnings, then higher lint score.
    fn rank(&self, other: &Candidate<'_>) -> Ordering {
        other
            .feedback
            .errors()
            .cmp(&self.feedback.errors())
            .then(other.feedback.warnings().cmp(&self.feedback.warnings()))
            .then(self.lint().total_cmp(&other.lint()))
    }
}

/// Rule-based choice; a full tie keeps the refined program.
pub fn choose(draft: Candidate<'_>, refined: Candidate<'_>) -> Survivor {
    match draft.rank(&refined) {
        Ordering::Greater => Survivor::Draft,
        _ => Survivor::Refined,
    }
}

pub fn select_survivor(
    draft: &CodebaseEntry,
    refined: &CodebaseEntry,
    draft_fb: &FeedbackBundle,
    refined_fb: &FeedbackBundle,
) -> Survivor {
    choose(
        Candidate {
            code: &draft.code,
            feedback: draft_fb,
        },
        Candidate {
            code: &refined.code,
            feedback: refined_fb,
        },
    )
}

/// Ask the model to pick; fall back to [`choose`] when the call fails or
/// the reply names neither side.
pub fn select_survivor_with_model(
    query: &str,
    draft: Candidate<'_>,
    refined: Candidate<'_>,
    client: &dyn ModelClient,
    templates: &Templates,
) -> Survivor {
    let prompt = templates.render(
        TemplateName::Select,
        &[
            ("QUERY", query),
            ("DRAFT", &draft.code.text),
            ("REFINED", &refined.code.text),
            ("DRAFT_FEEDBACK", &draft.feedback.render()),
            ("REFINED_FEEDBACK", &refined.feedback.render()),
        ],
    );
    let reply = prompt.ok().and_then(|p| {
        client
            .complete(&[ChatMessage::user(p)], &CompletionParams::default())
            .ok()
    });
    let word = reply
        .as_deref()
        .and_then(|r| r.split_whitespace().next())
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        });
    match word.as_deref() {
        Some("draft") => Survivor::Draft,
        Some("refined") => Survivor::Refined,
        _ => choose(draft, refined),
    }
}
