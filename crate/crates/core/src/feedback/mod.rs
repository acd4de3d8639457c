//! Feedback from four channels: visual (captions and per-step checks),
//! textual (repetition, summary, grounding), compile (diagnostics and
//! runtime errors) and human (operator notes). [`aggregate`] merges them into
//! one severity-ordered [`FeedbackBundle`] for the refiner.

mod textual;
mod visual;

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::analysis::{Diagnostic, Severity};
use crate::dsl::Program;
use crate::prompting::{ModelClient, Templates};
use crate::runtime::{ExecutionResult, PerceptionBackend, Scene};

pub use textual::{grounded, textual_feedback, REPETITION_THRESHOLD};
pub use visual::{caption_patch, target_noun, visual_feedback};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Visual,
    Textual,
    Compile,
    Human,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::Visual,
        Source::Textual,
        Source::Compile,
        Source::Human,
    ];

    pub fn header(self) -> &'static str {
        match self {
            Source::Visual => "VISUAL",
            Source::Textual => "TEXTUAL",
            Source::Compile => "COMPILE",
            Source::Human => "HUMAN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Caption,
    SubstepMismatch,
    SubstepOk,
    Summary,
    LogicCheck,
    Repetition,
    StaticDiag,
    RuntimeError,
    UserNote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackItem {
    pub source: Source,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    pub severity: Severity,
    pub message: String,
}

impl FeedbackItem {
    pub fn new(
        source: Source,
        category: Category,
        severity: Severity,
        message: impl Into<String>,
    ) -> Self {
        FeedbackItem {
            source,
            category,
            step_id: None,
            line: None,
            severity,
            message: message.into(),
        }
    }

    pub fn at_line(mut self, line: u32) -> Self {
        self.line = Some(line);
        self
    }

    pub fn at_step(mut self, step: Option<u32>) -> Self {
        self.step_id = step;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityCounts {
    pub error: usize,
    pub warning: usize,
    pub info: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackBundle {
    pub items: Vec<FeedbackItem>,
    pub counts: SeverityCounts,
}

impl FeedbackBundle {
    pub fn errors(&self) -> usize {
        self.counts.error
    }

    pub fn warnings(&self) -> usize {
        self.counts.warning
    }

    /// True when any item is an error or a warning, i.e. the program still
    /// needs work.
    pub fn needs_refinement(&self) -> bool {
        self.counts.error + self.counts.warning > 0
    }

    pub fn from_source(&self, source: Source) -> impl Iterator<Item = &FeedbackItem> {
        self.items.iter().filter(move |i| i.source == source)
    }

    /// Prompt form: one section per source, `(none)` for empty sections.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for source in Source::ALL {
            out.push_str(source.header());
            out.push_str(":\n");
            let mut any = false;
            for item in self.from_source(source) {
                any = true;
                out.push_str(&format!("- [{}]", item.severity));
                match (item.line, item.step_id) {
                    (Some(l), Some(s)) => out.push_str(&format!(" (line {l}, step {s})")),
                    (Some(l), None) => out.push_str(&format!(" (line {l})")),
                    (None, Some(s)) => out.push_str(&format!(" (step {s})")),
                    (None, None) => {}
                }
                out.push(' ');
                out.push_str(&item.message);
                out.push('\n');
            }
            if !any {
                out.push_str("(none)\n");
            }
        }
        out
    }
}

/// Merge the channels. Items are ordered by severity (errors first), then
/// line (items without a line last), then the order they were produced in.
pub fn aggregate(
    visual: Vec<FeedbackItem>,
    textual: Vec<FeedbackItem>,
    compile: Vec<FeedbackItem>,
    human: Vec<FeedbackItem>,
) -> FeedbackBundle {
    let mut items: Vec<(usize, FeedbackItem)> = [visual, textual, compile, human]
        .into_iter()
        .flatten()
        .enumerate()
        .collect();
    items.sort_by_key(|(seq, i)| (Reverse(i.severity), i.line.is_none(), i.line, *seq));
    let items: Vec<FeedbackItem> = items.into_iter().map(|(_, i)| i).collect();
    let mut counts = SeverityCounts::default();
    for i in &items {
        match i.severity {
            Severity::Error => counts.error += 1,
            Severity::Warning => counts.warning += 1,
            Severity::Info => counts.info += 1,
        }
    }
    FeedbackBundle { items, counts }
}

/// Diagnostics and any runtime error, one item each.
pub fn compile_feedback(diags: &[Diagnostic], exec: &ExecutionResult) -> Vec<FeedbackItem> {
    let mut out: Vec<FeedbackItem> = diags
        .iter()
        .map(|d| {
            FeedbackItem::new(
                Source::Compile,
                Category::StaticDiag,
                d.severity,
                format!("{}: {}", d.code, d.message),
            )
            .at_line(d.line)
        })
        .collect();
    if let Some(e) = &exec.runtime_error {
        let mut item = FeedbackItem::new(
            Source::Compile,
            Category::RuntimeError,
            Severity::Error,
            format!("runtime error: {}", e.message),
        );
        if e.line > 0 {
            item = item.at_line(e.line);
        }
        out.push(item);
    }
    out
}

/// Each non-blank operator line becomes a note, verbatim and in order.
pub fn human_feedback(lines: &[String]) -> Vec<FeedbackItem> {
    lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            FeedbackItem::new(
                Source::Human,
                Category::UserNote,
                Severity::Warning,
                l.clone(),
            )
        })
        .collect()
}

/// Which channels contribute to a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackChannels {
    pub visual: bool,
    pub textual: bool,
    pub compile: bool,
    pub human: bool,
}

impl Default for FeedbackChannels {
    fn default() -> Self {
        FeedbackChannels {
            visual: true,
            textual: true,
            compile: true,
            human: true,
        }
    }
}

/// Everything a feedback pass looks at for one executed program.
pub struct FeedbackInput<'a> {
    pub query: &'a str,
    pub program: &'a Program,
    pub diagnostics: &'a [Diagnostic],
    pub execution: &'a ExecutionResult,
    pub scene: &'a Scene,
    pub backend: &'a dyn PerceptionBackend,
}

/// Model used by the visual and textual channels instead of their
/// rule-based fallbacks.
#[derive(Clone, Copy)]
pub struct FeedbackModel<'a> {
    pub client: &'a dyn ModelClient,
    pub templates: &'a Templates,
}

/// Run the enabled channels and aggregate.
pub fn collect(
    input: &FeedbackInput<'_>,
    channels: FeedbackChannels,
    human_lines: &[String],
    model: Option<FeedbackModel<'_>>,
) -> FeedbackBundle {
    let visual = if channels.visual {
        visual_feedback(input, model)
    } else {
        Vec::new()
    };
    let textual = if channels.textual {
        textual_feedback(input, model)
    } else {
        Vec::new()
    };
    let compile = if channels.compile {
        compile_feedback(input.diagnostics, input.execution)
    } else {
        Vec::new()
    };
    let human = if channels.human {
        human_feedback(human_lines)
    } else {
        Vec::new()
    };
    aggregate(visual, textual, compile, human)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::DiagnosticCode;
    use crate::runtime::RuntimeError;

    fn item(sev: Severity, line: Option<u32>, msg: &str) -> FeedbackItem {
        let mut i = FeedbackItem::new(Source::Textual, Category::Summary, sev, msg);
        i.line = line;
        i
    }

    #[test]
    fn empty_bundle() {
        let b = aggregate(vec![], vec![], vec![], vec![]);
        assert!(b.items.is_empty());
        assert!(!b.needs_refinement());
        assert_eq!(
            b.render(),
            "VISUAL:\n(none)\nTEXTUAL:\n(none)\nCOMPILE:\n(none)\nHUMAN:\n(none)\n"
        );
    }

    #[test]
    fn ordering() {
        let b = aggregate(
            vec![item(Severity::Info, Some(1), "a")],
            vec![
                item(Severity::Info, None, "b"),
                item(Severity::Error, Some(9), "c"),
            ],
            vec![item(Severity::Info, Some(1), "d")],
            vec![],
        );
        let msgs: Vec<&str> = b.items.iter().map(|i| i.message.as_str()).collect();
        assert_eq!(msgs, vec!["c", "a", "d", "b"]);
        assert_eq!(
            b.counts,
            SeverityCounts {
                error: 1,
                warning: 0,
                info: 3
            }
        );
    }

    #[test]
    fn compile_mapping() {
        let clean = ExecutionResult {
            result: None,
            trace: vec![],
            runtime_error: None,
            steps_used: 0,
        };
        assert!(compile_feedback(&[], &clean).is_empty());
        let d = Diagnostic::new(DiagnosticCode::UndefinedVar, 3, "undefined name 'ms'");
        let mut exec = clean.clone();
        exec.runtime_error = Some(RuntimeError {
            line: 5,
            message: "index out of range: index 5, length 2".into(),
        });
        let items = compile_feedback(&[d], &exec);
        assert_eq!(items.len(), 2);
        assert_eq!(
            (items[0].category, items[0].severity, items[0].line),
            (Category::StaticDiag, Severity::Error, Some(3))
        );
        assert_eq!(
            (items[1].category, items[1].line),
            (Category::RuntimeError, Some(5))
        );
        assert!(items[1].message.contains("index out of range"));
    }

    #[test]
    fn human_notes_verbatim() {
        assert!(human_feedback(&[]).is_empty());
        let lines = vec![
            "the cup left of the plate is the target".to_string(),
            "  ".to_string(),
            "second".to_string(),
        ];
        let items = human_feedback(&lines);
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].message, lines[0]);
        assert_eq!(items[1].message, "second");
        assert!(items.iter().all(|i| i.category == Category::UserNote));
    }
}
