use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Category, FeedbackInput, FeedbackItem, FeedbackModel, Source};
use crate::analysis::Severity;
use crate::dsl::BACKEND_PRIMITIVES;
use crate::prompting::{ChatMessage, CompletionParams, ModelError, TemplateName};
use crate::runtime::{EventKind, TraceEvent, Value};

/// Identical text assigned on this many loop iterations is reported.
pub const REPETITION_THRESHOLD: usize = 3;

/// Backend primitives the return event depends on, directly or through any
/// chain of data and control dependencies. Empty when the trace has no
/// return event or the answer never touched perception.
pub fn grounded(trace: &[TraceEvent]) -> BTreeSet<String> {
    let mut found = BTreeSet::new();
    let Some(ret) = trace.iter().rev().find(|e| e.kind == EventKind::Return) else {
        return found;
    };
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([ret.seq]);
    while let Some(seq) = queue.pop_front() {
        if !seen.insert(seq) {
            continue;
        }
        let Some(ev) = trace.get(seq as usize) else {
            continue;
        };
        if ev.kind == EventKind::PrimitiveCall {
            if let Some(p) = ev
                .primitive
                .as_deref()
                .filter(|p| BACKEND_PRIMITIVES.contains(p))
            {
                found.insert(p.to_string());
            }
        }
        queue.extend(ev.deps.iter().copied());
    }
    found
}

fn in_loop(trace: &[TraceEvent], ev: &TraceEvent) -> bool {
    ev.deps.iter().any(|d| {
        trace
            .get(*d as usize)
            .is_some_and(|e| e.kind == EventKind::LoopIter)
    })
}

fn repetitions(trace: &[TraceEvent]) -> Vec<FeedbackItem> {
    let mut counts: BTreeMap<(u32, &str), (usize, Option<u32>)> = BTreeMap::new();
    for ev in trace.iter().filter(|e| e.kind == EventKind::Assign) {
        if let Value::Text(t) = &ev.value_snapshot {
            if in_loop(trace, ev) {
                let slot = counts
                    .entry((ev.line, t.as_str()))
                    .or_insert((0, ev.step_id));
                slot.0 += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|(_, (n, _))| *n >= REPETITION_THRESHOLD)
        .map(|((line, text), (n, step))| {
            FeedbackItem::new(
                Source::Textual,
                Category::Repetition,
                Severity::Info,
                format!("value '{text}' repeated {n} times in loop at line {line}"),
            )
            .at_line(line)
            .at_step(step)
        })
        .collect()
}

fn text_values(trace: &[TraceEvent]) -> Vec<&str> {
    trace
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Assign | EventKind::PrimitiveCall))
        .filter_map(|e| match &e.value_snapshot {
            Value::Text(t) => Some(t.as_str()),
            _ => None,
        })
        .collect()
}

fn answer_text(result: Option<&Value>) -> String {
    match result {
        Some(v) => v.to_string(),
        None => "(no answer)".to_string(),
    }
}

fn rule_summary(trace: &[TraceEvent], result: Option<&Value>) -> String {
    let texts = text_values(trace);
    let distinct: BTreeSet<&str> = texts.iter().copied().collect();
    let listed: Vec<String> = distinct.iter().map(|t| format!("'{t}'")).collect();
    let mut s = format!("{} text value(s), {} distinct", texts.len(), distinct.len());
    if !listed.is_empty() {
        s.push_str(&format!(" ({})", listed.join(", ")));
    }
    s.push_str(&format!("; answer: {}", answer_text(result)));
    s
}

fn ask(
    model: FeedbackModel<'_>,
    name: TemplateName,
    slots: &[(&str, &str)],
) -> Result<String, ModelError> {
    let prompt = model
        .templates
        .render(name, slots)
        .map_err(|e| ModelError::BadResponse(e.to_string()))?;
    model
        .client
        .complete(&[ChatMessage::user(prompt)], &CompletionParams::default())
}

fn rule_logic_check(trace: &[TraceEvent]) -> FeedbackItem {
    let prims = grounded(trace);
    if prims.is_empty() {
        FeedbackItem::new(
            Source::Textual,
            Category::LogicCheck,
            Severity::Error,
            "answer not grounded in any perception call",
        )
    } else {
        let list: Vec<&str> = prims.iter().map(String::as_str).collect();
        FeedbackItem::new(
            Source::Textual,
            Category::LogicCheck,
            Severity::Info,
            format!("answer derived from {}", list.join(", ")),
        )
    }
}

/// Repetition, summary and grounding items.
pub fn textual_feedback(
    input: &FeedbackInput<'_>,
    model: Option<FeedbackModel<'_>>,
) -> Vec<FeedbackItem> {
    let trace = &input.execution.trace;
    let result = input.execution.result.as_ref();
    let mut out = repetitions(trace);
    let mut failure: Option<String> = None;

    let summary = match model {
        Some(m) => {
            let values = text_values(trace).join("\n");
            match ask(
                m,
                TemplateName::Summarize,
                &[
                    ("QUERY", input.query),
                    ("VALUES", &values),
                    ("ANSWER", &answer_text(result)),
                ],
            ) {
                Ok(s) => s.trim().to_string(),
                Err(e) => {
                    failure = Some(e.to_string());
                    rule_summary(trace, result)
                }
            }
        }
        None => rule_summary(trace, result),
    };
    out.push(FeedbackItem::new(
        Source::Textual,
        Category::Summary,
        Severity::Info,
        summary,
    ));

    if let Some(ret) = trace.iter().rev().find(|e| e.kind == EventKind::Return) {
        let item = match model.filter(|_| failure.is_none()) {
            Some(m) => {
                let values: Vec<String> = trace
                    .iter()
                    .filter(|e| e.kind == EventKind::Assign)
                    .map(|e| {
                        format!(
                            "{} = {}",
                            e.name.as_deref().unwrap_or("?"),
                            e.value_snapshot
                        )
                    })
                    .collect();
                match ask(
                    m,
                    TemplateName::LogicCheck,
                    &[
                        ("QUERY", input.query),
                        ("VALUES", &values.join("\n")),
                        ("ANSWER", &answer_text(result)),
                    ],
                ) {
                    Ok(reply) if reply.trim().to_lowercase().starts_with("yes") => {
                        FeedbackItem::new(
                            Source::Textual,
                            Category::LogicCheck,
                            Severity::Info,
                            reply.trim().to_string(),
                        )
                    }
                    Ok(reply) => FeedbackItem::new(
                        Source::Textual,
                        Category::LogicCheck,
                        Severity::Error,
                        reply.trim().to_string(),
                    ),
                    Err(e) => {
                        failure = Some(e.to_string());
                        rule_logic_check(trace)
                    }
                }
            }
            None => rule_logic_check(trace),
        };
        out.push(item.at_line(ret.line).at_step(ret.step_id));
    }
    if let Some(reason) = failure {
        out.push(FeedbackItem::new(
            Source::Textual,
            Category::Summary,
            Severity::Warning,
            format!("text model unavailable, used rule-based checks: {reason}"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::feedback::FeedbackInput;
    use crate::runtime::{execute, BBox, Limits, Scene, SceneObject, SyntheticBackend};

    fn scene() -> Scene {
        let objects = (0..5)
            .map(|i| SceneObject {
                id: format!("c{i}"),
                name: "cup".into(),
                bbox: BBox::new(i * 10, 0, 5, 5),
                attributes: Default::default(),
            })
            .collect();
        Scene {
            width: 100,
            height: 20,
            objects,
            relations: vec![],
        }
    }

    fn run(src: &str) -> Vec<FeedbackItem> {
        let s = scene();
        let p = parse(src).unwrap();
        let exec = execute(&p, &s, &SyntheticBackend, Limits::default());
        let input = FeedbackInput {
            query: "q",
            program: &p,
            diagnostics: &[],
            execution: &exec,
            scene: &s,
            backend: &SyntheticBackend,
        };
        textual_feedback(&input, None)
    }

    #[test]
    fn hard_coded_answer_is_ungrounded() {
        let items = run("return \"yes\"\n");
        let lc = items
            .iter()
            .find(|i| i.category == Category::LogicCheck)
            .unwrap();
        assert_eq!(lc.severity, Severity::Error);
        assert_eq!(lc.message, "answer not grounded in any perception call");
    }

    #[test]
    fn counted_answer_is_grounded() {
        let items = run("xs = find(image, \"cup\")\nreturn count(xs)\n");
        let lc = items
            .iter()
            .find(|i| i.category == Category::LogicCheck)
            .unwrap();
        assert_eq!(lc.severity, Severity::Info);
    }

    #[test]
    fn control_dependence_grounds() {
        let items = run("if exists(image, \"cup\"):\n    return \"yes\"\nreturn \"no\"\n");
        let lc = items
            .iter()
            .find(|i| i.category == Category::LogicCheck)
            .unwrap();
        assert_eq!(lc.severity, Severity::Info);
    }

    #[test]
    fn repetition_counted() {
        let items =
            run("a = \"\"\nfor c in find(image, \"cup\"):\n    a = \"unknown\"\nreturn a\n");
        let rep: Vec<_> = items
            .iter()
            .filter(|i| i.category == Category::Repetition)
            .collect();
        assert_eq!(rep.len(), 1);
        assert_eq!(
            rep[0].message,
            "value 'unknown' repeated 5 times in loop at line 3"
        );
    }
}
