use std::collections::BTreeMap;

use super::{Category, FeedbackInput, FeedbackItem, FeedbackModel, Source};
use crate::analysis::Severity;
use crate::codebase::tokenize;
use crate::prompting::{ChatMessage, CompletionParams, ModelError, TemplateName};
use crate::runtime::{names_match, EventKind, Patch, Scene, TraceEvent, Value};

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "any", "all", "some", "each", "every", "there", "whether", "if", "this",
    "that", "these", "those", "its", "their", "image", "picture", "photo", "scene",
];

/// Words that end a noun phrase.
const BOUNDARIES: &[&str] = &[
    "of", "on", "in", "at", "to", "for", "from", "with", "by", "near", "next", "left", "right",
    "above", "below", "under", "over", "behind", "beside", "between", "inside", "into", "and",
    "or", "is", "are", "was", "were", "has", "have", "which", "who", "than",
];

/// Head words that defer to their `of` complement: "the number of cups".
const MEASURES: &[&str] = &[
    "number", "amount", "count", "color", "colour", "kind", "type", "size",
];

/// The object a step is about: the last content word of the first noun
/// phrase after the leading verb. `None` when the step has no such phrase.
pub fn target_noun(step: &str) -> Option<String> {
    let words = tokenize(step);
    let mut phrase: Vec<&str> = Vec::new();
    let mut iter = words.iter().skip(1).map(String::as_str).peekable();
    while let Some(w) = iter.next() {
        if MEASURES.contains(&w) && iter.peek() == Some(&"of") {
            iter.next();
            continue;
        }
        if BOUNDARIES.contains(&w) {
            if phrase.is_empty() {
                continue;
            }
            break;
        }
        if STOPWORDS.contains(&w) || w.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        phrase.push(w);
    }
    phrase.last().map(|w| w.to_string())
}

/// Scene-graph caption of everything inside `patch`.
pub fn caption_patch(scene: &Scene, patch: &Patch) -> String {
    let mut objs: Vec<_> = scene
        .objects
        .iter()
        .filter(|o| patch.bbox.contains(&o.bbox))
        .collect();
    objs.sort_by(|a, b| a.bbox.x.cmp(&b.bbox.x).then_with(|| a.id.cmp(&b.id)));
    if objs.is_empty() {
        return "nothing".to_string();
    }
    objs.iter()
        .map(|o| {
            let attrs: Vec<&str> = o.attributes.values().map(String::as_str).collect();
            if attrs.is_empty() {
                format!("a {} at {}", o.name, o.bbox)
            } else {
                format!("a {} ({}) at {}", o.name, attrs.join(", "), o.bbox)
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn patches_of(value: &Value) -> Option<Vec<&Patch>> {
    match value {
        Value::Patch(p) => Some(vec![p]),
        Value::List(items) if !items.is_empty() => {
            let ps: Vec<&Patch> = items.iter().filter_map(Value::as_patch).collect();
            (ps.len() == items.len()).then_some(ps)
        }
        _ => None,
    }
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

/// Captions for the whole scene and every patch-valued assignment, then a
/// check of each step that called `find` or `exists`.
pub fn visual_feedback(
    input: &FeedbackInput<'_>,
    model: Option<FeedbackModel<'_>>,
) -> Vec<FeedbackItem> {
    let mut out = Vec::new();
    let mut degraded: Option<String> = None;
    let caption = |patches: &[&Patch], degraded: &mut Option<String>| -> String {
        let synthetic = || {
            patches
                .iter()
                .map(|p| caption_patch(input.scene, p))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        match model {
            Some(m) if degraded.is_none() => {
                let region: Vec<String> = patches.iter().map(|p| p.bbox.to_string()).collect();
                match ask(
                    m,
                    TemplateName::Caption,
                    &[("QUERY", input.query), ("REGION", &region.join(", "))],
                ) {
                    Ok(text) => text.trim().to_string(),
                    Err(e) => {
                        *degraded = Some(e.to_string());
                        synthetic()
                    }
                }
            }
            _ => synthetic(),
        }
    };

    let full = input.scene.full_patch();
    let text = caption(&[&full], &mut degraded);
    out.push(FeedbackItem::new(
        Source::Visual,
        Category::Caption,
        Severity::Info,
        format!("image: {text}"),
    ));
    for ev in input
        .execution
        .trace
        .iter()
        .filter(|e| e.kind == EventKind::Assign)
    {
        let Some(patches) = patches_of(&ev.value_snapshot) else {
            continue;
        };
        let name = ev.name.clone().unwrap_or_default();
        let text = caption(&patches, &mut degraded);
        out.push(
            FeedbackItem::new(
                Source::Visual,
                Category::Caption,
                Severity::Info,
                format!("{name}: {text}"),
            )
            .at_line(ev.line)
            .at_step(ev.step_id),
        );
    }

    let step_text: BTreeMap<u32, String> = input.program.steps().into_iter().collect();
    let mut by_step: BTreeMap<u32, Vec<&TraceEvent>> = BTreeMap::new();
    for ev in &input.execution.trace {
        let perceptual = ev.kind == EventKind::PrimitiveCall
            && matches!(ev.primitive.as_deref(), Some("find") | Some("exists"));
        if let (true, Some(step)) = (perceptual, ev.step_id) {
            by_step.entry(step).or_default().push(ev);
        }
    }
    for (step, events) in by_step {
        let Some(text) = step_text.get(&step) else {
            continue;
        };
        let line = events[0].line;
        let item = match model {
            Some(m) if degraded.is_none() => {
                let output: Vec<String> = events
                    .iter()
                    .map(|e| e.value_snapshot.to_string())
                    .collect();
                let step_s = step.to_string();
                match ask(
                    m,
                    TemplateName::VerifyStep,
                    &[
                        ("QUERY", input.query),
                        ("STEP_ID", &step_s),
                        ("STEP", text),
                        ("OUTPUT", &output.join("; ")),
                    ],
                ) {
                    Ok(reply) if reply.trim().to_lowercase().starts_with("yes") => {
                        Some(FeedbackItem::new(
                            Source::Visual,
                            Category::SubstepOk,
                            Severity::Info,
                            format!("step {step} verified: {}", reply.trim()),
                        ))
                    }
                    Ok(reply) => Some(FeedbackItem::new(
                        Source::Visual,
                        Category::SubstepMismatch,
                        Severity::Warning,
                        format!("step {step} not verified: {}", reply.trim()),
                    )),
                    Err(e) => {
                        degraded = Some(e.to_string());
                        synthetic_check(input.scene, step, text, &events)
                    }
                }
            }
            _ => synthetic_check(input.scene, step, text, &events),
        };
        if let Some(item) = item {
            out.push(item.at_line(line).at_step(Some(step)));
        }
    }
    if let Some(reason) = degraded {
        out.push(FeedbackItem::new(
            Source::Visual,
            Category::Caption,
            Severity::Warning,
            format!("visual model unavailable, used scene-graph captions: {reason}"),
        ));
    }
    out
}

fn synthetic_check(
    scene: &Scene,
    step: u32,
    text: &str,
    events: &[&TraceEvent],
) -> Option<FeedbackItem> {
    let target = target_noun(text)?;
    let finds: Vec<&&TraceEvent> = events
        .iter()
        .filter(|e| e.primitive.as_deref() == Some("find"))
        .collect();
    if !finds.is_empty() {
        let mut found: Vec<String> = Vec::new();
        for ev in finds {
            for p in ev.value_snapshot.patches() {
                for id in &p.object_ids {
                    if let Some(o) = scene.object(id) {
                        if !found.contains(&o.name) {
                            found.push(o.name.clone());
                        }
                    }
                }
            }
        }
        let hits = found.iter().filter(|n| names_match(&target, n)).count();
        return Some(if hits > 0 {
            FeedbackItem::new(
                Source::Visual,
                Category::SubstepOk,
                Severity::Info,
                format!("step {step}: found {target}"),
            )
        } else if found.is_empty() {
            FeedbackItem::new(
                Source::Visual,
                Category::SubstepMismatch,
                Severity::Warning,
                format!("no {target} found in step {step}"),
            )
        } else {
            FeedbackItem::new(
                Source::Visual,
                Category::SubstepMismatch,
                Severity::Warning,
                format!(
                    "no {target} found in step {step} (found: {})",
                    found.join(", ")
                ),
            )
        });
    }
    // Only `exists` calls: check the program looked for the right thing.
    let checked: Vec<String> = events
        .iter()
        .filter_map(|e| match e.args_snapshot.get(1) {
            Some(Value::Text(name)) => Some(name.clone()),
            _ => None,
        })
        .collect();
    Some(if checked.iter().any(|n| names_match(&target, n)) {
        FeedbackItem::new(
            Source::Visual,
            Category::SubstepOk,
            Severity::Info,
            format!("step {step}: checked for {target}"),
        )
    } else {
        FeedbackItem::new(
            Source::Visual,
            Category::SubstepMismatch,
            Severity::Warning,
            format!(
                "no {target} found in step {step} (checked: {})",
                checked.join(", ")
            ),
        )
    })
}
