//! The deterministic synthetic task suite.
//!
//! [`generate`] builds random scenes, questions with known answers, and a
//! mock model script answering every prompt the loop will send: the step
//! list, a draft program and, for tasks with an injected defect, scripted
//! refinements. The shipped copy under `suites/hermetic/` is this output for
//! [`DEFAULT_SEED`].

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::prompting::MockScript;
use crate::runtime::{BBox, Relation, Scene, SceneObject};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_TASKS: usize = 50;

const NOUNS: &[&str] = &[
    "cup", "plate", "apple", "book", "chair", "dog", "cat", "car", "bottle", "lamp",
];
const COLORS: &[&str] = &["red", "blue", "green", "yellow", "white", "black"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Count,
    Exists,
    Color,
    LeftOf,
    Property,
    Relation,
}

impl TaskKind {
    const ALL: [TaskKind; 6] = [
        TaskKind::Count,
        TaskKind::Exists,
        TaskKind::Color,
        TaskKind::LeftOf,
        TaskKind::Property,
        TaskKind::Relation,
    ];

    fn answers_yes_no(self) -> bool {
        !matches!(self, TaskKind::Count | TaskKind::Color)
    }

    fn uses_get(self) -> bool {
        !matches!(self, TaskKind::Count | TaskKind::Exists)
    }
}

/// What is wrong with a task's first program and how the script repairs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    /// A read of a name that is never assigned.
    UndefinedVar,
    /// The program looks for the wrong object; only visual checks notice.
    WrongNoun,
    /// `get` past the end of a one-element list.
    IndexOutOfRange,
    /// A literal answer that ignores perception.
    HardCodedAnswer,
    MissingReturn,
    TypeMismatch,
    /// Dead code after the final return; the answer is still right.
    Unreachable,
    /// The first fix introduces a second error, the next fix is clean.
    TwoStageFix,
    /// Every refinement repeats the broken program.
    NeverFixed,
    /// The first refinement reply is not code, twice.
    MalformedRefinement,
    /// The first draft reply lacks step comments; the re-ask is clean.
    MissingStepComments,
}

/// Defects in the order they are handed out, each with its count.
const DEFECT_PLAN: &[(Defect, usize)] = &[
    (Defect::WrongNoun, 3),
    (Defect::UndefinedVar, 4),
    (Defect::IndexOutOfRange, 3),
    (Defect::HardCodedAnswer, 3),
    (Defect::MissingReturn, 3),
    (Defect::TypeMismatch, 2),
    (Defect::Unreachable, 2),
    (Defect::TwoStageFix, 2),
    (Defect::NeverFixed, 1),
    (Defect::MalformedRefinement, 1),
    (Defect::MissingStepComments, 1),
];

impl Defect {
    fn applies_to(self, kind: TaskKind) -> bool {
        match self {
            Defect::WrongNoun => kind == TaskKind::Count,
            Defect::IndexOutOfRange => kind.uses_get(),
            Defect::HardCodedAnswer => kind.answers_yes_no(),
            Defect::TypeMismatch => kind != TaskKind::Exists,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTask {
    pub id: String,
    pub query: String,
    pub kind: TaskKind,
    pub defect: Option<Defect>,
    pub steps: Vec<String>,
    pub scene: Scene,
    pub expected_answer: String,
    /// The correct program.
    pub program: String,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub tasks: Vec<SuiteTask>,
    pub script: MockScript,
}

#[derive(Serialize)]
struct TaskLine<'a> {
    id: &'a str,
    query: &'a str,
    scene: String,
    expected_answer: &'a str,
}

#[derive(Serialize)]
struct ManifestLine<'a> {
    id: &'a str,
    kind: TaskKind,
    defect: Option<Defect>,
}

impl Suite {
    /// Write `tasks.jsonl`, `scenes/<id>.json`, `mock_script.json` and
    /// `defects.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("scenes"))?;
        let mut tasks = String::new();
        let mut manifest = String::new();
        for t in &self.tasks {
            let rel = format!("scenes/{}.json", t.id);
            fs::write(dir.join(&rel), to_json(&t.scene)? + "\n")?;
            let line = TaskLine {
                id: &t.id,
                query: &t.query,
                scene: rel,
                expected_answer: &t.expected_answer,
            };
            tasks.push_str(&serde_json::to_string(&line).map_err(io::Error::other)?);
            tasks.push('\n');
            let m = ManifestLine {
                id: &t.id,
                kind: t.kind,
                defect: t.defect,
            };
            manifest.push_str(&serde_json::to_string(&m).map_err(io::Error::other)?);
            manifest.push('\n');
        }
        fs::write(dir.join("tasks.jsonl"), tasks)?;
        fs::write(dir.join("defects.jsonl"), manifest)?;
        fs::write(dir.join("mock_script.json"), to_json(&self.script)? + "\n")
    }
}

fn to_json<T: Serialize>(v: &T) -> io::Result<String> {
    serde_json::to_string_pretty(v).map_err(io::Error::other)
}

/// Mock patterns end at the query's line break so one query never matches
/// another that merely starts with it.
pub fn prompt_key(template: &str, query: &str) -> String {
    format!("### {template}\nQuery: {query}\n")
}

fn plural(noun: &str) -> String {
    format!("{noun}s")
}

fn object(id: usize, name: &str, slot: usize, rng: &mut ChaCha8Rng) -> SceneObject {
    let mut attributes = BTreeMap::new();
    attributes.insert(
        "color".to_string(),
        COLORS.choose(rng).expect("colors").to_string(),
    );
    SceneObject {
        id: format!("o{id}"),
        name: name.to_string(),
        bbox: BBox::new(10 + 30 * slot as u32, rng.random_range(10..70), 20, 20),
        attributes,
    }
}

/// Scene with `wanted` (name, copies) groups placed at shuffled slots.
fn build_scene(wanted: &[(&str, usize)], rng: &mut ChaCha8Rng) -> Scene {
    let total: usize = wanted.iter().map(|(_, n)| n).sum();
    let mut slots: Vec<usize> = (0..total).collect();
    slots.shuffle(rng);
    let mut objects = Vec::new();
    let mut k = 0;
    for (name, n) in wanted {
        for _ in 0..*n {
            objects.push(object(k + 1, name, slots[k], rng));
            k += 1;
        }
    }
    Scene {
        width: 20 + 30 * total as u32,
        height: 100,
        objects,
        relations: Vec::new(),
    }
}

fn distinct_nouns<'a>(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'a str> {
    let mut nouns: Vec<&str> = NOUNS.to_vec();
    nouns.shuffle(rng);
    nouns.truncate(n);
    nouns
}

struct Draft {
    query: String,
    steps: Vec<String>,
    scene: Scene,
    answer: String,
    /// Program lines, step comments included.
    lines: Vec<String>,
    /// Noun a wrong-noun defect should search for instead.
    decoy: Option<String>,
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

fn step_lines(steps: &[String], bodies: &[&[String]]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, (s, body)) in steps.iter().zip(bodies).enumerate() {
        out.push(format!("# step {}: {s}", i + 1));
        out.extend(body.iter().cloned());
    }
    out
}

fn lines(src: &[&str]) -> Vec<String> {
    src.iter().map(|s| s.to_string()).collect()
}

fn draft(kind: TaskKind, n: usize, rng: &mut ChaCha8Rng) -> Draft {
    let tag = format!("Photo {n}");
    match kind {
        TaskKind::Count => {
            let nouns = distinct_nouns(rng, 3);
            let target = rng.random_range(1..=4);
            let decoy_n = [1, 2, 3, 4, 5]
                .into_iter()
                .filter(|c| *c != target)
                .collect::<Vec<_>>();
            let decoy_n = *decoy_n.choose(rng).expect("counts");
            let extra = rng.random_range(0..=2);
            let scene = build_scene(
                &[(nouns[0], target), (nouns[1], decoy_n), (nouns[2], extra)],
                rng,
            );
            let (t, ts) = (nouns[0], plural(nouns[0]));
            let steps = vec![
                format!("Find the {ts} in the image"),
                format!("Count the {ts} found"),
                "Return the count".to_string(),
            ];
            let body = step_lines(
                &steps,
                &[
                    &[format!("{ts} = find(image, \"{t}\")")],
                    &[format!("n = count({ts})")],
                    &lines(&["return n"]),
                ],
            );
            Draft {
                query: format!("{tag}: how many {ts} are there?"),
                steps,
                scene,
                answer: target.to_string(),
                lines: body,
                decoy: Some(nouns[1].to_string()),
            }
        }
        TaskKind::Exists => {
            let nouns = distinct_nouns(rng, 3);
            let present = rng.random_bool(0.5);
            let mut wanted = vec![(nouns[1], rng.random_range(1..=3)), (nouns[2], 1)];
            if present {
                wanted.push((nouns[0], 1));
            }
            let scene = build_scene(&wanted, rng);
            let t = nouns[0];
            let steps = vec![
                format!("Check whether there is a {t} in the image"),
                "Answer yes or no".to_string(),
            ];
            let body = step_lines(
                &steps,
                &[
                    &[format!("found = exists(image, \"{t}\")")],
                    &lines(&["if found:", "    return \"yes\"", "return \"no\""]),
                ],
            );
            Draft {
                query: format!("{tag}: is there a {t}?"),
                steps,
                scene,
                answer: yes_no(present),
                lines: body,
                decoy: None,
            }
        }
        TaskKind::Color => {
            let nouns = distinct_nouns(rng, 3);
            let scene = build_scene(&[(nouns[0], 1), (nouns[1], 2), (nouns[2], 1)], rng);
            let t = nouns[0];
            let color = scene.objects[0].attributes["color"].clone();
            let steps = vec![
                format!("Find the {t} in the image"),
                format!("Ask for the color of the {t}"),
                "Return the color".to_string(),
            ];
            let body = step_lines(
                &steps,
                &[
                    &[
                        format!("{t}_list = find(image, \"{t}\")"),
                        format!("target = get({t}_list, 0)"),
                    ],
                    &[format!("shade = query(target, \"What color is the {t}?\")")],
                    &lines(&["return shade"]),
                ],
            );
            Draft {
                query: format!("{tag}: what color is the {t}?"),
                steps,
                scene,
                answer: color,
                lines: body,
                decoy: None,
            }
        }
        TaskKind::LeftOf => {
            let nouns = distinct_nouns(rng, 3);
            let scene = build_scene(&[(nouns[0], 1), (nouns[1], 1), (nouns[2], 2)], rng);
            let (a, b) = (nouns[0], nouns[1]);
            let (ba, bb) = (scene.objects[0].bbox, scene.objects[1].bbox);
            let left = 2 * ba.x + ba.w < 2 * bb.x + bb.w;
            let steps = vec![
                format!("Find the {a}"),
                format!("Find the {b}"),
                "Compare their horizontal positions".to_string(),
            ];
            let body = step_lines(
                &steps,
                &[
                    &[
                        format!("{a}_list = find(image, \"{a}\")"),
                        "first = get(".to_string() + a + "_list, 0)",
                    ],
                    &[
                        format!("{b}_list = find(image, \"{b}\")"),
                        "second = get(".to_string() + b + "_list, 0)",
                    ],
                    &lines(&[
                        "if hcenter(first) < hcenter(second):",
                        "    return \"yes\"",
                        "return \"no\"",
                    ]),
                ],
            );
            Draft {
                query: format!("{tag}: is the {a} to the left of the {b}?"),
                steps,
                scene,
                answer: yes_no(left),
                lines: body,
                decoy: None,
            }
        }
        TaskKind::Property => {
            let nouns = distinct_nouns(rng, 3);
            let scene = build_scene(&[(nouns[0], 1), (nouns[1], 1), (nouns[2], 1)], rng);
            let t = nouns[0];
            let actual = scene.objects[0].attributes["color"].clone();
            let asked = if rng.random_bool(0.5) {
                actual.clone()
            } else {
                COLORS
                    .iter()
                    .filter(|c| **c != actual)
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .expect("colors")
                    .to_string()
            };
            let steps = vec![
                format!("Find the {t}"),
                format!("Check whether the {t} is {asked}"),
            ];
            let body = step_lines(
                &steps,
                &[
                    &[
                        format!("{t}_list = find(image, \"{t}\")"),
                        format!("target = get({t}_list, 0)"),
                    ],
                    &[
                        format!("if verify_property(target, \"{t}\", \"{asked}\"):"),
                        "    return \"yes\"".to_string(),
                        "return \"no\"".to_string(),
                    ],
                ],
            );
            Draft {
                query: format!("{tag}: is the {t} {asked}?"),
                steps,
                scene,
                answer: yes_no(asked == actual),
                lines: body,
                decoy: None,
            }
        }
        TaskKind::Relation => {
            let nouns = distinct_nouns(rng, 3);
            let mut scene = build_scene(&[(nouns[0], 1), (nouns[1], 1), (nouns[2], 1)], rng);
            let (a, b) = (nouns[0], nouns[1]);
            let holds = rng.random_bool(0.5);
            let (subject, object) = if holds { ("o1", "o2") } else { ("o3", "o2") };
            scene.relations.push(Relation {
                subject_id: subject.into(),
                predicate: "on".into(),
                object_id: object.into(),
            });
            let steps = vec![
                format!("Find the {a}"),
                format!("Find the {b}"),
                format!("Check whether the {a} is on the {b}"),
            ];
            let body = step_lines(
                &steps,
                &[
                    &[
                        format!("{a}_list = find(image, \"{a}\")"),
                        "first = get(".to_string() + a + "_list, 0)",
                    ],
                    &[
                        format!("{b}_list = find(image, \"{b}\")"),
                        "second = get(".to_string() + b + "_list, 0)",
                    ],
                    &lines(&[
                        "if related(first, \"on\", second):",
                        "    return \"yes\"",
                        "return \"no\"",
                    ]),
                ],
            );
            Draft {
                query: format!("{tag}: is the {a} on the {b}?"),
                steps,
                scene,
                answer: yes_no(holds),
                lines: body,
                decoy: None,
            }
        }
    }
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Replace whole-word occurrences of `from` in `line`.
fn replace_ident(line: &str, from: &str, to: &str) -> String {
    let mut out = String::new();
    let mut rest = line;
    while let Some(pos) = rest.find(from) {
        let before = rest[..pos].chars().next_back();
        let after = rest[pos + from.len()..].chars().next();
        out.push_str(&rest[..pos]);
        if before.is_some_and(is_word) || after.is_some_and(is_word) {
            out.push_str(from);
        } else {
            out.push_str(to);
        }
        rest = &rest[pos + from.len()..];
    }
    out.push_str(rest);
    out
}

fn as_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn join(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

/// The first program variable and the index of the line that reads it next.
fn first_read(lines: &[String]) -> (String, usize) {
    let (def, var) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| {
            let (lhs, _) = l.split_once(" = ")?;
            (!l.starts_with('#')).then(|| (i, lhs.trim().to_string()))
        })
        .expect("program assigns a variable");
    let read = (def + 1..lines.len())
        .find(|&i| replace_ident(&lines[i], &var, "\u{0}") != lines[i])
        .expect("variable is read");
    (var, read)
}

fn undefined_var(lines: &[String]) -> Vec<String> {
    let (var, i) = first_read(lines);
    let mut out = lines.to_vec();
    out[i] = replace_ident(&out[i], &var, &format!("{var}_all"));
    out
}

fn missing_return(lines: &[String]) -> Vec<String> {
    let mut out = lines.to_vec();
    out.pop();
    out
}

fn with_last_step(lines: &[String], body: &str) -> Vec<String> {
    let cut = lines
        .iter()
        .rposition(|l| l.starts_with("# step"))
        .expect("step comment");
    let mut out = lines[..=cut].to_vec();
    out.push(body.to_string());
    out
}

fn apply_defect(defect: Defect, d: &Draft) -> Vec<String> {
    let clean = &d.lines;
    match defect {
        Defect::UndefinedVar
        | Defect::TwoStageFix
        | Defect::NeverFixed
        | Defect::MalformedRefinement => undefined_var(clean),
        Defect::WrongNoun => {
            let decoy = d.decoy.as_deref().expect("count tasks carry a decoy");
            clean
                .iter()
                .map(|l| match l.split_once("find(image, \"") {
                    Some((head, _)) if !l.starts_with('#') => {
                        format!("{head}find(image, \"{decoy}\")")
                    }
                    _ => l.clone(),
                })
                .collect()
        }
        Defect::IndexOutOfRange => clean.iter().map(|l| l.replace(", 0)", ", 3)")).collect(),
        Defect::HardCodedAnswer => {
            let wrong = if d.answer == "yes" { "no" } else { "yes" };
            with_last_step(clean, &format!("return \"{wrong}\""))
        }
        Defect::MissingReturn => missing_return(clean),
        Defect::TypeMismatch => clean
            .iter()
            .map(|l| {
                if l.contains(", 0)") {
                    l.replace(", 0)", ", \"0\")")
                } else if l.contains("count(") {
                    let (head, _) = l.split_once("count(").expect("count call");
                    format!("{head}count(image)")
                } else {
                    l.clone()
                }
            })
            .collect(),
        Defect::Unreachable => {
            let mut out = clean.to_vec();
            out.push("return \"unknown\"".to_string());
            out
        }
        Defect::MissingStepComments => clean
            .iter()
            .filter(|l| !l.starts_with('#'))
            .cloned()
            .collect(),
    }
}

/// Generation replies, then refinement replies, for one task.
fn replies(defect: Option<Defect>, d: &Draft) -> (Vec<String>, Vec<String>) {
    let clean = join(&d.lines);
    let Some(defect) = defect else {
        return (vec![clean], vec![]);
    };
    let draft = join(&apply_defect(defect, d));
    match defect {
        Defect::MissingStepComments => (vec![draft, clean], vec![]),
        Defect::TwoStageFix => (vec![draft], vec![join(&missing_return(&d.lines)), clean]),
        Defect::NeverFixed => (vec![draft.clone()], vec![draft.clone(), draft]),
        Defect::MalformedRefinement => {
            let junk = "I could not fix it (".to_string();
            (vec![draft], vec![junk.clone(), junk, clean])
        }
        _ => (vec![draft], vec![clean]),
    }
}

/// Assign each planned defect to the next shuffled task it applies to.
fn assign_defects(kinds: &[TaskKind], rng: &mut ChaCha8Rng) -> Vec<Option<Defect>> {
    let mut order: Vec<usize> = (0..kinds.len()).collect();
    order.shuffle(rng);
    let mut out = vec![None; kinds.len()];
    for &(defect, n) in DEFECT_PLAN {
        let mut left = n;
        for &i in &order {
            if left == 0 {
                break;
            }
            if out[i].is_none() && defect.applies_to(kinds[i]) {
                out[i] = Some(defect);
                left -= 1;
            }
        }
    }
    out
}

/// Build `n` tasks from `seed`.
pub fn generate(seed: u64, n: usize) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds: Vec<TaskKind> = (0..n)
        .map(|i| TaskKind::ALL[i % TaskKind::ALL.len()])
        .collect();
    let defects = assign_defects(&kinds, &mut rng);
    let mut tasks = Vec::with_capacity(n);
    let mut script = MockScript::default();
    for (i, (&kind, &defect)) in kinds.iter().zip(&defects).enumerate() {
        let d = draft(kind, i + 1, &mut rng);
        let numbered: Vec<String> = d
            .steps
            .iter()
            .enumerate()
            .map(|(j, s)| format!("{}. {s}", j + 1))
            .collect();
        let (gen, fixes) = replies(defect, &d);
        script = script.rule(prompt_key("DECOMPOSE", &d.query), &[&numbered.join("\n")]);
        script = script.rule(prompt_key("GENERATE", &d.query), &as_refs(&gen));
        if !fixes.is_empty() {
            script = script.rule(prompt_key("REFINE", &d.query), &as_refs(&fixes));
        }
        tasks.push(SuiteTask {
            id: format!("t{:02}", i + 1),
            query: d.query.clone(),
            kind,
            defect,
            steps: d.steps.clone(),
            scene: d.scene.clone(),
            expected_answer: d.answer.clone(),
            program: join(&d.lines),
        });
    }
    Suite { tasks, script }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analyze, error_count};
    use crate::dsl::parse;
    use crate::orchestrator::answers_match;
    use crate::runtime::{execute, Limits, SyntheticBackend};

    #[test]
    fn replace_ident_respects_word_boundaries() {
        assert_eq!(replace_ident("n = count(ns)", "n", "m"), "m = count(ns)");
        assert_eq!(replace_ident("return n", "n", "n_all"), "return n_all");
    }

    #[test]
    fn clean_programs_answer_correctly() {
        let suite = generate(DEFAULT_SEED, DEFAULT_TASKS);
        for t in &suite.tasks {
            let p = parse(&t.program).unwrap_or_else(|e| panic!("{}: {e:?}", t.id));
            assert_eq!(error_count(&analyze(&p)), 0, "{}", t.id);
            let r = execute(&p, &t.scene, &SyntheticBackend, Limits::default());
            assert!(
                answers_match(&t.expected_answer, r.result.as_ref()),
                "{}: {:?} vs {}",
                t.id,
                r.result,
                t.expected_answer
            );
        }
    }

    #[test]
    fn every_defect_is_placed() {
        let suite = generate(DEFAULT_SEED, DEFAULT_TASKS);
        for &(defect, n) in DEFECT_PLAN {
            let placed = suite
                .tasks
                .iter()
                .filter(|t| t.defect == Some(defect))
                .count();
            assert_eq!(placed, n, "{defect:?}");
        }
    }

    #[test]
    fn queries_are_unique() {
        let suite = generate(DEFAULT_SEED, DEFAULT_TASKS);
        let mut qs: Vec<&str> = suite.tasks.iter().map(|t| t.query.as_str()).collect();
        qs.sort();
        qs.dedup();
        assert_eq!(qs.len(), DEFAULT_TASKS);
    }
}
