//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vprefine::analysis::{analyze, error_count, lint_score};
use vprefine::codebase::{
    bootstrap, retrieve, BootstrapOptions, BootstrapTask, Codebase, CodebaseEntry, CodebaseStore,
    EntryStatus, EMBED_DIMS,
};
use vprefine::dsl::{parse, print_program, Origin, SourceProgram};
use vprefine::feedback::Source;
use vprefine::orchestrator::{
    load_tasks, write_accuracy_csv, Engine, EngineConfig, EvalReport, EvalTask, TaskReport,
};
use vprefine::prompting::{MockClient, MockScript, Templates};
use vprefine::runtime::{
    execute, BBox, EventKind, Limits, Patch, Relation, Scene, SceneObject, SyntheticBackend, Value,
};
use vprefine::suite::prompt_key;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- 1 ---------------------------------------------------------------------

fn parser_round_trip() -> Outcome {
    let corpus = common::corpus();
    ensure(corpus.len() >= 30, || {
        format!("corpus has {} programs", corpus.len())
    })?;
    let start = Instant::now();
    for (name, src) in &corpus {
        let a = parse(src).map_err(|e| format!("{name}: {e:?}"))?;
        let b = parse(&print_program(&a)).map_err(|e| format!("{name} reprint: {e:?}"))?;
        ensure(a.structurally_eq(&b), || format!("{name}: AST changed"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!(
        "{}/{} programs in {:.1} ms",
        corpus.len(),
        corpus.len(),
        t.as_secs_f64() * 1e3
    ))
}

// ---- 2 ---------------------------------------------------------------------

fn masking_properties() -> Outcome {
    let corpus = common::corpus();
    for (name, src) in &corpus {
        common::check_masking(src).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{}/{} programs", corpus.len(), corpus.len()))
}

// ---- 3 ---------------------------------------------------------------------

fn static_analysis_recall() -> Outcome {
    let results = common::defect_results();
    ensure(results.len() == 12, || {
        format!("{} defect programs", results.len())
    })?;
    let missed: Vec<String> = results
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(f, got, want)| format!("{f}: got {got:?} want {want:?}"))
        .collect();
    ensure(missed.is_empty(), || missed.join("; "))?;
    Ok("12/12 programs with exact code and line".into())
}

// ---- 4 ---------------------------------------------------------------------

const NAMES: &[&str] = &["cup", "cups", "dog", "car", "plate", "tree"];
const COLORS: &[&str] = &["red", "blue", "green"];
const PREDICATES: &[&str] = &["on", "near", "left of"];

fn random_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(0..10);
    let objects: Vec<SceneObject> = (0..n)
        .map(|i| {
            let mut attributes = std::collections::BTreeMap::new();
            if rng.random_bool(0.7) {
                attributes.insert("color".into(), COLORS.choose(&mut rng).unwrap().to_string());
            }
            SceneObject {
                id: format!("o{i}"),
                name: NAMES.choose(&mut rng).unwrap().to_string(),
                bbox: BBox::new(
                    rng.random_range(0..280),
                    rng.random_range(0..180),
                    rng.random_range(1..20),
                    rng.random_range(1..20),
                ),
                attributes,
            }
        })
        .collect();
    let relations = if n == 0 {
        vec![]
    } else {
        (0..rng.random_range(0..8))
            .map(|_| Relation {
                subject_id: format!("o{}", rng.random_range(0..n)),
                predicate: PREDICATES.choose(&mut rng).unwrap().to_string(),
                object_id: format!("o{}", rng.random_range(0..n)),
            })
            .collect()
    };
    Scene {
        width: 300,
        height: 200,
        objects,
        relations,
    }
}

const PROBES: &[&str] = &[
    "cups = find(image, \"cup\")\ndogs = find(image, \"dogs\")\nn = 0\nfor c in cups:\n    if exists(c, \"cup\"):\n        n = n + 1\n    if verify_property(c, \"cup\", \"red\"):\n        n = n + 1\n    for d in dogs:\n        if related(c, \"on\", d):\n            n = n + 1\n        if related(d, \"near\", c):\n            n = n + 1\nreturn n\n",
    "things = find(image, \"plate\")\ntrees = find(image, \"TREE\")\nk = 0\nif exists(image, \"car\"):\n    k = 1\nif verify_property(image, \"car\", \"blue\"):\n    k = k + 1\nfor p in things:\n    for t in trees:\n        if related(p, \"left of\", t):\n            k = k + 1\n    for q in things:\n        if related(p, \"on\", q):\n            k = k + 1\nreturn k\n",
    "xs = find(image, \"cups\")\nfor x in xs:\n    ys = find(x, \"cup\")\n    if verify_property(x, \"cups\", \"green\"):\n        return count(ys)\nreturn exists(image, \"dog\")\n",
];

fn contained(outer: &BBox, inner: &BBox) -> bool {
    inner.x >= outer.x
        && inner.y >= outer.y
        && inner.x as u64 + inner.w as u64 <= outer.x as u64 + outer.w as u64
        && inner.y as u64 + inner.h as u64 <= outer.y as u64 + outer.h as u64
}

fn same_name(q: &str, n: &str) -> bool {
    let (q, n) = (q.trim().to_lowercase(), n.trim().to_lowercase());
    let stem = |s: &str| {
        s.strip_suffix('s')
            .filter(|t| !t.is_empty())
            .unwrap_or(s)
            .to_string()
    };
    q == n || stem(&q) == stem(&n)
}

fn brute_find(scene: &Scene, within: &Patch, name: &str) -> Vec<String> {
    let mut hits: Vec<&SceneObject> = scene
        .objects
        .iter()
        .filter(|o| same_name(name, &o.name) && contained(&within.bbox, &o.bbox))
        .collect();
    hits.sort_by(|a, b| (a.bbox.x, &a.id).cmp(&(b.bbox.x, &b.id)));
    hits.into_iter().map(|o| o.id.clone()).collect()
}

fn text(v: &Value) -> &str {
    match v {
        Value::Text(s) => s,
        other => panic!("expected text, got {other:?}"),
    }
}

fn patch(v: &Value) -> &Patch {
    v.as_patch().expect("patch argument")
}

/// Expected value of one recorded primitive call, from the scene graph.
fn brute_force(scene: &Scene, primitive: &str, args: &[Value]) -> Value {
    match primitive {
        "find" => {
            let ids = brute_find(scene, patch(&args[0]), text(&args[1]));
            Value::List(
                ids.iter()
                    .map(|id| {
                        let o = scene.objects.iter().find(|o| &o.id == id).unwrap();
                        Value::Patch(Patch {
                            bbox: o.bbox,
                            object_ids: vec![o.id.clone()],
                            label: Some(o.name.clone()),
                        })
                    })
                    .collect(),
            )
        }
        "exists" => Value::Bool(!brute_find(scene, patch(&args[0]), text(&args[1])).is_empty()),
        "verify_property" => {
            let ids = brute_find(scene, patch(&args[0]), text(&args[1]));
            let want = text(&args[2]).to_lowercase();
            Value::Bool(scene.objects.iter().any(|o| {
                ids.contains(&o.id) && o.attributes.values().any(|v| v.to_lowercase() == want)
            }))
        }
        "related" => {
            let (s, pred, o) = (patch(&args[0]), text(&args[1]), patch(&args[2]));
            Value::Bool(scene.relations.iter().any(|r| {
                r.predicate == pred.to_lowercase()
                    && s.object_ids.contains(&r.subject_id)
                    && o.object_ids.contains(&r.object_id)
            }))
        }
        other => panic!("unexpected primitive {other}"),
    }
}

fn oracle_equivalence() -> Outcome {
    let probes: Vec<_> = PROBES.iter().map(|p| parse(p).unwrap()).collect();
    let mut calls = 0;
    let mut kinds = BTreeSet::new();
    for seed in 0..100 {
        let scene = random_scene(seed);
        for (pi, p) in probes.iter().enumerate() {
            let r = execute(p, &scene, &SyntheticBackend, Limits::default());
            ensure(r.is_ok(), || {
                format!("probe {pi} failed on scene {seed}: {:?}", r.runtime_error)
            })?;
            for e in r
                .trace
                .iter()
                .filter(|e| e.kind == EventKind::PrimitiveCall)
            {
                let prim = e.primitive.as_deref().unwrap();
                if !["find", "exists", "verify_property", "related"].contains(&prim) {
                    continue;
                }
                calls += 1;
                kinds.insert(prim.to_string());
                let want = brute_force(&scene, prim, &e.args_snapshot);
                ensure(want == e.value_snapshot, || {
                    format!(
                        "scene {seed} probe {pi} line {}: {prim} gave {} want {want}",
                        e.line, e.value_snapshot
                    )
                })?;
            }
        }
    }
    ensure(kinds.len() == 4, || format!("only exercised {kinds:?}"))?;
    Ok(format!("100 scenes, {calls} calls, 0 mismatches"))
}

// ---- 5 ---------------------------------------------------------------------

const WORDS: &[&str] = &[
    "how", "many", "red", "cups", "is", "there", "a", "dog", "left", "of", "the", "car", "what",
    "color", "plate", "on", "table", "tree", "blue", "green",
];

fn oracle_vector(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIMS];
    for tok in text
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let h = tok.bytes().fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        });
        v[(h % EMBED_DIMS as u64) as usize] += if h & 0x100 == 0 { 1.0 } else { -1.0 };
    }
    v
}

fn oracle_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n(a) == 0.0 || n(b) == 0.0 {
        0.0
    } else {
        dot / (n(a) * n(b))
    }
}

fn random_query(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..7);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn retrieval_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checks = 0;
    for round in 0..50 {
        let size = rng.random_range(0..=200);
        let mut cb = Codebase::new();
        for _ in 0..size {
            let q = random_query(&mut rng);
            let e = CodebaseEntry::new(
                &q,
                vec![],
                SourceProgram::new("return 1\n", Origin::Generated),
                EntryStatus::Draft,
            )
            .unwrap();
            cb.upsert(e).unwrap();
        }
        for _ in 0..5 {
            let query = random_query(&mut rng);
            let k = rng.random_range(0..10);
            let qv = oracle_vector(&query);
            let mut scored: Vec<(f64, String)> = cb
                .entries()
                .iter()
                .map(|e| (oracle_cos(&qv, &oracle_vector(&e.query)), e.id.clone()))
                .collect();
            // Scores equal to 1e-12 are ties, broken by ascending id.
            scored.sort_by(|a, b| {
                if (a.0 - b.0).abs() < 1e-12 {
                    a.1.cmp(&b.1)
                } else {
                    b.0.total_cmp(&a.0)
                }
            });
            let want: Vec<String> = scored.into_iter().take(k).map(|(_, id)| id).collect();
            let got: Vec<String> = retrieve(&cb, &query, k)
                .into_iter()
                .map(|e| e.id.clone())
                .collect();
            ensure(got == want, || {
                let show = |ids: &[String]| -> Vec<String> {
                    ids.iter()
                        .map(|id| {
                            let e = cb.get(id).unwrap();
                            format!(
                                "{id} {:?} {:e}",
                                e.query,
                                oracle_cos(&qv, &oracle_vector(&e.query))
                            )
                        })
                        .collect()
                };
                format!(
                    "codebase {round}, query {query:?}, k={k}: got {:?} want {:?}",
                    show(&got),
                    show(&want)
                )
            })?;
            checks += 1;
        }
    }
    Ok(format!("50 codebases, {checks} queries, 0 mismatches"))
}

// ---- 6 ---------------------------------------------------------------------

fn bootstrap_arithmetic() -> Outcome {
    let good = "# step 1: find\ncups = find(image, \"cup\")\n# step 2: count\nreturn count(cups)\n";
    let undefined =
        "# step 1: find\ncups = find(image, \"cup\")\n# step 2: count\nreturn count(mugs)\n";
    let crashing =
        "# step 1: find\ncups = find(image, \"cup\")\n# step 2: count\nreturn get(cups, 5)\n";
    let scene = Scene {
        width: 50,
        height: 50,
        objects: vec![SceneObject {
            id: "c".into(),
            name: "cup".into(),
            bbox: BBox::new(0, 0, 4, 4),
            attributes: Default::default(),
        }],
        relations: vec![],
    };
    let mut attempts_seen = Vec::new();
    for seed in 0..10 {
        let mut script = MockScript::default();
        let mut tasks = Vec::new();
        for i in 0..20 {
            let q = format!("query {i}: how many cups");
            let program = [good, undefined, crashing][i % 3];
            script = script
                .rule(prompt_key("DECOMPOSE", &q), &["1. find\n2. count"])
                .rule(prompt_key("GENERATE", &q), &[program]);
            tasks.push(BootstrapTask {
                query: q,
                scene: scene.clone(),
            });
        }
        let client = MockClient::new(script);
        let mut cb = Codebase::new();
        let opts = BootstrapOptions {
            fraction: 0.2,
            seed,
            ..Default::default()
        };
        let report = bootstrap(
            &mut cb,
            &tasks,
            opts,
            &client,
            &Templates::builtin(),
            &SyntheticBackend,
        )
        .map_err(|e| e.to_string())?;
        ensure(report.selected.len() == 4, || {
            format!("seed {seed}: {} attempts", report.selected.len())
        })?;
        ensure(
            vprefine::prompting::ModelClient::calls(&client) == 8,
            || "extra model calls".into(),
        )?;
        for e in cb.entries() {
            let ast = e.code.parse().unwrap();
            ensure(error_count(&analyze(&ast)) == 0, || {
                format!("{} has errors", e.query)
            })?;
            ensure(
                execute(&ast, &scene, &SyntheticBackend, Limits::default()).is_ok(),
                || format!("{} crashes", e.query),
            )?;
            ensure(e.code.text == good, || {
                format!("{} is not the clean program", e.query)
            })?;
        }
        attempts_seen.push(report.inserted.len());
    }
    Ok(format!(
        "4 attempts for every seed; inserted per seed {attempts_seen:?}, none faulty"
    ))
}

// ---- 7-10: the hermetic suite -----------------------------------------------

struct SuiteRun {
    report: EvalReport,
    tasks: Vec<TaskReport>,
    json: String,
    csv: String,
    elapsed: Duration,
}

fn suite_tasks() -> Vec<EvalTask> {
    load_tasks(common::hermetic_dir().join("tasks.jsonl")).unwrap()
}

fn run_suite(config: EngineConfig) -> SuiteRun {
    let client = MockClient::from_file(common::hermetic_dir().join("mock_script.json")).unwrap();
    let templates = Templates::builtin();
    let store = CodebaseStore::in_memory(Codebase::new());
    let tasks = suite_tasks();
    let start = Instant::now();
    let (report, reports) =
        Engine::new(config, &client, &templates, &SyntheticBackend).evaluate(&tasks, &store, 1);
    let elapsed = start.elapsed();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("accuracy_vs_iteration.csv");
    write_accuracy_csv(&csv_path, &report).unwrap();
    SuiteRun {
        json: serde_json::to_string_pretty(&report).unwrap(),
        csv: std::fs::read_to_string(csv_path).unwrap(),
        report,
        tasks: reports,
        elapsed,
    }
}

fn refinement_convergence() -> Outcome {
    let run = run_suite(EngineConfig::default());
    let r = &run.report;
    let acc = &r.accuracy_by_iteration;
    ensure(r.tasks == 50, || format!("{} tasks", r.tasks))?;
    ensure(r.accuracy > acc[0], || {
        format!("final {} vs iteration 1 {}", r.accuracy, acc[0])
    })?;
    ensure(acc.windows(2).all(|w| w[0] <= w[1]), || {
        format!("not monotone: {acc:?}")
    })?;
    let max_iters = run
        .tasks
        .iter()
        .map(|t| t.iterations.len())
        .max()
        .unwrap_or(0);
    ensure(max_iters <= 3, || {
        format!("a task used {max_iters} iterations")
    })?;
    ensure(run.elapsed < Duration::from_secs(30), || {
        format!("took {:?}", run.elapsed)
    })?;
    Ok(format!(
        "accuracy by iteration {acc:?}, final {}, max {max_iters} iterations, {:.2} s",
        r.accuracy,
        run.elapsed.as_secs_f64()
    ))
}

fn lint_direction() -> Outcome {
    let run = run_suite(EngineConfig::default());
    let r = &run.report;
    // Cross-check the reported means against the records.
    let draft: f64 = run
        .tasks
        .iter()
        .map(|t| t.iterations[0].lint_score)
        .sum::<f64>()
        / run.tasks.len() as f64;
    let last: f64 = run
        .tasks
        .iter()
        .map(|t| {
            let rec = t.iterations.last().unwrap();
            let ast = rec.program.parse().unwrap();
            lint_score(&ast, &analyze(&ast))
        })
        .sum::<f64>()
        / run.tasks.len() as f64;
    ensure((draft - r.mean_lint_score_draft).abs() < 1e-9, || {
        "draft mean mismatch".into()
    })?;
    ensure((last - r.mean_lint_score_final).abs() < 1e-9, || {
        "final mean mismatch".into()
    })?;
    ensure(r.mean_lint_score_final > r.mean_lint_score_draft, || {
        format!(
            "final {} vs draft {}",
            r.mean_lint_score_final, r.mean_lint_score_draft
        )
    })?;
    Ok(format!(
        "mean lint {:.3} -> {:.3}",
        r.mean_lint_score_draft, r.mean_lint_score_final
    ))
}

fn feedback_ablation() -> Outcome {
    let full = run_suite(EngineConfig::default());
    let mut config = EngineConfig::default();
    config.channels.visual = false;
    let ablated = run_suite(config);
    ensure(ablated.report.accuracy <= full.report.accuracy, || {
        format!(
            "accuracy rose from {} to {}",
            full.report.accuracy, ablated.report.accuracy
        )
    })?;
    let mut compared = 0;
    for (a, b) in full.tasks.iter().zip(&ablated.tasks) {
        for (ra, rb) in a.iterations.iter().zip(&b.iterations) {
            ensure(rb.feedback.from_source(Source::Visual).count() == 0, || {
                format!("{}: visual items with the channel off", b.task_id)
            })?;
            if ra.program != rb.program {
                break;
            }
            let expected: Vec<_> = ra
                .feedback
                .items
                .iter()
                .filter(|i| i.source != Source::Visual)
                .collect();
            let got: Vec<_> = rb.feedback.items.iter().collect();
            ensure(expected == got, || {
                format!(
                    "{} iteration {}: bundles differ beyond visual items",
                    a.task_id, ra.index
                )
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "accuracy {} -> {} without visual; {compared} bundles differ only by visual items",
        full.report.accuracy, ablated.report.accuracy
    ))
}

fn determinism() -> Outcome {
    let a = run_suite(EngineConfig::default());
    let b = run_suite(EngineConfig::default());
    ensure(a.json == b.json, || "EvalReport JSON differs".into())?;
    ensure(a.csv == b.csv, || "CSV differs".into())?;
    Ok(format!(
        "{} JSON bytes and {} CSV bytes identical",
        a.json.len(),
        a.csv.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("parser round-trip", parser_round_trip),
        ("masking properties", masking_properties),
        ("static-analysis recall", static_analysis_recall),
        ("oracle equivalence", oracle_equivalence),
        ("retrieval correctness", retrieval_correctness),
        ("bootstrap arithmetic and filtering", bootstrap_arithmetic),
        ("refinement convergence", refinement_convergence),
        ("lint direction", lint_direction),
        ("feedback ablation", feedback_ablation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({why})", i + 1);
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
