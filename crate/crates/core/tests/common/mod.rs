#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rust_decimal::Decimal;
use serde::Deserialize;
use vprefine::analysis::{abstract_code, DiagnosticCode};
use vprefine::dsl::{
    parse, parse_abstract, BinOp, Expr, ExprKind, Program, Span, Stmt, StmtKind, UnaryOp,
    BACKEND_PRIMITIVES, BUILTINS,
};
use vprefine::runtime::{BBox, Relation, Scene, SceneObject};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn read_dir_vp(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "vp"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// The clean corpus programs, by file name.
pub fn corpus() -> Vec<(String, String)> {
    read_dir_vp(&crate_dir().join("corpus/programs"))
}

/// The seeded-defect programs, by file name.
pub fn defect_corpus() -> Vec<(String, String)> {
    read_dir_vp(&crate_dir().join("corpus/defects"))
}

pub fn hermetic_dir() -> PathBuf {
    crate_dir().join("suites/hermetic")
}

// ---- random programs -------------------------------------------------------

pub const VARS: &[&str] = &["a", "b", "xs", "item", "total", "_tmp"];
pub const NOUNS: &[&str] = &["cup", "dog", "car", "tree"];

fn e(kind: ExprKind) -> Expr {
    Expr::new(kind, Span::default())
}

fn s(kind: StmtKind) -> Stmt {
    Stmt {
        kind,
        span: Span::default(),
    }
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..1000, 0u32..3)
            .prop_map(|(n, scale)| e(ExprKind::Num(Decimal::new(n as i64, scale).normalize()))),
        "[a-z \"\\\\]{0,6}".prop_map(|t| e(ExprKind::Str(t))),
        any::<bool>().prop_map(|b| e(ExprKind::Bool(b))),
        prop::sample::select(VARS).prop_map(|v| e(ExprKind::Var(v.to_string()))),
        Just(e(ExprKind::Var("image".into()))),
    ]
}

const OPS: &[BinOp] = &[
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::And,
    BinOp::Or,
];

const CALLEES: &[&str] = &[
    "find", "exists", "count", "get", "hcenter", "width", "query", "helper",
];

/// Arbitrary expressions; any shape the grammar can express.
pub fn arb_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (
                prop::sample::select(CALLEES),
                prop::collection::vec(inner.clone(), 0..3)
            )
                .prop_map(|(c, args)| e(ExprKind::Call {
                    callee: c.to_string(),
                    args
                })),
            (inner.clone(), inner.clone()).prop_map(|(t, i)| e(ExprKind::Index {
                target: Box::new(t),
                index: Box::new(i)
            })),
            (any::<bool>(), inner.clone()).prop_map(|(not, x)| e(ExprKind::Unary {
                op: if not { UnaryOp::Not } else { UnaryOp::Neg },
                operand: Box::new(x)
            })),
            (prop::sample::select(OPS), inner.clone(), inner).prop_map(|(op, l, r)| e(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(l),
                    rhs: Box::new(r)
                }
            )),
        ]
    })
}

fn arb_stmt() -> impl Strategy<Value = Stmt> {
    let simple = prop_oneof![
        3 => (prop::sample::select(VARS), arb_expr()).prop_map(|(t, v)| s(StmtKind::Assign {
            target: t.to_string(),
            value: v
        })),
        1 => arb_expr().prop_map(|x| s(StmtKind::Return(x))),
        1 => "[a-z][a-z ]{0,8}[a-z]".prop_map(|t| s(StmtKind::Comment(t))),
    ];
    simple.prop_recursive(3, 16, 3, |inner| {
        let block = prop::collection::vec(inner, 1..3)
            .prop_filter("needs code", |b| b.iter().any(|s| !s.is_comment()));
        prop_oneof![
            (arb_expr(), block.clone(), prop::option::of(block.clone())).prop_map(|(c, t, el)| s(
                StmtKind::If {
                    cond: c,
                    then_block: t,
                    else_block: el
                }
            )),
            (prop::sample::select(VARS), arb_expr(), block).prop_map(|(v, it, b)| s(
                StmtKind::For {
                    var: v.to_string(),
                    iter: it,
                    body: b
                }
            )),
        ]
    })
}

/// Arbitrary syntactically valid programs, with step comments at top level.
pub fn arb_program() -> impl Strategy<Value = Program> {
    prop::collection::vec(
        (any::<bool>(), arb_stmt(), "[a-z]{1,5}( [a-z]{1,5}){0,2}"),
        1..6,
    )
    .prop_map(|items| {
        let mut statements = Vec::new();
        let mut step = 0;
        for (with_step, stmt, text) in items {
            if with_step {
                step += 1;
                statements.push(s(StmtKind::StepComment { step, text }));
            }
            statements.push(stmt);
        }
        Program { statements }
    })
}

/// Small, mostly well-typed programs over the perception primitives, for
/// properties that need executable code.
pub fn arb_vision_program() -> impl Strategy<Value = String> {
    let line = prop_oneof![
        (prop::sample::select(VARS), prop::sample::select(NOUNS))
            .prop_map(|(v, n)| format!("{v} = find(image, \"{n}\")")),
        (prop::sample::select(VARS), prop::sample::select(VARS))
            .prop_map(|(v, w)| format!("{v} = count({w})")),
        (prop::sample::select(VARS), 0u32..5).prop_map(|(v, n)| format!("{v} = {n}")),
        (prop::sample::select(VARS), prop::sample::select(VARS))
            .prop_map(|(v, w)| format!("{v} = {w} + 1")),
        (prop::sample::select(VARS), prop::sample::select(NOUNS))
            .prop_map(|(v, n)| format!("if exists(image, \"{n}\"):\n    {v} = 1")),
        (prop::sample::select(VARS), prop::sample::select(VARS))
            .prop_map(|(v, w)| format!("for {v} in {w}:\n    total = hcenter({v})")),
        prop::sample::select(VARS).prop_map(|v| format!("return {v}")),
    ];
    prop::collection::vec(line, 1..8).prop_map(|ls| ls.join("\n") + "\n")
}

// ---- random scenes ---------------------------------------------------------

pub const SCENE_NAMES: &[&str] = &["cup", "cups", "dog", "car", "tree", "plate"];
pub const COLORS: &[&str] = &["red", "blue", "green"];

/// Random scene with objects inside a 200x100 canvas and random relations.
pub fn arb_scene() -> impl Strategy<Value = Scene> {
    let obj = (
        prop::sample::select(SCENE_NAMES),
        0u32..180,
        0u32..80,
        1u32..20,
        1u32..20,
        prop::option::of(prop::sample::select(COLORS)),
    );
    (
        prop::collection::vec(obj, 0..8),
        prop::collection::vec(
            (
                0usize..8,
                prop::sample::select(&["on", "near"][..]),
                0usize..8,
            ),
            0..5,
        ),
    )
        .prop_map(|(objs, rels)| {
            let objects: Vec<SceneObject> = objs
                .into_iter()
                .enumerate()
                .map(|(i, (name, x, y, w, h, color))| {
                    let mut attributes = BTreeMap::new();
                    if let Some(c) = color {
                        attributes.insert("color".to_string(), c.to_string());
                    }
                    SceneObject {
                        id: format!("o{i}"),
                        name: name.to_string(),
                        bbox: BBox::new(x, y, w, h),
                        attributes,
                    }
                })
                .collect();
            let n = objects.len();
            let relations = if n == 0 {
                Vec::new()
            } else {
                rels.into_iter()
                    .map(|(s, p, o)| Relation {
                        subject_id: format!("o{}", s % n),
                        predicate: p.to_string(),
                        object_id: format!("o{}", o % n),
                    })
                    .collect()
            };
            Scene {
                width: 200,
                height: 100,
                objects,
                relations,
            }
        })
}

// ---- shared checks ---------------------------------------------------------

#[derive(Deserialize)]
pub struct Expected {
    pub code: DiagnosticCode,
    pub line: u32,
}

#[derive(Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub expected: Vec<Expected>,
}

pub fn defect_manifest() -> Vec<ManifestEntry> {
    let path = crate_dir().join("corpus/defects/manifest.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Identifiers and literals a masked program must not reveal.
pub fn revealing_tokens(p: &Program) -> (BTreeSet<String>, usize) {
    let mut idents = BTreeSet::new();
    let mut literals = 0;
    p.visit_stmts(&mut |s| {
        match &s.kind {
            StmtKind::Assign { target, .. } => {
                idents.insert(target.clone());
            }
            StmtKind::For { var, .. } => {
                idents.insert(var.clone());
            }
            _ => {}
        }
        for e in s.exprs() {
            e.visit(&mut |x| match &x.kind {
                ExprKind::Var(v) => {
                    idents.insert(v.clone());
                }
                ExprKind::Call { callee, .. } => {
                    idents.insert(callee.clone());
                }
                ExprKind::Str(_) | ExprKind::Num(_) | ExprKind::Bool(_) => literals += 1,
                _ => {}
            });
        }
    });
    idents.retain(|i| !BACKEND_PRIMITIVES.contains(&i.as_str()) && !BUILTINS.contains(&i.as_str()));
    (idents, literals)
}

pub fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn check_masking(src: &str) -> Result<(), String> {
    let p = parse(src).map_err(|e| format!("{e:?}"))?;
    let a = abstract_code(&p);
    let (idents, _) = revealing_tokens(&p);
    let masked_words = words(&a.text);
    let keywords = [
        "if", "else", "for", "in", "return", "and", "or", "not", "pad",
    ];
    for w in &masked_words {
        let known = keywords.contains(&w.as_str())
            || BACKEND_PRIMITIVES.contains(&w.as_str())
            || BUILTINS.contains(&w.as_str());
        if !known {
            return Err(format!("masked text reveals {w:?}:\n{}", a.text));
        }
        if idents.contains(w) {
            return Err(format!("identifier {w:?} survived masking"));
        }
    }
    if a.text.contains('"') || a.text.contains('\'') || a.text.contains('#') {
        return Err(format!("literal or comment survived:\n{}", a.text));
    }
    if a.text.chars().any(|c| c.is_ascii_digit()) {
        return Err(format!("number survived:\n{}", a.text));
    }
    // Skeleton: statement kinds of the input, comments dropped.
    let mut kinds = Vec::new();
    p.visit_stmts(&mut |s| {
        if !s.is_comment() {
            kinds.push(std::mem::discriminant(&s.kind));
        }
    });
    let reparsed = parse_abstract(&a.text).map_err(|e| format!("masked text: {e:?}"))?;
    let mut masked_kinds = Vec::new();
    reparsed.visit_stmts(&mut |s| masked_kinds.push(std::mem::discriminant(&s.kind)));
    if kinds != masked_kinds {
        return Err("statement skeleton changed".into());
    }
    if a.skeleton != p.skeleton() || reparsed.skeleton() != a.skeleton {
        return Err("reported skeleton differs".into());
    }
    // Masking the masked program changes nothing.
    let again = abstract_code(&reparsed);
    if again.text != a.text {
        return Err(format!("not idempotent:\n{}\n---\n{}", a.text, again.text));
    }
    Ok(())
}

pub type CodeLines = BTreeSet<(DiagnosticCode, u32)>;

/// Diagnostics found vs expected for every seeded-defect program.
pub fn defect_results() -> Vec<(String, CodeLines, CodeLines)> {
    defect_manifest()
        .into_iter()
        .map(|entry| {
            let src = std::fs::read_to_string(crate_dir().join("corpus/defects").join(&entry.file))
                .unwrap();
            let got = vprefine::analysis::analyze(&parse(&src).unwrap())
                .into_iter()
                .map(|d| (d.code, d.line))
                .collect();
            let want = entry.expected.iter().map(|e| (e.code, e.line)).collect();
            (entry.file, got, want)
        })
        .collect()
}
