mod common;

use proptest::prelude::*;
use vprefine::dsl::{parse, print_expr, print_program, Expr, Program, Stmt};

fn check_round_trip(src: &str) -> Result<(), String> {
    let ast = parse(src).map_err(|e| format!("parse: {e:?}"))?;
    let printed = print_program(&ast);
    let again = parse(&printed).map_err(|e| format!("reparse: {e:?}\n{printed}"))?;
    if !ast.structurally_eq(&again) {
        return Err(format!("AST changed after printing:\n{printed}"));
    }
    let twice = print_program(&again);
    if twice != printed {
        return Err(format!(
            "printing is not idempotent:\n{printed}\n---\n{twice}"
        ));
    }
    Ok(())
}

fn exprs(p: &Program) -> Vec<Expr> {
    let mut out = Vec::new();
    p.visit_stmts(&mut |s: &Stmt| {
        for e in s.exprs() {
            e.visit(&mut |x| out.push(x.clone()));
        }
    });
    out
}

/// Every expression's span, cut out of its source line, parses back to the
/// same expression.
fn check_spans(src: &str) -> Result<(), String> {
    let ast = parse(src).map_err(|e| format!("{e:?}"))?;
    let lines: Vec<&str> = src.lines().collect();
    for x in exprs(&ast) {
        let line = lines[x.span.line as usize - 1];
        let piece = line
            .get(x.span.col_start as usize..x.span.col_end as usize)
            .ok_or_else(|| format!("span {:?} outside {line:?}", x.span))?
            .trim();
        let wrapped = parse(&format!("v = {piece}\n"))
            .map_err(|e| format!("span text {piece:?} of {line:?} does not parse: {e:?}"))?;
        let got = match &wrapped.statements[0].kind {
            vprefine::dsl::StmtKind::Assign { value, .. } => print_expr(value),
            _ => unreachable!(),
        };
        if got != print_expr(&x) {
            return Err(format!(
                "span text {piece:?} is {got}, node is {}",
                print_expr(&x)
            ));
        }
    }
    Ok(())
}

#[test]
fn corpus_round_trips() {
    let corpus = common::corpus();
    assert!(corpus.len() >= 30);
    for (name, src) in corpus.iter().chain(common::defect_corpus().iter()) {
        check_round_trip(src).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn corpus_spans_are_sound() {
    for (name, src) in common::corpus() {
        check_spans(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn noncanonical_spacing_normalizes() {
    let src = "x=find( image,'cup' )\nif count(x)>1 :\n    return (x)\nreturn  -1\n";
    check_round_trip(src).unwrap();
    assert_eq!(
        print_program(&parse(src).unwrap()),
        "x = find(image, \"cup\")\nif count(x) > 1:\n    return x\nreturn -1\n"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn generated_programs_round_trip(p in common::arb_program()) {
        let printed = print_program(&p);
        let parsed = parse(&printed);
        prop_assert!(parsed.is_ok(), "{printed}\n{parsed:?}");
        let parsed = parsed.unwrap();
        prop_assert!(parsed.structurally_eq(&p), "{printed}");
        prop_assert_eq!(print_program(&parsed), printed);
    }

    #[test]
    fn generated_spans_are_sound(p in common::arb_program()) {
        let printed = print_program(&p);
        prop_assert!(check_spans(&printed).is_ok(), "{:?}", check_spans(&printed));
    }
}
