mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rust_decimal::Decimal;
use vprefine::analysis::{analyze, error_count, lint_score, Diagnostic, DiagnosticCode, Severity};
use vprefine::dsl::{parse, print_program};
use vprefine::runtime::{execute, Limits, SyntheticBackend};

#[test]
fn seeded_defects_are_found_at_the_right_line() {
    let results = common::defect_results();
    assert_eq!(results.len(), 12);
    let mut codes = BTreeSet::new();
    for (file, got, want) in results {
        assert_eq!(got, want, "{file}");
        codes.extend(want.iter().map(|(c, _)| *c));
    }
    // One program per code, at least.
    assert_eq!(codes.len(), DiagnosticCode::ALL.len());
}

#[test]
fn clean_corpus_has_no_errors() {
    for (name, src) in common::corpus() {
        let d = analyze(&parse(&src).unwrap());
        assert_eq!(error_count(&d), 0, "{name}: {d:?}");
    }
}

#[test]
fn corpus_masking_properties() {
    for (name, src) in common::corpus() {
        common::check_masking(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

/// Score computed from the counts with exact decimals.
fn oracle_score(diags: &[Diagnostic]) -> Decimal {
    let mut s = Decimal::from(10);
    for d in diags {
        s -= match d.severity {
            Severity::Error => Decimal::new(20, 1),
            Severity::Warning => Decimal::new(5, 1),
            Severity::Info => Decimal::new(1, 1),
        };
    }
    s.max(Decimal::ZERO)
}

#[test]
fn lint_score_matches_exact_arithmetic() {
    let p = parse("return 1\n").unwrap();
    for e in 0..7 {
        for w in 0..5 {
            for i in 0..5 {
                let mut diags = Vec::new();
                diags.extend((0..e).map(|_| Diagnostic::new(DiagnosticCode::UndefinedVar, 1, "")));
                diags.extend((0..w).map(|_| Diagnostic::new(DiagnosticCode::ShadowedVar, 1, "")));
                diags.extend((0..i).map(|_| Diagnostic::new(DiagnosticCode::UnusedVar, 1, "")));
                let want: f64 = oracle_score(&diags).to_string().parse().unwrap();
                assert_eq!(lint_score(&p, &diags), want, "{e} {w} {i}");
            }
        }
    }
}

#[test]
fn fixing_a_defect_never_lowers_the_score() {
    let pairs = [
        (
            "xs = find(image, \"cup\")\nreturn count(ys)\n",
            "xs = find(image, \"cup\")\nreturn count(xs)\n",
        ),
        (
            "n = 1\nif n > 0:\n    return n\n",
            "n = 1\nif n > 0:\n    return n\nreturn 0\n",
        ),
        ("count = 1\nreturn count\n", "total = 1\nreturn total\n"),
        ("a = 1\nb = 2\nreturn a\n", "a = 1\nreturn a\n"),
    ];
    for (bad, good) in pairs {
        let (b, g) = (parse(bad).unwrap(), parse(good).unwrap());
        assert!(
            lint_score(&g, &analyze(&g)) > lint_score(&b, &analyze(&b)),
            "{bad}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn masking_properties_hold(p in common::arb_program()) {
        let src = print_program(&p);
        let r = common::check_masking(&src);
        prop_assert!(r.is_ok(), "{}\n{:?}", src, r);
    }

    #[test]
    fn no_undefined_name_without_errors(src in common::arb_vision_program(), scene in common::arb_scene()) {
        let p = parse(&src).unwrap();
        let diags = analyze(&p);
        if error_count(&diags) == 0 {
            let r = execute(&p, &scene, &SyntheticBackend, Limits::default());
            if let Some(e) = &r.runtime_error {
                prop_assert!(!e.message.contains("undefined name"), "{src}\n{e:?}");
            }
        }
    }

    #[test]
    fn no_undefined_name_without_errors_any_shape(p in common::arb_program(), scene in common::arb_scene()) {
        let diags = analyze(&p);
        if error_count(&diags) == 0 {
            let r = execute(&p, &scene, &SyntheticBackend, Limits::default());
            if let Some(e) = &r.runtime_error {
                prop_assert!(!e.message.contains("undefined name"), "{}\n{e:?}", print_program(&p));
            }
        }
    }

    #[test]
    fn dropping_a_diagnostic_never_lowers_the_score(
        codes in prop::collection::vec(prop::sample::select(&DiagnosticCode::ALL[..]), 0..12),
        drop in any::<prop::sample::Index>(),
    ) {
        let p = parse("return 1\n").unwrap();
        let diags: Vec<Diagnostic> = codes.iter().map(|c| Diagnostic::new(*c, 1, "")).collect();
        let before = lint_score(&p, &diags);
        if !diags.is_empty() {
            let mut fewer = diags.clone();
            fewer.remove(drop.index(diags.len()));
            prop_assert!(lint_score(&p, &fewer) >= before);
        }
        prop_assert!((0.0..=10.0).contains(&before));
    }
}
