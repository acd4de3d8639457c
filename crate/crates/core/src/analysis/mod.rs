//! Static analysis and abstract-code masking.
//!
//! [`analyze`] runs a definite-assignment and type pass over a program and
//! reports [`Diagnostic`]s; [`lint_score`] folds them into a 0–10 quality
//! score. [`abstract_code`] masks a program down to its logical shape so it
//! can serve as an example for a different query.

mod check;
mod mask;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsl::Program;

pub use mask::{abstract_code, abstract_code_with, AbstractCode, MaskOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

/// Diagnostic kinds. Declaration order is the tie-break order within a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    UndefinedVar,
    ShadowedVar,
    NameConflictWithPrimitive,
    UnusedVar,
    ArityMismatch,
    TypeMismatch,
    UnreachableCode,
    MissingReturn,
    LoopVarLeak,
}

impl DiagnosticCode {
    pub const ALL: [DiagnosticCode; 9] = [
        DiagnosticCode::UndefinedVar,
        DiagnosticCode::ShadowedVar,
        DiagnosticCode::NameConflictWithPrimitive,
        DiagnosticCode::UnusedVar,
        DiagnosticCode::ArityMismatch,
        DiagnosticCode::TypeMismatch,
        DiagnosticCode::UnreachableCode,
        DiagnosticCode::MissingReturn,
        DiagnosticCode::LoopVarLeak,
    ];

    pub fn severity(self) -> Severity {
        use DiagnosticCode::*;
        match self {
            UndefinedVar | ArityMismatch | TypeMismatch | MissingReturn => Severity::Error,
            ShadowedVar | NameConflictWithPrimitive | UnreachableCode => Severity::Warning,
            UnusedVar | LoopVarLeak => Severity::Info,
        }
    }

    pub fn as_str(self) -> &'static str {
        use DiagnosticCode::*;
        match self {
            UndefinedVar => "UNDEFINED_VAR",
            ShadowedVar => "SHADOWED_VAR",
            NameConflictWithPrimitive => "NAME_CONFLICT_WITH_PRIMITIVE",
            UnusedVar => "UNUSED_VAR",
            ArityMismatch => "ARITY_MISMATCH",
            TypeMismatch => "TYPE_MISMATCH",
            UnreachableCode => "UNREACHABLE_CODE",
            MissingReturn => "MISSING_RETURN",
            LoopVarLeak => "LOOP_VAR_LEAK",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub severity: Severity,
    pub line: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, line: u32, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            severity: code.severity(),
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: {} [{}] {}",
            self.line, self.severity, self.code, self.message
        )
    }
}

/// All diagnostics for a program, ordered by line then code.
pub fn analyze(program: &Program) -> Vec<Diagnostic> {
    check::Checker::run(program)
}

/// Number of error-severity diagnostics.
pub fn error_count(diags: &[Diagnostic]) -> usize {
    diags
        .iter()
        .filter(|d| d.severity == Severity::Error)
        .count()
}

pub fn warning_count(diags: &[Diagnostic]) -> usize {
    diags
        .iter()
        .filter(|d| d.severity == Severity::Warning)
        .count()
}

/// `max(0, 10 - 2.0*errors - 0.5*warnings - 0.1*info)`, computed in integer
/// tenths so equal inputs always give bit-identical results.
pub fn lint_score(_program: &Program, diags: &[Diagnostic]) -> f64 {
    let penalty: u64 = diags
        .iter()
        .map(|d| match d.severity {
            Severity::Error => 20,
            Severity::Warning => 5,
            Severity::Info => 1,
        })
        .sum();
    100u64.saturating_sub(penalty) as f64 / 10.0
}
