//! The visual-programming DSL: an indentation-based, Python-flavoured
//! language with assignments, `if`/`else`, `for`, `return`, calls into a
//! fixed set of perception primitives, and `# step N: ...` comments that tie
//! code back to the logical steps it implements.
//!
//! The grammar is published in `docs/grammar.md`.

mod ast;
mod lexer;
mod parser;
mod printer;

use serde::{Deserialize, Serialize};

pub use ast::*;
pub use parser::{parse, parse_abstract, ParseError};
pub use printer::{print_expr, print_program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Generated,
    Refined,
    Retrieved,
    User,
}

/// Program text plus where it came from. Text is always newline-terminated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProgram {
    pub text: String,
    pub origin: Origin,
}

impl SourceProgram {
    pub fn new(text: impl Into<String>, origin: Origin) -> Self {
        let mut text = text.into().replace("\r\n", "\n");
        if !text.ends_with('\n') {
            text.push('\n');
        }
        SourceProgram { text, origin }
    }

    pub fn parse(&self) -> Result<Program, Vec<ParseError>> {
        parse(&self.text)
    }

    /// Canonical rendering of an AST.
    pub fn from_ast(ast: &Program, origin: Origin) -> Self {
        SourceProgram {
            text: print_program(ast),
            origin,
        }
    }
}

/// `print_program` wrapped as a [`SourceProgram`].
pub fn print_canonical(ast: &Program) -> SourceProgram {
    SourceProgram::from_ast(ast, Origin::User)
}

/// Names callable from programs. Five are backed by the perception backend;
/// the rest are evaluated by the interpreter itself.
pub const BACKEND_PRIMITIVES: [&str; 5] = ["find", "exists", "query", "verify_property", "related"];
pub const BUILTINS: [&str; 6] = ["count", "get", "hcenter", "vcenter", "width", "height"];

pub fn is_primitive(name: &str) -> bool {
    BACKEND_PRIMITIVES.contains(&name) || BUILTINS.contains(&name)
}

/// The variable bound to the whole scene before execution starts.
pub const IMAGE_VAR: &str = "image";
