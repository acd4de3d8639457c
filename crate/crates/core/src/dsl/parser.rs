use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::lexer::{lex_line, Tok, Token};

const INDENT: usize = 4;
const KEYWORDS: [&str; 10] = [
    "if", "else", "for", "in", "return", "and", "or", "not", "True", "False",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub line: u32,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
}

impl ParseError {
    fn new(line: u32, message: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
            expected: None,
        }
    }

    fn expected(line: u32, message: impl Into<String>, expected: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
            expected: Some(expected.into()),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Parse a program in the concrete DSL.
pub fn parse(src: &str) -> Result<Program, Vec<ParseError>> {
    Parser::run(src, false)
}

/// Parse abstract code, where `<pad>` may stand in for any identifier,
/// literal, operand or callee.
pub fn parse_abstract(src: &str) -> Result<Program, Vec<ParseError>> {
    Parser::run(src, true)
}

enum LineBody {
    Comment { text: String, col: u32, end: u32 },
    Code(Vec<Token>),
}

struct Line {
    number: u32,
    depth: usize,
    body: LineBody,
}

struct Parser {
    lines: Vec<Line>,
    pos: usize,
    errors: Vec<ParseError>,
    last_line: u32,
    abstract_mode: bool,
}

impl Parser {
    fn run(src: &str, abstract_mode: bool) -> Result<Program, Vec<ParseError>> {
        let mut errors = Vec::new();
        let mut lines = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in src.lines().enumerate() {
            let number = idx as u32 + 1;
            last_line = number;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() {
                continue;
            }
            let indent = raw.len() - raw.trim_start_matches(' ').len();
            if raw[indent..].starts_with('\t') {
                errors.push(ParseError::new(number, "tab character in indentation"));
                continue;
            }
            if indent % INDENT != 0 {
                errors.push(ParseError::expected(
                    number,
                    format!("bad indentation: {indent} spaces is not a multiple of {INDENT}"),
                    "indentation in steps of 4 spaces",
                ));
                continue;
            }
            let depth = indent / INDENT;
            let content = raw[indent..].trim_end();
            if let Some(text) = content.strip_prefix('#') {
                lines.push(Line {
                    number,
                    depth,
                    body: LineBody::Comment {
                        text: text.trim().to_string(),
                        col: indent as u32,
                        end: (indent + content.len()) as u32,
                    },
                });
                continue;
            }
            match lex_line(raw, indent, abstract_mode) {
                Ok(tokens) => lines.push(Line {
                    number,
                    depth,
                    body: LineBody::Code(tokens),
                }),
                Err(e) => errors.push(ParseError::new(number, e.message)),
            }
        }
        let mut parser = Parser {
            lines,
            pos: 0,
            errors,
            last_line,
            abstract_mode,
        };
        let statements = parser.block(0);
        while parser.pos < parser.lines.len() {
            // Only reachable after a dedent below zero, which cannot happen;
            // kept so that a logic slip never loops forever.
            let l = &parser.lines[parser.pos];
            parser
                .errors
                .push(ParseError::new(l.number, "unexpected line"));
            parser.pos += 1;
        }
        let program = Program { statements };
        parser.check_step_order(&program);
        if parser.errors.is_empty() {
            Ok(program)
        } else {
            parser.errors.sort_by_key(|e| e.line);
            Err(parser.errors)
        }
    }

    fn next_line_number(&self) -> u32 {
        self.lines
            .get(self.pos)
            .map(|l| l.number)
            .unwrap_or(self.last_line + 1)
    }

    fn block(&mut self, depth: usize) -> Vec<Stmt> {
        let mut out: Vec<Stmt> = Vec::new();
        while let Some(line) = self.lines.get(self.pos) {
            if line.depth < depth {
                break;
            }
            if line.depth > depth {
                let number = line.number;
                self.errors
                    .push(ParseError::new(number, "unexpected indent"));
                while self.lines.get(self.pos).is_some_and(|l| l.depth > depth) {
                    self.pos += 1;
                }
                continue;
            }
            let number = line.number;
            match &line.body {
                LineBody::Comment { text, col, end } => {
                    let span = Span::new(number, *col, *end);
                    let kind =
                        step_comment(text).unwrap_or_else(|| StmtKind::Comment(text.clone()));
                    out.push(Stmt { kind, span });
                    self.pos += 1;
                }
                LineBody::Code(tokens) => {
                    let tokens = tokens.clone();
                    self.pos += 1;
                    if is_else(&tokens) {
                        match out.last_mut() {
                            Some(Stmt {
                                kind: StmtKind::If { else_block, .. },
                                ..
                            }) if else_block.is_none() => {
                                let body = self.body(depth);
                                *else_block = Some(body);
                            }
                            _ => self
                                .errors
                                .push(ParseError::new(number, "`else` without `if`")),
                        }
                        continue;
                    }
                    if let Some(stmt) = self.statement(number, &tokens, depth) {
                        out.push(stmt);
                    }
                }
            }
        }
        out
    }

    /// Parse the indented block following a `:` header at `depth`.
    fn body(&mut self, depth: usize) -> Vec<Stmt> {
        let has_indent = self.lines.get(self.pos).is_some_and(|l| l.depth > depth);
        let block = if has_indent {
            self.block(depth + 1)
        } else {
            Vec::new()
        };
        if block.iter().all(Stmt::is_comment) {
            let line = self.next_line_number();
            self.errors.push(ParseError::expected(
                line,
                "expected indented block",
                "a statement indented one level deeper",
            ));
        }
        block
    }

    fn statement(&mut self, number: u32, tokens: &[Token], depth: usize) -> Option<Stmt> {
        let result = self.statement_inner(number, tokens, depth);
        match result {
            Ok(s) => Some(s),
            Err(e) => {
                self.errors.push(e);
                // Skip the block of a malformed compound header so its body
                // is not misreported as an unexpected indent.
                if matches!(tokens.last().map(|t| &t.tok), Some(Tok::Punct(":"))) {
                    while self.lines.get(self.pos).is_some_and(|l| l.depth > depth) {
                        self.pos += 1;
                    }
                }
                None
            }
        }
    }

    fn statement_inner(
        &mut self,
        number: u32,
        tokens: &[Token],
        depth: usize,
    ) -> Result<Stmt, ParseError> {
        let first = &tokens[0];
        let line_span = Span::new(number, first.start, tokens[tokens.len() - 1].end);
        let mut cur = Cursor {
            tokens,
            pos: 0,
            line: number,
            abstract_mode: self.abstract_mode,
        };
        match &first.tok {
            Tok::Ident(k) if k == "if" => {
                cur.pos = 1;
                let cond = cur.expr()?;
                cur.expect_punct(":")?;
                cur.expect_end()?;
                let then_block = self.body(depth);
                Ok(Stmt {
                    kind: StmtKind::If {
                        cond,
                        then_block,
                        else_block: None,
                    },
                    span: line_span,
                })
            }
            Tok::Ident(k) if k == "for" => {
                cur.pos = 1;
                let var = cur.target()?;
                cur.expect_keyword("in")?;
                let iter = cur.expr()?;
                cur.expect_punct(":")?;
                cur.expect_end()?;
                let body = self.body(depth);
                Ok(Stmt {
                    kind: StmtKind::For { var, iter, body },
                    span: line_span,
                })
            }
            Tok::Ident(k) if k == "return" => {
                cur.pos = 1;
                if cur.at_end() {
                    return Err(ParseError::expected(
                        number,
                        "return requires a value",
                        "expression",
                    ));
                }
                let e = cur.expr()?;
                cur.expect_end()?;
                Ok(Stmt {
                    kind: StmtKind::Return(e),
                    span: line_span,
                })
            }
            Tok::Ident(_) | Tok::Pad
                if matches!(tokens.get(1).map(|t| &t.tok), Some(Tok::Punct("="))) =>
            {
                let target = cur.target()?;
                cur.expect_punct("=")?;
                let value = cur.expr()?;
                cur.expect_end()?;
                Ok(Stmt {
                    kind: StmtKind::Assign { target, value },
                    span: line_span,
                })
            }
            _ => {
                // Parse as an expression to give a precise message.
                cur.expr()?;
                Err(ParseError::expected(
                    number,
                    "expression statements are not supported",
                    "assignment, if, for or return",
                ))
            }
        }
    }

    fn check_step_order(&mut self, program: &Program) {
        let mut last: Option<(u32, u32)> = None;
        program.visit_stmts(&mut |s| {
            if let StmtKind::StepComment { step, .. } = &s.kind {
                if let Some((prev, _)) = last {
                    if *step <= prev {
                        self.errors.push(ParseError::new(
                            s.span.line,
                            format!("step {step} must come after step {prev}"),
                        ));
                    }
                }
                last = Some((*step, s.span.line));
            }
        });
    }
}

fn is_else(tokens: &[Token]) -> bool {
    matches!(tokens.first().map(|t| &t.tok), Some(Tok::Ident(k)) if k == "else")
        && tokens.len() == 2
        && tokens[1].tok == Tok::Punct(":")
}

/// Recognise `step N: text` (the leading `#` already removed).
fn step_comment(text: &str) -> Option<StmtKind> {
    let rest = text.strip_prefix("step ")?.trim_start();
    let colon = rest.find(':')?;
    let step: u32 = rest[..colon].trim().parse().ok()?;
    if step == 0 {
        return None;
    }
    Some(StmtKind::StepComment {
        step,
        text: rest[colon + 1..].trim().to_string(),
    })
}

struct Cursor<'a> {
    tokens: &'a [Token],
    pos: usize,
    line: u32,
    abstract_mode: bool,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(q), .. }) if *q == p)
    }

    fn peek_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(q), .. }) if q == k)
    }

    fn error_here(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::expected(
                self.line,
                format!("unexpected {}", t.tok.describe()),
                expected,
            ),
            None => ParseError::expected(self.line, "unexpected end of line", expected),
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<&'a Token, ParseError> {
        if self.peek_punct(p) {
            self.pos += 1;
            Ok(&self.tokens[self.pos - 1])
        } else {
            Err(self.error_here(&format!("'{p}'")))
        }
    }

    fn expect_keyword(&mut self, k: &str) -> Result<(), ParseError> {
        if self.peek_keyword(k) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(&format!("'{k}'")))
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error_here("end of line"))
        }
    }

    fn target(&mut self) -> Result<String, ParseError> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Ident(name)) if !KEYWORDS.contains(&name.as_str()) => {
                self.pos += 1;
                Ok(name.clone())
            }
            Some(Tok::Pad) => {
                self.pos += 1;
                Ok(PAD.to_string())
            }
            _ => Err(self.error_here("variable name")),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn binary_chain(
        &mut self,
        ops: &[(&str, BinOp)],
        next: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (sym, op) in ops {
                let hit = if sym.chars().all(|c| c.is_ascii_alphabetic()) {
                    self.peek_keyword(sym)
                } else {
                    self.peek_punct(sym)
                };
                if hit {
                    self.pos += 1;
                    let rhs = next(self)?;
                    let span = lhs.span.join(rhs.span);
                    lhs = Expr::new(
                        ExprKind::Binary {
                            op: *op,
                            lhs: Box::new(lhs),
                            rhs: Box::new(rhs),
                        },
                        span,
                    );
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(&[("or", BinOp::Or)], Self::and_expr)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(&[("and", BinOp::And)], Self::not_expr)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.peek_keyword("not") {
            let start = self.tokens[self.pos].start;
            self.pos += 1;
            let operand = self.not_expr()?;
            let span = Span::new(self.line, start, operand.span.col_end);
            return Ok(Expr::new(
                ExprKind::Unary {
                    op: UnaryOp::Not,
                    operand: Box::new(operand),
                },
                span,
            ));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        const CMP: [(&str, BinOp); 6] = [
            ("==", BinOp::Eq),
            ("!=", BinOp::Ne),
            ("<=", BinOp::Le),
            (">=", BinOp::Ge),
            ("<", BinOp::Lt),
            (">", BinOp::Gt),
        ];
        let lhs = self.additive()?;
        let Some((_, op)) = CMP.iter().find(|(s, _)| self.peek_punct(s)) else {
            return Ok(lhs);
        };
        self.pos += 1;
        let rhs = self.additive()?;
        if CMP.iter().any(|(s, _)| self.peek_punct(s)) {
            return Err(ParseError::new(
                self.line,
                "chained comparisons are not supported",
            ));
        }
        let span = lhs.span.join(rhs.span);
        Ok(Expr::new(
            ExprKind::Binary {
                op: *op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        ))
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(&[("+", BinOp::Add), ("-", BinOp::Sub)], Self::term)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(&[("*", BinOp::Mul), ("/", BinOp::Div)], Self::unary)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek_punct("-") {
            let start = self.tokens[self.pos].start;
            self.pos += 1;
            let operand = self.unary()?;
            let span = Span::new(self.line, start, operand.span.col_end);
            return Ok(Expr::new(
                ExprKind::Unary {
                    op: UnaryOp::Neg,
                    operand: Box::new(operand),
                },
                span,
            ));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while self.peek_punct("[") {
            self.pos += 1;
            let index = self.expr()?;
            let close = self.expect_punct("]")?;
            let span = Span::new(self.line, e.span.col_start, close.end);
            e = Expr::new(
                ExprKind::Index {
                    target: Box::new(e),
                    index: Box::new(index),
                },
                span,
            );
        }
        Ok(e)
    }

    fn call_args(&mut self) -> Result<(Vec<Expr>, u32), ParseError> {
        let mut args = Vec::new();
        if !self.peek_punct(")") {
            loop {
                args.push(self.expr()?);
                if self.peek_punct(",") {
                    self.pos += 1;
                    continue;
                }
                break;
            }
        }
        let close = self.expect_punct(")")?;
        Ok((args, close.end))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(tok) = self.peek() else {
            return Err(self.error_here("expression"));
        };
        let span = Span::new(self.line, tok.start, tok.end);
        let kind = match &tok.tok {
            Tok::Num(n) => ExprKind::Num(*n),
            Tok::Str(s) => ExprKind::Str(s.clone()),
            Tok::Pad if self.abstract_mode => {
                self.pos += 1;
                if self.peek_punct("(") {
                    self.pos += 1;
                    let (args, end) = self.call_args()?;
                    return Ok(Expr::new(
                        ExprKind::Call {
                            callee: PAD.to_string(),
                            args,
                        },
                        Span::new(self.line, span.col_start, end),
                    ));
                }
                return Ok(Expr::new(ExprKind::Pad, span));
            }
            Tok::Ident(k) if k == "True" => ExprKind::Bool(true),
            Tok::Ident(k) if k == "False" => ExprKind::Bool(false),
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.pos += 1;
                if self.peek_punct("(") {
                    self.pos += 1;
                    let (args, end) = self.call_args()?;
                    return Ok(Expr::new(
                        ExprKind::Call {
                            callee: name.clone(),
                            args,
                        },
                        Span::new(self.line, span.col_start, end),
                    ));
                }
                return Ok(Expr::new(ExprKind::Var(name.clone()), span));
            }
            Tok::Punct("(") => {
                self.pos += 1;
                let mut inner = self.expr()?;
                let close = self.expect_punct(")")?;
                // Widen to include the parentheses so the span text reparses.
                inner.span = Span::new(self.line, span.col_start, close.end);
                return Ok(inner);
            }
            _ => return Err(self.error_here("expression")),
        };
        self.pos += 1;
        Ok(Expr::new(kind, span))
    }
}
