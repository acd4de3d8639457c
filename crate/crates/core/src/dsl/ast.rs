use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

/// Placeholder token used by abstract (masked) code.
pub const PAD: &str = "<pad>";

/// Location of a node: 1-based line, 0-based byte columns, end exclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col_start: u32,
    pub col_end: u32,
}

impl Span {
    pub fn new(line: u32, col_start: u32, col_end: u32) -> Self {
        Span {
            line,
            col_start,
            col_end,
        }
    }

    /// Smallest span covering both `self` and `other` (same line assumed).
    pub fn join(self, other: Span) -> Span {
        Span {
            line: self.line,
            col_start: self.col_start.min(other.col_start),
            col_end: self.col_end.max(other.col_end),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub statements: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        target: String,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Vec<Stmt>,
        else_block: Option<Vec<Stmt>>,
    },
    For {
        var: String,
        iter: Expr,
        body: Vec<Stmt>,
    },
    Return(Expr),
    StepComment {
        step: u32,
        text: String,
    },
    Comment(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Str(String),
    Num(Decimal),
    Bool(bool),
    Var(String),
    /// `<pad>`; only produced by the abstract-grammar parser and the masker.
    Pad,
    Call {
        callee: String,
        args: Vec<Expr>,
    },
    Index {
        target: Box<Expr>,
        index: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }
}

/// Statement-kind tag used for skeleton comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StmtTag {
    Assign,
    If,
    Else,
    For,
    Return,
    End,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Pre-order visit of this expression and every sub-expression.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.visit(f)),
            ExprKind::Index { target, index } => {
                target.visit(f);
                index.visit(f);
            }
            ExprKind::Unary { operand, .. } => operand.visit(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            _ => {}
        }
    }

    fn clear_spans(&mut self) {
        self.span = Span::default();
        match &mut self.kind {
            ExprKind::Call { args, .. } => args.iter_mut().for_each(Expr::clear_spans),
            ExprKind::Index { target, index } => {
                target.clear_spans();
                index.clear_spans();
            }
            ExprKind::Unary { operand, .. } => operand.clear_spans(),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.clear_spans();
                rhs.clear_spans();
            }
            _ => {}
        }
    }
}

impl Stmt {
    pub fn is_comment(&self) -> bool {
        matches!(
            self.kind,
            StmtKind::Comment(_) | StmtKind::StepComment { .. }
        )
    }

    /// Expressions owned directly by this statement (not by nested blocks).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Assign { value, .. } => vec![value],
            StmtKind::If { cond, .. } => vec![cond],
            StmtKind::For { iter, .. } => vec![iter],
            StmtKind::Return(e) => vec![e],
            _ => Vec::new(),
        }
    }

    /// Nested blocks in source order.
    pub fn blocks(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                let mut out = vec![then_block.as_slice()];
                if let Some(b) = else_block {
                    out.push(b.as_slice());
                }
                out
            }
            StmtKind::For { body, .. } => vec![body.as_slice()],
            _ => Vec::new(),
        }
    }

    fn clear_spans(&mut self) {
        self.span = Span::default();
        match &mut self.kind {
            StmtKind::Assign { value, .. } => value.clear_spans(),
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                cond.clear_spans();
                then_block.iter_mut().for_each(Stmt::clear_spans);
                if let Some(b) = else_block {
                    b.iter_mut().for_each(Stmt::clear_spans);
                }
            }
            StmtKind::For { iter, body, .. } => {
                iter.clear_spans();
                body.iter_mut().for_each(Stmt::clear_spans);
            }
            StmtKind::Return(e) => e.clear_spans(),
            _ => {}
        }
    }
}

impl Program {
    /// Pre-order visit of all statements, nested blocks included.
    pub fn visit_stmts<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        fn walk<'a>(block: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
            for s in block {
                f(s);
                for b in s.blocks() {
                    walk(b, f);
                }
            }
        }
        walk(&self.statements, f);
    }

    /// Copy of the program with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> Program {
        let mut p = self.clone();
        p.statements.iter_mut().for_each(Stmt::clear_spans);
        p
    }

    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.without_spans() == other.without_spans()
    }

    /// Line of the last non-comment statement, descending into a trailing
    /// block. 1 for an empty program.
    pub fn last_line(&self) -> u32 {
        fn last(block: &[Stmt]) -> Option<u32> {
            let s = block.iter().rev().find(|s| !s.is_comment())?;
            let nested = s.blocks().last().and_then(|b| last(b));
            Some(nested.unwrap_or(s.span.line).max(s.span.line))
        }
        last(&self.statements).unwrap_or(1)
    }

    /// `(step_id, text)` for each step comment in source order.
    pub fn steps(&self) -> Vec<(u32, String)> {
        let mut out = Vec::new();
        self.visit_stmts(&mut |s| {
            if let StmtKind::StepComment { step, text } = &s.kind {
                out.push((*step, text.clone()));
            }
        });
        out
    }

    /// Statement-kind sequence, comments excluded. Blocks are closed with `End`.
    pub fn skeleton(&self) -> Vec<StmtTag> {
        fn walk(block: &[Stmt], out: &mut Vec<StmtTag>) {
            for s in block {
                match &s.kind {
                    StmtKind::Assign { .. } => out.push(StmtTag::Assign),
                    StmtKind::Return(_) => out.push(StmtTag::Return),
                    StmtKind::If {
                        then_block,
                        else_block,
                        ..
                    } => {
                        out.push(StmtTag::If);
                        walk(then_block, out);
                        if let Some(b) = else_block {
                            out.push(StmtTag::Else);
                            walk(b, out);
                        }
                        out.push(StmtTag::End);
                    }
                    StmtKind::For { body, .. } => {
                        out.push(StmtTag::For);
                        walk(body, out);
                        out.push(StmtTag::End);
                    }
                    StmtKind::StepComment { .. } | StmtKind::Comment(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.statements, &mut out);
        out
    }
}
