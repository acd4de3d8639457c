use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{Diagnostic, DiagnosticCode};
use crate::dsl::{
    is_primitive, BinOp, Expr, ExprKind, Program, Stmt, StmtKind, UnaryOp, IMAGE_VAR, PAD,
};
use crate::runtime::{signature, Ty};

/// Flow facts at a program point. `None` in the analyzer means unreachable.
#[derive(Debug, Clone, PartialEq)]
struct State {
    /// Names bound on every path reaching this point.
    defined: BTreeSet<String>,
    types: BTreeMap<String, Ty>,
    /// Names whose live binding may come from a finished `for` loop.
    leaked: BTreeSet<String>,
}

fn join_ty(a: Ty, b: Ty) -> Ty {
    if a == b {
        a
    } else {
        Ty::Unknown
    }
}

fn join(a: Option<State>, b: Option<State>) -> Option<State> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let defined: BTreeSet<String> = a.defined.intersection(&b.defined).cloned().collect();
            let mut types = BTreeMap::new();
            for name in a.types.keys().chain(b.types.keys()) {
                let t = match (a.types.get(name), b.types.get(name)) {
                    (Some(x), Some(y)) => join_ty(*x, *y),
                    _ => Ty::Unknown,
                };
                types.insert(name.clone(), t);
            }
            let leaked = a.leaked.union(&b.leaked).cloned().collect();
            Some(State {
                defined,
                types,
                leaked,
            })
        }
    }
}

pub(super) struct Checker {
    diags: Vec<Diagnostic>,
    seen: HashSet<(DiagnosticCode, u32, String)>,
    silent: u32,
    loop_vars: Vec<String>,
    /// Every name assigned anywhere so far, used to phrase undefined-name
    /// messages for conditionally bound names.
    ever_assigned: BTreeSet<String>,
}

impl Checker {
    pub(super) fn run(program: &Program) -> Vec<Diagnostic> {
        let mut c = Checker {
            diags: Vec::new(),
            seen: HashSet::new(),
            silent: 0,
            loop_vars: Vec::new(),
            ever_assigned: BTreeSet::new(),
        };
        let mut init = State {
            defined: BTreeSet::new(),
            types: BTreeMap::new(),
            leaked: BTreeSet::new(),
        };
        init.defined.insert(IMAGE_VAR.to_string());
        init.types.insert(IMAGE_VAR.to_string(), Ty::Patch);
        let end = c.block(&program.statements, Some(init));
        if end.is_some() {
            c.report(
                DiagnosticCode::MissingReturn,
                program.last_line(),
                "program can reach its end without returning a value".into(),
            );
        }
        c.unused(program);
        c.diags.sort_by_key(|d| (d.line, d.code));
        c.diags
    }

    fn report(&mut self, code: DiagnosticCode, line: u32, message: String) {
        if self.silent > 0 {
            return;
        }
        if self.seen.insert((code, line, message.clone())) {
            self.diags.push(Diagnostic::new(code, line, message));
        }
    }

    fn unused(&mut self, program: &Program) {
        let mut reads = HashSet::new();
        let mut first_assign: BTreeMap<&str, u32> = BTreeMap::new();
        program.visit_stmts(&mut |s| {
            for e in s.exprs() {
                e.visit(&mut |x| {
                    if let ExprKind::Var(n) = &x.kind {
                        reads.insert(n.clone());
                    }
                });
            }
            match &s.kind {
                StmtKind::Assign { target, .. } => {
                    first_assign.entry(target.as_str()).or_insert(s.span.line);
                }
                StmtKind::For { var, .. } => {
                    first_assign.entry(var.as_str()).or_insert(s.span.line);
                }
                _ => {}
            }
        });
        for (name, line) in first_assign {
            if name.starts_with('_') || name == PAD || reads.contains(name) {
                continue;
            }
            self.report(
                DiagnosticCode::UnusedVar,
                line,
                format!("variable '{name}' is assigned but never used"),
            );
        }
    }

    fn block(&mut self, block: &[Stmt], mut state: Option<State>) -> Option<State> {
        let mut flagged = false;
        for stmt in block.iter().filter(|s| !s.is_comment()) {
            match state {
                Some(s) => state = self.stmt(stmt, s),
                None => {
                    if !flagged {
                        self.report(
                            DiagnosticCode::UnreachableCode,
                            stmt.span.line,
                            "statement can never execute".into(),
                        );
                        flagged = true;
                    }
                }
            }
        }
        state
    }

    fn bind(&mut self, state: &mut State, name: &str, ty: Ty, line: u32) {
        if is_primitive(name) {
            self.report(
                DiagnosticCode::NameConflictWithPrimitive,
                line,
                format!("'{name}' shadows the primitive of the same name"),
            );
        }
        self.ever_assigned.insert(name.to_string());
        state.defined.insert(name.to_string());
        state.types.insert(name.to_string(), ty);
        state.leaked.remove(name);
    }

    fn stmt(&mut self, stmt: &Stmt, mut state: State) -> Option<State> {
        let line = stmt.span.line;
        match &stmt.kind {
            StmtKind::Assign { target, value } => {
                let ty = self.expr(value, &state, line);
                if self.loop_vars.iter().any(|v| v == target) {
                    self.report(
                        DiagnosticCode::ShadowedVar,
                        line,
                        format!("assignment to '{target}' overwrites the enclosing loop variable"),
                    );
                }
                self.bind(&mut state, target, ty, line);
                Some(state)
            }
            StmtKind::Return(e) => {
                self.expr(e, &state, line);
                None
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let ty = self.expr(cond, &state, line);
                self.expect(ty, Ty::Bool, line, "if condition");
                let then_out = self.block(then_block, Some(state.clone()));
                let else_out = match else_block {
                    Some(b) => self.block(b, Some(state)),
                    None => Some(state),
                };
                join(then_out, else_out)
            }
            StmtKind::For { var, iter, body } => {
                let ty = self.expr(iter, &state, line);
                self.expect(ty, Ty::List, line, "for loop iterable");
                if self.loop_vars.iter().any(|v| v == var) {
                    self.report(
                        DiagnosticCode::ShadowedVar,
                        line,
                        format!("loop variable '{var}' shadows an enclosing loop variable"),
                    );
                }
                // Widen loop-carried types to a fixpoint before reporting, so
                // a value whose type changes across iterations is Unknown.
                let mut head = state.clone();
                self.silent += 1;
                for _ in 0..8 {
                    let mut entry = head.clone();
                    self.bind_loop_var(&mut entry, var);
                    self.loop_vars.push(var.clone());
                    let out = self.block(body, Some(entry));
                    self.loop_vars.pop();
                    let next = match join(Some(head.clone()), out) {
                        Some(mut n) => {
                            n.defined = head.defined.clone();
                            n
                        }
                        None => head.clone(),
                    };
                    if next.types == head.types {
                        break;
                    }
                    head = next;
                }
                self.silent -= 1;
                if is_primitive(var) {
                    self.report(
                        DiagnosticCode::NameConflictWithPrimitive,
                        line,
                        format!("'{var}' shadows the primitive of the same name"),
                    );
                }
                let mut entry = head.clone();
                self.bind_loop_var(&mut entry, var);
                self.loop_vars.push(var.clone());
                let out = self.block(body, Some(entry));
                self.loop_vars.pop();
                // Zero iterations leave `head` untouched.
                let mut after = join(Some(head.clone()), out).unwrap_or(head.clone());
                after.defined = head.defined;
                after.leaked.insert(var.clone());
                Some(after)
            }
            StmtKind::StepComment { .. } | StmtKind::Comment(_) => Some(state),
        }
    }

    fn bind_loop_var(&mut self, state: &mut State, var: &str) {
        self.ever_assigned.insert(var.to_string());
        state.defined.insert(var.to_string());
        state.types.insert(var.to_string(), Ty::Unknown);
        state.leaked.remove(var);
    }

    fn expect(&mut self, got: Ty, want: Ty, line: u32, what: &str) {
        if got != Ty::Unknown && want != Ty::Unknown && got != want {
            self.report(
                DiagnosticCode::TypeMismatch,
                line,
                format!("{what} must be {want}, found {got}"),
            );
        }
    }

    fn expr(&mut self, e: &Expr, state: &State, line: u32) -> Ty {
        match &e.kind {
            ExprKind::Str(_) => Ty::Text,
            ExprKind::Num(_) => Ty::Number,
            ExprKind::Bool(_) => Ty::Bool,
            ExprKind::Pad => Ty::Unknown,
            ExprKind::Var(name) => {
                if !state.defined.contains(name) {
                    let msg = if self.ever_assigned.contains(name) {
                        format!("'{name}' may be undefined here")
                    } else {
                        format!("undefined name '{name}'")
                    };
                    self.report(DiagnosticCode::UndefinedVar, line, msg);
                }
                if state.leaked.contains(name) {
                    self.report(
                        DiagnosticCode::LoopVarLeak,
                        line,
                        format!("loop variable '{name}' is used after its loop"),
                    );
                }
                state.types.get(name).copied().unwrap_or(Ty::Unknown)
            }
            ExprKind::Call { callee, args } => {
                let arg_tys: Vec<Ty> = args.iter().map(|a| self.expr(a, state, line)).collect();
                if callee == PAD {
                    return Ty::Unknown;
                }
                let Some(sig) = signature(callee) else {
                    self.report(
                        DiagnosticCode::UndefinedVar,
                        line,
                        format!("unknown function '{callee}'"),
                    );
                    return Ty::Unknown;
                };
                if sig.params.len() != args.len() {
                    self.report(
                        DiagnosticCode::ArityMismatch,
                        line,
                        format!(
                            "{callee} expects {} argument(s), got {}",
                            sig.params.len(),
                            args.len()
                        ),
                    );
                } else {
                    for (i, (want, got)) in sig.params.iter().zip(&arg_tys).enumerate() {
                        self.expect(
                            *got,
                            *want,
                            line,
                            &format!("argument {} of {callee}", i + 1),
                        );
                    }
                }
                sig.ret
            }
            ExprKind::Index { target, index } => {
                let t = self.expr(target, state, line);
                let i = self.expr(index, state, line);
                self.expect(t, Ty::List, line, "indexed value");
                self.expect(i, Ty::Number, line, "index");
                Ty::Unknown
            }
            ExprKind::Unary { op, operand } => {
                let t = self.expr(operand, state, line);
                match op {
                    UnaryOp::Not => {
                        self.expect(t, Ty::Bool, line, "operand of 'not'");
                        Ty::Bool
                    }
                    UnaryOp::Neg => {
                        self.expect(t, Ty::Number, line, "operand of '-'");
                        Ty::Number
                    }
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.expr(lhs, state, line);
                let b = self.expr(rhs, state, line);
                self.binary(*op, a, b, line)
            }
        }
    }

    fn binary(&mut self, op: BinOp, a: Ty, b: Ty, line: u32) -> Ty {
        let known = a != Ty::Unknown && b != Ty::Unknown;
        let mismatch = |c: &mut Self| {
            c.report(
                DiagnosticCode::TypeMismatch,
                line,
                format!("operator '{}' cannot combine {a} and {b}", op.symbol()),
            )
        };
        match op {
            BinOp::Eq | BinOp::Ne => Ty::Bool,
            BinOp::And | BinOp::Or => {
                self.expect(
                    a,
                    Ty::Bool,
                    line,
                    &format!("left operand of '{}'", op.symbol()),
                );
                self.expect(
                    b,
                    Ty::Bool,
                    line,
                    &format!("right operand of '{}'", op.symbol()),
                );
                Ty::Bool
            }
            BinOp::Add => {
                if known && (a != b || !matches!(a, Ty::Number | Ty::Text | Ty::List)) {
                    mismatch(self);
                    return Ty::Unknown;
                }
                if a == Ty::Unknown {
                    b
                } else {
                    a
                }
            }
            BinOp::Sub | BinOp::Mul | BinOp::Div => {
                if known && (a != Ty::Number || b != Ty::Number) {
                    mismatch(self);
                } else {
                    self.expect(
                        a,
                        Ty::Number,
                        line,
                        &format!("operand of '{}'", op.symbol()),
                    );
                    self.expect(
                        b,
                        Ty::Number,
                        line,
                        &format!("operand of '{}'", op.symbol()),
                    );
                }
                Ty::Number
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                if known && (a != b || !matches!(a, Ty::Number | Ty::Text)) {
                    mismatch(self);
                }
                Ty::Bool
            }
        }
    }
}
