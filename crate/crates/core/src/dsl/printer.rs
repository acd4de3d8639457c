use super::ast::*;

/// Canonical text of a program: 4-space indentation, one statement per line,
/// single spaces around binary operators, double-quoted strings.
pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    print_block(&program.statements, 0, &mut out);
    out
}

fn print_block(block: &[Stmt], depth: usize, out: &mut String) {
    for s in block {
        print_stmt(s, depth, out);
    }
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn print_stmt(stmt: &Stmt, depth: usize, out: &mut String) {
    indent(depth, out);
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            out.push_str(target);
            out.push_str(" = ");
            out.push_str(&print_expr(value));
            out.push('\n');
        }
        StmtKind::Return(e) => {
            out.push_str("return ");
            out.push_str(&print_expr(e));
            out.push('\n');
        }
        StmtKind::StepComment { step, text } => {
            out.push_str(format!("# step {step}: {text}").trim_end());
            out.push('\n');
        }
        StmtKind::Comment(text) => {
            if text.is_empty() {
                out.push_str("#\n");
            } else {
                out.push_str("# ");
                out.push_str(text);
                out.push('\n');
            }
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            out.push_str("if ");
            out.push_str(&print_expr(cond));
            out.push_str(":\n");
            print_block(then_block, depth + 1, out);
            if let Some(b) = else_block {
                indent(depth, out);
                out.push_str("else:\n");
                print_block(b, depth + 1, out);
            }
        }
        StmtKind::For { var, iter, body } => {
            out.push_str("for ");
            out.push_str(var);
            out.push_str(" in ");
            out.push_str(&print_expr(iter));
            out.push_str(":\n");
            print_block(body, depth + 1, out);
        }
    }
}

const PREC_NOT: u8 = 3;
const PREC_NEG: u8 = 7;
const PREC_POSTFIX: u8 = 8;
const PREC_ATOM: u8 = 9;

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary { op, .. } => op.precedence(),
        ExprKind::Unary {
            op: UnaryOp::Not, ..
        } => PREC_NOT,
        ExprKind::Unary {
            op: UnaryOp::Neg, ..
        } => PREC_NEG,
        ExprKind::Index { .. } | ExprKind::Call { .. } => PREC_POSTFIX,
        _ => PREC_ATOM,
    }
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, 0, &mut out);
    out
}

fn write_expr(e: &Expr, min_prec: u8, out: &mut String) {
    let wrap = precedence(e) < min_prec;
    if wrap {
        out.push('(');
    }
    match &e.kind {
        ExprKind::Str(s) => write_string(s, out),
        ExprKind::Num(n) => out.push_str(&n.normalize().to_string()),
        ExprKind::Bool(true) => out.push_str("True"),
        ExprKind::Bool(false) => out.push_str("False"),
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Pad => out.push_str(PAD),
        ExprKind::Call { callee, args } => {
            out.push_str(callee);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(a, 0, out);
            }
            out.push(')');
        }
        ExprKind::Index { target, index } => {
            write_expr(target, PREC_POSTFIX, out);
            out.push('[');
            write_expr(index, 0, out);
            out.push(']');
        }
        ExprKind::Unary { op, operand } => match op {
            UnaryOp::Not => {
                out.push_str("not ");
                write_expr(operand, PREC_NOT, out);
            }
            UnaryOp::Neg => {
                out.push('-');
                write_expr(operand, PREC_NEG, out);
            }
        },
        ExprKind::Binary { op, lhs, rhs } => {
            let p = op.precedence();
            // Comparisons do not chain, so both operands bind tighter.
            let lhs_min = if op.is_comparison() { p + 1 } else { p };
            write_expr(lhs, lhs_min, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(rhs, p + 1, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

fn write_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}
