use serde::{Deserialize, Serialize};

use crate::dsl::{
    is_primitive, print_program, BinOp, Expr, ExprKind, Program, Stmt, StmtKind, StmtTag, PAD,
};

/// A program with task-specific detail replaced by `<pad>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractCode {
    pub text: String,
    pub skeleton: Vec<StmtTag>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskOptions {
    /// Also mask primitive and builtin callee names.
    #[serde(default)]
    pub mask_callees: bool,
}

pub fn abstract_code(program: &Program) -> AbstractCode {
    abstract_code_with(program, MaskOptions::default())
}

pub fn abstract_code_with(program: &Program, opts: MaskOptions) -> AbstractCode {
    let masked = Program {
        statements: mask_block(&program.statements, opts),
    };
    AbstractCode {
        text: print_program(&masked),
        skeleton: masked.skeleton(),
    }
}

fn pad(e: &Expr) -> Expr {
    Expr::new(ExprKind::Pad, e.span)
}

fn mask_block(block: &[Stmt], opts: MaskOptions) -> Vec<Stmt> {
    block
        .iter()
        .filter(|s| !s.is_comment())
        .map(|s| {
            let kind = match &s.kind {
                StmtKind::Assign { value, .. } => StmtKind::Assign {
                    target: PAD.to_string(),
                    value: mask_expr(value, opts),
                },
                StmtKind::If {
                    cond,
                    then_block,
                    else_block,
                } => StmtKind::If {
                    cond: mask_cond(cond, opts),
                    then_block: mask_block(then_block, opts),
                    else_block: else_block.as_ref().map(|b| mask_block(b, opts)),
                },
                StmtKind::For { iter, body, .. } => StmtKind::For {
                    var: PAD.to_string(),
                    iter: mask_expr(iter, opts),
                    body: mask_block(body, opts),
                },
                StmtKind::Return(e) => StmtKind::Return(mask_expr(e, opts)),
                StmtKind::StepComment { .. } | StmtKind::Comment(_) => unreachable!(),
            };
            Stmt { kind, span: s.span }
        })
        .collect()
}

fn has_call(e: &Expr) -> bool {
    let mut found = false;
    e.visit(&mut |x| found |= matches!(x.kind, ExprKind::Call { .. }));
    found
}

/// Comparison operands collapse to a single `<pad>` unless they contain a
/// call, whose name still carries the program's logic.
fn mask_cond(e: &Expr, opts: MaskOptions) -> Expr {
    match &e.kind {
        ExprKind::Binary { op, lhs, rhs } if op.is_comparison() => {
            let side = |x: &Expr| {
                if has_call(x) {
                    mask_expr(x, opts)
                } else {
                    pad(x)
                }
            };
            Expr::new(
                ExprKind::Binary {
                    op: *op,
                    lhs: Box::new(side(lhs)),
                    rhs: Box::new(side(rhs)),
                },
                e.span,
            )
        }
        ExprKind::Binary { op, lhs, rhs } if matches!(op, BinOp::And | BinOp::Or) => Expr::new(
            ExprKind::Binary {
                op: *op,
                lhs: Box::new(mask_cond(lhs, opts)),
                rhs: Box::new(mask_cond(rhs, opts)),
            },
            e.span,
        ),
        ExprKind::Unary { op, operand } => Expr::new(
            ExprKind::Unary {
                op: *op,
                operand: Box::new(mask_cond(operand, opts)),
            },
            e.span,
        ),
        _ => mask_expr(e, opts),
    }
}

fn mask_expr(e: &Expr, opts: MaskOptions) -> Expr {
    let kind = match &e.kind {
        ExprKind::Str(_)
        | ExprKind::Num(_)
        | ExprKind::Bool(_)
        | ExprKind::Var(_)
        | ExprKind::Pad => ExprKind::Pad,
        ExprKind::Call { callee, args } => ExprKind::Call {
            callee: if is_primitive(callee) && !opts.mask_callees {
                callee.clone()
            } else {
                PAD.to_string()
            },
            args: args.iter().map(|a| mask_expr(a, opts)).collect(),
        },
        ExprKind::Index { target, index } => ExprKind::Index {
            target: Box::new(mask_expr(target, opts)),
            index: Box::new(mask_expr(index, opts)),
        },
        ExprKind::Unary { op, operand } => ExprKind::Unary {
            op: *op,
            operand: Box::new(mask_expr(operand, opts)),
        },
        ExprKind::Binary { op, lhs, rhs } => ExprKind::Binary {
            op: *op,
            lhs: Box::new(mask_expr(lhs, opts)),
            rhs: Box::new(mask_expr(rhs, opts)),
        },
    };
    Expr::new(kind, e.span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, parse_abstract};

    fn masked(src: &str) -> String {
        abstract_code(&parse(src).unwrap()).text
    }

    #[test]
    fn masks_variables_and_literals() {
        assert_eq!(
            masked("ms = find(image, \"muffin\")\nreturn ms\n"),
            "<pad> = find(<pad>, <pad>)\nreturn <pad>\n"
        );
    }

    #[test]
    fn masks_condition_operands() {
        let src = "ms = find(image, \"muffin\")\nif count(ms) > 2:\n    return \"many\"\nreturn \"few\"\n";
        assert_eq!(
            masked(src),
            "<pad> = find(<pad>, <pad>)\nif count(<pad>) > <pad>:\n    return <pad>\nreturn <pad>\n"
        );
        let src = "a = 1\nif a + 1 > 2 and not a == 3:\n    return 1\nreturn 0\n";
        assert!(masked(src).contains("if <pad> > <pad> and not <pad> == <pad>:"));
    }

    #[test]
    fn comments_dropped_skeleton_kept() {
        let src = "# step 1: look\nxs = find(image, \"cup\")\n# note\nfor x in xs:\n    if exists(x, \"lid\"):\n        return x\n    else:\n        y = 1\nreturn get(xs, 0)\n";
        let p = parse(src).unwrap();
        let a = abstract_code(&p);
        assert_eq!(a.skeleton, p.skeleton());
        assert!(!a.text.contains('#'));
        assert_eq!(parse_abstract(&a.text).unwrap().skeleton(), a.skeleton);
    }

    #[test]
    fn idempotent() {
        let src = "ms = find(image, \"muffin\")\nif count(ms) > 2:\n    return \"many\"\nreturn helper(ms)\n";
        let once = abstract_code(&parse(src).unwrap());
        let twice = abstract_code(&parse_abstract(&once.text).unwrap());
        assert_eq!(once, twice);
        assert!(once.text.contains("<pad>(<pad>)"));
    }

    #[test]
    fn callee_masking_option() {
        let p = parse("return count(find(image, \"a\"))\n").unwrap();
        let a = abstract_code_with(&p, MaskOptions { mask_callees: true });
        assert_eq!(a.text, "return <pad>(<pad>(<pad>, <pad>))\n");
    }
}
