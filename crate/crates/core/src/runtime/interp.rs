use std::collections::BTreeMap;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::backend::PerceptionBackend;
use super::scene::Scene;
use super::signature;
use super::value::{Patch, Ty, Value};
use crate::dsl::{BinOp, Expr, ExprKind, Program, Stmt, StmtKind, UnaryOp, IMAGE_VAR, PAD};

pub const DEFAULT_STEP_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_steps: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: DEFAULT_STEP_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Assign,
    PrimitiveCall,
    Branch,
    LoopIter,
    Return,
}

/// One captured intermediate value.
///
/// `deps` lists the `seq` of every earlier event whose value flowed into this
/// one, either as data (a variable read or a call result) or as control (the
/// branch or loop iteration the event executed under).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub line: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_id: Option<u32>,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args_snapshot: Vec<Value>,
    pub value_snapshot: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeError {
    pub line: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub result: Option<Value>,
    pub trace: Vec<TraceEvent>,
    pub runtime_error: Option<RuntimeError>,
    pub steps_used: u64,
}

impl ExecutionResult {
    /// Result for a program that never ran, e.g. when the model client failed.
    pub fn failed(message: impl Into<String>) -> Self {
        ExecutionResult {
            result: None,
            trace: Vec::new(),
            runtime_error: Some(RuntimeError {
                line: 0,
                message: message.into(),
            }),
            steps_used: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.runtime_error.is_none()
    }
}

/// Run `program` against `scene`. `image` is bound to the whole scene.
pub fn execute(
    program: &Program,
    scene: &Scene,
    backend: &dyn PerceptionBackend,
    limits: Limits,
) -> ExecutionResult {
    let mut interp = Interp {
        scene,
        backend,
        limits,
        env: BTreeMap::new(),
        trace: Vec::new(),
        steps: 0,
        step_id: None,
        control: Vec::new(),
        guards: Vec::new(),
    };
    interp.env.insert(
        IMAGE_VAR.to_string(),
        (Value::Patch(scene.full_patch()), None),
    );
    let last_line = program.last_line();
    let outcome = interp.block(&program.statements);
    let (result, runtime_error) = match outcome {
        Ok(Flow::Return(v)) => (Some(v), None),
        Ok(Flow::Normal) => (
            None,
            Some(RuntimeError {
                line: last_line,
                message: "program ended without return".into(),
            }),
        ),
        Err(e) => (None, Some(e)),
    };
    ExecutionResult {
        result,
        trace: interp.trace,
        runtime_error,
        steps_used: interp.steps,
    }
}

enum Flow {
    Normal,
    Return(Value),
}

type Deps = Vec<u64>;

struct Interp<'a> {
    scene: &'a Scene,
    backend: &'a dyn PerceptionBackend,
    limits: Limits,
    env: BTreeMap<String, (Value, Option<u64>)>,
    trace: Vec<TraceEvent>,
    steps: u64,
    step_id: Option<u32>,
    control: Vec<u64>,
    /// Set by an `if` or `for` that could have returned but did not: the
    /// rest of the enclosing block only runs because of that outcome.
    guards: Vec<u64>,
}

fn can_return(block: &[Stmt]) -> bool {
    block
        .iter()
        .any(|s| matches!(s.kind, StmtKind::Return(_)) || s.blocks().into_iter().any(can_return))
}

fn err(line: u32, message: impl Into<String>) -> RuntimeError {
    RuntimeError {
        line,
        message: message.into(),
    }
}

fn type_error(line: u32, message: impl AsRef<str>) -> RuntimeError {
    err(line, format!("type error: {}", message.as_ref()))
}

impl Interp<'_> {
    fn tick(&mut self, line: u32) -> Result<(), RuntimeError> {
        if self.steps >= self.limits.max_steps {
            return Err(err(
                line,
                format!("step limit exceeded ({} steps)", self.limits.max_steps),
            ));
        }
        self.steps += 1;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        line: u32,
        kind: EventKind,
        name: Option<String>,
        primitive: Option<String>,
        args: Vec<Value>,
        value: Value,
        mut deps: Deps,
    ) -> u64 {
        let seq = self.trace.len() as u64;
        deps.extend(self.control.iter().copied());
        deps.sort_unstable();
        deps.dedup();
        self.trace.push(TraceEvent {
            seq,
            line,
            step_id: self.step_id,
            kind,
            name,
            primitive,
            args_snapshot: args,
            value_snapshot: value,
            deps,
        });
        seq
    }

    fn block(&mut self, block: &[Stmt]) -> Result<Flow, RuntimeError> {
        let depth = self.control.len();
        let flow = self.block_inner(block);
        self.control.truncate(depth);
        flow
    }

    fn block_inner(&mut self, block: &[Stmt]) -> Result<Flow, RuntimeError> {
        for stmt in block {
            if let Flow::Return(v) = self.stmt(stmt)? {
                return Ok(Flow::Return(v));
            }
            let guards = std::mem::take(&mut self.guards);
            self.control.extend(guards);
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, stmt: &Stmt) -> Result<Flow, RuntimeError> {
        let line = stmt.span.line;
        match &stmt.kind {
            StmtKind::StepComment { step, .. } => {
                // The step id only moves forward so that trace steps never
                // decrease, even when a loop revisits an earlier step.
                self.step_id = Some(self.step_id.map_or(*step, |cur| cur.max(*step)));
                Ok(Flow::Normal)
            }
            StmtKind::Comment(_) => Ok(Flow::Normal),
            StmtKind::Assign { target, value } => {
                self.tick(line)?;
                if target == PAD {
                    return Err(err(line, "placeholder <pad> cannot be executed"));
                }
                let (v, deps) = self.eval(value, line)?;
                let seq = self.emit(
                    line,
                    EventKind::Assign,
                    Some(target.clone()),
                    None,
                    Vec::new(),
                    v.clone(),
                    deps,
                );
                self.env.insert(target.clone(), (v, Some(seq)));
                Ok(Flow::Normal)
            }
            StmtKind::Return(e) => {
                self.tick(line)?;
                let (v, deps) = self.eval(e, line)?;
                self.emit(
                    line,
                    EventKind::Return,
                    None,
                    None,
                    Vec::new(),
                    v.clone(),
                    deps,
                );
                Ok(Flow::Return(v))
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.tick(line)?;
                let (v, deps) = self.eval(cond, line)?;
                let Value::Bool(taken) = v else {
                    return Err(type_error(
                        line,
                        format!("if condition must be Bool, got {}", v.ty()),
                    ));
                };
                let seq = self.emit(line, EventKind::Branch, None, None, Vec::new(), v, deps);
                self.control.push(seq);
                let flow = if taken {
                    self.block(then_block)
                } else if let Some(b) = else_block {
                    self.block(b)
                } else {
                    Ok(Flow::Normal)
                };
                self.control.pop();
                let flow = flow?;
                let exits = can_return(then_block) || else_block.as_deref().is_some_and(can_return);
                if matches!(flow, Flow::Normal) && exits {
                    self.guards = vec![seq];
                }
                Ok(flow)
            }
            StmtKind::For { var, iter, body } => {
                self.tick(line)?;
                if var == PAD {
                    return Err(err(line, "placeholder <pad> cannot be executed"));
                }
                let (v, deps) = self.eval(iter, line)?;
                let Value::List(items) = v else {
                    return Err(type_error(
                        line,
                        format!("for loop needs a List, got {}", v.ty()),
                    ));
                };
                for item in items {
                    self.tick(line)?;
                    let seq = self.emit(
                        line,
                        EventKind::LoopIter,
                        Some(var.clone()),
                        None,
                        Vec::new(),
                        item.clone(),
                        deps.clone(),
                    );
                    self.env.insert(var.clone(), (item, Some(seq)));
                    self.control.push(seq);
                    let flow = self.block(body);
                    self.control.pop();
                    if let Flow::Return(r) = flow? {
                        return Ok(Flow::Return(r));
                    }
                }
                if can_return(body) {
                    self.guards = deps;
                }
                Ok(Flow::Normal)
            }
        }
    }

    fn eval(&mut self, e: &Expr, line: u32) -> Result<(Value, Deps), RuntimeError> {
        match &e.kind {
            ExprKind::Str(s) => Ok((Value::Text(s.clone()), Vec::new())),
            ExprKind::Num(n) => Ok((Value::number(*n), Vec::new())),
            ExprKind::Bool(b) => Ok((Value::Bool(*b), Vec::new())),
            ExprKind::Pad => Err(err(line, "placeholder <pad> cannot be executed")),
            ExprKind::Var(name) => match self.env.get(name) {
                Some((v, def)) => Ok((v.clone(), def.iter().copied().collect())),
                None => Err(err(line, format!("undefined name '{name}'"))),
            },
            ExprKind::Index { target, index } => {
                let (t, mut deps) = self.eval(target, line)?;
                let (i, d2) = self.eval(index, line)?;
                deps.extend(d2);
                Ok((index_value(&t, &i, line)?, deps))
            }
            ExprKind::Unary { op, operand } => {
                let (v, deps) = self.eval(operand, line)?;
                let out = match (op, v) {
                    (UnaryOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    (UnaryOp::Neg, Value::Number(n)) => Value::number(-n),
                    (UnaryOp::Not, v) => {
                        return Err(type_error(
                            line,
                            format!("'not' needs Bool, got {}", v.ty()),
                        ))
                    }
                    (UnaryOp::Neg, v) => {
                        return Err(type_error(
                            line,
                            format!("'-' needs Number, got {}", v.ty()),
                        ))
                    }
                };
                Ok((out, deps))
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let (a, mut deps) = self.eval(lhs, line)?;
                let (b, d2) = self.eval(rhs, line)?;
                deps.extend(d2);
                Ok((binary(*op, a, b, line)?, deps))
            }
            ExprKind::Call { callee, args } => {
                let mut vals = Vec::with_capacity(args.len());
                let mut deps = Vec::new();
                for a in args {
                    let (v, d) = self.eval(a, line)?;
                    vals.push(v);
                    deps.extend(d);
                }
                let value = self.call(callee, &vals, line)?;
                let seq = self.emit(
                    line,
                    EventKind::PrimitiveCall,
                    None,
                    Some(callee.clone()),
                    vals,
                    value.clone(),
                    deps,
                );
                Ok((value, vec![seq]))
            }
        }
    }

    fn call(&mut self, callee: &str, args: &[Value], line: u32) -> Result<Value, RuntimeError> {
        let Some(sig) = signature(callee) else {
            return Err(err(line, format!("undefined function '{callee}'")));
        };
        if sig.params.len() != args.len() {
            return Err(type_error(
                line,
                format!(
                    "{callee} expects {} argument(s), got {}",
                    sig.params.len(),
                    args.len()
                ),
            ));
        }
        for (i, (want, got)) in sig.params.iter().zip(args).enumerate() {
            if *want != Ty::Unknown && *want != got.ty() {
                return Err(type_error(
                    line,
                    format!(
                        "argument {} of {callee} must be {want}, got {}",
                        i + 1,
                        got.ty()
                    ),
                ));
            }
        }
        let patch = |i: usize| -> &Patch {
            match &args[i] {
                Value::Patch(p) => p,
                _ => unreachable!("checked against signature"),
            }
        };
        let text = |i: usize| -> &str {
            match &args[i] {
                Value::Text(s) => s,
                _ => unreachable!("checked against signature"),
            }
        };
        let scene = self.scene;
        let out = match callee {
            "find" => Value::List(
                self.backend
                    .find(scene, patch(0), text(1))
                    .into_iter()
                    .map(Value::Patch)
                    .collect(),
            ),
            "exists" => Value::Bool(self.backend.exists(scene, patch(0), text(1))),
            "query" => Value::Text(self.backend.query(scene, patch(0), text(1))),
            "verify_property" => {
                Value::Bool(
                    self.backend
                        .verify_property(scene, patch(0), text(1), text(2)),
                )
            }
            "related" => Value::Bool(self.backend.related(scene, patch(0), text(1), patch(2))),
            "count" => match &args[0] {
                Value::List(items) => Value::number(Decimal::from(items.len())),
                _ => unreachable!(),
            },
            "get" => index_value(&args[0], &args[1], line)?,
            "hcenter" => {
                let b = patch(0).bbox;
                Value::number(Decimal::from(b.x) + Decimal::from(b.w) / Decimal::TWO)
            }
            "vcenter" => {
                let b = patch(0).bbox;
                Value::number(Decimal::from(b.y) + Decimal::from(b.h) / Decimal::TWO)
            }
            "width" => Value::number(Decimal::from(patch(0).bbox.w)),
            "height" => Value::number(Decimal::from(patch(0).bbox.h)),
            other => return Err(err(line, format!("undefined function '{other}'"))),
        };
        Ok(out)
    }
}

fn index_value(target: &Value, index: &Value, line: u32) -> Result<Value, RuntimeError> {
    let Value::List(items) = target else {
        return Err(type_error(line, format!("cannot index {}", target.ty())));
    };
    let Value::Number(n) = index else {
        return Err(type_error(
            line,
            format!("index must be Number, got {}", index.ty()),
        ));
    };
    if !n.fract().is_zero() {
        return Err(type_error(
            line,
            format!("index must be an integer, got {n}"),
        ));
    }
    let len = items.len() as i64;
    let raw = n.to_i64().unwrap_or(i64::MAX);
    let idx = if raw < 0 { raw + len } else { raw };
    if idx < 0 || idx >= len {
        return Err(err(
            line,
            format!("index out of range: index {n}, length {len}"),
        ));
    }
    Ok(items[idx as usize].clone())
}

fn binary(op: BinOp, a: Value, b: Value, line: u32) -> Result<Value, RuntimeError> {
    use Value::*;
    let mismatch = |a: &Value, b: &Value| {
        type_error(
            line,
            format!(
                "unsupported operand types for '{}': {} and {}",
                op.symbol(),
                a.ty(),
                b.ty()
            ),
        )
    };
    let overflow = || err(line, "arithmetic overflow");
    Ok(match op {
        BinOp::Eq => Bool(a == b),
        BinOp::Ne => Bool(a != b),
        BinOp::And | BinOp::Or => match (&a, &b) {
            (Bool(x), Bool(y)) => Bool(if op == BinOp::And { *x && *y } else { *x || *y }),
            _ => return Err(mismatch(&a, &b)),
        },
        BinOp::Add => match (a, b) {
            (Number(x), Number(y)) => Value::number(x.checked_add(y).ok_or_else(overflow)?),
            (Text(x), Text(y)) => Text(x + &y),
            (List(mut x), List(y)) => {
                if let (Some(l), Some(r)) = (x.first(), y.first()) {
                    if l.ty() != r.ty() {
                        return Err(type_error(
                            line,
                            "cannot concatenate lists of different types",
                        ));
                    }
                }
                x.extend(y);
                List(x)
            }
            (a, b) => return Err(mismatch(&a, &b)),
        },
        BinOp::Sub | BinOp::Mul | BinOp::Div => match (&a, &b) {
            (Number(x), Number(y)) => {
                let r = match op {
                    BinOp::Sub => x.checked_sub(*y),
                    BinOp::Mul => x.checked_mul(*y),
                    _ => {
                        if y.is_zero() {
                            return Err(err(line, "division by zero"));
                        }
                        x.checked_div(*y)
                    }
                };
                Value::number(r.ok_or_else(overflow)?)
            }
            _ => return Err(mismatch(&a, &b)),
        },
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match (&a, &b) {
                (Number(x), Number(y)) => x.cmp(y),
                (Text(x), Text(y)) => x.cmp(y),
                _ => return Err(mismatch(&a, &b)),
            };
            Bool(match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            })
        }
    })
}
