//! Expression evaluation, statement execution and runtime pattern compilation.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use crate::ast::Expr;
use crate::ast::{BinOp, Block, ExprKind, PatternAst, ScriptRule, Stmt, StmtKind, UnOp};
use crate::graph::{DesignGraph, GraphDelta};
use crate::matcher::{self, Match, Pattern};
use crate::program::Namespace;
use crate::value::{binary, InstanceId, Value};

use super::{Engine, GraphRef, RtResult, RuntimeError, Scope};

/// Control flow out of a statement.
#[derive(Clone, Debug, PartialEq)]
pub enum Flow {
    Next,
    Return(Value),
}

fn expr_err(msg: impl Into<String>) -> RuntimeError {
    RuntimeError::Expr(msg.into())
}

fn instance(v: &Value, what: &str) -> RtResult<InstanceId> {
    match v {
        Value::Ref(Some(id)) => Ok(*id),
        Value::Ref(None) => Err(expr_err(format!("{what} is null"))),
        other => Err(expr_err(format!(
            "{what} is a {}, expected an instance",
            other.type_name()
        ))),
    }
}

impl Engine<'_> {
    pub(crate) fn type_key(&self, scope: &Scope, name: &str) -> RtResult<String> {
        self.program
            .resolve(scope.module, Namespace::Type, name)
            .map(|s| s.key.clone())
            .map_err(|(_, m)| expr_err(m))
    }

    /// Build a matcher pattern. Untyped nodes and undeclared edge endpoints are
    /// pre-bound from `scope`; `None` if one of them is null (nothing can match).
    pub(crate) fn compile_pattern(
        &self,
        g: &DesignGraph,
        p: &PatternAst,
        scope: &Scope,
    ) -> RtResult<Option<Pattern>> {
        let mut pat = Pattern::default();
        let prebind = |pat: &mut Pattern, name: &str| -> RtResult<bool> {
            match scope.get(name) {
                Some(Value::Ref(Some(id))) => {
                    // A dead id keeps an empty type; the matcher reports it as missing.
                    let ty = g.class_of(*id).unwrap_or("").to_string();
                    pat.var(name, &ty);
                    pat.prebind(name, *id);
                    Ok(true)
                }
                Some(Value::Ref(None)) => Ok(false),
                Some(other) => Err(expr_err(format!(
                    "`{name}` is a {}, expected an instance",
                    other.type_name()
                ))),
                None => Err(expr_err(format!("unknown name `{name}`"))),
            }
        };
        for n in &p.nodes {
            match &n.ty {
                Some(t) => {
                    let key = self.type_key(scope, t)?;
                    pat.var(&n.name, &key);
                }
                None => {
                    if !prebind(&mut pat, &n.name)? {
                        return Ok(None);
                    }
                }
            }
        }
        for e in &p.edges {
            for end in [&e.src, &e.dst] {
                if pat.index_of(end).is_none() && !prebind(&mut pat, end)? {
                    return Ok(None);
                }
            }
            let (s, d) = (
                pat.index_of(&e.src).expect("bound"),
                pat.index_of(&e.dst).expect("bound"),
            );
            pat.edge(s, &e.label, d);
        }
        Ok(Some(pat))
    }

    /// Matches of `p` whose guards hold, in matcher order; at most one if `first_only`.
    pub(crate) fn matches(
        &mut self,
        g: &DesignGraph,
        p: &PatternAst,
        scope: &mut Scope,
        first_only: bool,
    ) -> RtResult<Option<(Pattern, Vec<Match>)>> {
        let Some(pat) = self.compile_pattern(g, p, scope)? else {
            return Ok(None);
        };
        let mut found = Vec::new();
        let guards = &p.guards;
        let program = self.program;
        let schema = &program.schema;
        let pat_ref = &pat;
        let result = matcher::search(
            pat_ref,
            g,
            schema,
            |m| {
                if guards.is_empty() {
                    return Ok(true);
                }
                scope.push();
                for (n, id) in m.binding(pat_ref) {
                    scope.bind(&n, Value::Ref(Some(id)));
                }
                let mut ok = Ok(true);
                for guard in guards {
                    match self.eval(GraphRef::Frozen(g), guard, scope) {
                        Ok(Value::Bool(true)) => {}
                        Ok(Value::Bool(false)) => {
                            ok = Ok(false);
                            break;
                        }
                        Ok(v) => {
                            ok = Err(expr_err(format!(
                                "pattern guard produced {}",
                                v.type_name()
                            )));
                            break;
                        }
                        Err(e) => {
                            ok = Err(e);
                            break;
                        }
                    }
                }
                scope.pop();
                ok
            },
            |m| {
                found.push(m.clone());
                if first_only {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        );
        result?;
        Ok(Some((pat, found)))
    }

    pub(crate) fn first_binding(
        &mut self,
        g: &DesignGraph,
        p: &PatternAst,
        scope: &mut Scope,
    ) -> RtResult<Option<BTreeMap<String, InstanceId>>> {
        Ok(self
            .matches(g, p, scope, true)?
            .and_then(|(pat, ms)| ms.into_iter().next().map(|m| m.binding(&pat))))
    }

    // -- expressions --------------------------------------------------------

    pub fn eval(&mut self, mut g: GraphRef<'_>, e: &Expr, scope: &mut Scope) -> RtResult<Value> {
        Ok(match &e.kind {
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Real(r) => Value::Real(*r),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Null => Value::Ref(None),
            ExprKind::Name(n) => scope
                .get(n)
                .cloned()
                .ok_or_else(|| expr_err(format!("unknown name `{n}`")))?,
            ExprKind::This => Value::Ref(Some(
                scope
                    .this
                    .ok_or_else(|| expr_err("`this` outside a method"))?,
            )),
            ExprKind::Field(obj, field) => {
                let v = self.eval(g.reborrow(), obj, scope)?;
                let id = instance(&v, "field receiver")?;
                g.get()
                    .attr(id, field)
                    .cloned()
                    .ok_or_else(|| expr_err(format!("instance #{id} has no field `{field}`")))?
            }
            ExprKind::Call {
                receiver,
                method,
                args,
            } => {
                let recv = self.eval(g.reborrow(), receiver, scope)?;
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(g.reborrow(), a, scope)?);
                }
                if let Value::List(items) = &recv {
                    return list_builtin(items, method, &vals);
                }
                let id = instance(&recv, "method receiver")?;
                let caller = scope.class.clone();
                match g {
                    GraphRef::Live(live) => {
                        self.call_method(live, id, method, vals, caller.as_deref())?
                    }
                    GraphRef::Frozen(frozen) => {
                        let mut scratch = frozen.clone();
                        self.call_method(&mut scratch, id, method, vals, caller.as_deref())?
                    }
                }
            }
            ExprKind::New { class, args } => {
                let key = self.type_key(scope, class)?;
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(g.reborrow(), a, scope)?);
                }
                let id = match g {
                    GraphRef::Live(live) => self.construct(live, &key, vals)?,
                    GraphRef::Frozen(frozen) => {
                        let mut scratch = frozen.clone();
                        self.construct(&mut scratch, &key, vals)?
                    }
                };
                Value::Ref(Some(id))
            }
            ExprKind::Unary(op, x) => match (op, self.eval(g, x, scope)?) {
                (UnOp::Neg, Value::Int(i)) => Value::Int(
                    i.checked_neg()
                        .ok_or_else(|| expr_err("integer overflow"))?,
                ),
                (UnOp::Neg, Value::Real(r)) => Value::Real(-r),
                (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                (op, v) => {
                    return Err(expr_err(format!(
                        "cannot apply {op:?} to {}",
                        v.type_name()
                    )))
                }
            },
            ExprKind::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
                let lv = self.eval(g.reborrow(), l, scope)?;
                match (op, &lv) {
                    (BinOp::And, Value::Bool(false)) => Value::Bool(false),
                    (BinOp::Or, Value::Bool(true)) => Value::Bool(true),
                    (_, Value::Bool(_)) => {
                        let rv = self.eval(g, r, scope)?;
                        binary(*op, &lv, &rv).map_err(expr_err)?
                    }
                    _ => return Err(expr_err(format!("`{}` needs bool operands", op.symbol()))),
                }
            }
            ExprKind::Binary(op, l, r) => {
                let lv = self.eval(g.reborrow(), l, scope)?;
                let rv = self.eval(g, r, scope)?;
                binary(*op, &lv, &rv).map_err(expr_err)?
            }
            ExprKind::Count(p) => {
                let n = self
                    .matches(g.get(), p, scope, false)?
                    .map_or(0, |(_, ms)| ms.len());
                Value::Int(i64::try_from(n).map_err(|_| expr_err("count overflow"))?)
            }
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(g.reborrow(), i, scope)?);
                }
                Value::List(out)
            }
        })
    }

    // -- statements ---------------------------------------------------------

    /// Run a script rule atomically: on error the graph is restored.
    pub fn apply_script_rule(
        &mut self,
        g: &mut DesignGraph,
        rule: &ScriptRule,
        scope: &mut Scope,
    ) -> RtResult<GraphDelta> {
        let snapshot = g.clone();
        scope.push();
        let r = self.exec_block(g, &rule.body, scope);
        scope.pop();
        match r {
            Ok(_) => {
                let delta = GraphDelta::between(&snapshot, g);
                debug_assert!(
                    delta.replay(&snapshot).as_ref() == Ok(&*g),
                    "script delta does not replay"
                );
                Ok(delta)
            }
            Err(e) => {
                g.restore(snapshot);
                Err(e)
            }
        }
    }

    pub(crate) fn exec_block(
        &mut self,
        g: &mut DesignGraph,
        block: &Block,
        scope: &mut Scope,
    ) -> RtResult<Flow> {
        scope.push();
        let mut flow = Ok(Flow::Next);
        for s in block {
            match self.exec(g, s, scope) {
                Ok(Flow::Next) => {}
                other => {
                    flow = other;
                    break;
                }
            }
        }
        scope.pop();
        flow
    }

    fn exec(&mut self, g: &mut DesignGraph, s: &Stmt, scope: &mut Scope) -> RtResult<Flow> {
        let program = self.program;
        let schema = &program.schema;
        match &s.kind {
            StmtKind::Let { name, ty, value } => {
                let mut v = self.eval(GraphRef::Live(g), value, scope)?;
                if let Some(t) = ty {
                    let t = program
                        .resolve_type(scope.module, t)
                        .map_err(|(_, m)| expr_err(m))?;
                    let found = v.type_name();
                    v = g.coerce(schema, v, &t).ok_or_else(|| {
                        expr_err(format!("`{name}` declared {t} but given {found}"))
                    })?;
                }
                scope.bind(name, v);
            }
            StmtKind::Assign { name, value } => {
                let mut v = self.eval(GraphRef::Live(g), value, scope)?;
                if let (Some(Value::Real(_)), Value::Int(i)) = (scope.get(name), &v) {
                    v = Value::Real(*i as f64);
                }
                if !scope.assign(name, v) {
                    return Err(expr_err(format!("unknown name `{name}`")));
                }
            }
            StmtKind::SetField {
                target,
                field,
                value,
            } => {
                let t = self.eval(GraphRef::Live(g), target, scope)?;
                let v = self.eval(GraphRef::Live(g), value, scope)?;
                let id = instance(&t, "assignment target")?;
                g.set_attr(schema, id, field, v)?;
            }
            StmtKind::Link { src, label, dst } => {
                let a = self.eval(GraphRef::Live(g), src, scope)?;
                let b = self.eval(GraphRef::Live(g), dst, scope)?;
                g.link(
                    instance(&a, "link source")?,
                    label,
                    instance(&b, "link target")?,
                )?;
            }
            StmtKind::Unlink { src, label, dst } => {
                let a = instance(&self.eval(GraphRef::Live(g), src, scope)?, "unlink source")?;
                let b = instance(&self.eval(GraphRef::Live(g), dst, scope)?, "unlink target")?;
                if g.unlink_triple(a, label, b).is_none() {
                    return Err(expr_err(format!("no `{label}` link from #{a} to #{b}")));
                }
            }
            StmtKind::Delete(e) => {
                let id = instance(&self.eval(GraphRef::Live(g), e, scope)?, "deleted value")?;
                g.delete_instance(id)?;
            }
            StmtKind::If { cond, then, els } => match self.eval(GraphRef::Live(g), cond, scope)? {
                Value::Bool(true) => return self.exec_block(g, then, scope),
                Value::Bool(false) => {
                    if let Some(b) = els {
                        return self.exec_block(g, b, scope);
                    }
                }
                v => return Err(expr_err(format!("condition produced {}", v.type_name()))),
            },
            StmtKind::ForRange {
                var,
                from,
                to,
                inclusive,
                body,
            } => {
                let lo = self.eval(GraphRef::Live(g), from, scope)?;
                let hi = self.eval(GraphRef::Live(g), to, scope)?;
                let (Value::Int(lo), Value::Int(hi)) = (lo, hi) else {
                    return Err(expr_err("range bounds must be integers"));
                };
                let end = if *inclusive { hi.saturating_add(1) } else { hi };
                let mut i = lo;
                while i < end {
                    self.tick()?;
                    scope.push();
                    scope.bind(var, Value::Int(i));
                    let r = self.exec_block(g, body, scope);
                    scope.pop();
                    if let Flow::Return(v) = r? {
                        return Ok(Flow::Return(v));
                    }
                    i += 1;
                }
            }
            StmtKind::ForMatch { pattern, body } => {
                // Matches come from the state before the loop; ones whose instances
                // were deleted by an earlier iteration are skipped.
                let Some((pat, ms)) = self.matches(g, pattern, scope, false)? else {
                    return Ok(Flow::Next);
                };
                for m in ms {
                    if !m.nodes.iter().all(|id| g.contains(*id)) {
                        continue;
                    }
                    self.tick()?;
                    scope.push();
                    for (n, id) in m.binding(&pat) {
                        scope.bind(&n, Value::Ref(Some(id)));
                    }
                    let r = self.exec_block(g, body, scope);
                    scope.pop();
                    if let Flow::Return(v) = r? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(GraphRef::Live(g), e, scope)?,
                    None => Value::Void,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Expr(e) => {
                self.eval(GraphRef::Live(g), e, scope)?;
            }
        }
        Ok(Flow::Next)
    }
}

fn list_builtin(items: &[Value], method: &str, args: &[Value]) -> RtResult<Value> {
    match (method, args) {
        ("size", []) => Ok(Value::Int(items.len() as i64)),
        ("get", [Value::Int(i)]) => usize::try_from(*i)
            .ok()
            .and_then(|i| items.get(i))
            .cloned()
            .ok_or_else(|| {
                expr_err(format!(
                    "list index {i} out of bounds for size {}",
                    items.len()
                ))
            }),
        _ => Err(expr_err(format!(
            "lists have no method `{method}` with {} argument(s)",
            args.len()
        ))),
    }
}
