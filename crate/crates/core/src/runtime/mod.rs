//! Execution of production systems: activities, decisions, method dispatch and the step budget.

mod eval;
pub mod trace;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::{Activity, ActivityNode, BranchLabel, MethodBody, NodeKind, Rule, START_NODE};
use crate::graph::{DesignGraph, GraphError};
use crate::matcher::MatchError;
use crate::program::{local_name, Namespace, Program};
use crate::schema::{Dispatch, ModuleId, ROOT_MODULE};
use crate::value::{InstanceId, Type, Value};

pub use eval::Flow;
pub use trace::{Outcome, TraceEvent};

pub const DEFAULT_BUDGET: u64 = 100_000;
/// Nested method and constructor calls beyond this depth fail.
pub const MAX_CALL_DEPTH: usize = 200;
const EXEC_STACK_BYTES: usize = 256 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("step budget of {budget} exhausted")]
    StepLimitExceeded { budget: u64 },
    #[error("call depth limit of {limit} exceeded")]
    CallDepthExceeded { limit: usize },
    #[error("required rule `{rule}` found no match")]
    RequiredRuleFailed { rule: String },
    #[error("expression error: {0}")]
    Expr(String),
    #[error("`{class}` has no method `{method}` with {arity} argument(s)")]
    UnknownMethod {
        class: String,
        method: String,
        arity: usize,
    },
    #[error("`{class}.{method}` resolves only to an abstract signature")]
    AbstractCall { class: String, method: String },
    #[error("`{class}.{method}` is private")]
    VisibilityViolation { class: String, method: String },
    #[error("method `{method}` finished without setting its return value")]
    ReturnUnset { method: String },
    #[error("return type mismatch: {0}")]
    ReturnTypeMismatch(String),
    #[error("`{0}` cannot be instantiated")]
    AbstractInstantiation(String),
    #[error("`{class}` has no constructor with {arity} argument(s)")]
    UnknownConstructor { class: String, arity: usize },
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("pre-bound instance #{0} does not exist")]
    PreBoundMissing(InstanceId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl RuntimeError {
    /// Stable variant name for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            RuntimeError::StepLimitExceeded { .. } => "StepLimitExceeded",
            RuntimeError::CallDepthExceeded { .. } => "CallDepthExceeded",
            RuntimeError::RequiredRuleFailed { .. } => "RequiredRuleFailed",
            RuntimeError::Expr(_) => "ExpressionError",
            RuntimeError::UnknownMethod { .. } => "UnknownMethod",
            RuntimeError::AbstractCall { .. } => "AbstractCall",
            RuntimeError::VisibilityViolation { .. } => "VisibilityViolation",
            RuntimeError::ReturnUnset { .. } => "ReturnUnset",
            RuntimeError::ReturnTypeMismatch(_) => "ReturnTypeMismatch",
            RuntimeError::AbstractInstantiation(_) => "AbstractInstantiation",
            RuntimeError::UnknownConstructor { .. } => "UnknownConstructor",
            RuntimeError::UnknownActivity(_) => "UnknownActivity",
            RuntimeError::UnknownRule(_) => "UnknownRule",
            RuntimeError::PreBoundMissing(_) => "PreBoundMissing",
            RuntimeError::Graph(_) => "GraphError",
        }
    }
}

impl From<MatchError<RuntimeError>> for RuntimeError {
    fn from(e: MatchError<RuntimeError>) -> Self {
        match e {
            MatchError::PreBoundMissing(id) => RuntimeError::PreBoundMissing(id),
            MatchError::Guard(e) => e,
        }
    }
}

pub type RtResult<T> = Result<T, RuntimeError>;

/// Continuation after a counted activity node.
enum Next<'a> {
    Goto(&'a str),
    Done(Value),
    /// Fail after the node's event is recorded.
    Raise(RuntimeError),
}

/// Runtime name bindings of one activity or method frame.
#[derive(Clone, Debug)]
pub struct Scope {
    frames: Vec<BTreeMap<String, Value>>,
    pub this: Option<InstanceId>,
    /// Declaring class of the running method; grants private access.
    pub class: Option<String>,
    pub module: ModuleId,
}

impl Scope {
    pub fn new(module: ModuleId) -> Self {
        Scope {
            frames: vec![BTreeMap::new()],
            this: None,
            class: None,
            module,
        }
    }

    /// Fresh frame for a method body: `this` and the parameters only.
    pub fn method(module: ModuleId, class: &str, this: InstanceId) -> Self {
        let mut s = Scope::new(module);
        s.this = Some(this);
        s.class = Some(class.to_string());
        s.bind("this", Value::Ref(Some(this)));
        s.push();
        s
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.frames.iter().rev().find_map(|f| f.get(name))
    }

    pub fn bind(&mut self, name: &str, v: Value) {
        self.frames
            .last_mut()
            .expect("frame")
            .insert(name.to_string(), v);
    }

    /// Overwrite the innermost existing binding; false if unbound.
    pub fn assign(&mut self, name: &str, v: Value) -> bool {
        for f in self.frames.iter_mut().rev() {
            if let Some(slot) = f.get_mut(name) {
                *slot = v;
                return true;
            }
        }
        false
    }

    pub fn push(&mut self) {
        self.frames.push(BTreeMap::new());
    }

    pub fn pop(&mut self) {
        self.frames.pop();
    }
}

/// Graph access during evaluation. Method calls made while `Frozen` run on a
/// scratch copy, so guards and decisions never mutate the design graph.
pub enum GraphRef<'g> {
    Live(&'g mut DesignGraph),
    Frozen(&'g DesignGraph),
}

impl GraphRef<'_> {
    pub fn get(&self) -> &DesignGraph {
        match self {
            GraphRef::Live(g) => g,
            GraphRef::Frozen(g) => g,
        }
    }

    pub fn reborrow(&mut self) -> GraphRef<'_> {
        match self {
            GraphRef::Live(g) => GraphRef::Live(g),
            GraphRef::Frozen(g) => GraphRef::Frozen(g),
        }
    }
}

/// The interpreter. Owns the step counter and trace of one run.
pub struct Engine<'p> {
    pub program: &'p Program,
    pub budget: u64,
    steps: u64,
    depth: usize,
    trace: Vec<TraceEvent>,
}

/// Successful run.
#[derive(Debug)]
pub struct Execution {
    pub graph: DesignGraph,
    pub trace: Vec<TraceEvent>,
    pub steps: u64,
}

/// Failed run: the graph as of the failure (the failing rule rolled back) and the trace so far.
#[derive(Debug)]
pub struct ExecutionFailure {
    pub error: RuntimeError,
    pub graph: DesignGraph,
    pub trace: Vec<TraceEvent>,
}

/// Run `entry` (an activity name visible in the root module) on `seed`.
pub fn execute(
    program: &Program,
    entry: &str,
    seed: DesignGraph,
    budget: u64,
) -> Result<Execution, Box<ExecutionFailure>> {
    on_deep_stack(|| {
        let mut engine = Engine::new(program, budget);
        let mut graph = seed;
        graph.set_multi_edges(program.schema.multi_edges.clone());
        match engine.run_entry(&mut graph, entry) {
            Ok(()) => Ok(Execution {
                graph,
                steps: engine.steps,
                trace: engine.trace,
            }),
            Err(error) => Err(Box::new(ExecutionFailure {
                error,
                graph,
                trace: engine.trace,
            })),
        }
    })
}

thread_local! {
    static DEEP_STACK: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// Run `f` on a thread whose stack fits `MAX_CALL_DEPTH` nested calls, unless already on one.
fn on_deep_stack<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    if DEEP_STACK.with(|d| d.get()) {
        return f();
    }
    std::thread::scope(|s| {
        let handle = std::thread::Builder::new()
            .stack_size(EXEC_STACK_BYTES)
            .spawn_scoped(s, || {
                DEEP_STACK.with(|d| d.set(true));
                f()
            })
            .expect("spawn execution thread");
        handle
            .join()
            .unwrap_or_else(|p| std::panic::resume_unwind(p))
    })
}

impl<'p> Engine<'p> {
    pub fn new(program: &'p Program, budget: u64) -> Self {
        Engine {
            program,
            budget,
            steps: 0,
            depth: 0,
            trace: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    /// Count one step; the step after the budget fails.
    pub(crate) fn tick(&mut self) -> RtResult<u64> {
        if self.steps >= self.budget {
            return Err(RuntimeError::StepLimitExceeded {
                budget: self.budget,
            });
        }
        self.steps += 1;
        Ok(self.steps)
    }

    pub(crate) fn emit(&mut self, e: TraceEvent) {
        self.trace.push(e);
    }

    fn run_entry(&mut self, g: &mut DesignGraph, entry: &str) -> RtResult<()> {
        let sym = match self
            .program
            .resolve(ROOT_MODULE, Namespace::Activity, entry)
        {
            Ok(s) => s.key.clone(),
            Err(_) => return Err(RuntimeError::UnknownActivity(entry.to_string())),
        };
        self.run_named_activity(g, &sym)
    }

    fn run_named_activity(&mut self, g: &mut DesignGraph, key: &str) -> RtResult<()> {
        let program = self.program;
        let entry = program
            .activities
            .get(key)
            .ok_or_else(|| RuntimeError::UnknownActivity(key.to_string()))?;
        let mut scope = Scope::new(entry.module);
        self.run_activity(g, &entry.activity, key, &mut scope, None)
            .map(|_| ())
    }

    /// Walk an activity from its start node. Returns the value of a return
    /// node, if one was reached. `method` names the body being run, if any.
    pub(crate) fn run_activity(
        &mut self,
        g: &mut DesignGraph,
        act: &Activity,
        label: &str,
        scope: &mut Scope,
        method: Option<&str>,
    ) -> RtResult<Option<Value>> {
        let start = act
            .start()
            .ok_or_else(|| RuntimeError::Expr(format!("activity `{label}` has no start node")))?;
        let mut cur: &str = match &start.kind {
            NodeKind::Start { next } => next,
            _ => START_NODE,
        };
        loop {
            let node = act.node(cur).ok_or_else(|| {
                RuntimeError::Expr(format!("activity `{label}` has no node `{cur}`"))
            })?;
            match &node.kind {
                NodeKind::Start { next } => {
                    cur = next;
                    continue;
                }
                NodeKind::End => return Ok(None),
                _ => {}
            }
            // The node's event takes its slot now so that events of nested
            // method calls follow it in step order.
            let step = self.tick()?;
            let slot = self.trace.len();
            self.emit(TraceEvent::new(step, label, &node.name, Outcome::Failed));
            match self.run_node(g, act, label, node, scope, method) {
                Ok((outcome, ev, next)) => {
                    let e = &mut self.trace[slot];
                    e.outcome = outcome;
                    e.rule = ev.rule;
                    e.label = ev.label;
                    e.delta = ev.delta;
                    match next {
                        Next::Goto(n) => cur = n,
                        Next::Done(v) => return Ok(Some(v)),
                        Next::Raise(err) => return Err(err),
                    }
                }
                Err(err) => {
                    self.trace[slot].label = Some(err.to_string());
                    return Err(err);
                }
            }
        }
    }

    /// Execute one counted node. Returns its outcome, the event details and where to continue.
    fn run_node<'a>(
        &mut self,
        g: &mut DesignGraph,
        act: &'a Activity,
        label: &str,
        node: &'a ActivityNode,
        scope: &mut Scope,
        method: Option<&str>,
    ) -> RtResult<(Outcome, TraceEvent, Next<'a>)> {
        let program = self.program;
        let mut ev = TraceEvent::new(0, label, &node.name, Outcome::Failed);
        match &node.kind {
            NodeKind::Start { .. } | NodeKind::End => unreachable!("not counted"),
            NodeKind::Apply {
                rule,
                required,
                next,
            } => {
                let (rule_ast, rule_key, mut fresh) = match act.local_rule(rule) {
                    Some(r) => (r, rule.clone(), None),
                    None => {
                        let sym = program
                            .resolve(scope.module, Namespace::Rule, rule)
                            .map_err(|_| RuntimeError::UnknownRule(rule.clone()))?;
                        debug_assert!(sym.module == scope.module || sym.exported);
                        let entry = &program.rules[&sym.key];
                        (
                            &entry.rule,
                            entry.key.clone(),
                            Some(Scope::new(entry.module)),
                        )
                    }
                };
                let rule_scope = fresh.as_mut().unwrap_or(scope);
                let applied = self.apply_rule(g, rule_ast, rule_scope)?;
                ev.rule = Some(rule_key);
                ev.delta = applied.as_ref().map(|d| d.summary());
                let outcome = if applied.is_some() {
                    Outcome::Applied
                } else {
                    Outcome::NoMatch
                };
                let next = if applied.is_none() && *required {
                    Next::Raise(RuntimeError::RequiredRuleFailed { rule: rule.clone() })
                } else {
                    Next::Goto(next)
                };
                Ok((outcome, ev, next))
            }
            NodeKind::Sub { activity, next } => {
                let sym = program
                    .resolve(scope.module, Namespace::Activity, activity)
                    .map_err(|_| RuntimeError::UnknownActivity(activity.clone()))?;
                debug_assert!(sym.module == scope.module || sym.exported);
                let key = sym.key.clone();
                ev.label = Some(key.clone());
                self.run_named_activity(g, &key)?;
                Ok((Outcome::Entered, ev, Next::Goto(next)))
            }
            NodeKind::Decide { branches, .. } => {
                let chosen = self.evaluate_decision(g, &node.kind, scope)?;
                let target = branches
                    .iter()
                    .find(|b| b.label.as_str() == chosen && b.label != BranchLabel::Else)
                    .or_else(|| branches.iter().find(|b| b.label == BranchLabel::Else))
                    .ok_or_else(|| {
                        RuntimeError::Expr(format!(
                            "decision `{}` has no branch for `{chosen}`",
                            node.name
                        ))
                    })?;
                ev.label = Some(chosen);
                Ok((Outcome::Branch, ev, Next::Goto(&target.target)))
            }
            NodeKind::Return { pattern, value } => {
                let method_name = method.unwrap_or(label).to_string();
                scope.push();
                let r = self.return_value(g, pattern.as_ref(), value, scope, &method_name);
                scope.pop();
                let v = r?;
                ev.label = Some(v.to_string());
                Ok((Outcome::Returned, ev, Next::Done(v)))
            }
        }
    }

    fn return_value(
        &mut self,
        g: &mut DesignGraph,
        pattern: Option<&crate::ast::PatternAst>,
        value: &crate::ast::Expr,
        scope: &mut Scope,
        method_name: &str,
    ) -> RtResult<Value> {
        if let Some(p) = pattern {
            let Some(binding) = self.first_binding(g, p, scope)? else {
                return Err(RuntimeError::ReturnUnset {
                    method: method_name.to_string(),
                });
            };
            for (n, id) in binding {
                scope.bind(&n, Value::Ref(Some(id)));
            }
        }
        self.eval(GraphRef::Frozen(g), value, scope)
    }

    /// Evaluate a decision node's guard without mutating the graph; returns the branch label.
    pub fn evaluate_decision(
        &mut self,
        g: &DesignGraph,
        node: &NodeKind,
        scope: &mut Scope,
    ) -> RtResult<String> {
        let NodeKind::Decide { guard, .. } = node else {
            return Err(RuntimeError::Expr("not a decision node".to_string()));
        };
        match self.eval(GraphRef::Frozen(g), guard, scope)? {
            Value::Bool(b) => Ok(b.to_string()),
            Value::Str(s) => Ok(s),
            other => Err(RuntimeError::Expr(format!(
                "decision guard produced {}",
                other.type_name()
            ))),
        }
    }

    // -- methods and constructors -------------------------------------------

    /// Dispatch a method on `receiver` and run it. The graph is restored if the call fails.
    pub fn invoke_method(
        &mut self,
        g: &mut DesignGraph,
        receiver: InstanceId,
        method: &str,
        args: Vec<Value>,
        caller_class: Option<&str>,
    ) -> RtResult<Value> {
        on_deep_stack(|| {
            let snapshot = g.clone();
            let r = self.call_method(g, receiver, method, args, caller_class);
            if r.is_err() {
                g.restore(snapshot);
            }
            r
        })
    }

    /// Create an instance through a constructor. The graph is restored if construction fails.
    pub fn invoke_constructor(
        &mut self,
        g: &mut DesignGraph,
        class: &str,
        args: Vec<Value>,
    ) -> RtResult<InstanceId> {
        on_deep_stack(|| {
            let snapshot = g.clone();
            let r = self.construct(g, class, args);
            if r.is_err() {
                g.restore(snapshot);
            }
            r
        })
    }

    pub(crate) fn call_method(
        &mut self,
        g: &mut DesignGraph,
        receiver: InstanceId,
        method: &str,
        args: Vec<Value>,
        caller_class: Option<&str>,
    ) -> RtResult<Value> {
        let program = self.program;
        let schema = &program.schema;
        let class = g
            .class_of(receiver)
            .ok_or(RuntimeError::Graph(GraphError::UnknownInstance(receiver)))?
            .to_string();
        let (body, owner, sig) = match schema.dispatch(&class, method, args.len()) {
            Dispatch::Body { method, owner, sig } => (method, owner, sig),
            Dispatch::Abstract => {
                return Err(RuntimeError::AbstractCall {
                    class: local_name(&class).to_string(),
                    method: method.to_string(),
                })
            }
            Dispatch::Missing => {
                return Err(RuntimeError::UnknownMethod {
                    class: local_name(&class).to_string(),
                    method: method.to_string(),
                    arity: args.len(),
                })
            }
        };
        if sig.visibility == crate::ast::Visibility::Private
            && !schema.private_access(caller_class, &owner.key)
        {
            return Err(RuntimeError::VisibilityViolation {
                class: local_name(&owner.key).to_string(),
                method: method.to_string(),
            });
        }
        let name = format!("{}.{}", local_name(&owner.key), method);
        let params: Vec<(String, Type)> = body
            .params
            .iter()
            .map(|p| p.name.clone())
            .zip(sig.params.iter().cloned())
            .collect();
        let ret = sig.ret.clone();
        let v = self.run_body(
            g,
            &name,
            owner.module,
            &owner.key,
            receiver,
            &params,
            args,
            &body.body,
            &ret,
        )?;
        Ok(v)
    }

    /// Shared frame handling for method and constructor bodies.
    #[allow(clippy::too_many_arguments)]
    fn run_body(
        &mut self,
        g: &mut DesignGraph,
        name: &str,
        module: ModuleId,
        class: &str,
        receiver: InstanceId,
        params: &[(String, Type)],
        args: Vec<Value>,
        body: &MethodBody,
        ret: &Type,
    ) -> RtResult<Value> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(RuntimeError::CallDepthExceeded {
                limit: MAX_CALL_DEPTH,
            });
        }
        let step = self.tick()?;
        let mut ev = TraceEvent::new(step, name, "enter", Outcome::MethodEntered);
        ev.method = Some(name.to_string());
        ev.receiver = Some(receiver.0);
        self.emit(ev);

        let mut scope = Scope::method(module, class, receiver);
        for ((p, ty), a) in params.iter().zip(args) {
            let v = g
                .coerce(&self.program.schema, a.clone(), ty)
                .ok_or_else(|| {
                    RuntimeError::Expr(format!(
                        "argument `{p}` of `{name}` has type {}, expected {ty}",
                        a.type_name()
                    ))
                })?;
            scope.bind(p, v);
        }
        self.depth += 1;
        let result = match body {
            MethodBody::Abstract => Err(RuntimeError::AbstractCall {
                class: local_name(class).to_string(),
                method: name.to_string(),
            }),
            MethodBody::Script(block) => match self.exec_block(g, block, &mut scope) {
                Ok(Flow::Return(v)) => Ok(Some(v)),
                Ok(Flow::Next) => Ok(None),
                Err(e) => Err(e),
            },
            MethodBody::Activity(act) => self.run_activity(g, act, name, &mut scope, Some(name)),
        };
        self.depth -= 1;
        let value = match (result?, ret) {
            (_, Type::Void) => Value::Void,
            (None, _) => {
                return Err(RuntimeError::ReturnUnset {
                    method: name.to_string(),
                })
            }
            (Some(v), ty) => g
                .coerce(&self.program.schema, v.clone(), ty)
                .ok_or_else(|| {
                    RuntimeError::ReturnTypeMismatch(format!(
                        "`{name}` returned {} where {ty} was declared",
                        v.type_name()
                    ))
                })?,
        };

        let step = self.tick()?;
        let mut ev = TraceEvent::new(step, name, "return", Outcome::MethodReturned);
        ev.method = Some(name.to_string());
        ev.receiver = Some(receiver.0);
        if value != Value::Void {
            ev.label = Some(value.to_string());
        }
        self.emit(ev);
        Ok(value)
    }

    /// Create an instance with evaluated field defaults merged under `attrs`.
    pub fn create_with_defaults(
        &mut self,
        g: &mut DesignGraph,
        class: &str,
        mut attrs: BTreeMap<String, Value>,
    ) -> RtResult<InstanceId> {
        let program = self.program;
        let info = program
            .schema
            .class(class)
            .ok_or_else(|| RuntimeError::AbstractInstantiation(local_name(class).to_string()))?;
        if info.def.is_abstract {
            return Err(RuntimeError::AbstractInstantiation(
                local_name(class).to_string(),
            ));
        }
        for f in &info.fields {
            if attrs.contains_key(&f.name) {
                continue;
            }
            if let Some(d) = &f.default {
                let decl_module = program
                    .schema
                    .class(&f.declared_in)
                    .map(|c| c.module)
                    .unwrap_or(info.module);
                let mut scope = Scope::new(decl_module);
                let v = self.eval(GraphRef::Live(g), d, &mut scope)?;
                attrs.insert(f.name.clone(), v);
            }
        }
        Ok(g.create_instance(&program.schema, class, attrs)?)
    }

    pub(crate) fn construct(
        &mut self,
        g: &mut DesignGraph,
        class: &str,
        args: Vec<Value>,
    ) -> RtResult<InstanceId> {
        let program = self.program;
        let schema = &program.schema;
        let info = schema
            .class(class)
            .ok_or_else(|| RuntimeError::AbstractInstantiation(local_name(class).to_string()))?;
        if info.def.is_abstract {
            return Err(RuntimeError::AbstractInstantiation(
                local_name(class).to_string(),
            ));
        }
        let ctor = schema.constructor(class, args.len());
        if ctor.is_none() && !(args.is_empty() && info.def.constructors.is_empty()) {
            return Err(RuntimeError::UnknownConstructor {
                class: local_name(class).to_string(),
                arity: args.len(),
            });
        }
        let id = self.create_with_defaults(g, class, BTreeMap::new())?;
        if let Some((m, sig)) = ctor {
            let name = format!("{}.{}", local_name(class), m.name);
            let params: Vec<(String, Type)> = m
                .params
                .iter()
                .map(|p| p.name.clone())
                .zip(sig.params.iter().cloned())
                .collect();
            self.run_body(
                g,
                &name,
                info.module,
                class,
                id,
                &params,
                args,
                &m.body,
                &Type::Void,
            )?;
        }
        Ok(id)
    }

    /// Apply a rule of either form. `None` means no match.
    pub fn apply_rule(
        &mut self,
        g: &mut DesignGraph,
        rule: &Rule,
        scope: &mut Scope,
    ) -> RtResult<Option<crate::graph::GraphDelta>> {
        match &rule.kind {
            crate::ast::RuleKind::Pattern(p) => self.apply_pattern_rule(g, p, scope),
            crate::ast::RuleKind::Script(s) => self.apply_script_rule(g, s, scope).map(Some),
        }
    }
}
