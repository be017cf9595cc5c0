//! Static checking of code: expressions, patterns, rules, activities and method bodies.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::diag::{has_errors, Diagnostic, DiagnosticKind, SourceSpan};
use crate::program::{local_name, Module, Namespace, Program};
use crate::schema::ModuleId;
use crate::value::Type;

/// Typed names visible to an expression, plus the enclosing method context.
#[derive(Clone, Debug)]
pub struct StaticScope {
    frames: Vec<BTreeMap<String, Type>>,
    pub module: ModuleId,
    /// Class whose method body is being checked; grants private access.
    pub this_class: Option<String>,
    /// Declared return type when inside a method body.
    pub ret: Option<Type>,
}

impl StaticScope {
    pub fn new(module: ModuleId) -> Self {
        StaticScope {
            frames: vec![BTreeMap::new()],
            module,
            this_class: None,
            ret: None,
        }
    }

    pub fn with(mut self, name: &str, ty: Type) -> Self {
        self.bind(name, ty);
        self
    }

    /// Scope of a method or constructor body: `this` plus the parameters.
    pub fn method(module: ModuleId, class: &str, params: &[(String, Type)], ret: Type) -> Self {
        let mut s = StaticScope::new(module).with("this", Type::Instance(class.to_string()));
        s.this_class = Some(class.to_string());
        s.ret = Some(ret);
        s.push();
        for (n, t) in params {
            s.bind(n, t.clone());
        }
        s
    }

    pub fn get(&self, name: &str) -> Option<&Type> {
        self.frames.iter().rev().find_map(|f| f.get(name))
    }

    pub fn bind(&mut self, name: &str, ty: Type) {
        self.frames
            .last_mut()
            .expect("frame")
            .insert(name.to_string(), ty);
    }

    pub fn push(&mut self) {
        self.frames.push(BTreeMap::new());
    }

    pub fn pop(&mut self) {
        self.frames.pop();
    }
}

fn diag(kind: DiagnosticKind, msg: impl Into<String>, span: &SourceSpan) -> Diagnostic {
    Diagnostic::error(kind, msg).at(span)
}

/// Type of `expr` under `scope`, or a diagnostic for the first ill-typed subexpression.
pub fn typecheck_expr(
    program: &Program,
    expr: &Expr,
    scope: &StaticScope,
) -> Result<Type, Diagnostic> {
    Typer { program }.expr(expr, scope)
}

/// A pattern variable after checking.
#[derive(Clone, Debug, PartialEq)]
pub struct PatVar {
    pub name: String,
    pub ty: Type,
    /// Bound from the enclosing scope rather than searched for.
    pub prebound: bool,
}

/// Check a pattern against a scope; returns its variables in declaration order
/// (explicit nodes first, then implicit pre-bound edge endpoints).
pub fn check_pattern(
    program: &Program,
    p: &PatternAst,
    scope: &StaticScope,
) -> Result<Vec<PatVar>, Diagnostic> {
    Typer { program }.pattern(p, scope)
}

struct Typer<'a> {
    program: &'a Program,
}

impl Typer<'_> {
    fn schema(&self) -> &crate::schema::Schema {
        &self.program.schema
    }

    fn named_type(
        &self,
        name: &str,
        scope: &StaticScope,
        span: &SourceSpan,
    ) -> Result<String, Diagnostic> {
        self.program
            .resolve(scope.module, Namespace::Type, name)
            .map(|s| s.key.clone())
            .map_err(|(k, m)| diag(k, m, span))
    }

    fn instance_var(
        &self,
        name: &str,
        scope: &StaticScope,
        span: &SourceSpan,
    ) -> Result<Type, Diagnostic> {
        match scope.get(name) {
            Some(t @ (Type::Instance(_) | Type::Unknown)) => Ok(t.clone()),
            Some(t) => Err(diag(
                DiagnosticKind::TypeMismatch,
                format!("`{name}` has type {t}, expected an instance"),
                span,
            )),
            None => Err(diag(
                DiagnosticKind::UnknownName,
                format!("unknown name `{name}`"),
                span,
            )),
        }
    }

    fn pattern(&self, p: &PatternAst, scope: &StaticScope) -> Result<Vec<PatVar>, Diagnostic> {
        let mut vars: Vec<PatVar> = Vec::new();
        for n in &p.nodes {
            if vars.iter().any(|v| v.name == n.name) {
                return Err(diag(
                    DiagnosticKind::DuplicateName,
                    format!("pattern variable `{}` is declared twice", n.name),
                    &n.span,
                ));
            }
            match &n.ty {
                Some(t) => {
                    if scope.get(&n.name).is_some() {
                        return Err(diag(
                            DiagnosticKind::DuplicateName,
                            format!("pattern variable `{}` shadows a name in scope", n.name),
                            &n.span,
                        ));
                    }
                    let key = self.named_type(t, scope, &n.span)?;
                    vars.push(PatVar {
                        name: n.name.clone(),
                        ty: Type::Instance(key),
                        prebound: false,
                    });
                }
                None => {
                    let ty = self.instance_var(&n.name, scope, &n.span)?;
                    vars.push(PatVar {
                        name: n.name.clone(),
                        ty,
                        prebound: true,
                    });
                }
            }
        }
        for e in &p.edges {
            for end in [&e.src, &e.dst] {
                if vars.iter().any(|v| &v.name == end) {
                    continue;
                }
                let ty = self.instance_var(end, scope, &e.span)?;
                vars.push(PatVar {
                    name: end.clone(),
                    ty,
                    prebound: true,
                });
            }
        }
        if !p.guards.is_empty() {
            let mut inner = scope.clone();
            inner.push();
            for v in &vars {
                inner.bind(&v.name, v.ty.clone());
            }
            for g in &p.guards {
                let t = self.expr(g, &inner)?;
                expect_bool(&t, &g.span)?;
            }
        }
        Ok(vars)
    }

    fn field_type(
        &self,
        obj: &Type,
        field: &str,
        scope: &StaticScope,
        span: &SourceSpan,
    ) -> Result<Type, Diagnostic> {
        match obj {
            Type::Unknown => Ok(Type::Unknown),
            Type::Instance(key) => {
                let Some(f) = self.schema().field(key, field) else {
                    return Err(diag(
                        DiagnosticKind::UnknownField,
                        format!("`{}` has no field `{field}`", local_name(key)),
                        span,
                    ));
                };
                if f.visibility == Visibility::Private
                    && !self
                        .schema()
                        .private_access(scope.this_class.as_deref(), &f.declared_in)
                {
                    return Err(diag(
                        DiagnosticKind::VisibilityViolation,
                        format!("field `{}.{field}` is private", local_name(&f.declared_in)),
                        span,
                    ));
                }
                Ok(f.ty.clone())
            }
            other => Err(diag(
                DiagnosticKind::TypeMismatch,
                format!("cannot access field `{field}` on a value of type {other}"),
                span,
            )),
        }
    }

    fn args(
        &self,
        params: &[Type],
        args: &[Expr],
        scope: &StaticScope,
        what: &str,
    ) -> Result<(), Diagnostic> {
        for (p, a) in params.iter().zip(args) {
            let t = self.expr(a, scope)?;
            if !self.schema().assignable(&t, p) {
                return Err(diag(
                    DiagnosticKind::TypeMismatch,
                    format!("argument of {what} has type {t}, expected {p}"),
                    &a.span,
                ));
            }
        }
        Ok(())
    }

    /// Signature check of a call; returns the declared return type.
    pub fn call(
        &self,
        recv: &Type,
        method: &str,
        args: &[Expr],
        scope: &StaticScope,
        span: &SourceSpan,
    ) -> Result<Type, Diagnostic> {
        match recv {
            Type::Unknown => {
                for a in args {
                    self.expr(a, scope)?;
                }
                Ok(Type::Unknown)
            }
            Type::List(elem) => match (method, args.len()) {
                ("size", 0) => Ok(Type::Int),
                ("get", 1) => {
                    self.args(&[Type::Int], args, scope, "`get`")?;
                    Ok((**elem).clone())
                }
                _ => Err(diag(
                    DiagnosticKind::UnknownMethod,
                    format!(
                        "lists have no method `{method}` with {} argument(s)",
                        args.len()
                    ),
                    span,
                )),
            },
            Type::Instance(key) => {
                let Some(sig) = self.schema().method_sig(key, method, args.len()) else {
                    return Err(diag(
                        DiagnosticKind::UnknownMethod,
                        format!(
                            "`{}` has no method `{method}` with {} argument(s)",
                            local_name(key),
                            args.len()
                        ),
                        span,
                    ));
                };
                if sig.visibility == Visibility::Private
                    && !self
                        .schema()
                        .private_access(scope.this_class.as_deref(), &sig.owner)
                {
                    return Err(diag(
                        DiagnosticKind::VisibilityViolation,
                        format!("method `{}.{method}` is private", local_name(&sig.owner)),
                        span,
                    ));
                }
                self.args(&sig.params, args, scope, &format!("`{method}`"))?;
                Ok(sig.ret.clone())
            }
            other => Err(diag(
                DiagnosticKind::TypeMismatch,
                format!("cannot call `{method}` on a value of type {other}"),
                span,
            )),
        }
    }

    /// Class key that `new C(args)` instantiates, after constructor checks.
    fn construct(
        &self,
        class: &str,
        args: &[Expr],
        scope: &StaticScope,
        span: &SourceSpan,
    ) -> Result<String, Diagnostic> {
        let key = self.named_type(class, scope, span)?;
        let Some(info) = self.schema().class(&key) else {
            return Err(diag(
                DiagnosticKind::AbstractInstantiation,
                format!("interface `{class}` cannot be instantiated"),
                span,
            ));
        };
        if info.def.is_abstract {
            return Err(diag(
                DiagnosticKind::AbstractInstantiation,
                format!("abstract class `{class}` cannot be instantiated"),
                span,
            ));
        }
        match self.schema().constructor(&key, args.len()) {
            Some((_, sig)) => {
                self.args(&sig.params, args, scope, &format!("constructor `{class}`"))?
            }
            None if args.is_empty() && info.def.constructors.is_empty() => {}
            None => {
                return Err(diag(
                    DiagnosticKind::UnknownConstructor,
                    format!(
                        "`{class}` has no constructor with {} argument(s)",
                        args.len()
                    ),
                    span,
                ))
            }
        }
        Ok(key)
    }

    fn expr(&self, e: &Expr, scope: &StaticScope) -> Result<Type, Diagnostic> {
        let schema = self.schema();
        Ok(match &e.kind {
            ExprKind::Int(_) => Type::Int,
            ExprKind::Real(_) => Type::Real,
            ExprKind::Bool(_) => Type::Bool,
            ExprKind::Str(_) => Type::Str,
            ExprKind::Null => Type::Null,
            ExprKind::Name(n) => match scope.get(n) {
                Some(t) => t.clone(),
                None => {
                    return Err(diag(
                        DiagnosticKind::UnknownName,
                        format!("unknown name `{n}`"),
                        &e.span,
                    ))
                }
            },
            ExprKind::This => match scope.get("this") {
                Some(t) => t.clone(),
                None => {
                    return Err(diag(
                        DiagnosticKind::UnknownName,
                        "`this` is only available inside methods and constructors",
                        &e.span,
                    ))
                }
            },
            ExprKind::Field(obj, f) => {
                let t = self.expr(obj, scope)?;
                self.field_type(&t, f, scope, &e.span)?
            }
            ExprKind::Call {
                receiver,
                method,
                args,
            } => {
                let t = self.expr(receiver, scope)?;
                self.call(&t, method, args, scope, &e.span)?
            }
            ExprKind::New { class, args } => {
                Type::Instance(self.construct(class, args, scope, &e.span)?)
            }
            ExprKind::Unary(UnOp::Neg, inner) => {
                let t = self.expr(inner, scope)?;
                if !t.is_numeric() {
                    return Err(mismatch("operand of `-`", "a number", &t, &inner.span));
                }
                t
            }
            ExprKind::Unary(UnOp::Not, inner) => {
                let t = self.expr(inner, scope)?;
                expect_bool(&t, &inner.span)?;
                Type::Bool
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l, scope)?;
                let rt = self.expr(r, scope)?;
                match op {
                    BinOp::And | BinOp::Or => {
                        expect_bool(&lt, &l.span)?;
                        expect_bool(&rt, &r.span)?;
                        Type::Bool
                    }
                    BinOp::Eq | BinOp::Ne => {
                        let ok = (lt.is_numeric() && rt.is_numeric())
                            || schema.assignable(&lt, &rt)
                            || schema.assignable(&rt, &lt);
                        if !ok {
                            return Err(diag(
                                DiagnosticKind::TypeMismatch,
                                format!("cannot compare {lt} with {rt}"),
                                &e.span,
                            ));
                        }
                        Type::Bool
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        let ok = (lt.is_numeric() && rt.is_numeric())
                            || (lt == Type::Str && rt == Type::Str);
                        if !ok {
                            return Err(diag(
                                DiagnosticKind::TypeMismatch,
                                format!("cannot order {lt} and {rt}"),
                                &e.span,
                            ));
                        }
                        Type::Bool
                    }
                    BinOp::Add if lt == Type::Str && rt == Type::Str => Type::Str,
                    BinOp::Add
                        if matches!((&lt, &rt), (Type::List(_), Type::List(_)))
                            && schema.assignable(&rt, &lt) =>
                    {
                        lt
                    }
                    _ => {
                        if !lt.is_numeric() {
                            return Err(mismatch(
                                &format!("left operand of `{}`", op.symbol()),
                                "a number",
                                &lt,
                                &l.span,
                            ));
                        }
                        if !rt.is_numeric() {
                            return Err(mismatch(
                                &format!("right operand of `{}`", op.symbol()),
                                "a number",
                                &rt,
                                &r.span,
                            ));
                        }
                        numeric_join(&lt, &rt)
                    }
                }
            }
            ExprKind::Count(p) => {
                self.pattern(p, scope)?;
                Type::Int
            }
            ExprKind::List(items) => {
                let mut elem = Type::Unknown;
                for it in items {
                    let t = self.expr(it, scope)?;
                    elem = match (&elem, &t) {
                        (Type::Unknown, _) => t,
                        (a, b) if a == b => t,
                        (a, b) if a.is_numeric() && b.is_numeric() => numeric_join(a, b),
                        (a, b) if schema.assignable(b, a) => elem.clone(),
                        (a, b) if schema.assignable(a, b) => t,
                        _ => {
                            return Err(diag(
                                DiagnosticKind::TypeMismatch,
                                format!("list element of type {t} does not match {elem}"),
                                &it.span,
                            ))
                        }
                    };
                }
                Type::List(Box::new(elem))
            }
        })
    }
}

fn numeric_join(a: &Type, b: &Type) -> Type {
    match (a, b) {
        (Type::Unknown, _) | (_, Type::Unknown) => Type::Unknown,
        (Type::Int, Type::Int) => Type::Int,
        _ => Type::Real,
    }
}

fn mismatch(what: &str, expected: &str, got: &Type, span: &SourceSpan) -> Diagnostic {
    diag(
        DiagnosticKind::TypeMismatch,
        format!("{what} has type {got}, expected {expected}"),
        span,
    )
}

fn expect_bool(t: &Type, span: &SourceSpan) -> Result<(), Diagnostic> {
    if matches!(t, Type::Bool | Type::Unknown) {
        Ok(())
    } else {
        Err(mismatch("condition", "bool", t, span))
    }
}

// ---------------------------------------------------------------------------
// Whole-program checking
// ---------------------------------------------------------------------------

/// Check every code body of a built program.
pub fn check_program(program: &Program) -> Vec<Diagnostic> {
    let mut c = Checker {
        t: Typer { program },
        diags: Vec::new(),
        entity: String::new(),
    };
    c.run();
    c.diags
}

/// Build and check a module table. On success returns the program and its warnings.
pub fn compile(modules: Vec<Module>) -> Result<(Program, Vec<Diagnostic>), Vec<Diagnostic>> {
    let (program, mut diags) = Program::build(modules);
    diags.extend(check_program(&program));
    if has_errors(&diags) {
        Err(diags)
    } else {
        Ok((program, diags))
    }
}

struct Checker<'a> {
    t: Typer<'a>,
    diags: Vec<Diagnostic>,
    entity: String,
}

impl Checker<'_> {
    fn report(&mut self, d: Diagnostic) {
        self.diags.push(d.with_entity(self.entity.clone()));
    }

    fn run(&mut self) {
        let program = self.t.program;
        for c in program.schema.classes.values() {
            let module = c.module;
            for f in &c.fields {
                if f.declared_in != c.key {
                    continue;
                }
                self.entity = format!("{}.{}", c.def.name, f.name);
                if let Some(d) = &f.default {
                    match self.t.expr(d, &StaticScope::new(module)) {
                        Ok(t) if !program.schema.assignable(&t, &f.ty) => self.report(mismatch(
                            &format!("default of field `{}`", f.name),
                            &f.ty.to_string(),
                            &t,
                            &d.span,
                        )),
                        Ok(_) => {}
                        Err(d) => self.report(d),
                    }
                }
            }
            for (m, sig) in c.def.methods.iter().zip(&c.method_sigs) {
                self.entity = format!("{}.{}", c.def.name, m.name);
                self.method_body(module, &c.key, m, &sig.params, sig.ret.clone());
            }
            for (m, sig) in c.def.constructors.iter().zip(&c.ctor_sigs) {
                self.entity = format!("{}.{}", c.def.name, m.name);
                self.method_body(module, &c.key, m, &sig.params, Type::Void);
            }
        }
        for r in program.rules.values() {
            self.entity = r.rule.name.clone();
            let mut scope = StaticScope::new(r.module);
            self.rule(&r.rule, &mut scope);
        }
        for a in program.activities.values() {
            self.entity = a.activity.name.clone();
            let mut scope = StaticScope::new(a.module);
            self.activity(&a.activity, &mut scope, false);
        }
    }

    fn method_body(
        &mut self,
        module: ModuleId,
        class: &str,
        m: &MethodDef,
        params: &[Type],
        ret: Type,
    ) {
        let mut names = BTreeSet::new();
        for p in &m.params {
            if !names.insert(p.name.as_str()) || p.name == "this" {
                self.report(diag(
                    DiagnosticKind::DuplicateName,
                    format!("parameter `{}` is declared twice", p.name),
                    &m.span,
                ));
            }
        }
        let bound: Vec<(String, Type)> = m
            .params
            .iter()
            .map(|p| p.name.clone())
            .zip(params.iter().cloned())
            .collect();
        let mut scope = StaticScope::method(module, class, &bound, ret);
        match &m.body {
            MethodBody::Abstract => {}
            MethodBody::Script(b) => self.block(b, &mut scope),
            MethodBody::Activity(a) => self.activity(a, &mut scope, true),
        }
    }

    fn rule(&mut self, r: &Rule, scope: &mut StaticScope) {
        match &r.kind {
            RuleKind::Script(s) => {
                scope.push();
                self.block(&s.body, scope);
                scope.pop();
            }
            RuleKind::Pattern(p) => {
                if let Err(d) = self.pattern_rule(p, scope) {
                    self.report(d);
                }
            }
        }
    }

    fn pattern_rule(&self, rule: &PatternRule, scope: &StaticScope) -> Result<(), Diagnostic> {
        let t = &self.t;
        let schema = &t.program.schema;
        let lhs = t.pattern(&rule.lhs, scope)?;
        let mut inner = scope.clone();
        inner.push();
        for v in &lhs {
            inner.bind(&v.name, v.ty.clone());
        }
        let mut ret_ty = None;
        if let Some(inv) = &rule.invoke {
            let recv = t.instance_var(&inv.receiver, &inner, &inv.span)?;
            let ret = t.call(&recv, &inv.method, &inv.args, &inner, &inv.span)?;
            ret_ty = Some(ret);
        }
        // RHS: declared nodes first so edges and assignments can refer to them.
        let mut rhs_vars: BTreeMap<&str, Type> = BTreeMap::new();
        for n in &rule.rhs.nodes {
            if rhs_vars.contains_key(n.name.as_str()) {
                return Err(diag(
                    DiagnosticKind::DuplicateName,
                    format!("RHS variable `{}` is declared twice", n.name),
                    &n.span,
                ));
            }
            let ty = match &n.kind {
                RhsNodeKind::Keep if n.name == METHOD_RETURN => {
                    method_return_type(ret_ty.as_ref(), &n.span)?
                }
                RhsNodeKind::Keep => t.instance_var(&n.name, &inner, &n.span)?,
                RhsNodeKind::Create(class) | RhsNodeKind::Construct { class, .. } => {
                    if inner.get(&n.name).is_some() || n.name == METHOD_RETURN {
                        return Err(diag(
                            DiagnosticKind::DuplicateName,
                            format!("created variable `{}` is already bound", n.name),
                            &n.span,
                        ));
                    }
                    let args: &[Expr] = match &n.kind {
                        RhsNodeKind::Construct { args, .. } => args,
                        _ => &[],
                    };
                    Type::Instance(t.construct(class, args, &inner, &n.span)?)
                }
            };
            rhs_vars.insert(&n.name, ty);
        }
        let lookup = |name: &str, span: &SourceSpan| -> Result<Type, Diagnostic> {
            if let Some(ty) = rhs_vars.get(name) {
                return Ok(ty.clone());
            }
            if name == METHOD_RETURN {
                return method_return_type(ret_ty.as_ref(), span);
            }
            t.instance_var(name, &inner, span)
        };
        for e in &rule.rhs.edges {
            lookup(&e.src, &e.span)?;
            lookup(&e.dst, &e.span)?;
        }
        for s in &rule.rhs.sets {
            let ty = lookup(&s.var, &s.span)?;
            let fty = t.field_type(&ty, &s.field, &inner, &s.span)?;
            let vty = t.expr(&s.value, &inner)?;
            if !schema.assignable(&vty, &fty) {
                return Err(mismatch(
                    &format!("value for `{}.{}`", s.var, s.field),
                    &fty.to_string(),
                    &vty,
                    &s.value.span,
                ));
            }
        }
        Ok(())
    }

    fn activity(&mut self, a: &Activity, scope: &mut StaticScope, in_method: bool) {
        let program = self.t.program;
        for r in &a.rules {
            self.rule(r, scope);
        }
        let starts = a
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Start { .. }))
            .count();
        if starts != 1 {
            self.report(diag(
                DiagnosticKind::InvalidActivity,
                format!(
                    "activity `{}` must have exactly one start node, found {starts}",
                    a.name
                ),
                &a.span,
            ));
        }
        let mut names = BTreeSet::new();
        for n in &a.nodes {
            if !names.insert(n.name.as_str()) {
                self.report(diag(
                    DiagnosticKind::DuplicateName,
                    format!("activity node `{}` is declared twice", n.name),
                    &n.span,
                ));
            }
        }
        let mut local = BTreeSet::new();
        for r in &a.rules {
            if !local.insert(r.name.as_str()) {
                self.report(diag(
                    DiagnosticKind::DuplicateDefinition,
                    format!("local rule `{}` is defined more than once", r.name),
                    &r.span,
                ));
            }
        }
        for n in &a.nodes {
            for succ in n.kind.successors() {
                if a.node(succ).is_none() {
                    self.report(diag(
                        DiagnosticKind::InvalidActivity,
                        format!("node `{}` continues to unknown node `{succ}`", n.name),
                        &n.span,
                    ));
                }
            }
            match &n.kind {
                NodeKind::Start { .. } | NodeKind::End => {}
                NodeKind::Apply { rule, .. } => {
                    if a.local_rule(rule).is_some() {
                        continue;
                    }
                    if in_method {
                        self.report(diag(
                            DiagnosticKind::UnknownRule,
                            format!("method bodies may only apply their own rules; `{rule}` is not local"),
                            &n.span,
                        ));
                    } else if let Err((k, m)) = program.resolve(scope.module, Namespace::Rule, rule)
                    {
                        self.report(diag(k, m, &n.span));
                    }
                }
                NodeKind::Sub { activity, .. } => {
                    if in_method {
                        self.report(diag(
                            DiagnosticKind::InvalidActivity,
                            format!("method bodies may not invoke activity `{activity}`"),
                            &n.span,
                        ));
                    } else if let Err((k, m)) =
                        program.resolve(scope.module, Namespace::Activity, activity)
                    {
                        self.report(diag(k, m, &n.span));
                    }
                }
                NodeKind::Decide { guard, branches } => self.decision(n, guard, branches, scope),
                NodeKind::Return { pattern, value } => {
                    if !in_method {
                        self.report(diag(
                            DiagnosticKind::InvalidActivity,
                            "return nodes are only allowed in method bodies",
                            &n.span,
                        ));
                        continue;
                    }
                    if let Err(d) = self.return_node(pattern.as_ref(), value, scope) {
                        self.report(d);
                    }
                }
            }
        }
        // Reachability from start.
        if let Some(start) = a.start() {
            let mut seen = BTreeSet::new();
            let mut stack = vec![start.name.as_str()];
            while let Some(cur) = stack.pop() {
                if !seen.insert(cur) {
                    continue;
                }
                if let Some(node) = a.node(cur) {
                    stack.extend(node.kind.successors());
                }
            }
            for n in &a.nodes {
                if !seen.contains(n.name.as_str()) {
                    self.report(diag(
                        DiagnosticKind::InvalidActivity,
                        format!("node `{}` is unreachable from start", n.name),
                        &n.span,
                    ));
                }
            }
        }
    }

    fn decision(
        &mut self,
        n: &ActivityNode,
        guard: &Expr,
        branches: &[Branch],
        scope: &StaticScope,
    ) {
        let ty = match self.t.expr(guard, scope) {
            Ok(t) => t,
            Err(d) => {
                self.report(d);
                Type::Unknown
            }
        };
        if branches.len() < 2 {
            self.report(diag(
                DiagnosticKind::InvalidActivity,
                format!("decision `{}` needs at least two branches", n.name),
                &n.span,
            ));
        }
        let mut labels = BTreeSet::new();
        for b in branches {
            if !labels.insert(b.label.as_str()) {
                self.report(diag(
                    DiagnosticKind::InvalidActivity,
                    format!(
                        "decision `{}` repeats branch label `{}`",
                        n.name,
                        b.label.as_str()
                    ),
                    &b.span,
                ));
            }
        }
        let has_else = branches.iter().any(|b| b.label == BranchLabel::Else);
        match ty {
            Type::Bool | Type::Unknown => {
                if let Some(b) = branches
                    .iter()
                    .find(|b| matches!(b.label, BranchLabel::Text(_)))
                {
                    self.report(diag(
                        DiagnosticKind::InvalidActivity,
                        format!(
                            "boolean decision `{}` has non-boolean label `{}`",
                            n.name,
                            b.label.as_str()
                        ),
                        &b.span,
                    ));
                }
                if !has_else && !(labels.contains("true") && labels.contains("false")) {
                    self.report(diag(
                        DiagnosticKind::InvalidActivity,
                        format!("decision `{}` must cover both true and false", n.name),
                        &n.span,
                    ));
                }
            }
            Type::Str => {
                if let Some(b) = branches
                    .iter()
                    .find(|b| matches!(b.label, BranchLabel::True | BranchLabel::False))
                {
                    self.report(diag(
                        DiagnosticKind::InvalidActivity,
                        format!(
                            "string decision `{}` has boolean label `{}`",
                            n.name,
                            b.label.as_str()
                        ),
                        &b.span,
                    ));
                }
                if !has_else {
                    self.report(diag(
                        DiagnosticKind::InvalidActivity,
                        format!("string decision `{}` needs an else branch", n.name),
                        &n.span,
                    ));
                }
            }
            other => self.report(mismatch(
                "decision guard",
                "bool or string",
                &other,
                &guard.span,
            )),
        }
    }

    fn return_node(
        &self,
        pattern: Option<&PatternAst>,
        value: &Expr,
        scope: &StaticScope,
    ) -> Result<(), Diagnostic> {
        let mut inner = scope.clone();
        inner.push();
        if let Some(p) = pattern {
            for v in self.t.pattern(p, scope)? {
                inner.bind(&v.name, v.ty);
            }
        }
        let got = self.t.expr(value, &inner)?;
        let want = scope.ret.clone().unwrap_or(Type::Void);
        if want == Type::Void || !self.t.program.schema.assignable(&got, &want) {
            return Err(diag(
                DiagnosticKind::ReturnTypeMismatch,
                format!("return value has type {got}, method returns {want}"),
                &value.span,
            ));
        }
        Ok(())
    }

    fn block(&mut self, b: &Block, scope: &mut StaticScope) {
        for s in b {
            if let Err(d) = self.stmt(s, scope) {
                self.report(d);
            }
        }
    }

    fn nested(&mut self, b: &Block, scope: &mut StaticScope, binds: Vec<(String, Type)>) {
        scope.push();
        for (n, t) in binds {
            scope.bind(&n, t);
        }
        self.block(b, scope);
        scope.pop();
    }

    fn stmt(&mut self, s: &Stmt, scope: &mut StaticScope) -> Result<(), Diagnostic> {
        let program: &Program = self.t.program;
        let schema = &program.schema;
        match &s.kind {
            StmtKind::Let { name, ty, value } => {
                if scope.get(name).is_some() {
                    return Err(diag(
                        DiagnosticKind::DuplicateName,
                        format!("`{name}` is already bound"),
                        &s.span,
                    ));
                }
                let vt = self.t.expr(value, scope)?;
                let declared = match ty {
                    Some(te) => {
                        let d = self
                            .t
                            .program
                            .resolve_type(scope.module, te)
                            .map_err(|(k, m)| diag(k, m, &s.span))?;
                        if !schema.assignable(&vt, &d) {
                            return Err(mismatch(
                                &format!("value of `{name}`"),
                                &d.to_string(),
                                &vt,
                                &value.span,
                            ));
                        }
                        d
                    }
                    None => match vt {
                        Type::Void | Type::Null => {
                            return Err(diag(
                                DiagnosticKind::TypeMismatch,
                                format!("cannot infer a type for `{name}` from {vt}"),
                                &value.span,
                            ))
                        }
                        t => t,
                    },
                };
                scope.bind(name, declared);
            }
            StmtKind::Assign { name, value } => {
                if name == "this" {
                    return Err(diag(
                        DiagnosticKind::InvalidStatement,
                        "cannot assign to `this`",
                        &s.span,
                    ));
                }
                let Some(target) = scope.get(name).cloned() else {
                    return Err(diag(
                        DiagnosticKind::UnknownName,
                        format!("unknown name `{name}`"),
                        &s.span,
                    ));
                };
                let vt = self.t.expr(value, scope)?;
                if !schema.assignable(&vt, &target) {
                    return Err(mismatch(
                        &format!("value assigned to `{name}`"),
                        &target.to_string(),
                        &vt,
                        &value.span,
                    ));
                }
            }
            StmtKind::SetField {
                target,
                field,
                value,
            } => {
                let tt = self.t.expr(target, scope)?;
                let ft = self.t.field_type(&tt, field, scope, &s.span)?;
                let vt = self.t.expr(value, scope)?;
                if !schema.assignable(&vt, &ft) {
                    return Err(mismatch(
                        &format!("value assigned to field `{field}`"),
                        &ft.to_string(),
                        &vt,
                        &value.span,
                    ));
                }
            }
            StmtKind::Link { src, dst, .. } | StmtKind::Unlink { src, dst, .. } => {
                for e in [src, dst] {
                    let t = self.t.expr(e, scope)?;
                    if !t.is_instance() {
                        return Err(mismatch("link endpoint", "an instance", &t, &e.span));
                    }
                }
            }
            StmtKind::Delete(e) => {
                let t = self.t.expr(e, scope)?;
                if !t.is_instance() {
                    return Err(mismatch("deleted value", "an instance", &t, &e.span));
                }
            }
            StmtKind::If { cond, then, els } => {
                let t = self.t.expr(cond, scope)?;
                expect_bool(&t, &cond.span)?;
                self.nested(then, scope, Vec::new());
                if let Some(e) = els {
                    self.nested(e, scope, Vec::new());
                }
            }
            StmtKind::ForRange {
                var,
                from,
                to,
                body,
                ..
            } => {
                for e in [from, to] {
                    let t = self.t.expr(e, scope)?;
                    if !matches!(t, Type::Int | Type::Unknown) {
                        return Err(mismatch("loop bound", "int", &t, &e.span));
                    }
                }
                if scope.get(var).is_some() {
                    return Err(diag(
                        DiagnosticKind::DuplicateName,
                        format!("`{var}` is already bound"),
                        &s.span,
                    ));
                }
                self.nested(body, scope, vec![(var.clone(), Type::Int)]);
            }
            StmtKind::ForMatch { pattern, body } => {
                let vars = self.t.pattern(pattern, scope)?;
                let binds = vars
                    .into_iter()
                    .filter(|v| !v.prebound)
                    .map(|v| (v.name, v.ty))
                    .collect();
                self.nested(body, scope, binds);
            }
            StmtKind::Return(value) => {
                let Some(want) = scope.ret.clone() else {
                    return Err(diag(
                        DiagnosticKind::InvalidStatement,
                        "`return` is only allowed in method bodies",
                        &s.span,
                    ));
                };
                match (value, &want) {
                    (None, Type::Void) => {}
                    (None, _) => {
                        return Err(diag(
                            DiagnosticKind::ReturnTypeMismatch,
                            format!("missing return value of type {want}"),
                            &s.span,
                        ))
                    }
                    (Some(v), Type::Void) => {
                        return Err(diag(
                            DiagnosticKind::ReturnTypeMismatch,
                            "void method returns a value",
                            &v.span,
                        ))
                    }
                    (Some(v), _) => {
                        let got = self.t.expr(v, scope)?;
                        if !schema.assignable(&got, &want) {
                            return Err(diag(
                                DiagnosticKind::ReturnTypeMismatch,
                                format!("return value has type {got}, method returns {want}"),
                                &v.span,
                            ));
                        }
                    }
                }
            }
            StmtKind::Expr(e) => {
                self.t.expr(e, scope)?;
            }
        }
        Ok(())
    }
}

fn method_return_type(ret: Option<&Type>, span: &SourceSpan) -> Result<Type, Diagnostic> {
    match ret {
        None => Err(diag(
            DiagnosticKind::InvalidRule,
            format!("`{METHOD_RETURN}` requires an `invoke` clause"),
            span,
        )),
        Some(t @ (Type::Instance(_) | Type::Unknown)) => Ok(t.clone()),
        Some(t) => Err(diag(
            DiagnosticKind::ReturnTypeMismatch,
            format!("`{METHOD_RETURN}` expects an instance but the invoked method returns {t}"),
            span,
        )),
    }
}
