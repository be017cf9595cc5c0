//! Canonical pretty-printer. `parse(print(m)) == m` for every parsed model and
//! the output is a fixpoint of print∘parse.

use std::fmt::Write;

use super::lexer::quote;
use crate::ast::*;
use crate::value::fmt_real;

pub fn print_grammar(m: &GrammarModel) -> String {
    let mut p = Printer::default();
    p.grammar(m);
    p.out
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, 0);
    s
}

pub fn print_type(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Int => "int".into(),
        TypeExpr::Real => "real".into(),
        TypeExpr::Bool => "bool".into(),
        TypeExpr::Str => "string".into(),
        TypeExpr::Void => "void".into(),
        TypeExpr::Named(n) => n.clone(),
        TypeExpr::List(t) => format!("list<{}>", print_type(t)),
    }
}

/// `name(p: T, ...): R` as used by manifests and listings.
pub fn print_signature(m: &MethodDef) -> String {
    let params: Vec<String> = m
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, print_type(&p.ty)))
        .collect();
    format!("{}({}): {}", m.name, params.join(", "), print_type(&m.ret))
}

#[derive(Default)]
struct Printer {
    out: String,
    indent: usize,
}

impl Printer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn open(&mut self, text: &str) {
        self.line(&format!("{text} {{"));
        self.indent += 1;
    }

    fn close(&mut self) {
        self.indent -= 1;
        self.line("}");
    }

    fn blank(&mut self) {
        if !self.out.is_empty() && !self.out.ends_with("{\n") && !self.out.ends_with("\n\n") {
            self.out.push('\n');
        }
    }

    fn grammar(&mut self, m: &GrammarModel) {
        match &m.version {
            Some(v) => self.line(&format!("grammar {} version {};", m.name, quote(v))),
            None => self.line(&format!("grammar {};", m.name)),
        }
        if !m.imports.is_empty() {
            self.blank();
            for i in &m.imports {
                self.line(&format!("import {};", i.module));
            }
        }
        if let Some(e) = &m.entry {
            self.blank();
            self.line(&format!("entry {};", e.activity));
        }
        for p in &m.packages {
            self.blank();
            self.package(p);
        }
        for r in &m.rules {
            self.blank();
            self.rule(r);
        }
        for a in &m.activities {
            self.blank();
            self.activity(&format!("activity {}", a.name), a);
        }
    }

    fn package(&mut self, p: &PackageDef) {
        let vis = match p.visibility {
            Visibility::Public => "public",
            Visibility::Private => "private",
        };
        self.open(&format!("package {} {}", p.name, vis));
        for a in &p.associations {
            let multi = if a.multi { " multi" } else { "" };
            self.line(&format!("association {}{};", a.name, multi));
        }
        for i in &p.interfaces {
            self.blank();
            self.interface(i);
        }
        for c in &p.classes {
            self.blank();
            self.class(c);
        }
        for r in &p.rules {
            self.blank();
            self.rule(r);
        }
        for a in &p.activities {
            self.blank();
            self.activity(&format!("activity {}", a.name), a);
        }
        self.close();
    }

    fn interface(&mut self, i: &InterfaceDef) {
        let mut head = format!("interface {}", i.name);
        if !i.extends.is_empty() {
            let _ = write!(head, " extends {}", i.extends.join(", "));
        }
        self.open(&head);
        for m in &i.methods {
            self.line(&format!("method {};", print_signature(m)));
        }
        self.close();
    }

    fn class(&mut self, c: &ClassDef) {
        let mut head = String::new();
        if c.is_abstract {
            head.push_str("abstract ");
        }
        let _ = write!(head, "class {}", c.name);
        if let Some(p) = &c.parent {
            let _ = write!(head, " extends {p}");
        }
        if !c.implements.is_empty() {
            let _ = write!(head, " implements {}", c.implements.join(", "));
        }
        self.open(&head);
        for f in &c.fields {
            let mut s = format!(
                "{}field {}: {}",
                vis_prefix(f.visibility),
                f.name,
                print_type(&f.ty)
            );
            if let Some(d) = &f.default {
                s.push_str(" = ");
                expr(&mut s, d, 0);
            }
            s.push(';');
            self.line(&s);
        }
        for k in &c.constructors {
            let params: Vec<String> = k
                .params
                .iter()
                .map(|p| format!("{}: {}", p.name, print_type(&p.ty)))
                .collect();
            let head = format!(
                "{}constructor({})",
                vis_prefix(k.visibility),
                params.join(", ")
            );
            if let MethodBody::Script(b) = &k.body {
                self.block(&head, b);
            }
        }
        for m in &c.methods {
            let sig = format!("{}method {}", vis_prefix(m.visibility), print_signature(m));
            match &m.body {
                MethodBody::Abstract => {
                    let prefix = vis_prefix(m.visibility);
                    self.line(&format!("{prefix}abstract method {};", print_signature(m)));
                }
                MethodBody::Script(b) => self.block(&sig, b),
                MethodBody::Activity(a) => self.activity(&format!("{sig} activity"), a),
            }
        }
        self.close();
    }

    fn rule(&mut self, r: &Rule) {
        match &r.kind {
            RuleKind::Script(s) => self.block(&format!("script {}", r.name), &s.body),
            RuleKind::Pattern(p) => {
                let mode = match p.mode {
                    ApplyMode::FirstMatch => "",
                    ApplyMode::Forall => " forall",
                };
                self.open(&format!("rule {}{}", r.name, mode));
                self.pattern_block("lhs", &p.lhs);
                if let Some(inv) = &p.invoke {
                    let mut s = format!("invoke {}.{}", inv.receiver, inv.method);
                    args(&mut s, &inv.args);
                    s.push(';');
                    self.line(&s);
                }
                self.open("rhs");
                for n in &p.rhs.nodes {
                    let mut s = n.name.clone();
                    match &n.kind {
                        RhsNodeKind::Keep => {}
                        RhsNodeKind::Create(c) => {
                            let _ = write!(s, ": {c}");
                        }
                        RhsNodeKind::Construct { class, args: a } => {
                            let _ = write!(s, " = new {class}");
                            args(&mut s, a);
                        }
                    }
                    s.push(';');
                    self.line(&s);
                }
                for e in &p.rhs.edges {
                    self.line(&edge(e));
                }
                for a in &p.rhs.sets {
                    let mut s = format!("set {}.{} = ", a.var, a.field);
                    expr(&mut s, &a.value, 0);
                    s.push(';');
                    self.line(&s);
                }
                self.close();
                self.close();
            }
        }
    }

    fn pattern_block(&mut self, head: &str, p: &PatternAst) {
        self.open(head);
        for n in &p.nodes {
            match &n.ty {
                Some(t) => self.line(&format!("{}: {};", n.name, t)),
                None => self.line(&format!("{};", n.name)),
            }
        }
        for e in &p.edges {
            self.line(&edge(e));
        }
        for g in &p.guards {
            let mut s = "where ".to_string();
            expr(&mut s, g, 0);
            s.push(';');
            self.line(&s);
        }
        self.close();
    }

    fn activity(&mut self, head: &str, a: &Activity) {
        self.open(head);
        for r in &a.rules {
            self.rule(r);
        }
        for n in &a.nodes {
            match &n.kind {
                NodeKind::Start { next } => self.line(&format!("start -> {next};")),
                NodeKind::End => self.line(&format!("{}: end;", n.name)),
                NodeKind::Apply {
                    rule,
                    required,
                    next,
                } => {
                    let req = if *required { " required" } else { "" };
                    self.line(&format!("{}: apply {rule}{req} -> {next};", n.name));
                }
                NodeKind::Sub { activity, next } => {
                    self.line(&format!("{}: sub {activity} -> {next};", n.name));
                }
                NodeKind::Decide { guard, branches } => {
                    let mut s = format!("{}: decide ", n.name);
                    expr(&mut s, guard, 0);
                    self.open(&s);
                    for b in branches {
                        let label = match &b.label {
                            BranchLabel::Text(t) => quote(t),
                            other => other.as_str().to_string(),
                        };
                        self.line(&format!("{label} -> {};", b.target));
                    }
                    self.close();
                }
                NodeKind::Return { pattern, value } => {
                    let mut s = format!("{}: return ", n.name);
                    if let Some(p) = pattern {
                        s.push_str(&inline_pattern(p));
                        s.push(' ');
                    }
                    expr(&mut s, value, 0);
                    s.push(';');
                    self.line(&s);
                }
            }
        }
        self.close();
    }

    fn block(&mut self, head: &str, b: &Block) {
        self.open(head);
        for s in b {
            self.stmt(s);
        }
        self.close();
    }

    fn stmt(&mut self, st: &Stmt) {
        match &st.kind {
            StmtKind::Let { name, ty, value } => {
                let mut s = format!("let {name}");
                if let Some(t) = ty {
                    let _ = write!(s, ": {}", print_type(t));
                }
                s.push_str(" = ");
                expr(&mut s, value, 0);
                s.push(';');
                self.line(&s);
            }
            StmtKind::Assign { name, value } => {
                let mut s = format!("{name} = ");
                expr(&mut s, value, 0);
                s.push(';');
                self.line(&s);
            }
            StmtKind::SetField {
                target,
                field,
                value,
            } => {
                let mut s = String::new();
                postfix_operand(&mut s, target);
                let _ = write!(s, ".{field} = ");
                expr(&mut s, value, 0);
                s.push(';');
                self.line(&s);
            }
            StmtKind::Link { src, label, dst } | StmtKind::Unlink { src, label, dst } => {
                let kw = if matches!(st.kind, StmtKind::Link { .. }) {
                    "link"
                } else {
                    "unlink"
                };
                let mut s = format!("{kw} ");
                postfix_operand(&mut s, src);
                let _ = write!(s, " -{label}-> ");
                postfix_operand(&mut s, dst);
                s.push(';');
                self.line(&s);
            }
            StmtKind::Delete(e) => {
                let mut s = "delete ".to_string();
                expr(&mut s, e, 0);
                s.push(';');
                self.line(&s);
            }
            StmtKind::If { cond, then, els } => self.if_chain(cond, then, els.as_ref(), "if "),
            StmtKind::ForRange {
                var,
                from,
                to,
                inclusive,
                body,
            } => {
                let mut s = format!("for {var} in ");
                expr(&mut s, from, 0);
                s.push_str(if *inclusive { " ..= " } else { " .. " });
                expr(&mut s, to, 0);
                self.block(&s, body);
            }
            StmtKind::ForMatch { pattern, body } => {
                let head = format!("for match {}", inline_pattern(pattern));
                self.block(&head, body);
            }
            StmtKind::Return(v) => match v {
                Some(e) => {
                    let mut s = "return ".to_string();
                    expr(&mut s, e, 0);
                    s.push(';');
                    self.line(&s);
                }
                None => self.line("return;"),
            },
            StmtKind::Expr(e) => {
                let mut s = String::new();
                expr(&mut s, e, 0);
                s.push(';');
                self.line(&s);
            }
        }
    }

    fn if_chain(&mut self, cond: &Expr, then: &Block, els: Option<&Block>, kw: &str) {
        let mut s = kw.to_string();
        expr(&mut s, cond, 0);
        self.open(&s);
        for st in then {
            self.stmt(st);
        }
        self.else_tail(els);
    }

    /// Closes the current `if` body and prints any `else` / `else if` tail.
    fn else_tail(&mut self, els: Option<&Block>) {
        self.indent -= 1;
        match els {
            None => self.line("}"),
            Some(b) => {
                // `else if` is stored as an else block holding a single `if`.
                if let [Stmt {
                    kind: StmtKind::If { cond, then, els },
                    ..
                }] = b.as_slice()
                {
                    let mut s = "} else if ".to_string();
                    expr(&mut s, cond, 0);
                    s.push_str(" {");
                    self.line(&s);
                    self.indent += 1;
                    for st in then {
                        self.stmt(st);
                    }
                    self.else_tail(els.as_ref());
                } else {
                    self.line("} else {");
                    self.indent += 1;
                    for st in b {
                        self.stmt(st);
                    }
                    self.close();
                }
            }
        }
    }
}

fn vis_prefix(v: Visibility) -> &'static str {
    match v {
        Visibility::Public => "",
        Visibility::Private => "private ",
    }
}

fn edge(e: &PatEdge) -> String {
    format!("{} -{}-> {};", e.src, e.label, e.dst)
}

fn inline_pattern(p: &PatternAst) -> String {
    let mut s = "{".to_string();
    for n in &p.nodes {
        match &n.ty {
            Some(t) => {
                let _ = write!(s, " {}: {};", n.name, t);
            }
            None => {
                let _ = write!(s, " {};", n.name);
            }
        }
    }
    for e in &p.edges {
        s.push(' ');
        s.push_str(&edge(e));
    }
    for g in &p.guards {
        s.push_str(" where ");
        expr(&mut s, g, 0);
        s.push(';');
    }
    s.push_str(" }");
    s
}

fn args(s: &mut String, a: &[Expr]) {
    s.push('(');
    for (i, e) in a.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        expr(s, e, 0);
    }
    s.push(')');
}

/// Operand of `.field`, `.method()` or a link endpoint: parenthesized unless primary.
fn postfix_operand(s: &mut String, e: &Expr) {
    if matches!(e.kind, ExprKind::Binary(..) | ExprKind::Unary(..)) {
        s.push('(');
        expr(s, e, 0);
        s.push(')');
    } else {
        expr(s, e, 0);
    }
}

/// Prints `e`, parenthesizing when its precedence is below `min_prec`.
fn expr(s: &mut String, e: &Expr, min_prec: u8) {
    match &e.kind {
        ExprKind::Int(i) => {
            let _ = write!(s, "{i}");
        }
        ExprKind::Real(r) => s.push_str(&fmt_real(*r)),
        ExprKind::Bool(b) => {
            let _ = write!(s, "{b}");
        }
        ExprKind::Str(t) => s.push_str(&quote(t)),
        ExprKind::Null => s.push_str("null"),
        ExprKind::Name(n) => s.push_str(n),
        ExprKind::This => s.push_str("this"),
        ExprKind::Field(target, f) => {
            postfix_operand(s, target);
            let _ = write!(s, ".{f}");
        }
        ExprKind::Call {
            receiver,
            method,
            args: a,
        } => {
            postfix_operand(s, receiver);
            let _ = write!(s, ".{method}");
            args(s, a);
        }
        ExprKind::New { class, args: a } => {
            let _ = write!(s, "new {class}");
            args(s, a);
        }
        ExprKind::Unary(op, inner) => {
            s.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            expr(s, inner, 7);
        }
        ExprKind::Binary(op, l, r) => {
            let prec = op.precedence();
            let paren = prec < min_prec;
            if paren {
                s.push('(');
            }
            expr(s, l, prec);
            let _ = write!(s, " {} ", op.symbol());
            expr(s, r, prec + 1);
            if paren {
                s.push(')');
            }
        }
        ExprKind::Count(p) => {
            s.push_str("count ");
            s.push_str(&inline_pattern(p));
        }
        ExprKind::List(items) => {
            s.push('[');
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                expr(s, it, 0);
            }
            s.push(']');
        }
    }
}
