//! Rule application: pattern rewriting (preserve, create, delete) and the
//! method-call and constructor-call rule forms.
//!
//! A typed LHS node absent from the RHS is deleted together with its links.
//! Untyped LHS nodes and implicit edge endpoints come from the enclosing scope
//! and are never deleted. Edges are compared as multisets per variable triple:
//! surplus LHS edges are removed, surplus RHS edges are created.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{ApplyMode, PatternRule, RhsNodeKind, METHOD_RETURN};
use crate::graph::{DesignGraph, GraphDelta};
use crate::matcher::{Match, Pattern};
use crate::runtime::{Engine, GraphRef, RtResult, RuntimeError, Scope};
use crate::value::{InstanceId, LinkId, Value};

impl Engine<'_> {
    /// Apply a pattern or call rule. `None` means no match; on error the graph is restored.
    pub fn apply_pattern_rule(
        &mut self,
        g: &mut DesignGraph,
        rule: &PatternRule,
        scope: &mut Scope,
    ) -> RtResult<Option<GraphDelta>> {
        let first_only = rule.mode == ApplyMode::FirstMatch;
        let Some((pat, ms)) = self.matches(g, &rule.lhs, scope, first_only)? else {
            return Ok(None);
        };
        if ms.is_empty() {
            return Ok(None);
        }
        let snapshot = g.clone();
        let mut result = Ok(());
        for m in &ms {
            // Later matches of a forall run lose validity once an earlier
            // application deletes one of their instances or links.
            let live = m.nodes.iter().all(|id| g.contains(*id))
                && m.links.iter().all(|l| g.get_link(*l).is_some());
            if !live {
                continue;
            }
            result = self.rewrite(g, rule, &pat, m, scope);
            if result.is_err() {
                break;
            }
        }
        match result {
            Ok(()) => {
                let delta = GraphDelta::between(&snapshot, g);
                debug_assert!(
                    delta.replay(&snapshot).as_ref() == Ok(&*g),
                    "rewrite delta does not replay"
                );
                Ok(Some(delta))
            }
            Err(e) => {
                g.restore(snapshot);
                Err(e)
            }
        }
    }

    fn rewrite(
        &mut self,
        g: &mut DesignGraph,
        rule: &PatternRule,
        pat: &Pattern,
        m: &Match,
        scope: &mut Scope,
    ) -> RtResult<()> {
        let program = self.program;
        let schema = &program.schema;
        let binding = m.binding(pat);
        scope.push();
        for (n, id) in &binding {
            scope.bind(n, Value::Ref(Some(*id)));
        }
        let r = self.rewrite_bound(g, rule, pat, m, &binding, scope, schema);
        scope.pop();
        r
    }

    #[allow(clippy::too_many_arguments)]
    fn rewrite_bound(
        &mut self,
        g: &mut DesignGraph,
        rule: &PatternRule,
        pat: &Pattern,
        m: &Match,
        binding: &BTreeMap<String, InstanceId>,
        scope: &mut Scope,
        schema: &crate::schema::Schema,
    ) -> RtResult<()> {
        // Everything the RHS computes is evaluated against the LHS binding first.
        let mut set_values = Vec::with_capacity(rule.rhs.sets.len());
        for s in &rule.rhs.sets {
            set_values.push(self.eval(GraphRef::Frozen(g), &s.value, scope)?);
        }
        let mut ctor_args: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
        for n in &rule.rhs.nodes {
            if let RhsNodeKind::Construct { args, .. } = &n.kind {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(GraphRef::Frozen(g), a, scope)?);
                }
                ctor_args.insert(&n.name, vals);
            }
        }

        let mut vars: BTreeMap<String, InstanceId> = binding.clone();
        if let Some(inv) = &rule.invoke {
            let recv = match scope.get(&inv.receiver) {
                Some(Value::Ref(Some(id))) => *id,
                _ => {
                    return Err(RuntimeError::Expr(format!(
                        "call receiver `{}` is not an instance",
                        inv.receiver
                    )))
                }
            };
            let mut args = Vec::with_capacity(inv.args.len());
            for a in &inv.args {
                args.push(self.eval(GraphRef::Frozen(g), a, scope)?);
            }
            let caller = scope.class.clone();
            let ret = self.call_method(g, recv, &inv.method, args, caller.as_deref())?;
            let wants_return = rule.rhs.nodes.iter().any(|n| n.name == METHOD_RETURN)
                || rule
                    .rhs
                    .edges
                    .iter()
                    .any(|e| e.src == METHOD_RETURN || e.dst == METHOD_RETURN)
                || rule.rhs.sets.iter().any(|s| s.var == METHOD_RETURN);
            if wants_return {
                match ret {
                    Value::Ref(Some(id)) => {
                        vars.insert(METHOD_RETURN.to_string(), id);
                    }
                    other => {
                        return Err(RuntimeError::ReturnTypeMismatch(format!(
                            "`{}` returned {} where the right-hand side expects an instance for `{METHOD_RETURN}`",
                            inv.method,
                            if other == Value::Ref(None) { "null" } else { other.type_name() }
                        )))
                    }
                }
            }
        }

        // Deletion of typed LHS nodes the RHS does not mention.
        let mentioned: BTreeSet<&str> = rule
            .rhs
            .nodes
            .iter()
            .map(|n| n.name.as_str())
            .chain(
                rule.rhs
                    .edges
                    .iter()
                    .flat_map(|e| [e.src.as_str(), e.dst.as_str()]),
            )
            .chain(rule.rhs.sets.iter().map(|s| s.var.as_str()))
            .collect();
        for n in &rule.lhs.nodes {
            if n.ty.is_some() && !mentioned.contains(n.name.as_str()) {
                let id = binding[&n.name];
                if g.contains(id) {
                    g.delete_instance(id)?;
                }
            }
        }

        for n in &rule.rhs.nodes {
            let class = match &n.kind {
                RhsNodeKind::Keep => continue,
                RhsNodeKind::Create(c) | RhsNodeKind::Construct { class: c, .. } => {
                    self.type_key(scope, c)?
                }
            };
            let args = ctor_args.remove(n.name.as_str()).unwrap_or_default();
            let id = self.construct(g, &class, args)?;
            vars.insert(n.name.clone(), id);
        }

        // Edge multisets per (src var, label, dst var).
        type Triple<'a> = (&'a str, &'a str, &'a str);
        let mut lhs_edges: BTreeMap<Triple, Vec<LinkId>> = BTreeMap::new();
        for (i, e) in pat.edges.iter().enumerate() {
            let key = (
                pat.vars[e.src].name.as_str(),
                e.label.as_str(),
                pat.vars[e.dst].name.as_str(),
            );
            lhs_edges.entry(key).or_default().push(m.links[i]);
        }
        let mut rhs_count: BTreeMap<Triple, usize> = BTreeMap::new();
        for e in &rule.rhs.edges {
            *rhs_count
                .entry((e.src.as_str(), e.label.as_str(), e.dst.as_str()))
                .or_default() += 1;
        }
        for (key, links) in &lhs_edges {
            let keep = rhs_count.get(key).copied().unwrap_or(0);
            for l in links.iter().skip(keep) {
                if g.get_link(*l).is_some() {
                    g.unlink(*l)?;
                }
            }
        }
        for e in &rule.rhs.edges {
            let key = (e.src.as_str(), e.label.as_str(), e.dst.as_str());
            let have = lhs_edges.get(&key).map_or(0, Vec::len);
            let want = rhs_count.get_mut(&key).expect("counted");
            // Each RHS occurrence beyond the LHS count creates one link.
            if *want > have {
                *want -= 1;
                let src = lookup(&vars, scope, &e.src)?;
                let dst = lookup(&vars, scope, &e.dst)?;
                g.link(src, &e.label, dst)?;
            }
        }

        for (s, v) in rule.rhs.sets.iter().zip(set_values) {
            let id = lookup(&vars, scope, &s.var)?;
            g.set_attr(schema, id, &s.field, v)?;
        }
        Ok(())
    }
}

/// RHS names resolve to LHS, created and returned vars first, then to the enclosing scope.
fn lookup(vars: &BTreeMap<String, InstanceId>, scope: &Scope, name: &str) -> RtResult<InstanceId> {
    vars.get(name)
        .copied()
        .or_else(|| scope.get(name).and_then(Value::as_instance))
        .ok_or_else(|| RuntimeError::Expr(format!("right-hand side variable `{name}` is unbound")))
}
