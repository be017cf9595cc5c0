//! Injective, type-conforming subgraph matching.
//!
//! Backtracking over pattern variables in declaration order with candidates in
//! ascending instance id, so results come out lexicographically ordered by
//! `(var order, instance id)`. Guards are evaluated once all variables are bound.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use thiserror::Error;

use crate::graph::DesignGraph;
use crate::schema::Schema;
use crate::value::{InstanceId, LinkId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternVar {
    pub name: String,
    /// Class or interface key the bound instance must conform to.
    pub ty: String,
    pub prebound: Option<InstanceId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternEdge {
    pub src: usize,
    pub label: String,
    pub dst: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Pattern {
    pub vars: Vec<PatternVar>,
    pub edges: Vec<PatternEdge>,
}

impl Pattern {
    pub fn var(&mut self, name: &str, ty: &str) -> usize {
        self.vars.push(PatternVar {
            name: name.to_string(),
            ty: ty.to_string(),
            prebound: None,
        });
        self.vars.len() - 1
    }

    pub fn edge(&mut self, src: usize, label: &str, dst: usize) {
        self.edges.push(PatternEdge {
            src,
            label: label.to_string(),
            dst,
        });
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Fix a variable to an instance id.
    pub fn prebind(&mut self, name: &str, id: InstanceId) -> bool {
        match self.index_of(name) {
            Some(i) => {
                self.vars[i].prebound = Some(id);
                true
            }
            None => false,
        }
    }
}

/// One occurrence: instance per pattern variable and link per pattern edge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Match {
    pub nodes: Vec<InstanceId>,
    pub links: Vec<LinkId>,
}

impl Match {
    pub fn get(&self, pattern: &Pattern, name: &str) -> Option<InstanceId> {
        pattern.index_of(name).map(|i| self.nodes[i])
    }

    pub fn binding(&self, pattern: &Pattern) -> BTreeMap<String, InstanceId> {
        pattern
            .vars
            .iter()
            .map(|v| v.name.clone())
            .zip(self.nodes.iter().copied())
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError<E> {
    #[error("pre-bound instance #{0} does not exist")]
    PreBoundMissing(InstanceId),
    #[error("{0}")]
    Guard(E),
}

/// True iff `required` is the class itself, an ancestor, or an implemented interface.
pub fn conforms(schema: &Schema, class: &str, required: &str) -> bool {
    schema.conforms(class, required)
}

/// All matches of a guard-free pattern.
pub fn find_matches(
    pattern: &Pattern,
    graph: &DesignGraph,
    schema: &Schema,
) -> Result<Vec<Match>, MatchError<std::convert::Infallible>> {
    find_matches_where(pattern, graph, schema, |_| Ok(true))
}

/// All matches accepted by `guard`, in matcher order.
pub fn find_matches_where<E>(
    pattern: &Pattern,
    graph: &DesignGraph,
    schema: &Schema,
    guard: impl FnMut(&Match) -> Result<bool, E>,
) -> Result<Vec<Match>, MatchError<E>> {
    let mut out = Vec::new();
    search(pattern, graph, schema, guard, |m| {
        out.push(m.clone());
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// The first match in matcher order.
pub fn first_match<E>(
    pattern: &Pattern,
    graph: &DesignGraph,
    schema: &Schema,
    guard: impl FnMut(&Match) -> Result<bool, E>,
) -> Result<Option<Match>, MatchError<E>> {
    let mut found = None;
    search(pattern, graph, schema, guard, |m| {
        found = Some(m.clone());
        ControlFlow::Break(())
    })?;
    Ok(found)
}

/// Number of matches without materializing them.
pub fn count_matches<E>(
    pattern: &Pattern,
    graph: &DesignGraph,
    schema: &Schema,
    guard: impl FnMut(&Match) -> Result<bool, E>,
) -> Result<usize, MatchError<E>> {
    let mut n = 0usize;
    search(pattern, graph, schema, guard, |_| {
        n += 1;
        ControlFlow::Continue(())
    })?;
    Ok(n)
}

/// Drive the backtracking search, handing each accepted match to `visit`.
pub fn search<E>(
    pattern: &Pattern,
    graph: &DesignGraph,
    schema: &Schema,
    mut guard: impl FnMut(&Match) -> Result<bool, E>,
    mut visit: impl FnMut(&Match) -> ControlFlow<()>,
) -> Result<(), MatchError<E>> {
    for v in &pattern.vars {
        if let Some(id) = v.prebound {
            if !graph.contains(id) {
                return Err(MatchError::PreBoundMissing(id));
            }
        }
    }
    // Edges become checkable once their later endpoint is bound.
    let mut ready: Vec<Vec<usize>> = vec![Vec::new(); pattern.vars.len()];
    for (i, e) in pattern.edges.iter().enumerate() {
        ready[e.src.max(e.dst)].push(i);
    }
    let candidates: Vec<Vec<InstanceId>> = pattern
        .vars
        .iter()
        .map(|v| match v.prebound {
            Some(id) => {
                let ok = graph
                    .class_of(id)
                    .is_some_and(|c| schema.conforms(c, &v.ty));
                if ok {
                    vec![id]
                } else {
                    Vec::new()
                }
            }
            None => graph.instances_conforming(schema, &v.ty),
        })
        .collect();
    let mut s = Search {
        pattern,
        graph,
        ready,
        candidates,
        current: Match {
            nodes: Vec::with_capacity(pattern.vars.len()),
            links: Vec::new(),
        },
    };
    match s.step(&mut guard, &mut visit) {
        Ok(_) => Ok(()),
        Err(e) => Err(MatchError::Guard(e)),
    }
}

struct Search<'a> {
    pattern: &'a Pattern,
    graph: &'a DesignGraph,
    ready: Vec<Vec<usize>>,
    candidates: Vec<Vec<InstanceId>>,
    current: Match,
}

impl Search<'_> {
    fn step<E>(
        &mut self,
        guard: &mut impl FnMut(&Match) -> Result<bool, E>,
        visit: &mut impl FnMut(&Match) -> ControlFlow<()>,
    ) -> Result<ControlFlow<()>, E> {
        let depth = self.current.nodes.len();
        if depth == self.pattern.vars.len() {
            let Some(links) = self.assign_links() else {
                return Ok(ControlFlow::Continue(()));
            };
            self.current.links = links;
            if guard(&self.current)? {
                return Ok(visit(&self.current));
            }
            return Ok(ControlFlow::Continue(()));
        }
        let cands = self.narrowed(depth);
        for id in cands {
            if self.current.nodes.contains(&id) {
                continue;
            }
            self.current.nodes.push(id);
            if self.edges_feasible(depth) && self.step(guard, visit)?.is_break() {
                self.current.nodes.pop();
                return Ok(ControlFlow::Break(()));
            }
            self.current.nodes.pop();
        }
        Ok(ControlFlow::Continue(()))
    }

    /// Candidates for var `i`, restricted through an edge to an already bound var.
    fn narrowed(&self, i: usize) -> Vec<InstanceId> {
        let base = &self.candidates[i];
        if self.pattern.vars[i].prebound.is_some() {
            return base.clone();
        }
        let Some(&e) = self.ready[i].first() else {
            return base.clone();
        };
        let edge = &self.pattern.edges[e];
        let mut near: Vec<InstanceId> = if edge.src == i && edge.dst == i {
            return base.clone();
        } else if edge.dst == i {
            let src = self.current.nodes[edge.src];
            self.graph
                .out_links(src)
                .filter(|l| l.label == edge.label)
                .map(|l| l.dst)
                .collect()
        } else {
            let dst = self.current.nodes[edge.dst];
            self.graph
                .in_links(dst)
                .filter(|l| l.label == edge.label)
                .map(|l| l.src)
                .collect()
        };
        near.sort_unstable();
        near.dedup();
        near.retain(|id| base.binary_search(id).is_ok());
        near
    }

    /// Every pattern edge whose endpoints are now bound has enough links.
    fn edges_feasible(&self, i: usize) -> bool {
        let nodes = &self.current.nodes;
        self.ready[i].iter().all(|&e| {
            let edge = &self.pattern.edges[e];
            let (s, d) = (nodes[edge.src], nodes[edge.dst]);
            let need = self.pattern.edges[..=e]
                .iter()
                .filter(|x| {
                    x.label == edge.label
                        && nodes.get(x.src) == Some(&s)
                        && nodes.get(x.dst) == Some(&d)
                })
                .count();
            self.graph.links_between(s, &edge.label, d).len() >= need
        })
    }

    /// Injective edge→link assignment: within each triple, the lowest link ids in edge order.
    fn assign_links(&self) -> Option<Vec<LinkId>> {
        let nodes = &self.current.nodes;
        let mut used: BTreeMap<(InstanceId, &str, InstanceId), usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.pattern.edges.len());
        for edge in &self.pattern.edges {
            let (s, d) = (nodes[edge.src], nodes[edge.dst]);
            let k = used.entry((s, edge.label.as_str(), d)).or_insert(0);
            let links = self.graph.links_between(s, &edge.label, d);
            out.push(*links.get(*k)?);
            *k += 1;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::compile;
    use crate::dsl::parse_grammar;
    use crate::program::root_module;
    use std::collections::BTreeMap as Map;

    fn schema() -> Schema {
        let src = "package p {\n interface HasMass { method getMass(): real; }\n class Chassis {}\n class Wheel implements HasMass { method getMass(): real { return 7.5; } }\n}\n";
        let m = parse_grammar("t.dg", src).unwrap();
        compile(vec![root_module(m)]).unwrap().0.schema
    }

    #[test]
    fn two_wheels_in_id_order() {
        let s = schema();
        let mut g = DesignGraph::for_schema(&s);
        let c = g.create_instance(&s, "Chassis", Map::new()).unwrap();
        let w1 = g.create_instance(&s, "Wheel", Map::new()).unwrap();
        let w2 = g.create_instance(&s, "Wheel", Map::new()).unwrap();
        g.link(c, "wheels", w1).unwrap();
        g.link(c, "wheels", w2).unwrap();
        let mut p = Pattern::default();
        let pc = p.var("C", "Chassis");
        let pw = p.var("W", "Wheel");
        p.edge(pc, "wheels", pw);
        let ms = find_matches(&p, &g, &s).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].nodes, vec![c, w1]);
        assert_eq!(ms[1].nodes, vec![c, w2]);
    }

    #[test]
    fn empty_pattern_has_one_empty_match() {
        let s = schema();
        let g = DesignGraph::new();
        let ms = find_matches(&Pattern::default(), &g, &s).unwrap();
        assert_eq!(
            ms,
            vec![Match {
                nodes: vec![],
                links: vec![]
            }]
        );
    }

    #[test]
    fn interface_typed_var_matches_implementor() {
        let s = schema();
        let mut g = DesignGraph::new();
        g.create_instance(&s, "Wheel", Map::new()).unwrap();
        let mut p = Pattern::default();
        p.var("m", "HasMass");
        assert_eq!(find_matches(&p, &g, &s).unwrap().len(), 1);
        assert!(conforms(&s, "Wheel", "HasMass"));
        assert!(!conforms(&s, "Chassis", "Wheel"));
    }

    #[test]
    fn dead_prebound_is_an_error() {
        let s = schema();
        let g = DesignGraph::new();
        let mut p = Pattern::default();
        p.var("c", "Chassis");
        p.prebind("c", InstanceId(999));
        assert_eq!(
            find_matches(&p, &g, &s),
            Err(MatchError::PreBoundMissing(InstanceId(999)))
        );
    }

    #[test]
    fn failing_guard_on_prebound_gives_zero() {
        let s = schema();
        let mut g = DesignGraph::new();
        let c = g.create_instance(&s, "Chassis", Map::new()).unwrap();
        let mut p = Pattern::default();
        p.var("c", "Chassis");
        p.prebind("c", c);
        let n = count_matches(&p, &g, &s, |_| Ok::<_, ()>(false)).unwrap();
        assert_eq!(n, 0);
    }
}
