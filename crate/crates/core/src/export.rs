//! Model-to-model exporters. Every plugin reads an immutable graph; method calls
//! needed by an export run on a scratch copy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde_json::json;
use thiserror::Error;

use crate::graph::DesignGraph;
use crate::program::{local_name, Program};
use crate::runtime::{Engine, RuntimeError, DEFAULT_BUDGET};
use crate::value::{fmt_real, InstanceId, Value};

pub const MASS_INTERFACE: &str = "HasMass";
pub const MASS_METHOD: &str = "getMass";
pub const CHILDREN: &str = "children";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("`{plugin}` does not accept this grammar: {reason}")]
    AcceptsRejected { plugin: String, reason: String },
    #[error("`{method}` failed on instance #{id} ({class}): {error}")]
    Method {
        id: InstanceId,
        class: String,
        method: String,
        error: Box<RuntimeError>,
    },
    #[error("`{method}` on instance #{id} returned {found}, expected a number")]
    NotNumeric {
        id: InstanceId,
        method: String,
        found: String,
    },
    #[error("cycle in `{CHILDREN}` links: {}", fmt_path(.0))]
    CycleDetected(Vec<InstanceId>),
    #[error("unknown instance #{0}")]
    UnknownInstance(InstanceId),
    #[error("unknown format `{0}`; available: {1}")]
    UnknownFormat(String, String),
}

impl ExportError {
    /// Variant name, used as the diagnostic kind by front ends.
    pub fn kind(&self) -> &'static str {
        match self {
            ExportError::AcceptsRejected { .. } => "AcceptsRejected",
            ExportError::Method { .. } => "MethodFailed",
            ExportError::NotNumeric { .. } => "NotNumeric",
            ExportError::CycleDetected(_) => "CycleDetected",
            ExportError::UnknownInstance(_) => "UnknownInstance",
            ExportError::UnknownFormat(..) => "UnknownFormat",
        }
    }
}

fn fmt_path(p: &[InstanceId]) -> String {
    p.iter()
        .map(|i| format!("#{i}"))
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Output of one plugin run.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub plugin: String,
    pub text: String,
}

pub trait ExportPlugin {
    fn name(&self) -> &str;
    /// Whether the grammar provides what the plugin needs.
    fn accepts(&self, program: &Program) -> Result<(), String>;
    fn emit(&self, program: &Program, graph: &DesignGraph) -> Result<String, ExportError>;
}

/// Run builders on one snapshot; results keep builder order and failures stay per builder.
pub fn run_builders(
    program: &Program,
    graph: &DesignGraph,
    builders: &[&dyn ExportPlugin],
) -> Vec<Result<Artifact, ExportError>> {
    builders
        .iter()
        .map(|b| {
            b.accepts(program)
                .map_err(|reason| ExportError::AcceptsRejected {
                    plugin: b.name().to_string(),
                    reason,
                })?;
            let text = b.emit(program, graph)?;
            Ok(Artifact {
                plugin: b.name().to_string(),
                text,
            })
        })
        .collect()
}

// -- dot and json ---------------------------------------------------------------

/// Graphviz digraph: one node per instance labeled `id:Class`, one edge per link.
pub fn export_dot(graph: &DesignGraph) -> String {
    let mut out = String::from("digraph G {\n");
    for i in graph.instances() {
        let _ = writeln!(
            out,
            "  n{} [label=\"{}:{}\"];",
            i.id,
            i.id,
            dot_escape(local_name(&i.class))
        );
    }
    for l in graph.links() {
        let _ = writeln!(
            out,
            "  n{} -> n{} [label=\"{}\"];",
            l.src,
            l.dst,
            dot_escape(&l.label)
        );
    }
    out.push_str("}\n");
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub struct Dot;

impl ExportPlugin for Dot {
    fn name(&self) -> &str {
        "dot"
    }
    fn accepts(&self, _: &Program) -> Result<(), String> {
        Ok(())
    }
    fn emit(&self, _: &Program, graph: &DesignGraph) -> Result<String, ExportError> {
        Ok(export_dot(graph))
    }
}

/// The canonical graph document.
pub struct Json;

impl ExportPlugin for Json {
    fn name(&self) -> &str {
        "json"
    }
    fn accepts(&self, _: &Program) -> Result<(), String> {
        Ok(())
    }
    fn emit(&self, _: &Program, graph: &DesignGraph) -> Result<String, ExportError> {
        Ok(graph.serialize())
    }
}

// -- method-backed exports -------------------------------------------------------

fn call_numeric(
    program: &Program,
    graph: &DesignGraph,
    id: InstanceId,
    method: &str,
) -> Result<f64, ExportError> {
    let mut scratch = graph.clone();
    let mut engine = Engine::new(program, DEFAULT_BUDGET);
    let class = graph
        .class_of(id)
        .ok_or(ExportError::UnknownInstance(id))?
        .to_string();
    let v = engine
        .invoke_method(&mut scratch, id, method, Vec::new(), None)
        .map_err(|error| ExportError::Method {
            id,
            class: local_name(&class).to_string(),
            method: method.to_string(),
            error: Box::new(error),
        })?;
    v.as_f64().ok_or_else(|| ExportError::NotNumeric {
        id,
        method: method.to_string(),
        found: v.type_name().to_string(),
    })
}

/// Key of the interface with the given local name that declares `method` with no parameters.
fn find_interface(program: &Program, name: &str, method: &str) -> Option<String> {
    program
        .schema
        .interfaces
        .iter()
        .find(|(k, i)| {
            local_name(k) == name
                && i.method_sigs
                    .iter()
                    .any(|s| s.name == method && s.params.is_empty())
        })
        .map(|(k, _)| k.clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MassReport {
    pub entries: Vec<(InstanceId, String, f64)>,
    pub total: f64,
}

impl MassReport {
    pub fn render(&self) -> String {
        let mut out = String::from("id\tclass\tmass\n");
        for (id, class, m) in &self.entries {
            let _ = writeln!(out, "{id}\t{class}\t{}", fmt_real(*m));
        }
        let _ = writeln!(out, "total: {}", fmt_real(self.total));
        out
    }
}

/// Sum `getMass()` over instances conforming to `HasMass`: those linked from
/// `root` when given, otherwise all of them.
pub fn mass_balance(
    program: &Program,
    graph: &DesignGraph,
    root: Option<InstanceId>,
) -> Result<MassReport, ExportError> {
    let iface = find_interface(program, MASS_INTERFACE, MASS_METHOD).ok_or_else(|| {
        ExportError::AcceptsRejected {
            plugin: "massbalance".into(),
            reason: format!("no interface `{MASS_INTERFACE}` declaring `{MASS_METHOD}()`"),
        }
    })?;
    let conforming: BTreeSet<InstanceId> = graph
        .instances_conforming(&program.schema, &iface)
        .into_iter()
        .collect();
    let contributors: Vec<InstanceId> = match root {
        None => conforming.into_iter().collect(),
        Some(r) => {
            if !graph.contains(r) {
                return Err(ExportError::UnknownInstance(r));
            }
            let linked: BTreeSet<InstanceId> = graph.out_links(r).map(|l| l.dst).collect();
            linked.intersection(&conforming).copied().collect()
        }
    };
    let mut entries = Vec::with_capacity(contributors.len());
    let mut total = 0.0;
    for id in contributors {
        let m = call_numeric(program, graph, id, MASS_METHOD)?;
        total += m;
        entries.push((
            id,
            local_name(graph.class_of(id).unwrap_or("?")).to_string(),
            m,
        ));
    }
    Ok(MassReport { entries, total })
}

pub struct MassBalance {
    pub root: Option<InstanceId>,
}

impl ExportPlugin for MassBalance {
    fn name(&self) -> &str {
        "massbalance"
    }
    fn accepts(&self, program: &Program) -> Result<(), String> {
        find_interface(program, MASS_INTERFACE, MASS_METHOD)
            .map(|_| ())
            .ok_or_else(|| format!("no interface `{MASS_INTERFACE}` declaring `{MASS_METHOD}()`"))
    }
    fn emit(&self, program: &Program, graph: &DesignGraph) -> Result<String, ExportError> {
        Ok(mass_balance(program, graph, self.root)?.render())
    }
}

/// Post-order sum over `children` links: a node without children contributes
/// `method()`, a node with children the sum of its children.
pub fn composite_rollup(
    program: &Program,
    graph: &DesignGraph,
    root: InstanceId,
    method: &str,
) -> Result<f64, ExportError> {
    if !graph.contains(root) {
        return Err(ExportError::UnknownInstance(root));
    }
    let mut memo = BTreeMap::new();
    let mut path = Vec::new();
    rollup_at(program, graph, root, method, &mut memo, &mut path)
}

fn rollup_at(
    program: &Program,
    graph: &DesignGraph,
    id: InstanceId,
    method: &str,
    memo: &mut BTreeMap<InstanceId, f64>,
    path: &mut Vec<InstanceId>,
) -> Result<f64, ExportError> {
    if let Some(v) = memo.get(&id) {
        return Ok(*v);
    }
    if let Some(pos) = path.iter().position(|p| *p == id) {
        let mut cycle = path[pos..].to_vec();
        cycle.push(id);
        return Err(ExportError::CycleDetected(cycle));
    }
    let children: Vec<InstanceId> = graph
        .out_links(id)
        .filter(|l| l.label == CHILDREN)
        .map(|l| l.dst)
        .collect();
    let v = if children.is_empty() {
        call_numeric(program, graph, id, method)?
    } else {
        path.push(id);
        let mut sum = 0.0;
        for c in children {
            sum += rollup_at(program, graph, c, method, memo, path)?;
        }
        path.pop();
        sum
    };
    memo.insert(id, v);
    Ok(v)
}

pub struct Rollup {
    pub root: InstanceId,
    pub method: String,
}

impl ExportPlugin for Rollup {
    fn name(&self) -> &str {
        "rollup"
    }
    fn accepts(&self, program: &Program) -> Result<(), String> {
        let declared = program.schema.interfaces.values().any(|i| {
            i.method_sigs
                .iter()
                .any(|s| s.name == self.method && s.params.is_empty())
        });
        if declared {
            Ok(())
        } else {
            Err(format!("no interface declares `{}()`", self.method))
        }
    }
    fn emit(&self, program: &Program, graph: &DesignGraph) -> Result<String, ExportError> {
        let v = composite_rollup(program, graph, self.root, &self.method)?;
        Ok(format!("total: {}\n", fmt_real(v)))
    }
}

// -- CAD mock ------------------------------------------------------------------

pub const CAD_OPERATION: &str = "Operation";

/// One JSON line per `Operation` instance in `seq` order with the ids of its
/// `input` and `output` geometry.
pub fn cad_log(graph: &DesignGraph) -> String {
    let mut ops: Vec<(i64, InstanceId)> = graph
        .instances()
        .filter(|i| local_name(&i.class) == CAD_OPERATION)
        .map(|i| {
            let seq = match i.attrs.get("seq") {
                Some(Value::Int(s)) => *s,
                _ => 0,
            };
            (seq, i.id)
        })
        .collect();
    ops.sort();
    let mut out = String::new();
    for (seq, id) in ops {
        let target = |label: &str| {
            graph
                .out_links(id)
                .find(|l| l.label == label)
                .map(|l| l.dst.0)
        };
        let kind = match graph.attr(id, "kind") {
            Some(Value::Str(s)) => s.clone(),
            _ => String::new(),
        };
        let line =
            json!({ "seq": seq, "op": kind, "input": target("input"), "output": target("output") });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

pub struct CadLog;

impl ExportPlugin for CadLog {
    fn name(&self) -> &str {
        "cadlog"
    }
    fn accepts(&self, program: &Program) -> Result<(), String> {
        let ok = program.schema.classes.iter().any(|(k, c)| {
            local_name(k) == CAD_OPERATION
                && c.fields.iter().any(|f| f.name == "seq")
                && c.fields.iter().any(|f| f.name == "kind")
        });
        if ok {
            Ok(())
        } else {
            Err(format!(
                "no class `{CAD_OPERATION}` with `seq` and `kind` fields"
            ))
        }
    }
    fn emit(&self, _: &Program, graph: &DesignGraph) -> Result<String, ExportError> {
        Ok(cad_log(graph))
    }
}

pub const FORMATS: &[&str] = &["dot", "json", "massbalance", "cadlog", "rollup"];
