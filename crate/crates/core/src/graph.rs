//! The typed attributed design graph.
//!
//! Instances and links live in id-ordered maps with per-class, adjacency and
//! triple indexes. Deleting an instance removes its incident links.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;
use thiserror::Error;

use crate::ast::{Expr, ExprKind, UnOp};
use crate::program::local_name;
use crate::schema::Schema;
use crate::value::{InstanceId, LinkId, Type, Value};

pub const GRAPH_FORMAT: &str = "dg-graph/1";

/// Output of [`DesignGraph::shape`].
pub type Shape = (Vec<(String, String)>, Vec<(String, String, String)>);

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: InstanceId,
    pub class: String,
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub src: InstanceId,
    pub label: String,
    pub dst: InstanceId,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("`{0}` is abstract or an interface and cannot be instantiated")]
    AbstractInstantiation(String),
    #[error("`{class}` has no field `{field}`")]
    UnknownField { class: String, field: String },
    #[error("field `{class}.{field}` expects {expected}, got {found}")]
    TypeMismatch {
        class: String,
        field: String,
        expected: String,
        found: String,
    },
    #[error("link endpoint #{0} does not exist")]
    DanglingEndpoint(InstanceId),
    #[error("link #{src} -{label}-> #{dst} already exists")]
    DuplicateLink {
        src: InstanceId,
        label: String,
        dst: InstanceId,
    },
    #[error("unknown instance #{0}")]
    UnknownInstance(InstanceId),
    #[error("unknown link #{0}")]
    UnknownLink(LinkId),
    #[error("malformed graph document: {0}")]
    Parse(String),
}

type Triple = (InstanceId, String, InstanceId);

#[derive(Clone, Debug)]
pub struct DesignGraph {
    instances: BTreeMap<InstanceId, Instance>,
    links: BTreeMap<LinkId, Link>,
    by_class: BTreeMap<String, BTreeSet<InstanceId>>,
    out: BTreeMap<InstanceId, BTreeSet<LinkId>>,
    inc: BTreeMap<InstanceId, BTreeSet<LinkId>>,
    triples: BTreeMap<Triple, BTreeSet<LinkId>>,
    next_instance: u64,
    next_link: u64,
    /// Labels on which duplicate triples are permitted. Configuration, not state.
    multi: BTreeSet<String>,
}

impl Default for DesignGraph {
    fn default() -> Self {
        DesignGraph::new()
    }
}

/// Id-preserving equality: same instances, links and id counters.
impl PartialEq for DesignGraph {
    fn eq(&self, other: &Self) -> bool {
        self.instances == other.instances
            && self.links == other.links
            && self.next_instance == other.next_instance
            && self.next_link == other.next_link
    }
}

impl DesignGraph {
    pub fn new() -> Self {
        DesignGraph {
            instances: BTreeMap::new(),
            links: BTreeMap::new(),
            by_class: BTreeMap::new(),
            out: BTreeMap::new(),
            inc: BTreeMap::new(),
            triples: BTreeMap::new(),
            next_instance: 1,
            next_link: 1,
            multi: BTreeSet::new(),
        }
    }

    /// Empty graph that permits duplicate links on the schema's multi-edge associations.
    pub fn for_schema(schema: &Schema) -> Self {
        let mut g = DesignGraph::new();
        g.multi = schema.multi_edges.clone();
        g
    }

    pub fn set_multi_edges(&mut self, labels: BTreeSet<String>) {
        self.multi = labels;
    }

    // -- queries -------------------------------------------------------------

    pub fn contains(&self, id: InstanceId) -> bool {
        self.instances.contains_key(&id)
    }

    pub fn instance(&self, id: InstanceId) -> Option<&Instance> {
        self.instances.get(&id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn class_of(&self, id: InstanceId) -> Option<&str> {
        self.instances.get(&id).map(|i| i.class.as_str())
    }

    pub fn attr(&self, id: InstanceId, field: &str) -> Option<&Value> {
        self.instances.get(&id)?.attrs.get(field)
    }

    /// Instances whose class is exactly `class`, ascending.
    pub fn instances_of_class(&self, class: &str) -> impl Iterator<Item = InstanceId> + '_ {
        self.by_class
            .get(class)
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    /// Instances conforming to `ty`, ascending.
    pub fn instances_conforming(&self, schema: &Schema, ty: &str) -> Vec<InstanceId> {
        let mut out: Vec<InstanceId> = schema
            .conforming_classes(ty)
            .into_iter()
            .flat_map(|c| self.instances_of_class(c))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn get_link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(&id)
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn out_links(&self, id: InstanceId) -> impl Iterator<Item = &Link> + '_ {
        self.out
            .get(&id)
            .into_iter()
            .flat_map(move |s| s.iter().map(move |l| &self.links[l]))
    }

    pub fn in_links(&self, id: InstanceId) -> impl Iterator<Item = &Link> + '_ {
        self.inc
            .get(&id)
            .into_iter()
            .flat_map(move |s| s.iter().map(move |l| &self.links[l]))
    }

    /// Links carrying the triple, ascending by id.
    pub fn links_between(&self, src: InstanceId, label: &str, dst: InstanceId) -> Vec<LinkId> {
        self.triples
            .get(&(src, label.to_string(), dst))
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn next_instance_id(&self) -> InstanceId {
        InstanceId(self.next_instance)
    }

    pub fn next_link_id(&self) -> LinkId {
        LinkId(self.next_link)
    }

    // -- mutation ------------------------------------------------------------

    /// Create an instance of a concrete class. Unspecified fields take their
    /// constant default, or the zero value of their type.
    pub fn create_instance(
        &mut self,
        schema: &Schema,
        class: &str,
        attrs: BTreeMap<String, Value>,
    ) -> Result<InstanceId, GraphError> {
        let Some(info) = schema.class(class) else {
            return Err(if schema.interface(class).is_some() {
                GraphError::AbstractInstantiation(class.to_string())
            } else {
                GraphError::UnknownClass(class.to_string())
            });
        };
        if info.def.is_abstract {
            return Err(GraphError::AbstractInstantiation(class.to_string()));
        }
        let mut full = BTreeMap::new();
        for (name, v) in attrs {
            let Some(f) = schema.field(class, &name) else {
                return Err(GraphError::UnknownField {
                    class: class.to_string(),
                    field: name,
                });
            };
            let found = v.type_name().to_string();
            let v = self
                .coerce(schema, v, &f.ty)
                .ok_or_else(|| GraphError::TypeMismatch {
                    class: local_name(class).to_string(),
                    field: name.clone(),
                    expected: f.ty.to_string(),
                    found,
                })?;
            full.insert(name, v);
        }
        for f in &info.fields {
            if !full.contains_key(&f.name) {
                let v = f
                    .default
                    .as_ref()
                    .and_then(const_eval)
                    .and_then(|v| self.coerce(schema, v, &f.ty))
                    .unwrap_or_else(|| f.ty.zero());
                full.insert(f.name.clone(), v);
            }
        }
        let id = InstanceId(self.next_instance);
        self.next_instance += 1;
        self.insert_instance(Instance {
            id,
            class: class.to_string(),
            attrs: full,
        });
        Ok(id)
    }

    /// Convert `v` to the representation of `ty`, or `None` if it does not conform.
    pub fn coerce(&self, schema: &Schema, v: Value, ty: &Type) -> Option<Value> {
        match (v, ty) {
            (v, Type::Unknown) => Some(v),
            (Value::Int(i), Type::Int) => Some(Value::Int(i)),
            (Value::Int(i), Type::Real) => Some(Value::Real(i as f64)),
            (Value::Real(r), Type::Real) => Some(Value::Real(r)),
            (Value::Bool(b), Type::Bool) => Some(Value::Bool(b)),
            (Value::Str(s), Type::Str) => Some(Value::Str(s)),
            (Value::Void, Type::Void) => Some(Value::Void),
            (Value::Ref(None), Type::Instance(_)) => Some(Value::Ref(None)),
            (Value::Ref(Some(id)), Type::Instance(k)) => {
                let class = self.class_of(id)?;
                schema.conforms(class, k).then_some(Value::Ref(Some(id)))
            }
            (Value::List(items), Type::List(t)) => items
                .into_iter()
                .map(|i| self.coerce(schema, i, t))
                .collect::<Option<Vec<_>>>()
                .map(Value::List),
            _ => None,
        }
    }

    /// Write a declared field; returns the previous value.
    pub fn set_attr(
        &mut self,
        schema: &Schema,
        id: InstanceId,
        field: &str,
        value: Value,
    ) -> Result<Value, GraphError> {
        let class = self
            .class_of(id)
            .ok_or(GraphError::UnknownInstance(id))?
            .to_string();
        let Some(f) = schema.field(&class, field) else {
            return Err(GraphError::UnknownField {
                class,
                field: field.to_string(),
            });
        };
        let found = value.type_name().to_string();
        let v = self
            .coerce(schema, value, &f.ty)
            .ok_or_else(|| GraphError::TypeMismatch {
                class: local_name(&class).to_string(),
                field: field.to_string(),
                expected: f.ty.to_string(),
                found,
            })?;
        let inst = self.instances.get_mut(&id).expect("live instance");
        Ok(inst
            .attrs
            .insert(field.to_string(), v)
            .unwrap_or(Value::Void))
    }

    pub fn link(
        &mut self,
        src: InstanceId,
        label: &str,
        dst: InstanceId,
    ) -> Result<LinkId, GraphError> {
        for end in [src, dst] {
            if !self.contains(end) {
                return Err(GraphError::DanglingEndpoint(end));
            }
        }
        if !self.multi.contains(label) && !self.links_between(src, label, dst).is_empty() {
            return Err(GraphError::DuplicateLink {
                src,
                label: label.to_string(),
                dst,
            });
        }
        let id = LinkId(self.next_link);
        self.next_link += 1;
        self.insert_link(Link {
            id,
            src,
            label: label.to_string(),
            dst,
        });
        Ok(id)
    }

    pub fn unlink(&mut self, id: LinkId) -> Result<Link, GraphError> {
        let link = self.links.remove(&id).ok_or(GraphError::UnknownLink(id))?;
        self.out.entry(link.src).or_default().remove(&id);
        self.inc.entry(link.dst).or_default().remove(&id);
        let key = (link.src, link.label.clone(), link.dst);
        if let Some(set) = self.triples.get_mut(&key) {
            set.remove(&id);
            if set.is_empty() {
                self.triples.remove(&key);
            }
        }
        Ok(link)
    }

    /// Remove the lowest-id link carrying the triple, if any.
    pub fn unlink_triple(
        &mut self,
        src: InstanceId,
        label: &str,
        dst: InstanceId,
    ) -> Option<LinkId> {
        let id = *self
            .triples
            .get(&(src, label.to_string(), dst))?
            .iter()
            .next()?;
        self.unlink(id).ok().map(|l| l.id)
    }

    /// Delete an instance and every incident link; returns how many links were removed.
    pub fn delete_instance(&mut self, id: InstanceId) -> Result<usize, GraphError> {
        let inst = self
            .instances
            .remove(&id)
            .ok_or(GraphError::UnknownInstance(id))?;
        let mut incident: BTreeSet<LinkId> = self.out.remove(&id).unwrap_or_default();
        incident.extend(self.inc.remove(&id).unwrap_or_default());
        for l in &incident {
            // Self-loops appear in both sets but are removed once.
            let _ = self.unlink(*l);
        }
        self.out.remove(&id);
        self.inc.remove(&id);
        if let Some(set) = self.by_class.get_mut(&inst.class) {
            set.remove(&id);
            if set.is_empty() {
                self.by_class.remove(&inst.class);
            }
        }
        // Attribute references never outlive their target.
        for other in self.instances.values_mut() {
            for v in other.attrs.values_mut() {
                clear_ref(v, id);
            }
        }
        Ok(incident.len())
    }

    fn insert_instance(&mut self, inst: Instance) {
        self.by_class
            .entry(inst.class.clone())
            .or_default()
            .insert(inst.id);
        self.next_instance = self.next_instance.max(inst.id.0 + 1);
        self.instances.insert(inst.id, inst);
    }

    fn insert_link(&mut self, link: Link) {
        self.out.entry(link.src).or_default().insert(link.id);
        self.inc.entry(link.dst).or_default().insert(link.id);
        self.triples
            .entry((link.src, link.label.clone(), link.dst))
            .or_default()
            .insert(link.id);
        self.next_link = self.next_link.max(link.id.0 + 1);
        self.links.insert(link.id, link);
    }

    /// Full-scan consistency check: no dangling links and indexes agree with the maps.
    pub fn check_invariants(&self) -> Result<(), String> {
        for l in self.links.values() {
            if !self.contains(l.src) || !self.contains(l.dst) {
                return Err(format!("link #{} dangles", l.id));
            }
            if l.id.0 >= self.next_link {
                return Err(format!("link #{} is not below the id counter", l.id));
            }
        }
        for i in self.instances.values() {
            if i.id.0 >= self.next_instance {
                return Err(format!("instance #{} is not below the id counter", i.id));
            }
            if !self
                .by_class
                .get(&i.class)
                .is_some_and(|s| s.contains(&i.id))
            {
                return Err(format!("instance #{} missing from class index", i.id));
            }
        }
        let indexed: usize = self.by_class.values().map(BTreeSet::len).sum();
        let outs: usize = self.out.values().map(BTreeSet::len).sum();
        let incs: usize = self.inc.values().map(BTreeSet::len).sum();
        let triples: usize = self.triples.values().map(BTreeSet::len).sum();
        if indexed != self.instances.len()
            || outs != self.links.len()
            || incs != self.links.len()
            || triples != self.links.len()
        {
            return Err("index sizes disagree with contents".to_string());
        }
        Ok(())
    }

    // -- canonical text ------------------------------------------------------

    pub fn to_json(&self) -> serde_json::Value {
        let instances: Vec<_> = self
            .instances
            .values()
            .map(|i| {
                let attrs: serde_json::Map<String, serde_json::Value> = i
                    .attrs
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_json()))
                    .collect();
                json!({ "id": i.id, "class": i.class, "attrs": attrs })
            })
            .collect();
        let links: Vec<_> = self
            .links
            .values()
            .map(|l| json!({ "id": l.id, "src": l.src, "label": l.label, "dst": l.dst }))
            .collect();
        json!({
            "format": GRAPH_FORMAT,
            "instances": instances,
            "links": links,
            "next_instance_id": self.next_instance,
            "next_link_id": self.next_link,
        })
    }

    /// Deterministic pretty-printed JSON, sorted by instance id then link id.
    pub fn serialize(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("graph serializes");
        s.push('\n');
        s
    }

    /// Parse the canonical format. Ids and counters are preserved; class names
    /// are not checked against any schema.
    pub fn parse(text: &str) -> Result<DesignGraph, GraphError> {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_json(&doc)
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<DesignGraph, GraphError> {
        let bad = |m: &str| GraphError::Parse(m.to_string());
        let obj = doc.as_object().ok_or_else(|| bad("expected an object"))?;
        if let Some(f) = obj.get("format") {
            if f != GRAPH_FORMAT {
                return Err(bad(&format!("unsupported format {f}")));
            }
        }
        let mut g = DesignGraph::new();
        let empty = Vec::new();
        let arr = |k: &str| -> Result<&Vec<serde_json::Value>, GraphError> {
            match obj.get(k) {
                None => Ok(&empty),
                Some(v) => v
                    .as_array()
                    .ok_or_else(|| bad(&format!("`{k}` must be an array"))),
            }
        };
        for i in arr("instances")? {
            let id = i
                .get("id")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| bad("instance without integer id"))?;
            let class = i
                .get("class")
                .and_then(|v| v.as_str())
                .ok_or_else(|| bad("instance without class"))?;
            let mut attrs = BTreeMap::new();
            if let Some(a) = i.get("attrs") {
                let a = a
                    .as_object()
                    .ok_or_else(|| bad("`attrs` must be an object"))?;
                for (k, v) in a {
                    attrs.insert(k.clone(), Value::from_json(v).map_err(GraphError::Parse)?);
                }
            }
            let id = InstanceId(id);
            if g.contains(id) {
                return Err(bad(&format!("duplicate instance id {id}")));
            }
            g.insert_instance(Instance {
                id,
                class: class.to_string(),
                attrs,
            });
        }
        for l in arr("links")? {
            let num = |k: &str| {
                l.get(k)
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| bad(&format!("link without `{k}`")))
            };
            let id = LinkId(num("id")?);
            let (src, dst) = (InstanceId(num("src")?), InstanceId(num("dst")?));
            let label = l
                .get("label")
                .and_then(|v| v.as_str())
                .ok_or_else(|| bad("link without label"))?;
            if g.links.contains_key(&id) {
                return Err(bad(&format!("duplicate link id {id}")));
            }
            for end in [src, dst] {
                if !g.contains(end) {
                    return Err(GraphError::DanglingEndpoint(end));
                }
            }
            g.insert_link(Link {
                id,
                src,
                label: label.to_string(),
                dst,
            });
        }
        for i in g.instances.values() {
            for v in i.attrs.values() {
                check_refs(&g, v)?;
            }
        }
        if let Some(n) = obj.get("next_instance_id").and_then(|v| v.as_u64()) {
            g.next_instance = g.next_instance.max(n);
        }
        if let Some(n) = obj.get("next_link_id").and_then(|v| v.as_u64()) {
            g.next_link = g.next_link.max(n);
        }
        Ok(g)
    }

    /// Id-free shape: sorted (class, attrs) and (src class, label, dst class) multisets.
    pub fn shape(&self) -> Shape {
        let mut nodes: Vec<(String, String)> = self
            .instances
            .values()
            .map(|i| {
                let attrs: serde_json::Map<String, serde_json::Value> = i
                    .attrs
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_json()))
                    .collect();
                (
                    i.class.clone(),
                    serde_json::Value::Object(attrs).to_string(),
                )
            })
            .collect();
        nodes.sort();
        let mut edges: Vec<(String, String, String)> = self
            .links
            .values()
            .map(|l| {
                (
                    self.instances[&l.src].class.clone(),
                    l.label.clone(),
                    self.instances[&l.dst].class.clone(),
                )
            })
            .collect();
        edges.sort();
        (nodes, edges)
    }

    // -- deltas --------------------------------------------------------------

    /// Overwrite this graph with `snapshot`, keeping the multi-edge configuration.
    pub fn restore(&mut self, snapshot: DesignGraph) {
        let multi = std::mem::take(&mut self.multi);
        *self = snapshot;
        self.multi = multi;
    }
}

fn clear_ref(v: &mut Value, dead: InstanceId) {
    match v {
        Value::Ref(r) if *r == Some(dead) => *r = None,
        Value::List(items) => items.iter_mut().for_each(|i| clear_ref(i, dead)),
        _ => {}
    }
}

fn check_refs(g: &DesignGraph, v: &Value) -> Result<(), GraphError> {
    match v {
        Value::Ref(Some(id)) if !g.contains(*id) => Err(GraphError::DanglingEndpoint(*id)),
        Value::List(items) => items.iter().try_for_each(|i| check_refs(g, i)),
        _ => Ok(()),
    }
}

/// Evaluate a constant expression (literals, lists, arithmetic, comparison).
pub fn const_eval(e: &Expr) -> Option<Value> {
    Some(match &e.kind {
        ExprKind::Int(i) => Value::Int(*i),
        ExprKind::Real(r) => Value::Real(*r),
        ExprKind::Bool(b) => Value::Bool(*b),
        ExprKind::Str(s) => Value::Str(s.clone()),
        ExprKind::Null => Value::Ref(None),
        ExprKind::List(items) => Value::List(items.iter().map(const_eval).collect::<Option<_>>()?),
        ExprKind::Unary(UnOp::Neg, x) => match const_eval(x)? {
            Value::Int(i) => Value::Int(i.checked_neg()?),
            Value::Real(r) => Value::Real(-r),
            _ => return None,
        },
        ExprKind::Unary(UnOp::Not, x) => match const_eval(x)? {
            Value::Bool(b) => Value::Bool(!b),
            _ => return None,
        },
        ExprKind::Binary(op, l, r) => {
            crate::value::binary(*op, &const_eval(l)?, &const_eval(r)?).ok()?
        }
        _ => return None,
    })
}

/// Attribute write recorded in a delta.
#[derive(Clone, Debug, PartialEq)]
pub struct AttrWrite {
    pub id: InstanceId,
    pub field: String,
    pub old: Value,
    pub new: Value,
}

/// Difference between two states of one graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphDelta {
    /// Created instances with their final class and attributes.
    pub created: Vec<Instance>,
    pub deleted: Vec<InstanceId>,
    pub linked: Vec<Link>,
    pub unlinked: Vec<LinkId>,
    pub writes: Vec<AttrWrite>,
    pub next_instance_id: u64,
    pub next_link_id: u64,
}

impl GraphDelta {
    pub fn between(pre: &DesignGraph, post: &DesignGraph) -> GraphDelta {
        let mut d = GraphDelta {
            next_instance_id: post.next_instance,
            next_link_id: post.next_link,
            ..GraphDelta::default()
        };
        for (id, inst) in &post.instances {
            match pre.instances.get(id) {
                None => d.created.push(inst.clone()),
                Some(old) => {
                    for (field, new) in &inst.attrs {
                        let before = old.attrs.get(field).cloned().unwrap_or(Value::Void);
                        if &before != new {
                            d.writes.push(AttrWrite {
                                id: *id,
                                field: field.clone(),
                                old: before,
                                new: new.clone(),
                            });
                        }
                    }
                }
            }
        }
        d.deleted = pre
            .instances
            .keys()
            .filter(|id| !post.instances.contains_key(id))
            .copied()
            .collect();
        d.linked = post
            .links
            .values()
            .filter(|l| !pre.links.contains_key(&l.id))
            .cloned()
            .collect();
        d.unlinked = pre
            .links
            .keys()
            .filter(|id| !post.links.contains_key(id))
            .copied()
            .collect();
        d
    }

    pub fn is_empty(&self) -> bool {
        self.created.is_empty()
            && self.deleted.is_empty()
            && self.linked.is_empty()
            && self.unlinked.is_empty()
            && self.writes.is_empty()
    }

    /// Apply the delta to a copy of its pre-state.
    pub fn replay(&self, pre: &DesignGraph) -> Result<DesignGraph, GraphError> {
        let mut g = pre.clone();
        for l in &self.unlinked {
            g.unlink(*l)?;
        }
        for id in &self.deleted {
            g.delete_instance(*id)?;
        }
        for inst in &self.created {
            g.insert_instance(inst.clone());
        }
        for l in &self.linked {
            g.insert_link(l.clone());
        }
        for w in &self.writes {
            let inst = g
                .instances
                .get_mut(&w.id)
                .ok_or(GraphError::UnknownInstance(w.id))?;
            inst.attrs.insert(w.field.clone(), w.new.clone());
        }
        g.next_instance = self.next_instance_id;
        g.next_link = self.next_link_id;
        Ok(g)
    }

    /// Compact summary used in traces.
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "created": self.created.iter().map(|i| i.id).collect::<Vec<_>>(),
            "deleted": self.deleted,
            "linked": self.linked.iter().map(|l| l.id).collect::<Vec<_>>(),
            "unlinked": self.unlinked,
            "writes": self.writes.len(),
        })
    }
}
