//! Seed graphs: an inline instance expression such as `Chassis{numberOfWheels:4}`
//! or a file in the canonical graph format.

use std::collections::BTreeMap;

use dg_core::dsl::parse_expr;
use dg_core::graph::{const_eval, DesignGraph};
use dg_core::program::{Lookup, Namespace, Program};
use dg_core::schema::ROOT_MODULE;
use dg_core::value::{InstanceId, Value};

/// Build a one-instance seed from `Class{field: literal, ...}`; braces are optional.
pub fn parse_inline(program: &Program, spec: &str) -> Result<DesignGraph, String> {
    let spec = spec.trim();
    let (name, body) = match spec.find('{') {
        Some(i) => {
            let rest = spec[i + 1..].trim_end();
            let body = rest
                .strip_suffix('}')
                .ok_or_else(|| format!("seed `{spec}` lacks a closing `}}`"))?;
            (spec[..i].trim(), body)
        }
        None => (spec, ""),
    };
    let class = resolve_class(program, name)?;
    let mut attrs = BTreeMap::new();
    for item in split_top_level(body) {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (field, value) = item
            .split_once(':')
            .ok_or_else(|| format!("seed attribute `{item}` is not `field: value`"))?;
        let expr = parse_expr(value.trim())
            .map_err(|d| format!("seed value `{}`: {}", value.trim(), d[0].message))?;
        let v = const_eval(&expr)
            .ok_or_else(|| format!("seed value `{}` is not a constant", value.trim()))?;
        attrs.insert(field.trim().to_string(), v);
    }
    let mut g = DesignGraph::for_schema(&program.schema);
    g.create_instance(&program.schema, &class, attrs)
        .map_err(|e| e.to_string())?;
    Ok(g)
}

/// Rebuild a canonical graph document against the schema so that missing
/// fields take their defaults and every value is type-checked.
pub fn from_graph(program: &Program, text: &str) -> Result<DesignGraph, String> {
    let doc = DesignGraph::parse(text).map_err(|e| e.to_string())?;
    let mut g = DesignGraph::for_schema(&program.schema);
    let mut ids: BTreeMap<InstanceId, InstanceId> = BTreeMap::new();
    let mut refs = Vec::new();
    for inst in doc.instances() {
        let class = resolve_class(program, &inst.class)?;
        let (plain, deferred): (BTreeMap<_, _>, BTreeMap<_, _>) = inst
            .attrs
            .clone()
            .into_iter()
            .partition(|(_, v)| !holds_ref(v));
        let id = g
            .create_instance(&program.schema, &class, plain)
            .map_err(|e| format!("instance #{}: {e}", inst.id))?;
        ids.insert(inst.id, id);
        refs.push((id, deferred));
    }
    for (id, attrs) in refs {
        for (field, v) in attrs {
            g.set_attr(&program.schema, id, &field, remap(&v, &ids))
                .map_err(|e| e.to_string())?;
        }
    }
    for l in doc.links() {
        g.link(ids[&l.src], &l.label, ids[&l.dst])
            .map_err(|e| e.to_string())?;
    }
    Ok(g)
}

fn resolve_class(program: &Program, name: &str) -> Result<String, String> {
    if program.schema.class(name).is_some() {
        return Ok(name.to_string());
    }
    match program.lookup(ROOT_MODULE, Namespace::Type, name) {
        Lookup::Found(s) => Ok(s.key.clone()),
        Lookup::Private(_) => Err(format!(
            "seed class `{name}` is private to an imported module"
        )),
        Lookup::Missing => Err(format!("seed class `{name}` is not declared")),
    }
}

fn holds_ref(v: &Value) -> bool {
    match v {
        Value::Ref(Some(_)) => true,
        Value::List(items) => items.iter().any(holds_ref),
        _ => false,
    }
}

fn remap(v: &Value, ids: &BTreeMap<InstanceId, InstanceId>) -> Value {
    match v {
        Value::Ref(Some(id)) => Value::Ref(ids.get(id).copied()),
        Value::List(items) => Value::List(items.iter().map(|i| remap(i, ids)).collect()),
        other => other.clone(),
    }
}

/// Split on commas outside quotes, brackets and parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut quoted, mut start) = (0i32, false, 0usize);
    let mut chars = s.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' if quoted => {
                chars.next();
            }
            '"' => quoted = !quoted,
            '(' | '[' | '{' if !quoted => depth += 1,
            ')' | ']' | '}' if !quoted => depth -= 1,
            ',' if !quoted && depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dg_core::check::compile;
    use dg_core::dsl::parse_grammar;
    use dg_core::program::root_module;

    fn program() -> Program {
        let src = "grammar s; package p public { class Chassis { field numberOfWheels: int = 0; field label: string = \"\"; field w: real = 0.0; } }";
        compile(vec![root_module(parse_grammar("s.dg", src).unwrap())])
            .unwrap()
            .0
    }

    #[test]
    fn inline_seed() {
        let p = program();
        let g = parse_inline(&p, "Chassis{numberOfWheels:4, label: \"a, b\", w: 2}").unwrap();
        let id = g.instances().next().unwrap().id;
        assert_eq!(g.attr(id, "numberOfWheels"), Some(&Value::Int(4)));
        assert_eq!(g.attr(id, "label"), Some(&Value::Str("a, b".into())));
        assert_eq!(g.attr(id, "w"), Some(&Value::Real(2.0)));
        assert!(parse_inline(&p, "Chassis").is_ok());
        assert!(parse_inline(&p, "Chassis{}").is_ok());
    }

    #[test]
    fn inline_seed_errors() {
        let p = program();
        assert!(parse_inline(&p, "Truck{}").is_err());
        assert!(parse_inline(&p, "Chassis{wheels: 4}").is_err());
        assert!(parse_inline(&p, "Chassis{numberOfWheels: \"x\"}").is_err());
        assert!(parse_inline(&p, "Chassis{numberOfWheels 4}").is_err());
        assert!(parse_inline(&p, "Chassis{numberOfWheels: 4").is_err());
    }

    #[test]
    fn graph_seed_fills_defaults() {
        let p = program();
        let text = r#"{"instances": [{"id": 7, "class": "Chassis", "attrs": {"numberOfWheels": 2}}], "links": []}"#;
        let g = from_graph(&p, text).unwrap();
        let id = g.instances().next().unwrap().id;
        assert_eq!(g.attr(id, "numberOfWheels"), Some(&Value::Int(2)));
        assert_eq!(g.attr(id, "label"), Some(&Value::Str(String::new())));
    }
}
