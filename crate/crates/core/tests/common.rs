#![allow(dead_code)]

use std::collections::BTreeMap;

use dg_core::check::compile;
use dg_core::dsl::parse_grammar;
use dg_core::graph::DesignGraph;
use dg_core::program::{root_module, Program};
use dg_core::value::Value;

pub fn fixture(name: &str) -> String {
    let path = format!("{}/../../grammars/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn program_from(src: &str) -> Program {
    let model = parse_grammar("test.dg", src).unwrap_or_else(|d| panic!("parse failed: {d:#?}"));
    let (program, _warnings) =
        compile(vec![root_module(model)]).unwrap_or_else(|d| panic!("check failed: {d:#?}"));
    program
}

pub fn load(name: &str) -> Program {
    program_from(&fixture(name))
}

pub fn chassis_seed(program: &Program, wheels: i64) -> DesignGraph {
    let mut g = DesignGraph::for_schema(&program.schema);
    let attrs = BTreeMap::from([("numberOfWheels".to_string(), Value::Int(wheels))]);
    g.create_instance(&program.schema, "Chassis", attrs)
        .unwrap();
    g
}

/// Instance count per class.
pub fn class_counts(g: &DesignGraph) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for i in g.instances() {
        *out.entry(i.class.clone()).or_default() += 1;
    }
    out
}

/// Link count per (source class, label, target class).
pub fn link_counts(g: &DesignGraph) -> BTreeMap<(String, String, String), usize> {
    let mut out = BTreeMap::new();
    for l in g.links() {
        let key = (
            g.class_of(l.src).unwrap().to_string(),
            l.label.clone(),
            g.class_of(l.dst).unwrap().to_string(),
        );
        *out.entry(key).or_default() += 1;
    }
    out
}
