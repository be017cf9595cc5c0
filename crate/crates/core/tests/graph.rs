mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{chassis_seed, load, program_from};
use dg_core::diag::{Diagnostic, DiagnosticKind};
use dg_core::dsl::{parse_grammar, print_grammar};
use dg_core::graph::{DesignGraph, GraphError};
use dg_core::program::validate_schema;
use dg_core::runtime::{execute, DEFAULT_BUDGET};
use dg_core::schema::Schema;
use dg_core::value::{InstanceId, Type, Value};
use proptest::prelude::*;

#[test]
fn create_instances() {
    let p = load("car.dg");
    let g = chassis_seed(&p, 4);
    let c = InstanceId(1);
    assert_eq!(g.class_of(c), Some("Chassis"));
    assert_eq!(g.attr(c, "numberOfWheels"), Some(&Value::Int(4)));

    let mut g = DesignGraph::for_schema(&p.schema);
    let c = g
        .create_instance(&p.schema, "Chassis", BTreeMap::new())
        .unwrap();
    assert_eq!(g.attr(c, "numberOfWheels"), Some(&Value::Int(0)));

    let mb = load("massbalance.dg");
    let mut g = DesignGraph::for_schema(&mb.schema);
    assert_eq!(
        g.create_instance(&mb.schema, "HasMass", BTreeMap::new()),
        Err(GraphError::AbstractInstantiation("HasMass".into()))
    );
    let bad_field = BTreeMap::from([("wheels".to_string(), Value::Int(1))]);
    assert!(matches!(
        g.create_instance(&p.schema, "Chassis", bad_field),
        Err(GraphError::UnknownField { .. })
    ));
    let bad_type = BTreeMap::from([("numberOfWheels".to_string(), Value::Str("four".into()))]);
    assert!(matches!(
        g.create_instance(&p.schema, "Chassis", bad_type),
        Err(GraphError::TypeMismatch { .. })
    ));
    // Integer literals widen into real fields.
    let w = g
        .create_instance(
            &mb.schema,
            "Wheel",
            BTreeMap::from([("mass".to_string(), Value::Int(8))]),
        )
        .unwrap();
    assert_eq!(g.attr(w, "mass"), Some(&Value::Real(8.0)));
}

#[test]
fn links_and_deletion() {
    let p = load("car.dg");
    let s = &p.schema;
    let mut g = DesignGraph::for_schema(s);
    let c = g.create_instance(s, "Chassis", BTreeMap::new()).unwrap();
    let w1 = g.create_instance(s, "Wheel", BTreeMap::new()).unwrap();
    let w2 = g.create_instance(s, "Wheel", BTreeMap::new()).unwrap();
    let first = g.link(c, "wheels", w1).unwrap();
    assert_eq!(
        g.link(c, "wheels", w1),
        Err(GraphError::DuplicateLink {
            src: c,
            label: "wheels".into(),
            dst: w1
        })
    );
    g.delete_instance(w2).unwrap();
    assert_eq!(
        g.link(c, "wheels", w2),
        Err(GraphError::DanglingEndpoint(w2))
    );
    assert_eq!(
        g.link(c, "wheels", InstanceId(999)),
        Err(GraphError::DanglingEndpoint(InstanceId(999)))
    );

    let iso = g.create_instance(s, "Wheel", BTreeMap::new()).unwrap();
    assert_eq!(g.delete_instance(iso), Ok(0));

    let s2 = g
        .create_instance(s, "WheelSuspension", BTreeMap::new())
        .unwrap();
    g.link(c, "mount", s2).unwrap();
    g.link(s2, "mount", w1).unwrap();
    let incident = g.links().filter(|l| l.src == w1 || l.dst == w1).count();
    assert_eq!(g.delete_instance(w1), Ok(incident));
    assert_eq!(incident, 2);
    assert!(g.get_link(first).is_none());
    assert_eq!(
        g.delete_instance(InstanceId(999)),
        Err(GraphError::UnknownInstance(InstanceId(999)))
    );
    g.check_invariants().unwrap();
}

#[test]
fn multi_edges_are_opt_in() {
    let p = program_from(
        "grammar m; package p public { association many multi; association one; class N { } }",
    );
    let mut g = DesignGraph::for_schema(&p.schema);
    let a = g.create_instance(&p.schema, "N", BTreeMap::new()).unwrap();
    let b = g.create_instance(&p.schema, "N", BTreeMap::new()).unwrap();
    g.link(a, "many", b).unwrap();
    g.link(a, "many", b).unwrap();
    g.link(a, "one", b).unwrap();
    assert!(g.link(a, "one", b).is_err());
    assert_eq!(g.links_between(a, "many", b).len(), 2);
}

#[test]
fn serialization() {
    let empty = DesignGraph::new().serialize();
    let doc: serde_json::Value = serde_json::from_str(&empty).unwrap();
    assert_eq!(doc["instances"], serde_json::json!([]));
    assert_eq!(doc["links"], serde_json::json!([]));

    let p = load("car.dg");
    let car = execute(&p, "main", chassis_seed(&p, 4), DEFAULT_BUDGET)
        .unwrap()
        .graph;
    let text = car.serialize();
    assert_eq!(car.serialize(), text);
    let back = DesignGraph::parse(&text).unwrap();
    assert_eq!(back.serialize(), text);
    assert_eq!(back.shape(), car.shape());
    assert_eq!(back, car);
    assert!(DesignGraph::parse("{\"instances\": 3}").is_err());
    assert!(DesignGraph::parse(
        "{\"links\": [{\"id\": 1, \"src\": 5, \"label\": \"x\", \"dst\": 6}]}"
    )
    .is_err());
}

#[test]
fn deleted_targets_are_nulled_in_attributes() {
    let p = program_from("grammar r; package p public { class N { field next: N = null; field all: list<N> = []; } }");
    let s = &p.schema;
    let mut g = DesignGraph::for_schema(s);
    let a = g.create_instance(s, "N", BTreeMap::new()).unwrap();
    let b = g.create_instance(s, "N", BTreeMap::new()).unwrap();
    g.set_attr(s, a, "next", Value::Ref(Some(b))).unwrap();
    g.set_attr(
        s,
        a,
        "all",
        Value::List(vec![Value::Ref(Some(b)), Value::Ref(Some(a))]),
    )
    .unwrap();
    g.delete_instance(b).unwrap();
    assert_eq!(g.attr(a, "next"), Some(&Value::Ref(None)));
    assert_eq!(
        g.attr(a, "all"),
        Some(&Value::List(vec![Value::Ref(None), Value::Ref(Some(a))]))
    );
    assert_eq!(DesignGraph::parse(&g.serialize()).unwrap(), g);
}

const VOCAB: &str = "grammar v;
package p public {
  association a multi;
  association b;
  class Box { field n: int = 0; field r: real = 0.5; field tag: string = \"\"; field on: bool = false; field peer: Box = null; }
  class Crate extends Box { field items: list<int> = []; }
}";

#[derive(Clone, Debug)]
enum Op {
    Create(bool),
    Link(usize, bool, usize),
    Unlink(usize),
    Delete(usize),
    SetInt(usize, i64),
    SetReal(usize, i32),
    SetPeer(usize, usize),
    SetWrong(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        any::<bool>().prop_map(Op::Create),
        (any::<usize>(), any::<bool>(), any::<usize>()).prop_map(|(a, l, b)| Op::Link(a, l, b)),
        any::<usize>().prop_map(Op::Unlink),
        any::<usize>().prop_map(Op::Delete),
        (any::<usize>(), any::<i64>()).prop_map(|(a, v)| Op::SetInt(a, v)),
        (any::<usize>(), any::<i32>()).prop_map(|(a, v)| Op::SetReal(a, v)),
        (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::SetPeer(a, b)),
        any::<usize>().prop_map(Op::SetWrong),
    ]
}

fn pick(g: &DesignGraph, k: usize) -> Option<InstanceId> {
    let ids: Vec<InstanceId> = g.instances().map(|i| i.id).collect();
    (!ids.is_empty()).then(|| ids[k % ids.len()])
}

fn value_has_type(g: &DesignGraph, s: &Schema, v: &Value, t: &Type) -> bool {
    match (v, t) {
        (Value::Int(_), Type::Int)
        | (Value::Real(_), Type::Real)
        | (Value::Bool(_), Type::Bool) => true,
        (Value::Str(_), Type::Str) | (Value::Ref(None), Type::Instance(_)) => true,
        (Value::Ref(Some(id)), Type::Instance(k)) => {
            g.class_of(*id).is_some_and(|c| s.conforms(c, k))
        }
        (Value::List(items), Type::List(inner)) => {
            items.iter().all(|i| value_has_type(g, s, i, inner))
        }
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_mutations_keep_invariants(ops in prop::collection::vec(op(), 0..60)) {
        let p = program_from(VOCAB);
        let s = &p.schema;
        let mut g = DesignGraph::for_schema(s);
        let mut issued: BTreeSet<InstanceId> = BTreeSet::new();
        for o in ops {
            match o {
                Op::Create(crate_) => {
                    let id = g.create_instance(s, if crate_ { "Crate" } else { "Box" }, BTreeMap::new()).unwrap();
                    prop_assert!(issued.insert(id), "id {} reused", id);
                }
                Op::Link(a, multi, b) => {
                    if let (Some(x), Some(y)) = (pick(&g, a), pick(&g, b)) {
                        let label = if multi { "a" } else { "b" };
                        let dup = !g.links_between(x, label, y).is_empty();
                        let r = g.link(x, label, y);
                        prop_assert_eq!(r.is_err(), dup && !multi);
                    }
                }
                Op::Unlink(k) => {
                    let ids: Vec<_> = g.links().map(|l| l.id).collect();
                    if !ids.is_empty() {
                        g.unlink(ids[k % ids.len()]).unwrap();
                    }
                }
                Op::Delete(k) => {
                    if let Some(x) = pick(&g, k) {
                        let incident = g.links().filter(|l| l.src == x || l.dst == x).count();
                        prop_assert_eq!(g.delete_instance(x).unwrap(), incident);
                    }
                }
                Op::SetInt(k, v) => {
                    if let Some(x) = pick(&g, k) {
                        g.set_attr(s, x, "n", Value::Int(v)).unwrap();
                    }
                }
                Op::SetReal(k, v) => {
                    if let Some(x) = pick(&g, k) {
                        g.set_attr(s, x, "r", Value::Int(i64::from(v))).unwrap();
                    }
                }
                Op::SetPeer(a, b) => {
                    if let (Some(x), Some(y)) = (pick(&g, a), pick(&g, b)) {
                        g.set_attr(s, x, "peer", Value::Ref(Some(y))).unwrap();
                    }
                }
                Op::SetWrong(k) => {
                    if let Some(x) = pick(&g, k) {
                        let before = g.serialize();
                        prop_assert!(g.set_attr(s, x, "tag", Value::Int(1)).is_err());
                        prop_assert!(g.set_attr(s, x, "nope", Value::Int(1)).is_err());
                        prop_assert_eq!(g.serialize(), before);
                    }
                }
            }
            prop_assert!(g.check_invariants().is_ok());
            for l in g.links() {
                prop_assert!(g.contains(l.src) && g.contains(l.dst));
            }
            for i in g.instances() {
                for f in &s.class(&i.class).unwrap().fields {
                    let v = i.attrs.get(&f.name).unwrap();
                    prop_assert!(value_has_type(&g, s, v, &f.ty), "{}.{} = {:?}", i.class, f.name, v);
                }
            }
        }
        let back = DesignGraph::parse(&g.serialize()).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.serialize(), g.serialize());
    }
}

// -- schema validation ------------------------------------------------------------

fn kinds_of(diags: &[Diagnostic]) -> Vec<DiagnosticKind> {
    let mut k: Vec<_> = diags.iter().map(|d| d.kind).collect();
    k.sort();
    k
}

fn validate(src: &str) -> Vec<Diagnostic> {
    validate_schema(&parse_grammar("s.dg", src).unwrap())
}

#[test]
fn schema_examples() {
    let ok = "grammar s; package p public {
      interface HasMass { method getMass(): real; }
      class Wheel implements HasMass { method getMass(): real { return 7.5; } } }";
    assert!(validate(ok).is_empty());

    let missing = "grammar s; package p public {
      interface HasMass { method getMass(): real; }
      class Wheel implements HasMass { } }";
    let d = validate(missing);
    assert_eq!(kinds_of(&d), vec![DiagnosticKind::MissingImplementation]);
    assert!(d[0].message.contains("Wheel") && d[0].message.contains("getMass"));
    assert!(d[0].span.is_some());

    let cyclic = "grammar s; package p public { class A extends B { } class B extends A { } }";
    assert_eq!(
        kinds_of(&validate(cyclic)),
        vec![DiagnosticKind::CyclicInheritance]
    );

    let inherited = "grammar s; package p public {
      interface HasMass { method getMass(): real; }
      class Base { method getMass(): real { return 1.0; } }
      class Wheel extends Base implements HasMass { } }";
    assert!(validate(inherited).is_empty());

    let dup_field = "grammar s; package p public { class A { field m: int = 0; } class B extends A { field m: int = 1; } }";
    assert_eq!(
        kinds_of(&validate(dup_field)),
        vec![DiagnosticKind::DuplicateField]
    );

    let bad_override = "grammar s; package p public {
      class A { method f(x: int): int { return x; } }
      class B extends A { method f(x: real): int { return 1; } } }";
    assert_eq!(
        kinds_of(&validate(bad_override)),
        vec![DiagnosticKind::SignatureMismatch]
    );

    let iface_cycle =
        "grammar s; package p public { interface I extends J { } interface J extends I { } }";
    assert_eq!(
        kinds_of(&validate(iface_cycle)),
        vec![DiagnosticKind::CyclicInterface]
    );
}

const BROKEN: [&str; 6] = [
    "class A extends B { }",
    "class B extends A { }",
    "interface HasMass { method getMass(): real; }",
    "class Wheel implements HasMass { }",
    "class Base { field m: int = 0; }",
    "class Derived extends Base { field m: real = 0.0; }",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn validation_ignores_declaration_order(order in Just((0..BROKEN.len()).collect::<Vec<_>>()).prop_shuffle(), split in 0..=BROKEN.len()) {
        let decls: Vec<&str> = order.iter().map(|i| BROKEN[*i]).collect();
        let src = format!(
            "grammar s; package one public {{ {} }} package two public {{ {} }}",
            decls[..split].join(" "),
            decls[split..].join(" ")
        );
        let reference = format!("grammar s; package one public {{ {} }}", BROKEN.join(" "));
        let key = |d: Vec<Diagnostic>| {
            let mut k: Vec<_> = d.iter().map(Diagnostic::sort_key).collect();
            k.sort();
            k
        };
        let got = validate(&src);
        prop_assert_eq!(key(got.clone()), key(validate(&reference)));
        prop_assert_eq!(key(got), key(validate(&src)));
    }
}

#[test]
fn fixtures_validate_cleanly() {
    for name in [
        "car.dg",
        "massbalance.dg",
        "bom.dg",
        "cad.dg",
        "supplier.dg",
    ] {
        let src = common::fixture(name);
        let m = parse_grammar(name, &src).unwrap();
        assert!(validate_schema(&m).is_empty(), "{name}");
        assert_eq!(parse_grammar(name, &print_grammar(&m)).unwrap(), m);
    }
}
