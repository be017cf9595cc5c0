mod common;

use std::collections::BTreeSet;

use common::{class_counts, fixture};
use dg_core::ast::Visibility;
use dg_core::check::compile;
use dg_core::diag::{Diagnostic, DiagnosticKind};
use dg_core::dsl::parse_grammar;
use dg_core::graph::DesignGraph;
use dg_core::linker::{link, public_surface, ModuleArchive};
use dg_core::program::{root_module, Namespace};
use dg_core::runtime::{execute, DEFAULT_BUDGET};
use dg_core::value::Value;

fn model(name: &str, src: &str) -> dg_core::ast::GrammarModel {
    parse_grammar(name, src).unwrap_or_else(|d| panic!("{name}: {d:#?}"))
}

fn sealed_supplier() -> ModuleArchive {
    let (a, warnings) =
        ModuleArchive::seal(&model("supplier.dg", &fixture("supplier.dg")), &[], true).unwrap();
    assert!(warnings.is_empty(), "{warnings:#?}");
    a
}

fn kinds(diags: &[Diagnostic]) -> Vec<DiagnosticKind> {
    diags.iter().map(|d| d.kind).collect()
}

/// Names declared in private packages, collected straight from the syntax tree.
fn private_names(src: &str) -> BTreeSet<String> {
    let m = model("x.dg", src);
    let mut out = BTreeSet::new();
    for p in m
        .packages
        .iter()
        .filter(|p| p.visibility == Visibility::Private)
    {
        out.insert(p.name.clone());
        out.extend(p.classes.iter().map(|c| c.name.clone()));
        out.extend(p.interfaces.iter().map(|i| i.name.clone()));
        out.extend(p.rules.iter().map(|r| r.name.clone()));
        out.extend(p.activities.iter().map(|a| a.name.clone()));
        for c in &p.classes {
            out.extend(c.fields.iter().map(|f| f.name.clone()));
            out.extend(c.methods.iter().map(|m| m.name.clone()));
        }
    }
    out
}

#[test]
fn manifest_lists_public_package_only() {
    let a = sealed_supplier();
    let listed: BTreeSet<(String, String)> = a
        .manifest
        .surface
        .symbols
        .iter()
        .map(|s| (s.kind.clone(), s.name.clone()))
        .collect();
    let expected: BTreeSet<(String, String)> = [
        ("class", "Suspension"),
        ("class", "SupplierFactory"),
        ("interface", "SuspensionProvider"),
    ]
    .into_iter()
    .map(|(k, n)| (k.to_string(), n.to_string()))
    .collect();
    assert_eq!(listed, expected);
    assert_eq!(a.manifest.surface.packages, vec!["api".to_string()]);
    assert!(a.manifest.sealed);
    assert_eq!(a.manifest.checksum.len(), 64);
}

#[test]
fn inspect_hides_private_names() {
    let src = fixture("supplier.dg");
    let a = sealed_supplier();
    let listing = a.inspect().unwrap();
    assert!(listing.contains("SuspensionProvider"));
    assert!(listing.contains("method build(load: real): Suspension"));
    assert!(listing.contains("manifest only"));
    let hidden = private_names(&src);
    assert!(hidden.contains("InternalDamperModel"));
    for name in &hidden {
        assert!(
            !listing.contains(name.as_str()),
            "inspect leaks `{name}`:\n{listing}"
        );
    }
    // The sealed file itself does not carry the private names in clear text either.
    let bytes = String::from_utf8_lossy(&a.to_bytes()).into_owned();
    for name in &hidden {
        assert!(
            !bytes.contains(name.as_str()),
            "archive bytes leak `{name}`"
        );
    }
}

#[test]
fn unsealed_inspect_is_marked_full() {
    let (a, _) =
        ModuleArchive::seal(&model("supplier.dg", &fixture("supplier.dg")), &[], false).unwrap();
    assert!(a.inspect().unwrap().contains("in full"));
    assert_eq!(
        a.grammar().unwrap(),
        model("supplier.dg", &fixture("supplier.dg"))
    );
}

#[test]
fn archive_bytes_round_trip() {
    let a = sealed_supplier();
    let back = ModuleArchive::from_bytes(&a.to_bytes()).unwrap();
    assert_eq!(back, a);
    assert_eq!(
        back.grammar().unwrap(),
        model("supplier.dg", &fixture("supplier.dg"))
    );
    let dir = std::env::temp_dir().join(format!("dgm-rt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("supplier.dgm");
    a.write(&path).unwrap();
    assert_eq!(ModuleArchive::read(&path).unwrap().unwrap(), a);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn oem_links_and_runs_supplier_code() {
    let (program, _) = link(model("oem.dg", &fixture("oem.dg")), &[sealed_supplier()])
        .unwrap_or_else(|d| panic!("{d:#?}"));
    let seed = DesignGraph::for_schema(&program.schema);
    let run =
        execute(&program, "main", seed, DEFAULT_BUDGET).unwrap_or_else(|f| panic!("{}", f.error));
    let counts = class_counts(&run.graph);
    assert_eq!(counts.get("Chassis"), Some(&1));
    assert_eq!(counts.get("Wheel"), Some(&4));
    assert_eq!(counts.get("supplier::Suspension"), Some(&4));
    assert_eq!(counts.get("supplier::InternalDamperModel"), Some(&4));
    for id in run.graph.instances_of_class("supplier::Suspension") {
        // 350 * 0.04 * 2.5
        assert_eq!(run.graph.attr(id, "stiffness"), Some(&Value::Real(35.0)));
        assert_eq!(
            run.graph
                .out_links(id)
                .filter(|l| l.label == "damping")
                .count(),
            1
        );
    }
}

#[test]
fn private_supplier_class_is_an_access_violation() {
    let err = link(
        model("oem_private.dg", &fixture("oem_private.dg")),
        &[sealed_supplier()],
    )
    .unwrap_err();
    let av: Vec<&Diagnostic> = err
        .iter()
        .filter(|d| d.kind == DiagnosticKind::AccessViolation)
        .collect();
    assert!(!av.is_empty(), "{err:#?}");
    assert!(av
        .iter()
        .any(|d| d.message.contains("InternalDamperModel") && d.message.contains("supplier")));
}

#[test]
fn private_supplier_symbols_do_not_resolve() {
    let (program, _) = link(model("oem.dg", &fixture("oem.dg")), &[sealed_supplier()]).unwrap();
    for name in private_names(&fixture("supplier.dg")) {
        for ns in [Namespace::Type, Namespace::Rule, Namespace::Activity] {
            assert!(
                program.resolve(0, ns, &name).is_err(),
                "`{name}` resolves from the root"
            );
        }
    }
    assert!(program
        .resolve(0, Namespace::Type, "SuspensionProvider")
        .is_ok());
}

#[test]
fn tampered_body_fails_checksum() {
    let a = sealed_supplier();
    let mut bytes = a.to_bytes();
    let last = bytes.len() - 2;
    bytes[last] ^= 0x01;
    let t = ModuleArchive::from_bytes(&bytes).unwrap();
    assert_eq!(
        t.verify().unwrap_err().kind,
        DiagnosticKind::ChecksumMismatch
    );
    assert_eq!(
        t.inspect().unwrap_err().kind,
        DiagnosticKind::ChecksumMismatch
    );
    let err = link(model("oem.dg", &fixture("oem.dg")), &[t]).unwrap_err();
    assert_eq!(kinds(&err), vec![DiagnosticKind::ChecksumMismatch]);
}

#[test]
fn edited_manifest_is_detected() {
    let mut a = sealed_supplier();
    a.manifest
        .surface
        .symbols
        .retain(|s| s.name != "Suspension");
    assert_eq!(
        kinds(&a.grammar().unwrap_err()),
        vec![DiagnosticKind::ManifestMismatch]
    );
    assert_eq!(
        ModuleArchive::from_bytes(b"not an archive")
            .unwrap_err()
            .kind,
        DiagnosticKind::MalformedArchive
    );
}

#[test]
fn manifest_matches_recomputed_surface() {
    for name in [
        "supplier.dg",
        "car.dg",
        "massbalance.dg",
        "bom.dg",
        "cad.dg",
    ] {
        let m = model(name, &fixture(name));
        let (a, _) = ModuleArchive::seal(&m, &[], true).unwrap();
        assert_eq!(
            public_surface(&a.grammar().unwrap()),
            a.manifest.surface,
            "{name}"
        );
    }
}

#[test]
fn zero_imports_link_equals_plain_compile() {
    let m = model("car.dg", &fixture("car.dg"));
    let (linked, _) = link(m.clone(), &[]).unwrap();
    let (plain, _) = compile(vec![root_module(m)]).unwrap();
    assert_eq!(linked.modules.len(), 1);
    assert_eq!(
        linked.schema.classes.keys().collect::<Vec<_>>(),
        plain.schema.classes.keys().collect::<Vec<_>>()
    );
    assert_eq!(
        linked.rules.keys().collect::<Vec<_>>(),
        plain.rules.keys().collect::<Vec<_>>()
    );
    assert_eq!(linked.exported_symbols(0), plain.exported_symbols(0));
}

#[test]
fn seal_diagnostics() {
    let empty = model(
        "p.dg",
        "grammar quiet; package inner private { class Hidden { } }",
    );
    let (a, warnings) = ModuleArchive::seal(&empty, &[], true).unwrap();
    assert!(a.manifest.surface.symbols.is_empty());
    assert_eq!(kinds(&warnings), vec![DiagnosticKind::EmptyExport]);

    let leaky = model(
        "l.dg",
        "grammar leaky; package api public { class Api { method get(): Secret { return null; } } } package inner private { class Secret { } }",
    );
    let err = ModuleArchive::seal(&leaky, &[], true).unwrap_err();
    assert!(
        kinds(&err).contains(&DiagnosticKind::PrivateTypeInPublicSignature),
        "{err:#?}"
    );

    let invalid = model(
        "i.dg",
        "grammar bad; package p public { class A extends B { } class B extends A { } }",
    );
    assert!(ModuleArchive::seal(&invalid, &[], true).is_err());
}

#[test]
fn unresolved_import() {
    let err = link(model("oem.dg", &fixture("oem.dg")), &[]).unwrap_err();
    assert_eq!(kinds(&err), vec![DiagnosticKind::UnresolvedImport]);
}

const BASE: &str =
    "grammar base version \"1\"; package p public { class Part { field mass: real = 1.0; } }";
const LEFT: &str =
    "grammar left; import base; package p public { class LeftHolder { field part: Part = null; } }";
const RIGHT: &str = "grammar right; import base; package p public { class RightHolder { field part: Part = null; } }";

fn seal_src(name: &str, src: &str, imports: &[ModuleArchive]) -> ModuleArchive {
    ModuleArchive::seal(&model(name, src), imports, true)
        .unwrap_or_else(|d| panic!("{name}: {d:#?}"))
        .0
}

#[test]
fn diamond_imports_unify() {
    let base = seal_src("base.dg", BASE, &[]);
    let left = seal_src("left.dg", LEFT, std::slice::from_ref(&base));
    let right = seal_src("right.dg", RIGHT, std::slice::from_ref(&base));
    let root = model(
        "top.dg",
        "grammar top; import left; import right; package q public { rule r { lhs { } rhs { a: LeftHolder; b: RightHolder; } } }",
    );
    let archives = [left.clone(), base.clone(), right.clone(), base.clone()];
    let (program, _) = link(root.clone(), &archives).unwrap_or_else(|d| panic!("{d:#?}"));
    let names: Vec<&str> = program.modules.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, vec!["top", "base", "left", "right"]);
    assert_eq!(
        program
            .schema
            .classes
            .keys()
            .filter(|k| k.ends_with("Part"))
            .count(),
        1
    );

    // Every permutation of the archive list yields the same module and symbol tables.
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let base_list = [left, base, right];
    for p in perms {
        let list: Vec<ModuleArchive> = p.iter().map(|i| base_list[*i].clone()).collect();
        let (other, _) = link(root.clone(), &list).unwrap();
        let names2: Vec<&str> = other.modules.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names2, names);
        assert_eq!(
            other.schema.classes.keys().collect::<Vec<_>>(),
            program.schema.classes.keys().collect::<Vec<_>>()
        );
        for mid in 0..other.modules.len() {
            assert_eq!(other.exported_symbols(mid), program.exported_symbols(mid));
        }
    }
}

#[test]
fn version_conflict_is_an_error() {
    let v1 = seal_src("base.dg", BASE, &[]);
    let v2 = seal_src("base.dg", &BASE.replace("1.0", "2.0"), &[]);
    let root = model(
        "top.dg",
        "grammar top; import base; package q public { rule r { lhs { } rhs { a: Part; } } }",
    );
    let err = link(root.clone(), &[v1.clone(), v2.clone()]).unwrap_err();
    assert_eq!(kinds(&err), vec![DiagnosticKind::VersionConflict]);
    assert_eq!(link(root, &[v2, v1]).unwrap_err(), err);
}

#[test]
fn duplicate_symbol_across_imports() {
    let a = seal_src(
        "a.dg",
        "grammar a; package p public { class Part { } }",
        &[],
    );
    let b = seal_src(
        "b.dg",
        "grammar b; package p public { class Part { } }",
        &[],
    );
    let root = model(
        "top.dg",
        "grammar top; import a; import b; package q public { rule r { lhs { } rhs { x: Part; } } }",
    );
    let err = link(root.clone(), &[a.clone(), b.clone()]).unwrap_err();
    assert!(
        kinds(&err).contains(&DiagnosticKind::DuplicateSymbol),
        "{err:#?}"
    );
    assert_eq!(link(root, &[b, a]).unwrap_err(), err);
}

#[test]
fn interface_implemented_across_modules() {
    let supplier = sealed_supplier();
    let ok = model(
        "own.dg",
        "grammar own; import supplier; package p public { class Cheap implements SuspensionProvider { method build(load: real): Suspension { return new Suspension(); } } }",
    );
    assert!(link(ok, std::slice::from_ref(&supplier)).is_ok());
    let missing = model("own.dg", "grammar own; import supplier; package p public { class Cheap implements SuspensionProvider { } }");
    let err = link(missing, &[supplier]).unwrap_err();
    assert!(
        kinds(&err).contains(&DiagnosticKind::MissingImplementation),
        "{err:#?}"
    );
}
