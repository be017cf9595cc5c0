//! Module archives and linking.
//!
//! An archive is a framed container holding `manifest.json` and `body.bin`.
//! The body is the canonical printed grammar; the manifest records the public
//! surface and a SHA-256 checksum of the stored body bytes. A sealed body is
//! masked with a SHA-256 keystream so that private names are not legible in
//! the file. This is obfuscation, not encryption: the loader API is the access
//! boundary, and introspection of a sealed archive reads the manifest only.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ast::{GrammarModel, TypeExpr, Visibility};
use crate::check::compile;
use crate::diag::{has_errors, Diagnostic, DiagnosticKind};
use crate::dsl::{parse_grammar, print_grammar, print_signature, print_type};
use crate::program::{root_module, Program};
use crate::schema::ModuleId;

pub const MAGIC: &[u8] = b"DGM1\n";
pub const MANIFEST_ENTRY: &str = "manifest.json";
pub const BODY_ENTRY: &str = "body.bin";
pub const FORMAT_VERSION: u32 = 1;

/// One exported symbol as listed in a manifest.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExportedSymbol {
    pub kind: String,
    pub name: String,
    /// Member signatures, already sorted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
}

/// The public surface of a grammar: everything an importer may name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Surface {
    pub packages: Vec<String>,
    pub associations: Vec<String>,
    pub symbols: Vec<ExportedSymbol>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub module: String,
    pub version: String,
    pub imports: Vec<String>,
    pub sealed: bool,
    pub checksum: String,
    pub surface: Surface,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleArchive {
    pub manifest: Manifest,
    /// Stored body bytes, masked when sealed.
    body: Vec<u8>,
}

fn archive_error(kind: DiagnosticKind, module: &str, msg: String) -> Diagnostic {
    Diagnostic::error(kind, msg).with_entity(module)
}

/// Public surface derived from the syntax tree. Private members of public
/// classes are not part of it.
pub fn public_surface(model: &GrammarModel) -> Surface {
    let mut s = Surface::default();
    for p in model
        .packages
        .iter()
        .filter(|p| p.visibility == Visibility::Public)
    {
        s.packages.push(p.name.clone());
        s.associations
            .extend(p.associations.iter().map(|a| a.name.clone()));
        for i in &p.interfaces {
            let mut members: Vec<String> =
                i.extends.iter().map(|e| format!("extends {e}")).collect();
            members.extend(
                i.methods
                    .iter()
                    .map(|m| format!("method {}", print_signature(m))),
            );
            members.sort();
            s.symbols.push(ExportedSymbol {
                kind: "interface".into(),
                name: i.name.clone(),
                members,
            });
        }
        for c in &p.classes {
            let mut members = Vec::new();
            if c.is_abstract {
                members.push("abstract".to_string());
            }
            if let Some(b) = &c.parent {
                members.push(format!("extends {b}"));
            }
            members.extend(c.implements.iter().map(|i| format!("implements {i}")));
            for f in c
                .fields
                .iter()
                .filter(|f| f.visibility == Visibility::Public)
            {
                members.push(format!("field {}: {}", f.name, print_type(&f.ty)));
            }
            for k in c
                .constructors
                .iter()
                .filter(|k| k.visibility == Visibility::Public)
            {
                let params: Vec<String> = k
                    .params
                    .iter()
                    .map(|p| format!("{}: {}", p.name, print_type(&p.ty)))
                    .collect();
                members.push(format!("constructor({})", params.join(", ")));
            }
            for m in c
                .methods
                .iter()
                .filter(|m| m.visibility == Visibility::Public)
            {
                let prefix = if m.has_body() {
                    "method"
                } else {
                    "abstract method"
                };
                members.push(format!("{prefix} {}", print_signature(m)));
            }
            members.sort();
            s.symbols.push(ExportedSymbol {
                kind: "class".into(),
                name: c.name.clone(),
                members,
            });
        }
        for r in &p.rules {
            s.symbols.push(ExportedSymbol {
                kind: "rule".into(),
                name: r.name.clone(),
                members: Vec::new(),
            });
        }
        for a in &p.activities {
            s.symbols.push(ExportedSymbol {
                kind: "activity".into(),
                name: a.name.clone(),
                members: Vec::new(),
            });
        }
    }
    s.packages.sort();
    s.associations.sort();
    s.symbols.sort();
    s
}

/// Public signatures that name a type declared in a private package of the same grammar.
fn private_type_leaks(model: &GrammarModel) -> Vec<Diagnostic> {
    let private: BTreeSet<&str> = model
        .packages
        .iter()
        .filter(|p| p.visibility == Visibility::Private)
        .flat_map(|p| {
            p.classes
                .iter()
                .map(|c| c.name.as_str())
                .chain(p.interfaces.iter().map(|i| i.name.as_str()))
        })
        .collect();
    fn named(t: &TypeExpr) -> Option<&str> {
        match t {
            TypeExpr::Named(n) => Some(n),
            TypeExpr::List(inner) => named(inner),
            _ => None,
        }
    }
    let mut out = Vec::new();
    let mut leak = |owner: &str, member: &str, ty: &str, span| {
        if private.contains(ty) {
            out.push(
                Diagnostic::error(
                    DiagnosticKind::PrivateTypeInPublicSignature,
                    format!("public `{owner}` exposes private type `{ty}` in `{member}`"),
                )
                .with_entity(owner)
                .at(span),
            );
        }
    };
    for p in model
        .packages
        .iter()
        .filter(|p| p.visibility == Visibility::Public)
    {
        for i in &p.interfaces {
            for e in &i.extends {
                leak(&i.name, "extends", e, &i.span);
            }
            for m in &i.methods {
                for t in m.params.iter().map(|p| &p.ty).chain([&m.ret]) {
                    if let Some(n) = named(t) {
                        leak(&i.name, &m.name, n, &m.span);
                    }
                }
            }
        }
        for c in &p.classes {
            for b in c.parent.iter().chain(&c.implements) {
                leak(&c.name, "extends", b, &c.span);
            }
            for f in c
                .fields
                .iter()
                .filter(|f| f.visibility == Visibility::Public)
            {
                if let Some(n) = named(&f.ty) {
                    leak(&c.name, &f.name, n, &f.span);
                }
            }
            for m in c
                .methods
                .iter()
                .chain(&c.constructors)
                .filter(|m| m.visibility == Visibility::Public)
            {
                for t in m.params.iter().map(|p| &p.ty).chain([&m.ret]) {
                    if let Some(n) = named(t) {
                        leak(&c.name, &m.name, n, &m.span);
                    }
                }
            }
        }
    }
    out
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// XOR with a keystream of SHA-256 blocks over (module, version, counter). Self-inverse.
fn mask(module: &str, version: &str, bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len());
    for (counter, chunk) in bytes.chunks(32).enumerate() {
        let mut h = Sha256::new();
        h.update(b"dgm-seal\0");
        h.update(module.as_bytes());
        h.update(b"\0");
        h.update(version.as_bytes());
        h.update((counter as u64).to_le_bytes());
        let block = h.finalize();
        out.extend(chunk.iter().zip(block.iter()).map(|(b, k)| b ^ k));
    }
    out
}

impl ModuleArchive {
    /// Package a grammar. It must validate standalone against `imports`.
    /// Returns the archive plus warnings.
    pub fn seal(
        grammar: &GrammarModel,
        imports: &[ModuleArchive],
        sealed: bool,
    ) -> Result<(ModuleArchive, Vec<Diagnostic>), Vec<Diagnostic>> {
        let mut diags = private_type_leaks(grammar);
        match link(grammar.clone(), imports) {
            Ok((_, warnings)) => diags.extend(warnings),
            Err(errs) => diags.extend(errs),
        }
        if has_errors(&diags) {
            return Err(diags);
        }
        let surface = public_surface(grammar);
        if surface.symbols.is_empty() {
            diags.push(
                Diagnostic::warning(
                    DiagnosticKind::EmptyExport,
                    format!(
                        "module `{}` exports nothing; importers can use none of it",
                        grammar.name
                    ),
                )
                .with_entity(&grammar.name),
            );
        }
        let version = grammar.version.clone().unwrap_or_else(|| "0".to_string());
        let text = print_grammar(grammar).into_bytes();
        let body = if sealed {
            mask(&grammar.name, &version, &text)
        } else {
            text
        };
        let mut imports: Vec<String> = grammar.imports.iter().map(|i| i.module.clone()).collect();
        imports.sort();
        imports.dedup();
        let manifest = Manifest {
            format: FORMAT_VERSION,
            module: grammar.name.clone(),
            version,
            imports,
            sealed,
            checksum: checksum(&body),
            surface,
        };
        Ok((ModuleArchive { manifest, body }, diags))
    }

    pub fn name(&self) -> &str {
        &self.manifest.module
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        let mut out = MAGIC.to_vec();
        for (entry, bytes) in [(MANIFEST_ENTRY, &manifest), (BODY_ENTRY, &self.body)] {
            out.extend_from_slice(format!("{entry} {}\n", bytes.len()).as_bytes());
            out.extend_from_slice(bytes);
            out.push(b'\n');
        }
        out
    }

    /// Parse the container. Integrity is checked separately by [`ModuleArchive::verify`].
    pub fn from_bytes(bytes: &[u8]) -> Result<ModuleArchive, Diagnostic> {
        let bad = |what: &str| {
            Diagnostic::error(
                DiagnosticKind::MalformedArchive,
                format!("malformed archive: {what}"),
            )
        };
        let mut rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| bad("missing DGM1 header"))?;
        let mut entries = Vec::new();
        for expected in [MANIFEST_ENTRY, BODY_ENTRY] {
            let nl = rest
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| bad("truncated entry header"))?;
            let header =
                std::str::from_utf8(&rest[..nl]).map_err(|_| bad("entry header is not UTF-8"))?;
            let (name, len) = header
                .split_once(' ')
                .ok_or_else(|| bad("entry header lacks a length"))?;
            if name != expected {
                return Err(bad(&format!("expected entry `{expected}`, found `{name}`")));
            }
            let len: usize = len
                .parse()
                .map_err(|_| bad("entry length is not a number"))?;
            rest = &rest[nl + 1..];
            if rest.len() < len + 1 || rest[len] != b'\n' {
                return Err(bad(&format!("entry `{name}` is truncated")));
            }
            entries.push(rest[..len].to_vec());
            rest = &rest[len + 1..];
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes after the body"));
        }
        let body = entries.pop().expect("two entries");
        let manifest: Manifest =
            serde_json::from_slice(&entries[0]).map_err(|e| bad(&format!("manifest.json: {e}")))?;
        if manifest.format != FORMAT_VERSION {
            return Err(bad(&format!(
                "unsupported format version {}",
                manifest.format
            )));
        }
        Ok(ModuleArchive { manifest, body })
    }

    pub fn read(path: &Path) -> std::io::Result<Result<ModuleArchive, Diagnostic>> {
        Ok(ModuleArchive::from_bytes(&std::fs::read(path)?))
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn verify(&self) -> Result<(), Diagnostic> {
        let actual = checksum(&self.body);
        if actual == self.manifest.checksum {
            Ok(())
        } else {
            Err(archive_error(
                DiagnosticKind::ChecksumMismatch,
                &self.manifest.module,
                format!(
                    "archive `{}` body checksum {actual} does not match manifest checksum {}",
                    self.manifest.module, self.manifest.checksum
                ),
            ))
        }
    }

    /// Decode the body and confirm the manifest describes it faithfully.
    pub fn grammar(&self) -> Result<GrammarModel, Vec<Diagnostic>> {
        self.verify().map_err(|d| vec![d])?;
        let m = &self.manifest;
        let text = if m.sealed {
            mask(&m.module, &m.version, &self.body)
        } else {
            self.body.clone()
        };
        let text = String::from_utf8(text).map_err(|_| {
            vec![archive_error(
                DiagnosticKind::MalformedArchive,
                &m.module,
                format!("body of `{}` is not UTF-8", m.module),
            )]
        })?;
        let model = parse_grammar(&format!("{}.dgm", m.module), &text)?;
        let mut imports: Vec<String> = model.imports.iter().map(|i| i.module.clone()).collect();
        imports.sort();
        imports.dedup();
        let version = model.version.clone().unwrap_or_else(|| "0".to_string());
        if model.name != m.module
            || version != m.version
            || imports != m.imports
            || public_surface(&model) != m.surface
        {
            return Err(vec![archive_error(
                DiagnosticKind::ManifestMismatch,
                &m.module,
                format!("manifest of `{}` does not describe its body", m.module),
            )]);
        }
        Ok(model)
    }

    /// Stable text listing built from the manifest alone.
    pub fn inspect(&self) -> Result<String, Diagnostic> {
        self.verify()?;
        let m = &self.manifest;
        let mut out = String::new();
        let none = |v: &[String]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.join(", ")
            }
        };
        let _ = writeln!(out, "module        {}", m.module);
        let _ = writeln!(out, "version       {}", m.version);
        let _ = writeln!(out, "sealed        {}", if m.sealed { "yes" } else { "no" });
        let _ = writeln!(
            out,
            "inspectable   {}",
            if m.sealed { "manifest only" } else { "in full" }
        );
        let _ = writeln!(out, "checksum      {}", m.checksum);
        let _ = writeln!(out, "imports       {}", none(&m.imports));
        let _ = writeln!(out, "packages      {}", none(&m.surface.packages));
        let _ = writeln!(out, "associations  {}", none(&m.surface.associations));
        out.push('\n');
        let _ = writeln!(out, "{:<10} {:<24} member", "kind", "name");
        for s in &m.surface.symbols {
            if s.members.is_empty() {
                let _ = writeln!(out, "{:<10} {:<24} -", s.kind, s.name);
            }
            for member in &s.members {
                let _ = writeln!(out, "{:<10} {:<24} {member}", s.kind, s.name);
            }
        }
        Ok(out)
    }
}

/// Resolve the root's imports against the archives and build the program.
///
/// The module table is the root followed by every reachable import sorted by
/// name, so the result does not depend on the order of `archives`. Archives
/// with the same name and checksum unify; the same name with a different
/// checksum is a version conflict.
pub fn link(
    root: GrammarModel,
    archives: &[ModuleArchive],
) -> Result<(Program, Vec<Diagnostic>), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut by_name: BTreeMap<&str, &ModuleArchive> = BTreeMap::new();
    let mut conflicts: BTreeSet<&str> = BTreeSet::new();
    for a in archives {
        if let Err(d) = a.verify() {
            diags.push(d);
            continue;
        }
        match by_name.get(a.name()) {
            Some(prev) if prev.manifest.checksum != a.manifest.checksum => {
                if conflicts.insert(a.name()) {
                    let mut sums = [
                        prev.manifest.checksum.as_str(),
                        a.manifest.checksum.as_str(),
                    ];
                    sums.sort();
                    diags.push(archive_error(
                        DiagnosticKind::VersionConflict,
                        a.name(),
                        format!(
                            "module `{}` is supplied twice with different content ({} and {})",
                            a.name(),
                            sums[0],
                            sums[1]
                        ),
                    ));
                }
            }
            _ => {
                by_name.insert(a.name(), a);
            }
        }
    }
    if !diags.is_empty() {
        return Err(sort_diags(diags));
    }

    // Breadth-first closure over imports; each module appears once.
    let mut needed: BTreeMap<String, GrammarModel> = BTreeMap::new();
    let mut queue: VecDeque<(String, crate::ast::Import, String)> = root
        .imports
        .iter()
        .map(|i| (i.module.clone(), i.clone(), root.name.clone()))
        .collect();
    while let Some((name, import, importer)) = queue.pop_front() {
        if name == root.name || needed.contains_key(&name) {
            continue;
        }
        let Some(archive) = by_name.get(name.as_str()) else {
            diags.push(
                Diagnostic::error(
                    DiagnosticKind::UnresolvedImport,
                    format!("module `{importer}` imports `{name}`, but no archive provides it"),
                )
                .with_entity(&name)
                .at(&import.span),
            );
            continue;
        };
        match archive.grammar() {
            Ok(model) => {
                for i in &model.imports {
                    queue.push_back((i.module.clone(), i.clone(), name.clone()));
                }
                needed.insert(name, model);
            }
            Err(ds) => diags.extend(ds),
        }
    }
    if !diags.is_empty() {
        return Err(sort_diags(diags));
    }

    let mut modules = vec![root_module(root)];
    let index: BTreeMap<String, ModuleId> = needed
        .keys()
        .enumerate()
        .map(|(i, n)| (n.clone(), i + 1))
        .collect();
    for (name, model) in needed {
        let archive = by_name[name.as_str()];
        let mut m = root_module(model);
        m.sealed = archive.manifest.sealed;
        m.checksum = Some(archive.manifest.checksum.clone());
        modules.push(m);
    }
    let root_name = modules[0].model.name.clone();
    for m in &mut modules {
        let mut imports: Vec<ModuleId> = m
            .model
            .imports
            .iter()
            .filter_map(|i| {
                if i.module == root_name {
                    Some(0)
                } else {
                    index.get(&i.module).copied()
                }
            })
            .collect();
        imports.sort_unstable();
        imports.dedup();
        m.imports = imports;
    }
    compile(modules).map_err(sort_diags)
}

fn sort_diags(mut diags: Vec<Diagnostic>) -> Vec<Diagnostic> {
    diags.sort_by_key(Diagnostic::sort_key);
    diags.dedup();
    diags
}
