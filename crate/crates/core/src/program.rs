//! A resolved program: the module table, per-module name scopes and the merged schema.
//!
//! Module 0 is the root grammar. Symbols of imported modules are keyed
//! `module::Name`; root symbols keep their bare name.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ast::{Activity, GrammarModel, MethodBody, MethodDef, Rule, TypeExpr, Visibility};
use crate::diag::{Diagnostic, DiagnosticKind, SourceSpan};
use crate::schema::{
    ClassInfo, FieldInfo, InterfaceInfo, MethodSig, ModuleId, Schema, ROOT_MODULE,
};
use crate::value::Type;

#[derive(Clone, Debug)]
pub struct Module {
    pub name: String,
    pub version: String,
    pub model: GrammarModel,
    /// Direct imports, sorted by module name.
    pub imports: Vec<ModuleId>,
    pub sealed: bool,
    pub checksum: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Namespace {
    Type,
    Rule,
    Activity,
}

impl Namespace {
    fn noun(self) -> &'static str {
        match self {
            Namespace::Type => "type",
            Namespace::Rule => "rule",
            Namespace::Activity => "activity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Symbol {
    pub key: String,
    pub name: String,
    pub module: ModuleId,
    /// Declared in a public package.
    pub exported: bool,
    pub ns: Namespace,
}

/// Result of resolving a name from inside a module.
#[derive(Debug)]
pub enum Lookup<'a> {
    Found(&'a Symbol),
    /// The name exists only in a private package of a direct import.
    Private(&'a Symbol),
    Missing,
}

#[derive(Clone, Debug)]
pub struct RuleEntry {
    pub key: String,
    pub module: ModuleId,
    pub exported: bool,
    pub rule: Rule,
}

#[derive(Clone, Debug)]
pub struct ActivityEntry {
    pub key: String,
    pub module: ModuleId,
    pub exported: bool,
    pub activity: Activity,
}

#[derive(Clone, Debug, Default)]
struct ModuleScope {
    visible: HashMap<(Namespace, String), Symbol>,
    hidden: HashMap<(Namespace, String), Symbol>,
}

#[derive(Clone, Debug)]
pub struct Program {
    pub modules: Vec<Module>,
    pub schema: Schema,
    pub rules: BTreeMap<String, RuleEntry>,
    pub activities: BTreeMap<String, ActivityEntry>,
    scopes: Vec<ModuleScope>,
}

pub fn qualify(module: ModuleId, module_name: &str, name: &str) -> String {
    if module == ROOT_MODULE {
        name.to_string()
    } else {
        format!("{module_name}::{name}")
    }
}

/// Name of a key without its module prefix.
pub fn local_name(key: &str) -> &str {
    key.rsplit("::").next().unwrap_or(key)
}

impl Program {
    pub fn root(&self) -> &Module {
        &self.modules[ROOT_MODULE]
    }

    pub fn lookup(&self, viewer: ModuleId, ns: Namespace, name: &str) -> Lookup<'_> {
        let Some(scope) = self.scopes.get(viewer) else {
            return Lookup::Missing;
        };
        let k = (ns, name.to_string());
        if let Some(s) = scope.visible.get(&k) {
            Lookup::Found(s)
        } else if let Some(s) = scope.hidden.get(&k) {
            Lookup::Private(s)
        } else {
            Lookup::Missing
        }
    }

    /// Resolve a name or produce the diagnostic kind and message describing the failure.
    pub fn resolve(
        &self,
        viewer: ModuleId,
        ns: Namespace,
        name: &str,
    ) -> Result<&Symbol, (DiagnosticKind, String)> {
        match self.lookup(viewer, ns, name) {
            Lookup::Found(s) => {
                // Foreign symbols are reachable only through a public package.
                debug_assert!(
                    s.module == viewer || s.exported,
                    "private symbol `{}` leaked into module {viewer}",
                    s.key
                );
                Ok(s)
            }
            Lookup::Private(s) => Err((
                DiagnosticKind::AccessViolation,
                format!(
                    "{} `{name}` is private to module `{}`",
                    ns.noun(),
                    self.modules[s.module].name
                ),
            )),
            Lookup::Missing => {
                let kind = match ns {
                    Namespace::Type => DiagnosticKind::UnknownType,
                    Namespace::Rule => DiagnosticKind::UnknownRule,
                    Namespace::Activity => DiagnosticKind::UnknownActivity,
                };
                Err((kind, format!("unknown {} `{name}`", ns.noun())))
            }
        }
    }

    pub fn resolve_type(
        &self,
        viewer: ModuleId,
        t: &TypeExpr,
    ) -> Result<Type, (DiagnosticKind, String)> {
        Ok(match t {
            TypeExpr::Int => Type::Int,
            TypeExpr::Real => Type::Real,
            TypeExpr::Bool => Type::Bool,
            TypeExpr::Str => Type::Str,
            TypeExpr::Void => Type::Void,
            TypeExpr::List(inner) => Type::List(Box::new(self.resolve_type(viewer, inner)?)),
            TypeExpr::Named(n) => {
                Type::Instance(self.resolve(viewer, Namespace::Type, n)?.key.clone())
            }
        })
    }

    /// Entry activity key: explicit `entry` declaration or an activity named `main`.
    pub fn entry(&self) -> Option<String> {
        let name = match &self.root().model.entry {
            Some(e) => e.activity.clone(),
            None => "main".to_string(),
        };
        match self.lookup(ROOT_MODULE, Namespace::Activity, &name) {
            Lookup::Found(s) => Some(s.key.clone()),
            _ => None,
        }
    }

    /// Symbols of `module` declared in public packages, sorted by key.
    pub fn exported_symbols(&self, module: ModuleId) -> Vec<&Symbol> {
        let mut out: Vec<&Symbol> = self.scopes[module]
            .visible
            .values()
            .filter(|s| s.module == module && s.exported)
            .collect();
        out.sort_by(|a, b| (a.ns, &a.key).cmp(&(b.ns, &b.key)));
        out
    }

    /// Build the program from a module table whose entry 0 is the root.
    /// Always returns a program; resolution failures become diagnostics and
    /// the affected types degrade to `Type::Unknown`.
    pub fn build(modules: Vec<Module>) -> (Program, Vec<Diagnostic>) {
        let mut b = Builder { diags: Vec::new() };
        let program = b.run(modules);
        (program, b.diags)
    }
}

struct Builder {
    diags: Vec<Diagnostic>,
}

struct Declared {
    sym: Symbol,
}

impl Builder {
    fn err(&mut self, kind: DiagnosticKind, entity: &str, msg: String, span: &SourceSpan) {
        self.diags
            .push(Diagnostic::error(kind, msg).with_entity(entity).at(span));
    }

    fn run(&mut self, modules: Vec<Module>) -> Program {
        let mut program = Program {
            modules,
            schema: Schema::default(),
            rules: BTreeMap::new(),
            activities: BTreeMap::new(),
            scopes: Vec::new(),
        };
        let own = self.declare(&mut program);
        self.scopes(&mut program, own);
        self.resolve_types(&mut program);
        self.validate(&program);
        program
    }

    /// Collect each module's own symbols, rules and activities.
    fn declare(&mut self, program: &mut Program) -> Vec<Vec<Declared>> {
        let mut all = Vec::new();
        for (mid, module) in program.modules.iter().enumerate() {
            let mut own: Vec<Declared> = Vec::new();
            let mut seen: HashMap<(Namespace, String), ()> = HashMap::new();
            let mut assoc: HashMap<String, ()> = HashMap::new();
            let model = &module.model;
            let mut add = |b: &mut Builder,
                           ns: Namespace,
                           name: &str,
                           exported: bool,
                           span: &SourceSpan|
             -> bool {
                if seen.insert((ns, name.to_string()), ()).is_some() {
                    b.err(
                        DiagnosticKind::DuplicateDefinition,
                        name,
                        format!("{} `{name}` is defined more than once", ns.noun()),
                        span,
                    );
                    return false;
                }
                own.push(Declared {
                    sym: Symbol {
                        key: qualify(mid, &module.name, name),
                        name: name.to_string(),
                        module: mid,
                        exported,
                        ns,
                    },
                });
                true
            };
            for p in &model.packages {
                let exported = p.visibility == Visibility::Public;
                for a in &p.associations {
                    if assoc.insert(a.name.clone(), ()).is_some() {
                        self.err(
                            DiagnosticKind::DuplicateDefinition,
                            &a.name,
                            format!("association `{}` is declared more than once", a.name),
                            &a.span,
                        );
                    }
                    if a.multi {
                        program.schema.multi_edges.insert(a.name.clone());
                    }
                }
                for i in &p.interfaces {
                    if add(self, Namespace::Type, &i.name, exported, &i.span) {
                        let key = qualify(mid, &module.name, &i.name);
                        program.schema.interfaces.insert(
                            key.clone(),
                            InterfaceInfo {
                                key,
                                module: mid,
                                package: p.name.clone(),
                                exported,
                                def: i.clone(),
                                extends: Vec::new(),
                                closure: BTreeSet::new(),
                                method_sigs: Vec::new(),
                            },
                        );
                    }
                }
                for c in &p.classes {
                    if add(self, Namespace::Type, &c.name, exported, &c.span) {
                        let key = qualify(mid, &module.name, &c.name);
                        program.schema.classes.insert(
                            key.clone(),
                            ClassInfo {
                                key,
                                module: mid,
                                package: p.name.clone(),
                                exported,
                                def: c.clone(),
                                parent: None,
                                interfaces: Vec::new(),
                                ancestors: Vec::new(),
                                all_interfaces: BTreeSet::new(),
                                fields: Vec::new(),
                                method_sigs: Vec::new(),
                                ctor_sigs: Vec::new(),
                            },
                        );
                    }
                }
            }
            for (vis, r) in model.all_rules() {
                let exported = vis == Visibility::Public;
                if add(self, Namespace::Rule, &r.name, exported, &r.span) {
                    let key = qualify(mid, &module.name, &r.name);
                    program.rules.insert(
                        key.clone(),
                        RuleEntry {
                            key,
                            module: mid,
                            exported,
                            rule: r.clone(),
                        },
                    );
                }
            }
            for (vis, a) in model.all_activities() {
                let exported = vis == Visibility::Public;
                if add(self, Namespace::Activity, &a.name, exported, &a.span) {
                    let key = qualify(mid, &module.name, &a.name);
                    program.activities.insert(
                        key.clone(),
                        ActivityEntry {
                            key,
                            module: mid,
                            exported,
                            activity: a.clone(),
                        },
                    );
                }
            }
            all.push(own);
        }
        all
    }

    /// Visible names per module: own symbols plus public symbols of direct imports.
    fn scopes(&mut self, program: &mut Program, own: Vec<Vec<Declared>>) {
        let mut scopes = vec![ModuleScope::default(); program.modules.len()];
        for (mid, module) in program.modules.iter().enumerate() {
            let scope = &mut scopes[mid];
            for d in &own[mid] {
                scope
                    .visible
                    .insert((d.sym.ns, d.sym.name.clone()), d.sym.clone());
            }
            let mut imports = module.imports.clone();
            imports.sort_by(|a, b| program.modules[*a].name.cmp(&program.modules[*b].name));
            imports.dedup();
            for imp in imports {
                for d in &own[imp] {
                    let k = (d.sym.ns, d.sym.name.clone());
                    if !d.sym.exported {
                        scope.hidden.entry(k).or_insert_with(|| d.sym.clone());
                        continue;
                    }
                    if let Some(prev) = scope.visible.get(&k) {
                        let mut owners = [
                            program.modules[prev.module].name.clone(),
                            program.modules[imp].name.clone(),
                        ];
                        owners.sort();
                        let span = module.model.span.clone();
                        self.err(
                            DiagnosticKind::DuplicateSymbol,
                            &d.sym.name,
                            format!(
                                "{} `{}` is visible in module `{}` from both `{}` and `{}`",
                                d.sym.ns.noun(),
                                d.sym.name,
                                module.name,
                                owners[0],
                                owners[1]
                            ),
                            &span,
                        );
                        continue;
                    }
                    scope.hidden.remove(&k);
                    scope.visible.insert(k, d.sym.clone());
                }
            }
        }
        program.scopes = scopes;
    }

    fn type_of(
        &mut self,
        program: &Program,
        viewer: ModuleId,
        t: &TypeExpr,
        entity: &str,
        span: &SourceSpan,
    ) -> Type {
        match program.resolve_type(viewer, t) {
            Ok(ty) => ty,
            Err((kind, msg)) => {
                self.err(kind, entity, msg, span);
                Type::Unknown
            }
        }
    }

    fn sig_of(
        &mut self,
        program: &Program,
        viewer: ModuleId,
        owner: &str,
        m: &MethodDef,
    ) -> MethodSig {
        let entity = format!("{}.{}", local_name(owner), m.name);
        let params = m
            .params
            .iter()
            .map(|p| self.type_of(program, viewer, &p.ty, &entity, &m.span))
            .collect();
        let ret = self.type_of(program, viewer, &m.ret, &entity, &m.span);
        MethodSig {
            name: m.name.clone(),
            params,
            ret,
            visibility: m.visibility,
            owner: owner.to_string(),
            has_body: m.has_body(),
        }
    }

    fn resolve_types(&mut self, program: &mut Program) {
        // Direct references.
        let iface_keys: Vec<String> = program.schema.interfaces.keys().cloned().collect();
        for key in &iface_keys {
            let info = &program.schema.interfaces[key];
            let (module, def) = (info.module, info.def.clone());
            let mut extends = Vec::new();
            for e in &def.extends {
                match program.resolve(module, Namespace::Type, e) {
                    Ok(s) if program.schema.interfaces.contains_key(&s.key) => {
                        extends.push(s.key.clone())
                    }
                    Ok(_) => self.err(
                        DiagnosticKind::InvalidInterface,
                        &def.name,
                        format!(
                            "interface `{}` extends `{e}`, which is not an interface",
                            def.name
                        ),
                        &def.span,
                    ),
                    Err((kind, msg)) => self.err(kind, &def.name, msg, &def.span),
                }
            }
            let sigs: Vec<MethodSig> = def
                .methods
                .iter()
                .map(|m| self.sig_of(program, module, key, m))
                .collect();
            for m in &def.methods {
                if m.has_body() {
                    self.err(
                        DiagnosticKind::InvalidInterface,
                        &def.name,
                        format!(
                            "interface method `{}.{}` must not have a body",
                            def.name, m.name
                        ),
                        &m.span,
                    );
                }
            }
            let info = program.schema.interfaces.get_mut(key).expect("interface");
            info.extends = extends;
            info.method_sigs = sigs;
        }
        let class_keys: Vec<String> = program.schema.classes.keys().cloned().collect();
        for key in &class_keys {
            let info = &program.schema.classes[key];
            let (module, def) = (info.module, info.def.clone());
            let mut parent = None;
            if let Some(p) = &def.parent {
                match program.resolve(module, Namespace::Type, p) {
                    Ok(s) if program.schema.classes.contains_key(&s.key) => {
                        parent = Some(s.key.clone())
                    }
                    Ok(_) => self.err(
                        DiagnosticKind::TypeMismatch,
                        &def.name,
                        format!("class `{}` extends `{p}`, which is not a class", def.name),
                        &def.span,
                    ),
                    Err((kind, msg)) => self.err(kind, &def.name, msg, &def.span),
                }
            }
            let mut interfaces = Vec::new();
            for i in &def.implements {
                match program.resolve(module, Namespace::Type, i) {
                    Ok(s) if program.schema.interfaces.contains_key(&s.key) => {
                        interfaces.push(s.key.clone())
                    }
                    Ok(_) => self.err(
                        DiagnosticKind::InvalidInterface,
                        &def.name,
                        format!(
                            "class `{}` implements `{i}`, which is not an interface",
                            def.name
                        ),
                        &def.span,
                    ),
                    Err((kind, msg)) => self.err(kind, &def.name, msg, &def.span),
                }
            }
            let sigs: Vec<MethodSig> = def
                .methods
                .iter()
                .map(|m| self.sig_of(program, module, key, m))
                .collect();
            let ctors: Vec<MethodSig> = def
                .constructors
                .iter()
                .map(|m| self.sig_of(program, module, key, m))
                .collect();
            let info = program.schema.classes.get_mut(key).expect("class");
            info.parent = parent;
            info.interfaces = interfaces;
            info.method_sigs = sigs;
            info.ctor_sigs = ctors;
        }

        self.interface_cycles(program);
        self.class_cycles(program);

        // Closures. Visited sets keep these finite even on cyclic input.
        for key in &iface_keys {
            let mut closure = BTreeSet::new();
            let mut stack = vec![key.clone()];
            while let Some(k) = stack.pop() {
                if closure.insert(k.clone()) {
                    stack.extend(program.schema.interfaces[&k].extends.iter().cloned());
                }
            }
            program
                .schema
                .interfaces
                .get_mut(key)
                .expect("interface")
                .closure = closure;
        }
        for key in &class_keys {
            let mut ancestors = Vec::new();
            let mut cur = Some(key.clone());
            while let Some(k) = cur {
                if ancestors.contains(&k) {
                    break;
                }
                cur = program.schema.classes[&k].parent.clone();
                ancestors.push(k);
            }
            let mut all_interfaces = BTreeSet::new();
            for a in &ancestors {
                for i in &program.schema.classes[a].interfaces {
                    all_interfaces.extend(program.schema.interfaces[i].closure.iter().cloned());
                }
            }
            let info = program.schema.classes.get_mut(key).expect("class");
            info.ancestors = ancestors;
            info.all_interfaces = all_interfaces;
        }

        // Fields, root ancestor first.
        for key in &class_keys {
            let ancestors = program.schema.classes[key].ancestors.clone();
            let mut fields: Vec<FieldInfo> = Vec::new();
            for anc in ancestors.iter().rev() {
                let c = &program.schema.classes[anc];
                let (module, def) = (c.module, c.def.clone());
                for f in &def.fields {
                    let entity = format!("{}.{}", def.name, f.name);
                    if fields.iter().any(|x| x.name == f.name) {
                        if anc == key {
                            self.err(
                                DiagnosticKind::DuplicateField,
                                &entity,
                                format!("field `{}` is already declared along the inheritance chain of `{}`", f.name, def.name),
                                &f.span,
                            );
                        }
                        continue;
                    }
                    let ty = if anc == key {
                        self.type_of(program, module, &f.ty, &entity, &f.span)
                    } else {
                        program.resolve_type(module, &f.ty).unwrap_or(Type::Unknown)
                    };
                    fields.push(FieldInfo {
                        name: f.name.clone(),
                        ty,
                        visibility: f.visibility,
                        declared_in: anc.clone(),
                        default: f.default.clone(),
                    });
                }
            }
            program.schema.classes.get_mut(key).expect("class").fields = fields;
        }
    }

    fn interface_cycles(&mut self, program: &Program) {
        let ifaces = &program.schema.interfaces;
        let mut cycles: BTreeSet<Vec<String>> = BTreeSet::new();
        let mut done: BTreeSet<&str> = BTreeSet::new();
        for start in ifaces.keys() {
            if done.contains(start.as_str()) {
                continue;
            }
            // Iterative DFS with an explicit path.
            let mut path: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
            while let Some(&mut (node, ref mut idx)) = path.last_mut() {
                let ext = &ifaces[node].extends;
                if *idx < ext.len() {
                    let next = ext[*idx].as_str();
                    *idx += 1;
                    if let Some(pos) = path.iter().position(|(n, _)| *n == next) {
                        let cyc: Vec<String> =
                            path[pos..].iter().map(|(n, _)| n.to_string()).collect();
                        cycles.insert(canonical_cycle(cyc));
                    } else if !done.contains(next) {
                        path.push((next, 0));
                    }
                } else {
                    done.insert(node);
                    path.pop();
                }
            }
        }
        for cyc in cycles {
            let span = ifaces[&cyc[0]].def.span.clone();
            let names: Vec<&str> = cyc.iter().map(|k| local_name(k)).collect();
            self.err(
                DiagnosticKind::CyclicInterface,
                names[0],
                format!(
                    "cyclic interface extension: {} -> {}",
                    names.join(" -> "),
                    names[0]
                ),
                &span,
            );
        }
    }

    fn class_cycles(&mut self, program: &mut Program) {
        let mut cycles: BTreeSet<Vec<String>> = BTreeSet::new();
        for start in program.schema.classes.keys() {
            let mut path: Vec<String> = Vec::new();
            let mut cur = Some(start.clone());
            while let Some(k) = cur {
                if let Some(pos) = path.iter().position(|p| *p == k) {
                    cycles.insert(canonical_cycle(path[pos..].to_vec()));
                    break;
                }
                cur = program.schema.classes[&k].parent.clone();
                path.push(k);
            }
        }
        for cyc in cycles {
            let span = program.schema.classes[&cyc[0]].def.span.clone();
            let names: Vec<&str> = cyc.iter().map(|k| local_name(k)).collect();
            self.err(
                DiagnosticKind::CyclicInheritance,
                names[0],
                format!("cyclic inheritance: {} -> {}", names.join(" -> "), names[0]),
                &span,
            );
        }
    }

    fn validate(&mut self, program: &Program) {
        let schema = &program.schema;
        for c in schema.classes.values() {
            let name = c.def.name.as_str();
            // Duplicate methods and constructors by arity.
            let mut seen = BTreeSet::new();
            for m in &c.def.methods {
                if !seen.insert((m.name.as_str(), m.arity())) {
                    self.err(
                        DiagnosticKind::DuplicateDefinition,
                        &format!("{name}.{}", m.name),
                        format!(
                            "method `{name}.{}` with {} parameter(s) is defined more than once",
                            m.name,
                            m.arity()
                        ),
                        &m.span,
                    );
                }
                if !m.has_body() && !c.def.is_abstract {
                    self.err(
                        DiagnosticKind::MissingImplementation,
                        name,
                        format!(
                            "non-abstract class `{name}` declares abstract method `{}`",
                            m.name
                        ),
                        &m.span,
                    );
                }
                if let MethodBody::Activity(a) = &m.body {
                    if a.nodes.is_empty() {
                        self.err(
                            DiagnosticKind::InvalidActivity,
                            &format!("{name}.{}", m.name),
                            format!("method `{name}.{}` has an empty activity body", m.name),
                            &m.span,
                        );
                    }
                }
            }
            let mut arities = BTreeSet::new();
            for k in &c.def.constructors {
                if k.name != c.def.name {
                    self.err(
                        DiagnosticKind::InvalidConstructor,
                        name,
                        format!("constructor `{}` must bear the class name `{name}`", k.name),
                        &k.span,
                    );
                }
                if k.ret != TypeExpr::Void {
                    self.err(
                        DiagnosticKind::InvalidConstructor,
                        name,
                        format!("constructor of `{name}` must not declare a return type"),
                        &k.span,
                    );
                }
                if !arities.insert(k.arity()) {
                    self.err(
                        DiagnosticKind::InvalidConstructor,
                        name,
                        format!(
                            "class `{name}` has more than one constructor with {} parameter(s)",
                            k.arity()
                        ),
                        &k.span,
                    );
                }
            }

            // Overrides match exactly.
            for (m, sig) in c.def.methods.iter().zip(&c.method_sigs) {
                let inherited = c.ancestors.iter().skip(1).find_map(|a| {
                    schema.classes[a]
                        .method_sigs
                        .iter()
                        .find(|s| s.name == sig.name && s.params.len() == sig.params.len())
                });
                let from_iface = c.all_interfaces.iter().find_map(|i| {
                    schema.interfaces[i]
                        .method_sigs
                        .iter()
                        .find(|s| s.name == sig.name && s.params.len() == sig.params.len())
                });
                for base in inherited.into_iter().chain(from_iface) {
                    if base.params != sig.params || base.ret != sig.ret {
                        self.err(
                            DiagnosticKind::SignatureMismatch,
                            &format!("{name}.{}", m.name),
                            format!(
                                "`{name}.{}` does not match the signature declared in `{}`",
                                m.name,
                                local_name(&base.owner)
                            ),
                            &m.span,
                        );
                    }
                }
            }

            if c.def.is_abstract {
                continue;
            }
            // Every inherited obligation resolves to a body.
            let mut required: BTreeSet<(String, usize, String)> = BTreeSet::new();
            for i in &c.all_interfaces {
                for s in &schema.interfaces[i].method_sigs {
                    required.insert((s.name.clone(), s.params.len(), i.clone()));
                }
            }
            for a in c.ancestors.iter().skip(1) {
                for s in &schema.classes[a].method_sigs {
                    if !s.has_body {
                        required.insert((s.name.clone(), s.params.len(), a.clone()));
                    }
                }
            }
            let mut reported = BTreeSet::new();
            for (m, arity, origin) in required {
                if matches!(
                    schema.dispatch(&c.key, &m, arity),
                    crate::schema::Dispatch::Body { .. }
                ) {
                    continue;
                }
                if reported.insert((m.clone(), arity)) {
                    self.err(
                        DiagnosticKind::MissingImplementation,
                        name,
                        format!(
                            "class `{name}` does not implement `{m}` required by `{}`",
                            local_name(&origin)
                        ),
                        &c.def.span,
                    );
                }
            }
        }
        if let Some(e) = &program.root().model.entry {
            if let Err((kind, msg)) = program.resolve(ROOT_MODULE, Namespace::Activity, &e.activity)
            {
                self.err(kind, &e.activity, msg, &e.span);
            }
        }
    }
}

/// Rotate a cycle so that it starts at its smallest member.
fn canonical_cycle(mut cyc: Vec<String>) -> Vec<String> {
    if let Some(min) = cyc
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cmp(b.1))
        .map(|(i, _)| i)
    {
        cyc.rotate_left(min);
    }
    cyc
}

/// Wrap a single parsed grammar as a one-module table.
pub fn root_module(model: GrammarModel) -> Module {
    Module {
        name: model.name.clone(),
        version: model.version.clone().unwrap_or_else(|| "0".to_string()),
        model,
        imports: Vec::new(),
        sealed: false,
        checksum: None,
    }
}

/// Schema-level validation of a standalone grammar: inheritance, interfaces,
/// fields, overrides and implementation obligations.
pub fn validate_schema(grammar: &GrammarModel) -> Vec<Diagnostic> {
    let (_, diags) = Program::build(vec![root_module(grammar.clone())]);
    diags
}
