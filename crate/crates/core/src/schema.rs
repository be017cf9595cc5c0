//! Resolved class/interface schema: ancestry, conformance, fields and method lookup.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{ClassDef, Expr, InterfaceDef, MethodDef, Visibility};
use crate::value::Type;

/// Index of a module inside a linked program. The root grammar is module 0.
pub type ModuleId = usize;
pub const ROOT_MODULE: ModuleId = 0;

#[derive(Clone, Debug)]
pub struct FieldInfo {
    pub name: String,
    pub ty: Type,
    pub visibility: Visibility,
    /// Key of the class that declares the field.
    pub declared_in: String,
    pub default: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSig {
    pub name: String,
    pub params: Vec<Type>,
    pub ret: Type,
    pub visibility: Visibility,
    /// Key of the declaring class or interface.
    pub owner: String,
    pub has_body: bool,
}

#[derive(Clone, Debug)]
pub struct ClassInfo {
    pub key: String,
    pub module: ModuleId,
    pub package: String,
    pub exported: bool,
    pub def: ClassDef,
    pub parent: Option<String>,
    /// Directly implemented interfaces.
    pub interfaces: Vec<String>,
    /// The class itself followed by its ancestors, nearest first.
    pub ancestors: Vec<String>,
    /// Every interface implemented by the class or an ancestor, with extension closure.
    pub all_interfaces: BTreeSet<String>,
    /// Fields of the whole chain, root ancestor first.
    pub fields: Vec<FieldInfo>,
    /// Parallel to `def.methods`.
    pub method_sigs: Vec<MethodSig>,
    /// Parallel to `def.constructors`.
    pub ctor_sigs: Vec<MethodSig>,
}

#[derive(Clone, Debug)]
pub struct InterfaceInfo {
    pub key: String,
    pub module: ModuleId,
    pub package: String,
    pub exported: bool,
    pub def: InterfaceDef,
    pub extends: Vec<String>,
    /// The interface and every interface it transitively extends.
    pub closure: BTreeSet<String>,
    /// Parallel to `def.methods`.
    pub method_sigs: Vec<MethodSig>,
}

/// Outcome of dynamic dispatch.
#[derive(Debug)]
pub enum Dispatch<'a> {
    Body {
        method: &'a MethodDef,
        owner: &'a ClassInfo,
        sig: &'a MethodSig,
    },
    /// Only abstract declarations or interface signatures exist.
    Abstract,
    Missing,
}

#[derive(Clone, Debug, Default)]
pub struct Schema {
    pub classes: BTreeMap<String, ClassInfo>,
    pub interfaces: BTreeMap<String, InterfaceInfo>,
    pub multi_edges: BTreeSet<String>,
}

impl Schema {
    pub fn class(&self, key: &str) -> Option<&ClassInfo> {
        self.classes.get(key)
    }

    pub fn interface(&self, key: &str) -> Option<&InterfaceInfo> {
        self.interfaces.get(key)
    }

    pub fn is_type(&self, key: &str) -> bool {
        self.classes.contains_key(key) || self.interfaces.contains_key(key)
    }

    /// True iff `required` is the class itself, a transitive ancestor, or an
    /// interface implemented by the class or an ancestor.
    pub fn conforms(&self, class: &str, required: &str) -> bool {
        match self.classes.get(class) {
            Some(info) => {
                info.ancestors.iter().any(|a| a == required)
                    || info.all_interfaces.contains(required)
            }
            None => match self.interfaces.get(class) {
                Some(i) => i.closure.contains(required),
                None => false,
            },
        }
    }

    /// Static assignability between instance types (class or interface keys).
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        sub == sup || self.conforms(sub, sup)
    }

    /// Concrete and abstract classes whose instances conform to `ty`, sorted by key.
    pub fn conforming_classes(&self, ty: &str) -> Vec<&str> {
        self.classes
            .values()
            .filter(|c| self.conforms(&c.key, ty))
            .map(|c| c.key.as_str())
            .collect()
    }

    pub fn field(&self, class: &str, name: &str) -> Option<&FieldInfo> {
        self.classes
            .get(class)?
            .fields
            .iter()
            .find(|f| f.name == name)
    }

    pub fn is_multi_edge(&self, label: &str) -> bool {
        self.multi_edges.contains(label)
    }

    /// Static method lookup on a class or interface type by name and arity.
    pub fn method_sig(&self, ty: &str, name: &str, arity: usize) -> Option<&MethodSig> {
        if let Some(class) = self.classes.get(ty) {
            for anc in &class.ancestors {
                if let Some(c) = self.classes.get(anc) {
                    if let Some(sig) = c
                        .method_sigs
                        .iter()
                        .find(|s| s.name == name && s.params.len() == arity)
                    {
                        return Some(sig);
                    }
                }
            }
            for iface in &class.all_interfaces {
                if let Some(sig) = self.interface_method(iface, name, arity) {
                    return Some(sig);
                }
            }
            return None;
        }
        let iface = self.interfaces.get(ty)?;
        iface
            .closure
            .iter()
            .find_map(|i| self.interface_method(i, name, arity))
    }

    fn interface_method(&self, iface: &str, name: &str, arity: usize) -> Option<&MethodSig> {
        self.interfaces
            .get(iface)?
            .method_sigs
            .iter()
            .find(|s| s.name == name && s.params.len() == arity)
    }

    /// Walk the class chain for the first method body with matching name and arity.
    pub fn dispatch(&self, class: &str, name: &str, arity: usize) -> Dispatch<'_> {
        let Some(info) = self.classes.get(class) else {
            return Dispatch::Missing;
        };
        let mut declared = false;
        for anc in &info.ancestors {
            let Some(c) = self.classes.get(anc) else {
                continue;
            };
            for (m, sig) in c.def.methods.iter().zip(&c.method_sigs) {
                if m.name == name && m.arity() == arity {
                    if m.has_body() {
                        return Dispatch::Body {
                            method: m,
                            owner: c,
                            sig,
                        };
                    }
                    declared = true;
                }
            }
        }
        if declared || self.method_sig(class, name, arity).is_some() {
            Dispatch::Abstract
        } else {
            Dispatch::Missing
        }
    }

    /// Constructors are not inherited.
    pub fn constructor(&self, class: &str, arity: usize) -> Option<(&MethodDef, &MethodSig)> {
        let c = self.classes.get(class)?;
        c.def
            .constructors
            .iter()
            .zip(&c.ctor_sigs)
            .find(|(m, _)| m.arity() == arity)
    }

    /// Whether code running in the context of `context_class` may touch a
    /// private member declared in `declaring_class` (same class or subclass).
    pub fn private_access(&self, context_class: Option<&str>, declaring_class: &str) -> bool {
        context_class.is_some_and(|c| self.conforms(c, declaring_class))
    }

    /// Static assignability of `from` into a slot of type `to`, with int→real widening.
    pub fn assignable(&self, from: &Type, to: &Type) -> bool {
        match (from, to) {
            (Type::Unknown, _) | (_, Type::Unknown) => true,
            (Type::Int, Type::Real) => true,
            (Type::Null, Type::Instance(_)) => true,
            (Type::Instance(a), Type::Instance(b)) => self.is_subtype(a, b),
            (Type::List(a), Type::List(b)) => **a == Type::Unknown || a == b,
            (a, b) => a == b,
        }
    }
}
