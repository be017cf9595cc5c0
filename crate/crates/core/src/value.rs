//! Attribute values and the static type lattice.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::BinOp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A runtime value. `Ref(None)` is the null instance reference.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Str(String),
    Ref(Option<InstanceId>),
    List(Vec<Value>),
    Void,
}

impl Value {
    pub fn as_instance(&self) -> Option<InstanceId> {
        match self {
            Value::Ref(id) => *id,
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Real(_) => "real",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::Ref(_) => "instance",
            Value::List(_) => "list",
            Value::Void => "void",
        }
    }

    /// Encoding used by the canonical graph format.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Value::Int(i) => json!(i),
            Value::Real(r) => json!(r),
            Value::Bool(b) => json!(b),
            Value::Str(s) => json!(s),
            Value::Ref(id) => json!({ "ref": id.map(|i| i.0) }),
            Value::List(items) => {
                serde_json::Value::Array(items.iter().map(Value::to_json).collect())
            }
            Value::Void => serde_json::Value::Null,
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Value, String> {
        use serde_json::Value as J;
        Ok(match v {
            J::Null => Value::Void,
            J::Bool(b) => Value::Bool(*b),
            J::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Value::Int(i)
                } else if let Some(f) = n.as_f64() {
                    Value::Real(f)
                } else {
                    return Err(format!("unrepresentable number {n}"));
                }
            }
            J::String(s) => Value::Str(s.clone()),
            J::Array(items) => Value::List(
                items
                    .iter()
                    .map(Value::from_json)
                    .collect::<Result<_, _>>()?,
            ),
            J::Object(map) => match (map.len(), map.get("ref")) {
                (1, Some(J::Null)) => Value::Ref(None),
                (1, Some(J::Number(n))) => Value::Ref(Some(InstanceId(
                    n.as_u64()
                        .ok_or_else(|| format!("bad instance reference {n}"))?,
                ))),
                _ => return Err(format!("unexpected object value {v}")),
            },
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{}", fmt_real(*r)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Ref(Some(id)) => write!(f, "#{id}"),
            Value::Ref(None) => f.write_str("null"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Void => f.write_str("void"),
        }
    }
}

/// Shortest round-trippable rendering that always keeps a fractional part or exponent.
pub fn fmt_real(r: f64) -> String {
    format!("{r:?}")
}

/// Resolved static type. Class and interface types carry the module-qualified key.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Int,
    Real,
    Bool,
    Str,
    Void,
    /// Type of the `null` literal.
    Null,
    Instance(String),
    List(Box<Type>),
    /// Produced after an error; compatible with everything to avoid cascades.
    Unknown,
}

impl Type {
    pub fn is_numeric(&self) -> bool {
        matches!(self, Type::Int | Type::Real | Type::Unknown)
    }

    pub fn is_instance(&self) -> bool {
        matches!(self, Type::Instance(_) | Type::Null | Type::Unknown)
    }

    /// Zero value used for fields declared without a default.
    pub fn zero(&self) -> Value {
        match self {
            Type::Int => Value::Int(0),
            Type::Real => Value::Real(0.0),
            Type::Bool => Value::Bool(false),
            Type::Str => Value::Str(String::new()),
            Type::Instance(_) | Type::Null | Type::Unknown => Value::Ref(None),
            Type::List(_) => Value::List(Vec::new()),
            Type::Void => Value::Void,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Real => f.write_str("real"),
            Type::Bool => f.write_str("bool"),
            Type::Str => f.write_str("string"),
            Type::Void => f.write_str("void"),
            Type::Null => f.write_str("null"),
            Type::Instance(k) => f.write_str(k),
            Type::List(t) => write!(f, "list<{t}>"),
            Type::Unknown => f.write_str("<unknown>"),
        }
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::List(x), Value::List(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_equal(p, q))
        }
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x == y,
            _ => a == b,
        },
    }
}

fn finite(r: f64) -> Result<Value, String> {
    if r.is_finite() {
        Ok(Value::Real(r))
    } else {
        Err("arithmetic produced a non-finite real".to_string())
    }
}

/// Strict binary operator semantics shared by constant folding and evaluation.
/// Integer arithmetic is checked; division or remainder by zero is an error.
pub fn binary(op: BinOp, l: &Value, r: &Value) -> Result<Value, String> {
    use Value::*;
    let bad = || {
        format!(
            "operator `{}` not applicable to {} and {}",
            op.symbol(),
            l.type_name(),
            r.type_name()
        )
    };
    let overflow = || format!("integer overflow in `{}`", op.symbol());
    Ok(match op {
        BinOp::And | BinOp::Or => match (l, r) {
            (Bool(a), Bool(b)) => Bool(if op == BinOp::And { *a && *b } else { *a || *b }),
            _ => return Err(bad()),
        },
        BinOp::Eq => Bool(values_equal(l, r)),
        BinOp::Ne => Bool(!values_equal(l, r)),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match (l, r) {
                (Str(a), Str(b)) => a.cmp(b),
                _ => {
                    let (a, b) = (l.as_f64().ok_or_else(bad)?, r.as_f64().ok_or_else(bad)?);
                    a.partial_cmp(&b).ok_or_else(bad)?
                }
            };
            Bool(match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            })
        }
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => match (l, r) {
            (Str(a), Str(b)) if op == BinOp::Add => Str(format!("{a}{b}")),
            (List(a), List(b)) if op == BinOp::Add => List(a.iter().chain(b).cloned().collect()),
            (Int(a), Int(b)) => {
                if matches!(op, BinOp::Div | BinOp::Rem) && *b == 0 {
                    return Err("division by zero".to_string());
                }
                Int(match op {
                    BinOp::Add => a.checked_add(*b),
                    BinOp::Sub => a.checked_sub(*b),
                    BinOp::Mul => a.checked_mul(*b),
                    BinOp::Div => a.checked_div(*b),
                    _ => a.checked_rem(*b),
                }
                .ok_or_else(overflow)?)
            }
            _ => {
                let (a, b) = (l.as_f64().ok_or_else(bad)?, r.as_f64().ok_or_else(bad)?);
                if matches!(op, BinOp::Div | BinOp::Rem) && b == 0.0 {
                    return Err("division by zero".to_string());
                }
                finite(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    _ => a % b,
                })?
            }
        },
    })
}
