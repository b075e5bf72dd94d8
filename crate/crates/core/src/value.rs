//! Argument values passed to node constructors and carried by RPC calls.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Number, Value};

/// Marker key used to encode a [`ArgValue::Handle`] as a JSON object.
pub const HANDLE_KEY: &str = "__handle__";

/// Opaque token standing in for a node's address until launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlaceholderId(pub u64);

impl fmt::Display for PlaceholderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

/// A tree-shaped argument. Handles may appear at any depth in launch
/// manifests but never on the wire.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ArgValue {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Seq(Vec<ArgValue>),
    Map(BTreeMap<String, ArgValue>),
    Handle(PlaceholderId),
}

/// Whether [`ArgValue::Handle`] is allowed when converting to or from JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandlePolicy {
    /// Launch manifests: handles encode as `{"__handle__": id}`.
    Allow,
    /// RPC payloads: handles are rejected.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("handle {0} cannot travel over the wire")]
    HandleOnWire(PlaceholderId),
    #[error("non-finite float {0} has no JSON form")]
    NonFinite(String),
    #[error("integer out of range: {0}")]
    IntegerRange(String),
    #[error("malformed handle marker")]
    BadHandle,
}

impl ArgValue {
    pub fn str(s: impl Into<String>) -> Self {
        ArgValue::Str(s.into())
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ArgValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Floats, and integers widened to floats.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ArgValue::Float(x) => Some(*x),
            ArgValue::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ArgValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ArgValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_seq(&self) -> Option<&[ArgValue]> {
        match self {
            ArgValue::Seq(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_handle(&self) -> Option<PlaceholderId> {
        match self {
            ArgValue::Handle(p) => Some(*p),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, ArgValue::Null)
    }

    /// Every handle reachable from this value, in depth-first order.
    pub fn handles(&self) -> Vec<PlaceholderId> {
        let mut out = Vec::new();
        self.collect_handles(&mut out);
        out
    }

    pub(crate) fn collect_handles(&self, out: &mut Vec<PlaceholderId>) {
        match self {
            ArgValue::Handle(p) => out.push(*p),
            ArgValue::Seq(items) => items.iter().for_each(|v| v.collect_handles(out)),
            ArgValue::Map(m) => m.values().for_each(|v| v.collect_handles(out)),
            _ => {}
        }
    }

    pub fn to_json(&self, policy: HandlePolicy) -> Result<Value, ValueError> {
        Ok(match self {
            ArgValue::Null => Value::Null,
            ArgValue::Bool(b) => Value::Bool(*b),
            ArgValue::Int(i) => Value::Number(Number::from(*i)),
            ArgValue::Float(x) => Value::Number(
                Number::from_f64(*x).ok_or_else(|| ValueError::NonFinite(x.to_string()))?,
            ),
            ArgValue::Str(s) => Value::String(s.clone()),
            ArgValue::Seq(items) => Value::Array(
                items
                    .iter()
                    .map(|v| v.to_json(policy))
                    .collect::<Result<_, _>>()?,
            ),
            ArgValue::Map(m) => {
                let mut out = Map::new();
                for (k, v) in m {
                    out.insert(k.clone(), v.to_json(policy)?);
                }
                Value::Object(out)
            }
            ArgValue::Handle(p) => match policy {
                HandlePolicy::Reject => return Err(ValueError::HandleOnWire(*p)),
                HandlePolicy::Allow => {
                    let mut out = Map::new();
                    out.insert(HANDLE_KEY.into(), Value::Number(Number::from(p.0)));
                    Value::Object(out)
                }
            },
        })
    }

    pub fn from_json(value: &Value, policy: HandlePolicy) -> Result<Self, ValueError> {
        Ok(match value {
            Value::Null => ArgValue::Null,
            Value::Bool(b) => ArgValue::Bool(*b),
            Value::Number(n) => number_to_arg(n)?,
            Value::String(s) => ArgValue::Str(s.clone()),
            Value::Array(items) => ArgValue::Seq(
                items
                    .iter()
                    .map(|v| ArgValue::from_json(v, policy))
                    .collect::<Result<_, _>>()?,
            ),
            Value::Object(m) => {
                if let Some(marker) = m.get(HANDLE_KEY) {
                    let id = match (m.len(), marker.as_u64()) {
                        (1, Some(id)) => id,
                        _ => return Err(ValueError::BadHandle),
                    };
                    return match policy {
                        HandlePolicy::Allow => Ok(ArgValue::Handle(PlaceholderId(id))),
                        HandlePolicy::Reject => Err(ValueError::HandleOnWire(PlaceholderId(id))),
                    };
                }
                let mut out = BTreeMap::new();
                for (k, v) in m {
                    out.insert(k.clone(), ArgValue::from_json(v, policy)?);
                }
                ArgValue::Map(out)
            }
        })
    }
}

fn number_to_arg(n: &Number) -> Result<ArgValue, ValueError> {
    if let Some(i) = n.as_i64() {
        Ok(ArgValue::Int(i))
    } else if n.is_u64() {
        Err(ValueError::IntegerRange(n.to_string()))
    } else {
        n.as_f64()
            .map(ArgValue::Float)
            .ok_or_else(|| ValueError::NonFinite(n.to_string()))
    }
}

impl From<bool> for ArgValue {
    fn from(b: bool) -> Self {
        ArgValue::Bool(b)
    }
}

impl From<i64> for ArgValue {
    fn from(i: i64) -> Self {
        ArgValue::Int(i)
    }
}

impl From<i32> for ArgValue {
    fn from(i: i32) -> Self {
        ArgValue::Int(i64::from(i))
    }
}

impl From<u32> for ArgValue {
    fn from(i: u32) -> Self {
        ArgValue::Int(i64::from(i))
    }
}

impl From<usize> for ArgValue {
    fn from(i: usize) -> Self {
        ArgValue::Int(i as i64)
    }
}

impl From<f64> for ArgValue {
    fn from(x: f64) -> Self {
        ArgValue::Float(x)
    }
}

impl From<&str> for ArgValue {
    fn from(s: &str) -> Self {
        ArgValue::Str(s.into())
    }
}

impl From<String> for ArgValue {
    fn from(s: String) -> Self {
        ArgValue::Str(s)
    }
}

impl<T: Into<ArgValue>> From<Vec<T>> for ArgValue {
    fn from(items: Vec<T>) -> Self {
        ArgValue::Seq(items.into_iter().map(Into::into).collect())
    }
}

impl From<PlaceholderId> for ArgValue {
    fn from(p: PlaceholderId) -> Self {
        ArgValue::Handle(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn handles_found_at_any_depth() {
        let mut m = BTreeMap::new();
        m.insert("inner".into(), ArgValue::Seq(vec![ArgValue::Handle(PlaceholderId(3))]));
        let v = ArgValue::Seq(vec![ArgValue::Handle(PlaceholderId(1)), ArgValue::Map(m)]);
        assert_eq!(v.handles(), vec![PlaceholderId(1), PlaceholderId(3)]);
    }

    #[test]
    fn handle_marker_only_in_manifest_mode() {
        let v = ArgValue::Handle(PlaceholderId(7));
        let j = v.to_json(HandlePolicy::Allow).unwrap();
        assert_eq!(ArgValue::from_json(&j, HandlePolicy::Allow).unwrap(), v);
        assert_eq!(
            v.to_json(HandlePolicy::Reject),
            Err(ValueError::HandleOnWire(PlaceholderId(7)))
        );
        assert!(ArgValue::from_json(&j, HandlePolicy::Reject).is_err());
    }

    #[test]
    fn non_finite_floats_rejected() {
        assert!(ArgValue::Float(f64::NAN).to_json(HandlePolicy::Reject).is_err());
        assert!(ArgValue::Float(f64::INFINITY).to_json(HandlePolicy::Reject).is_err());
    }
}
