//! Launch manifests: a program graph plus the address table resolving its
//! placeholders, as one canonical JSON document.
//!
//! ```text
//! {"addresses":{"<placeholder>":{"host":"127.0.0.1","port":40001}},
//!  "groups":{"default":[],"producer":[0,1]},
//!  "name":"producer-consumer",
//!  "nodes":[{"args":[0,10],"children":[],"colocation":null,"factory":"Range",
//!            "group":"producer","id":0,"kind":"service","placeholder":0}, ...]}
//! ```

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde_json::{Map, Number, Value};

use crate::json;
use crate::topology::{ColocationMode, NodeId, NodeKind, NodeSpec, ProgramGraph};
use crate::value::{ArgValue, HandlePolicy, PlaceholderId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
}

impl Endpoint {
    pub fn new(host: impl Into<String>, port: u16) -> Result<Self, ManifestError> {
        if port == 0 {
            return Err(ManifestError::Schema("port must be in 1..=65535".into()));
        }
        Ok(Endpoint {
            host: host.into(),
            port,
        })
    }

    pub fn loopback(port: u16) -> Result<Self, ManifestError> {
        Endpoint::new("127.0.0.1", port)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

/// Placeholder to endpoint mapping filled in at launch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressTable {
    entries: BTreeMap<PlaceholderId, Endpoint>,
}

impl AddressTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, placeholder: PlaceholderId, endpoint: Endpoint) -> Option<Endpoint> {
        self.entries.insert(placeholder, endpoint)
    }

    pub fn get(&self, placeholder: PlaceholderId) -> Option<&Endpoint> {
        self.entries.get(&placeholder)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlaceholderId, &Endpoint)> {
        self.entries.iter().map(|(p, e)| (*p, e))
    }

    /// Placeholders the program owns or references that have no endpoint.
    pub fn missing_for(&self, program: &ProgramGraph) -> BTreeSet<PlaceholderId> {
        let mut wanted: BTreeSet<PlaceholderId> = program.placeholders().map(|(p, _)| p).collect();
        for n in program.nodes() {
            wanted.extend(n.handle_refs());
        }
        wanted
            .into_iter()
            .filter(|p| !self.entries.contains_key(p))
            .collect()
    }

    /// True when endpoints are pairwise distinct.
    pub fn endpoints_distinct(&self) -> bool {
        let set: BTreeSet<&Endpoint> = self.entries.values().collect();
        set.len() == self.entries.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Parse(String),
    #[error("manifest schema error: {0}")]
    Schema(String),
}

fn schema(msg: impl Into<String>) -> ManifestError {
    ManifestError::Schema(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub program: ProgramGraph,
    pub addresses: AddressTable,
}

impl Manifest {
    pub fn new(program: ProgramGraph, addresses: AddressTable) -> Self {
        Manifest { program, addresses }
    }

    pub fn to_json(&self) -> Result<Value, ManifestError> {
        let mut root = Map::new();
        let mut addrs = Map::new();
        for (p, e) in self.addresses.iter() {
            let mut ep = Map::new();
            ep.insert("host".into(), Value::String(e.host.clone()));
            ep.insert("port".into(), Value::Number(Number::from(e.port)));
            addrs.insert(p.0.to_string(), Value::Object(ep));
        }
        root.insert("addresses".into(), Value::Object(addrs));

        let mut groups = Map::new();
        for (name, members) in self.program.groups() {
            let ids = members.iter().map(|id| Value::Number(Number::from(id.0))).collect();
            groups.insert(name.clone(), Value::Array(ids));
        }
        root.insert("groups".into(), Value::Object(groups));
        root.insert("name".into(), Value::String(self.program.name().into()));

        let mut nodes = Vec::new();
        for n in self.program.nodes() {
            nodes.push(node_to_json(n)?);
        }
        root.insert("nodes".into(), Value::Array(nodes));
        Ok(Value::Object(root))
    }

    pub fn to_canonical_string(&self) -> Result<String, ManifestError> {
        Ok(json::to_string(&self.to_json()?))
    }

    pub fn from_json(root: &Value) -> Result<Self, ManifestError> {
        let obj = root.as_object().ok_or_else(|| schema("root must be an object"))?;
        let name = obj
            .get("name")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| schema("missing program name"))?;

        let mut groups = BTreeMap::new();
        let raw_groups = obj
            .get("groups")
            .and_then(Value::as_object)
            .ok_or_else(|| schema("missing groups"))?;
        for (gname, ids) in raw_groups {
            let ids = ids
                .as_array()
                .ok_or_else(|| schema(format!("group {gname:?} must be an array")))?;
            let mut set = BTreeSet::new();
            for id in ids {
                set.insert(NodeId(as_index(id, "group member")?));
            }
            groups.insert(gname.clone(), set);
        }

        let raw_nodes = obj
            .get("nodes")
            .and_then(Value::as_array)
            .ok_or_else(|| schema("missing nodes"))?;
        let mut nodes = Vec::with_capacity(raw_nodes.len());
        for (i, raw) in raw_nodes.iter().enumerate() {
            let n = node_from_json(raw)?;
            if n.node_id.0 != i {
                return Err(schema(format!("node ids must be dense; found {} at {i}", n.node_id)));
            }
            nodes.push(n);
        }

        let mut addresses = AddressTable::new();
        if let Some(raw) = obj.get("addresses") {
            let raw = raw.as_object().ok_or_else(|| schema("addresses must be an object"))?;
            for (key, ep) in raw {
                let p: u64 = key
                    .parse()
                    .map_err(|_| schema(format!("bad placeholder key {key:?}")))?;
                let host = ep
                    .get("host")
                    .and_then(Value::as_str)
                    .ok_or_else(|| schema("endpoint host"))?;
                let port = ep
                    .get("port")
                    .and_then(Value::as_u64)
                    .and_then(|p| u16::try_from(p).ok())
                    .ok_or_else(|| schema("endpoint port"))?;
                addresses.insert(PlaceholderId(p), Endpoint::new(host, port)?);
            }
        }

        Ok(Manifest {
            program: ProgramGraph::from_parts(name.into(), nodes, groups),
            addresses,
        })
    }

    pub fn parse(text: &[u8]) -> Result<Self, ManifestError> {
        let root: Value =
            serde_json::from_slice(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
        Manifest::from_json(&root)
    }
}

fn as_index(v: &Value, what: &str) -> Result<usize, ManifestError> {
    v.as_u64()
        .and_then(|x| usize::try_from(x).ok())
        .ok_or_else(|| schema(format!("{what} must be a nonnegative integer")))
}

fn node_to_json(n: &NodeSpec) -> Result<Value, ManifestError> {
    let mut m = Map::new();
    let args = n
        .args
        .iter()
        .map(|a| a.to_json(HandlePolicy::Allow))
        .collect::<Result<_, _>>()
        .map_err(|e| schema(format!("node {}: {e}", n.node_id)))?;
    m.insert("args".into(), Value::Array(args));
    m.insert(
        "children".into(),
        Value::Array(n.children.iter().map(|c| Value::Number(Number::from(c.0))).collect()),
    );
    m.insert(
        "colocation".into(),
        n.colocation
            .map_or(Value::Null, |c| Value::String(c.as_str().into())),
    );
    m.insert("factory".into(), Value::String(n.factory.clone()));
    m.insert("group".into(), Value::String(n.group.clone()));
    m.insert("id".into(), Value::Number(Number::from(n.node_id.0)));
    m.insert("kind".into(), Value::String(n.kind.as_str().into()));
    m.insert(
        "placeholder".into(),
        n.placeholder
            .map_or(Value::Null, |p| Value::Number(Number::from(p.0))),
    );
    Ok(Value::Object(m))
}

fn node_from_json(v: &Value) -> Result<NodeSpec, ManifestError> {
    let m = v.as_object().ok_or_else(|| schema("node must be an object"))?;
    let field = |k: &str| m.get(k).ok_or_else(|| schema(format!("node missing {k:?}")));
    let node_id = NodeId(as_index(field("id")?, "node id")?);
    let kind = field("kind")?
        .as_str()
        .and_then(NodeKind::parse)
        .ok_or_else(|| schema(format!("node {node_id}: unknown kind")))?;
    let factory = field("factory")?
        .as_str()
        .ok_or_else(|| schema("factory must be a string"))?;
    let group = field("group")?
        .as_str()
        .ok_or_else(|| schema("group must be a string"))?;
    let args = field("args")?
        .as_array()
        .ok_or_else(|| schema("args must be an array"))?
        .iter()
        .map(|a| ArgValue::from_json(a, HandlePolicy::Allow))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| schema(format!("node {node_id}: {e}")))?;
    let placeholder = match m.get("placeholder") {
        None | Some(Value::Null) => None,
        Some(p) => Some(PlaceholderId(
            p.as_u64().ok_or_else(|| schema("placeholder must be an integer"))?,
        )),
    };
    let children = match m.get("children") {
        None => Vec::new(),
        Some(c) => c
            .as_array()
            .ok_or_else(|| schema("children must be an array"))?
            .iter()
            .map(|c| as_index(c, "child id").map(NodeId))
            .collect::<Result<_, _>>()?,
    };
    let colocation = match m.get("colocation") {
        None | Some(Value::Null) => None,
        Some(c) => Some(
            c.as_str()
                .and_then(ColocationMode::parse)
                .ok_or_else(|| schema("colocation must be \"threads\" or \"processes\""))?,
        ),
    };
    Ok(NodeSpec {
        node_id,
        kind,
        factory: factory.into(),
        args,
        group: group.into(),
        placeholder,
        children,
        colocation,
    })
}
