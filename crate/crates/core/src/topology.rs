//! Program graphs: nodes, handles, resource groups and the edges that
//! handle passing creates.
//!
//! A node is a recipe (factory name plus arguments), never a running
//! service. Adding a node that can receive messages yields a [`Handle`]
//! carrying a fresh [`PlaceholderId`]; placing that handle anywhere inside
//! another node's arguments records an edge from the receiving node to the
//! provider. Addresses are bound to placeholders only at launch.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Deref, DerefMut};

use crate::value::{ArgValue, PlaceholderId};

/// Group every node lands in unless a named group is open.
pub const DEFAULT_GROUP: &str = "default";

/// Factory name used by cacher nodes; the runtime provides the proxy itself.
pub const CACHER_FACTORY: &str = "Cacher";

/// Factory name recorded on colocation nodes.
pub const COLOCATION_FACTORY: &str = "Colocation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Service,
    Leaf,
    Cacher,
    Colocation,
    Deferred,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Service => "service",
            NodeKind::Leaf => "leaf",
            NodeKind::Cacher => "cacher",
            NodeKind::Colocation => "colocation",
            NodeKind::Deferred => "deferred",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "service" => NodeKind::Service,
            "leaf" => NodeKind::Leaf,
            "cacher" => NodeKind::Cacher,
            "colocation" => NodeKind::Colocation,
            "deferred" => NodeKind::Deferred,
            _ => return None,
        })
    }

    /// Kinds that bind an endpoint of their own and therefore own a
    /// placeholder.
    pub fn is_addressable(self) -> bool {
        matches!(self, NodeKind::Service | NodeKind::Cacher | NodeKind::Deferred)
    }

    /// Kind used for group homogeneity: an unbound deferred node counts as
    /// the service it will become.
    fn group_class(self) -> NodeKind {
        match self {
            NodeKind::Deferred => NodeKind::Service,
            k => k,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ColocationMode {
    Threads,
    Processes,
}

impl ColocationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ColocationMode::Threads => "threads",
            ColocationMode::Processes => "processes",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "threads" => Some(ColocationMode::Threads),
            "processes" => Some(ColocationMode::Processes),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("group {group:?} holds {existing} nodes, cannot add a {new} node")]
    GroupTypeViolation {
        group: String,
        existing: NodeKind,
        new: NodeKind,
    },
    #[error("dangling handle {0}")]
    DanglingHandle(PlaceholderId),
}

/// A node recipe that has not been added to a graph yet.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDef {
    pub kind: NodeKind,
    pub factory: String,
    pub args: Vec<ArgValue>,
    pub children: Vec<NodeId>,
    pub colocation: Option<ColocationMode>,
}

impl NodeDef {
    /// A node that serves the factory's methods and hands out a handle.
    pub fn service(factory: impl Into<String>, args: Vec<ArgValue>) -> Self {
        NodeDef {
            kind: NodeKind::Service,
            factory: factory.into(),
            args,
            children: Vec::new(),
            colocation: None,
        }
    }

    /// A run-only node: it never binds an endpoint and yields no handle.
    pub fn leaf(factory: impl Into<String>, args: Vec<ArgValue>) -> Self {
        NodeDef {
            kind: NodeKind::Leaf,
            ..NodeDef::service(factory, args)
        }
    }

    /// A memoizing proxy in front of `target`. `ttl_seconds` may be
    /// `f64::INFINITY` to cache each key forever.
    pub fn cacher(target: &Handle, ttl_seconds: f64) -> Result<Self, TopologyError> {
        match target.kind {
            NodeKind::Service | NodeKind::Cacher | NodeKind::Deferred => {}
            k => {
                return Err(TopologyError::InvalidArgument(format!(
                    "cannot cache a {k} node"
                )))
            }
        }
        if ttl_seconds.is_nan() || ttl_seconds < 0.0 {
            return Err(TopologyError::InvalidArgument(format!(
                "ttl must be nonnegative, got {ttl_seconds}"
            )));
        }
        let ttl = if ttl_seconds.is_infinite() {
            ArgValue::Null
        } else {
            ArgValue::Float(ttl_seconds)
        };
        Ok(NodeDef {
            kind: NodeKind::Cacher,
            factory: CACHER_FACTORY.into(),
            args: alloc::vec![ArgValue::Handle(target.placeholder), ttl],
            children: Vec::new(),
            colocation: None,
        })
    }

    /// Wraps already-added nodes so the launcher places them together.
    pub fn colocation<'a>(
        children: impl IntoIterator<Item = &'a NodeSpec>,
        mode: ColocationMode,
    ) -> Result<Self, TopologyError> {
        let mut ids = Vec::new();
        for child in children {
            if child.kind == NodeKind::Colocation {
                return Err(TopologyError::InvalidArgument(
                    "colocation nodes cannot be nested".into(),
                ));
            }
            if ids.contains(&child.node_id) {
                return Err(TopologyError::InvalidArgument(format!(
                    "node {} listed twice",
                    child.node_id
                )));
            }
            ids.push(child.node_id);
        }
        if ids.is_empty() {
            return Err(TopologyError::InvalidArgument(
                "colocation needs at least one child".into(),
            ));
        }
        Ok(NodeDef {
            kind: NodeKind::Colocation,
            factory: COLOCATION_FACTORY.into(),
            args: Vec::new(),
            children: ids,
            colocation: Some(mode),
        })
    }
}

/// A node as recorded in a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub factory: String,
    pub args: Vec<ArgValue>,
    pub group: String,
    /// Present for addressable kinds.
    pub placeholder: Option<PlaceholderId>,
    /// Wrapped nodes, for colocation nodes only.
    pub children: Vec<NodeId>,
    pub colocation: Option<ColocationMode>,
}

impl NodeSpec {
    pub fn handle_refs(&self) -> Vec<PlaceholderId> {
        let mut out = Vec::new();
        for a in &self.args {
            a.collect_handles(&mut out);
        }
        out
    }
}

/// Data-only reference to a node. Dereferencing it needs the launch-time
/// address table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Handle {
    pub target: NodeId,
    pub placeholder: PlaceholderId,
    pub kind: NodeKind,
}

impl Handle {
    pub fn arg(&self) -> ArgValue {
        ArgValue::Handle(self.placeholder)
    }
}

impl From<Handle> for ArgValue {
    fn from(h: Handle) -> Self {
        h.arg()
    }
}

impl From<&Handle> for ArgValue {
    fn from(h: &Handle) -> Self {
        h.arg()
    }
}

/// Token for binding a deferred node once its dependents exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeferredSlot {
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramGraph {
    name: String,
    nodes: Vec<NodeSpec>,
    groups: BTreeMap<String, BTreeSet<NodeId>>,
    edges: BTreeSet<(NodeId, NodeId)>,
    placeholders: BTreeMap<PlaceholderId, NodeId>,
    next_placeholder: u64,
    open: Vec<String>,
}

impl ProgramGraph {
    pub fn new(name: &str) -> Result<Self, TopologyError> {
        if name.is_empty() {
            return Err(TopologyError::InvalidArgument(
                "program name must be nonempty".into(),
            ));
        }
        let mut groups = BTreeMap::new();
        groups.insert(DEFAULT_GROUP.to_string(), BTreeSet::new());
        Ok(ProgramGraph {
            name: name.into(),
            nodes: Vec::new(),
            groups,
            edges: BTreeSet::new(),
            placeholders: BTreeMap::new(),
            next_placeholder: 0,
            open: Vec::new(),
        })
    }

    /// Rebuilds a graph from stored parts without add-time checks, so that
    /// [`validate`](crate::validate) can report on untrusted input. Edges
    /// and placeholder ownership are re-derived from the node records.
    pub fn from_parts(
        name: String,
        nodes: Vec<NodeSpec>,
        groups: BTreeMap<String, BTreeSet<NodeId>>,
    ) -> Self {
        let placeholders: BTreeMap<_, _> = nodes
            .iter()
            .filter_map(|n| n.placeholder.map(|p| (p, n.node_id)))
            .collect();
        let next_placeholder = placeholders.keys().last().map_or(0, |p| p.0 + 1);
        let mut g = ProgramGraph {
            name,
            nodes,
            groups,
            edges: BTreeSet::new(),
            placeholders,
            next_placeholder,
            open: Vec::new(),
        };
        g.edges = g.derive_edges();
        g
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.get(id.0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn groups(&self) -> &BTreeMap<String, BTreeSet<NodeId>> {
        &self.groups
    }

    /// Recorded `(receiver, provider)` pairs.
    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn placeholder_owner(&self, p: PlaceholderId) -> Option<NodeId> {
        self.placeholders.get(&p).copied()
    }

    pub fn placeholders(&self) -> impl Iterator<Item = (PlaceholderId, NodeId)> + '_ {
        self.placeholders.iter().map(|(p, n)| (*p, *n))
    }

    /// The colocation node wrapping `id`, if any.
    pub fn colocation_of(&self, id: NodeId) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Colocation && n.children.contains(&id))
            .map(|n| n.node_id)
    }

    /// Handle for an addressable node already in the graph.
    pub fn handle(&self, id: NodeId) -> Option<Handle> {
        let n = self.node(id)?;
        n.placeholder.map(|placeholder| Handle {
            target: id,
            placeholder,
            kind: n.kind,
        })
    }

    /// Edges recomputed from node arguments; equals [`edges`](Self::edges)
    /// for any graph built through this API.
    pub fn derive_edges(&self) -> BTreeSet<(NodeId, NodeId)> {
        let mut out = BTreeSet::new();
        for n in &self.nodes {
            for p in n.handle_refs() {
                if let Some(provider) = self.placeholder_owner(p) {
                    out.insert((n.node_id, provider));
                }
            }
        }
        out
    }

    /// Group that an add without an explicit group lands in.
    pub fn current_group(&self) -> &str {
        self.open.last().map_or(DEFAULT_GROUP, String::as_str)
    }

    /// Opens a named resource group. Nodes added through the returned scope
    /// (without an explicit group) land in it until the scope is dropped.
    pub fn group(&mut self, name: &str) -> Result<GroupScope<'_>, TopologyError> {
        if name.is_empty() {
            return Err(TopologyError::InvalidArgument(
                "group name must be nonempty".into(),
            ));
        }
        if self.open.iter().any(|g| g == name) {
            return Err(TopologyError::InvalidState(format!(
                "group {name:?} is already open"
            )));
        }
        self.groups.entry(name.into()).or_default();
        self.open.push(name.into());
        Ok(GroupScope { program: self })
    }

    pub fn add_node(&mut self, def: NodeDef) -> Result<Option<Handle>, TopologyError> {
        let group = self.current_group().to_string();
        self.add_node_in(def, &group)
    }

    /// Adds a node to an explicit group, which must be `"default"` or one
    /// previously opened with [`group`](Self::group).
    pub fn add_node_in(
        &mut self,
        def: NodeDef,
        group: &str,
    ) -> Result<Option<Handle>, TopologyError> {
        if def.kind == NodeKind::Deferred {
            return Err(TopologyError::InvalidArgument(
                "use add_deferred_node for deferred nodes".into(),
            ));
        }
        if !self.groups.contains_key(group) {
            return Err(TopologyError::InvalidArgument(format!(
                "group {group:?} was never opened"
            )));
        }
        self.check_group_kind(group, def.kind, None)?;
        self.check_refs(&def.args)?;
        if def.kind == NodeKind::Colocation {
            self.check_colocation(&def)?;
        } else if !def.children.is_empty() || def.colocation.is_some() {
            return Err(TopologyError::InvalidArgument(
                "only colocation nodes have children".into(),
            ));
        }

        let id = NodeId(self.nodes.len());
        let placeholder = def.kind.is_addressable().then(|| self.fresh_placeholder(id));
        let handle = match def.kind {
            NodeKind::Colocation => def
                .children
                .iter()
                .find_map(|c| self.nodes[c.0].placeholder)
                .map(|placeholder| Handle {
                    target: id,
                    placeholder,
                    kind: NodeKind::Colocation,
                }),
            kind => placeholder.map(|placeholder| Handle {
                target: id,
                placeholder,
                kind,
            }),
        };
        self.record_edges(id, &def.args);
        self.nodes.push(NodeSpec {
            node_id: id,
            kind: def.kind,
            factory: def.factory,
            args: def.args,
            group: group.into(),
            placeholder,
            children: def.children,
            colocation: def.colocation,
        });
        self.groups.entry(group.into()).or_default().insert(id);
        Ok(handle)
    }

    /// Adds a node whose recipe is supplied later, so its handle can be
    /// given to nodes it will itself depend on.
    pub fn add_deferred_node(&mut self) -> Result<(Handle, DeferredSlot), TopologyError> {
        let group = self.current_group().to_string();
        self.check_group_kind(&group, NodeKind::Deferred, None)?;
        let id = NodeId(self.nodes.len());
        let placeholder = self.fresh_placeholder(id);
        self.nodes.push(NodeSpec {
            node_id: id,
            kind: NodeKind::Deferred,
            factory: String::new(),
            args: Vec::new(),
            group: group.clone(),
            placeholder: Some(placeholder),
            children: Vec::new(),
            colocation: None,
        });
        self.groups.entry(group).or_default().insert(id);
        Ok((
            Handle {
                target: id,
                placeholder,
                kind: NodeKind::Deferred,
            },
            DeferredSlot { node: id },
        ))
    }

    pub fn bind_deferred(
        &mut self,
        slot: DeferredSlot,
        factory: &str,
        args: Vec<ArgValue>,
    ) -> Result<(), TopologyError> {
        self.bind_deferred_as(slot, NodeKind::Service, factory, args)
    }

    /// Binds a deferred node as `kind`, which must be able to receive
    /// messages since its handle is already out.
    pub fn bind_deferred_as(
        &mut self,
        slot: DeferredSlot,
        kind: NodeKind,
        factory: &str,
        args: Vec<ArgValue>,
    ) -> Result<(), TopologyError> {
        if !matches!(kind, NodeKind::Service | NodeKind::Cacher) {
            return Err(TopologyError::InvalidArgument(format!(
                "a deferred node already handed out its handle; cannot bind it as {kind}"
            )));
        }
        let node = self
            .nodes
            .get(slot.node.0)
            .ok_or_else(|| TopologyError::InvalidArgument(format!("no node {}", slot.node)))?;
        if node.kind != NodeKind::Deferred {
            return Err(TopologyError::InvalidState(format!(
                "node {} is already bound",
                slot.node
            )));
        }
        if factory.is_empty() {
            return Err(TopologyError::InvalidArgument("empty factory name".into()));
        }
        let group = node.group.clone();
        self.check_group_kind(&group, kind, Some(slot.node))?;
        self.check_refs(&args)?;
        self.record_edges(slot.node, &args);
        let node = &mut self.nodes[slot.node.0];
        node.kind = kind;
        node.factory = factory.into();
        node.args = args;
        Ok(())
    }

    fn fresh_placeholder(&mut self, owner: NodeId) -> PlaceholderId {
        let p = PlaceholderId(self.next_placeholder);
        self.next_placeholder += 1;
        self.placeholders.insert(p, owner);
        p
    }

    fn check_refs(&self, args: &[ArgValue]) -> Result<(), TopologyError> {
        for a in args {
            for p in a.handles() {
                if !self.placeholders.contains_key(&p) {
                    return Err(TopologyError::DanglingHandle(p));
                }
            }
        }
        Ok(())
    }

    fn record_edges(&mut self, receiver: NodeId, args: &[ArgValue]) {
        for a in args {
            for p in a.handles() {
                if let Some(&provider) = self.placeholders.get(&p) {
                    self.edges.insert((receiver, provider));
                }
            }
        }
    }

    fn check_group_kind(
        &self,
        group: &str,
        kind: NodeKind,
        skip: Option<NodeId>,
    ) -> Result<(), TopologyError> {
        let Some(members) = self.groups.get(group) else {
            return Ok(());
        };
        let existing = members
            .iter()
            .filter(|id| Some(**id) != skip)
            .map(|id| self.nodes[id.0].kind)
            .find(|k| k.group_class() != kind.group_class());
        match existing {
            Some(existing) => Err(TopologyError::GroupTypeViolation {
                group: group.into(),
                existing,
                new: kind,
            }),
            None => Ok(()),
        }
    }

    fn check_colocation(&self, def: &NodeDef) -> Result<(), TopologyError> {
        if def.children.is_empty() {
            return Err(TopologyError::InvalidArgument(
                "colocation needs at least one child".into(),
            ));
        }
        for &c in &def.children {
            let child = self.node(c).ok_or_else(|| {
                TopologyError::InvalidArgument(format!("colocated node {c} does not exist"))
            })?;
            if child.kind == NodeKind::Colocation {
                return Err(TopologyError::InvalidArgument(
                    "colocation nodes cannot be nested".into(),
                ));
            }
            if let Some(owner) = self.colocation_of(c) {
                return Err(TopologyError::InvalidArgument(format!(
                    "node {c} is already colocated by {owner}"
                )));
            }
        }
        Ok(())
    }
}

/// An open resource group. Dereferences to the program; dropping it closes
/// the group.
pub struct GroupScope<'a> {
    program: &'a mut ProgramGraph,
}

impl Deref for GroupScope<'_> {
    type Target = ProgramGraph;

    fn deref(&self) -> &ProgramGraph {
        self.program
    }
}

impl DerefMut for GroupScope<'_> {
    fn deref_mut(&mut self) -> &mut ProgramGraph {
        self.program
    }
}

impl Drop for GroupScope<'_> {
    fn drop(&mut self) {
        self.program.open.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn range(s: i64, e: i64) -> NodeDef {
        NodeDef::service("Range", vec![s.into(), e.into()])
    }

    #[test]
    fn new_program_has_default_group_only() {
        let p = ProgramGraph::new("ps").unwrap();
        assert_eq!(p.name(), "ps");
        assert!(p.is_empty());
        assert_eq!(p.groups().len(), 1);
        assert!(p.groups()[DEFAULT_GROUP].is_empty());
        assert!(matches!(
            ProgramGraph::new(""),
            Err(TopologyError::InvalidArgument(_))
        ));
    }

    #[test]
    fn producer_consumer_edges() {
        let mut p = ProgramGraph::new("producer-consumer").unwrap();
        let (h1, h2) = {
            let mut g = p.group("producer").unwrap();
            let h1 = g.add_node(range(0, 10)).unwrap().unwrap();
            let h2 = g.add_node(range(10, 20)).unwrap().unwrap();
            (h1, h2)
        };
        assert_eq!(h1.target, NodeId(0));
        assert!(p.edges().is_empty());
        let consumer = {
            let mut g = p.group("consumer").unwrap();
            g.add_node(NodeDef::leaf("Consumer", vec![vec![h1.arg(), h2.arg()].into()]))
                .unwrap()
        };
        assert!(consumer.is_none());
        let expected: BTreeSet<_> = [(NodeId(2), NodeId(0)), (NodeId(2), NodeId(1))].into();
        assert_eq!(p.edges(), &expected);
        assert_eq!(p.groups()["producer"], [NodeId(0), NodeId(1)].into());
        assert_eq!(p.current_group(), DEFAULT_GROUP);
    }

    #[test]
    fn group_kind_mismatch() {
        let mut p = ProgramGraph::new("g").unwrap();
        let mut g = p.group("server").unwrap();
        let h = g.add_node(range(0, 1)).unwrap().unwrap();
        let err = g.add_node(NodeDef::cacher(&h, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, TopologyError::GroupTypeViolation { .. }));
    }

    #[test]
    fn empty_group_and_nested_reopen() {
        let mut p = ProgramGraph::new("g").unwrap();
        drop(p.group("x").unwrap());
        assert!(p.groups()["x"].is_empty());
        let mut g = p.group("y").unwrap();
        assert!(matches!(g.group("y"), Err(TopologyError::InvalidState(_))));
        let mut inner = g.group("z").unwrap();
        inner.add_node(range(0, 1)).unwrap();
        drop(inner);
        assert_eq!(g.current_group(), "y");
    }

    #[test]
    fn explicit_group_must_exist() {
        let mut p = ProgramGraph::new("g").unwrap();
        assert!(p.add_node_in(range(0, 1), "nope").is_err());
        assert!(p.add_node_in(range(0, 1), DEFAULT_GROUP).is_ok());
    }

    #[test]
    fn dangling_handle_rejected() {
        let mut p = ProgramGraph::new("g").unwrap();
        let err = p
            .add_node(NodeDef::leaf("X", vec![ArgValue::Handle(PlaceholderId(42))]))
            .unwrap_err();
        assert_eq!(err, TopologyError::DanglingHandle(PlaceholderId(42)));
    }

    #[test]
    fn deferred_two_cycle() {
        let mut p = ProgramGraph::new("cycle").unwrap();
        let (ha, slot) = p.add_deferred_node().unwrap();
        let hb = p
            .add_node(NodeDef::service("Pinger", vec![ha.arg()]))
            .unwrap()
            .unwrap();
        p.bind_deferred(slot, "Pinger", vec![hb.arg()]).unwrap();
        let expected: BTreeSet<_> = [(NodeId(1), NodeId(0)), (NodeId(0), NodeId(1))].into();
        assert_eq!(p.edges(), &expected);
        assert_eq!(p.node(NodeId(0)).unwrap().kind, NodeKind::Service);
        assert!(matches!(
            p.bind_deferred(slot, "Pinger", vec![]),
            Err(TopologyError::InvalidState(_))
        ));
    }

    #[test]
    fn deferred_cannot_become_leaf() {
        let mut p = ProgramGraph::new("g").unwrap();
        let (_, slot) = p.add_deferred_node().unwrap();
        assert!(matches!(
            p.bind_deferred_as(slot, NodeKind::Leaf, "X", vec![]),
            Err(TopologyError::InvalidArgument(_))
        ));
    }

    #[test]
    fn cacher_checks() {
        let mut p = ProgramGraph::new("g").unwrap();
        let h = p.add_node(range(0, 1)).unwrap().unwrap();
        assert!(NodeDef::cacher(&h, -1.0).is_err());
        assert!(NodeDef::cacher(&h, f64::NAN).is_err());
        let forever = NodeDef::cacher(&h, f64::INFINITY).unwrap();
        assert_eq!(forever.args[1], ArgValue::Null);
        let leaf_handle = Handle {
            kind: NodeKind::Leaf,
            ..h
        };
        assert!(NodeDef::cacher(&leaf_handle, 1.0).is_err());
    }

    #[test]
    fn colocation_rules() {
        let mut p = ProgramGraph::new("g").unwrap();
        let server = p.add_node(range(0, 1)).unwrap().unwrap();
        let cacher = p
            .add_node_in(NodeDef::cacher(&server, 1.0).unwrap(), DEFAULT_GROUP)
            .unwrap_err();
        assert!(matches!(cacher, TopologyError::GroupTypeViolation { .. }));
        drop(p.group("cache").unwrap());
        p.add_node_in(NodeDef::cacher(&server, 1.0).unwrap(), "cache")
            .unwrap();

        assert!(NodeDef::colocation(core::iter::empty(), ColocationMode::Threads).is_err());
        let def = NodeDef::colocation(p.nodes(), ColocationMode::Threads).unwrap();
        let colo = p
            .add_node_in(def.clone(), "colo")
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(colo, TopologyError::InvalidArgument(_)));
        drop(p.group("colo").unwrap());
        let h = p.add_node_in(def.clone(), "colo").unwrap().unwrap();
        assert_eq!(h.placeholder, server.placeholder);
        assert_eq!(p.colocation_of(NodeId(1)), Some(NodeId(2)));
        // a node can be wrapped only once
        drop(p.group("colo2").unwrap());
        assert!(p.add_node_in(def, "colo2").is_err());
        let nested = NodeDef::colocation(p.nodes(), ColocationMode::Threads);
        assert!(nested.is_err());
    }
}
