use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use launchgraph_core::cache::Ttl;
use launchgraph_core::{
    AddressTable, ArgValue, Endpoint, Handle, NodeId, NodeKind, NodeSpec, PlaceholderId,
    ProgramGraph,
};

use super::cacher::CacherService;
use super::{Dispatch, Factory, ServiceRegistry};
use crate::service::{BuildContext, MethodError, NodeContext, OutputSink, Service};
use crate::wire::{self, Client, ConnectOptions};
use crate::Error;

/// Placement tag a launcher must honor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Anywhere,
    /// Same machine as the other executables of colocation node `group`.
    SameHost { group: NodeId },
    /// Same process as the other executables of colocation node `group`.
    SameProcess { group: NodeId },
}

#[derive(Clone)]
enum Body {
    Factory(Arc<Factory>),
    Cacher { target: PlaceholderId, ttl: Ttl },
}

/// One runnable unit produced from a node.
#[derive(Clone)]
pub struct Executable {
    pub node_id: NodeId,
    pub kind: NodeKind,
    /// Where this executable serves; `None` for leaves.
    pub endpoint: Option<Endpoint>,
    pub placement: Placement,
    args: Vec<ArgValue>,
    handles: BTreeMap<PlaceholderId, Endpoint>,
    body: Body,
    methods: BTreeSet<String>,
    dispatch: Dispatch,
    has_run: bool,
}

impl std::fmt::Debug for Executable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executable")
            .field("node_id", &self.node_id)
            .field("kind", &self.kind)
            .field("endpoint", &self.endpoint)
            .field("placement", &self.placement)
            .field("methods", &self.methods)
            .finish()
    }
}

/// What the launcher hands an executable when it starts it.
pub struct RunEnv {
    /// A listener already bound at the executable's endpoint, if any.
    pub listener: Option<TcpListener>,
    pub stop: Arc<AtomicBool>,
    pub sink: OutputSink,
    pub connect_deadline: Duration,
}

impl Executable {
    pub fn methods(&self) -> impl Iterator<Item = &str> {
        self.methods.iter().map(String::as_str)
    }

    pub fn has_run(&self) -> bool {
        self.has_run
    }

    /// Binds (unless given a listener), dereferences handle arguments,
    /// constructs the service, serves it, then runs its run procedure or
    /// serves until stopped. Binding comes first so that peers in a cycle
    /// can always connect.
    pub fn run(&self, env: RunEnv) -> Result<(), MethodError> {
        let listener = match (&self.endpoint, env.listener) {
            (Some(_), Some(l)) => Some(l),
            (Some(ep), None) => Some(wire::bind(ep)?),
            (None, _) => None,
        };
        let options = ConnectOptions {
            deadline: env.connect_deadline,
            cancel: Some(env.stop.clone()),
        };
        let mut clients = BTreeMap::new();
        for (p, ep) in &self.handles {
            clients.insert(*p, Client::connect(ep, options.clone())?);
        }
        let service: Arc<dyn Service> = match &self.body {
            Body::Factory(f) => f.construct(&BuildContext::new(self.node_id, &self.args, &clients))?,
            Body::Cacher { target, ttl } => {
                let upstream = clients
                    .get(target)
                    .cloned()
                    .ok_or_else(|| MethodError(format!("cacher target {target} not connected")))?;
                Arc::new(CacherService::new(upstream, *ttl))
            }
        };
        let server = match listener {
            Some(l) => Some(wire::serve(service.clone(), self.methods.iter().cloned(), l, self.dispatch)?),
            None => None,
        };
        let ctx = NodeContext::new(self.node_id, env.stop, env.sink);
        if self.has_run {
            service.run(&ctx)?;
        } else if server.is_some() {
            while ctx.sleep(Duration::from_secs(3600)) {}
        }
        drop(server);
        Ok(())
    }
}

/// Materializes a node. A colocation node yields one executable per child,
/// tagged with its placement; every other kind yields exactly one.
pub fn to_executables(
    spec: &NodeSpec,
    program: &ProgramGraph,
    table: &AddressTable,
    registry: &ServiceRegistry,
) -> Result<Vec<Executable>, Error> {
    if spec.kind == NodeKind::Colocation {
        let mode = spec
            .colocation
            .ok_or_else(|| Error::InvalidArgument(format!("colocation node {} has no mode", spec.node_id)))?;
        let group = spec.node_id;
        let placement = match mode {
            launchgraph_core::ColocationMode::Threads => Placement::SameProcess { group },
            launchgraph_core::ColocationMode::Processes => Placement::SameHost { group },
        };
        let mut out = Vec::with_capacity(spec.children.len());
        for c in &spec.children {
            let child = program
                .node(*c)
                .ok_or_else(|| Error::InvalidArgument(format!("missing colocation child {c}")))?;
            if child.kind == NodeKind::Colocation {
                return Err(Error::InvalidArgument("colocation nodes cannot be nested".into()));
            }
            let mut e = single(child, program, table, registry)?;
            e.placement = placement;
            out.push(e);
        }
        return Ok(out);
    }
    Ok(vec![single(spec, program, table, registry)?])
}

fn single(
    spec: &NodeSpec,
    program: &ProgramGraph,
    table: &AddressTable,
    registry: &ServiceRegistry,
) -> Result<Executable, Error> {
    let mut handles = BTreeMap::new();
    for p in spec.handle_refs() {
        let ep = table.get(p).ok_or(Error::UnresolvedPlaceholder(p))?;
        handles.insert(p, ep.clone());
    }
    let endpoint = match spec.kind {
        NodeKind::Service | NodeKind::Cacher => {
            let p = spec.placeholder.ok_or_else(|| {
                Error::InvalidArgument(format!("node {} has no placeholder", spec.node_id))
            })?;
            Some(table.get(p).ok_or(Error::UnresolvedPlaceholder(p))?.clone())
        }
        NodeKind::Leaf => None,
        NodeKind::Deferred => {
            return Err(Error::InvalidState(format!(
                "deferred node {} was never bound",
                spec.node_id
            )))
        }
        NodeKind::Colocation => unreachable!("handled by to_executables"),
    };

    let (body, methods, dispatch, has_run) = match spec.kind {
        NodeKind::Cacher => {
            let (target, ttl) = cacher_args(spec)?;
            let methods = served_methods(program, registry, target, 0)?;
            (Body::Cacher { target, ttl }, methods, Dispatch::Concurrent, false)
        }
        _ => {
            let f = registry
                .get(&spec.factory)
                .ok_or_else(|| Error::UnknownFactory(spec.factory.clone()))?;
            (
                Body::Factory(f.clone()),
                f.method_names().map(String::from).collect(),
                f.dispatch_policy(),
                f.has_run(),
            )
        }
    };

    Ok(Executable {
        node_id: spec.node_id,
        kind: spec.kind,
        endpoint,
        placement: Placement::Anywhere,
        args: spec.args.clone(),
        handles,
        body,
        methods,
        dispatch,
        has_run,
    })
}

fn cacher_args(spec: &NodeSpec) -> Result<(PlaceholderId, Ttl), Error> {
    let bad = || Error::InvalidArgument(format!("cacher node {} has malformed arguments", spec.node_id));
    let target = spec.args.first().and_then(ArgValue::as_handle).ok_or_else(bad)?;
    let secs = match spec.args.get(1) {
        Some(ArgValue::Null) | None => None,
        Some(v) => Some(v.as_f64().ok_or_else(bad)?),
    };
    let ttl = Ttl::from_secs(secs).ok_or_else(bad)?;
    Ok((target, ttl))
}

/// Methods exposed by whatever `target` names, following cacher chains.
fn served_methods(
    program: &ProgramGraph,
    registry: &ServiceRegistry,
    target: PlaceholderId,
    depth: usize,
) -> Result<BTreeSet<String>, Error> {
    if depth > program.len() {
        return Err(Error::InvalidArgument("cacher chain loops back on itself".into()));
    }
    let owner = program
        .placeholder_owner(target)
        .and_then(|id| program.node(id))
        .ok_or(Error::UnresolvedPlaceholder(target))?;
    match owner.kind {
        NodeKind::Cacher => served_methods(program, registry, cacher_args(owner)?.0, depth + 1),
        NodeKind::Service => Ok(registry
            .get(&owner.factory)
            .ok_or_else(|| Error::UnknownFactory(owner.factory.clone()))?
            .method_names()
            .map(String::from)
            .collect()),
        k => Err(Error::InvalidArgument(format!("cannot cache a {k} node"))),
    }
}

/// A fresh client for `handle`, connected with default options.
pub fn dereference(handle: &Handle, table: &AddressTable) -> Result<Client, Error> {
    let ep = table
        .get(handle.placeholder)
        .ok_or(Error::UnresolvedPlaceholder(handle.placeholder))?;
    wire::connect(ep)
}
