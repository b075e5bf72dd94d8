//! Launchers: allocate endpoints, materialize executables, start them on
//! threads or child processes, and supervise them.

mod child;
mod procs;
mod supervisor;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use launchgraph_core::{AddressTable, ColocationMode, Manifest, NodeId, NodeKind, ProgramGraph};
use log::info;

pub use child::run_node;
pub use procs::child_processes;
pub use supervisor::ControlPlane;

use crate::services::{to_executables, ServiceRegistry};
use crate::{wire, Error};
use supervisor::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LauncherKind {
    Threads,
    Processes,
}

impl LauncherKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LauncherKind::Threads => "threads",
            LauncherKind::Processes => "processes",
        }
    }
}

impl fmt::Display for LauncherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestartPolicy {
    #[default]
    Never,
    /// Re-run a failed node at its old endpoint, at most `max_restarts`
    /// times over the life of the launch.
    OnFailure { max_restarts: u32 },
}

/// Group name → resource name → amount. Recorded and logged, never
/// enforced.
pub type ResourceMap = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Debug, Clone)]
pub struct LaunchOptions {
    pub launcher: LauncherKind,
    pub resources: Option<ResourceMap>,
    pub restart: RestartPolicy,
    /// Executable re-invoked as `<binary> run-node ...` by the processes
    /// launcher. Children build services from that binary's registry.
    pub binary: Option<PathBuf>,
    /// How long an executable keeps retrying connections to its peers.
    pub connect_deadline: Duration,
    /// How long [`ControlPlane::stop`] waits before killing.
    pub grace: Duration,
}

impl LaunchOptions {
    pub fn threads() -> Self {
        LaunchOptions {
            launcher: LauncherKind::Threads,
            resources: None,
            restart: RestartPolicy::Never,
            binary: None,
            connect_deadline: Duration::from_secs(10),
            grace: Duration::from_secs(5),
        }
    }

    pub fn processes(binary: impl Into<PathBuf>) -> Self {
        LaunchOptions {
            launcher: LauncherKind::Processes,
            binary: Some(binary.into()),
            ..Self::threads()
        }
    }

    pub fn with_resources(mut self, resources: ResourceMap) -> Self {
        self.resources = Some(resources);
        self
    }

    pub fn with_restart(mut self, restart: RestartPolicy) -> Self {
        self.restart = restart;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeStatus {
    Starting,
    Running,
    Finished,
    Failed(String),
    Restarting,
}

impl NodeStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, NodeStatus::Finished | NodeStatus::Failed(_))
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeStatus::Starting => f.write_str("starting"),
            NodeStatus::Running => f.write_str("running"),
            NodeStatus::Finished => f.write_str("finished"),
            NodeStatus::Failed(m) => write!(f, "failed({m})"),
            NodeStatus::Restarting => f.write_str("restarting"),
        }
    }
}

/// Statuses of the nodes a wait was asked about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaitResult {
    pub statuses: BTreeMap<NodeId, NodeStatus>,
}

impl WaitResult {
    pub fn all_finished(&self) -> bool {
        self.statuses.values().all(|s| *s == NodeStatus::Finished)
    }

    pub fn failures(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.statuses.iter().filter_map(|(id, s)| match s {
            NodeStatus::Failed(m) => Some((*id, m.as_str())),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartDecision {
    Restarted { count: u32 },
    LeftFailed { count: u32 },
}

/// Validates the program, allocates loopback endpoints, materializes every
/// node and starts the executables.
pub fn launch(
    program: &ProgramGraph,
    registry: &ServiceRegistry,
    options: &LaunchOptions,
) -> Result<ControlPlane, Error> {
    let report = program.validate();
    if !report.is_ok() {
        return Err(Error::InvalidProgram(report));
    }
    if let Some(resources) = &options.resources {
        check_resources(program, resources)?;
    }
    let binary = match options.launcher {
        LauncherKind::Processes => Some(options.binary.clone().ok_or_else(|| {
            Error::InvalidArgument("the processes launcher needs a binary".into())
        })?),
        LauncherKind::Threads => None,
    };

    let mut addresses = AddressTable::new();
    let mut listeners = BTreeMap::new();
    for n in program.nodes() {
        if matches!(n.kind, NodeKind::Service | NodeKind::Cacher) {
            let Some(p) = n.placeholder else { continue };
            let (l, ep) = wire::bind_ephemeral()?;
            addresses.insert(p, ep);
            listeners.insert(n.node_id, l);
        }
    }
    let missing = addresses.missing_for(program);
    if let Some(p) = missing.iter().next() {
        return Err(Error::UnresolvedPlaceholder(*p));
    }

    let mut units = Vec::new();
    for n in program.nodes() {
        if n.kind != NodeKind::Colocation && program.colocation_of(n.node_id).is_some() {
            continue;
        }
        let execs = to_executables(n, program, &addresses, registry)?;
        let same_process = n.colocation == Some(ColocationMode::Threads);
        if options.launcher == LauncherKind::Processes && same_process {
            units.push(Unit {
                label: n.node_id,
                nodes: execs.iter().map(|e| e.node_id).collect(),
                execs: execs.into_iter().map(Arc::new).collect(),
            });
        } else {
            for e in execs {
                units.push(Unit {
                    label: e.node_id,
                    nodes: vec![e.node_id],
                    execs: vec![Arc::new(e)],
                });
            }
        }
    }

    let manifest_file = match options.launcher {
        LauncherKind::Processes => {
            // children bind their own endpoints
            listeners.clear();
            let text = Manifest::new(program.clone(), addresses.clone()).to_canonical_string()?;
            let mut f = tempfile::Builder::new()
                .prefix("launchgraph-")
                .suffix(".json")
                .tempfile()?;
            f.write_all(text.as_bytes())?;
            f.flush()?;
            Some(f)
        }
        LauncherKind::Threads => None,
    };

    info!(
        "launching {:?}: {} nodes, {} units on {}",
        program.name(),
        program.len(),
        units.len(),
        options.launcher
    );
    ControlPlane::start(supervisor::Setup {
        program: program.clone(),
        addresses,
        options: options.clone(),
        binary,
        units,
        listeners,
        manifest_file,
    })
}

fn check_resources(program: &ProgramGraph, resources: &ResourceMap) -> Result<(), Error> {
    for (group, res) in resources {
        if !program.groups().contains_key(group) {
            return Err(Error::UnknownGroup(group.clone()));
        }
        let line = res
            .iter()
            .map(|(k, v)| format!("{k:?}: {v}"))
            .collect::<Vec<_>>()
            .join(", ");
        info!("resources for group {group:?}: {{{line}}} (recorded, not enforced)");
    }
    Ok(())
}
