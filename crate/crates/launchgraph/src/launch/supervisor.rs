use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use launchgraph_core::{AddressTable, NodeId, NodeKind, ProgramGraph};
use log::{debug, info, warn};
use tempfile::NamedTempFile;

use super::{LaunchOptions, LauncherKind, NodeStatus, RestartDecision, RestartPolicy, WaitResult};
use crate::service::OutputSink;
use crate::services::{Executable, RunEnv};
use crate::Error;

/// What one thread or one child process runs.
pub(crate) struct Unit {
    /// Node named on the child command line and credited with its output.
    pub label: NodeId,
    pub nodes: Vec<NodeId>,
    pub execs: Vec<Arc<Executable>>,
}

pub(crate) struct Setup {
    pub program: ProgramGraph,
    pub addresses: AddressTable,
    pub options: LaunchOptions,
    pub binary: Option<PathBuf>,
    pub units: Vec<Unit>,
    pub listeners: BTreeMap<NodeId, TcpListener>,
    pub manifest_file: Option<NamedTempFile>,
}

enum Live {
    Thread {
        stop: Arc<AtomicBool>,
        killed: Arc<AtomicBool>,
    },
    Process {
        pid: u32,
    },
}

struct UnitState {
    status: NodeStatus,
    restarts: u32,
    /// Bumped on every start so exit reports from earlier runs are ignored.
    attempt: u64,
    live: Option<Live>,
}

struct State {
    units: Vec<UnitState>,
    stopping: bool,
}

struct Exit {
    unit: usize,
    attempt: u64,
    result: Result<(), String>,
}

struct Shared {
    program: ProgramGraph,
    addresses: AddressTable,
    options: LaunchOptions,
    binary: Option<PathBuf>,
    manifest_path: Option<PathBuf>,
    units: Vec<Unit>,
    node_unit: BTreeMap<NodeId, usize>,
    state: Mutex<State>,
    changed: Condvar,
    output: Arc<Mutex<Vec<(NodeId, String)>>>,
    exits: Mutex<Sender<Exit>>,
    monitor_done: AtomicBool,
}

/// Supervision record of one launch. Safe to observe from many threads.
/// Dropping it stops the program.
pub struct ControlPlane {
    shared: Arc<Shared>,
    monitor: Mutex<Option<JoinHandle<()>>>,
    stop_lock: Mutex<bool>,
    _manifest_file: Option<NamedTempFile>,
}

impl ControlPlane {
    pub(crate) fn start(setup: Setup) -> Result<ControlPlane, Error> {
        let (tx, rx) = mpsc::channel();
        let mut node_unit = BTreeMap::new();
        for (i, u) in setup.units.iter().enumerate() {
            for n in &u.nodes {
                node_unit.insert(*n, i);
            }
        }
        let units = (0..setup.units.len())
            .map(|_| UnitState {
                status: NodeStatus::Starting,
                restarts: 0,
                attempt: 0,
                live: None,
            })
            .collect();
        let shared = Arc::new(Shared {
            program: setup.program,
            addresses: setup.addresses,
            options: setup.options,
            binary: setup.binary,
            manifest_path: setup.manifest_file.as_ref().map(|f| f.path().to_path_buf()),
            units: setup.units,
            node_unit,
            state: Mutex::new(State {
                units,
                stopping: false,
            }),
            changed: Condvar::new(),
            output: Arc::new(Mutex::new(Vec::new())),
            exits: Mutex::new(tx),
            monitor_done: AtomicBool::new(false),
        });

        let mut listeners = setup.listeners;
        {
            let mut st = lock(&shared.state);
            for i in 0..shared.units.len() {
                let pre_bound = shared.units[i]
                    .execs
                    .iter()
                    .map(|e| listeners.remove(&e.node_id))
                    .collect();
                start_unit(&shared, &mut st, i, pre_bound);
            }
        }

        let monitor_shared = shared.clone();
        let monitor = thread::Builder::new()
            .name("launch-monitor".into())
            .spawn(move || monitor(monitor_shared, rx))?;
        Ok(ControlPlane {
            shared,
            monitor: Mutex::new(Some(monitor)),
            stop_lock: Mutex::new(false),
            _manifest_file: setup.manifest_file,
        })
    }

    pub fn launcher(&self) -> LauncherKind {
        self.shared.options.launcher
    }

    pub fn program(&self) -> &ProgramGraph {
        &self.shared.program
    }

    /// The resolved placeholder → endpoint table.
    pub fn addresses(&self) -> &AddressTable {
        &self.shared.addresses
    }

    pub fn status(&self, node: NodeId) -> Option<NodeStatus> {
        let st = lock(&self.shared.state);
        self.status_locked(&st, node)
    }

    /// Every node's status, colocation nodes included.
    pub fn statuses(&self) -> BTreeMap<NodeId, NodeStatus> {
        let st = lock(&self.shared.state);
        self.shared
            .program
            .nodes()
            .iter()
            .filter_map(|n| Some((n.node_id, self.status_locked(&st, n.node_id)?)))
            .collect()
    }

    /// Restarts consumed by the unit running `node`.
    pub fn restarts(&self, node: NodeId) -> u32 {
        let st = lock(&self.shared.state);
        self.shared
            .node_unit
            .get(&node)
            .map_or(0, |u| st.units[*u].restarts)
    }

    /// Every line emitted so far, in arrival order.
    pub fn output(&self) -> Vec<(NodeId, String)> {
        lock(&self.shared.output).clone()
    }

    /// Lines emitted by `node`. For a colocation node this includes its
    /// children's lines.
    pub fn output_of(&self, node: NodeId) -> Vec<String> {
        let children: Vec<NodeId> = self
            .shared
            .program
            .node(node)
            .map(|n| n.children.clone())
            .unwrap_or_default();
        lock(&self.shared.output)
            .iter()
            .filter(|(n, _)| *n == node || children.contains(n))
            .map(|(_, l)| l.clone())
            .collect()
    }

    /// Pids of child processes currently running.
    pub fn child_pids(&self) -> Vec<u32> {
        let st = lock(&self.shared.state);
        st.units
            .iter()
            .filter_map(|u| match u.live {
                Some(Live::Process { pid }) => Some(pid),
                _ => None,
            })
            .collect()
    }

    /// Blocks until every node in `nodes` (all non-colocation nodes when
    /// `None`) is finished or failed.
    pub fn wait(&self, nodes: Option<&[NodeId]>, timeout: Duration) -> Result<WaitResult, Error> {
        let ids: Vec<NodeId> = match nodes {
            Some(ids) => {
                for id in ids {
                    if self.shared.program.node(*id).is_none() {
                        return Err(Error::InvalidArgument(format!("no node {id}")));
                    }
                }
                ids.to_vec()
            }
            None => self
                .shared
                .program
                .nodes()
                .iter()
                .filter(|n| n.kind != NodeKind::Colocation)
                .map(|n| n.node_id)
                .collect(),
        };
        let end = Instant::now() + timeout;
        let mut st = lock(&self.shared.state);
        loop {
            let statuses: BTreeMap<NodeId, NodeStatus> = ids
                .iter()
                .filter_map(|id| Some((*id, self.status_locked(&st, *id)?)))
                .collect();
            if statuses.values().all(NodeStatus::is_terminal) {
                return Ok(WaitResult { statuses });
            }
            let now = Instant::now();
            if now >= end {
                return Err(Error::TimedOut(WaitResult { statuses }));
            }
            st = self
                .shared
                .changed
                .wait_timeout(st, end - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Kills the unit running `node`: SIGKILL for a process; for a thread,
    /// a stop request after which the node reports `failed(killed)`.
    pub fn kill_node(&self, node: NodeId) -> Result<(), Error> {
        let unit = *self
            .shared
            .node_unit
            .get(&node)
            .ok_or_else(|| Error::InvalidArgument(format!("node {node} is not an executable")))?;
        let st = lock(&self.shared.state);
        match &st.units[unit].live {
            Some(Live::Process { pid }) => {
                info!("killing node {node} (pid {pid})");
                signal(*pid, libc::SIGKILL);
                Ok(())
            }
            Some(Live::Thread { stop, killed }) => {
                info!("killing node {node} (thread)");
                killed.store(true, Ordering::SeqCst);
                stop.store(true, Ordering::SeqCst);
                Ok(())
            }
            None => Err(Error::InvalidState(format!("node {node} is not running"))),
        }
    }

    /// Applies the restart policy to a failed node: re-runs it at its old
    /// endpoint if the policy has restarts left.
    pub fn apply_restart_policy(&self, node: NodeId, failure: &str) -> Result<RestartDecision, Error> {
        let unit = *self
            .shared
            .node_unit
            .get(&node)
            .ok_or_else(|| Error::InvalidArgument(format!("node {node} is not an executable")))?;
        let mut st = lock(&self.shared.state);
        if !matches!(st.units[unit].status, NodeStatus::Failed(_)) {
            return Err(Error::InvalidState(format!("node {node} has not failed")));
        }
        let decision = decide(&self.shared, &mut st, unit, failure.to_string());
        self.shared.changed.notify_all();
        Ok(decision)
    }

    /// Asks every executable to stop, waits out the grace period, then
    /// kills what is left. Idempotent.
    pub fn stop(&self) {
        let mut done = lock(&self.stop_lock);
        if *done {
            return;
        }
        let shared = &self.shared;
        let grace = shared.options.grace;
        {
            let mut st = lock(&shared.state);
            st.stopping = true;
            for u in &st.units {
                match &u.live {
                    Some(Live::Thread { stop, .. }) => stop.store(true, Ordering::SeqCst),
                    Some(Live::Process { pid }) => signal(*pid, libc::SIGTERM),
                    None => {}
                }
            }
            st = wait_quiet(shared, st, grace);
            let mut killed_any = false;
            for u in &st.units {
                if let Some(Live::Process { pid }) = &u.live {
                    warn!("pid {pid} ignored the stop request; killing it");
                    signal(*pid, libc::SIGKILL);
                    killed_any = true;
                }
            }
            if killed_any {
                st = wait_quiet(shared, st, Duration::from_secs(5));
            }
            for (i, u) in st.units.iter_mut().enumerate() {
                if u.live.take().is_some() {
                    warn!("unit {} did not stop within the grace period", shared.units[i].label);
                    u.attempt += 1;
                    u.status = NodeStatus::Failed("did not stop within the grace period".into());
                } else if !u.status.is_terminal() {
                    u.status = NodeStatus::Failed("stopped".into());
                }
            }
            shared.changed.notify_all();
        }
        shared.monitor_done.store(true, Ordering::SeqCst);
        if let Some(m) = lock(&self.monitor).take() {
            let _ = m.join();
        }
        *done = true;
        debug!("launch of {:?} stopped", shared.program.name());
    }

    fn status_locked(&self, st: &State, node: NodeId) -> Option<NodeStatus> {
        if let Some(u) = self.shared.node_unit.get(&node) {
            return Some(st.units[*u].status.clone());
        }
        let n = self.shared.program.node(node)?;
        if n.kind != NodeKind::Colocation {
            return None;
        }
        let children: Vec<NodeStatus> = n
            .children
            .iter()
            .filter_map(|c| self.shared.node_unit.get(c).map(|u| st.units[*u].status.clone()))
            .collect();
        Some(aggregate(&children))
    }
}

impl Drop for ControlPlane {
    fn drop(&mut self) {
        self.stop();
    }
}

/// A failed child fails the group; it is finished when every child is.
fn aggregate(children: &[NodeStatus]) -> NodeStatus {
    if let Some(f) = children.iter().find(|s| matches!(s, NodeStatus::Failed(_))) {
        return f.clone();
    }
    if children.iter().all(|s| *s == NodeStatus::Finished) {
        return NodeStatus::Finished;
    }
    if children.contains(&NodeStatus::Restarting) {
        return NodeStatus::Restarting;
    }
    if children.contains(&NodeStatus::Starting) {
        return NodeStatus::Starting;
    }
    NodeStatus::Running
}

fn wait_quiet<'a>(shared: &'a Shared, mut st: MutexGuard<'a, State>, limit: Duration) -> MutexGuard<'a, State> {
    let end = Instant::now() + limit;
    while st.units.iter().any(|u| u.live.is_some()) {
        let now = Instant::now();
        if now >= end {
            break;
        }
        st = shared
            .changed
            .wait_timeout(st, end - now)
            .unwrap_or_else(|e| e.into_inner())
            .0;
    }
    st
}

fn monitor(shared: Arc<Shared>, rx: Receiver<Exit>) {
    loop {
        match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(exit) => {
                let mut st = lock(&shared.state);
                let u = &mut st.units[exit.unit];
                if exit.attempt != u.attempt {
                    continue;
                }
                u.live = None;
                match exit.result {
                    Ok(()) => u.status = NodeStatus::Finished,
                    Err(msg) => {
                        if st.stopping {
                            st.units[exit.unit].status = NodeStatus::Failed(msg);
                        } else {
                            warn!("unit {} failed: {msg}", shared.units[exit.unit].label);
                            decide(&shared, &mut st, exit.unit, msg);
                        }
                    }
                }
                shared.changed.notify_all();
            }
            Err(RecvTimeoutError::Timeout) => {
                if shared.monitor_done.load(Ordering::SeqCst) {
                    return;
                }
            }
            Err(RecvTimeoutError::Disconnected) => return,
        }
    }
}

/// Restart-or-fail for a unit that just failed, applied in one step so the
/// failed status is never visible when a restart follows.
fn decide(shared: &Arc<Shared>, st: &mut State, unit: usize, failure: String) -> RestartDecision {
    let u = &mut st.units[unit];
    let allowed = match shared.options.restart {
        RestartPolicy::Never => false,
        RestartPolicy::OnFailure { max_restarts } => u.restarts < max_restarts,
    };
    if !allowed || st.stopping {
        let count = u.restarts;
        u.status = NodeStatus::Failed(failure);
        return RestartDecision::LeftFailed { count };
    }
    u.restarts += 1;
    u.status = NodeStatus::Restarting;
    let count = u.restarts;
    info!(
        "restarting unit {} ({count} of policy {:?})",
        shared.units[unit].label, shared.options.restart
    );
    let none = shared.units[unit].execs.iter().map(|_| None).collect();
    start_unit(shared, st, unit, none);
    RestartDecision::Restarted { count }
}

fn start_unit(shared: &Arc<Shared>, st: &mut State, unit: usize, listeners: Vec<Option<TcpListener>>) {
    st.units[unit].attempt += 1;
    let attempt = st.units[unit].attempt;
    let started = match shared.options.launcher {
        LauncherKind::Threads => start_thread(shared, unit, attempt, listeners),
        LauncherKind::Processes => start_process(shared, unit, attempt),
    };
    let u = &mut st.units[unit];
    match started {
        Ok(live) => {
            u.live = Some(live);
            u.status = NodeStatus::Running;
        }
        Err(e) => {
            warn!("cannot start unit {}: {e}", shared.units[unit].label);
            u.live = None;
            u.status = NodeStatus::Failed(format!("cannot start: {e}"));
        }
    }
}

fn send_exit(shared: &Shared, exit: Exit) {
    let _ = lock(&shared.exits).send(exit);
}

fn start_thread(
    shared: &Arc<Shared>,
    unit: usize,
    attempt: u64,
    mut listeners: Vec<Option<TcpListener>>,
) -> Result<Live, Error> {
    let stop = Arc::new(AtomicBool::new(false));
    let killed = Arc::new(AtomicBool::new(false));
    let exec = shared.units[unit]
        .execs
        .first()
        .cloned()
        .ok_or_else(|| Error::InvalidState("empty unit".into()))?;
    let env = RunEnv {
        listener: listeners.first_mut().and_then(Option::take),
        stop: stop.clone(),
        sink: collecting_sink(shared.output.clone()),
        connect_deadline: shared.options.connect_deadline,
    };
    let thread_shared = shared.clone();
    let thread_killed = killed.clone();
    thread::Builder::new()
        .name(format!("node-{}", exec.node_id))
        .spawn(move || {
            let result = match catch_unwind(AssertUnwindSafe(|| exec.run(env))) {
                Ok(Ok(())) => Ok(()),
                Ok(Err(e)) => Err(e.0),
                Err(_) => Err("panicked".to_string()),
            };
            let result = if thread_killed.load(Ordering::SeqCst) {
                Err("killed".to_string())
            } else {
                result
            };
            send_exit(&thread_shared, Exit { unit, attempt, result });
        })?;
    Ok(Live::Thread { stop, killed })
}

fn collecting_sink(output: Arc<Mutex<Vec<(NodeId, String)>>>) -> OutputSink {
    Arc::new(move |node, line| lock(&output).push((node, line.to_string())))
}

fn start_process(shared: &Arc<Shared>, unit: usize, attempt: u64) -> Result<Live, Error> {
    let binary = shared
        .binary
        .as_ref()
        .ok_or_else(|| Error::InvalidState("no binary for the processes launcher".into()))?;
    let manifest = shared
        .manifest_path
        .as_ref()
        .ok_or_else(|| Error::InvalidState("no manifest file".into()))?;
    let label = shared.units[unit].label;
    let mut child = Command::new(binary)
        .arg("run-node")
        .arg("--manifest")
        .arg(manifest)
        .arg("--node")
        .arg(label.0.to_string())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    let pid = child.id();
    debug!("node {label} started as pid {pid}");

    let stdout = child.stdout.take().expect("stdout is piped");
    let output = shared.output.clone();
    let out_reader = thread::Builder::new()
        .name(format!("node-{label}-stdout"))
        .spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => lock(&output).push((label, l)),
                    Err(_) => break,
                }
            }
        })?;
    let stderr = child.stderr.take().expect("stderr is piped");
    let err_reader = thread::Builder::new()
        .name(format!("node-{label}-stderr"))
        .spawn(move || {
            let mut last = String::new();
            for line in BufReader::new(stderr).lines() {
                match line {
                    Ok(l) => {
                        eprintln!("[node {label}] {l}");
                        if !l.trim().is_empty() {
                            last = l;
                        }
                    }
                    Err(_) => break,
                }
            }
            last
        })?;

    let waiter_shared = shared.clone();
    thread::Builder::new()
        .name(format!("node-{label}-wait"))
        .spawn(move || {
            let status = child.wait();
            let _ = out_reader.join();
            let last = err_reader.join().unwrap_or_default();
            let result = match status {
                Ok(s) if s.success() => Ok(()),
                Ok(s) if last.is_empty() => Err(s.to_string()),
                Ok(s) => Err(format!("{s}: {last}")),
                Err(e) => Err(format!("wait failed: {e}")),
            };
            send_exit(&waiter_shared, Exit { unit, attempt, result });
        })?;
    Ok(Live::Process { pid })
}

fn signal(pid: u32, sig: libc::c_int) {
    let Ok(pid) = libc::pid_t::try_from(pid) else {
        return;
    };
    // SAFETY: kill(2) has no memory-safety preconditions.
    unsafe {
        libc::kill(pid, sig);
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}
