//! The service side of a node: what a factory constructs and what the
//! runtime hands it while it runs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use launchgraph_core::{ArgValue, NodeId, PlaceholderId};

use crate::wire::{CallError, Client};

/// Error raised by a service method or run procedure. Travels to callers as
/// the message of an error envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodError(pub String);

impl fmt::Display for MethodError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for MethodError {}

impl From<&str> for MethodError {
    fn from(s: &str) -> Self {
        MethodError(s.into())
    }
}

impl From<String> for MethodError {
    fn from(s: String) -> Self {
        MethodError(s)
    }
}

/// A remote error passes through with its message unchanged.
impl From<CallError> for MethodError {
    fn from(e: CallError) -> Self {
        match e {
            CallError::Remote(m) => MethodError(m),
            other => MethodError(other.to_string()),
        }
    }
}

impl From<crate::Error> for MethodError {
    fn from(e: crate::Error) -> Self {
        MethodError(e.to_string())
    }
}

impl From<std::io::Error> for MethodError {
    fn from(e: std::io::Error) -> Self {
        MethodError(e.to_string())
    }
}

pub type MethodResult = Result<ArgValue, MethodError>;

/// A constructed service. `call` is only ever invoked with names from the
/// factory's registered method list; `run` only if the factory registered
/// one.
pub trait Service: Send + Sync + 'static {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult;

    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        let _ = ctx;
        Ok(())
    }
}

/// Receives lines a node emits as its program output.
pub type OutputSink = Arc<dyn Fn(NodeId, &str) + Send + Sync>;

/// Handed to run procedures.
#[derive(Clone)]
pub struct NodeContext {
    node_id: NodeId,
    stop: Arc<AtomicBool>,
    sink: OutputSink,
}

impl NodeContext {
    pub fn new(node_id: NodeId, stop: Arc<AtomicBool>, sink: OutputSink) -> Self {
        NodeContext {
            node_id,
            stop,
            sink,
        }
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    /// Set once the launcher asks this node to wind down.
    pub fn should_stop(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn emit(&self, line: &str) {
        (self.sink)(self.node_id, line);
    }

    /// Sleeps up to `d`, waking early on stop. Returns false if stopped.
    pub fn sleep(&self, d: Duration) -> bool {
        let end = Instant::now() + d;
        loop {
            if self.should_stop() {
                return false;
            }
            let now = Instant::now();
            if now >= end {
                return true;
            }
            std::thread::sleep((end - now).min(Duration::from_millis(20)));
        }
    }
}

/// Everything a constructor sees: its arguments, with handles already
/// dereferenced into connected clients.
pub struct BuildContext<'a> {
    pub node_id: NodeId,
    pub args: &'a [ArgValue],
    clients: &'a BTreeMap<PlaceholderId, Client>,
}

impl<'a> BuildContext<'a> {
    pub fn new(
        node_id: NodeId,
        args: &'a [ArgValue],
        clients: &'a BTreeMap<PlaceholderId, Client>,
    ) -> Self {
        BuildContext {
            node_id,
            args,
            clients,
        }
    }

    pub fn arg(&self, i: usize) -> Result<&'a ArgValue, MethodError> {
        self.args
            .get(i)
            .ok_or_else(|| MethodError(format!("missing argument {i}")))
    }

    pub fn i64_arg(&self, i: usize) -> Result<i64, MethodError> {
        self.arg(i)?
            .as_i64()
            .ok_or_else(|| MethodError(format!("argument {i} must be an integer")))
    }

    pub fn f64_arg(&self, i: usize) -> Result<f64, MethodError> {
        self.arg(i)?
            .as_f64()
            .ok_or_else(|| MethodError(format!("argument {i} must be a number")))
    }

    pub fn str_arg(&self, i: usize) -> Result<&'a str, MethodError> {
        self.arg(i)?
            .as_str()
            .ok_or_else(|| MethodError(format!("argument {i} must be a string")))
    }

    /// The client for a handle argument.
    pub fn client(&self, v: &ArgValue) -> Result<Client, MethodError> {
        let p = v
            .as_handle()
            .ok_or_else(|| MethodError("expected a handle".into()))?;
        self.clients
            .get(&p)
            .cloned()
            .ok_or_else(|| MethodError(format!("handle {p} was not dereferenced")))
    }

    /// Clients for a sequence of handles.
    pub fn clients(&self, v: &ArgValue) -> Result<Vec<Client>, MethodError> {
        v.as_seq()
            .ok_or_else(|| MethodError("expected a sequence of handles".into()))?
            .iter()
            .map(|h| self.client(h))
            .collect()
    }
}

/// Argument accessors for method calls.
pub fn arg_f64(args: &[ArgValue], i: usize) -> Result<f64, MethodError> {
    args.get(i)
        .and_then(ArgValue::as_f64)
        .ok_or_else(|| MethodError(format!("argument {i} must be a number")))
}

pub fn arg_i64(args: &[ArgValue], i: usize) -> Result<i64, MethodError> {
    args.get(i)
        .and_then(ArgValue::as_i64)
        .ok_or_else(|| MethodError(format!("argument {i} must be an integer")))
}

pub fn arg_str(args: &[ArgValue], i: usize) -> Result<&str, MethodError> {
    args.get(i)
        .and_then(ArgValue::as_str)
        .ok_or_else(|| MethodError(format!("argument {i} must be a string")))
}
