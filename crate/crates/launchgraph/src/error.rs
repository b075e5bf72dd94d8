use launchgraph_core::{FrameError, ManifestError, PlaceholderId, TopologyError, ValidationReport};

use crate::launch::WaitResult;
use crate::wire::CallError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("factory {0:?} is already registered")]
    AlreadyRegistered(String),
    #[error("unknown factory {0:?}")]
    UnknownFactory(String),
    #[error("no address for placeholder {0}")]
    UnresolvedPlaceholder(PlaceholderId),
    #[error("could not connect to {endpoint}: {reason}")]
    ConnectionFailed { endpoint: String, reason: String },
    #[error("address in use: {0}")]
    AddressInUse(String),
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("program failed validation:\n{0}")]
    InvalidProgram(ValidationReport),
    #[error("resources name unknown group {0:?}")]
    UnknownGroup(String),
    #[error("resource unavailable: {0}")]
    ResourceUnavailable(String),
    #[error("node failed: {0}")]
    NodeFailed(String),
    #[error("timed out waiting for nodes")]
    TimedOut(WaitResult),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
