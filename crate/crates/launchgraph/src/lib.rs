//! Declare a distributed program as a graph of service nodes, then run the
//! same graph on threads or on local processes.
//!
//! ```no_run
//! use launchgraph::prelude::*;
//!
//! let mut p = ProgramGraph::new("producer-consumer")?;
//! let mut producers = p.group("producer")?;
//! let a = producers.add_node(NodeDef::service("Range", vec![0.into(), 10.into()]))?.unwrap();
//! let b = producers.add_node(NodeDef::service("Range", vec![10.into(), 20.into()]))?.unwrap();
//! drop(producers);
//! p.group("consumer")?
//!     .add_node(NodeDef::leaf("Consumer", vec![vec![a.arg(), b.arg()].into()]))?;
//!
//! let control = launch(&p, &gallery::registry(), &LaunchOptions::threads())?;
//! control.wait(None, std::time::Duration::from_secs(30))?;
//! # Ok::<(), launchgraph::Error>(())
//! ```

pub mod cli;
mod error;
pub mod gallery;
pub mod launch;
pub mod service;
pub mod services;
pub mod wire;

pub use error::Error;
pub use launchgraph_core as core;

pub mod prelude {
    pub use crate::launch::{launch, ControlPlane, LaunchOptions, LauncherKind, NodeStatus, RestartPolicy};
    pub use crate::service::{BuildContext, MethodError, NodeContext, Service};
    pub use crate::services::{Dispatch, Factory, ServiceRegistry};
    pub use crate::wire::{CallFuture, Client};
    pub use crate::{gallery, Error};
    pub use launchgraph_core::topology::NodeDef;
    pub use launchgraph_core::{ArgValue, ColocationMode, Handle, NodeId, NodeKind, ProgramGraph};
}
