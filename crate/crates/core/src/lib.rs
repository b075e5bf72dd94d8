//! Pure data side of launchgraph: program graphs built from nodes and
//! handles, the launch manifest, the canonical JSON used on the wire, and a
//! few small algorithms the runtime shares with its tests.
//!
//! Nothing here touches sockets, threads or files; the `launchgraph` crate
//! carries all of that.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cache;
pub mod frame;
pub mod json;
pub mod manifest;
pub mod partition;
pub mod topology;
pub mod validate;
pub mod value;

pub use frame::{decode_frame, encode_frame, Envelope, FrameError};
pub use manifest::{AddressTable, Endpoint, Manifest, ManifestError};
pub use topology::{
    ColocationMode, DeferredSlot, GroupScope, Handle, NodeId, NodeKind, NodeSpec, ProgramGraph,
    TopologyError, DEFAULT_GROUP,
};
pub use validate::{Finding, Severity, ValidationReport};
pub use value::{ArgValue, PlaceholderId};
