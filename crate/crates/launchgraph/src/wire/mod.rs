//! RPC transport: length-prefixed canonical JSON frames over TCP.
//!
//! A server dispatches call envelopes onto one [`Service`](crate::service::Service);
//! a [`Client`] multiplexes any number of in-flight calls over one
//! connection, matching replies by call id.

mod client;
mod server;

use std::io::{self, Read};
use std::net::{TcpListener, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};

use launchgraph_core::frame::{self, Envelope, FrameError, HEADER_LEN};
use launchgraph_core::Endpoint;

pub use client::{connect, CallError, CallFuture, Client, ConnectOptions};
pub use server::{serve, serve_at, Dispatch, ServerControl};

use crate::Error;

static LISTENERS_BOUND: AtomicUsize = AtomicUsize::new(0);

/// Number of listening sockets this process has bound through this module.
pub fn listeners_bound() -> usize {
    LISTENERS_BOUND.load(Ordering::SeqCst)
}

/// Binds a listener at `endpoint`.
pub fn bind(endpoint: &Endpoint) -> Result<TcpListener, Error> {
    let addr = (endpoint.host.as_str(), endpoint.port);
    match TcpListener::bind(addr) {
        Ok(l) => {
            LISTENERS_BOUND.fetch_add(1, Ordering::SeqCst);
            Ok(l)
        }
        Err(e) if e.kind() == io::ErrorKind::AddrInUse => Err(Error::AddressInUse(endpoint.to_string())),
        Err(e) => Err(e.into()),
    }
}

/// Binds an OS-assigned loopback port.
pub fn bind_ephemeral() -> Result<(TcpListener, Endpoint), Error> {
    let l = TcpListener::bind("127.0.0.1:0")
        .map_err(|e| Error::ResourceUnavailable(format!("cannot bind a loopback port: {e}")))?;
    LISTENERS_BOUND.fetch_add(1, Ordering::SeqCst);
    let port = l.local_addr()?.port();
    Ok((l, Endpoint::loopback(port)?))
}

pub(crate) fn socket_addr(endpoint: &Endpoint) -> io::Result<std::net::SocketAddr> {
    (endpoint.host.as_str(), endpoint.port)
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "endpoint did not resolve"))
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub(crate) fn read_frame(r: &mut impl Read) -> Result<Option<Envelope>, ReadError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = frame::payload_len(&header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(frame::decode_payload(&payload)?))
}
