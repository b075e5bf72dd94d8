use std::collections::{BTreeSet, HashMap};
use std::io::{BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use launchgraph_core::frame::{encode_frame, Envelope};
use launchgraph_core::{ArgValue, Endpoint};
use log::{debug, warn};

use super::read_frame;
use crate::service::Service;
use crate::Error;

/// How a server schedules method executions of its one service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dispatch {
    /// At most one method runs at any instant, across all connections.
    #[default]
    Serialized,
    /// Every call runs on its own thread and may overlap with others.
    Concurrent,
}

struct Shared {
    service: Arc<dyn Service>,
    methods: BTreeSet<String>,
    dispatch: Dispatch,
    exclusive: Mutex<()>,
    stop: AtomicBool,
    conns: Mutex<HashMap<u64, TcpStream>>,
    next_conn: AtomicU64,
    in_flight: Mutex<usize>,
    drained: Condvar,
}

/// How long shutdown waits for in-flight calls to send their replies.
pub const DRAIN_GRACE: Duration = Duration::from_millis(500);

impl Shared {
    fn begin_call(&self) {
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner()) += 1;
    }

    fn end_call(&self) {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        if *n == 0 {
            self.drained.notify_all();
        }
    }

    fn drain(&self, grace: Duration) {
        let end = Instant::now() + grace;
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n > 0 {
            let left = end.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            n = self.drained.wait_timeout(n, left).unwrap_or_else(|e| e.into_inner()).0;
        }
    }
}

/// Handle on a running server. Dropping it shuts the server down.
pub struct ServerControl {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl ServerControl {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, gives in-flight calls up to [`DRAIN_GRACE`] to
    /// reply, then closes every open connection. Idempotent.
    pub fn shutdown(&mut self) {
        let Some(accept) = self.accept.take() else {
            return;
        };
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        let _ = accept.join();
        self.shared.drain(DRAIN_GRACE);
        for (_, c) in self.shared.conns.lock().unwrap_or_else(|e| e.into_inner()).drain() {
            let _ = c.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ServerControl {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves `service` on an already bound listener.
pub fn serve(
    service: Arc<dyn Service>,
    methods: impl IntoIterator<Item = String>,
    listener: TcpListener,
    dispatch: Dispatch,
) -> Result<ServerControl, Error> {
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        service,
        methods: methods.into_iter().collect(),
        dispatch,
        exclusive: Mutex::new(()),
        stop: AtomicBool::new(false),
        conns: Mutex::new(HashMap::new()),
        next_conn: AtomicU64::new(0),
        in_flight: Mutex::new(0),
        drained: Condvar::new(),
    });
    let accept_shared = shared.clone();
    let accept = thread::Builder::new()
        .name(format!("rpc-accept-{}", addr.port()))
        .spawn(move || accept_loop(listener, accept_shared))?;
    debug!("serving on {addr} ({dispatch:?})");
    Ok(ServerControl {
        addr,
        shared,
        accept: Some(accept),
    })
}

/// Binds `endpoint` and serves on it.
pub fn serve_at(
    service: Arc<dyn Service>,
    methods: impl IntoIterator<Item = String>,
    endpoint: &Endpoint,
    dispatch: Dispatch,
) -> Result<ServerControl, Error> {
    serve(service, methods, super::bind(endpoint)?, dispatch)
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        let conn_id = shared.next_conn.fetch_add(1, Ordering::Relaxed);
        match stream.try_clone() {
            Ok(c) => {
                shared.conns.lock().unwrap_or_else(|e| e.into_inner()).insert(conn_id, c);
            }
            Err(e) => {
                warn!("cannot track connection: {e}");
                continue;
            }
        }
        let conn_shared = shared.clone();
        let spawned = thread::Builder::new()
            .name("rpc-conn".into())
            .spawn(move || {
                connection(stream, &conn_shared);
                conn_shared
                    .conns
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .remove(&conn_id);
            });
        if let Err(e) = spawned {
            warn!("cannot spawn connection thread: {e}");
        }
    }
}

fn connection(stream: TcpStream, shared: &Arc<Shared>) {
    let writer = match stream.try_clone() {
        Ok(w) => Arc::new(Mutex::new(w)),
        Err(_) => return,
    };
    let mut reader = BufReader::new(stream);
    loop {
        let envelope = match read_frame(&mut reader) {
            Ok(Some(e)) => e,
            Ok(None) => break,
            Err(e) => {
                if !shared.stop.load(Ordering::SeqCst) {
                    debug!("closing connection: {e}");
                }
                break;
            }
        };
        let Envelope::Call { id, method, args } = envelope else {
            debug!("client sent a non-call envelope; closing");
            break;
        };
        match shared.dispatch {
            Dispatch::Serialized => {
                shared.begin_call();
                let reply = handle_call(shared, id, &method, &args);
                let sent = send(&writer, &reply);
                shared.end_call();
                if !sent {
                    break;
                }
            }
            Dispatch::Concurrent => {
                let call_shared = shared.clone();
                let call_writer = writer.clone();
                shared.begin_call();
                let spawned = thread::Builder::new().name("rpc-call".into()).spawn(move || {
                    let reply = handle_call(&call_shared, id, &method, &args);
                    send(&call_writer, &reply);
                    call_shared.end_call();
                });
                if spawned.is_err() {
                    shared.end_call();
                    let reply = Envelope::Error {
                        id,
                        message: "server out of threads".into(),
                    };
                    send(&writer, &reply);
                }
            }
        }
    }
}

fn handle_call(shared: &Shared, id: u64, method: &str, args: &[ArgValue]) -> Envelope {
    if !shared.methods.contains(method) {
        return Envelope::Error {
            id,
            message: format!("no such method: {method}"),
        };
    }
    let _guard = match shared.dispatch {
        Dispatch::Serialized => Some(shared.exclusive.lock().unwrap_or_else(|e| e.into_inner())),
        Dispatch::Concurrent => None,
    };
    match catch_unwind(AssertUnwindSafe(|| shared.service.call(method, args))) {
        Ok(Ok(value)) => Envelope::Result { id, value },
        Ok(Err(e)) => Envelope::Error { id, message: e.0 },
        Err(_) => Envelope::Error {
            id,
            message: format!("method {method} panicked"),
        },
    }
}

fn send(writer: &Mutex<TcpStream>, reply: &Envelope) -> bool {
    let bytes = match encode_frame(reply) {
        Ok(b) => b,
        Err(e) => match encode_frame(&Envelope::Error {
            id: reply.id(),
            message: format!("cannot encode reply: {e}"),
        }) {
            Ok(b) => b,
            Err(_) => return false,
        },
    };
    let mut w = writer.lock().unwrap_or_else(|e| e.into_inner());
    w.write_all(&bytes).and_then(|_| w.flush()).is_ok()
}
