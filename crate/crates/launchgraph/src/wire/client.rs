use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use launchgraph_core::frame::{encode_frame, Envelope};
use launchgraph_core::{ArgValue, Endpoint};
use log::debug;

use super::{read_frame, socket_addr};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    /// The service answered with an error envelope.
    #[error("remote error: {0}")]
    Remote(String),
    /// The connection broke before a reply arrived.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("call timed out")]
    Timeout,
}

/// Retry policy for [`connect`].
#[derive(Debug, Clone)]
pub struct ConnectOptions {
    /// Give up once this much time has passed without a connection.
    pub deadline: Duration,
    /// Checked between attempts; when set, connecting stops early.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        ConnectOptions {
            deadline: Duration::from_secs(10),
            cancel: None,
        }
    }
}

const BACKOFF_START: Duration = Duration::from_millis(5);
const BACKOFF_CAP: Duration = Duration::from_millis(200);

type Outcome = Result<ArgValue, CallError>;

struct Slot {
    outcome: Mutex<Option<Outcome>>,
    ready: Condvar,
}

impl Slot {
    fn new() -> Arc<Slot> {
        Arc::new(Slot {
            outcome: Mutex::new(None),
            ready: Condvar::new(),
        })
    }

    /// First resolution wins.
    fn resolve(&self, outcome: Outcome) {
        let mut o = lock(&self.outcome);
        if o.is_none() {
            *o = Some(outcome);
            self.ready.notify_all();
        }
    }
}

/// The pending result of a [`Client::call_async`]. Reading it is idempotent
/// and may happen from any thread.
#[derive(Clone)]
pub struct CallFuture {
    id: u64,
    slot: Arc<Slot>,
}

impl CallFuture {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_ready(&self) -> bool {
        lock(&self.slot.outcome).is_some()
    }

    /// Blocks until the call resolves.
    pub fn wait(&self) -> Result<ArgValue, CallError> {
        let mut o = lock(&self.slot.outcome);
        loop {
            if let Some(out) = o.as_ref() {
                return out.clone();
            }
            o = self.slot.ready.wait(o).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Like [`wait`](Self::wait) but gives up with [`CallError::Timeout`].
    /// The call itself stays in flight.
    pub fn wait_timeout(&self, timeout: Duration) -> Result<ArgValue, CallError> {
        let end = Instant::now() + timeout;
        let mut o = lock(&self.slot.outcome);
        loop {
            if let Some(out) = o.as_ref() {
                return out.clone();
            }
            let now = Instant::now();
            if now >= end {
                return Err(CallError::Timeout);
            }
            o = self
                .slot
                .ready
                .wait_timeout(o, end - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

impl std::fmt::Debug for CallFuture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CallFuture")
            .field("id", &self.id)
            .field("ready", &self.is_ready())
            .finish()
    }
}

struct Conn {
    writer: Arc<Mutex<TcpStream>>,
    generation: u64,
}

#[derive(Default)]
struct State {
    conn: Option<Conn>,
    generation: u64,
    pending: HashMap<u64, Arc<Slot>>,
}

impl State {
    fn fail_all(&mut self, why: &str) {
        self.conn = None;
        for (_, slot) in self.pending.drain() {
            slot.resolve(Err(CallError::Transport(why.into())));
        }
    }
}

struct Inner {
    endpoint: Endpoint,
    options: ConnectOptions,
    state: Arc<Mutex<State>>,
    next_id: AtomicU64,
}

impl Drop for Inner {
    fn drop(&mut self) {
        if let Some(conn) = lock(&self.state).conn.take() {
            let _ = lock(&conn.writer).shutdown(Shutdown::Both);
        }
    }
}

/// RPC client for one endpoint. Cheap to clone; clones share the
/// connection. Safe for concurrent use: replies are matched by call id. A
/// broken connection fails its in-flight calls and is re-established on the
/// next call.
#[derive(Clone)]
pub struct Client {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client").field("endpoint", &self.inner.endpoint).finish()
    }
}

/// Connects with the default options (10 s deadline).
pub fn connect(endpoint: &Endpoint) -> Result<Client, Error> {
    Client::connect(endpoint, ConnectOptions::default())
}

impl Client {
    /// Retries with capped exponential backoff until the server accepts or
    /// the deadline passes.
    pub fn connect(endpoint: &Endpoint, options: ConnectOptions) -> Result<Client, Error> {
        let client = Client {
            inner: Arc::new(Inner {
                endpoint: endpoint.clone(),
                options,
                state: Arc::new(Mutex::new(State::default())),
                next_id: AtomicU64::new(0),
            }),
        };
        {
            let mut st = lock(&client.inner.state);
            client.ensure_conn(&mut st)?;
        }
        Ok(client)
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.inner.endpoint
    }

    /// Blocking call.
    pub fn call(&self, method: &str, args: Vec<ArgValue>) -> Result<ArgValue, CallError> {
        self.call_async(method, args).wait()
    }

    /// Blocking call with a reply deadline.
    pub fn call_timeout(
        &self,
        method: &str,
        args: Vec<ArgValue>,
        timeout: Duration,
    ) -> Result<ArgValue, CallError> {
        self.call_async(method, args).wait_timeout(timeout)
    }

    /// Sends the call and returns at once.
    pub fn call_async(&self, method: &str, args: Vec<ArgValue>) -> CallFuture {
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let slot = Slot::new();
        let future = CallFuture {
            id,
            slot: slot.clone(),
        };
        let bytes = match encode_frame(&Envelope::Call {
            id,
            method: method.into(),
            args,
        }) {
            Ok(b) => b,
            Err(e) => {
                slot.resolve(Err(CallError::Transport(format!("cannot encode call: {e}"))));
                return future;
            }
        };
        let (writer, generation) = {
            let mut st = lock(&self.inner.state);
            if let Err(e) = self.ensure_conn(&mut st) {
                slot.resolve(Err(CallError::Transport(e.to_string())));
                return future;
            }
            let conn = st.conn.as_ref().expect("connection just ensured");
            let w = (conn.writer.clone(), conn.generation);
            st.pending.insert(id, slot);
            w
        };
        let written = {
            let mut w = lock(&writer);
            w.write_all(&bytes).and_then(|_| w.flush())
        };
        if let Err(e) = written {
            let mut st = lock(&self.inner.state);
            if st.generation == generation {
                let _ = lock(&writer).shutdown(Shutdown::Both);
                st.fail_all(&format!("send failed: {e}"));
            }
        }
        future
    }

    fn ensure_conn(&self, st: &mut State) -> Result<(), Error> {
        if st.conn.is_some() {
            return Ok(());
        }
        let stream = dial(&self.inner.endpoint, &self.inner.options)?;
        let reader = stream.try_clone()?;
        st.generation += 1;
        let generation = st.generation;
        st.conn = Some(Conn {
            writer: Arc::new(Mutex::new(stream)),
            generation,
        });
        let state = self.inner.state.clone();
        thread::Builder::new()
            .name("rpc-client-reader".into())
            .spawn(move || read_replies(reader, state, generation))?;
        Ok(())
    }
}

fn read_replies(stream: TcpStream, state: Arc<Mutex<State>>, generation: u64) {
    let mut reader = BufReader::new(stream);
    let why = loop {
        let envelope = match read_frame(&mut reader) {
            Ok(Some(e)) => e,
            Ok(None) => break "connection closed by peer".to_string(),
            Err(e) => break format!("connection lost: {e}"),
        };
        let (id, outcome) = match envelope {
            Envelope::Result { id, value } => (id, Ok(value)),
            Envelope::Error { id, message } => (id, Err(CallError::Remote(message))),
            Envelope::Call { .. } => break "server sent a call envelope".to_string(),
        };
        let slot = lock(&state).pending.remove(&id);
        match slot {
            Some(slot) => slot.resolve(outcome),
            None => debug!("reply for unknown call id {id}"),
        }
    };
    let mut st = lock(&state);
    if st.generation == generation {
        if let Some(conn) = &st.conn {
            let _ = lock(&conn.writer).shutdown(Shutdown::Both);
        }
        st.fail_all(&why);
    }
}

fn dial(endpoint: &Endpoint, options: &ConnectOptions) -> Result<TcpStream, Error> {
    let start = Instant::now();
    let mut backoff = BACKOFF_START;
    let failed = |reason: String| Error::ConnectionFailed {
        endpoint: endpoint.to_string(),
        reason,
    };
    loop {
        let attempt = socket_addr(endpoint).and_then(|addr| {
            let left = options.deadline.saturating_sub(start.elapsed());
            TcpStream::connect_timeout(&addr, left.clamp(Duration::from_millis(1), Duration::from_secs(1)))
        });
        let err = match attempt {
            Ok(s) => {
                let _ = s.set_nodelay(true);
                return Ok(s);
            }
            Err(e) => e,
        };
        if options.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst)) {
            return Err(failed(format!("cancelled: {err}")));
        }
        let elapsed = start.elapsed();
        if elapsed >= options.deadline {
            return Err(failed(format!("gave up after {elapsed:.1?}: {err}")));
        }
        thread::sleep(backoff.min(options.deadline - elapsed));
        backoff = (backoff * 2).min(BACKOFF_CAP);
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}
