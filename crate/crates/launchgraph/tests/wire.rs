use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use launchgraph::core::{ArgValue, Endpoint, NodeId};
use launchgraph::gallery::Range;
use launchgraph::service::{arg_i64, BuildContext, MethodResult, Service};
use launchgraph::wire::{self, serve, serve_at, CallError, Client, ConnectOptions, Dispatch, ServerControl};
use launchgraph::Error;

/// Read-modify-write counter that loses updates unless calls are
/// serialized, and records any overlap it observes.
#[derive(Default)]
struct Counter {
    value: AtomicI64,
    active: AtomicUsize,
    overlaps: AtomicUsize,
}

impl Service for Counter {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        match method {
            "incr" => {
                if self.active.fetch_add(1, Ordering::SeqCst) > 0 {
                    self.overlaps.fetch_add(1, Ordering::SeqCst);
                }
                let v = self.value.load(Ordering::SeqCst);
                thread::yield_now();
                self.value.store(v + 1, Ordering::SeqCst);
                self.active.fetch_sub(1, Ordering::SeqCst);
                Ok(ArgValue::Null)
            }
            "get" => Ok(self.value.load(Ordering::SeqCst).into()),
            m => Err(format!("no such method: {m}").into()),
        }
    }
}

/// `sleep(ms)` returns `ms` after sleeping that long; `boom` always fails.
struct Sleeper;

impl Service for Sleeper {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
        match method {
            "sleep" => {
                let ms = arg_i64(args, 0)?;
                thread::sleep(Duration::from_millis(ms as u64));
                Ok(ms.into())
            }
            "boom" => Err("kaboom".into()),
            m => Err(format!("no such method: {m}").into()),
        }
    }
}

fn start(service: impl Service, methods: &[&str], dispatch: Dispatch) -> (ServerControl, Endpoint) {
    let (listener, ep) = wire::bind_ephemeral().unwrap();
    let server = serve(
        Arc::new(service),
        methods.iter().map(|m| m.to_string()),
        listener,
        dispatch,
    )
    .unwrap();
    (server, ep)
}

fn unused_endpoint() -> Endpoint {
    let (listener, ep) = wire::bind_ephemeral().unwrap();
    drop(listener);
    ep
}

fn range(start: i64, end: i64) -> Range {
    let args = [start.into(), end.into()];
    let clients = BTreeMap::new();
    Range::build(&BuildContext::new(NodeId(0), &args, &clients)).unwrap()
}

#[test]
fn range_get_size_and_produce() {
    let (_server, ep) = start(range(0, 10), &["get_size", "produce"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    assert_eq!(c.call("get_size", vec![]).unwrap(), ArgValue::Int(10));
    for i in 0..3 {
        assert_eq!(c.call("produce", vec![]).unwrap(), ArgValue::Int(i));
    }
}

#[test]
fn serialized_counter_counts_exactly() {
    let (server, ep) = start(Counter::default(), &["incr", "get"], Dispatch::Serialized);
    let workers: Vec<_> = (0..8)
        .map(|_| {
            let ep = ep.clone();
            thread::spawn(move || {
                let c = wire::connect(&ep).unwrap();
                for _ in 0..100 {
                    c.call("incr", vec![]).unwrap();
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    let c = wire::connect(&ep).unwrap();
    assert_eq!(c.call("get", vec![]).unwrap(), ArgValue::Int(800));
    drop(server);
}

#[test]
fn serialized_dispatch_never_overlaps() {
    let counter = Arc::new(Counter::default());
    struct Shared(Arc<Counter>);
    impl Service for Shared {
        fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
            self.0.call(method, args)
        }
    }
    let (_server, ep) = start(Shared(counter.clone()), &["incr"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    let futures: Vec<_> = (0..200).map(|_| c.call_async("incr", vec![])).collect();
    for f in futures {
        f.wait().unwrap();
    }
    assert_eq!(counter.overlaps.load(Ordering::SeqCst), 0);
    assert_eq!(counter.value.load(Ordering::SeqCst), 200);
}

#[test]
fn unknown_method_is_a_remote_error() {
    let (_server, ep) = start(Sleeper, &["sleep", "boom"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    assert_eq!(
        c.call("nope", vec![]),
        Err(CallError::Remote("no such method: nope".into()))
    );
    // The connection survives the error.
    assert_eq!(c.call("sleep", vec![0.into()]).unwrap(), ArgValue::Int(0));
}

#[test]
fn raising_method_fails_the_future() {
    let (_server, ep) = start(Sleeper, &["sleep", "boom"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    let f = c.call_async("boom", vec![]);
    assert_eq!(f.wait(), Err(CallError::Remote("kaboom".into())));
}

#[test]
fn interleaved_replies_match_their_calls() {
    let (_server, ep) = start(Sleeper, &["sleep"], Dispatch::Concurrent);
    let c = wire::connect(&ep).unwrap();
    let t = Instant::now();
    let delays = [300i64, 200, 100, 0];
    let futures: Vec<_> = delays
        .iter()
        .map(|ms| c.call_async("sleep", vec![(*ms).into()]))
        .collect();
    // The last call finishes first.
    futures[3].wait().unwrap();
    assert!(!futures[0].is_ready());
    for (f, ms) in futures.iter().zip(delays) {
        assert_eq!(f.wait().unwrap(), ArgValue::Int(ms));
    }
    assert!(t.elapsed() < Duration::from_millis(600), "calls did not overlap");
}

#[test]
fn future_reads_are_idempotent() {
    let (_server, ep) = start(Sleeper, &["sleep"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    let f = c.call_async("sleep", vec![5.into()]);
    assert_eq!(f.wait().unwrap(), ArgValue::Int(5));
    assert!(f.is_ready());
    assert_eq!(f.wait().unwrap(), ArgValue::Int(5));
}

#[test]
fn concurrent_futures_finish_in_max_not_sum() {
    let servers: Vec<_> = (0..4).map(|_| start(Sleeper, &["sleep"], Dispatch::Serialized)).collect();
    let clients: Vec<Client> = servers.iter().map(|(_, ep)| wire::connect(ep).unwrap()).collect();
    let t = Instant::now();
    let futures: Vec<_> = clients.iter().map(|c| c.call_async("sleep", vec![100.into()])).collect();
    for f in futures {
        f.wait().unwrap();
    }
    assert!(t.elapsed() < Duration::from_millis(300));
}

#[test]
fn connect_retries_until_a_late_bind() {
    let ep = unused_endpoint();
    let late = ep.clone();
    let server = thread::spawn(move || {
        thread::sleep(Duration::from_secs(2));
        serve_at(Arc::new(Sleeper), ["sleep".to_string()], &late, Dispatch::Serialized).unwrap()
    });
    let t = Instant::now();
    let c = wire::connect(&ep).unwrap();
    assert!(t.elapsed() >= Duration::from_millis(1500));
    assert_eq!(c.call("sleep", vec![1.into()]).unwrap(), ArgValue::Int(1));
    drop(server.join().unwrap());
}

#[test]
fn connect_gives_up_after_the_deadline() {
    let ep = unused_endpoint();
    let t = Instant::now();
    let err = Client::connect(
        &ep,
        ConnectOptions {
            deadline: Duration::from_millis(300),
            cancel: None,
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::ConnectionFailed { .. }), "{err}");
    assert!(t.elapsed() >= Duration::from_millis(300));
    assert!(t.elapsed() < Duration::from_secs(3));
}

#[test]
fn connect_honors_cancellation() {
    let ep = unused_endpoint();
    let cancel = Arc::new(AtomicBool::new(true));
    let t = Instant::now();
    let err = Client::connect(
        &ep,
        ConnectOptions {
            deadline: Duration::from_secs(10),
            cancel: Some(cancel),
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::ConnectionFailed { .. }));
    assert!(t.elapsed() < Duration::from_secs(2));
}

#[test]
fn server_death_mid_call_is_a_transport_error() {
    let (mut server, ep) = start(Sleeper, &["sleep"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    let f = c.call_async("sleep", vec![2000.into()]);
    thread::sleep(Duration::from_millis(100));
    server.shutdown();
    match f.wait_timeout(Duration::from_secs(5)) {
        Err(CallError::Transport(_)) => {}
        other => panic!("expected a transport error, got {other:?}"),
    }
}

#[test]
fn call_timeout_expires() {
    let (_server, ep) = start(Sleeper, &["sleep"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    assert_eq!(
        c.call_timeout("sleep", vec![500.into()], Duration::from_millis(50)),
        Err(CallError::Timeout)
    );
}

#[test]
fn bind_conflict_is_address_in_use() {
    let (listener, ep) = wire::bind_ephemeral().unwrap();
    let err = wire::bind(&ep).unwrap_err();
    assert!(matches!(err, Error::AddressInUse(_)), "{err}");
    drop(listener);
}

#[test]
fn client_is_shareable_across_threads() {
    let (_server, ep) = start(Counter::default(), &["incr", "get"], Dispatch::Serialized);
    let c = wire::connect(&ep).unwrap();
    let workers: Vec<_> = (0..4)
        .map(|_| {
            let c = c.clone();
            thread::spawn(move || {
                for _ in 0..25 {
                    c.call("incr", vec![]).unwrap();
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    assert_eq!(c.call("get", vec![]).unwrap(), ArgValue::Int(100));
}
