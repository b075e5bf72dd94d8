use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use launchgraph_core::{Manifest, NodeId};
use log::{debug, warn};

use crate::service::OutputSink;
use crate::services::{to_executables, RunEnv, ServiceRegistry};
use crate::Error;

static TERM_REQUESTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigterm(_: libc::c_int) {
    TERM_REQUESTED.store(true, Ordering::SeqCst);
}

const WATCH_PERIOD: Duration = Duration::from_millis(20);
const STOP_GRACE: Duration = Duration::from_secs(5);

/// Child-process entry of the processes launcher: runs the executables of
/// one node from a launch manifest. Node output goes to stdout, one line
/// per emitted line. SIGTERM or the death of the parent requests a
/// cooperative stop; the process exits anyway after a grace period.
pub fn run_node(manifest: &Path, node: NodeId, registry: &ServiceRegistry) -> Result<(), Error> {
    let text = std::fs::read(manifest)?;
    let Manifest { program, addresses } = Manifest::parse(&text)?;
    let spec = program
        .node(node)
        .ok_or_else(|| Error::InvalidArgument(format!("manifest has no node {node}")))?;
    let execs = to_executables(spec, &program, &addresses, registry)?;

    let stop = Arc::new(AtomicBool::new(false));
    install_stop_watch(stop.clone())?;

    let sink: OutputSink = Arc::new(|_, line| {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    });
    let handles = execs
        .into_iter()
        .map(|e| {
            let env = RunEnv {
                listener: None,
                stop: stop.clone(),
                sink: sink.clone(),
                connect_deadline: Duration::from_secs(10),
            };
            let id = e.node_id;
            thread::Builder::new()
                .name(format!("node-{id}"))
                .spawn(move || e.run(env).map_err(|err| format!("node {id}: {err}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut failures = Vec::new();
    for h in handles {
        match h.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => failures.push(e),
            Err(_) => failures.push("executable panicked".into()),
        }
    }
    if failures.is_empty() {
        debug!("node {node} finished");
        Ok(())
    } else {
        Err(Error::NodeFailed(failures.join("; ")))
    }
}

fn install_stop_watch(stop: Arc<AtomicBool>) -> Result<(), Error> {
    // SAFETY: the handler only stores to an atomic, which is
    // async-signal-safe.
    unsafe {
        libc::signal(libc::SIGTERM, on_sigterm as extern "C" fn(libc::c_int) as libc::sighandler_t);
    }
    // SAFETY: getppid(2) cannot fail and has no preconditions.
    let parent = unsafe { libc::getppid() };
    thread::Builder::new().name("stop-watch".into()).spawn(move || {
        loop {
            if TERM_REQUESTED.load(Ordering::SeqCst) {
                debug!("stop requested");
                break;
            }
            // SAFETY: as above.
            if unsafe { libc::getppid() } != parent {
                warn!("launcher went away; stopping");
                break;
            }
            thread::sleep(WATCH_PERIOD);
        }
        stop.store(true, Ordering::SeqCst);
        // A node blocked in a call may never see the flag.
        thread::sleep(STOP_GRACE);
        warn!("node did not stop within {STOP_GRACE:?}; exiting");
        std::process::exit(1);
    })?;
    Ok(())
}
