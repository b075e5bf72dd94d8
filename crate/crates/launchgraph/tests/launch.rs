use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use launchgraph::core::partition::count_words;
use launchgraph::core::topology::NodeDef;
use launchgraph::core::{ArgValue, ColocationMode, NodeId, ProgramGraph};
use launchgraph::gallery::{self, Variant};
use launchgraph::launch::{
    child_processes, launch, ControlPlane, LaunchOptions, LauncherKind, NodeStatus, RestartDecision,
    RestartPolicy,
};
use launchgraph::service::{MethodError, MethodResult, NodeContext, Service};
use launchgraph::services::{colocation_node, dereference, Factory, ServiceRegistry};
use launchgraph::Error;

fn processes() -> LaunchOptions {
    LaunchOptions::processes(env!("CARGO_BIN_EXE_launchgraph"))
}

fn both() -> [LaunchOptions; 2] {
    [LaunchOptions::threads(), processes()]
}

/// Polls until `f` holds or `limit` passes.
fn eventually(limit: Duration, mut f: impl FnMut() -> bool) -> bool {
    let end = Instant::now() + limit;
    while Instant::now() < end {
        if f() {
            return true;
        }
        thread::sleep(Duration::from_millis(20));
    }
    f()
}

/// Serving-only node plus a requester that loops until stopped.
fn endless_param_server() -> ProgramGraph {
    gallery::param_server_program(Variant::Single, 1, None).unwrap()
}

#[test]
fn launchers_agree_on_producer_consumer() {
    let outputs: Vec<Vec<i64>> = both()
        .iter()
        .map(|o| gallery::run_producer_consumer(o).unwrap())
        .collect();
    assert_eq!(outputs[0], (0..20).collect::<Vec<_>>());
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn launchers_agree_on_word_counts() {
    let texts = vec![
        "the quick brown fox jumps over the lazy dog".to_string(),
        "The dog barks and the fox runs".to_string(),
    ];
    let oracle = count_words(&texts.join("\n"));
    for options in both() {
        let dir = tempfile::tempdir().unwrap();
        let got = gallery::run_mapreduce(&texts, 3, dir.path(), &options).unwrap();
        assert_eq!(got, oracle, "{}", options.launcher);
    }
}

#[test]
fn resources_are_checked_against_groups() {
    let p = gallery::producer_consumer_program(&[(0, 10), (10, 20)]).unwrap();
    let mut ok = BTreeMap::new();
    ok.insert("producer".to_string(), BTreeMap::from([("cpu".to_string(), 2.0), ("ram".to_string(), 2.0)]));
    let control = launch(&p, &gallery::registry(), &LaunchOptions::threads().with_resources(ok)).unwrap();
    control.wait(None, Duration::from_secs(10)).unwrap_err();
    control.stop();

    let mut bad = BTreeMap::new();
    bad.insert("nope".to_string(), BTreeMap::from([("cpu".to_string(), 1.0)]));
    let err = launch(&p, &gallery::registry(), &LaunchOptions::threads().with_resources(bad)).err();
    assert!(matches!(err, Some(Error::UnknownGroup(ref g)) if g == "nope"), "{err:?}");
}

#[test]
fn invalid_programs_are_not_launched() {
    let mut p = ProgramGraph::new("p").unwrap();
    p.add_deferred_node().unwrap();
    let err = launch(&p, &gallery::registry(), &LaunchOptions::threads()).err();
    assert!(matches!(err, Some(Error::InvalidProgram(ref r)) if r.error_count() == 1), "{err:?}");
}

#[test]
fn address_table_is_total_and_distinct() {
    let p = gallery::param_server_program(Variant::Partitioned(3), 4, Some(0.1)).unwrap();
    let control = launch(&p, &gallery::registry(), &LaunchOptions::threads()).unwrap();
    assert!(control.addresses().missing_for(&p).is_empty());
    assert_eq!(control.addresses().len(), 3);
    assert!(control.addresses().endpoints_distinct());
    control.stop();
}

#[test]
fn waiting_on_a_pure_server_times_out() {
    let p = endless_param_server();
    let server = gallery::group_members(&p, "server")[0];
    let control = launch(&p, &gallery::registry(), &LaunchOptions::threads()).unwrap();
    let t = Instant::now();
    match control.wait(Some(&[server]), Duration::from_secs(1)) {
        Err(Error::TimedOut(partial)) => assert_eq!(partial.statuses[&server], NodeStatus::Running),
        other => panic!("expected a timeout, got {other:?}"),
    }
    assert!(t.elapsed() >= Duration::from_secs(1));
    control.stop();
}

#[test]
fn failing_mapper_is_reported_under_both_launchers() {
    for options in both() {
        let dir = tempfile::tempdir().unwrap();
        let p = gallery::mapreduce_program(&[dir.path().join("missing.txt")], &[dir.path().join("out")]).unwrap();
        let mapper = gallery::group_members(&p, "mapper")[0];
        let control = launch(&p, &gallery::registry(), &options).unwrap();
        let r = control.wait(Some(&[mapper]), Duration::from_secs(30)).unwrap();
        match &r.statuses[&mapper] {
            NodeStatus::Failed(m) => assert!(m.contains("cannot read"), "{}: {m}", options.launcher),
            s => panic!("{}: mapper ended {s}", options.launcher),
        }
        control.stop();
    }
}

#[test]
fn stop_interrupts_endless_requesters() {
    for options in both() {
        let p = endless_param_server();
        let control = launch(&p, &gallery::registry(), &options).unwrap();
        thread::sleep(Duration::from_millis(300));
        let t = Instant::now();
        control.stop();
        assert!(t.elapsed() < Duration::from_secs(5), "{}", options.launcher);
        for (id, s) in control.statuses() {
            assert!(s.is_terminal(), "{}: node {id} is {s}", options.launcher);
        }
        control.stop();
    }
}

#[test]
fn stop_leaves_no_child_processes() {
    let p = gallery::param_server_program(Variant::Cached(0.1), 3, None).unwrap();
    let control = launch(&p, &gallery::registry(), &processes()).unwrap();
    assert_eq!(control.child_pids().len(), p.len());
    thread::sleep(Duration::from_millis(200));
    control.stop();
    assert!(control.child_pids().is_empty());
    let ours: Vec<u32> = child_processes();
    assert!(ours.is_empty(), "children left: {ours:?}");
}

#[test]
fn threads_colocation_is_one_process() {
    let mut p = ProgramGraph::new("colo").unwrap();
    let servers: Vec<_> = {
        let mut g = p.group("server").unwrap();
        (0..2)
            .map(|_| g.add_node(NodeDef::service("ParamServer", vec![])).unwrap().unwrap())
            .collect()
    };
    let children: Vec<_> = servers.iter().map(|h| p.node(h.target).unwrap().clone()).collect();
    p.group("colo")
        .unwrap()
        .add_node(colocation_node(&children, ColocationMode::Threads).unwrap())
        .unwrap();
    {
        let mut g = p.group("requester").unwrap();
        for h in &servers {
            g.add_node(NodeDef::leaf("Requester", vec![h.arg(), ArgValue::Null])).unwrap();
        }
    }
    let control = launch(&p, &gallery::registry(), &processes()).unwrap();
    // One process for the colocated pair, one per requester.
    assert_eq!(control.child_pids().len(), 3);
    let colo = NodeId(2);
    assert!(eventually(Duration::from_secs(5), || control.status(colo) == Some(NodeStatus::Running)));
    for h in &servers {
        let c = dereference(h, control.addresses()).unwrap();
        c.call("get_value", vec![]).unwrap();
    }
    control.stop();
}

static ATTEMPTS: AtomicUsize = AtomicUsize::new(0);

/// Fails until it has been started `n` times, where `n` is its argument.
struct Flaky(usize);

impl Service for Flaky {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        Err(format!("no such method: {method}").into())
    }

    fn run(&self, _: &NodeContext) -> Result<(), MethodError> {
        let attempt = ATTEMPTS.fetch_add(1, Ordering::SeqCst) + 1;
        if attempt < self.0 {
            Err(format!("attempt {attempt} failed").into())
        } else {
            Ok(())
        }
    }
}

/// Fails on every attempt.
struct Doomed;

impl Service for Doomed {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        Err(format!("no such method: {method}").into())
    }

    fn run(&self, _: &NodeContext) -> Result<(), MethodError> {
        Err("doomed".into())
    }
}

fn flaky_registry() -> ServiceRegistry {
    let mut r = ServiceRegistry::new();
    r.register(
        Factory::new("Flaky", |ctx| Ok(Flaky(ctx.i64_arg(0)? as usize))).with_run(),
    )
    .unwrap();
    r.register(Factory::new("Doomed", |_| Ok(Doomed)).with_run()).unwrap();
    r
}

fn single_leaf(factory: &str, args: Vec<ArgValue>) -> ProgramGraph {
    let mut p = ProgramGraph::new("one").unwrap();
    p.add_node(NodeDef::leaf(factory, args)).unwrap();
    p
}

fn run_single(control: &ControlPlane) -> NodeStatus {
    control.wait(None, Duration::from_secs(10)).unwrap().statuses[&NodeId(0)].clone()
}

#[test]
fn restart_policy_bounds() {
    let reg = flaky_registry();
    let p = single_leaf("Doomed", vec![]);

    let never = launch(&p, &reg, &LaunchOptions::threads()).unwrap();
    assert_eq!(run_single(&never), NodeStatus::Failed("doomed".into()));
    assert_eq!(never.restarts(NodeId(0)), 0);
    assert_eq!(
        never.apply_restart_policy(NodeId(0), "doomed").unwrap(),
        RestartDecision::LeftFailed { count: 0 }
    );

    let options = LaunchOptions::threads().with_restart(RestartPolicy::OnFailure { max_restarts: 3 });
    let bounded = launch(&p, &reg, &options).unwrap();
    assert_eq!(run_single(&bounded), NodeStatus::Failed("doomed".into()));
    assert_eq!(bounded.restarts(NodeId(0)), 3);
}

#[test]
fn restarted_node_can_finish() {
    let reg = flaky_registry();
    ATTEMPTS.store(0, Ordering::SeqCst);
    let p = single_leaf("Flaky", vec![3.into()]);
    let options = LaunchOptions::threads().with_restart(RestartPolicy::OnFailure { max_restarts: 3 });
    let control = launch(&p, &reg, &options).unwrap();
    assert_eq!(run_single(&control), NodeStatus::Finished);
    assert_eq!(control.restarts(NodeId(0)), 2);
    assert_eq!(ATTEMPTS.load(Ordering::SeqCst), 3);
}

#[test]
fn killed_thread_node_reports_killed() {
    let p = endless_param_server();
    let requester = gallery::group_members(&p, "requester")[0];
    let control = launch(&p, &gallery::registry(), &LaunchOptions::threads()).unwrap();
    thread::sleep(Duration::from_millis(100));
    control.kill_node(requester).unwrap();
    let r = control.wait(Some(&[requester]), Duration::from_secs(10)).unwrap();
    assert_eq!(r.statuses[&requester], NodeStatus::Failed("killed".into()));
    control.stop();
}

#[test]
fn restarted_server_keeps_its_endpoint() {
    for options in both() {
        let kind = options.launcher;
        let options = options.with_restart(RestartPolicy::OnFailure { max_restarts: 1 });
        let p = endless_param_server();
        let server = gallery::group_members(&p, "server")[0];
        let handle = p.handle(server).unwrap();
        let control = launch(&p, &gallery::registry(), &options).unwrap();
        let before = control.addresses().get(handle.placeholder).cloned().unwrap();
        dereference(&handle, control.addresses()).unwrap().call("get_value", vec![]).unwrap();

        control.kill_node(server).unwrap();
        assert!(
            eventually(Duration::from_secs(10), || control.restarts(server) == 1
                && control.status(server) == Some(NodeStatus::Running)),
            "{kind}: {:?}",
            control.status(server)
        );
        assert_eq!(control.addresses().get(handle.placeholder), Some(&before));
        let c = dereference(&handle, control.addresses()).unwrap();
        assert!(
            eventually(Duration::from_secs(5), || c.call("get_value", vec![]).is_ok()),
            "{kind}: restarted server unreachable"
        );
        if kind == LauncherKind::Processes {
            assert_eq!(control.child_pids().len(), p.len());
        }
        control.stop();
    }
}
