//! Example programs: producer-consumer, a parameter server with
//! partitioning and caching, MapReduce word count, evolution strategies,
//! an actor-learner loop and a two-node cycle.
//!
//! Each `*_program` function only builds a graph; each `run_*` function
//! launches it, waits for its driver nodes and reads their output.

mod actor_learner;
mod cycle;
mod es;
mod mapreduce;
mod param_server;
mod producer_consumer;

use std::time::Duration;

use launchgraph_core::{NodeId, NodeKind, ProgramGraph};

pub use actor_learner::{
    actor_learner_program, run_actor_learner, Actor, Learner, LearnerResult, ARM_PROBS, EPSILON,
    TRAJECTORY_LEN,
};
pub use cycle::{cycle_program, Pinger, Ponger};
pub use es::{
    es_program, run_es, EsRun, EsState, Evaluator, Evolver, ES_LEARNING_RATE, ES_SIGMA,
};
pub use mapreduce::{mapreduce_program, run_mapreduce, CountReducer, WordMapper};
pub use param_server::{
    param_server_program, run_param_server, run_sweep, ParamServer, QpsReport, Requester,
    TimestampServer, Variant, CSV_HEADER,
};
pub use producer_consumer::{producer_consumer_program, run_producer_consumer, Consumer, Range};

use crate::launch::{launch, ControlPlane, LaunchOptions};
use crate::services::{Dispatch, Factory, ServiceRegistry};
use crate::Error;

/// Every gallery factory. The `launchgraph` binary serves child processes
/// from this registry.
pub fn registry() -> ServiceRegistry {
    let mut r = ServiceRegistry::new();
    let factories = [
        Factory::new("Range", Range::build).methods(["get_size", "produce"]),
        Factory::new("Consumer", Consumer::build).with_run(),
        Factory::new("ParamServer", ParamServer::build).methods(["get_value"]),
        Factory::new("TimestampServer", TimestampServer::build).methods(["now"]),
        Factory::new("Requester", Requester::build).with_run(),
        Factory::new("CountReducer", CountReducer::build)
            .methods(["reduce", "mapper_begin", "mapper_done"])
            .with_run(),
        Factory::new("WordMapper", WordMapper::build).with_run(),
        Factory::new("Evaluator", Evaluator::build).methods(["evaluate"]),
        Factory::new("Evolver", Evolver::build).with_run(),
        Factory::new("Learner", Learner::build)
            .methods(["put", "get_params"])
            .with_run()
            .dispatch(Dispatch::Concurrent),
        Factory::new("Actor", Actor::build).with_run(),
        Factory::new("Pinger", Pinger::build).methods(["ping"]),
        Factory::new("Ponger", Ponger::build).methods(["ack"]).with_run(),
    ];
    for f in factories {
        r.register(f).expect("gallery factory names are unique");
    }
    r
}

/// Node ids of `program` in `group`.
pub fn group_members(program: &ProgramGraph, group: &str) -> Vec<NodeId> {
    program
        .groups()
        .get(group)
        .map(|s| s.iter().copied().collect())
        .unwrap_or_default()
}

/// Launches `program`, waits for `drivers` and fails if any of them
/// failed. The returned control plane still runs the serving nodes.
pub fn run_drivers(
    program: &ProgramGraph,
    drivers: &[NodeId],
    options: &LaunchOptions,
    timeout: Duration,
) -> Result<ControlPlane, Error> {
    let control = launch(program, &registry(), options)?;
    let result = control.wait(Some(drivers), timeout)?;
    let failures: Vec<String> = result
        .failures()
        .map(|(id, m)| format!("node {id}: {m}"))
        .collect();
    if !failures.is_empty() {
        return Err(Error::NodeFailed(failures.join("; ")));
    }
    Ok(control)
}

/// Leaf nodes, the usual drivers of a program.
fn leaves(program: &ProgramGraph) -> Vec<NodeId> {
    program
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Leaf)
        .map(|n| n.node_id)
        .collect()
}

/// The rest of a line after `tag` and a space.
fn tagged<'a>(line: &'a str, tag: &str) -> Option<&'a str> {
    line.strip_prefix(tag)?.strip_prefix(' ')
}

fn parse_floats(s: &str) -> Result<Vec<f64>, Error> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidState(format!("bad number {t:?} in node output")))
        })
        .collect()
}

/// Shortest round-trip rendering, space separated.
fn format_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}
