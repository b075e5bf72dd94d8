use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use launchgraph_core::topology::NodeDef;
use launchgraph_core::{ArgValue, ProgramGraph};
use rand::Rng;

use super::{format_floats, group_members, parse_floats, run_drivers, tagged};
use crate::launch::LaunchOptions;
use crate::service::{BuildContext, MethodError, MethodResult, NodeContext, Service};
use crate::wire::{CallError, Client};
use crate::Error;

/// Success probabilities of the two bandit arms.
pub const ARM_PROBS: [f64; 2] = [0.2, 0.8];
pub const EPSILON: f64 = 0.1;
pub const TRAJECTORY_LEN: usize = 10;
/// After its last update the learner keeps serving until no call has
/// arrived for `QUIET`, at most `LINGER`, so actors observe `done`.
const QUIET: Duration = Duration::from_millis(100);
const LINGER: Duration = Duration::from_secs(2);

struct LearnerState {
    queue: Vec<Vec<(usize, f64)>>,
    values: [f64; 2],
    pulls: [u64; 2],
    updates: u64,
    done: bool,
    last_call: Instant,
}

/// Collects trajectories and, for every `batch` of them, updates a
/// per-arm running mean of rewards. Stops after `total_updates`. Emits
/// `update <k>` per update and finally `values <v0> <v1>`.
pub struct Learner {
    batch: usize,
    total_updates: u64,
    state: Mutex<LearnerState>,
    arrived: Condvar,
}

impl Learner {
    pub fn new(batch: usize, total_updates: u64) -> Self {
        Learner {
            batch: batch.max(1),
            total_updates,
            state: Mutex::new(LearnerState {
                queue: Vec::new(),
                values: [0.0; 2],
                pulls: [0; 2],
                updates: 0,
                done: false,
                last_call: Instant::now(),
            }),
            arrived: Condvar::new(),
        }
    }

    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        let batch = usize::try_from(ctx.i64_arg(0)?)
            .ok()
            .filter(|b| *b >= 1)
            .ok_or("batch size must be at least 1")?;
        let total = u64::try_from(ctx.i64_arg(1)?).map_err(|_| "update count must be nonnegative")?;
        Ok(Learner::new(batch, total))
    }

    fn lock(&self) -> MutexGuard<'_, LearnerState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn parse_trajectory(v: &ArgValue) -> Result<Vec<(usize, f64)>, MethodError> {
    let steps = v.as_seq().ok_or("trajectory must be a sequence")?;
    if steps.is_empty() {
        return Err("empty trajectory".into());
    }
    steps
        .iter()
        .map(|s| {
            let pair = s.as_seq().filter(|p| p.len() == 2).ok_or("step must be [action, reward]")?;
            let action = pair[0]
                .as_i64()
                .and_then(|a| usize::try_from(a).ok())
                .filter(|a| *a < 2)
                .ok_or("action must be 0 or 1")?;
            let reward = pair[1].as_f64().ok_or("reward must be a number")?;
            Ok((action, reward))
        })
        .collect()
}

impl Service for Learner {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
        self.lock().last_call = Instant::now();
        match method {
            "put" => {
                let t = parse_trajectory(args.first().ok_or("put takes a trajectory")?)?;
                self.lock().queue.push(t);
                self.arrived.notify_all();
                Ok(ArgValue::Null)
            }
            "get_params" => {
                let st = self.lock();
                let mut m = BTreeMap::new();
                m.insert(
                    "values".to_string(),
                    ArgValue::Seq(st.values.iter().map(|v| ArgValue::Float(*v)).collect()),
                );
                m.insert("done".to_string(), ArgValue::Bool(st.done));
                Ok(ArgValue::Map(m))
            }
            m => Err(format!("no such method: {m}").into()),
        }
    }

    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        let mut st = self.lock();
        while st.updates < self.total_updates {
            if ctx.should_stop() {
                return Err(format!("stopped after {} updates", st.updates).into());
            }
            if st.queue.len() < self.batch {
                st = self
                    .arrived
                    .wait_timeout(st, Duration::from_millis(50))
                    .unwrap_or_else(|e| e.into_inner())
                    .0;
                continue;
            }
            let batch: Vec<_> = st.queue.drain(..self.batch).collect();
            for (action, reward) in batch.into_iter().flatten() {
                st.pulls[action] += 1;
                let n = st.pulls[action] as f64;
                st.values[action] += (reward - st.values[action]) / n;
            }
            st.updates += 1;
            ctx.emit(&format!("update {}", st.updates));
        }
        st.done = true;
        ctx.emit(&format!("values {}", format_floats(&st.values)));
        let finished = Instant::now();
        while st.last_call.elapsed() < QUIET && finished.elapsed() < LINGER && !ctx.should_stop() {
            drop(st);
            std::thread::sleep(QUIET / 4);
            st = self.lock();
        }
        Ok(())
    }
}

/// Plays an epsilon-greedy policy on the two-armed Bernoulli bandit,
/// refetching parameters before every fixed-length trajectory. Finishes
/// when the learner reports done or goes away.
pub struct Actor {
    learner: Client,
}

impl Actor {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        Ok(Actor {
            learner: ctx.client(ctx.arg(0)?)?,
        })
    }

    /// Greedy with probability `1 - EPSILON`, ties broken at random.
    pub fn choose(values: &[f64; 2], rng: &mut impl Rng) -> usize {
        if rng.random_bool(EPSILON) || values[0] == values[1] {
            rng.random_range(0..2)
        } else if values[1] > values[0] {
            1
        } else {
            0
        }
    }
}

impl Service for Actor {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        Err(format!("no such method: {method}").into())
    }

    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        let mut rng = rand::rng();
        while !ctx.should_stop() {
            let params = match self.learner.call("get_params", vec![]) {
                Ok(p) => p,
                Err(CallError::Transport(_)) => return Ok(()),
                Err(e) => return Err(e.into()),
            };
            let ArgValue::Map(m) = params else {
                return Err("get_params returned a non-map".into());
            };
            if m.get("done").and_then(ArgValue::as_bool) == Some(true) {
                return Ok(());
            }
            let v = m
                .get("values")
                .and_then(ArgValue::as_seq)
                .filter(|v| v.len() == 2)
                .ok_or("params must hold two values")?;
            let values = [arg_f(&v[0])?, arg_f(&v[1])?];
            let trajectory: Vec<ArgValue> = (0..TRAJECTORY_LEN)
                .map(|_| {
                    let a = Actor::choose(&values, &mut rng);
                    let r = if rng.random_bool(ARM_PROBS[a]) { 1.0 } else { 0.0 };
                    ArgValue::Seq(vec![a.into(), ArgValue::Float(r)])
                })
                .collect();
            match self.learner.call("put", vec![ArgValue::Seq(trajectory)]) {
                Ok(_) => {}
                Err(CallError::Transport(_)) => return Ok(()),
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}

fn arg_f(v: &ArgValue) -> Result<f64, MethodError> {
    v.as_f64().ok_or_else(|| "value must be a number".into())
}

/// One learner in group "learner", `num_actors` actors in group "actor".
pub fn actor_learner_program(
    num_actors: usize,
    batch_size: usize,
    total_updates: u64,
) -> Result<ProgramGraph, Error> {
    if num_actors == 0 || batch_size == 0 {
        return Err(Error::InvalidArgument("need at least one actor and a positive batch".into()));
    }
    let mut p = ProgramGraph::new("actor-learner")?;
    let learner = p
        .group("learner")?
        .add_node(NodeDef::service(
            "Learner",
            vec![batch_size.into(), ArgValue::Int(total_updates as i64)],
        ))?
        .expect("services yield handles");
    let mut g = p.group("actor")?;
    for _ in 0..num_actors {
        g.add_node(NodeDef::leaf("Actor", vec![learner.arg()]))?;
    }
    drop(g);
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerResult {
    pub values: [f64; 2],
    pub updates: u64,
}

impl LearnerResult {
    /// Parses the learner's output lines.
    pub fn from_output(lines: &[String]) -> Result<Self, Error> {
        let mut updates = 0;
        let mut values = None;
        for line in lines {
            if let Some(k) = tagged(line, "update") {
                updates = k
                    .parse()
                    .map_err(|_| Error::InvalidState(format!("learner printed {line:?}")))?;
            } else if let Some(rest) = tagged(line, "values") {
                let v = parse_floats(rest)?;
                if v.len() != 2 {
                    return Err(Error::InvalidState(format!("learner printed {line:?}")));
                }
                values = Some([v[0], v[1]]);
            }
        }
        let values = values.ok_or_else(|| Error::InvalidState("learner printed no values".into()))?;
        Ok(LearnerResult { values, updates })
    }

    pub fn gap(&self) -> f64 {
        self.values[1] - self.values[0]
    }
}

pub fn run_actor_learner(
    num_actors: usize,
    batch_size: usize,
    total_updates: u64,
    options: &LaunchOptions,
) -> Result<LearnerResult, Error> {
    let program = actor_learner_program(num_actors, batch_size, total_updates)?;
    let mut drivers = group_members(&program, "learner");
    drivers.extend(group_members(&program, "actor"));
    let control = run_drivers(&program, &drivers, options, Duration::from_secs(180))?;
    let result = LearnerResult::from_output(&control.output_of(drivers[0]));
    control.stop();
    result
}
