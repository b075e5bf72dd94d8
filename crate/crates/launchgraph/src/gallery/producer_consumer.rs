use std::sync::Mutex;
use std::time::Duration;

use launchgraph_core::topology::NodeDef;
use launchgraph_core::{ArgValue, ProgramGraph};

use super::{leaves, run_drivers};
use crate::launch::LaunchOptions;
use crate::service::{BuildContext, MethodError, MethodResult, NodeContext, Service};
use crate::wire::Client;
use crate::Error;

/// Hands out `start..end` one value per `produce` call.
pub struct Range {
    size: i64,
    next: Mutex<std::ops::Range<i64>>,
}

impl Range {
    pub fn new(start: i64, end: i64) -> Self {
        Range {
            size: (end - start).max(0),
            next: Mutex::new(start..end),
        }
    }

    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        Ok(Range::new(ctx.i64_arg(0)?, ctx.i64_arg(1)?))
    }
}

impl Service for Range {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        match method {
            "get_size" => Ok(self.size.into()),
            "produce" => self
                .next
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .next()
                .map(ArgValue::from)
                .ok_or_else(|| "range exhausted".into()),
            m => Err(format!("no such method: {m}").into()),
        }
    }
}

/// Drains each producer in order and emits every value.
pub struct Consumer {
    producers: Vec<Client>,
}

impl Consumer {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        Ok(Consumer {
            producers: ctx.clients(ctx.arg(0)?)?,
        })
    }
}

impl Service for Consumer {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        Err(format!("no such method: {method}").into())
    }

    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        for p in &self.producers {
            let size = p
                .call("get_size", vec![])?
                .as_i64()
                .ok_or("get_size returned a non-integer")?;
            for _ in 0..size {
                if ctx.should_stop() {
                    return Ok(());
                }
                let v = p.call("produce", vec![])?;
                ctx.emit(&v.as_i64().ok_or("produce returned a non-integer")?.to_string());
            }
        }
        Ok(())
    }
}

/// One `Range` service per entry of `ranges` in group "producer" and a
/// `Consumer` leaf over all of them in group "consumer".
pub fn producer_consumer_program(ranges: &[(i64, i64)]) -> Result<ProgramGraph, Error> {
    let mut p = ProgramGraph::new("producer-consumer")?;
    let mut handles = Vec::new();
    {
        let mut g = p.group("producer")?;
        for (s, e) in ranges {
            let h = g
                .add_node(NodeDef::service("Range", vec![(*s).into(), (*e).into()]))?
                .expect("services yield handles");
            handles.push(h.arg());
        }
    }
    p.group("consumer")?
        .add_node(NodeDef::leaf("Consumer", vec![ArgValue::Seq(handles)]))?;
    Ok(p)
}

/// Consumes `Range(0,10)` then `Range(10,20)`.
pub fn run_producer_consumer(options: &LaunchOptions) -> Result<Vec<i64>, Error> {
    run_ranges(&[(0, 10), (10, 20)], options)
}

pub(crate) fn run_ranges(ranges: &[(i64, i64)], options: &LaunchOptions) -> Result<Vec<i64>, Error> {
    let program = producer_consumer_program(ranges)?;
    let drivers = leaves(&program);
    let control = run_drivers(&program, &drivers, options, Duration::from_secs(30))?;
    let out = control
        .output_of(drivers[0])
        .iter()
        .map(|l| {
            l.parse()
                .map_err(|_| Error::InvalidState(format!("consumer printed {l:?}")))
        })
        .collect();
    control.stop();
    out
}
