use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use launchgraph_core::topology::NodeDef;
use launchgraph_core::{ArgValue, ProgramGraph};

use super::{group_members, run_drivers, tagged};
use crate::launch::LaunchOptions;
use crate::service::{BuildContext, MethodError, MethodResult, NodeContext, Service};
use crate::wire::Client;
use crate::Error;

/// Serves a fresh uniform value in `[0, 1)` after a 1 ms delay.
pub struct ParamServer;

impl ParamServer {
    pub const DELAY: Duration = Duration::from_millis(1);

    pub fn build(_: &BuildContext<'_>) -> Result<Self, MethodError> {
        Ok(ParamServer)
    }
}

impl Service for ParamServer {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        match method {
            "get_value" => {
                std::thread::sleep(Self::DELAY);
                Ok(rand::random::<f64>().into())
            }
            m => Err(format!("no such method: {m}").into()),
        }
    }
}

/// `now` returns the wall clock in seconds since the Unix epoch.
pub struct TimestampServer;

impl TimestampServer {
    pub fn build(_: &BuildContext<'_>) -> Result<Self, MethodError> {
        Ok(TimestampServer)
    }

    pub fn now() -> f64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64())
    }
}

impl Service for TimestampServer {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        match method {
            "now" => Ok(Self::now().into()),
            m => Err(format!("no such method: {m}").into()),
        }
    }
}

/// Calls `get_value` in a loop for `duration` seconds (forever when null),
/// then emits `count <n>`.
pub struct Requester {
    server: Client,
    duration: Option<Duration>,
}

impl Requester {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        let duration = match ctx.arg(1)? {
            ArgValue::Null => None,
            v => Some(
                v.as_f64()
                    .and_then(|s| Duration::try_from_secs_f64(s).ok())
                    .ok_or("duration must be nonnegative seconds or null")?,
            ),
        };
        Ok(Requester {
            server: ctx.client(ctx.arg(0)?)?,
            duration,
        })
    }
}

impl Service for Requester {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        Err(format!("no such method: {method}").into())
    }

    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        let end = self.duration.map(|d| Instant::now() + d);
        let mut count: u64 = 0;
        while !ctx.should_stop() && end.is_none_or(|e| Instant::now() < e) {
            self.server.call("get_value", vec![])?;
            count += 1;
        }
        ctx.emit(&format!("count {count}"));
        Ok(())
    }
}

/// Topology of one benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Single,
    /// Requester `i` talks to server `i mod k`.
    Partitioned(usize),
    /// All requesters share one cacher with this ttl in seconds.
    Cached(f64),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Single => f.write_str("single"),
            Variant::Partitioned(k) => write!(f, "partitioned:{k}"),
            Variant::Cached(ttl) => write!(f, "cached:{ttl}"),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    /// `single`, `partitioned:<k>` or `cached:<ttl seconds>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        match (name, param) {
            ("single", None) => Ok(Variant::Single),
            ("partitioned", Some(k)) => match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Variant::Partitioned(k)),
                _ => Err(format!("partition count must be a positive integer, got {k:?}")),
            },
            ("cached", Some(t)) => match t.parse::<f64>() {
                Ok(t) if t >= 0.0 => Ok(Variant::Cached(t)),
                _ => Err(format!("ttl must be a nonnegative number, got {t:?}")),
            },
            _ => Err(format!(
                "unknown variant {s:?}; expected single, partitioned:<k> or cached:<ttl>"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpsReport {
    pub variant: Variant,
    pub num_requesters: usize,
    pub duration_seconds: f64,
    pub total_requests: u64,
    pub qps: f64,
    /// `qps` over the single-server, one-requester anchor.
    pub qps_relative: f64,
}

pub const CSV_HEADER: &str = "variant,num_requesters,duration,total_requests,qps,qps_relative";

impl QpsReport {
    pub fn normalize(&mut self, anchor_qps: f64) {
        self.qps_relative = if anchor_qps > 0.0 { self.qps / anchor_qps } else { 0.0 };
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.4}",
            self.variant,
            self.num_requesters,
            self.duration_seconds,
            self.total_requests,
            self.qps,
            self.qps_relative
        )
    }
}

/// Servers in group "server", an optional cacher in group "cacher" and
/// `num_requesters` requesters in group "requester". `duration` of `None`
/// makes requesters loop until stopped.
pub fn param_server_program(
    variant: Variant,
    num_requesters: usize,
    duration: Option<f64>,
) -> Result<ProgramGraph, Error> {
    if num_requesters == 0 {
        return Err(Error::InvalidArgument("need at least one requester".into()));
    }
    let mut p = ProgramGraph::new("ps")?;
    let num_servers = match variant {
        Variant::Partitioned(k) => k,
        _ => 1,
    };
    let mut servers = Vec::new();
    {
        let mut g = p.group("server")?;
        for _ in 0..num_servers {
            servers.push(
                g.add_node(NodeDef::service("ParamServer", vec![]))?
                    .expect("services yield handles"),
            );
        }
    }
    if let Variant::Cached(ttl) = variant {
        let cacher = p
            .group("cacher")?
            .add_node(NodeDef::cacher(&servers[0], ttl)?)?
            .expect("cachers yield handles");
        servers = vec![cacher];
    }
    let duration = duration.map_or(ArgValue::Null, ArgValue::Float);
    let mut g = p.group("requester")?;
    for i in 0..num_requesters {
        let target = &servers[i % servers.len()];
        g.add_node(NodeDef::leaf("Requester", vec![target.arg(), duration.clone()]))?;
    }
    drop(g);
    Ok(p)
}

/// One benchmark cell. `qps_relative` is 1 until [`QpsReport::normalize`]
/// is applied.
pub fn run_param_server(
    variant: Variant,
    num_requesters: usize,
    duration_seconds: f64,
    options: &LaunchOptions,
) -> Result<QpsReport, Error> {
    if duration_seconds.is_nan() || duration_seconds <= 0.0 {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    let program = param_server_program(variant, num_requesters, Some(duration_seconds))?;
    let requesters = group_members(&program, "requester");
    let timeout = Duration::from_secs_f64(duration_seconds) + Duration::from_secs(60);
    let control = run_drivers(&program, &requesters, options, timeout)?;
    let mut total = 0u64;
    for r in &requesters {
        for line in control.output_of(*r) {
            if let Some(n) = tagged(&line, "count") {
                total += n
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidState(format!("requester printed {line:?}")))?;
            }
        }
    }
    control.stop();
    let qps = total as f64 / duration_seconds;
    Ok(QpsReport {
        variant,
        num_requesters,
        duration_seconds,
        total_requests: total,
        qps,
        qps_relative: 1.0,
    })
}

/// Every variant × requester count, normalized to the single-server,
/// one-requester cell (run as an extra anchor if the sweep lacks it).
pub fn run_sweep(
    variants: &[Variant],
    requesters: &[usize],
    duration_seconds: f64,
    options: &LaunchOptions,
) -> Result<Vec<QpsReport>, Error> {
    let mut rows = Vec::new();
    for v in variants {
        for n in requesters {
            let row = run_param_server(*v, *n, duration_seconds, options)?;
            log::info!("{}", row.csv_row());
            rows.push(row);
        }
    }
    let anchor = match rows
        .iter()
        .find(|r| r.variant == Variant::Single && r.num_requesters == 1)
    {
        Some(r) => r.qps,
        None => run_param_server(Variant::Single, 1, duration_seconds, options)?.qps,
    };
    for r in &mut rows {
        r.normalize(anchor);
    }
    Ok(rows)
}
