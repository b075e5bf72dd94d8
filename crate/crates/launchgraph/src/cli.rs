//! The `launchgraph` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime or validation failure, 2 on a
//! usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use launchgraph_core::{Manifest, NodeId, ProgramGraph};

use crate::gallery::{self, Variant};
use crate::launch::{run_node, LaunchOptions, RestartPolicy};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const PROGRAMS: [&str; 6] = [
    "producer-consumer",
    "param-server",
    "mapreduce",
    "es",
    "actor-learner",
    "cycle",
];

#[derive(Debug, Parser)]
#[command(name = "launchgraph", version, about = "Run program graphs of RPC services")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Launcher {
    Threads,
    Processes,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a gallery program and print its results.
    Run {
        program: String,
        #[arg(long, value_enum, default_value = "threads")]
        launcher: Launcher,
        /// Restart failed nodes up to this many times.
        #[arg(long, default_value_t = 0)]
        max_restarts: u32,
        /// Program parameters as key=value.
        params: Vec<String>,
    },
    /// Run the parameter-server throughput sweep and write CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "single,partitioned:4,cached:0.1")]
        variants: Vec<Variant>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        requesters: Vec<usize>,
        /// Seconds per cell, at least 1.
        #[arg(long, default_value = "5", value_parser = parse_duration)]
        duration: f64,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "threads")]
        launcher: Launcher,
    },
    /// Validate a manifest and print the report.
    Validate { manifest: PathBuf },
    /// Print the manifest of a gallery program without addresses.
    Manifest {
        program: String,
        params: Vec<String>,
    },
    /// Child entry point of the processes launcher.
    RunNode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        node: usize,
    },
}

fn parse_duration(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(d) if d >= 1.0 && d.is_finite() => Ok(d),
        Ok(_) => Err(format!("duration must be at least 1 second, got {s}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => CliError::Usage(m),
            e => CliError::Failure(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

/// `key=value` program parameters. Every key must be consumed.
struct Params(BTreeMap<String, String>);

impl Params {
    fn parse(raw: &[String]) -> Result<Self, CliError> {
        let mut m = BTreeMap::new();
        for p in raw {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected key=value, got {p:?}")))?;
            if m.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Usage(format!("parameter {k:?} given twice")));
            }
        }
        Ok(Params(m))
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        match self.0.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("bad value {v:?} for {key}"))),
        }
    }

    fn take_list(&mut self, key: &str) -> Vec<String> {
        self.0
            .remove(key)
            .map(|v| v.split(',').filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default()
    }

    fn finish(self) -> Result<(), CliError> {
        match self.0.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Usage(format!("unknown parameter {k:?}"))),
        }
    }
}

fn launch_options(launcher: Launcher, max_restarts: u32) -> Result<LaunchOptions, CliError> {
    let options = match launcher {
        Launcher::Threads => LaunchOptions::threads(),
        Launcher::Processes => LaunchOptions::processes(std::env::current_exe()?),
    };
    Ok(if max_restarts > 0 {
        options.with_restart(RestartPolicy::OnFailure { max_restarts })
    } else {
        options
    })
}

fn unknown_program(name: &str) -> CliError {
    CliError::Usage(format!(
        "unknown program {name:?}; expected one of {}",
        PROGRAMS.join(", ")
    ))
}

/// Parses `argv` (including the binary name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    // Not locked up front: run-node executables write to stdout from
    // their own threads.
    match execute(cli.command, &mut io::stdout()) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run `launchgraph --help` for usage");
            EXIT_USAGE
        }
        Err(CliError::Failure(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
    }
}

fn execute(command: Command, out: &mut impl Write) -> Result<i32, CliError> {
    match command {
        Command::Run {
            program,
            launcher,
            max_restarts,
            params,
        } => {
            let options = launch_options(launcher, max_restarts)?;
            cmd_run(&program, Params::parse(&params)?, &options, out)?;
            Ok(EXIT_OK)
        }
        Command::Bench {
            variants,
            requesters,
            duration,
            out: path,
            launcher,
        } => {
            if requesters.contains(&0) {
                return Err(CliError::Usage("requester counts must be positive".into()));
            }
            let options = launch_options(launcher, 0)?;
            // Open first so an unwritable path fails before the sweep.
            let mut file = match &path {
                Some(p) => Some(
                    File::create(p)
                        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", p.display())))?,
                ),
                None => None,
            };
            let rows = gallery::run_sweep(&variants, &requesters, duration, &options)?;
            let mut csv = format!("{}\n", gallery::CSV_HEADER);
            for r in &rows {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            match file.as_mut() {
                Some(f) => f.write_all(csv.as_bytes())?,
                None => out.write_all(csv.as_bytes())?,
            }
            Ok(EXIT_OK)
        }
        Command::Validate { manifest } => {
            let text = std::fs::read(&manifest)
                .map_err(|e| CliError::Failure(format!("cannot read {}: {e}", manifest.display())))?;
            let m = Manifest::parse(&text).map_err(|e| CliError::Failure(e.to_string()))?;
            let report = m.program.validate();
            writeln!(out, "{report}")?;
            Ok(if report.is_ok() { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Manifest { program, params } => {
            let mut params = Params::parse(&params)?;
            let graph = build_program(&program, &mut params)?;
            params.finish()?;
            let m = Manifest::new(graph, Default::default());
            let text = m
                .to_canonical_string()
                .map_err(|e| CliError::Failure(e.to_string()))?;
            writeln!(out, "{text}")?;
            Ok(EXIT_OK)
        }
        Command::RunNode { manifest, node } => {
            run_node(&manifest, NodeId(node), &gallery::registry())
                .map_err(|e| CliError::Failure(e.to_string()))?;
            Ok(EXIT_OK)
        }
    }
}

/// Graph of a gallery program, for `manifest`.
fn build_program(name: &str, p: &mut Params) -> Result<ProgramGraph, CliError> {
    Ok(match name {
        "producer-consumer" => gallery::producer_consumer_program(&[(0, 10), (10, 20)])?,
        "param-server" => {
            let variant = p.take("variant", Variant::Single)?;
            let requesters = p.take("requesters", 8usize)?;
            let duration = p.take("duration", 5.0f64)?;
            gallery::param_server_program(variant, requesters, Some(duration))?
        }
        "mapreduce" => {
            let inputs: Vec<PathBuf> = p.take_list("inputs").into_iter().map(PathBuf::from).collect();
            let reducers = p.take("reducers", 2usize)?;
            let outputs: Vec<PathBuf> = (0..reducers).map(|r| PathBuf::from(format!("part-{r}.txt"))).collect();
            gallery::mapreduce_program(&inputs, &outputs)?
        }
        "es" => gallery::es_program(
            p.take("dim", 4usize)?,
            p.take("evaluators", 8usize)?,
            p.take("generations", 200u64)?,
            p.take("seed", 7u64)?,
            p.take("delay_ms", 0u64)?,
        )?,
        "actor-learner" => gallery::actor_learner_program(
            p.take("actors", 4usize)?,
            p.take("batch", 16usize)?,
            p.take("updates", 200u64)?,
        )?,
        "cycle" => gallery::cycle_program()?,
        other => return Err(unknown_program(other)),
    })
}

fn cmd_run(
    name: &str,
    mut p: Params,
    options: &LaunchOptions,
    out: &mut impl Write,
) -> Result<(), CliError> {
    match name {
        "producer-consumer" => {
            p.finish()?;
            for v in gallery::run_producer_consumer(options)? {
                writeln!(out, "{v}")?;
            }
        }
        "param-server" => {
            let variant = p.take("variant", Variant::Single)?;
            let requesters = p.take("requesters", 8usize)?;
            let duration = p.take("duration", 5.0f64)?;
            p.finish()?;
            let r = gallery::run_param_server(variant, requesters, duration, options)?;
            writeln!(out, "{}", gallery::CSV_HEADER)?;
            writeln!(out, "{}", r.csv_row())?;
        }
        "mapreduce" => {
            let inputs = p.take_list("inputs");
            let reducers = p.take("reducers", 2usize)?;
            let dir = p.take("out", PathBuf::from("mapreduce-out"))?;
            p.finish()?;
            if inputs.is_empty() {
                return Err(CliError::Usage("mapreduce needs inputs=<file>[,<file>...]".into()));
            }
            let texts = inputs
                .iter()
                .map(|f| {
                    std::fs::read_to_string(f)
                        .map_err(|e| CliError::Failure(format!("cannot read {f}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            for (word, n) in gallery::run_mapreduce(&texts, reducers, &dir, options)? {
                writeln!(out, "{word} {n}")?;
            }
        }
        "es" => {
            let dim = p.take("dim", 4usize)?;
            let evaluators = p.take("evaluators", 8usize)?;
            let generations = p.take("generations", 200u64)?;
            let seed = p.take("seed", 7u64)?;
            let delay = p.take("delay_ms", 0u64)?;
            p.finish()?;
            let run = gallery::run_es(dim, evaluators, generations, seed, delay, options)?;
            let mean = &run.state.mean;
            let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mean: Vec<String> = mean.iter().map(|x| format!("{x:?}")).collect();
            writeln!(out, "mean {}", mean.join(" "))?;
            writeln!(out, "norm {norm:?}")?;
        }
        "actor-learner" => {
            let actors = p.take("actors", 4usize)?;
            let batch = p.take("batch", 16usize)?;
            let updates = p.take("updates", 200u64)?;
            p.finish()?;
            let r = gallery::run_actor_learner(actors, batch, updates, options)?;
            writeln!(out, "updates {}", r.updates)?;
            writeln!(out, "values {:?} {:?}", r.values[0], r.values[1])?;
            writeln!(out, "gap {:?}", r.gap())?;
        }
        "cycle" => {
            p.finish()?;
            let program = gallery::cycle_program()?;
            let ponger = NodeId(1);
            let control = gallery::run_drivers(
                &program,
                &[ponger],
                options,
                std::time::Duration::from_secs(30),
            )?;
            for line in control.output_of(ponger) {
                writeln!(out, "{line}")?;
            }
            control.stop();
        }
        other => return Err(unknown_program(other)),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_reject_leftovers() {
        let mut p = Params::parse(&["dim=3".into(), "bogus=1".into()]).unwrap();
        assert_eq!(p.take("dim", 4usize).unwrap(), 3);
        assert!(matches!(p.finish(), Err(CliError::Usage(_))));
    }

    #[test]
    fn params_reject_malformed() {
        assert!(Params::parse(&["dim".into()]).is_err());
        assert!(Params::parse(&["a=1".into(), "a=2".into()]).is_err());
        let mut p = Params::parse(&["dim=x".into()]).unwrap();
        assert!(p.take("dim", 4usize).is_err());
    }

    #[test]
    fn duration_minimum() {
        assert!(parse_duration("0.1").is_err());
        assert_eq!(parse_duration("1").unwrap(), 1.0);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["launchgraph", "run", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["launchgraph", "nope"]), EXIT_USAGE);
        assert_eq!(run(["launchgraph", "bench", "--duration", "0.1"]), EXIT_USAGE);
    }
}
