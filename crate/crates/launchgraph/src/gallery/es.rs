use std::time::{Duration, Instant};

use launchgraph_core::topology::NodeDef;
use launchgraph_core::{ArgValue, ProgramGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{format_floats, group_members, parse_floats, run_drivers, tagged};
use crate::launch::LaunchOptions;
use crate::service::{BuildContext, MethodError, MethodResult, NodeContext, Service};
use crate::wire::Client;
use crate::Error;

pub const ES_SIGMA: f64 = 0.5;
pub const ES_LEARNING_RATE: f64 = 0.05;

/// Isotropic Gaussian search distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EsState {
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub generation: u64,
}

impl EsState {
    /// Mean at the all-ones vector.
    pub fn new(dim: usize) -> Self {
        EsState {
            mean: vec![1.0; dim],
            sigma: ES_SIGMA,
            generation: 0,
        }
    }

    /// `n` standard normal perturbations drawn as antithetic pairs
    /// `(e, -e)`; an odd `n` ends with one unpaired draw.
    pub fn perturbations(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        let dim = self.mean.len();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let e: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let paired = out.len() + 1 < n;
            let neg: Vec<f64> = e.iter().map(|v| -v).collect();
            out.push(e);
            if paired {
                out.push(neg);
            }
        }
        out
    }

    pub fn candidate(&self, eps: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(eps)
            .map(|(m, e)| m + self.sigma * e)
            .collect()
    }

    /// `mean += lr * (1 / (n sigma)) * sum_i f_i eps_i`.
    pub fn step(&mut self, eps: &[Vec<f64>], fitness: &[f64]) {
        let n = eps.len() as f64;
        for (j, m) in self.mean.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (e, f) in eps.iter().zip(fitness) {
                acc += f * e[j];
            }
            *m += ES_LEARNING_RATE * (acc / (n * self.sigma));
        }
        self.generation += 1;
    }
}

/// Fitness `-|x|^2`, after an optional simulated delay.
pub struct Evaluator {
    delay: Duration,
}

impl Evaluator {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        let ms = match ctx.args.first() {
            None | Some(ArgValue::Null) => 0,
            Some(_) => u64::try_from(ctx.i64_arg(0)?).map_err(|_| "delay must be nonnegative")?,
        };
        Ok(Evaluator {
            delay: Duration::from_millis(ms),
        })
    }

    pub fn fitness(x: &[f64]) -> f64 {
        let mut s = 0.0;
        for v in x {
            s += v * v;
        }
        -s
    }
}

impl Service for Evaluator {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
        if method != "evaluate" {
            return Err(format!("no such method: {method}").into());
        }
        let x = args
            .first()
            .and_then(ArgValue::as_seq)
            .ok_or("evaluate takes one vector")?
            .iter()
            .map(|v| v.as_f64().ok_or("vector entries must be numbers"))
            .collect::<Result<Vec<_>, _>>()?;
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        Ok(Self::fitness(&x).into())
    }
}

/// Owns the search distribution. Each generation sends one candidate to
/// every evaluator at once, awaits all fitnesses, then updates. Emits
/// `gen <k> <seconds>` per generation and finally `mean <x_1> ... <x_d>`.
pub struct Evolver {
    evaluators: Vec<Client>,
    dim: usize,
    generations: u64,
    seed: u64,
}

impl Evolver {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        let evaluators = ctx.clients(ctx.arg(0)?)?;
        if evaluators.is_empty() {
            return Err("need at least one evaluator".into());
        }
        let dim = usize::try_from(ctx.i64_arg(1)?)
            .ok()
            .filter(|d| *d >= 1)
            .ok_or("dim must be at least 1")?;
        Ok(Evolver {
            evaluators,
            dim,
            generations: u64::try_from(ctx.i64_arg(2)?).map_err(|_| "generations must be nonnegative")?,
            seed: ctx.i64_arg(3)? as u64,
        })
    }
}

impl Service for Evolver {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        Err(format!("no such method: {method}").into())
    }

    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut es = EsState::new(self.dim);
        for k in 0..self.generations {
            if ctx.should_stop() {
                return Err("stopped before the last generation".into());
            }
            let t = Instant::now();
            let eps = es.perturbations(&mut rng, self.evaluators.len());
            let futures: Vec<_> = self
                .evaluators
                .iter()
                .zip(&eps)
                .map(|(ev, e)| {
                    let x = es.candidate(e).into_iter().map(ArgValue::Float).collect();
                    ev.call_async("evaluate", vec![ArgValue::Seq(x)])
                })
                .collect();
            let mut fitness = Vec::with_capacity(futures.len());
            for f in futures {
                let v = f.wait().map_err(|e| format!("generation {k}: {e}"))?;
                fitness.push(v.as_f64().ok_or("fitness must be a number")?);
            }
            es.step(&eps, &fitness);
            ctx.emit(&format!("gen {k} {}", t.elapsed().as_secs_f64()));
        }
        ctx.emit(&format!("mean {}", format_floats(&es.mean)));
        Ok(())
    }
}

/// `num_evaluators` evaluators in group "evaluator" and one evolver leaf
/// in group "evolver".
pub fn es_program(
    dim: usize,
    num_evaluators: usize,
    generations: u64,
    seed: u64,
    evaluator_delay_ms: u64,
) -> Result<ProgramGraph, Error> {
    if dim == 0 || num_evaluators == 0 {
        return Err(Error::InvalidArgument("dim and evaluator count must be at least 1".into()));
    }
    let delay = i64::try_from(evaluator_delay_ms)
        .map_err(|_| Error::InvalidArgument("evaluator delay out of range".into()))?;
    let mut p = ProgramGraph::new("es")?;
    let mut evaluators = Vec::new();
    {
        let mut g = p.group("evaluator")?;
        for _ in 0..num_evaluators {
            let h = g
                .add_node(NodeDef::service("Evaluator", vec![delay.into()]))?
                .expect("services yield handles");
            evaluators.push(h.arg());
        }
    }
    p.group("evolver")?.add_node(NodeDef::leaf(
        "Evolver",
        vec![
            ArgValue::Seq(evaluators),
            dim.into(),
            ArgValue::Int(generations as i64),
            ArgValue::Int(seed as i64),
        ],
    ))?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsRun {
    pub state: EsState,
    /// Wall time of each generation as measured by the evolver.
    pub generation_secs: Vec<f64>,
}

pub fn run_es(
    dim: usize,
    num_evaluators: usize,
    generations: u64,
    seed: u64,
    evaluator_delay_ms: u64,
    options: &LaunchOptions,
) -> Result<EsRun, Error> {
    let program = es_program(dim, num_evaluators, generations, seed, evaluator_delay_ms)?;
    let evolver = group_members(&program, "evolver");
    let control = run_drivers(&program, &evolver, options, Duration::from_secs(600))?;
    let lines = control.output_of(evolver[0]);
    control.stop();

    let mut generation_secs = Vec::new();
    let mut mean = None;
    for line in &lines {
        if let Some(rest) = tagged(line, "gen") {
            let v = parse_floats(rest)?;
            generation_secs.push(*v.get(1).ok_or_else(|| Error::InvalidState(format!("bad line {line:?}")))?);
        } else if let Some(rest) = tagged(line, "mean") {
            mean = Some(parse_floats(rest)?);
        } else if line == "mean" {
            mean = Some(Vec::new());
        }
    }
    let mean = mean.ok_or_else(|| Error::InvalidState("evolver printed no mean".into()))?;
    Ok(EsRun {
        state: EsState {
            mean,
            sigma: ES_SIGMA,
            generation: generation_secs.len() as u64,
        },
        generation_secs,
    })
}
