use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use launchgraph_core::partition::{
    merge_into, parse_partition, reducer_for, render_partition, tokens, WordCount,
};
use launchgraph_core::topology::NodeDef;
use launchgraph_core::{ArgValue, ProgramGraph};

use super::{group_members, run_drivers};
use crate::launch::LaunchOptions;
use crate::service::{arg_i64, arg_str, BuildContext, MethodError, MethodResult, NodeContext, Service};
use crate::wire::Client;
use crate::Error;

struct ReducerState {
    counter: WordCount,
    active: i64,
    begun: u64,
    written: bool,
}

/// Counts words and writes its partition once every expected mapper has
/// begun and all begun mappers are done. Waiting for the expected count
/// closes the window in which an early finisher would trigger the write
/// before a later mapper has begun.
pub struct CountReducer {
    out_path: PathBuf,
    expected: u64,
    state: Mutex<ReducerState>,
    written: Condvar,
}

impl CountReducer {
    pub fn new(out_path: impl Into<PathBuf>, expected_mappers: u64) -> Self {
        CountReducer {
            out_path: out_path.into(),
            expected: expected_mappers,
            state: Mutex::new(ReducerState {
                counter: WordCount::new(),
                active: 0,
                begun: 0,
                written: false,
            }),
            written: Condvar::new(),
        }
    }

    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        let expected = u64::try_from(ctx.i64_arg(1)?).map_err(|_| "expected mappers must be nonnegative")?;
        Ok(CountReducer::new(ctx.str_arg(0)?, expected))
    }

    fn write_if_complete(&self, st: &mut ReducerState) -> Result<(), MethodError> {
        if st.written || st.active != 0 || st.begun < self.expected {
            return Ok(());
        }
        fs::write(&self.out_path, render_partition(&st.counter))?;
        st.written = true;
        self.written.notify_all();
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ReducerState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Service for CountReducer {
    fn call(&self, method: &str, args: &[ArgValue]) -> MethodResult {
        let mut st = self.lock();
        if st.written {
            return Err(format!("{method} after the partition was written").into());
        }
        match method {
            "reduce" => {
                let word = arg_str(args, 0)?;
                let n = u64::try_from(arg_i64(args, 1)?).map_err(|_| "count must be nonnegative")?;
                *st.counter.entry(word.to_string()).or_insert(0) += n;
            }
            "mapper_begin" => {
                st.active += 1;
                st.begun += 1;
            }
            "mapper_done" => {
                if st.active == 0 {
                    return Err("mapper_done without mapper_begin".into());
                }
                st.active -= 1;
                self.write_if_complete(&mut st)?;
            }
            m => return Err(format!("no such method: {m}").into()),
        }
        Ok(ArgValue::Null)
    }

    /// Finishes once the partition is on disk.
    fn run(&self, ctx: &NodeContext) -> Result<(), MethodError> {
        let mut st = self.lock();
        self.write_if_complete(&mut st)?;
        while !st.written {
            if ctx.should_stop() {
                return Err("stopped before all mappers were done".into());
            }
            st = self
                .written
                .wait_timeout(st, Duration::from_millis(50))
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        Ok(())
    }
}

/// Announces itself to every reducer, routes each whitespace token of its
/// input to `reducers[fnv1a(word) mod n]`, then reports done.
pub struct WordMapper {
    path: PathBuf,
    reducers: Vec<Client>,
}

impl WordMapper {
    pub fn build(ctx: &BuildContext<'_>) -> Result<Self, MethodError> {
        let reducers = ctx.clients(ctx.arg(1)?)?;
        if reducers.is_empty() {
            return Err("need at least one reducer".into());
        }
        Ok(WordMapper {
            path: ctx.str_arg(0)?.into(),
            reducers,
        })
    }
}

impl Service for WordMapper {
    fn call(&self, method: &str, _: &[ArgValue]) -> MethodResult {
        Err(format!("no such method: {method}").into())
    }

    fn run(&self, _: &NodeContext) -> Result<(), MethodError> {
        for r in &self.reducers {
            r.call("mapper_begin", vec![])?;
        }
        let text = fs::read_to_string(&self.path)
            .map_err(|e| format!("cannot read {}: {e}", self.path.display()))?;
        for word in tokens(&text) {
            let r = &self.reducers[reducer_for(word, self.reducers.len())];
            r.call("reduce", vec![word.into(), 1.into()])?;
        }
        for r in &self.reducers {
            r.call("mapper_done", vec![])?;
        }
        Ok(())
    }
}

/// Reducers in group "reducer" writing to `outputs`, then one mapper per
/// input path in group "mapper".
pub fn mapreduce_program(inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<ProgramGraph, Error> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument("need at least one reducer".into()));
    }
    let mut p = ProgramGraph::new("mapreduce")?;
    let mut reducers = Vec::new();
    {
        let mut g = p.group("reducer")?;
        for out in outputs {
            let h = g
                .add_node(NodeDef::service(
                    "CountReducer",
                    vec![path_arg(out)?, inputs.len().into()],
                ))?
                .expect("services yield handles");
            reducers.push(h.arg());
        }
    }
    let mut g = p.group("mapper")?;
    for input in inputs {
        g.add_node(NodeDef::leaf(
            "WordMapper",
            vec![path_arg(input)?, ArgValue::Seq(reducers.clone())],
        ))?;
    }
    drop(g);
    Ok(p)
}

fn path_arg(p: &Path) -> Result<ArgValue, Error> {
    p.to_str()
        .map(ArgValue::from)
        .ok_or_else(|| Error::InvalidArgument(format!("path {} is not UTF-8", p.display())))
}

/// Writes `input_texts` to `<out_dir>/input-<i>.txt`, runs the word count
/// with partitions `<out_dir>/part-<r>.txt`, and merges the partitions
/// read back from disk.
pub fn run_mapreduce(
    input_texts: &[String],
    num_reducers: usize,
    out_dir: &Path,
    options: &LaunchOptions,
) -> Result<WordCount, Error> {
    if num_reducers == 0 {
        return Err(Error::InvalidArgument("need at least one reducer".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut inputs = Vec::new();
    for (i, text) in input_texts.iter().enumerate() {
        let path = out_dir.join(format!("input-{i}.txt"));
        fs::write(&path, text)?;
        inputs.push(path);
    }
    let outputs: Vec<PathBuf> = (0..num_reducers)
        .map(|r| out_dir.join(format!("part-{r}.txt")))
        .collect();
    for o in &outputs {
        if o.exists() {
            fs::remove_file(o)?;
        }
    }
    let program = mapreduce_program(&inputs, &outputs)?;
    let mut drivers = group_members(&program, "mapper");
    drivers.extend(group_members(&program, "reducer"));
    let control = run_drivers(&program, &drivers, options, Duration::from_secs(60))?;
    control.stop();

    let mut merged = WordCount::new();
    for o in &outputs {
        let part = parse_partition(&fs::read_to_string(o)?).map_err(Error::InvalidState)?;
        merge_into(&mut merged, &part);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use launchgraph_core::partition::count_words;

    #[test]
    fn reducer_waits_for_every_expected_mapper() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("p");
        let r = CountReducer::new(&out, 2);
        r.call("mapper_begin", &[]).unwrap();
        r.call("reduce", &["a".into(), 1.into()]).unwrap();
        r.call("mapper_done", &[]).unwrap();
        assert!(!out.exists(), "wrote before the second mapper began");
        r.call("mapper_begin", &[]).unwrap();
        r.call("reduce", &["a".into(), 1.into()]).unwrap();
        r.call("mapper_done", &[]).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "a 2\n");
        assert!(r.call("reduce", &["a".into(), 1.into()]).is_err());
    }

    #[test]
    fn small_corpus_two_reducers() {
        let dir = tempfile::tempdir().unwrap();
        let got = run_mapreduce(&["a b a".into()], 2, dir.path(), &LaunchOptions::threads()).unwrap();
        assert_eq!(got, count_words("a b a"));
    }

    #[test]
    fn no_inputs_writes_empty_partitions() {
        let dir = tempfile::tempdir().unwrap();
        let got = run_mapreduce(&[], 1, dir.path(), &LaunchOptions::threads()).unwrap();
        assert!(got.is_empty());
        assert_eq!(fs::read_to_string(dir.path().join("part-0.txt")).unwrap(), "");
    }
}
