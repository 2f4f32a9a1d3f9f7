//! Execution of candidate programs.
//!
//! Fixture-backed candidates are table lookups. Runner-backed candidates
//! are served by a worker process speaking the newline-delimited frame
//! protocol of [`crate::wire`] over its standard streams; one worker per
//! candidate, reused across inputs. Failures map to special values:
//! rejected input is `Undefined`, anything else (crash, timeout, protocol
//! violation, oversized output) is `Demonic`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::problem::{Backend, CandidateProgram, RunnerEndpoint, TestInputSet};
use crate::value::{encode_args, CanonicalKey, Special, Value};
use crate::wire::{parse_response, Request};

/// Environment variable overriding the worker launch command.
pub const WORKER_CMD_ENV: &str = "TRI_WORKER_CMD";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("fixture for candidate {candidate} has no entry for input {key}")]
    MissingFixture { candidate: String, key: CanonicalKey },
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
    #[error("arguments to {0} contain a special value")]
    SpecialArgument(String),
    #[error("arguments to {0} have no canonical encoding")]
    UnencodableArgument(String),
    #[error("invalid execution config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionConfig {
    pub timeout: Duration,
    pub max_output_bytes: usize,
    pub worker_pool_size: usize,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            timeout: Duration::from_secs(10),
            max_output_bytes: 1 << 20,
            worker_pool_size: thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

impl ExecutionConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.timeout.is_zero() {
            return Err(ExecError::Config("timeout must be positive".into()));
        }
        if self.max_output_bytes == 0 {
            return Err(ExecError::Config("maxOutputBytes must be positive".into()));
        }
        if self.worker_pool_size == 0 {
            return Err(ExecError::Config("workerPoolSize must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionOutcome {
    pub value: Value,
    pub elapsed: Duration,
    pub raw: Option<String>,
}

impl ExecutionOutcome {
    fn instant(value: Value) -> Self {
        ExecutionOutcome { value, elapsed: Duration::ZERO, raw: None }
    }

    fn demonic(elapsed: Duration, raw: impl Into<String>) -> Self {
        ExecutionOutcome { value: Value::Special(Special::Demonic), elapsed, raw: Some(raw.into()) }
    }
}

enum Line {
    Frame(Vec<u8>),
    Oversized,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<Line>,
    next_id: u64,
}

impl Worker {
    fn spawn(endpoint: &RunnerEndpoint, max_bytes: usize) -> std::io::Result<Worker> {
        let mut argv: Vec<String> = match std::env::var(WORKER_CMD_ENV) {
            Ok(cmd) if !cmd.trim().is_empty() => cmd.split_whitespace().map(String::from).collect(),
            _ => endpoint.command.clone(),
        };
        if argv.is_empty() {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty worker command"));
        }
        argv.push(endpoint.source.display().to_string());
        argv.push(endpoint.entrypoint.clone());
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut buf = Vec::new();
                // One byte past the cap tells an oversized frame apart.
                let n = match (&mut reader).take(max_bytes as u64 + 1).read_until(b'\n', &mut buf) {
                    Ok(n) => n,
                    Err(_) => return,
                };
                if n == 0 {
                    return;
                }
                let complete = buf.last() == Some(&b'\n');
                let msg = if !complete && buf.len() > max_bytes {
                    Line::Oversized
                } else if !complete {
                    // EOF in the middle of a frame.
                    return;
                } else {
                    buf.pop();
                    Line::Frame(buf)
                };
                let stop = matches!(msg, Line::Oversized);
                if tx.send(msg).is_err() || stop {
                    return;
                }
            }
        });
        Ok(Worker { child, stdin, lines: rx, next_id: 0 })
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.kill();
    }
}

enum Slot {
    Idle,
    Live(Worker),
    /// The worker exited on its own; calls are Demonic until reset.
    Dead,
}

enum CallEnd {
    Done(ExecutionOutcome),
    /// Outcome plus a verdict on whether the worker is still usable.
    Discard(ExecutionOutcome, bool),
}

fn call_worker(worker: &mut Worker, args: &[Value], timeout: Duration) -> CallEnd {
    let start = Instant::now();
    worker.next_id += 1;
    let id = worker.next_id.to_string();
    let line = match Request::call(id.clone(), args) {
        Ok(r) => r.to_line(),
        Err(e) => return CallEnd::Done(ExecutionOutcome::demonic(start.elapsed(), e.to_string())),
    };
    if worker.stdin.write_all(line.as_bytes()).and_then(|_| worker.stdin.flush()).is_err() {
        return CallEnd::Discard(ExecutionOutcome::demonic(start.elapsed(), "worker closed its input"), false);
    }
    match worker.lines.recv_timeout(timeout) {
        Ok(Line::Frame(frame)) => {
            let elapsed = start.elapsed();
            match parse_response(&frame) {
                Ok(resp) if resp.id == id => match resp.outcome() {
                    Ok(value) => CallEnd::Done(ExecutionOutcome { value, elapsed, raw: resp.message }),
                    Err(e) => CallEnd::Done(ExecutionOutcome::demonic(elapsed, e.to_string())),
                },
                Ok(resp) => CallEnd::Discard(
                    ExecutionOutcome::demonic(elapsed, format!("response id {} for request {id}", resp.id)),
                    true,
                ),
                Err(e) => CallEnd::Discard(ExecutionOutcome::demonic(elapsed, e.to_string()), true),
            }
        }
        Ok(Line::Oversized) => CallEnd::Discard(ExecutionOutcome::demonic(start.elapsed(), "output exceeds cap"), true),
        Err(RecvTimeoutError::Timeout) => CallEnd::Discard(ExecutionOutcome::demonic(start.elapsed(), "timeout"), true),
        Err(RecvTimeoutError::Disconnected) => {
            CallEnd::Discard(ExecutionOutcome::demonic(start.elapsed(), "worker exited"), false)
        }
    }
}

/// Runs candidates, memoizing the first observed output per input.
pub struct Harness {
    candidates: RwLock<HashMap<String, CandidateProgram>>,
    cfg: ExecutionConfig,
    slots: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    memo: Mutex<HashMap<(String, CanonicalKey), Value>>,
    executions: AtomicUsize,
}

impl Harness {
    pub fn new(cfg: ExecutionConfig) -> Result<Harness, ExecError> {
        cfg.validate()?;
        Ok(Harness {
            candidates: RwLock::new(HashMap::new()),
            cfg,
            slots: Mutex::new(HashMap::new()),
            memo: Mutex::new(HashMap::new()),
            executions: AtomicUsize::new(0),
        })
    }

    pub fn with_candidates(
        cfg: ExecutionConfig,
        candidates: impl IntoIterator<Item = CandidateProgram>,
    ) -> Result<Harness, ExecError> {
        let h = Harness::new(cfg)?;
        for c in candidates {
            h.register(c);
        }
        Ok(h)
    }

    /// Adds a candidate, replacing any earlier one with the same id.
    pub fn register(&self, candidate: CandidateProgram) {
        let mut map = self.candidates.write().expect("registry lock");
        map.insert(candidate.id.clone(), candidate);
    }

    pub fn candidate(&self, id: &str) -> Option<CandidateProgram> {
        self.candidates.read().expect("registry lock").get(id).cloned()
    }

    pub fn config(&self) -> &ExecutionConfig {
        &self.cfg
    }

    /// Number of non-memoized executions performed so far.
    pub fn executions(&self) -> usize {
        self.executions.load(Ordering::Relaxed)
    }

    /// Executes a registered candidate; repeated calls on the same input
    /// return the first observed value.
    pub fn execute(&self, candidate: &str, args: &[Value]) -> Result<ExecutionOutcome, ExecError> {
        if args.iter().any(Value::contains_special) {
            return Err(ExecError::SpecialArgument(candidate.to_string()));
        }
        let key = encode_args(args).map_err(|_| ExecError::UnencodableArgument(candidate.to_string()))?;
        let memo_key = (candidate.to_string(), key);
        if let Some(v) = self.memo.lock().expect("memo lock").get(&memo_key) {
            return Ok(ExecutionOutcome::instant(v.clone()));
        }
        let outcome = self.execute_uncached(candidate, args, &memo_key.1)?;
        let mut memo = self.memo.lock().expect("memo lock");
        let value = memo.entry(memo_key).or_insert_with(|| outcome.value.clone()).clone();
        Ok(ExecutionOutcome { value, ..outcome })
    }

    fn execute_uncached(&self, id: &str, args: &[Value], key: &CanonicalKey) -> Result<ExecutionOutcome, ExecError> {
        let candidate = self.candidate(id).ok_or_else(|| ExecError::UnknownCandidate(id.to_string()))?;
        self.executions.fetch_add(1, Ordering::Relaxed);
        match &candidate.backend {
            Backend::Fixture(table) => table
                .get(key)
                .cloned()
                .map(ExecutionOutcome::instant)
                .ok_or_else(|| ExecError::MissingFixture { candidate: id.to_string(), key: key.clone() }),
            Backend::Runner(endpoint) => Ok(self.run_worker(id, endpoint, args)),
            Backend::StreamLift { inner } => {
                if args.len() != 1 {
                    return Ok(ExecutionOutcome::demonic(Duration::ZERO, "lifted program takes one argument"));
                }
                let out = self.execute(inner, &[Value::Seq(vec![args[0].clone()])])?;
                let value = match out.value {
                    Value::Seq(items) if !items.is_empty() => items.into_iter().next().expect("non-empty"),
                    Value::Special(s) => Value::Special(s),
                    _ => Value::Special(Special::Demonic),
                };
                Ok(ExecutionOutcome { value, ..out })
            }
            Backend::UnionInverse { output_arg, branches } => {
                let Some(selector) = args.get(*output_arg) else {
                    return Ok(ExecutionOutcome::demonic(Duration::ZERO, "missing output argument"));
                };
                let tag = selector.constructor_tag();
                let branch = branches.get(tag).or_else(|| if tag != "none" { branches.get("some") } else { None });
                let Some(branch) = branch else {
                    return Ok(ExecutionOutcome::demonic(Duration::ZERO, format!("no branch for {tag}")));
                };
                let forwarded: Vec<Value> = if tag == "none" {
                    args.iter().enumerate().filter(|(i, _)| i != output_arg).map(|(_, v)| v.clone()).collect()
                } else {
                    args.to_vec()
                };
                self.execute(branch, &forwarded)
            }
        }
    }

    fn slot(&self, id: &str) -> Arc<Mutex<Slot>> {
        let mut slots = self.slots.lock().expect("slots lock");
        slots.entry(id.to_string()).or_insert_with(|| Arc::new(Mutex::new(Slot::Idle))).clone()
    }

    fn run_worker(&self, id: &str, endpoint: &RunnerEndpoint, args: &[Value]) -> ExecutionOutcome {
        let slot = self.slot(id);
        let mut slot = slot.lock().expect("worker lock");
        if matches!(*slot, Slot::Dead) {
            return ExecutionOutcome::demonic(Duration::ZERO, "worker exited earlier");
        }
        if matches!(*slot, Slot::Idle) {
            match Worker::spawn(endpoint, self.cfg.max_output_bytes) {
                Ok(w) => *slot = Slot::Live(w),
                Err(e) => {
                    warn!("cannot launch worker for {id}: {e}");
                    return ExecutionOutcome::demonic(Duration::ZERO, format!("launch failed: {e}"));
                }
            }
        }
        let Slot::Live(worker) = &mut *slot else { unreachable!("slot is live") };
        match call_worker(worker, args, self.cfg.timeout) {
            CallEnd::Done(o) => o,
            CallEnd::Discard(o, restartable) => {
                debug!("discarding worker for {id}: {:?}", o.raw);
                *slot = if restartable { Slot::Idle } else { Slot::Dead };
                o
            }
        }
    }

    /// Forgets that a candidate's worker died.
    pub fn reset_worker(&self, id: &str) {
        let slot = self.slot(id);
        let mut slot = slot.lock().expect("worker lock");
        *slot = Slot::Idle;
    }

    /// Runs one candidate over every input. Outcomes are positionally
    /// aligned; a failing input does not abort the batch.
    pub fn execute_batch(&self, candidate: &str, inputs: &TestInputSet) -> Result<Vec<ExecutionOutcome>, ExecError> {
        self.reset_worker(candidate);
        inputs.inputs().iter().map(|args| self.execute(candidate, args)).collect()
    }

    /// Runs several candidates over the same inputs, up to
    /// `worker_pool_size` candidates at a time.
    pub fn execute_many(
        &self,
        candidates: &[String],
        inputs: &TestInputSet,
    ) -> Result<Vec<Vec<ExecutionOutcome>>, ExecError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.worker_pool_size)
            .build()
            .map_err(|e| ExecError::Config(e.to_string()))?;
        pool.install(|| candidates.par_iter().map(|c| self.execute_batch(c, inputs)).collect())
    }
}

/// One-shot execution of a standalone candidate.
pub fn execute(
    candidate: &CandidateProgram,
    args: &[Value],
    cfg: &ExecutionConfig,
) -> Result<ExecutionOutcome, ExecError> {
    let h = Harness::with_candidates(cfg.clone(), [candidate.clone()])?;
    h.execute(&candidate.id, args)
}

pub fn execute_batch(
    candidate: &CandidateProgram,
    inputs: &TestInputSet,
    cfg: &ExecutionConfig,
) -> Result<Vec<ExecutionOutcome>, ExecError> {
    let h = Harness::with_candidates(cfg.clone(), [candidate.clone()])?;
    h.execute_batch(&candidate.id, inputs)
}
