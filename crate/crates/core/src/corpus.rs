//! Line-delimited problem manifests and the bundled toy corpus.
//!
//! A manifest has one JSON object per line:
//!
//! ```text
//! {"id", "text", "signature", "role", "stream"?,   problem description
//!  "invert_arg"?,                                  argument the inverses recover
//!  "inputs"?: [[<value>, ...], ...],               shared test inputs
//!  "samples"?: {"forward": [<sample>], "enumerators", "set_inverses",
//!               "inverses", "tests", "postconditions", "syntactic",
//!               "off_by_one"},
//!  "judge"?: [[[<value>, ...], [<accepted output>, ...]], ...],
//!  "builtin"?: "fill-wildcards"}
//! ```
//!
//! A sample is `{"id", "table": [[[<arg>, ...], <output>], ...]}`,
//! `{"id", "source": {"code", "entrypoint"}}` or
//! `{"id", "union": {"output_arg", "branches": {<tag>: <sample>}}}`; a test
//! sample also carries `"args"`. Values use their stored JSON form.
//! Problems without inputs or samples are completed through the gateway.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::TestCase;
use crate::consensus::PipelineSamples;
use crate::evaluation::Judge;
use crate::fixtures::{self, FillFixture};
use crate::gateway::{CompletionRequest, SamplingParams, ScriptedTransport, TranscriptCache};
use crate::problem::{CandidateProgram, FunctionSignature, Param, ProblemDescription, Provenance, TestInputSet};
use crate::triangulation::compose_union_inverse;
use crate::types::TypeTag;
use crate::value::{encode_args, Value};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("duplicate problem id {0}")]
    Duplicate(String),
    #[error("problem {problem}: {message}")]
    Invalid { problem: String, message: String },
    #[error("unknown builtin corpus {0}")]
    UnknownBuiltin(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub code: String,
    pub entrypoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnionSpec {
    pub output_arg: usize,
    pub branches: BTreeMap<String, SampleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleBody {
    Table(Vec<(Vec<Value>, Value)>),
    Source(SourceSpec),
    Union(UnionSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub id: String,
    #[serde(flatten)]
    pub body: SampleBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    #[serde(flatten)]
    pub sample: SampleSpec,
    pub args: Vec<Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forward: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enumerators: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_inverses: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inverses: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<TestSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub postconditions: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub syntactic: Vec<SampleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub off_by_one: Vec<SampleSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    #[serde(flatten)]
    pub problem: ProblemDescription,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invert_arg: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<Vec<Value>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampleSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<Vec<(Vec<Value>, Vec<Value>)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
}

impl ProblemRecord {
    pub fn new(problem: ProblemDescription) -> Self {
        ProblemRecord { problem, invert_arg: None, inputs: None, samples: None, judge: None, builtin: None }
    }

    pub fn id(&self) -> &str {
        &self.problem.id
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ProblemRecord>, CorpusError> {
    let file = fs::File::open(path)?;
    let mut out: Vec<ProblemRecord> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProblemRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.problem
            .validate()
            .map_err(|e| CorpusError::Invalid { problem: rec.id().to_string(), message: e.to_string() })?;
        if out.iter().any(|r| r.id() == rec.id()) {
            return Err(CorpusError::Duplicate(rec.id().to_string()));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes one serialized record per line.
pub fn write_lines<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), std::io::Error> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, &r)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

pub fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Candidates and roles of a problem whose samples are bundled.
#[derive(Clone, Debug, Default)]
pub struct LoadedSamples {
    pub candidates: Vec<CandidateProgram>,
    pub pipeline: PipelineSamples,
    pub tests: Vec<TestCase>,
    pub postconditions: Vec<String>,
    pub syntactic: Vec<String>,
    pub off_by_one: Vec<String>,
}

/// Where runner-backed samples are written and how workers start.
#[derive(Clone, Debug)]
pub struct SourceSink {
    pub dir: PathBuf,
    pub command: Vec<String>,
}

fn invalid(problem: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Invalid { problem: problem.to_string(), message: message.into() }
}

fn build_sample(
    problem: &str,
    spec: &SampleSpec,
    sink: Option<&SourceSink>,
    out: &mut Vec<CandidateProgram>,
) -> Result<String, CorpusError> {
    let c = match &spec.body {
        SampleBody::Table(rows) => {
            let mut table = BTreeMap::new();
            for (args, v) in rows {
                let key = encode_args(args).map_err(|e| invalid(problem, format!("{}: {e}", spec.id)))?;
                table.insert(key, v.clone());
            }
            CandidateProgram::fixture(&spec.id, problem, table)
        }
        SampleBody::Source(src) => {
            let sink = sink.ok_or_else(|| invalid(problem, format!("{} needs a worker command", spec.id)))?;
            crate::gateway::source_candidate(&spec.id, problem, &src.code, &src.entrypoint, &sink.dir, &sink.command)
                .map_err(|e| invalid(problem, e.to_string()))?
        }
        SampleBody::Union(u) => {
            let mut branches = BTreeMap::new();
            for (tag, b) in &u.branches {
                branches.insert(tag.clone(), build_sample(problem, b, sink, out)?);
            }
            compose_union_inverse(spec.id.clone(), problem, u.output_arg, branches)
        }
    };
    out.push(c);
    Ok(spec.id.clone())
}

impl SampleSet {
    pub fn load(
        &self,
        problem: &str,
        invert_arg: Option<usize>,
        stream: bool,
        sink: Option<&SourceSink>,
    ) -> Result<LoadedSamples, CorpusError> {
        let mut out = LoadedSamples::default();
        let ids = |specs: &[SampleSpec], out: &mut Vec<CandidateProgram>| {
            specs.iter().map(|s| build_sample(problem, s, sink, out)).collect::<Result<Vec<_>, _>>()
        };
        let mut cands = Vec::new();
        out.pipeline = PipelineSamples {
            forward: ids(&self.forward, &mut cands)?,
            enumerators: ids(&self.enumerators, &mut cands)?,
            set_inverses: ids(&self.set_inverses, &mut cands)?,
            inverses: ids(&self.inverses, &mut cands)?,
            invert_arg,
            stream,
        };
        for t in &self.tests {
            let id = build_sample(problem, &t.sample, sink, &mut cands)?;
            out.tests.push(TestCase { id, args: t.args.clone() });
        }
        out.postconditions = ids(&self.postconditions, &mut cands)?;
        out.syntactic = ids(&self.syntactic, &mut cands)?;
        out.off_by_one = ids(&self.off_by_one, &mut cands)?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = cands.iter().find(|c| !seen.insert(c.id.clone())) {
            return Err(invalid(problem, format!("duplicate sample id {}", dup.id)));
        }
        out.candidates = cands;
        Ok(out)
    }
}

pub fn judge_from_rows(problem: &str, rows: &[(Vec<Value>, Vec<Value>)]) -> Result<Judge, CorpusError> {
    let mut accepted = BTreeMap::new();
    for (args, outs) in rows {
        let key = encode_args(args).map_err(|e| invalid(problem, e.to_string()))?;
        accepted.insert(key, outs.clone());
    }
    Ok(Judge { problem_id: problem.to_string(), accepted })
}

/// A problem ready to run: bundled parts resolved, the rest left to the
/// gateway.
#[derive(Clone, Debug)]
pub struct ResolvedProblem {
    pub problem: ProblemDescription,
    pub invert_arg: Option<usize>,
    pub inputs: Option<TestInputSet>,
    pub samples: Option<LoadedSamples>,
    pub judge: Option<Judge>,
}

pub fn resolve(rec: &ProblemRecord, sink: Option<&SourceSink>) -> Result<ResolvedProblem, CorpusError> {
    let id = rec.id();
    if let Some(name) = &rec.builtin {
        return resolve_builtin(name);
    }
    let inputs = rec
        .inputs
        .as_ref()
        .map(|rows| {
            TestInputSet::new(id, rows.iter().cloned(), Provenance::Fixture).map_err(|e| invalid(id, e.to_string()))
        })
        .transpose()?;
    let samples = rec.samples.as_ref().map(|s| s.load(id, rec.invert_arg, rec.problem.stream, sink)).transpose()?;
    let judge = rec.judge.as_ref().map(|rows| judge_from_rows(id, rows)).transpose()?;
    Ok(ResolvedProblem { problem: rec.problem.clone(), invert_arg: rec.invert_arg, inputs, samples, judge })
}

fn resolve_builtin(name: &str) -> Result<ResolvedProblem, CorpusError> {
    if name != fixtures::FILL_PROBLEM {
        return Err(CorpusError::UnknownBuiltin(name.to_string()));
    }
    let fx = FillFixture::build();
    let samples = LoadedSamples {
        candidates: fx.candidates().cloned().collect(),
        pipeline: PipelineSamples {
            forward: FillFixture::ids(&fx.forward),
            enumerators: FillFixture::ids(&fx.enumerators),
            set_inverses: FillFixture::ids(&fx.set_inverses),
            inverses: vec![],
            invert_arg: Some(fixtures::FILL_INVERT_ARG),
            stream: false,
        },
        ..LoadedSamples::default()
    };
    Ok(ResolvedProblem {
        judge: Some(Judge { problem_id: fx.problem.id.clone(), accepted: fx.accepted() }),
        problem: fx.problem.clone(),
        invert_arg: Some(fixtures::FILL_INVERT_ARG),
        inputs: Some(fx.inputs.clone()),
        samples: Some(samples),
    })
}

/// Fixed timestamp of the bundled transcripts.
pub fn corpus_clock() -> String {
    "2026-01-01T00:00:00Z".to_string()
}

fn int_sig(name: &str) -> FunctionSignature {
    FunctionSignature::new(name, vec![Param::new("i", TypeTag::Int)], TypeTag::Int)
}

fn tab(id: &str, domain: &[Vec<Value>], f: impl Fn(&[Value]) -> Value) -> SampleSpec {
    SampleSpec { id: id.to_string(), body: SampleBody::Table(domain.iter().map(|a| (a.clone(), f(a))).collect()) }
}

fn copies(
    prefix: &str,
    start: usize,
    count: usize,
    domain: &[Vec<Value>],
    f: impl Fn(&[Value]) -> Value + Copy,
) -> Vec<SampleSpec> {
    (start..start + count).map(|n| tab(&format!("{prefix}-{n:02}"), domain, f)).collect()
}

fn int_of(v: &Value) -> i64 {
    match v {
        Value::Int(i) => i64::try_from(i).expect("small corpus integers"),
        other => panic!("corpus expects integers, got {other:?}"),
    }
}

fn unary_domain(r: std::ops::RangeInclusive<i64>) -> Vec<Vec<Value>> {
    r.map(|i| vec![Value::int(i)]).collect()
}

/// Checker table over `(args, result)` for every result the forward
/// samples produce on `args`.
fn checker(
    id: &str,
    forward: &[SampleSpec],
    args: &[Vec<Value>],
    pred: impl Fn(&[Value], &Value) -> bool,
) -> SampleSpec {
    let mut rows = Vec::new();
    for a in args {
        let mut outs: Vec<Value> = Vec::new();
        for s in forward {
            let SampleBody::Table(t) = &s.body else { continue };
            if let Some((_, out)) = t.iter().find(|(k, _)| k == a) {
                if !out.is_special() && !outs.contains(out) {
                    outs.push(out.clone());
                }
            }
        }
        for out in outs {
            rows.push((vec![Value::tuple(a.iter().cloned()), out.clone()], Value::Bool(pred(a, &out))));
        }
    }
    SampleSpec { id: id.to_string(), body: SampleBody::Table(rows) }
}

fn judge_rows(args: &[Vec<Value>], f: impl Fn(&[Value]) -> Value) -> Vec<(Vec<Value>, Vec<Value>)> {
    args.iter().map(|a| (a.clone(), vec![f(a)])).collect()
}

fn toy_next() -> ProblemRecord {
    let domain = unary_domain(fixtures::TOY_DOMAIN);
    let shift = |k: i64| move |a: &[Value]| Value::int(int_of(&a[0]) + k);
    let mut forward = copies("next-fwd", 0, 5, &domain, shift(1));
    forward.extend(copies("next-fwd", 5, 8, &domain, shift(2)));
    forward.extend(copies("next-fwd", 13, 2, &domain, |a| {
        if int_of(&a[0]) == 0 {
            Value::DEMONIC
        } else {
            Value::int(int_of(&a[0]) + 1)
        }
    }));
    let mut inverses = copies("next-inv", 0, 6, &domain, shift(-1));
    inverses.extend(copies("next-inv", 6, 1, &domain, shift(-2)));
    let mut syntactic = copies("next-zh", 0, 3, &domain, shift(1));
    syntactic.extend(copies("next-zh", 3, 4, &domain, shift(2)));
    let mut off_by_one = copies("next-plus1", 0, 4, &domain, shift(2));
    off_by_one.extend(copies("next-plus1", 4, 2, &domain, shift(3)));
    let mut tests: Vec<TestSpec> = [0, 3, 5]
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let args = vec![Value::int(x)];
            TestSpec {
                sample: checker(&format!("next-test-{n:02}"), &forward, std::slice::from_ref(&args), |a, o| {
                    *o == Value::int(int_of(&a[0]) + 1)
                }),
                args,
            }
        })
        .collect();
    let args = vec![Value::int(1)];
    tests.push(TestSpec {
        sample: checker("next-test-03", &forward, std::slice::from_ref(&args), |a, o| {
            *o == Value::int(int_of(&a[0]) + 2)
        }),
        args,
    });
    let test_domain = unary_domain(-10..=10);
    let mut postconditions: Vec<SampleSpec> = (0..3)
        .map(|n| checker(&format!("next-post-{n:02}"), &forward, &test_domain, |a, o| int_of(o) > int_of(&a[0])))
        .collect();
    postconditions.push(checker("next-post-03", &forward, &test_domain, |a, o| int_of(o) == int_of(&a[0]) + 1));
    let mut rec = ProblemRecord::new(ProblemDescription::original(
        "toy-next",
        "Return the integer that follows i.",
        int_sig("next"),
    ));
    rec.samples =
        Some(SampleSet { forward, inverses, tests, postconditions, syntactic, off_by_one, ..SampleSet::default() });
    rec.judge = Some(judge_rows(&domain, shift(1)));
    rec
}

fn toy_abs() -> ProblemRecord {
    let domain = unary_domain(fixtures::TOY_DOMAIN);
    let mut forward = copies("abs-fwd", 0, 4, &domain, |a| Value::int(int_of(&a[0]).abs()));
    forward.extend(copies("abs-fwd", 4, 6, &domain, |a| a[0].clone()));
    let mut set_inverses = copies("abs-sinv", 0, 5, &domain, |a| {
        let o = int_of(&a[0]);
        if o < 0 {
            Value::UNDEFINED
        } else {
            Value::full_set([Value::int(o), Value::int(-o)])
        }
    });
    set_inverses.extend(copies("abs-sinv", 5, 2, &domain, |a| Value::full_set([a[0].clone()])));
    let mut rec = ProblemRecord::new(ProblemDescription::original(
        "toy-abs",
        "Return the absolute value of i.",
        int_sig("absolute"),
    ));
    rec.inputs = Some(unary_domain(-6..=6));
    rec.samples = Some(SampleSet { forward, set_inverses, ..SampleSet::default() });
    rec.judge = Some(judge_rows(&domain, |a| Value::int(int_of(&a[0]).abs())));
    rec
}

fn toy_square() -> ProblemRecord {
    let domain = unary_domain(fixtures::TOY_DOMAIN);
    let wide = unary_domain(-100..=100);
    let mut forward = copies("sq-fwd", 0, 5, &domain, |a| Value::int(2 * int_of(&a[0])));
    forward.extend(copies("sq-fwd", 5, 3, &domain, |a| Value::int(int_of(&a[0]).pow(2) + 1)));
    let inverses = copies("sq-inv", 0, 3, &wide, |a| Value::int(int_of(&a[0]) - 1));
    let mut rec =
        ProblemRecord::new(ProblemDescription::original("toy-square", "Return the square of i.", int_sig("square")));
    rec.inputs = Some(unary_domain(-5..=5));
    rec.samples = Some(SampleSet { forward, inverses, ..SampleSet::default() });
    rec.judge = Some(judge_rows(&domain, |a| Value::int(int_of(&a[0]).pow(2))));
    rec
}

fn toy_double() -> ProblemRecord {
    let lists: Vec<Vec<Value>> = [vec![1, 2, 3], vec![0], vec![-2, 5], vec![4, 4, 1, 7], vec![-3, 6, 0]]
        .into_iter()
        .map(|l| vec![Value::seq(l.into_iter().map(Value::int))])
        .collect();
    let singletons: Vec<Vec<Value>> = fixtures::TOY_DOMAIN.map(|i| vec![Value::seq([Value::int(i)])]).collect();
    let domain: Vec<Vec<Value>> = lists.iter().chain(&singletons).cloned().collect();
    let elems = |a: &[Value]| -> Vec<i64> {
        match &a[0] {
            Value::Seq(xs) => xs.iter().map(int_of).collect(),
            other => panic!("expected a list, got {other:?}"),
        }
    };
    let doubled = move |a: &[Value]| Value::seq(elems(a).into_iter().map(|x| Value::int(2 * x)));
    let mut forward = copies("dbl-fwd", 0, 4, &domain, doubled);
    forward.extend(copies("dbl-fwd", 4, 5, &domain, move |a| {
        Value::seq(elems(a).into_iter().rev().map(|x| Value::int(2 * x)))
    }));
    forward.extend(copies("dbl-fwd", 9, 2, &domain, move |a| {
        Value::seq(elems(a).into_iter().map(|x| Value::int(2 * x + 1)))
    }));
    let wide = unary_domain(-100..=100);
    let mut inverses = copies("dbl-inv", 0, 4, &wide, |a| {
        let o = int_of(&a[0]);
        if o % 2 == 0 {
            Value::int(o / 2)
        } else {
            Value::UNDEFINED
        }
    });
    inverses.extend(copies("dbl-inv", 4, 1, &wide, |a| {
        let o = int_of(&a[0]);
        if o % 2 != 0 {
            Value::int((o - 1) / 2)
        } else {
            Value::UNDEFINED
        }
    }));
    let mut problem = ProblemDescription::original(
        "toy-double",
        "Double every element of xs, keeping the order.",
        FunctionSignature::new(
            "double_all",
            vec![Param::new("xs", TypeTag::list(TypeTag::Int))],
            TypeTag::list(TypeTag::Int),
        ),
    );
    problem.stream = true;
    let mut rec = ProblemRecord::new(problem);
    rec.inputs = Some(lists.clone());
    rec.samples = Some(SampleSet { forward, inverses, ..SampleSet::default() });
    rec.judge = Some(judge_rows(&domain, doubled));
    rec
}

fn fill_wildcards() -> ProblemRecord {
    let mut rec = ProblemRecord::new(fixtures::fill_problem());
    rec.builtin = Some(fixtures::FILL_PROBLEM.to_string());
    rec
}

/// Model responses for the input-generation prompt of `toy-next`: the
/// integers −10..10, then two batches adding nothing.
fn toy_input_responses(_: &CompletionRequest) -> Result<String, crate::gateway::GatewayError> {
    Ok((-10..=10).map(|i| format!("[{i}]\n")).collect())
}

pub const MANIFEST: &str = "manifest.jsonl";
pub const TRANSCRIPTS: &str = "transcripts";

/// Records of the bundled toy corpus, in manifest order.
pub fn toy_corpus() -> Vec<ProblemRecord> {
    vec![toy_next(), fill_wildcards(), toy_abs(), toy_square(), toy_double()]
}

/// Writes the manifest and the recorded input-generation transcripts.
pub fn write_toy_corpus(dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    let records = toy_corpus();
    write_lines(&dir.join(MANIFEST), &records)?;
    let cache =
        TranscriptCache::record(dir.join(TRANSCRIPTS), ScriptedTransport(toy_input_responses)).with_clock(corpus_clock);
    let gateway = crate::gateway::Gateway::new(cache);
    for rec in records.iter().filter(|r| r.inputs.is_none() && r.builtin.is_none()) {
        gateway
            .gen_test_inputs(&rec.problem, &SamplingParams::default())
            .map_err(|e| invalid(rec.id(), e.to_string()))?;
    }
    Ok(())
}

/// Runner endpoint command from `TRI_WORKER_CMD` (whitespace-separated).
pub fn worker_command_from_env() -> Option<Vec<String>> {
    std::env::var("TRI_WORKER_CMD")
        .ok()
        .map(|s| s.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|v| !v.is_empty())
}
