//! End-to-end runs over a problem manifest.
//!
//! Each problem gets its own harness. Bundled inputs and samples are used
//! as they are; missing parts are requested through the gateway. Results
//! are written as line-delimited JSON in manifest order:
//!
//! | file | one line per |
//! |------|--------------|
//! | `decisions.jsonl` | problem and strategy |
//! | `classes.jsonl` | forward equivalence class |
//! | `samples.jsonl` | forward sample, with its class |
//! | `verdicts.jsonl` | agreement check of the triangulation pipeline |
//! | `metrics.jsonl` | strategy, when a judge is available |
//! | `errors.jsonl` | problem skipped after a soft failure |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{decide_baseline, TestCase, Witnesses};
use crate::consensus::{
    cluster, decide_pipeline, majority, plurality, ConsensusDecision, ConsensusError, DecisionRecord, EquivalenceClass,
};
use crate::corpus::{read_manifest, resolve, write_lines, CorpusError, LoadedSamples, ProblemRecord, SourceSink};
use crate::evaluation::{
    entropy_by_prefix, judge_class, metrics, AbstentionCounts, EvaluationError, GroundTruth, MetricsReport, Verdict,
};
use crate::exec::{ExecError, ExecutionConfig, Harness};
use crate::gateway::{
    source_candidate, ArtifactKind, Gateway, GatewayError, SamplingParams, SourceSample, TransformKind, Transport,
};
use crate::problem::{CandidateProgram, ProblemDescription, TestInputSet};
use crate::property::EvalConfig;
use crate::triangulation::{compose_union_inverse, VerdictRecord};
use crate::types::TypeTag;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("problem {0} has no judge but metrics were requested")]
    MissingJudge(String),
    #[error("problem {problem}: {source}")]
    Evaluation { problem: String, source: EvaluationError },
    #[error("unknown strategy {0}")]
    UnknownStrategy(String),
    #[error("no strategies selected")]
    NoStrategies,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("no recorded samples at {0}")]
    MissingSamples(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Tri,
    Plurality,
    Majority,
    RansacTests,
    RansacPostcondition,
    Syntactic,
    OffByOne,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Tri,
        Strategy::Plurality,
        Strategy::Majority,
        Strategy::RansacTests,
        Strategy::RansacPostcondition,
        Strategy::Syntactic,
        Strategy::OffByOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Tri => "tri",
            Strategy::Plurality => "plurality",
            Strategy::Majority => "majority",
            Strategy::RansacTests => "ransac-tests",
            Strategy::RansacPostcondition => "ransac-postcondition",
            Strategy::Syntactic => "syntactic",
            Strategy::OffByOne => "off-by-one",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Strategy {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| RunError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub output: PathBuf,
    /// Decided in this order; duplicates are ignored.
    pub strategies: Vec<Strategy>,
    pub eval: EvalConfig,
    pub sampling: SamplingParams,
    pub exec: ExecutionConfig,
    /// Problems processed concurrently.
    pub jobs: usize,
    /// Require a judge for every problem and write `metrics.jsonl`.
    pub metrics: bool,
    /// Worker command for sampled sources; `TRI_WORKER_CMD` if unset.
    pub worker_command: Option<Vec<String>>,
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            output: output.into(),
            strategies: Strategy::ALL.to_vec(),
            eval: EvalConfig::default(),
            sampling: SamplingParams::default(),
            exec: ExecutionConfig::default(),
            jobs: 1,
            metrics: true,
            worker_command: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub problem_id: String,
    pub class_id: String,
    pub representative: String,
    pub members: Vec<String>,
    /// Fraction of forward samples, as `n/d`.
    pub mass: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub problem_id: String,
    pub sample_id: String,
    pub class_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub problem_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsRecord {
    pub strategy: String,
    #[serde(flatten)]
    pub counts: AbstentionCounts,
    #[serde(flatten)]
    pub report: MetricsReport,
}

/// Everything decided for one problem.
#[derive(Clone, Debug)]
pub struct ProblemReport {
    pub problem_id: String,
    pub decisions: Vec<(Strategy, ConsensusDecision)>,
    /// Scheme behind the triangulation selection.
    pub scheme: Option<String>,
    pub classes: Vec<EquivalenceClass>,
    pub verdicts: Vec<VerdictRecord>,
    pub truth: Option<GroundTruth>,
    /// Forward sample ids in sampling order.
    pub forward: Vec<String>,
    class_verdicts: BTreeMap<String, Verdict>,
}

impl ProblemReport {
    pub fn decision(&self, s: Strategy) -> Option<&ConsensusDecision> {
        self.decisions.iter().find(|(k, _)| *k == s).map(|(_, d)| d)
    }

    pub fn records(&self) -> Vec<DecisionRecord> {
        self.decisions
            .iter()
            .map(|(s, d)| DecisionRecord { strategy: s.to_string(), ..d.to_record(&self.problem_id) })
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub reports: Vec<ProblemReport>,
    pub errors: Vec<ErrorRecord>,
    pub metrics: Vec<MetricsRecord>,
}

/// A per-problem failure that skips the problem without aborting the run.
#[derive(Debug)]
struct SoftError {
    stage: &'static str,
    message: String,
}

fn soft(stage: &'static str) -> impl Fn(&dyn fmt::Display) -> SoftError {
    move |e| SoftError { stage, message: e.to_string() }
}

fn dedup(strategies: &[Strategy]) -> Vec<Strategy> {
    let mut out = Vec::new();
    for s in strategies {
        if !out.contains(s) {
            out.push(*s);
        }
    }
    out
}

/// Runs every problem of the manifest and writes the result files.
pub fn run<T: Transport>(cfg: &RunConfig, gateway: &Gateway<T>) -> Result<RunSummary, RunError> {
    let records = read_manifest(&cfg.manifest)?;
    let summary = run_records(cfg, &records, gateway)?;
    write_outputs(&cfg.output, &summary)?;
    Ok(summary)
}

/// Runs the given problems; nothing is written except sampled sources.
pub fn run_records<T: Transport>(
    cfg: &RunConfig,
    records: &[ProblemRecord],
    gateway: &Gateway<T>,
) -> Result<RunSummary, RunError> {
    let strategies = dedup(&cfg.strategies);
    if strategies.is_empty() {
        return Err(RunError::NoStrategies);
    }
    if cfg.metrics {
        if let Some(r) = records.iter().find(|r| r.judge.is_none() && r.builtin.is_none()) {
            return Err(RunError::MissingJudge(r.id().to_string()));
        }
    }
    let command = cfg.worker_command.clone().or_else(crate::corpus::worker_command_from_env);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let results: Vec<Result<Result<ProblemReport, SoftError>, RunError>> = pool.install(|| {
        use rayon::prelude::*;
        records
            .par_iter()
            .map(|rec| {
                let sink = command.as_ref().map(|c| SourceSink {
                    dir: cfg.output.join("sources").join(file_safe(rec.id())),
                    command: c.clone(),
                });
                run_problem(cfg, &strategies, rec, sink.as_ref(), gateway)
            })
            .collect()
    });

    let mut summary = RunSummary::default();
    for (rec, result) in records.iter().zip(results) {
        match result? {
            Ok(report) => summary.reports.push(report),
            Err(e) => {
                log::warn!("{}: skipped at {}: {}", rec.id(), e.stage, e.message);
                summary.errors.push(ErrorRecord {
                    problem_id: rec.id().to_string(),
                    stage: e.stage.to_string(),
                    message: e.message,
                });
            }
        }
    }
    if cfg.metrics {
        for s in &strategies {
            let mut counts = AbstentionCounts::default();
            for r in &summary.reports {
                if let (Some(d), Some(t)) = (r.decision(*s), &r.truth) {
                    counts.add(d, t);
                }
            }
            summary.metrics.push(MetricsRecord { strategy: s.to_string(), counts, report: metrics(&counts) });
        }
    }
    Ok(summary)
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn run_problem<T: Transport>(
    cfg: &RunConfig,
    strategies: &[Strategy],
    rec: &ProblemRecord,
    sink: Option<&SourceSink>,
    gateway: &Gateway<T>,
) -> Result<Result<ProblemReport, SoftError>, RunError> {
    let resolved = match resolve(rec, sink) {
        Ok(r) => r,
        Err(e) => return Ok(Err(soft("resolve")(&e))),
    };
    let d = &resolved.problem;
    let inputs = match resolved.inputs {
        Some(i) => i,
        None => match gateway.gen_test_inputs(d, &cfg.sampling) {
            Ok(g) => g.inputs,
            Err(e) => return Ok(Err(soft("inputs")(&e))),
        },
    };
    let samples = match resolved.samples {
        Some(s) => s,
        None => {
            let Some(sink) = sink else {
                return Ok(Err(SoftError {
                    stage: "sampling",
                    message: "sampled sources need a worker command (TRI_WORKER_CMD)".into(),
                }));
            };
            match sample_live(gateway, d, strategies, &cfg.sampling, sink) {
                Ok(s) => s,
                Err(e) => return Ok(Err(e)),
            }
        }
    };

    let h = Harness::new(cfg.exec.clone())?;
    for c in &samples.candidates {
        h.register(c.clone());
    }
    let decided = match decide_all(&h, strategies, &samples, &inputs, &cfg.eval) {
        Ok(x) => x,
        Err(e) => return Ok(Err(soft("consensus")(&e))),
    };

    let mut class_verdicts = BTreeMap::new();
    let truth = match &resolved.judge {
        Some(judge) => {
            let mut correct = std::collections::BTreeSet::new();
            for c in &decided.classes {
                let v =
                    judge_class(judge, c).map_err(|source| RunError::Evaluation { problem: d.id.clone(), source })?;
                if v == Verdict::Correct {
                    correct.insert(c.id.clone());
                }
                class_verdicts.insert(c.id.clone(), v);
            }
            Some(GroundTruth { correct_classes: correct })
        }
        None => None,
    };
    Ok(Ok(ProblemReport {
        problem_id: d.id.clone(),
        decisions: decided.decisions,
        scheme: decided.scheme,
        classes: decided.classes,
        verdicts: decided.verdicts,
        truth,
        forward: samples.pipeline.forward.clone(),
        class_verdicts,
    }))
}

struct Decided {
    decisions: Vec<(Strategy, ConsensusDecision)>,
    scheme: Option<String>,
    classes: Vec<EquivalenceClass>,
    verdicts: Vec<VerdictRecord>,
}

fn decide_all(
    h: &Harness,
    strategies: &[Strategy],
    samples: &LoadedSamples,
    inputs: &TestInputSet,
    eval: &EvalConfig,
) -> Result<Decided, ConsensusError> {
    let classes = cluster(h, &samples.pipeline.forward, inputs)?;
    let mut out = Decided { decisions: Vec::new(), scheme: None, classes, verdicts: Vec::new() };
    for s in strategies {
        let d = match s {
            Strategy::Tri => {
                let outcome = decide_pipeline(h, &samples.pipeline, inputs, eval)?;
                out.scheme = outcome.scheme;
                out.verdicts = outcome.log;
                outcome.decision
            }
            Strategy::Plurality => plurality(&out.classes)?,
            Strategy::Majority => majority(&out.classes, Ratio::new(1, 2))?,
            Strategy::RansacTests => {
                decide_baseline(h, &out.classes, &Witnesses::Tests(samples.tests.clone()), inputs)?
            }
            Strategy::RansacPostcondition => {
                decide_baseline(h, &out.classes, &Witnesses::Postconditions(samples.postconditions.clone()), inputs)?
            }
            Strategy::Syntactic => {
                decide_baseline(h, &out.classes, &Witnesses::Syntactic(samples.syntactic.clone()), inputs)?
            }
            Strategy::OffByOne => {
                decide_baseline(h, &out.classes, &Witnesses::OffByOne(samples.off_by_one.clone()), inputs)?
            }
        };
        out.decisions.push((*s, d));
    }
    Ok(out)
}

fn gw(stage: &'static str) -> impl Fn(GatewayError) -> SoftError {
    move |e| soft(stage)(&e)
}

fn register_sources(
    samples: Vec<SourceSample>,
    d: &ProblemDescription,
    problem_id: &str,
    sink: &SourceSink,
    out: &mut Vec<CandidateProgram>,
) -> Result<Vec<String>, SoftError> {
    let mut ids = Vec::new();
    for s in samples {
        let c = source_candidate(&s.id, problem_id, &s.source, &d.signature.name, &sink.dir, &sink.command)
            .map_err(gw("sampling"))?;
        ids.push(c.id.clone());
        out.push(c);
    }
    Ok(ids)
}

/// Samples forward programs, witnesses and baseline artifacts through the
/// gateway, as needed by the selected strategies.
fn sample_live<T: Transport>(
    g: &Gateway<T>,
    d: &ProblemDescription,
    strategies: &[Strategy],
    params: &SamplingParams,
    sink: &SourceSink,
) -> Result<LoadedSamples, SoftError> {
    let pid = d.id.as_str();
    let mut cands = Vec::new();
    let mut out = LoadedSamples::default();
    let forward = g.sample_programs(d, params).map_err(gw("sampling"))?;
    out.pipeline.forward = register_sources(forward, d, pid, sink, &mut cands)?;
    out.pipeline.stream = d.stream;

    if strategies.contains(&Strategy::Tri) {
        let base = if d.stream {
            g.transform(d, &TransformKind::Pointwise, params).map_err(gw("transform"))?.remove(0)
        } else {
            d.clone()
        };
        let k = g.choose_invert_arg(&base, params).map_err(gw("transform"))?;
        let full = base.signature.arity() == 1;
        out.pipeline.invert_arg = if full { None } else { Some(k) };
        let sample_transformed =
            |kind: TransformKind, cands: &mut Vec<CandidateProgram>| -> Result<Vec<String>, SoftError> {
                match g.transform(&base, &kind, params) {
                    Ok(ds) => {
                        let t = &ds[0];
                        let s = g.sample_programs(t, params).map_err(gw("sampling"))?;
                        register_sources(s, t, pid, sink, cands)
                    }
                    Err(GatewayError::Incompatible { kind, reason }) => {
                        log::info!("{pid}: no {kind} witnesses: {reason}");
                        Ok(Vec::new())
                    }
                    Err(e) => Err(gw("transform")(e)),
                }
            };
        let inv = if full { TransformKind::Inverse } else { TransformKind::PartialInverse(k) };
        out.pipeline.inverses = sample_transformed(inv, &mut cands)?;
        out.pipeline.enumerators = sample_transformed(TransformKind::Enumeration, &mut cands)?;
        out.pipeline.set_inverses = if matches!(base.signature.returns, TypeTag::Union(_)) {
            sample_union_inverses(g, &base, k, params, sink, &mut cands)?
        } else {
            sample_transformed(TransformKind::SetValuedInverse(k), &mut cands)?
        };
    }

    if strategies.contains(&Strategy::RansacTests) || strategies.contains(&Strategy::RansacPostcondition) {
        for (s, kind) in [
            (Strategy::RansacTests, TransformKind::BaselineTests),
            (Strategy::RansacPostcondition, TransformKind::BaselinePostcondition),
        ] {
            if !strategies.contains(&s) {
                continue;
            }
            for a in g.gen_baseline_artifacts(d, &kind, params).map_err(gw("baseline"))? {
                let c = source_candidate(&a.id, pid, &a.source, a.entrypoint(), &sink.dir, &sink.command)
                    .map_err(gw("baseline"))?;
                match a.kind {
                    ArtifactKind::Test => {
                        out.tests.push(TestCase { id: c.id.clone(), args: a.args.unwrap_or_default() })
                    }
                    ArtifactKind::Postcondition => out.postconditions.push(c.id.clone()),
                }
                cands.push(c);
            }
        }
    }
    for (s, kind) in
        [(Strategy::Syntactic, TransformKind::BaselineTranslate), (Strategy::OffByOne, TransformKind::BaselineOffByOne)]
    {
        if !strategies.contains(&s) {
            continue;
        }
        let t = g.transform(d, &kind, params).map_err(gw("baseline"))?.remove(0);
        let samples = g.sample_programs(&t, params).map_err(gw("baseline"))?;
        let ids = register_sources(samples, &t, pid, sink, &mut cands)?;
        match s {
            Strategy::Syntactic => out.syntactic = ids,
            _ => out.off_by_one = ids,
        }
    }
    out.candidates = cands;
    Ok(out)
}

/// Set-valued inverses of a union-returning problem: one sample set per
/// branch, composed index by index into dispatching inverses.
fn sample_union_inverses<T: Transport>(
    g: &Gateway<T>,
    base: &ProblemDescription,
    k: usize,
    params: &SamplingParams,
    sink: &SourceSink,
    cands: &mut Vec<CandidateProgram>,
) -> Result<Vec<String>, SoftError> {
    let pid = base.id.as_str();
    let mut per_branch: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for branch in g.transform(base, &TransformKind::UnionSplit, params).map_err(gw("transform"))? {
        let crate::problem::ProblemRole::UnionBranch { tag } = &branch.role else { continue };
        let sinv =
            g.transform(&branch, &TransformKind::SetValuedInverse(k), params).map_err(gw("transform"))?.remove(0);
        let samples = g.sample_programs(&sinv, params).map_err(gw("sampling"))?;
        for s in samples {
            let index = s.id.rsplit('#').next().unwrap_or_default().to_string();
            let c = source_candidate(&s.id, pid, &s.source, &sinv.signature.name, &sink.dir, &sink.command)
                .map_err(gw("sampling"))?;
            per_branch.entry(index).or_default().insert(tag.clone(), c.id.clone());
            cands.push(c);
        }
    }
    let tags = per_branch.values().map(BTreeMap::len).max().unwrap_or(0);
    let mut ids = Vec::new();
    for (index, branches) in per_branch {
        if branches.len() < tags {
            continue;
        }
        let id = format!("{pid}/sinv{k}#{index}");
        cands.push(compose_union_inverse(id.clone(), pid, k, branches));
        ids.push(id);
    }
    Ok(ids)
}

/// Writes the result files of a run into `dir`.
pub fn write_outputs(dir: &Path, summary: &RunSummary) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    write_lines(&dir.join("decisions.jsonl"), summary.reports.iter().flat_map(ProblemReport::records))?;
    let mut classes = Vec::new();
    let mut samples = Vec::new();
    for r in &summary.reports {
        for c in &r.classes {
            classes.push(ClassRecord {
                problem_id: r.problem_id.clone(),
                class_id: c.id.clone(),
                representative: c.representative.clone(),
                members: c.members.clone(),
                mass: c.mass().to_string(),
                verdict: r.class_verdicts.get(&c.id).copied(),
            });
        }
        let class_of: BTreeMap<&String, &String> =
            r.classes.iter().flat_map(|c| c.members.iter().map(move |m| (m, &c.id))).collect();
        samples.extend(r.forward.iter().filter_map(|m| {
            class_of.get(m).map(|c| SampleRecord {
                problem_id: r.problem_id.clone(),
                sample_id: m.clone(),
                class_id: (*c).clone(),
            })
        }));
    }
    write_lines(&dir.join("classes.jsonl"), classes)?;
    write_lines(&dir.join("samples.jsonl"), samples)?;
    write_lines(&dir.join("verdicts.jsonl"), summary.reports.iter().flat_map(|r| r.verdicts.iter()))?;
    write_lines(&dir.join("errors.jsonl"), &summary.errors)?;
    if !summary.metrics.is_empty() {
        write_lines(&dir.join("metrics.jsonl"), &summary.metrics)?;
    }
    Ok(())
}

/// Metrics as an aligned text table.
pub fn render_metrics(rows: &[MetricsRecord]) -> String {
    let mut out = format!(
        "{:<22}{:>4}{:>4}{:>4}{:>4}{:>4}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
        "strategy", "N1", "N2", "N3", "N4", "N5", "rel-acc", "acc", "abst", "prec-abs", "rec-abs", "f1-abs"
    );
    for r in rows {
        let (c, m) = (&r.counts, &r.report);
        out += &format!(
            "{:<22}{:>4}{:>4}{:>4}{:>4}{:>4}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
            r.strategy,
            c.n1,
            c.n2,
            c.n3,
            c.n4,
            c.n5,
            m.reliable_accuracy.to_string(),
            m.overall_accuracy.to_string(),
            m.abstention_rate.to_string(),
            m.precision_abs.to_string(),
            m.recall_abs.to_string(),
            m.f1_abs.to_string()
        );
    }
    out
}

/// Metrics as CSV with exact `n/d` values.
pub fn metrics_csv(rows: &[MetricsRecord]) -> String {
    let mut out =
        "strategy,n1,n2,n3,n4,n5,reliable_accuracy,overall_accuracy,abstention_rate,precision_abs,recall_abs,f1_abs\n"
            .to_string();
    for r in rows {
        let (c, m) = (&r.counts, &r.report);
        let ms = [m.reliable_accuracy, m.overall_accuracy, m.abstention_rate, m.precision_abs, m.recall_abs, m.f1_abs]
            .map(|x| serde_json::to_value(x).expect("metric serializes").as_str().unwrap_or_default().to_string());
        out += &format!("{},{},{},{},{},{},{}\n", r.strategy, c.n1, c.n2, c.n3, c.n4, c.n5, ms.join(","));
    }
    out
}

/// Semantic entropy of one problem's first `n` forward samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyRow {
    pub problem_id: String,
    pub n: usize,
    pub entropy: f64,
}

/// Default prefixes: 5, 10, ... up to the largest sample count.
pub fn default_prefixes(max: usize) -> Vec<usize> {
    (1..=max / 5).map(|k| 5 * k).collect()
}

/// Entropy per sample-size prefix from the `samples.jsonl` of a run.
pub fn entropy_report(run_dir: &Path, prefixes: Option<&[usize]>) -> Result<Vec<EntropyRow>, RunError> {
    let path = run_dir.join("samples.jsonl");
    if !path.is_file() {
        return Err(RunError::MissingSamples(path.display().to_string()));
    }
    let records: Vec<SampleRecord> = crate::corpus::read_lines(&path)?;
    if records.is_empty() {
        return Err(RunError::MissingSamples(path.display().to_string()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut labels: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in records {
        if !labels.contains_key(&r.problem_id) {
            order.push(r.problem_id.clone());
        }
        labels.entry(r.problem_id).or_default().push(r.class_id);
    }
    let mut out = Vec::new();
    for p in order {
        let ls = &labels[&p];
        let ks = prefixes.map_or_else(|| default_prefixes(ls.len()), <[usize]>::to_vec);
        for (n, entropy) in entropy_by_prefix(ls, &ks) {
            out.push(EntropyRow { problem_id: p.clone(), n, entropy });
        }
    }
    Ok(out)
}
