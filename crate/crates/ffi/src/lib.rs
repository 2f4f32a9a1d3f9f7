//! C ABI over the consensus engine.
//!
//! Every fallible call returns a [`TriStatus`]; on failure the message is
//! available from [`tri_last_error`] on the same thread. Handles are
//! opaque and owned by the caller, who releases them with the matching
//! `_free` function. Strings returned through a handle live as long as the
//! handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tri_core::corpus::{read_manifest, ProblemRecord};
use tri_core::evaluation::{entropy, metrics, AbstentionCounts, Metric};
use tri_core::gateway::{Gateway, Offline, TranscriptCache, Transport};
use tri_core::property::{eval, parse_term, AngelicFraction, Env, EvalConfig, EvalResult, NoPrograms};
use tri_core::run::{run_records, RunConfig, RunSummary, Strategy};

/// Status codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Corpus = 5,
    Run = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Outcome of a property evaluation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriTruth {
    False = 0,
    True = 1,
    Angelic = 2,
    Demonic = 3,
    Undefined = 4,
}

/// Select-or-abstain confusion counts.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TriCounts {
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    pub n4: u64,
    pub n5: u64,
}

/// Metrics of a strategy; `NAN` marks an undefined `0/0` ratio.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TriMetrics {
    pub reliable_accuracy: f64,
    pub overall_accuracy: f64,
    pub abstention_rate: f64,
    pub precision_abs: f64,
    pub recall_abs: f64,
    pub f1_abs: f64,
}

/// Borrowed view of one decision; strings belong to the report.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct TriDecisionView {
    pub problem_id: *const c_char,
    pub strategy: *const c_char,
    /// Null when the strategy abstained.
    pub class_id: *const c_char,
    /// Abstention reason, or null.
    pub reason: *const c_char,
    pub selected: bool,
}

/// A problem manifest with its transcript directory, run offline.
pub struct TriSession {
    records: Vec<ProblemRecord>,
    transcripts: Option<PathBuf>,
}

struct OwnedDecision {
    problem_id: CString,
    strategy: CString,
    class_id: Option<CString>,
    reason: Option<CString>,
    selected: bool,
}

/// Decisions and metrics of one session run.
pub struct TriReport {
    summary: RunSummary,
    decisions: Vec<OwnedDecision>,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(TriStatus, String);

impl Fail {
    fn new(status: TriStatus, e: impl std::fmt::Display) -> Fail {
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TriStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TriStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TriStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(TriStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(TriStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(TriStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn cstring(s: &str) -> CString {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed")
}

fn metric(m: Metric) -> f64 {
    m.to_f64().unwrap_or(f64::NAN)
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn tri_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tri_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a manifest. `transcripts` may be null when every problem bundles
/// its inputs and samples.
///
/// # Safety
///
/// `manifest` and a non-null `transcripts` must be NUL-terminated strings;
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tri_session_open(
    manifest: *const c_char,
    transcripts: *const c_char,
    out: *mut *mut TriSession,
) -> TriStatus {
    guard(|| {
        out_arg(out, "out")?;
        let manifest = str_arg(manifest, "manifest")?;
        let transcripts =
            if transcripts.is_null() { None } else { Some(PathBuf::from(str_arg(transcripts, "transcripts")?)) };
        let records = read_manifest(manifest.as_ref()).map_err(|e| Fail::new(TriStatus::Corpus, e))?;
        *out = Box::into_raw(Box::new(TriSession { records, transcripts }));
        Ok(())
    })
}

/// Number of problems in the session.
///
/// # Safety
///
/// `session` must be null or a live session handle.
#[no_mangle]
pub unsafe extern "C" fn tri_session_len(session: *const TriSession) -> usize {
    session.as_ref().map_or(0, |s| s.records.len())
}

/// Releases a session; null is ignored.
///
/// # Safety
///
/// `session` must be null or a handle from [`tri_session_open`] not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn tri_session_free(session: *mut TriSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Decides every problem offline. `strategies` is a comma-separated list
/// or null for all; `jobs` is the number of problems run concurrently.
/// Metrics are computed when every problem has a judge.
///
/// # Safety
///
/// `session` must be a live session handle, `strategies` null or a
/// NUL-terminated string, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tri_session_run(
    session: *const TriSession,
    strategies: *const c_char,
    jobs: usize,
    out: *mut *mut TriReport,
) -> TriStatus {
    guard(|| {
        out_arg(out, "out")?;
        let s = session.as_ref().ok_or_else(|| Fail(TriStatus::NullArgument, "session is null".into()))?;
        let mut cfg = RunConfig::new("", std::env::temp_dir().join("tri-ffi"));
        if !strategies.is_null() {
            cfg.strategies = str_arg(strategies, "strategies")?
                .split(',')
                .map(|x| x.trim().parse::<Strategy>())
                .collect::<Result<_, _>>()
                .map_err(|e| Fail::new(TriStatus::InvalidArgument, e))?;
        }
        cfg.jobs = jobs.max(1);
        cfg.metrics = s.records.iter().all(|r| r.judge.is_some() || r.builtin.is_some());
        cfg.worker_command = None;
        let transport: Box<dyn Transport> = match &s.transcripts {
            Some(dir) => Box::new(TranscriptCache::replay(dir, Offline)),
            None => Box::new(Offline),
        };
        let summary =
            run_records(&cfg, &s.records, &Gateway::new(transport)).map_err(|e| Fail::new(TriStatus::Run, e))?;
        let mut decisions = Vec::new();
        let mut json = String::new();
        for r in &summary.reports {
            for rec in r.records() {
                json += &format!("{}\n", record_json(&rec));
                decisions.push(OwnedDecision {
                    problem_id: cstring(&rec.problem_id),
                    strategy: cstring(&rec.strategy),
                    class_id: rec.class_id.as_deref().map(cstring),
                    reason: rec.reason.as_deref().map(cstring),
                    selected: rec.class_id.is_some(),
                });
            }
        }
        *out = Box::into_raw(Box::new(TriReport { summary, decisions, json: cstring(&json) }));
        Ok(())
    })
}

fn record_json(rec: &tri_core::consensus::DecisionRecord) -> String {
    serde_json::to_string(rec).expect("decision records serialize")
}

/// Number of decisions in the report (problems times strategies).
///
/// # Safety
///
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn tri_report_len(report: *const TriReport) -> usize {
    report.as_ref().map_or(0, |r| r.decisions.len())
}

/// Number of problems skipped after a soft failure.
///
/// # Safety
///
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn tri_report_errors(report: *const TriReport) -> usize {
    report.as_ref().map_or(0, |r| r.summary.errors.len())
}

/// Decision `index`, in problem order then strategy order.
///
/// # Safety
///
/// `report` must be a live report handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tri_report_get(
    report: *const TriReport,
    index: usize,
    out: *mut TriDecisionView,
) -> TriStatus {
    guard(|| {
        out_arg(out, "out")?;
        let r = report.as_ref().ok_or_else(|| Fail(TriStatus::NullArgument, "report is null".into()))?;
        let d = r
            .decisions
            .get(index)
            .ok_or_else(|| Fail(TriStatus::OutOfRange, format!("decision {index} of {}", r.decisions.len())))?;
        *out = TriDecisionView {
            problem_id: d.problem_id.as_ptr(),
            strategy: d.strategy.as_ptr(),
            class_id: d.class_id.as_ref().map_or(ptr::null(), |c| c.as_ptr()),
            reason: d.reason.as_ref().map_or(ptr::null(), |c| c.as_ptr()),
            selected: d.selected,
        };
        Ok(())
    })
}

/// Decision records as line-delimited JSON, owned by the report.
///
/// # Safety
///
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn tri_report_json(report: *const TriReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// Confusion counts and metrics of one strategy.
///
/// # Safety
///
/// `report` must be a live report handle, `strategy` a NUL-terminated
/// string, `counts` and `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tri_report_metrics(
    report: *const TriReport,
    strategy: *const c_char,
    counts: *mut TriCounts,
    out: *mut TriMetrics,
) -> TriStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| Fail(TriStatus::NullArgument, "report is null".into()))?;
        let name = str_arg(strategy, "strategy")?;
        let m = r
            .summary
            .metrics
            .iter()
            .find(|m| m.strategy == name)
            .ok_or_else(|| Fail(TriStatus::InvalidArgument, format!("no metrics for {name}")))?;
        if let Some(c) = counts.as_mut() {
            let a = m.counts;
            *c = TriCounts { n1: a.n1, n2: a.n2, n3: a.n3, n4: a.n4, n5: a.n5 };
        }
        if let Some(o) = out.as_mut() {
            *o = metrics_view(&m.counts);
        }
        Ok(())
    })
}

/// Releases a report; null is ignored.
///
/// # Safety
///
/// `report` must be null or a handle from [`tri_session_run`] not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn tri_report_free(report: *mut TriReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

fn metrics_view(c: &AbstentionCounts) -> TriMetrics {
    let m = metrics(c);
    TriMetrics {
        reliable_accuracy: metric(m.reliable_accuracy),
        overall_accuracy: metric(m.overall_accuracy),
        abstention_rate: metric(m.abstention_rate),
        precision_abs: metric(m.precision_abs),
        recall_abs: metric(m.recall_abs),
        f1_abs: metric(m.f1_abs),
    }
}

/// Metrics of arbitrary confusion counts.
///
/// # Safety
///
/// `counts` must be readable and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tri_metrics(counts: *const TriCounts, out: *mut TriMetrics) -> TriStatus {
    guard(|| {
        out_arg(out, "out")?;
        let c = counts.as_ref().ok_or_else(|| Fail(TriStatus::NullArgument, "counts is null".into()))?;
        *out = metrics_view(&AbstentionCounts { n1: c.n1, n2: c.n2, n3: c.n3, n4: c.n4, n5: c.n5 });
        Ok(())
    })
}

/// Natural-log entropy of class masses that sum to one.
///
/// # Safety
///
/// `masses` must point to `len` readable doubles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tri_entropy(masses: *const f64, len: usize, out: *mut f64) -> TriStatus {
    guard(|| {
        out_arg(out, "out")?;
        if masses.is_null() && len > 0 {
            return Err(Fail(TriStatus::NullArgument, "masses is null".into()));
        }
        let xs = if len == 0 { &[][..] } else { std::slice::from_raw_parts(masses, len) };
        if xs.iter().any(|&m| !(0.0..=1.0).contains(&m)) || (xs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Fail::new(TriStatus::InvalidArgument, "masses must lie in [0, 1] and sum to 1"));
        }
        *out = entropy(xs.iter().copied());
        Ok(())
    })
}

/// Evaluates a closed property term in s-expression form that makes no
/// program calls. The angelic fraction is `numer/denom`.
///
/// # Safety
///
/// `term` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tri_property_eval(
    term: *const c_char,
    numer: u64,
    denom: u64,
    out: *mut TriTruth,
) -> TriStatus {
    guard(|| {
        out_arg(out, "out")?;
        let src = str_arg(term, "term")?;
        let term = parse_term(src).map_err(|e| Fail::new(TriStatus::Parse, e))?;
        let angelic_fraction =
            AngelicFraction::new(numer, denom).map_err(|e| Fail::new(TriStatus::InvalidArgument, e))?;
        let ev = eval(&term, &Env::new(), &EvalConfig { angelic_fraction }, &NoPrograms)
            .map_err(|e| Fail::new(TriStatus::InvalidArgument, e))?;
        *out = match ev.result {
            EvalResult::Bool(true) => TriTruth::True,
            EvalResult::Bool(false) => TriTruth::False,
            EvalResult::Special(s) => match s {
                tri_core::Special::Angelic => TriTruth::Angelic,
                tri_core::Special::Demonic => TriTruth::Demonic,
                tri_core::Special::Undefined => TriTruth::Undefined,
            },
        };
        Ok(())
    })
}
