//! Properties relating a program to a witness solving a transformed
//! problem, and the two-stage enumerator cascade.
//!
//! Conventions: the original problem has parameters `x0..xn`. An inverse
//! for argument `k` takes the same arguments with `xk` replaced by the
//! output, so `q(x0, .., o, .., xn)`. Full schemes are the `n = 1` case.
//!
//! | scheme      | clauses (over test inputs `I` and observed outputs `O'`)              |
//! |-------------|-----------------------------------------------------------------------|
//! | FWD-INV     | `∀x. q(tol(p(x))) = xk`; `∀(o, o', rest). ¬(q(o, rest) = q(o', rest))` |
//! | FWD-SINV    | `∀x. xk ∈ q(tol(p(x))) ∧ ∀y ∈ q(tol(p(x))). p(x[k↦y]) = p(x)`; `∀(o, o', rest). ∀y ∈ q(o). ¬(y ∈ q(o'))` |
//! | ENUM-SINV   | `∀x. def(p(x)) ∧ ∀o ∈ tol(p(x)). xk ∈ q(o)`; `∀(o, rest) ∈ O'. ∀y ∈ tol(q(o)). o ∈ p(x[k↦y])` |
//! | FWD-ENUM    | `∀x. p(x) ∈ e(x)`                                                      |
//! | STREAM      | inner scheme on `p° = i ↦ head(p([i]))` over the elements, and `∀s. p(s) = map(p°, s)` |
//!
//! `tol` is [`Term::Tolerate`]; `def(v)` holds on every normal value and is
//! the special itself otherwise, so an enumerator rejecting an input
//! counts as an angelic branch.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Harness;
use crate::problem::{Backend, CandidateProgram, Provenance, TestInputSet};
use crate::property::{eval, Binder, Env, EvalConfig, EvalError, EvalResult, ForAllCounts, Term, Trace, TraceStep};
use crate::value::{canonical_encode, CanonicalKey, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TriError {
    #[error("scheme {scheme} does not fit a signature with {arity} parameter(s)")]
    SchemeMismatch { scheme: String, arity: usize },
    #[error("no test inputs")]
    NoInputs,
    #[error("stream inputs must be single sequences")]
    NotAStream,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheme {
    FullFwdInv,
    PartialFwdInv { arg: usize },
    FullFwdSinv,
    PartialFwdSinv { arg: usize },
    FullEnumSinv,
    PartialEnumSinv { arg: usize },
    Stream { inner: Box<Scheme> },
    FwdEnum,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::FullFwdInv => f.write_str("full-fwd-inv"),
            Scheme::PartialFwdInv { arg } => write!(f, "partial-fwd-inv[{arg}]"),
            Scheme::FullFwdSinv => f.write_str("full-fwd-sinv"),
            Scheme::PartialFwdSinv { arg } => write!(f, "partial-fwd-sinv[{arg}]"),
            Scheme::FullEnumSinv => f.write_str("full-enum-sinv"),
            Scheme::PartialEnumSinv { arg } => write!(f, "partial-enum-sinv[{arg}]"),
            Scheme::Stream { inner } => write!(f, "stream({inner})"),
            Scheme::FwdEnum => f.write_str("fwd-enum"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Family {
    Inv,
    Sinv,
    EnumSinv,
}

impl Scheme {
    pub fn stream(inner: Scheme) -> Scheme {
        Scheme::Stream { inner: Box::new(inner) }
    }

    /// Scheme family and inverted argument, checked against the arity of
    /// the original signature.
    fn shape(&self, arity: usize) -> Result<Option<(Family, usize)>, TriError> {
        let mismatch = || TriError::SchemeMismatch { scheme: self.to_string(), arity };
        let (family, arg, partial) = match self {
            Scheme::FullFwdInv => (Family::Inv, 0, false),
            Scheme::PartialFwdInv { arg } => (Family::Inv, *arg, true),
            Scheme::FullFwdSinv => (Family::Sinv, 0, false),
            Scheme::PartialFwdSinv { arg } => (Family::Sinv, *arg, true),
            Scheme::FullEnumSinv => (Family::EnumSinv, 0, false),
            Scheme::PartialEnumSinv { arg } => (Family::EnumSinv, *arg, true),
            Scheme::FwdEnum => return Ok(None),
            Scheme::Stream { .. } => return Err(mismatch()),
        };
        let fits = if partial { arity >= 2 && arg < arity } else { arity == 1 };
        if fits {
            Ok(Some((family, arg)))
        } else {
            Err(mismatch())
        }
    }

    /// Is the program side an enumerator (set of outputs per input)?
    pub fn enumerates(&self) -> bool {
        match self {
            Scheme::FullEnumSinv | Scheme::PartialEnumSinv { .. } => true,
            Scheme::Stream { inner } => inner.enumerates(),
            _ => false,
        }
    }
}

/// An output of the program side together with the input producing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub output: Value,
    pub args: Vec<Value>,
}

fn vars(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

fn var_terms(names: &[String]) -> Vec<Term> {
    names.iter().map(|n| Term::var(n)).collect()
}

fn with_at(mut args: Vec<Term>, k: usize, t: Term) -> Vec<Term> {
    args[k] = t;
    args
}

/// True on normal values; the special itself otherwise.
fn defined(t: Term) -> Term {
    let is_none = Term::eq(t, Term::Const(Value::None));
    Term::or(is_none.clone(), Term::not(is_none))
}

fn input_domain(body: Term, names: &[String], inputs: &TestInputSet) -> Term {
    Term::forall_in(
        Binder::Tuple(names.to_vec()),
        inputs.inputs().iter().map(|a| Value::Tuple(a.clone())).collect(),
        body,
    )
}

fn rest_of(args: &[Value], k: usize) -> Vec<Value> {
    args.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v.clone()).collect()
}

fn key(v: &Value) -> Option<CanonicalKey> {
    canonical_encode(v).ok()
}

/// Distinct `(o, rest)` pairs among normal observations.
fn distinct_outputs(observed: &[Observation], k: usize) -> Vec<(Value, Vec<Value>)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for ob in observed {
        let rest = rest_of(&ob.args, k);
        let mut tuple = vec![ob.output.clone()];
        tuple.extend(rest.iter().cloned());
        let Some(kk) = key(&Value::Tuple(tuple)) else {
            continue;
        };
        if seen.insert(kk) {
            out.push((ob.output.clone(), rest));
        }
    }
    out
}

/// `(o, o', rest..)` tuples with `o ≠ o'`; unordered for full schemes.
fn output_pairs(observed: &[Observation], k: usize, partial: bool) -> Vec<Value> {
    let pairs = distinct_outputs(observed, k);
    let mut outputs: Vec<(CanonicalKey, Value)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (o, _) in &pairs {
        if let Some(kk) = key(o) {
            if seen.insert(kk.clone()) {
                outputs.push((kk, o.clone()));
            }
        }
    }
    let mut out = Vec::new();
    for (o, rest) in &pairs {
        let ko = key(o).expect("filtered above");
        for (ko2, o2) in &outputs {
            let keep = if partial { *ko2 != ko } else { *ko2 > ko };
            if keep {
                let mut t = vec![o.clone(), o2.clone()];
                t.extend(rest.iter().cloned());
                out.push(Value::Tuple(t));
            }
        }
    }
    out
}

fn pair_binder(names: &[String], k: usize) -> (Binder, Vec<Term>, Vec<Term>) {
    let rest: Vec<String> = names.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, n)| n.clone()).collect();
    let mut pattern = vec!["o".to_string(), "o2".to_string()];
    pattern.extend(rest.iter().cloned());
    let base = var_terms(names);
    let q1 = with_at(base.clone(), k, Term::var("o"));
    let q2 = with_at(base, k, Term::var("o2"));
    (Binder::Tuple(pattern), q1, q2)
}

/// Builds the agreement property of `p` (program side) and `q` (witness).
pub fn build_property(
    scheme: &Scheme,
    p: &str,
    q: &str,
    inputs: &TestInputSet,
    observed: &[Observation],
) -> Result<Term, TriError> {
    if inputs.is_empty() {
        return Err(TriError::NoInputs);
    }
    let arity = inputs.arity();
    if let Scheme::Stream { inner } = scheme {
        return build_stream(inner, p, q, inputs, observed);
    }
    let names = vars(arity);
    let xs = var_terms(&names);
    let p_of = |args: Vec<Term>| Term::call(p, args);
    let q_of = |args: Vec<Term>| Term::call(q, args);
    let Some((family, k)) = scheme.shape(arity)? else {
        // FWD-ENUM: q is the enumerator.
        let body = Term::member(p_of(xs.clone()), q_of(xs));
        return Ok(input_domain(body, &names, inputs));
    };
    let partial = arity > 1;
    let xk = Term::var(&names[k]);
    let tol_p = Term::tolerate(p_of(xs.clone()));
    let clauses = match family {
        Family::Inv => {
            let round_trip = Term::eq(q_of(with_at(xs.clone(), k, tol_p)), xk);
            let (binder, q1, q2) = pair_binder(&names, k);
            let injective =
                Term::forall_in(binder, output_pairs(observed, k, partial), Term::not(Term::eq(q_of(q1), q_of(q2))));
            vec![input_domain(round_trip, &names, inputs), injective]
        }
        Family::Sinv => {
            let preimage = q_of(with_at(xs.clone(), k, tol_p));
            let l1 = Term::member(xk, preimage.clone());
            let l2 = Term::forall(
                Binder::Var("y".into()),
                preimage,
                Term::eq(p_of(with_at(xs.clone(), k, Term::var("y"))), p_of(xs.clone())),
            );
            let (binder, q1, q2) = pair_binder(&names, k);
            let l3 = Term::forall_in(
                binder,
                output_pairs(observed, k, partial),
                Term::forall(Binder::Var("y".into()), q_of(q1), Term::not(Term::member(Term::var("y"), q_of(q2)))),
            );
            vec![input_domain(Term::and(l1, l2), &names, inputs), l3]
        }
        Family::EnumSinv => {
            let forward = Term::and(
                defined(tol_p.clone()),
                Term::forall(
                    Binder::Var("o".into()),
                    tol_p,
                    Term::member(xk, q_of(with_at(xs.clone(), k, Term::var("o")))),
                ),
            );
            let rest: Vec<String> = names.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, n)| n.clone()).collect();
            let mut pattern = vec!["o".to_string()];
            pattern.extend(rest);
            let domain = distinct_outputs(observed, k)
                .into_iter()
                .map(|(o, rest)| {
                    let mut t = vec![o];
                    t.extend(rest);
                    Value::Tuple(t)
                })
                .collect();
            let backward = Term::forall_in(
                Binder::Tuple(pattern),
                domain,
                Term::forall(
                    Binder::Var("y".into()),
                    Term::tolerate(q_of(with_at(xs.clone(), k, Term::var("o")))),
                    Term::member(Term::var("o"), p_of(with_at(xs, k, Term::var("y")))),
                ),
            );
            vec![input_domain(forward, &names, inputs), backward]
        }
    };
    Ok(Term::and_all(clauses).expect("at least one clause"))
}

/// Id of the lifted candidate `i ↦ head(p([i]))`.
pub fn lifted_id(p: &str) -> String {
    format!("{p}°")
}

/// The element-wise program derived from a stream program.
pub fn stream_lift(p: &CandidateProgram) -> CandidateProgram {
    CandidateProgram {
        id: lifted_id(&p.id),
        problem_id: format!("{}°", p.problem_id),
        backend: Backend::StreamLift { inner: p.id.clone() },
    }
}

/// A candidate dispatching on the constructor tag of argument
/// `output_arg`; the `none` branch does not receive that argument.
pub fn compose_union_inverse(
    id: impl Into<String>,
    problem_id: impl Into<String>,
    output_arg: usize,
    branches: BTreeMap<String, String>,
) -> CandidateProgram {
    CandidateProgram {
        id: id.into(),
        problem_id: problem_id.into(),
        backend: Backend::UnionInverse { output_arg, branches },
    }
}

/// Elements of single-sequence stream inputs, as unary inputs.
pub fn stream_elements(inputs: &TestInputSet) -> Result<TestInputSet, TriError> {
    let mut elems = Vec::new();
    for args in inputs.inputs() {
        match args.as_slice() {
            [Value::Seq(items)] => elems.extend(items.iter().map(|v| vec![v.clone()])),
            _ => return Err(TriError::NotAStream),
        }
    }
    TestInputSet::new(format!("{}°", inputs.problem_id()), elems, Provenance::Fixture).map_err(|_| TriError::NoInputs)
}

fn build_stream(
    inner: &Scheme,
    p: &str,
    q: &str,
    inputs: &TestInputSet,
    observed: &[Observation],
) -> Result<Term, TriError> {
    if matches!(inner, Scheme::Stream { .. }) {
        return Err(TriError::SchemeMismatch {
            scheme: Scheme::stream(inner.clone()).to_string(),
            arity: inputs.arity(),
        });
    }
    let elements = stream_elements(inputs)?;
    let lifted = lifted_id(p);
    let phi = build_property(inner, &lifted, q, &elements, observed)?;
    let seq = Term::var("s");
    let pointwise = Term::forall_in(
        Binder::Tuple(vec!["s".into()]),
        inputs.inputs().iter().map(|a| Value::Tuple(a.clone())).collect(),
        Term::eq(Term::call(p, vec![seq.clone()]), Term::Map(lifted, Box::new(seq))),
    );
    Ok(Term::and(phi, pointwise))
}

/// Runs the program side over the inputs and collects its normal
/// outputs (elements of the output sets, for enumerators).
pub fn observe(h: &Harness, p: &str, inputs: &TestInputSet, enumerates: bool) -> Result<Vec<Observation>, TriError> {
    let mut out = Vec::new();
    for args in inputs.inputs() {
        let v = h.execute(p, args).map_err(EvalError::from)?.value;
        if enumerates {
            if let Value::Set(_, items) = v {
                out.extend(items.iter().map(|o| Observation { output: o.clone(), args: args.clone() }));
            }
        } else if !v.is_special() {
            out.push(Observation { output: v, args: args.clone() });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    /// The quantified value of the outermost failing branch, if any.
    pub input: Option<Value>,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgreementVerdict {
    pub agrees: bool,
    pub counterexample: Option<Counterexample>,
    pub angelic_counts: Vec<ForAllCounts>,
    pub trace: Option<Trace>,
}

/// Line-delimited log record of one agreement check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub problem_id: String,
    pub scheme: String,
    pub p_id: String,
    pub q_id: String,
    pub agrees: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

fn verdict_of(result: EvalResult, trace: Option<Trace>) -> AgreementVerdict {
    let agrees = result.is_true();
    let counterexample = if agrees {
        None
    } else {
        let input = trace.as_ref().and_then(|t| {
            t.steps.iter().find_map(|s| match s {
                TraceStep::Branch { value, .. } => Some(value.clone()),
                _ => None,
            })
        });
        let description = match &trace {
            Some(t) => t.to_string(),
            None => format!("property evaluated to {result:?}"),
        };
        Some(Counterexample { input, description })
    };
    AgreementVerdict {
        agrees,
        counterexample,
        angelic_counts: trace.as_ref().map(|t| t.counts.clone()).unwrap_or_default(),
        trace,
    }
}

/// Checks a property built by [`build_property`] with outputs observed
/// from `p` on the inputs plus any `extra` observations.
pub fn check_agreement_with(
    h: &Harness,
    scheme: &Scheme,
    p: &str,
    q: &str,
    inputs: &TestInputSet,
    extra: &[Observation],
    cfg: &EvalConfig,
) -> Result<AgreementVerdict, TriError> {
    let mut observed = match scheme {
        Scheme::FwdEnum => Vec::new(),
        Scheme::Stream { inner } => {
            if h.candidate(&lifted_id(p)).is_none() {
                let base = h
                    .candidate(p)
                    .ok_or_else(|| EvalError::Exec(crate::exec::ExecError::UnknownCandidate(p.into())))?;
                h.register(stream_lift(&base));
            }
            observe(h, &lifted_id(p), &stream_elements(inputs)?, inner.enumerates())?
        }
        _ => observe(h, p, inputs, scheme.enumerates())?,
    };
    observed.extend(extra.iter().cloned());
    let term = build_property(scheme, p, q, inputs, &observed)?;
    match eval(&term, &Env::new(), cfg, h) {
        Ok(ev) => Ok(verdict_of(ev.result, ev.trace)),
        // A program answering with something that is not a set where one
        // is quantified over disagrees with every witness.
        Err(EvalError::DomainNotASet(what)) => Ok(AgreementVerdict {
            agrees: false,
            counterexample: Some(Counterexample { input: None, description: format!("ill-typed output {what}") }),
            angelic_counts: Vec::new(),
            trace: None,
        }),
        Err(e) => Err(e.into()),
    }
}

pub fn check_agreement(
    h: &Harness,
    scheme: &Scheme,
    p: &str,
    q: &str,
    inputs: &TestInputSet,
    cfg: &EvalConfig,
) -> Result<AgreementVerdict, TriError> {
    check_agreement_with(h, scheme, p, q, inputs, &[], cfg)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CascadeOutcome {
    pub surviving_forward: Vec<String>,
    pub surviving_enumerators: Vec<String>,
    /// Agreeing `(enumerator, set-valued inverse)` pairs of stage 1.
    pub stage1_pairs: Vec<(String, String)>,
    /// Agreeing `(forward, enumerator)` pairs of stage 2.
    pub stage2_pairs: Vec<(String, String)>,
    pub log: Vec<VerdictRecord>,
}

fn record(problem_id: &str, scheme: &Scheme, p: &str, q: &str, v: &AgreementVerdict) -> VerdictRecord {
    VerdictRecord {
        problem_id: problem_id.to_string(),
        scheme: scheme.to_string(),
        p_id: p.to_string(),
        q_id: q.to_string(),
        agrees: v.agrees,
        counterexample: v.counterexample.as_ref().map(|c| c.description.clone()),
    }
}

/// Stage 1 triangulates enumerators against set-valued inverses; stage 2
/// keeps forward programs whose outputs lie in a surviving enumerator.
///
/// `invert_arg` selects the partial scheme; `None` is the full one.
#[allow(clippy::too_many_arguments)]
pub fn cascade_enum_sinv(
    h: &Harness,
    forward: &[String],
    enumerators: &[String],
    set_inverses: &[String],
    invert_arg: Option<usize>,
    inputs: &TestInputSet,
    cfg: &EvalConfig,
) -> Result<CascadeOutcome, TriError> {
    let scheme = match invert_arg {
        Some(arg) => Scheme::PartialEnumSinv { arg },
        None => Scheme::FullEnumSinv,
    };
    let mut forward_outputs = Vec::new();
    for f in forward {
        forward_outputs.extend(observe(h, f, inputs, false)?);
    }
    let mut out = CascadeOutcome::default();
    for e in enumerators {
        for q in set_inverses {
            let v = check_agreement_with(h, &scheme, e, q, inputs, &forward_outputs, cfg)?;
            out.log.push(record(inputs.problem_id(), &scheme, e, q, &v));
            if v.agrees {
                out.stage1_pairs.push((e.clone(), q.clone()));
                if !out.surviving_enumerators.contains(e) {
                    out.surviving_enumerators.push(e.clone());
                }
            }
        }
    }
    for f in forward {
        let mut survives = false;
        for e in &out.surviving_enumerators {
            let v = check_agreement(h, &Scheme::FwdEnum, f, e, inputs, cfg)?;
            out.log.push(record(inputs.problem_id(), &Scheme::FwdEnum, f, e, &v));
            if v.agrees {
                out.stage2_pairs.push((f.clone(), e.clone()));
                survives = true;
            }
        }
        if survives {
            out.surviving_forward.push(f.clone());
        }
    }
    Ok(out)
}
