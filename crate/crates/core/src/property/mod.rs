//! Hyperproperty terms and their evaluation under special-value semantics.
//!
//! Programs may answer with special values: `Undefined` for rejected
//! inputs, `Demonic` for failures, and `Angelic` for tolerated gaps. The
//! evaluator extends equality, membership and the logical connectives to
//! these values and decides universal quantification with a threshold on
//! the number of angelic branches.
//!
//! Strength order of specials: `Demonic > Angelic > Undefined`.
//!
//! | construct            | rule                                                       |
//! |----------------------|------------------------------------------------------------|
//! | `p(t..)`             | a special argument is the result (strongest if several)    |
//! | `tolerate(t)`        | `Undefined ↦ Angelic`, identity otherwise                  |
//! | `a = b`              | `D` if either is `D`; `True` if both `U`; `A` if either is `A`; `U` if either is `U`; structural otherwise |
//! | `v ∈ s`              | both `U` ⇒ `True`; any special ⇒ strongest; full set ⇒ membership; subset ⇒ `True` on hit, `A` on miss |
//! | `a ∨ b`, `∧`, `¬`, `⇒` | `D` dominates, then `A`, then `U`; boolean otherwise      |
//! | `∀ v ∈ s. body`      | `True` iff every branch is `True` or `A` and #A < ⌈f·|s|⌉; a special domain `s` gives `s = A` |

mod sexpr;

use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::exec::{ExecError, Harness};
use crate::value::{strongest, SetKind, Special, Value};

pub use sexpr::{parse_term, ParseError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    Unbound(String),
    #[error("quantifier domain is not a set: {0}")]
    DomainNotASet(String),
    #[error("cannot bind {value} to pattern {binder}")]
    BinderMismatch { binder: String, value: String },
    #[error("top-level term produced a non-boolean value {0}")]
    NotBoolean(String),
    #[error("not a quantifier")]
    NotForAll,
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// Calls candidate programs on behalf of the evaluator.
pub trait Executor {
    fn call(&self, candidate: &str, args: &[Value]) -> Result<Value, EvalError>;
}

impl Executor for Harness {
    fn call(&self, candidate: &str, args: &[Value]) -> Result<Value, EvalError> {
        Ok(self.execute(candidate, args)?.value)
    }
}

/// Fraction of quantifier branches that may be angelic, in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AngelicFraction(Ratio<u64>);

impl AngelicFraction {
    pub fn new(numer: u64, denom: u64) -> Result<Self, String> {
        if denom == 0 || numer == 0 || numer > denom {
            return Err(format!("angelic fraction {numer}/{denom} must lie in (0, 1]"));
        }
        Ok(AngelicFraction(Ratio::new(numer, denom)))
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    /// `ceil(f * n)`.
    pub fn threshold(&self, domain_size: usize) -> usize {
        let n = domain_size as u64 * self.0.numer();
        n.div_ceil(*self.0.denom()) as usize
    }
}

impl Default for AngelicFraction {
    fn default() -> Self {
        AngelicFraction(Ratio::new(1, 3))
    }
}

impl fmt::Display for AngelicFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl std::str::FromStr for AngelicFraction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        let n: u64 = n.trim().parse().map_err(|_| format!("bad fraction {s:?}"))?;
        let d: u64 = d.trim().parse().map_err(|_| format!("bad fraction {s:?}"))?;
        AngelicFraction::new(n, d)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalConfig {
    pub angelic_fraction: AngelicFraction,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Binder {
    Var(String),
    /// Destructures a tuple element of the domain.
    Tuple(Vec<String>),
}

impl fmt::Display for Binder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binder::Var(v) => f.write_str(v),
            Binder::Tuple(vs) => write!(f, "({})", vs.join(" ")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    Term(Box<Term>),
    Explicit(Vec<Value>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Const(Value),
    Var(String),
    Call(String, Vec<Term>),
    /// Applies a candidate to every element of a sequence.
    Map(String, Box<Term>),
    Tolerate(Box<Term>),
    Eq(Box<Term>, Box<Term>),
    In(Box<Term>, Box<Term>),
    Or(Box<Term>, Box<Term>),
    And(Box<Term>, Box<Term>),
    Not(Box<Term>),
    Implies(Box<Term>, Box<Term>),
    ForAll {
        binder: Binder,
        domain: Domain,
        body: Box<Term>,
    },
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn call(candidate: &str, args: Vec<Term>) -> Term {
        Term::Call(candidate.to_string(), args)
    }

    pub fn tolerate(t: Term) -> Term {
        Term::Tolerate(Box::new(t))
    }

    pub fn eq(a: Term, b: Term) -> Term {
        Term::Eq(Box::new(a), Box::new(b))
    }

    pub fn member(elem: Term, set: Term) -> Term {
        Term::In(Box::new(elem), Box::new(set))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(t: Term) -> Term {
        Term::Not(Box::new(t))
    }

    pub fn or(a: Term, b: Term) -> Term {
        Term::Or(Box::new(a), Box::new(b))
    }

    pub fn and(a: Term, b: Term) -> Term {
        Term::And(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Term, b: Term) -> Term {
        Term::Implies(Box::new(a), Box::new(b))
    }

    /// Right-nested conjunction; `None` for an empty list.
    pub fn and_all(terms: Vec<Term>) -> Option<Term> {
        terms.into_iter().rev().reduce(|acc, t| Term::and(t, acc))
    }

    pub fn forall(binder: Binder, domain: Term, body: Term) -> Term {
        Term::ForAll { binder, domain: Domain::Term(Box::new(domain)), body: Box::new(body) }
    }

    pub fn forall_in(binder: Binder, values: Vec<Value>, body: Term) -> Term {
        Term::ForAll { binder, domain: Domain::Explicit(values), body: Box::new(body) }
    }
}

/// Branch tallies of a quantifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForAllCounts {
    pub holds: usize,
    pub angelic: usize,
    pub fails: usize,
    pub demonic: usize,
    pub undefined: usize,
    pub domain_size: usize,
    pub threshold: usize,
}

impl ForAllCounts {
    /// The quantifier verdict implied by the counts.
    pub fn verdict(&self) -> bool {
        if self.domain_size == 0 {
            return true;
        }
        self.fails + self.demonic + self.undefined == 0 && self.angelic < self.threshold
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceStep {
    /// Index of the first conjunct that did not hold, counted along a
    /// right-nested conjunction.
    Conjunct(usize),
    /// First quantifier branch that did not hold.
    Branch { binder: Binder, value: Value, outcome: Value },
    /// Every branch held or was angelic, but too many were angelic.
    ThresholdBreach { angelic: usize, threshold: usize },
    /// The quantifier domain was itself a special value.
    SpecialDomain(Special),
}

/// Path to the first failure found while evaluating.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    /// Tallies of every quantifier on the path, outermost first.
    pub counts: Vec<ForAllCounts>,
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .steps
            .iter()
            .map(|s| match s {
                TraceStep::Conjunct(i) => format!("conjunct {i}"),
                TraceStep::Branch { binder, value, outcome } => format!("{binder} = {value} gives {outcome}"),
                TraceStep::ThresholdBreach { angelic, threshold } => {
                    format!("{angelic} angelic branches, threshold {threshold}")
                }
                TraceStep::SpecialDomain(s) => format!("domain is {s}"),
            })
            .collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalResult {
    Bool(bool),
    Special(Special),
}

impl EvalResult {
    pub fn is_true(&self) -> bool {
        *self == EvalResult::Bool(true)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub result: EvalResult,
    pub trace: Option<Trace>,
}

pub type Env = HashMap<String, Value>;

struct Evaluator<'a, E: Executor + ?Sized> {
    exec: &'a E,
    cfg: EvalConfig,
}

enum Class {
    True,
    False,
    Spec(Special),
}

fn classify(v: &Value) -> Class {
    match v {
        Value::Bool(true) => Class::True,
        Value::Bool(false) => Class::False,
        Value::Special(s) => Class::Spec(*s),
        // A connective over a non-boolean program output is a program fault.
        _ => Class::Spec(Special::Demonic),
    }
}

fn connective(a: &Value, b: &Value, op: fn(bool, bool) -> bool) -> Value {
    let specials: Vec<Special> = [a, b]
        .iter()
        .filter_map(|v| match classify(v) {
            Class::Spec(s) => Some(s),
            _ => None,
        })
        .collect();
    if let Ok(s) = strongest(&specials) {
        return Value::Special(s);
    }
    let truth = |v: &Value| matches!(classify(v), Class::True);
    Value::Bool(op(truth(a), truth(b)))
}

fn negate(v: &Value) -> Value {
    match classify(v) {
        Class::True => Value::Bool(false),
        Class::False => Value::Bool(true),
        Class::Spec(s) => Value::Special(s),
    }
}

fn equality(a: &Value, b: &Value) -> Value {
    match (a.as_special(), b.as_special()) {
        (Some(Special::Demonic), _) | (_, Some(Special::Demonic)) => Value::DEMONIC,
        (Some(Special::Undefined), Some(Special::Undefined)) => Value::Bool(true),
        (Some(Special::Angelic), _) | (_, Some(Special::Angelic)) => Value::ANGELIC,
        (Some(Special::Undefined), _) | (_, Some(Special::Undefined)) => Value::UNDEFINED,
        (None, None) => structural_eq(a, b),
    }
}

/// Equality on non-special values. A subset-marked set equals another set
/// only up to what its carried elements can witness.
fn structural_eq(a: &Value, b: &Value) -> Value {
    match (a, b) {
        (Value::Set(SetKind::Subset, x), Value::Set(SetKind::Full, y))
        | (Value::Set(SetKind::Full, y), Value::Set(SetKind::Subset, x)) => {
            if x.iter().all(|v| y.contains(v)) {
                Value::ANGELIC
            } else {
                Value::Bool(false)
            }
        }
        (Value::Set(SetKind::Subset, _), Value::Set(SetKind::Subset, _)) => Value::ANGELIC,
        _ => Value::Bool(a == b),
    }
}

fn membership(elem: &Value, container: &Value) -> Result<Value, EvalError> {
    match (elem.as_special(), container.as_special()) {
        (Some(Special::Undefined), Some(Special::Undefined)) => return Ok(Value::Bool(true)),
        (Some(x), Some(y)) => return Ok(Value::Special(x.max(y))),
        (Some(x), None) | (None, Some(x)) => return Ok(Value::Special(x)),
        (None, None) => {}
    }
    Ok(match container {
        Value::Set(SetKind::Full, s) => Value::Bool(s.contains(elem)),
        Value::Set(SetKind::Subset, s) => {
            if s.contains(elem) {
                Value::Bool(true)
            } else {
                Value::ANGELIC
            }
        }
        Value::Seq(items) => Value::Bool(items.contains(elem)),
        // Membership in something that is not a collection: the program
        // producing it misbehaved.
        _ => Value::DEMONIC,
    })
}

fn bind(env: &mut Env, binder: &Binder, value: &Value) -> Result<(), EvalError> {
    match binder {
        Binder::Var(name) => {
            env.insert(name.clone(), value.clone());
            Ok(())
        }
        Binder::Tuple(names) => match value {
            Value::Tuple(items) | Value::Seq(items) if items.len() == names.len() => {
                for (n, v) in names.iter().zip(items) {
                    env.insert(n.clone(), v.clone());
                }
                Ok(())
            }
            _ => Err(EvalError::BinderMismatch { binder: binder.to_string(), value: value.to_string() }),
        },
    }
}

struct Outcome {
    value: Value,
    trace: Option<Trace>,
}

impl Outcome {
    fn plain(value: Value) -> Self {
        Outcome { value, trace: None }
    }
}

enum DomainItems {
    Items(Vec<Value>),
    Special(Special),
}

impl<E: Executor + ?Sized> Evaluator<'_, E> {
    fn value(&self, t: &Term, env: &mut Env) -> Result<Value, EvalError> {
        Ok(self.eval(t, env)?.value)
    }

    fn eval(&self, t: &Term, env: &mut Env) -> Result<Outcome, EvalError> {
        Ok(match t {
            Term::Const(v) => Outcome::plain(v.clone()),
            Term::Var(name) => Outcome::plain(env.get(name).cloned().ok_or_else(|| EvalError::Unbound(name.clone()))?),
            Term::Call(candidate, args) => {
                let args = args.iter().map(|a| self.value(a, env)).collect::<Result<Vec<_>, _>>()?;
                Outcome::plain(self.apply(candidate, &args)?)
            }
            Term::Map(candidate, seq) => {
                let seq = self.value(seq, env)?;
                Outcome::plain(match seq {
                    Value::Special(s) => Value::Special(s),
                    Value::Seq(items) => {
                        let outs = items
                            .iter()
                            .map(|i| self.apply(candidate, std::slice::from_ref(i)))
                            .collect::<Result<Vec<_>, _>>()?;
                        let specials: Vec<Special> = outs.iter().filter_map(Value::as_special).collect();
                        match strongest(&specials) {
                            Ok(s) => Value::Special(s),
                            Err(_) => Value::Seq(outs),
                        }
                    }
                    _ => Value::DEMONIC,
                })
            }
            Term::Tolerate(inner) => Outcome::plain(match self.value(inner, env)? {
                Value::Special(Special::Undefined) => Value::ANGELIC,
                v => v,
            }),
            Term::Eq(a, b) => {
                let a = self.value(a, env)?;
                let b = self.value(b, env)?;
                Outcome::plain(equality(&a, &b))
            }
            Term::In(e, s) => {
                let e = self.value(e, env)?;
                let s = self.value(s, env)?;
                Outcome::plain(membership(&e, &s)?)
            }
            Term::Or(a, b) => {
                let a = self.value(a, env)?;
                let b = self.value(b, env)?;
                Outcome::plain(connective(&a, &b, |x, y| x || y))
            }
            Term::And(a, b) => {
                let left = self.eval(a, env)?;
                let right = self.eval(b, env)?;
                let value = connective(&left.value, &right.value, |x, y| x && y);
                let trace = if value == Value::Bool(true) {
                    None
                } else if left.value != Value::Bool(true) {
                    Some(prefix(TraceStep::Conjunct(0), left.trace))
                } else {
                    // Shift conjunct indices along a right-nested chain.
                    let mut tr = right.trace.unwrap_or_default();
                    match tr.steps.first_mut() {
                        Some(TraceStep::Conjunct(i)) if matches!(**b, Term::And(..)) => *i += 1,
                        _ => tr.steps.insert(0, TraceStep::Conjunct(1)),
                    }
                    Some(tr)
                };
                Outcome { value, trace }
            }
            Term::Not(a) => Outcome::plain(negate(&self.value(a, env)?)),
            Term::Implies(a, b) => {
                let a = self.value(a, env)?;
                let b = self.value(b, env)?;
                Outcome::plain(connective(&negate(&a), &b, |x, y| x || y))
            }
            Term::ForAll { binder, domain, body } => {
                let (counts, trace) = self.forall(binder, domain, body, env)?;
                let value = Value::Bool(counts.map_or_else(|| trace.is_none(), |c| c.verdict()));
                Outcome { value, trace }
            }
        })
    }

    fn apply(&self, candidate: &str, args: &[Value]) -> Result<Value, EvalError> {
        let specials: Vec<Special> = args.iter().filter_map(Value::as_special).collect();
        if let Ok(s) = strongest(&specials) {
            return Ok(Value::Special(s));
        }
        // Nested specials or subset markers cannot be passed to a program.
        if args.iter().any(|a| crate::value::canonical_encode(a).is_err()) {
            return Ok(Value::DEMONIC);
        }
        self.exec.call(candidate, args)
    }

    fn domain_items(&self, domain: &Domain, env: &mut Env) -> Result<DomainItems, EvalError> {
        match domain {
            Domain::Explicit(items) => Ok(DomainItems::Items(items.clone())),
            Domain::Term(t) => match self.value(t, env)? {
                Value::Special(s) => Ok(DomainItems::Special(s)),
                Value::Set(_, s) => Ok(DomainItems::Items(s.into_vec())),
                Value::Seq(items) => Ok(DomainItems::Items(items)),
                other => Err(EvalError::DomainNotASet(other.to_string())),
            },
        }
    }

    /// Returns the tallies (absent for a special domain) and the failure
    /// trace, if any.
    fn forall(
        &self,
        binder: &Binder,
        domain: &Domain,
        body: &Term,
        env: &mut Env,
    ) -> Result<(Option<ForAllCounts>, Option<Trace>), EvalError> {
        let items = match self.domain_items(domain, env)? {
            DomainItems::Special(Special::Angelic) => return Ok((None, None)),
            DomainItems::Special(s) => {
                let trace = Trace { steps: vec![TraceStep::SpecialDomain(s)], counts: vec![] };
                return Ok((None, Some(trace)));
            }
            DomainItems::Items(items) => items,
        };
        let mut counts = ForAllCounts {
            domain_size: items.len(),
            threshold: self.cfg.angelic_fraction.threshold(items.len()),
            ..Default::default()
        };
        let mut first_failure: Option<Trace> = None;
        let mut scoped = env.clone();
        for item in &items {
            bind(&mut scoped, binder, item)?;
            let out = self.eval(body, &mut scoped)?;
            let failed = match &out.value {
                Value::Bool(true) => {
                    counts.holds += 1;
                    false
                }
                Value::Special(Special::Angelic) => {
                    counts.angelic += 1;
                    false
                }
                Value::Special(Special::Demonic) => {
                    counts.demonic += 1;
                    true
                }
                Value::Special(Special::Undefined) => {
                    counts.undefined += 1;
                    true
                }
                _ => {
                    counts.fails += 1;
                    true
                }
            };
            if failed && first_failure.is_none() {
                let mut tr = out.trace.unwrap_or_default();
                tr.steps.insert(
                    0,
                    TraceStep::Branch { binder: binder.clone(), value: item.clone(), outcome: out.value.clone() },
                );
                first_failure = Some(tr);
            }
        }
        let trace = if counts.verdict() {
            None
        } else {
            let mut tr = first_failure.unwrap_or_else(|| Trace {
                steps: vec![TraceStep::ThresholdBreach { angelic: counts.angelic, threshold: counts.threshold }],
                counts: vec![],
            });
            tr.counts.insert(0, counts);
            Some(tr)
        };
        Ok((Some(counts), trace))
    }
}

fn prefix(step: TraceStep, trace: Option<Trace>) -> Trace {
    let mut tr = trace.unwrap_or_default();
    tr.steps.insert(0, step);
    tr
}

/// Evaluates a closed boolean term.
pub fn eval<E: Executor + ?Sized>(term: &Term, env: &Env, cfg: &EvalConfig, exec: &E) -> Result<Evaluation, EvalError> {
    let ev = Evaluator { exec, cfg: *cfg };
    let mut env = env.clone();
    let out = ev.eval(term, &mut env)?;
    let result = match out.value {
        Value::Bool(b) => EvalResult::Bool(b),
        Value::Special(s) => EvalResult::Special(s),
        other => return Err(EvalError::NotBoolean(other.to_string())),
    };
    Ok(Evaluation { result, trace: out.trace })
}

/// Evaluates any term to a value (used for diagnostics and tests).
pub fn eval_value<E: Executor + ?Sized>(
    term: &Term,
    env: &Env,
    cfg: &EvalConfig,
    exec: &E,
) -> Result<Value, EvalError> {
    let ev = Evaluator { exec, cfg: *cfg };
    let mut env = env.clone();
    ev.value(term, &mut env)
}

/// Branch tallies behind a quantifier's verdict.
pub fn eval_forall_counts<E: Executor + ?Sized>(
    term: &Term,
    env: &Env,
    cfg: &EvalConfig,
    exec: &E,
) -> Result<ForAllCounts, EvalError> {
    let Term::ForAll { binder, domain, body } = term else {
        return Err(EvalError::NotForAll);
    };
    let ev = Evaluator { exec, cfg: *cfg };
    let mut env = env.clone();
    match ev.forall(binder, domain, body, &mut env)? {
        (Some(c), _) => Ok(c),
        (None, _) => Err(EvalError::DomainNotASet("special value".into())),
    }
}

/// An executor with no programs, for terms that make no calls.
pub struct NoPrograms;

impl Executor for NoPrograms {
    fn call(&self, candidate: &str, _args: &[Value]) -> Result<Value, EvalError> {
        Err(EvalError::Exec(ExecError::UnknownCandidate(candidate.to_string())))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&sexpr::render(self))
    }
}

#[cfg(test)]
mod tests;
