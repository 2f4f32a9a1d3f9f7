//! RANSAC baselines whose witnesses are assertion tests, postconditions,
//! programs for a translated problem, or programs for an off-by-one
//! perturbation of the problem.

use num_bigint::BigInt;

use crate::consensus::{cluster, ransac, AgreementMatrix, ConsensusDecision, ConsensusError, EquivalenceClass};
use crate::exec::Harness;
use crate::problem::TestInputSet;
use crate::value::{Special, Value};

/// A test case: a checker candidate called as `check(args, result)` on one
/// argument tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct TestCase {
    pub id: String,
    pub args: Vec<Value>,
}

/// Baseline witness families.
#[derive(Clone, Debug, PartialEq)]
pub enum Witnesses {
    Tests(Vec<TestCase>),
    /// Checkers called as `post(args, result)` on every test input.
    Postconditions(Vec<String>),
    /// Programs for a restated problem; agreement is equal behavior.
    Syntactic(Vec<String>),
    /// Programs for the problem whose result is the original plus one.
    OffByOne(Vec<String>),
}

impl Witnesses {
    pub fn strategy(&self) -> &'static str {
        match self {
            Witnesses::Tests(_) => "ransac-tests",
            Witnesses::Postconditions(_) => "ransac-postcondition",
            Witnesses::Syntactic(_) => "syntactic",
            Witnesses::OffByOne(_) => "off-by-one",
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Witnesses::Tests(t) => t.is_empty(),
            Witnesses::Postconditions(w) | Witnesses::Syntactic(w) | Witnesses::OffByOne(w) => w.is_empty(),
        }
    }
}

fn singletons(ids: impl IntoIterator<Item = String>) -> Vec<EquivalenceClass> {
    let ids: Vec<String> = ids.into_iter().collect();
    let n = ids.len() as u64;
    ids.into_iter()
        .map(|id| EquivalenceClass {
            id: id.clone(),
            members: vec![id.clone()],
            representative: id,
            behavior: Default::default(),
            sample_size: n,
        })
        .collect()
}

fn checker_accepts(h: &Harness, checker: &str, args: &[Value], out: Value) -> Result<bool, ConsensusError> {
    match out {
        Value::Special(Special::Demonic) => Ok(false),
        // Inputs the program rejects or tolerates are not held against it.
        Value::Special(_) => Ok(true),
        out => Ok(h.execute(checker, &[Value::tuple(args.iter().cloned()), out])?.value == Value::Bool(true)),
    }
}

fn same_behavior(p: &EquivalenceClass, q: &EquivalenceClass) -> bool {
    p.behavior == q.behavior && !p.behavior.values().any(|v| v.as_special() == Some(Special::Demonic))
}

fn plus_one(p: &EquivalenceClass, q: &EquivalenceClass) -> bool {
    p.behavior.iter().all(|(k, pv)| match (pv, q.behavior.get(k)) {
        (Value::Int(a), Some(Value::Int(b))) => *b == a + BigInt::from(1),
        (Value::Special(Special::Undefined), Some(Value::Special(Special::Undefined))) => true,
        _ => false,
    })
}

/// Agreement of each forward class with each witness class, then RANSAC.
/// Abstains when there are no witnesses.
pub fn decide_baseline(
    h: &Harness,
    forward: &[EquivalenceClass],
    witnesses: &Witnesses,
    inputs: &TestInputSet,
) -> Result<ConsensusDecision, ConsensusError> {
    let strategy = witnesses.strategy();
    if forward.is_empty() {
        return Err(ConsensusError::NoClasses);
    }
    if witnesses.is_empty() {
        return Ok(ConsensusDecision::Abstained { strategy: strategy.into(), reason: "no witnesses".into() });
    }
    let cols = match witnesses {
        Witnesses::Tests(t) => singletons(t.iter().map(|t| t.id.clone())),
        Witnesses::Postconditions(ids) => singletons(ids.iter().cloned()),
        Witnesses::Syntactic(ids) | Witnesses::OffByOne(ids) => cluster(h, ids, inputs)?,
    };
    let mut m = AgreementMatrix::new(
        forward.iter().map(|c| c.id.clone()).collect(),
        cols.iter().map(|c| c.id.clone()).collect(),
    );
    for (i, p) in forward.iter().enumerate() {
        for (j, q) in cols.iter().enumerate() {
            let agrees = match witnesses {
                Witnesses::Tests(tests) => {
                    let t = &tests[j];
                    let out = h.execute(&p.representative, &t.args)?.value;
                    checker_accepts(h, &t.id, &t.args, out)?
                }
                Witnesses::Postconditions(_) => {
                    let mut ok = true;
                    for args in inputs.inputs() {
                        let out = h.execute(&p.representative, args)?.value;
                        if !checker_accepts(h, &q.representative, args, out)? {
                            ok = false;
                            break;
                        }
                    }
                    ok
                }
                Witnesses::Syntactic(_) => same_behavior(p, q),
                Witnesses::OffByOne(_) => plus_one(p, q),
            };
            m.set(i, j, agrees);
        }
    }
    let sizes: Vec<u64> = forward.iter().map(EquivalenceClass::size).collect();
    let witness_sizes: Vec<u64> = cols.iter().map(EquivalenceClass::size).collect();
    let n: u64 = sizes.iter().sum();
    ransac(&m, &sizes, &witness_sizes, n, strategy)
}
