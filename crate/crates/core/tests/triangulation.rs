use std::collections::BTreeMap;

use tri_core::consensus::{decide_pipeline, PipelineSamples};
use tri_core::fixtures::{toy_inputs, toy_set, toy_shift, toy_table};
use tri_core::property::{eval, EvalConfig, Term, TraceStep};
use tri_core::triangulation::{
    build_property, cascade_enum_sinv, check_agreement, check_agreement_with, compose_union_inverse, observe,
    stream_lift, Observation, Scheme,
};
use tri_core::{CandidateProgram, ExecutionConfig, Harness, Provenance, Special, TestInputSet, Value};

fn harness(cands: impl IntoIterator<Item = CandidateProgram>) -> Harness {
    let h = Harness::new(ExecutionConfig::default()).unwrap();
    for c in cands {
        h.register(c);
    }
    h
}

fn ints(r: std::ops::RangeInclusive<i64>) -> TestInputSet {
    TestInputSet::unary("toy-next", r.map(Value::int)).unwrap()
}

fn cfg() -> EvalConfig {
    EvalConfig::default()
}

fn branch_values(steps: &[TraceStep]) -> Vec<Value> {
    steps
        .iter()
        .filter_map(|s| match s {
            TraceStep::Branch { value, .. } => Some(value.clone()),
            _ => None,
        })
        .collect()
}

#[test]
fn fwd_sinv_rejects_inexact_pair_at_one() {
    let h = harness([toy_shift("p", 1), toy_set("q", &[-1, -2])]);
    let v = check_agreement(&h, &Scheme::FullFwdSinv, "p", "q", &ints(1..=1), &cfg()).unwrap();
    assert!(!v.agrees);
    let steps = &v.trace.unwrap().steps;
    // Outer branch i = 1, inner branch i' = 0 where p(0) = 1 ≠ p(1) = 2.
    assert_eq!(branch_values(steps), vec![Value::tuple([Value::int(1)]), Value::int(0)]);
}

#[test]
fn enum_sinv_accepts_correct_pair() {
    let h = harness([toy_set("e", &[1, 2]), toy_set("q", &[-1, -2])]);
    let v = check_agreement(&h, &Scheme::FullEnumSinv, "e", "q", &toy_inputs(), &cfg()).unwrap();
    assert!(v.agrees, "{:?}", v.counterexample);
}

/// Both containment directions checked by brute force.
#[test]
fn enum_sinv_oracle_matches_brute_force() {
    let enumerate = |i: i64, offsets: &[i64]| offsets.iter().map(|d| i + d).collect::<Vec<_>>();
    let brute = |e: &[i64]| {
        let fwd = (-10..=10).all(|i| enumerate(i, e).into_iter().all(|o| [o - 1, o - 2].contains(&i)));
        let outs: Vec<i64> = (-10..=10).flat_map(|i| enumerate(i, e)).collect();
        let back = outs.iter().all(|&o| [o - 1, o - 2].iter().all(|&y| enumerate(y, e).contains(&o)));
        fwd && back
    };
    for offsets in [vec![1, 2], vec![1], vec![2], vec![0, 1, 2], vec![1, 3]] {
        let h = harness([toy_set("e", &offsets), toy_set("q", &[-1, -2])]);
        let v = check_agreement(&h, &Scheme::FullEnumSinv, "e", "q", &toy_inputs(), &cfg()).unwrap();
        assert_eq!(v.agrees, brute(&offsets), "{offsets:?}");
    }
}

#[test]
fn enum_sinv_rejects_missing_element_with_witness_two() {
    let h = harness([toy_set("e", &[1]), toy_set("q", &[-1, -2])]);
    let v = check_agreement(&h, &Scheme::FullEnumSinv, "e", "q", &toy_inputs(), &cfg()).unwrap();
    assert!(!v.agrees);
    // Restricted to the output o = 2: q(2) = {1, 0}, but 2 ∉ e(0) = {1}.
    let only_two = [Observation { output: Value::int(2), args: vec![Value::int(1)] }];
    let v = check_agreement_with(&h, &Scheme::FullEnumSinv, "e", "q", &ints(1..=1), &only_two, &cfg()).unwrap();
    assert!(!v.agrees);
    let steps = v.trace.unwrap().steps;
    assert_eq!(steps[0], TraceStep::Conjunct(1));
    assert_eq!(branch_values(&steps), vec![Value::tuple([Value::int(2)]), Value::int(0)]);
}

#[test]
fn fwd_inv_rejects_non_identity_round_trip() {
    let h = harness([toy_shift("p", 1), toy_shift("q", -2)]);
    let v = check_agreement(&h, &Scheme::FullFwdInv, "p", "q", &toy_inputs(), &cfg()).unwrap();
    assert!(!v.agrees);
    let input = v.counterexample.unwrap().input.unwrap();
    assert_eq!(input, Value::tuple([Value::int(-10)]));
}

#[test]
fn identity_agrees_with_itself() {
    let h = harness([toy_shift("id", 0)]);
    let v = check_agreement(&h, &Scheme::FullFwdInv, "id", "id", &ints(0..=9), &cfg()).unwrap();
    assert!(v.agrees);
}

/// `p(i1, i2) = i1 + i2`, invalid on the listed `i1`; `q(o, i2) = {o − i2}`.
fn partial_sinv_with_invalid(invalid: &[i64]) -> bool {
    let dom: Vec<Vec<Value>> =
        (-30..=30).flat_map(|a| (0..=2).map(move |b| vec![Value::int(a), Value::int(b)])).collect();
    let int = |v: &Value| match v {
        Value::Int(i) => i64::try_from(i).unwrap(),
        _ => unreachable!(),
    };
    let invalid = invalid.to_vec();
    let p = CandidateProgram::tabulate("p", "add", dom.iter().map(Vec::as_slice), |a| {
        let (x, y) = (int(&a[0]), int(&a[1]));
        if invalid.contains(&x) {
            Value::UNDEFINED
        } else {
            Value::int(x + y)
        }
    });
    let q = CandidateProgram::tabulate("q", "add", dom.iter().map(Vec::as_slice), |a| {
        Value::full_set([Value::int(int(&a[0]) - int(&a[1]))])
    });
    let h = harness([p, q]);
    let inputs =
        TestInputSet::new("add", (0..9).map(|a| vec![Value::int(a), Value::int(1)]), Provenance::Fixture).unwrap();
    check_agreement(&h, &Scheme::PartialFwdSinv { arg: 0 }, "p", "q", &inputs, &cfg()).unwrap().agrees
}

#[test]
fn tolerated_invalid_inputs_flip_at_the_threshold() {
    // Nine inputs and fraction 1/3: threshold 3.
    assert!(partial_sinv_with_invalid(&[]));
    assert!(partial_sinv_with_invalid(&[0, 4]));
    assert!(!partial_sinv_with_invalid(&[0, 4, 8]));
}

fn seq(xs: &[i64]) -> Value {
    Value::seq(xs.iter().map(|&x| Value::int(x)))
}

fn stream_table(id: &str, f: impl Fn(&[i64]) -> Vec<i64>) -> CandidateProgram {
    let mut inputs: Vec<Vec<i64>> = (-5..=5).map(|x| vec![x]).collect();
    inputs.push(vec![1, 2, 3]);
    inputs.push(vec![]);
    let table = inputs
        .iter()
        .map(|xs| {
            let args = [seq(xs)];
            (tri_core::value::encode_args(&args).unwrap(), seq(&f(xs)))
        })
        .collect();
    CandidateProgram::fixture(id, "incr", table)
}

#[test]
fn stream_lift_takes_the_head() {
    let p = stream_table("p", |xs| xs.iter().map(|x| x + 1).collect());
    let empty = stream_table("e", |_| vec![]);
    let h = harness([stream_lift(&p), stream_lift(&empty), p, empty]);
    assert_eq!(h.execute("p°", &[Value::int(5)]).unwrap().value, Value::int(6));
    assert_eq!(h.execute("e°", &[Value::int(5)]).unwrap().value, Value::DEMONIC);
}

#[test]
fn stream_scheme_checks_pointwise_consistency() {
    let good = stream_table("good", |xs| xs.iter().map(|x| x + 1).collect());
    // Agrees element by element but not on the whole sequence.
    let bad = stream_table("bad", |xs| {
        let mut out: Vec<i64> = xs.iter().map(|x| x + 1).collect();
        if xs.len() == 3 {
            out[2] += 1;
        }
        out
    });
    let q = toy_shift("q", -1);
    let h = harness([good, bad, q]);
    let inputs = TestInputSet::new("incr", [vec![seq(&[1, 2, 3])]], Provenance::Fixture).unwrap();
    let scheme = Scheme::stream(Scheme::FullFwdInv);
    assert!(check_agreement(&h, &scheme, "good", "q", &inputs, &cfg()).unwrap().agrees);
    let v = check_agreement(&h, &scheme, "bad", "q", &inputs, &cfg()).unwrap();
    assert!(!v.agrees);
    assert_eq!(v.trace.unwrap().steps[0], TraceStep::Conjunct(1));
}

fn union_setup() -> Harness {
    let some = CandidateProgram::fixture(
        "q/some",
        "u",
        [(tri_core::value::encode_args(&[Value::str("ab"), Value::str("a?")]).unwrap(), Value::str("some"))]
            .into_iter()
            .collect(),
    );
    let none = CandidateProgram::fixture(
        "q/none",
        "u",
        [(tri_core::value::encode_args(&[Value::str("a?")]).unwrap(), Value::str("none"))].into_iter().collect(),
    );
    let branches = BTreeMap::from([("some".into(), "q/some".into()), ("none".into(), "q/none".into())]);
    let only_none = BTreeMap::from([("none".into(), "q/none".into())]);
    harness([some, none, compose_union_inverse("q", "u", 0, branches), compose_union_inverse("q1", "u", 0, only_none)])
}

#[test]
fn union_inverse_dispatches_on_constructor() {
    let h = union_setup();
    let run = |id: &str, args: &[Value]| h.execute(id, args).unwrap().value;
    assert_eq!(run("q", &[Value::None, Value::str("a?")]), Value::str("none"));
    assert_eq!(run("q", &[Value::str("ab"), Value::str("a?")]), Value::str("some"));
    assert_eq!(run("q1", &[Value::None, Value::str("a?")]), run("q/none", &[Value::str("a?")]));
    assert_eq!(run("q1", &[Value::str("ab"), Value::str("a?")]), Value::DEMONIC);
}

fn pair_table(id: &str, f: impl Fn(i64, i64) -> Value) -> CandidateProgram {
    let dom: Vec<Vec<Value>> =
        (-6..=6).flat_map(|a| (-6..=6).map(move |b| vec![Value::int(a), Value::int(b)])).collect();
    let int = |v: &Value| match v {
        Value::Int(i) => i64::try_from(i).unwrap(),
        _ => unreachable!(),
    };
    CandidateProgram::tabulate(id, "add", dom.iter().map(Vec::as_slice), |a| f(int(&a[0]), int(&a[1])))
}

fn first_conjunct(t: Term) -> Term {
    match t {
        Term::And(l, _) => *l,
        other => panic!("not a conjunction: {other}"),
    }
}

/// The witness maps `(o, 0)` to 0 for every `o`, which the round trip
/// cannot see because the output 2 is only observed with `i2 = 1`.
#[test]
fn dropping_bijection_clauses_admits_wrong_pairs() {
    let p = pair_table("p", |a, b| Value::int(a + b));
    let q_inv = pair_table("q", |o, b| Value::int(if b == 0 { 0 } else { o - b }));
    let q_sinv = pair_table("qs", |o, b| Value::full_set([Value::int(if b == 0 { 0 } else { o - b })]));
    let h = harness([p, q_inv, q_sinv]);
    let inputs = TestInputSet::new(
        "add",
        [vec![Value::int(0), Value::int(0)], vec![Value::int(1), Value::int(1)]],
        Provenance::Fixture,
    )
    .unwrap();
    let observed = observe(&h, "p", &inputs, false).unwrap();
    for (scheme, q) in [(Scheme::PartialFwdInv { arg: 0 }, "q"), (Scheme::PartialFwdSinv { arg: 0 }, "qs")] {
        let full = build_property(&scheme, "p", q, &inputs, &observed).unwrap();
        assert!(!eval(&full, &Default::default(), &cfg(), &h).unwrap().result.is_true(), "{scheme}");
        let ablated = first_conjunct(full);
        assert!(eval(&ablated, &Default::default(), &cfg(), &h).unwrap().result.is_true(), "{scheme}");
    }
}

fn toy_population(h: &Harness) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut fwd = vec![];
    for (i, k) in [1, 1, 1, 2, 2].into_iter().enumerate() {
        let id = format!("f{i}");
        h.register(toy_shift(&id, k));
        fwd.push(id);
    }
    for id in ["e0", "e1"] {
        h.register(toy_set(id, &[1, 2]));
    }
    h.register(toy_set("q0", &[-1, -2]));
    h.register(toy_set("qbad", &[-1]));
    h.register(toy_set("ebad", &[1]));
    (fwd, vec!["e0".into(), "e1".into()], vec!["q0".into()])
}

#[test]
fn cascade_keeps_everything_when_all_correct() {
    let h = harness([]);
    let (fwd, enums, sinvs) = toy_population(&h);
    let out = cascade_enum_sinv(&h, &fwd, &enums, &sinvs, None, &toy_inputs(), &cfg()).unwrap();
    assert_eq!(out.surviving_enumerators, enums);
    assert_eq!(out.surviving_forward, fwd);
}

#[test]
fn cascade_without_agreeing_inverse_keeps_nothing() {
    let h = harness([]);
    let (fwd, enums, _) = toy_population(&h);
    let out = cascade_enum_sinv(&h, &fwd, &enums, &["qbad".into()], None, &toy_inputs(), &cfg()).unwrap();
    assert!(out.stage1_pairs.is_empty());
    assert!(out.surviving_enumerators.is_empty());
    assert!(out.surviving_forward.is_empty());
}

#[test]
fn pipeline_falls_back_to_fwd_sinv() {
    let h = harness([]);
    let mut fwd = vec![];
    for (i, k) in [2, 2, 2, 3, 3, 3, 3].into_iter().enumerate() {
        let id = format!("f{i}");
        h.register(toy_table(&id, move |x| Value::int(if k == 2 { 2 * x } else { 2 * x + 1 })));
        fwd.push(id);
    }
    let halve = |o: i64| {
        if o % 2 == 0 {
            Value::full_set([Value::int(o / 2)])
        } else {
            Value::full_set([])
        }
    };
    h.register(toy_table("q0", halve));
    let samples = PipelineSamples { forward: fwd, set_inverses: vec!["q0".into()], ..Default::default() };
    let out = decide_pipeline(&h, &samples, &toy_inputs(), &cfg()).unwrap();
    assert_eq!(out.decision.selected_class(), Some("f0"));
    assert_eq!(out.scheme.as_deref(), Some("full-fwd-sinv"));
}

#[test]
fn pipeline_abstains_without_agreement() {
    let h = harness([toy_shift("f0", 1), toy_shift("f1", 2), toy_shift("q0", -5)]);
    let samples =
        PipelineSamples { forward: vec!["f0".into(), "f1".into()], inverses: vec!["q0".into()], ..Default::default() };
    let out = decide_pipeline(&h, &samples, &toy_inputs(), &cfg()).unwrap();
    assert!(out.decision.is_abstention());
    assert_eq!(out.scheme, None);
}

#[test]
fn demonic_specials_never_agree() {
    let h = harness([toy_table("p", |_| Value::Special(Special::Demonic)), toy_shift("q", -1)]);
    let v = check_agreement(&h, &Scheme::FullFwdInv, "p", "q", &toy_inputs(), &cfg()).unwrap();
    assert!(!v.agrees);
}
