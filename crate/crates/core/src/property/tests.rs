use std::collections::HashMap;

use proptest::prelude::*;

use super::*;

type Prog = Box<dyn Fn(&[Value]) -> Value + Send + Sync>;

#[derive(Default)]
struct Programs(HashMap<String, Prog>);

impl Programs {
    fn with(mut self, name: &str, f: impl Fn(&[Value]) -> Value + Send + Sync + 'static) -> Self {
        self.0.insert(name.to_string(), Box::new(f));
        self
    }
}

impl Executor for Programs {
    fn call(&self, candidate: &str, args: &[Value]) -> Result<Value, EvalError> {
        let f = self.0.get(candidate).ok_or_else(|| EvalError::Exec(ExecError::UnknownCandidate(candidate.into())))?;
        Ok(f(args))
    }
}

fn int_of(v: &Value) -> i64 {
    match v {
        Value::Int(i) => i64::try_from(i).unwrap(),
        other => panic!("not an int: {other}"),
    }
}

fn ints(xs: &[i64]) -> Vec<Value> {
    xs.iter().map(|&x| Value::int(x)).collect()
}

fn cfg() -> EvalConfig {
    EvalConfig::default()
}

fn run(t: &Term, ex: &impl Executor) -> EvalResult {
    eval(t, &Env::new(), &cfg(), ex).unwrap().result
}

fn l1(i: i64) -> Term {
    Term::forall(
        Binder::Var("o".into()),
        Term::call("p", vec![Term::Const(Value::int(i))]),
        Term::member(Term::Const(Value::int(i)), Term::call("q", vec![Term::var("o")])),
    )
}

fn enum_p() -> Programs {
    Programs::default().with("p", |a| {
        let i = int_of(&a[0]);
        Value::full_set(ints(&[i + 1, i + 2]))
    })
}

#[test]
fn full_inverse_derivation_holds() {
    let ex = enum_p().with("q", |a| {
        let o = int_of(&a[0]);
        Value::full_set(ints(&[o - 1, o - 2]))
    });
    assert_eq!(run(&l1(-1), &ex), EvalResult::Bool(true));
}

#[test]
fn subset_inverse_derivation_fails() {
    let ex = enum_p().with("q", |a| Value::subset(ints(&[int_of(&a[0]) - 1])));
    assert_eq!(run(&l1(-1), &ex), EvalResult::Bool(false));
    let counts = eval_forall_counts(&l1(-1), &Env::new(), &cfg(), &ex).unwrap();
    assert_eq!((counts.holds, counts.angelic, counts.fails, counts.demonic, counts.domain_size), (1, 1, 0, 0, 2));
    assert_eq!(counts.threshold, 1);
    // With a fraction of one, the single angelic branch is below T = 2.
    let lenient = EvalConfig { angelic_fraction: AngelicFraction::new(1, 1).unwrap() };
    assert!(eval(&l1(-1), &Env::new(), &lenient, &ex).unwrap().result.is_true());
}

#[test]
fn threshold_breach_is_traced() {
    let ex = enum_p().with("q", |a| Value::subset(ints(&[int_of(&a[0]) - 1])));
    let ev = eval(&l1(-1), &Env::new(), &cfg(), &ex).unwrap();
    let trace = ev.trace.unwrap();
    assert_eq!(trace.steps, vec![TraceStep::ThresholdBreach { angelic: 1, threshold: 1 }]);
}

#[test]
fn undefined_equals_undefined() {
    let t = Term::eq(Term::Const(Value::UNDEFINED), Term::Const(Value::UNDEFINED));
    assert_eq!(run(&t, &NoPrograms), EvalResult::Bool(true));
}

#[test]
fn tolerate_maps_only_undefined() {
    let env = Env::new();
    let v = eval_value(&Term::tolerate(Term::Const(Value::UNDEFINED)), &env, &cfg(), &NoPrograms);
    assert_eq!(v.unwrap(), Value::ANGELIC);
    let v = eval_value(&Term::tolerate(Term::Const(Value::int(5))), &env, &cfg(), &NoPrograms);
    assert_eq!(v.unwrap(), Value::int(5));
    let v = eval_value(&Term::tolerate(Term::Const(Value::DEMONIC)), &env, &cfg(), &NoPrograms);
    assert_eq!(v.unwrap(), Value::DEMONIC);
}

#[test]
fn all_true_domain_counts() {
    let t = Term::forall_in(Binder::Var("x".into()), ints(&[1, 2, 3, 4, 5]), Term::eq(Term::var("x"), Term::var("x")));
    let c = eval_forall_counts(&t, &Env::new(), &cfg(), &NoPrograms).unwrap();
    assert_eq!((c.holds, c.angelic, c.fails, c.demonic, c.domain_size), (5, 0, 0, 0, 5));
    assert!(c.verdict());
}

#[test]
fn one_demonic_branch_fails() {
    let ex = Programs::default().with("p", |a| if int_of(&a[0]) == 3 { Value::DEMONIC } else { a[0].clone() });
    let t = Term::forall_in(
        Binder::Var("x".into()),
        ints(&[1, 2, 3, 4, 5, 6, 7, 8, 9]),
        Term::eq(Term::call("p", vec![Term::var("x")]), Term::var("x")),
    );
    let ev = eval(&t, &Env::new(), &cfg(), &ex).unwrap();
    assert_eq!(ev.result, EvalResult::Bool(false));
    let c = eval_forall_counts(&t, &Env::new(), &cfg(), &ex).unwrap();
    assert_eq!((c.holds, c.demonic), (8, 1));
    match &ev.trace.unwrap().steps[0] {
        TraceStep::Branch { value, outcome, .. } => {
            assert_eq!(value, &Value::int(3));
            assert_eq!(outcome, &Value::DEMONIC);
        }
        other => panic!("unexpected step {other:?}"),
    }
}

#[test]
fn special_arguments_short_circuit_calls() {
    let ex = Programs::default().with("p", |_| panic!("must not run"));
    let t = Term::call("p", vec![Term::Const(Value::UNDEFINED), Term::Const(Value::ANGELIC)]);
    let v = eval_value(&t, &Env::new(), &cfg(), &ex).unwrap();
    assert_eq!(v, Value::ANGELIC);
}

#[test]
fn special_domains() {
    let body = Term::Const(Value::Bool(false));
    for (s, expect) in [(Value::ANGELIC, true), (Value::DEMONIC, false), (Value::UNDEFINED, false)] {
        let t = Term::forall(Binder::Var("x".into()), Term::Const(s), body.clone());
        assert_eq!(run(&t, &NoPrograms), EvalResult::Bool(expect));
    }
}

#[test]
fn non_set_domain_is_an_error() {
    let t = Term::forall(Binder::Var("x".into()), Term::Const(Value::int(4)), Term::Const(Value::Bool(true)));
    assert!(matches!(eval(&t, &Env::new(), &cfg(), &NoPrograms), Err(EvalError::DomainNotASet(_))));
}

#[test]
fn unbound_variable_is_an_error() {
    assert_eq!(eval(&Term::var("z"), &Env::new(), &cfg(), &NoPrograms), Err(EvalError::Unbound("z".into())));
}

#[test]
fn or_rules() {
    let c = |v: Value| Term::Const(v);
    let cases = [
        (Value::Bool(true), Value::UNDEFINED, Value::UNDEFINED),
        (Value::Bool(false), Value::ANGELIC, Value::ANGELIC),
        (Value::UNDEFINED, Value::ANGELIC, Value::ANGELIC),
        (Value::ANGELIC, Value::DEMONIC, Value::DEMONIC),
        (Value::Bool(false), Value::Bool(true), Value::Bool(true)),
    ];
    for (a, b, want) in cases {
        let v = eval_value(&Term::or(c(a), c(b)), &Env::new(), &cfg(), &NoPrograms).unwrap();
        assert_eq!(v, want);
    }
}

#[test]
fn membership_rules() {
    let m = |e: Value, s: Value| {
        eval_value(&Term::member(Term::Const(e), Term::Const(s)), &Env::new(), &cfg(), &NoPrograms).unwrap()
    };
    assert_eq!(m(Value::int(1), Value::full_set(ints(&[1]))), Value::Bool(true));
    assert_eq!(m(Value::int(2), Value::full_set(ints(&[1]))), Value::Bool(false));
    assert_eq!(m(Value::int(2), Value::subset(ints(&[1]))), Value::ANGELIC);
    assert_eq!(m(Value::UNDEFINED, Value::UNDEFINED), Value::Bool(true));
    assert_eq!(m(Value::UNDEFINED, Value::ANGELIC), Value::ANGELIC);
    assert_eq!(m(Value::int(1), Value::UNDEFINED), Value::UNDEFINED);
}

#[test]
fn conjunct_index_in_trace() {
    let t = Term::and_all(vec![
        Term::Const(Value::Bool(true)),
        Term::Const(Value::Bool(true)),
        Term::Const(Value::Bool(false)),
    ])
    .unwrap();
    let ev = eval(&t, &Env::new(), &cfg(), &NoPrograms).unwrap();
    assert_eq!(ev.trace.unwrap().steps, vec![TraceStep::Conjunct(2)]);
}

#[test]
fn tuple_binder_destructures() {
    let t = Term::forall_in(
        Binder::Tuple(vec!["a".into(), "b".into()]),
        vec![Value::tuple(ints(&[1, 1])), Value::tuple(ints(&[2, 2]))],
        Term::eq(Term::var("a"), Term::var("b")),
    );
    assert!(run(&t, &NoPrograms).is_true());
}

#[test]
fn map_applies_pointwise() {
    let ex = Programs::default().with("inc", |a| Value::int(int_of(&a[0]) + 1)).with("incs", |a| match &a[0] {
        Value::Seq(xs) => Value::Seq(xs.iter().map(|x| Value::int(int_of(x) + 1)).collect()),
        _ => Value::DEMONIC,
    });
    let seq = Term::Const(Value::seq(ints(&[4, 5, 6])));
    let t = Term::eq(Term::call("incs", vec![seq.clone()]), Term::Map("inc".into(), Box::new(seq)));
    assert!(run(&t, &ex).is_true());
}

#[test]
fn sexpr_parses_the_documented_forms() {
    let src = r#"(forall o (call p -1) (and (in -1 (call q o)) (= (tolerate #U) #A) (not false)))"#;
    let t = parse_term(src).unwrap();
    assert_eq!(parse_term(&t.to_string()).unwrap(), t);
    let t = parse_term(r#"(forall (a b) (values (tuple 1 "x") (tuple 2 "y")) (= a a))"#).unwrap();
    assert!(run(&t, &NoPrograms).is_true());
    assert!(parse_term("(forall true (values) true)").is_err());
    assert!(parse_term("(= 1)").is_err());
    assert!(parse_term("(= 1 2) 3").is_err());
    assert!(parse_term("(frob 1)").is_err());
}

#[test]
fn fraction_parsing() {
    assert_eq!("1/3".parse::<AngelicFraction>().unwrap(), AngelicFraction::default());
    assert_eq!("1".parse::<AngelicFraction>().unwrap().threshold(7), 7);
    assert!("0/3".parse::<AngelicFraction>().is_err());
    assert!("4/3".parse::<AngelicFraction>().is_err());
    assert_eq!(AngelicFraction::default().threshold(0), 0);
    assert_eq!(AngelicFraction::default().threshold(4), 2);
}

fn special() -> impl Strategy<Value = Value> {
    prop_oneof![Just(Value::ANGELIC), Just(Value::DEMONIC), Just(Value::UNDEFINED),]
}

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![special(), any::<bool>().prop_map(Value::Bool), (-3i64..3).prop_map(Value::int), Just(Value::None),]
}

fn collection() -> impl Strategy<Value = Value> {
    prop_oneof![
        leaf(),
        prop::collection::vec((-3i64..3).prop_map(Value::int), 0..4).prop_map(Value::full_set),
        prop::collection::vec((-3i64..3).prop_map(Value::int), 0..4).prop_map(Value::subset),
        prop::collection::vec((-3i64..3).prop_map(Value::int), 0..4).prop_map(Value::seq),
    ]
}

fn value_term() -> impl Strategy<Value = Term> {
    collection().prop_map(Term::Const)
}

fn name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,4}".prop_filter("keyword", |s| {
        ![
            "true", "false", "none", "call", "map", "tolerate", "in", "not", "and", "or", "implies", "forall",
            "values", "list", "tuple", "set", "subset", "dict",
        ]
        .contains(&s.as_str())
    })
}

fn any_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![value_term(), name().prop_map(Term::Var)];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (name(), prop::collection::vec(inner.clone(), 0..3)).prop_map(|(n, a)| Term::Call(n, a)),
            (name(), inner.clone()).prop_map(|(n, a)| Term::Map(n, Box::new(a))),
            inner.clone().prop_map(Term::tolerate),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::eq(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::member(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::implies(a, b)),
            inner.clone().prop_map(Term::not),
            (name(), inner.clone(), inner.clone()).prop_map(|(v, d, b)| Term::forall(Binder::Var(v), d, b)),
            (prop::collection::vec(name(), 1..3), prop::collection::vec(leaf_value(), 0..3), inner)
                .prop_map(|(vs, d, b)| Term::forall_in(Binder::Tuple(vs), d, b)),
        ]
    })
}

fn leaf_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-3i64..3).prop_map(Value::int),
        "[a-z\"\\\\ ]{0,3}".prop_map(Value::str),
        prop::collection::vec((-3i64..3).prop_map(Value::int), 0..3).prop_map(Value::tuple),
    ]
}

proptest! {
    #[test]
    fn eq_is_commutative(a in collection(), b in collection()) {
        let e = |x: &Value, y: &Value| eval_value(
            &Term::eq(Term::Const(x.clone()), Term::Const(y.clone())), &Env::new(), &cfg(), &NoPrograms).unwrap();
        prop_assert_eq!(e(&a, &b), e(&b, &a));
    }

    #[test]
    fn connectives_are_commutative(a in leaf(), b in leaf()) {
        for op in [Term::or as fn(Term, Term) -> Term, Term::and] {
            let x = eval_value(&op(Term::Const(a.clone()), Term::Const(b.clone())), &Env::new(), &cfg(), &NoPrograms).unwrap();
            let y = eval_value(&op(Term::Const(b.clone()), Term::Const(a.clone())), &Env::new(), &cfg(), &NoPrograms).unwrap();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn special_membership_is_commutative(a in special(), b in special()) {
        let m = |x: &Value, y: &Value| eval_value(
            &Term::member(Term::Const(x.clone()), Term::Const(y.clone())), &Env::new(), &cfg(), &NoPrograms).unwrap();
        prop_assert_eq!(m(&a, &b), m(&b, &a));
    }

    #[test]
    fn threshold_is_monotone(
        outcomes in prop::collection::vec(prop_oneof![Just(Value::Bool(true)), Just(Value::ANGELIC)], 1..20),
        f1 in 1u64..=12,
        f2 in 1u64..=12,
    ) {
        let (lo, hi) = (f1.min(f2), f1.max(f2));
        let t = Term::forall_in(
            Binder::Var("x".into()),
            outcomes.iter().enumerate().map(|(i, _)| Value::int(i as i64)).collect(),
            Term::call("o", vec![Term::var("x")]),
        );
        let table = outcomes.clone();
        let ex = Programs::default().with("o", move |a| table[int_of(&a[0]) as usize].clone());
        let at = |n: u64| eval(&t, &Env::new(), &EvalConfig { angelic_fraction: AngelicFraction::new(n, 12).unwrap() }, &ex).unwrap().result;
        if at(lo).is_true() {
            prop_assert!(at(hi).is_true());
        }
    }

    #[test]
    fn forall_is_always_boolean(items in prop::collection::vec(collection(), 0..6)) {
        let t = Term::forall_in(Binder::Var("x".into()), items.into_iter().filter(|v| !v.is_special()).collect(),
            Term::eq(Term::var("x"), Term::Const(Value::int(0))));
        prop_assert!(matches!(run(&t, &NoPrograms), EvalResult::Bool(_)));
    }

    #[test]
    fn counts_partition_and_reproduce_verdict(outcomes in prop::collection::vec(leaf(), 0..12), n in 1u64..=6) {
        let t = Term::forall_in(
            Binder::Var("x".into()),
            (0..outcomes.len()).map(|i| Value::int(i as i64)).collect(),
            Term::call("o", vec![Term::var("x")]),
        );
        let table = outcomes.clone();
        let ex = Programs::default().with("o", move |a| table[int_of(&a[0]) as usize].clone());
        let cfg = EvalConfig { angelic_fraction: AngelicFraction::new(n, 6).unwrap() };
        let c = eval_forall_counts(&t, &Env::new(), &cfg, &ex).unwrap();
        prop_assert_eq!(c.holds + c.angelic + c.fails + c.demonic + c.undefined, c.domain_size);
        let verdict = eval(&t, &Env::new(), &cfg, &ex).unwrap().result;
        prop_assert_eq!(verdict, EvalResult::Bool(c.verdict()));
    }

    #[test]
    fn sexpr_round_trips(t in any_term()) {
        let text = t.to_string();
        prop_assert_eq!(parse_term(&text).unwrap(), t);
    }
}
