//! Built-in fixture corpora: the integer toy problem with two valid
//! answers per input, and the wildcard-filling problem whose sampled
//! population is dominated by one wrong class.

use std::collections::BTreeMap;

use crate::exec::Harness;
use crate::problem::{CandidateProgram, FunctionSignature, Param, ProblemDescription, Provenance, TestInputSet};
use crate::triangulation::compose_union_inverse;
use crate::types::TypeTag;
use crate::value::{encode_args, CanonicalKey, Special, Value};

pub const TOY_PROBLEM: &str = "toy-next";

/// Inputs the toy tables are defined on. Wide enough that every value
/// reachable from the test inputs through two compositions is covered.
pub const TOY_DOMAIN: std::ops::RangeInclusive<i64> = -40..=40;

pub fn toy_inputs() -> TestInputSet {
    TestInputSet::unary(TOY_PROBLEM, (-10..=10).map(Value::int)).expect("non-empty")
}

pub fn toy_problem() -> ProblemDescription {
    ProblemDescription::original(
        TOY_PROBLEM,
        "Given an integer i, return an integer that is larger than i by one or by two.",
        FunctionSignature::new("next", vec![Param::new("i", TypeTag::Int)], TypeTag::Int),
    )
}

fn int_of(v: &Value) -> i64 {
    match v {
        Value::Int(i) => i64::try_from(i).expect("toy ints are small"),
        other => panic!("toy fixture applied to {other:?}"),
    }
}

/// Tabulates `f` over the toy domain as a unary candidate.
pub fn toy_table(id: &str, f: impl Fn(i64) -> Value) -> CandidateProgram {
    let args: Vec<Vec<Value>> = TOY_DOMAIN.map(|i| vec![Value::int(i)]).collect();
    CandidateProgram::tabulate(id, TOY_PROBLEM, args.iter().map(Vec::as_slice), |a| f(int_of(&a[0])))
}

/// `i ↦ i + k`.
pub fn toy_shift(id: &str, k: i64) -> CandidateProgram {
    toy_table(id, move |i| Value::int(i + k))
}

/// `i ↦ Full{i + d | d ∈ offsets}`.
pub fn toy_set(id: &str, offsets: &[i64]) -> CandidateProgram {
    let offsets = offsets.to_vec();
    toy_table(id, move |i| Value::full_set(offsets.iter().map(|d| Value::int(i + d))))
}

/// `i ↦ Subset{i + d | d ∈ offsets}`.
pub fn toy_subset(id: &str, offsets: &[i64]) -> CandidateProgram {
    let offsets = offsets.to_vec();
    toy_table(id, move |i| Value::subset(offsets.iter().map(|d| Value::int(i + d))))
}

pub const ALPHABET: [char; 2] = ['a', 'b'];
pub const WILDCARD: char = '?';
pub const MAX_LEN: usize = 3;
pub const FILL_PROBLEM: &str = "fill-wildcards";

fn words(alphabet: &[char], len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..len {
        out = out.iter().flat_map(|w| alphabet.iter().map(move |c| format!("{w}{c}"))).collect();
    }
    out
}

fn words_up_to(alphabet: &[char], max: usize) -> Vec<String> {
    (1..=max).flat_map(|n| words(alphabet, n)).collect()
}

/// Patterns `s` over the alphabet plus the wildcard.
pub fn patterns() -> Vec<String> {
    words_up_to(&['a', 'b', WILDCARD], MAX_LEN)
}

/// Targets `t` admissible with pattern `s`.
pub fn targets(s: &str) -> Vec<String> {
    words_up_to(&ALPHABET, s.len())
}

pub fn is_subsequence(t: &str, s: &str) -> bool {
    let mut it = s.chars();
    t.chars().all(|c| it.any(|d| d == c))
}

fn is_filling(o: &str, s: &str) -> bool {
    o.len() == s.len()
        && s.chars().zip(o.chars()).all(|(a, b)| if a == WILDCARD { ALPHABET.contains(&b) } else { a == b })
}

/// All ways to replace every wildcard of `s` by a letter.
pub fn fillings(s: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    for c in s.chars() {
        let choices: Vec<char> = if c == WILDCARD { ALPHABET.to_vec() } else { vec![c] };
        out = out.iter().flat_map(|w| choices.iter().map(move |c| format!("{w}{c}"))).collect();
    }
    out
}

/// The fillings of `s` containing `t` as a subsequence.
pub fn valid_answers(s: &str, t: &str) -> Vec<String> {
    fillings(s).into_iter().filter(|o| is_subsequence(t, o)).collect()
}

fn opt(o: Option<String>) -> Value {
    o.map_or(Value::None, Value::Str)
}

/// Greedy solver: wildcards and matching letters consume `t` left to right;
/// leftover wildcards become `pad`. Returns the filling even when `t` is
/// not fully consumed.
fn greedy(s: &str, t: &str, pad: char) -> (String, bool) {
    let t: Vec<char> = t.chars().collect();
    let mut j = 0;
    let mut out = String::new();
    for c in s.chars() {
        if c == WILDCARD {
            if j < t.len() {
                out.push(t[j]);
                j += 1;
            } else {
                out.push(pad);
            }
        } else {
            if j < t.len() && c == t[j] {
                j += 1;
            }
            out.push(c);
        }
    }
    (out, j == t.len())
}

/// Behaviors of the sampled forward programs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillBehavior {
    /// Assigns `t` to wildcards in order, ignoring letters already in `s`.
    WildcardsOnly,
    /// Correct, padding with `a`.
    CorrectA,
    /// Correct, padding with `b`.
    CorrectB,
    /// Replaces every wildcard by `a`.
    AllA,
    /// Never reports unsolvable inputs.
    NeverNone,
    /// Leaves unused wildcards in place.
    KeepsWildcards,
    /// Gives up on patterns without wildcards.
    NeedsWildcard,
}

impl FillBehavior {
    pub fn apply(self, s: &str, t: &str) -> Value {
        let check = |o: String| opt(is_subsequence(t, &o).then_some(o));
        match self {
            FillBehavior::WildcardsOnly => {
                let mut rest = t.chars();
                let o: String = s.chars().map(|c| if c == WILDCARD { rest.next().unwrap_or('a') } else { c }).collect();
                check(o)
            }
            FillBehavior::CorrectA | FillBehavior::CorrectB => {
                let pad = if self == FillBehavior::CorrectA { 'a' } else { 'b' };
                let (o, ok) = greedy(s, t, pad);
                opt(ok.then_some(o))
            }
            FillBehavior::AllA => check(s.replace(WILDCARD, "a")),
            FillBehavior::NeverNone => Value::Str(greedy(s, t, 'a').0),
            FillBehavior::KeepsWildcards => {
                let (o, ok) = greedy(s, t, WILDCARD);
                opt(ok.then_some(o))
            }
            FillBehavior::NeedsWildcard => {
                if s.contains(WILDCARD) {
                    FillBehavior::CorrectA.apply(s, t)
                } else {
                    Value::None
                }
            }
        }
    }

    pub fn is_correct(self) -> bool {
        matches!(self, FillBehavior::CorrectA | FillBehavior::CorrectB)
    }
}

/// Sample counts per forward behavior, in id order.
pub const FORWARD_MIX: [(FillBehavior, usize); 7] = [
    (FillBehavior::WildcardsOnly, 23),
    (FillBehavior::CorrectA, 7),
    (FillBehavior::CorrectB, 7),
    (FillBehavior::AllA, 20),
    (FillBehavior::NeverNone, 18),
    (FillBehavior::KeepsWildcards, 15),
    (FillBehavior::NeedsWildcard, 10),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnumBehavior {
    Correct,
    /// Only the answer padded with `a`.
    SingleAnswer,
    /// Empty set instead of `{None}` on unsolvable inputs.
    EmptyWhenUnsolvable,
}

impl EnumBehavior {
    pub fn apply(self, s: &str, t: &str) -> Value {
        let answers = valid_answers(s, t);
        match self {
            EnumBehavior::Correct if answers.is_empty() => Value::full_set([Value::None]),
            EnumBehavior::Correct => Value::full_set(answers.into_iter().map(Value::Str)),
            EnumBehavior::SingleAnswer => Value::full_set([FillBehavior::CorrectA.apply(s, t)]),
            EnumBehavior::EmptyWhenUnsolvable => Value::full_set(answers.into_iter().map(Value::Str)),
        }
    }
}

pub const ENUM_MIX: [(EnumBehavior, usize); 3] =
    [(EnumBehavior::Correct, 8), (EnumBehavior::SingleAnswer, 12), (EnumBehavior::EmptyWhenUnsolvable, 10)];

/// Set-valued inverses with respect to `t`, composed from a branch for
/// string outputs and a branch for `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SinvBehavior {
    Correct,
    /// The `None` branch lists every target.
    NoneListsAll,
    /// The string branch lists contiguous substrings only.
    ContiguousOnly,
}

impl SinvBehavior {
    /// String branch: all `t` for which `o` is a valid answer.
    pub fn some_branch(self, s: &str, o: &str) -> Value {
        if !is_filling(o, s) {
            return Value::Special(Special::Undefined);
        }
        let ts = targets(s).into_iter().filter(|t| match self {
            SinvBehavior::ContiguousOnly => o.contains(t.as_str()),
            _ => is_subsequence(t, o),
        });
        Value::full_set(ts.map(Value::Str))
    }

    /// `None` branch: targets with no answer. The true set is unbounded
    /// (longer targets never fit), so it is marked as a subset.
    pub fn none_branch(self, s: &str) -> Value {
        let ts =
            targets(s).into_iter().filter(|t| self == SinvBehavior::NoneListsAll || valid_answers(s, t).is_empty());
        Value::subset(ts.map(Value::Str))
    }
}

pub const SINV_MIX: [(SinvBehavior, usize); 3] =
    [(SinvBehavior::Correct, 9), (SinvBehavior::NoneListsAll, 11), (SinvBehavior::ContiguousOnly, 10)];

/// Argument inverted by the set-valued inverses.
pub const FILL_INVERT_ARG: usize = 1;

pub fn fill_problem() -> ProblemDescription {
    ProblemDescription::original(
        FILL_PROBLEM,
        "Given a string s over 'a', 'b' and '?' and a non-empty string t over 'a' and 'b', \
         replace every '?' in s by a letter so that t is a subsequence of the result. \
         Return any such string, or None if no replacement works.",
        FunctionSignature::new(
            "fill",
            vec![Param::new("s", TypeTag::Str), Param::new("t", TypeTag::Str)],
            TypeTag::Union(vec![TypeTag::Str, TypeTag::NoneType]),
        ),
    )
}

/// Every `(s, t)` pair of the bounded domain.
pub fn fill_domain() -> Vec<Vec<Value>> {
    patterns()
        .into_iter()
        .flat_map(|s| targets(&s).into_iter().map(move |t| vec![Value::str(s.clone()), Value::str(t)]))
        .collect()
}

pub fn fill_inputs() -> TestInputSet {
    TestInputSet::new(FILL_PROBLEM, fill_domain(), Provenance::Fixture).expect("non-empty")
}

fn strs(args: &[Value]) -> Vec<&str> {
    args.iter()
        .map(|v| match v {
            Value::Str(s) => s.as_str(),
            other => panic!("fill fixture applied to {other:?}"),
        })
        .collect()
}

/// The whole sampled population of the wildcard-filling problem.
#[derive(Clone, Debug)]
pub struct FillFixture {
    pub problem: ProblemDescription,
    pub inputs: TestInputSet,
    pub forward: Vec<CandidateProgram>,
    pub forward_behavior: BTreeMap<String, FillBehavior>,
    pub enumerators: Vec<CandidateProgram>,
    pub enum_behavior: BTreeMap<String, EnumBehavior>,
    /// Composed set-valued inverses, one per sample.
    pub set_inverses: Vec<CandidateProgram>,
    pub sinv_behavior: BTreeMap<String, SinvBehavior>,
    /// Branch candidates the composed inverses dispatch to.
    pub branches: Vec<CandidateProgram>,
}

impl FillFixture {
    pub fn build() -> FillFixture {
        let domain = fill_domain();
        let arg_slices = || domain.iter().map(Vec::as_slice);
        let mut fx = FillFixture {
            problem: fill_problem(),
            inputs: fill_inputs(),
            forward: vec![],
            forward_behavior: BTreeMap::new(),
            enumerators: vec![],
            enum_behavior: BTreeMap::new(),
            set_inverses: vec![],
            sinv_behavior: BTreeMap::new(),
            branches: vec![],
        };
        let mut n = 0;
        for (b, count) in FORWARD_MIX {
            let table = CandidateProgram::tabulate("", FILL_PROBLEM, arg_slices(), |a| {
                let a = strs(a);
                b.apply(a[0], a[1])
            });
            for _ in 0..count {
                let id = format!("fwd-{n:03}");
                fx.forward.push(CandidateProgram { id: id.clone(), ..table.clone() });
                fx.forward_behavior.insert(id, b);
                n += 1;
            }
        }
        let mut n = 0;
        for (b, count) in ENUM_MIX {
            let table = CandidateProgram::tabulate("", "fill-wildcards:enum", arg_slices(), |a| {
                let a = strs(a);
                b.apply(a[0], a[1])
            });
            for _ in 0..count {
                let id = format!("enum-{n:03}");
                fx.enumerators.push(CandidateProgram { id: id.clone(), ..table.clone() });
                fx.enum_behavior.insert(id, b);
                n += 1;
            }
        }
        // The inverse is asked about every string the samples can produce:
        // all same-length words over the alphabet plus the wildcard.
        let pats = patterns();
        let some_args: Vec<Vec<Value>> = pats
            .iter()
            .flat_map(|s| {
                words(&['a', 'b', WILDCARD], s.len())
                    .into_iter()
                    .map(move |o| vec![Value::str(s.clone()), Value::str(o)])
            })
            .collect();
        let none_args: Vec<Vec<Value>> = pats.iter().map(|s| vec![Value::str(s.clone())]).collect();
        let sinv_problem = "fill-wildcards:sinv";
        let mut n = 0;
        for (b, count) in SINV_MIX {
            let some = CandidateProgram::tabulate("", sinv_problem, some_args.iter().map(Vec::as_slice), |a| {
                let a = strs(a);
                b.some_branch(a[0], a[1])
            });
            let none = CandidateProgram::tabulate("", sinv_problem, none_args.iter().map(Vec::as_slice), |a| {
                b.none_branch(strs(a)[0])
            });
            for _ in 0..count {
                let id = format!("sinv-{n:03}");
                let some_id = format!("{id}/some");
                let none_id = format!("{id}/none");
                fx.branches.push(CandidateProgram { id: some_id.clone(), ..some.clone() });
                fx.branches.push(CandidateProgram { id: none_id.clone(), ..none.clone() });
                let branches = BTreeMap::from([("some".to_string(), some_id), ("none".to_string(), none_id)]);
                fx.set_inverses.push(compose_union_inverse(id.clone(), sinv_problem, FILL_INVERT_ARG, branches));
                fx.sinv_behavior.insert(id, b);
                n += 1;
            }
        }
        fx
    }

    pub fn candidates(&self) -> impl Iterator<Item = &CandidateProgram> {
        self.forward.iter().chain(&self.enumerators).chain(&self.set_inverses).chain(&self.branches)
    }

    pub fn register(&self, h: &Harness) {
        for c in self.candidates() {
            h.register(c.clone());
        }
    }

    pub fn ids(list: &[CandidateProgram]) -> Vec<String> {
        list.iter().map(|c| c.id.clone()).collect()
    }

    /// Accepted outputs per input: the valid answers, or `None` alone when
    /// there is none.
    pub fn accepted(&self) -> BTreeMap<CanonicalKey, Vec<Value>> {
        fill_domain()
            .into_iter()
            .map(|args| {
                let a = strs(&args);
                let answers = valid_answers(a[0], a[1]);
                let set =
                    if answers.is_empty() { vec![Value::None] } else { answers.into_iter().map(Value::Str).collect() };
                (encode_args(&args).expect("canonical"), set)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsequence_basics() {
        assert!(is_subsequence("ab", "aab"));
        assert!(is_subsequence("bb", "bab"));
        assert!(!is_subsequence("ba", "ab"));
    }

    #[test]
    fn domain_size() {
        // 3 patterns of length 1 with 2 targets, 9 of length 2 with 6,
        // 27 of length 3 with 14.
        assert_eq!(fill_domain().len(), 3 * 2 + 9 * 6 + 27 * 14);
    }

    #[test]
    fn correct_solvers_return_valid_answers() {
        for args in fill_domain() {
            let a = strs(&args);
            let answers = valid_answers(a[0], a[1]);
            for b in [FillBehavior::CorrectA, FillBehavior::CorrectB] {
                match b.apply(a[0], a[1]) {
                    Value::None => assert!(answers.is_empty(), "{a:?}"),
                    Value::Str(o) => assert!(answers.contains(&o), "{a:?}"),
                    other => panic!("{other:?}"),
                }
            }
        }
    }

    #[test]
    fn wrong_solvers_are_wrong_somewhere() {
        for (b, _) in FORWARD_MIX.iter().filter(|(b, _)| !b.is_correct()) {
            let wrong = fill_domain().iter().any(|args| {
                let a = strs(args);
                let answers = valid_answers(a[0], a[1]);
                match b.apply(a[0], a[1]) {
                    Value::None => !answers.is_empty(),
                    Value::Str(o) => !answers.contains(&o),
                    _ => true,
                }
            });
            assert!(wrong, "{b:?}");
        }
    }

    #[test]
    fn masses() {
        let total: usize = FORWARD_MIX.iter().map(|(_, n)| n).sum();
        assert_eq!(total, 100);
        let correct: usize = FORWARD_MIX.iter().filter(|(b, _)| b.is_correct()).map(|(_, n)| n).sum();
        assert_eq!(correct, 14);
    }
}
