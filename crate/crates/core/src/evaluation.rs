//! Judging selected classes against fixture ground truth, the abstention
//! confusion matrix with its metrics, and semantic entropy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusDecision, EquivalenceClass};
use crate::value::{CanonicalKey, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvaluationError {
    #[error("judge for {problem} does not cover input {key}")]
    Uncovered { problem: String, key: CanonicalKey },
}

/// Accepted outputs per canonical input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judge {
    pub problem_id: String,
    pub accepted: BTreeMap<CanonicalKey, Vec<Value>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

impl Judge {
    pub fn judge_behavior(&self, behavior: &BTreeMap<CanonicalKey, Value>) -> Result<Verdict, EvaluationError> {
        let mut verdict = Verdict::Correct;
        for (key, out) in behavior {
            let accepted = self
                .accepted
                .get(key)
                .ok_or_else(|| EvaluationError::Uncovered { problem: self.problem_id.clone(), key: key.clone() })?;
            if out.contains_special() || !accepted.contains(out) {
                verdict = Verdict::Incorrect;
            }
        }
        Ok(verdict)
    }
}

pub fn judge_class(judge: &Judge, cls: &EquivalenceClass) -> Result<Verdict, EvaluationError> {
    judge.judge_behavior(&cls.behavior)
}

/// Ground truth for one problem: which forward classes are correct.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub correct_classes: BTreeSet<String>,
}

impl GroundTruth {
    pub fn solvable(&self) -> bool {
        !self.correct_classes.is_empty()
    }
}

/// Confusion matrix of select-or-abstain decisions. Rows `N1..N3` are
/// problems with a correct sample, `N4, N5` problems without one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstentionCounts {
    /// Correctly selected.
    pub n1: u64,
    /// Incorrectly selected although a correct sample exists.
    pub n2: u64,
    /// Abstained although a correct sample exists.
    pub n3: u64,
    /// Selected with no correct sample.
    pub n4: u64,
    /// Abstained with no correct sample.
    pub n5: u64,
}

impl AbstentionCounts {
    pub fn total(&self) -> u64 {
        self.n1 + self.n2 + self.n3 + self.n4 + self.n5
    }

    pub fn add(&mut self, decision: &ConsensusDecision, truth: &GroundTruth) {
        match (decision.selected_class(), truth.solvable()) {
            (Some(c), true) if truth.correct_classes.contains(c) => self.n1 += 1,
            (Some(_), true) => self.n2 += 1,
            (None, true) => self.n3 += 1,
            (Some(_), false) => self.n4 += 1,
            (None, false) => self.n5 += 1,
        }
    }
}

pub fn confusion<'a>(
    decisions: impl IntoIterator<Item = (&'a ConsensusDecision, &'a GroundTruth)>,
) -> AbstentionCounts {
    let mut counts = AbstentionCounts::default();
    for (d, t) in decisions {
        counts.add(d, t);
    }
    counts
}

/// An exact ratio, or a marker for `0/0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Value(Ratio<u64>),
    Undefined,
}

impl Metric {
    pub fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(Ratio::new(num, den))
        }
    }

    pub fn value(&self) -> Option<Ratio<u64>> {
        match self {
            Metric::Value(r) => Some(*r),
            Metric::Undefined => None,
        }
    }

    pub fn to_f64(&self) -> Option<f64> {
        self.value().map(|r| *r.numer() as f64 / *r.denom() as f64)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_f64() {
            Some(x) => write!(f, "{x:.4}"),
            None => f.write_str("undefined"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Value(r) => s.serialize_str(&format!("{}/{}", r.numer(), r.denom())),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "undefined" {
            return Ok(Metric::Undefined);
        }
        let bad = || serde::de::Error::custom(format!("bad metric {s:?}"));
        let (n, m) = s.split_once('/').ok_or_else(bad)?;
        let (n, m): (u64, u64) = (n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
        if m == 0 {
            return Err(bad());
        }
        Ok(Metric::Value(Ratio::new(n, m)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub reliable_accuracy: Metric,
    pub overall_accuracy: Metric,
    pub abstention_rate: Metric,
    pub precision_abs: Metric,
    pub recall_abs: Metric,
    pub f1_abs: Metric,
}

pub fn metrics(c: &AbstentionCounts) -> MetricsReport {
    let total = c.total();
    let precision = Metric::ratio(c.n5, c.n3 + c.n5);
    let recall = Metric::ratio(c.n5, c.n2 + c.n4 + c.n5);
    let f1 = match (precision.value(), recall.value()) {
        (Some(p), Some(r)) if p + r > Ratio::from_integer(0) => Metric::Value(p * r * 2 / (p + r)),
        _ => Metric::Undefined,
    };
    MetricsReport {
        reliable_accuracy: Metric::ratio(c.n1, c.n1 + c.n2 + c.n4),
        overall_accuracy: Metric::ratio(c.n1 + c.n5, total),
        abstention_rate: Metric::ratio(c.n3 + c.n5, total),
        precision_abs: precision,
        recall_abs: recall,
        f1_abs: f1,
    }
}

/// One program class paired with one witness class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgreementPair {
    pub program_mass: Ratio<u64>,
    pub witness_mass: Ratio<u64>,
    pub agrees: bool,
    pub program_correct: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrectnessUnderAgreement {
    /// Mass of correct programs among agreeing pairs.
    pub conditional: Option<Ratio<u64>>,
    /// Mass of correct programs among all pairs.
    pub unconditional: Option<Ratio<u64>>,
}

pub fn correctness_under_agreement(pairs: &[AgreementPair]) -> CorrectnessUnderAgreement {
    let weigh = |filter: &dyn Fn(&AgreementPair) -> bool| {
        let mut num = Ratio::from_integer(0);
        let mut den = Ratio::from_integer(0);
        for p in pairs.iter().filter(|p| filter(p)) {
            let w = p.program_mass * p.witness_mass;
            den += w;
            if p.program_correct {
                num += w;
            }
        }
        (den > Ratio::from_integer(0)).then(|| num / den)
    };
    CorrectnessUnderAgreement { conditional: weigh(&|p| p.agrees), unconditional: weigh(&|_| true) }
}

/// `−Σ m ln m` over the class masses.
pub fn semantic_entropy(classes: &[EquivalenceClass]) -> f64 {
    entropy(classes.iter().map(|c| {
        let m = c.mass();
        *m.numer() as f64 / *m.denom() as f64
    }))
}

pub fn entropy(masses: impl IntoIterator<Item = f64>) -> f64 {
    let h: f64 = masses.into_iter().filter(|&m| m > 0.0).map(|m| -m * m.ln()).sum();
    // Keep a single class at exactly zero rather than −0.
    h.max(0.0)
}

/// Entropy of the class distribution of the first `k` samples, for each
/// requested `k`. `labels` gives each sample's class in sampling order.
pub fn entropy_by_prefix(labels: &[String], prefixes: &[usize]) -> Vec<(usize, f64)> {
    prefixes
        .iter()
        .filter(|&&k| k > 0 && k <= labels.len())
        .map(|&k| {
            let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
            for l in &labels[..k] {
                *counts.entry(l).or_default() += 1;
            }
            (k, entropy(counts.values().map(|&c| c as f64 / k as f64)))
        })
        .collect()
}
