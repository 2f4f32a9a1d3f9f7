//! Synthetic stochastic-parrot models and the confidence closed forms for
//! plurality and triangulation, computed in exact rational arithmetic.
//!
//! A model groups problems into hallucination classes. Every problem of a
//! class shares one distribution `π` over program classes `0..n`; each
//! problem has its own correct indices. The transformation `τ` is a
//! fixed-point-free permutation of the problems of a class, and `σ` the
//! induced permutation of program-class indices.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TheoryError {
    #[error("infeasible model spec: {0}")]
    Infeasible(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("correct and buggy index sets must both be non-empty")]
    EmptyPartition,
}

pub type Q = BigRational;

fn q(n: u64, d: u64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HallucinationClass {
    pub problems: Vec<String>,
    /// Probability of each program class, shared by all problems here.
    pub pi: Vec<Q>,
    /// Correct program-class indices per problem.
    pub correct: BTreeMap<String, Vec<usize>>,
    pub tau: BTreeMap<String, String>,
    pub sigma: Vec<usize>,
}

impl HallucinationClass {
    /// Indices correct for some problem of the class.
    pub fn correct_indices(&self) -> BTreeSet<usize> {
        self.correct.values().flatten().copied().collect()
    }

    pub fn buggy_indices(&self) -> BTreeSet<usize> {
        let c = self.correct_indices();
        (0..self.pi.len()).filter(|i| !c.contains(i)).collect()
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        let bad = |m: String| Err(TheoryError::Invalid(m));
        let n = self.pi.len();
        if self.problems.len() < 2 {
            return bad("hallucination class needs two problems".into());
        }
        if self.pi.iter().any(|p| *p <= Q::zero()) || self.pi.iter().sum::<Q>() != Q::one() {
            return bad("class distribution must be positive and sum to 1".into());
        }
        let errors: Vec<&Q> = self.buggy_indices().into_iter().map(|b| &self.pi[b]).collect();
        if errors.iter().collect::<BTreeSet<_>>().len() != errors.len() {
            return bad("error probabilities must be pairwise distinct".into());
        }
        let problems: BTreeSet<&String> = self.problems.iter().collect();
        let images: BTreeSet<&String> = self.tau.values().collect();
        if self.tau.len() != problems.len()
            || images != problems
            || self.tau.keys().collect::<BTreeSet<_>>() != problems
        {
            return bad("tau must permute the problems of the class".into());
        }
        if self.tau.iter().any(|(a, b)| a == b) {
            return bad("tau has a fixed point".into());
        }
        if !is_permutation(&self.sigma, n) {
            return bad("sigma must permute the program classes".into());
        }
        if self.sigma.iter().enumerate().any(|(i, &s)| i == s) {
            return bad("sigma has a fixed point".into());
        }
        for (d, cs) in &self.correct {
            let target: BTreeSet<usize> = self.correct[&self.tau[d]].iter().copied().collect();
            let image: BTreeSet<usize> = cs.iter().map(|&c| self.sigma[c]).collect();
            if image != target {
                return bad(format!("sigma does not map the solutions of {d} to those of its image"));
            }
        }
        Ok(())
    }
}

fn is_permutation(sigma: &[usize], n: usize) -> bool {
    sigma.len() == n && sigma.iter().copied().collect::<BTreeSet<_>>() == (0..n).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParrotModel {
    pub classes: Vec<HallucinationClass>,
}

impl ParrotModel {
    pub fn validate(&self) -> Result<(), TheoryError> {
        if self.classes.len() < 2 {
            return Err(TheoryError::Invalid("need at least two hallucination classes".into()));
        }
        self.classes.iter().try_for_each(HallucinationClass::validate)
    }

    pub fn num_problems(&self) -> usize {
        self.classes.iter().map(|c| c.problems.len()).sum()
    }
}

/// `Σ_{c∈C} π_c² / Σ_i π_i²`: the probability that `p` is correct given
/// that it is equivalent to another sample.
pub fn plurality_confidence(pi: &[Q], correct: &[usize]) -> Q {
    let num: Q = correct.iter().map(|&c| &pi[c] * &pi[c]).sum();
    let den: Q = pi.iter().map(|p| p * p).sum();
    num / den
}

/// `Σ_{c∈C} π_c π_σ(c) / Σ_i π_i π_σ(i)`: the same probability given that
/// `p` matches a sample for the transformed problem.
pub fn triangulation_confidence(pi: &[Q], sigma: &[usize], correct: &[usize]) -> Q {
    let num: Q = correct.iter().map(|&c| &pi[c] * &pi[sigma[c]]).sum();
    let den: Q = (0..pi.len()).map(|i| &pi[i] * &pi[sigma[i]]).sum();
    num / den
}

/// Mean over the problems of one class of the confidence gain.
pub fn class_delta(class: &HallucinationClass) -> Q {
    let total: Q = class
        .problems
        .iter()
        .map(|d| {
            let c = &class.correct[d];
            triangulation_confidence(&class.pi, &class.sigma, c) - plurality_confidence(&class.pi, c)
        })
        .sum();
    total / Q::from_integer(BigInt::from(class.problems.len()))
}

/// The class-level closed form: numerator
/// `Σ_C π_c π_σ(c) · Σ π_i² − Σ_C π_c² · Σ π_i π_σ(i)` over
/// `|class| · Σ π_i² · Σ π_i π_σ(i)`.
pub fn class_delta_closed_form(class: &HallucinationClass) -> Q {
    let pi = &class.pi;
    let cs = class.correct_indices();
    let sq: Q = pi.iter().map(|p| p * p).sum();
    let cross: Q = (0..pi.len()).map(|i| &pi[i] * &pi[class.sigma[i]]).sum();
    let c_cross: Q = cs.iter().map(|&c| &pi[c] * &pi[class.sigma[c]]).sum();
    let c_sq: Q = cs.iter().map(|&c| &pi[c] * &pi[c]).sum();
    let k = Q::from_integer(BigInt::from(class.problems.len()));
    (c_cross * &sq - c_sq * &cross) / (k * sq * cross)
}

/// Expected gain of triangulation over plurality for a uniformly drawn
/// problem.
pub fn expected_delta(model: &ParrotModel) -> Q {
    let total: Q = model.classes.iter().map(|c| class_delta(c) * Q::from_integer(BigInt::from(c.problems.len()))).sum();
    total / Q::from_integer(BigInt::from(model.num_problems()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rearrangement {
    /// `Σ π_i²`.
    pub lhs: Q,
    /// `Σ π_i π_σ(i)`.
    pub rhs: Q,
    /// Distinct entries and a fixed-point-free `σ`: the inequality must
    /// then be strict.
    pub strict: bool,
}

pub fn rearrangement_check(pi: &[Q], sigma: &[usize]) -> Rearrangement {
    let lhs: Q = pi.iter().map(|p| p * p).sum();
    let rhs: Q = (0..pi.len()).map(|i| &pi[i] * &pi[sigma[i]]).sum();
    let distinct = pi.iter().collect::<BTreeSet<_>>().len() == pi.len();
    let deranged = sigma.iter().enumerate().all(|(i, &s)| i != s);
    Rearrangement { lhs, rhs, strict: distinct && deranged }
}

/// Whether correct-solution probabilities move less under `σ` than error
/// probabilities, each normalized by its squared ℓ² norm.
pub fn dissociative_check(
    pi: &[Q],
    sigma: &[usize],
    correct: &BTreeSet<usize>,
    buggy: &BTreeSet<usize>,
) -> Result<bool, TheoryError> {
    if correct.is_empty() || buggy.is_empty() {
        return Err(TheoryError::EmptyPartition);
    }
    let side = |set: &BTreeSet<usize>| {
        let norm: Q = set.iter().map(|&i| &pi[i] * &pi[i]).sum();
        let diff: Q = set
            .iter()
            .map(|&i| {
                let d = &pi[i] - &pi[sigma[i]];
                &d * &d
            })
            .sum();
        diff / norm
    };
    Ok(side(correct) < side(buggy))
}

pub fn class_is_dissociative(class: &HallucinationClass) -> Result<bool, TheoryError> {
    dissociative_check(&class.pi, &class.sigma, &class.correct_indices(), &class.buggy_indices())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub num_hallucination_classes: usize,
    pub problems_per_class: usize,
    pub num_program_classes: usize,
    pub correct_per_problem: usize,
    /// All correct indices of a class get the same probability.
    pub equal_correct: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            num_hallucination_classes: 2,
            problems_per_class: 3,
            num_program_classes: 8,
            correct_per_problem: 1,
            equal_correct: true,
        }
    }
}

/// Integer weights are drawn from `1..=WEIGHT_RANGE`.
pub const WEIGHT_RANGE: u64 = 1_000_000;

/// A uniformly random permutation of `0..n` without fixed points.
pub fn derangement(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(n >= 2, "no derangement of fewer than two elements");
    loop {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &x)| i != x) {
            return p;
        }
    }
}

/// Draws a model satisfying every invariant; deterministic per seed.
pub fn random_model(spec: &ModelSpec, seed: u64) -> Result<ParrotModel, TheoryError> {
    let k = spec.problems_per_class;
    let correct_total = k * spec.correct_per_problem;
    if spec.num_hallucination_classes < 2 {
        return Err(TheoryError::Infeasible("need at least two hallucination classes".into()));
    }
    if k < 2 {
        return Err(TheoryError::Infeasible("problemsPerClass must be at least 2".into()));
    }
    if spec.correct_per_problem < 1 {
        return Err(TheoryError::Infeasible("correctPerProblem must be at least 1".into()));
    }
    if spec.num_program_classes < correct_total + 2 {
        return Err(TheoryError::Infeasible(format!(
            "{} program classes cannot hold {correct_total} correct and two buggy ones",
            spec.num_program_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.num_program_classes;
    let mut classes = Vec::new();
    for h in 0..spec.num_hallucination_classes {
        let problems: Vec<String> = (0..k).map(|j| format!("d{h}.{j}")).collect();
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        let (correct_idx, buggy_idx) = indices.split_at(correct_total);
        let correct: BTreeMap<String, Vec<usize>> = problems
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let r = spec.correct_per_problem;
                (d.clone(), correct_idx[j * r..(j + 1) * r].to_vec())
            })
            .collect();
        let perm = derangement(k, &mut rng);
        let tau: BTreeMap<String, String> = (0..k).map(|j| (problems[j].clone(), problems[perm[j]].clone())).collect();
        let mut sigma = vec![0; n];
        for j in 0..k {
            for (a, b) in correct[&problems[j]].iter().zip(&correct[&problems[perm[j]]]) {
                sigma[*a] = *b;
            }
        }
        let bperm = derangement(buggy_idx.len(), &mut rng);
        for (i, &b) in buggy_idx.iter().enumerate() {
            sigma[b] = buggy_idx[bperm[i]];
        }
        let mut weights = vec![0u64; n];
        let shared = rng.random_range(1..=WEIGHT_RANGE);
        for &c in correct_idx {
            weights[c] = if spec.equal_correct { shared } else { rng.random_range(1..=WEIGHT_RANGE) };
        }
        // Distinct error weights by rejection.
        let mut used = BTreeSet::new();
        for &b in buggy_idx {
            let w = loop {
                let w = rng.random_range(1..=WEIGHT_RANGE);
                if used.insert(w) {
                    break w;
                }
            };
            weights[b] = w;
        }
        let total: u64 = weights.iter().sum();
        let pi = weights.iter().map(|&w| q(w, total)).collect();
        classes.push(HallucinationClass { problems, pi, correct, tau, sigma });
    }
    let model = ParrotModel { classes };
    model.validate()?;
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub delta: f64,
    pub stderr: f64,
    /// Some problem had a conditional with no conditioning events; its
    /// gain was taken as 0 with maximal variance.
    pub widened: bool,
}

impl McEstimate {
    pub fn within(&self, exact: f64, sigmas: f64) -> bool {
        (self.delta - exact).abs() <= sigmas * self.stderr
    }
}

/// Estimates the expected gain by sampling `trials` pairs `(p, q)` and,
/// independently, `trials` pairs `(p, q')` per problem.
pub fn monte_carlo_delta(model: &ParrotModel, trials: u64, seed: u64) -> Result<McEstimate, TheoryError> {
    if trials == 0 {
        return Err(TheoryError::NoTrials);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut var = 0.0;
    let mut widened = false;
    for class in &model.classes {
        let weights: Vec<f64> = class.pi.iter().map(to_f64).collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| TheoryError::Invalid(e.to_string()))?;
        for d in &class.problems {
            let correct: BTreeSet<usize> = class.correct[d].iter().copied().collect();
            let cell = |matches: &dyn Fn(usize, usize) -> bool, rng: &mut ChaCha8Rng| {
                let (mut hits, mut events) = (0u64, 0u64);
                for _ in 0..trials {
                    let p = dist.sample(rng);
                    let q = dist.sample(rng);
                    if matches(p, q) {
                        events += 1;
                        hits += u64::from(correct.contains(&p));
                    }
                }
                (events > 0).then(|| {
                    let m = hits as f64 / events as f64;
                    (m, m * (1.0 - m) / events as f64)
                })
            };
            let plur = cell(&|p, q| p == q, &mut rng);
            let tri = cell(&|p, q| class.sigma[p] == q, &mut rng);
            match (plur, tri) {
                (Some((a, va)), Some((b, vb))) => {
                    sum += b - a;
                    var += va + vb;
                }
                _ => {
                    widened = true;
                    var += 1.0;
                }
            }
        }
    }
    let n = model.num_problems() as f64;
    Ok(McEstimate { delta: sum / n, stderr: var.sqrt() / n, widened })
}

/// Seed for the `i`-th model of a batch.
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub spec: ModelSpec,
    pub seed: u64,
    pub models: usize,
    pub mc_models: usize,
    pub trials: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { spec: ModelSpec::default(), seed: 0, models: 1000, mc_models: 10, trials: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRow {
    pub seed: u64,
    pub exact: f64,
    pub estimate: McEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    /// Equal-correct models with a positive gain, out of `config.models`.
    pub equal_correct_positive: usize,
    /// Dissociative models found and how many had a positive gain.
    pub dissociative: usize,
    pub dissociative_positive: usize,
    pub dissociative_draws: usize,
    pub rearrangement_cases: usize,
    pub rearrangement_ok: usize,
    pub smallest_delta: f64,
    pub monte_carlo: Vec<McRow>,
}

impl SuiteReport {
    pub fn equal_correct_ok(&self) -> bool {
        self.equal_correct_positive == self.config.models
    }

    pub fn dissociative_ok(&self) -> bool {
        self.dissociative >= self.config.models && self.dissociative_positive == self.dissociative
    }

    pub fn rearrangement_holds(&self) -> bool {
        self.rearrangement_ok == self.rearrangement_cases
    }

    pub fn monte_carlo_ok(&self) -> bool {
        self.monte_carlo.iter().all(|r| !r.estimate.widened && r.estimate.within(r.exact, 3.0))
    }

    pub fn all_ok(&self) -> bool {
        self.equal_correct_ok() && self.dissociative_ok() && self.rearrangement_holds() && self.monte_carlo_ok()
    }

    pub fn render(&self) -> String {
        let s = &self.config.spec;
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        let mut out = format!(
            "spec: classes={} problems/class={} program-classes={} correct/problem={} seed={}\n",
            s.num_hallucination_classes,
            s.problems_per_class,
            s.num_program_classes,
            s.correct_per_problem,
            self.config.seed
        );
        out += &format!(
            "equal-correct gain > 0      {}/{} {}\n",
            self.equal_correct_positive,
            self.config.models,
            mark(self.equal_correct_ok())
        );
        out += &format!(
            "dissociative gain > 0       {}/{} ({} draws) {}\n",
            self.dissociative_positive,
            self.dissociative,
            self.dissociative_draws,
            mark(self.dissociative_ok())
        );
        out += &format!(
            "rearrangement               {}/{} {}\n",
            self.rearrangement_ok,
            self.rearrangement_cases,
            mark(self.rearrangement_holds())
        );
        out += &format!("smallest equal-correct gain {:.6e}\n", self.smallest_delta);
        out += "seed,exact,estimate,stderr,within3se\n";
        for r in &self.monte_carlo {
            out += &format!(
                "{},{:.6},{:.6},{:.6},{}\n",
                r.seed,
                r.exact,
                r.estimate.delta,
                r.estimate.stderr,
                r.estimate.within(r.exact, 3.0) && !r.estimate.widened
            );
        }
        out += &format!("overall {}\n", mark(self.all_ok()));
        out
    }
}

fn rearrangement_ok(pi: &[Q], sigma: &[usize]) -> bool {
    let r = rearrangement_check(pi, sigma);
    r.lhs >= r.rhs && (!r.strict || r.lhs > r.rhs)
}

/// Checks the positivity results and the rearrangement inequality on
/// seeded random models and compares Monte-Carlo estimates with the closed
/// form.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport, TheoryError> {
    use rayon::prelude::*;
    let equal_spec = ModelSpec { equal_correct: true, ..config.spec };
    let free_spec = ModelSpec { equal_correct: false, ..config.spec };
    let equal: Vec<ParrotModel> = (0..config.models as u64)
        .into_par_iter()
        .map(|i| random_model(&equal_spec, derive_seed(config.seed, i)))
        .collect::<Result<_, _>>()?;
    let deltas: Vec<Q> = equal.par_iter().map(expected_delta).collect();
    let equal_correct_positive = deltas.iter().filter(|d| **d > Q::zero()).count();
    let smallest_delta = deltas.iter().min().map(to_f64).unwrap_or(f64::NAN);

    let mut dissociative = Vec::new();
    let mut draws = 0usize;
    let cap = config.models.saturating_mul(1000).max(1);
    while dissociative.len() < config.models && draws < cap {
        let batch = (config.models - dissociative.len()).max(64);
        let found: Vec<ParrotModel> = (draws..draws + batch)
            .into_par_iter()
            .map(|i| random_model(&free_spec, derive_seed(config.seed ^ 0xD15, i as u64)))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|m| m.classes.iter().all(|c| class_is_dissociative(c).unwrap_or(false)))
            .collect();
        draws += batch;
        dissociative.extend(found);
    }
    dissociative.truncate(config.models);
    let dissociative_positive = dissociative.par_iter().filter(|m| expected_delta(m) > Q::zero()).count();

    let cases: Vec<&HallucinationClass> = equal.iter().chain(&dissociative).flat_map(|m| &m.classes).collect();
    let rearrangement_ok_count = cases.par_iter().filter(|c| rearrangement_ok(&c.pi, &c.sigma)).count();

    let monte_carlo = (0..config.mc_models as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed ^ 0x3C, i);
            let model = random_model(&free_spec, seed)?;
            Ok(McRow {
                seed,
                exact: to_f64(&expected_delta(&model)),
                estimate: monte_carlo_delta(&model, config.trials, seed)?,
            })
        })
        .collect::<Result<Vec<_>, TheoryError>>()?;

    Ok(SuiteReport {
        config: config.clone(),
        equal_correct_positive,
        dissociative: dissociative.len(),
        dissociative_positive,
        dissociative_draws: draws,
        rearrangement_cases: cases.len(),
        rearrangement_ok: rearrangement_ok_count,
        smallest_delta,
        monte_carlo,
    })
}
