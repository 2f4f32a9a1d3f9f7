use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;
use tri_core::theory::{
    expected_delta, monte_carlo_delta, plurality_confidence, random_model, rearrangement_check, run_suite,
    triangulation_confidence, ModelSpec, ParrotModel, SuiteConfig, TheoryError,
};

type Q = BigRational;

/// Conditional probabilities by summing the joint distribution of two
/// independent draws over every pair of indices.
fn joint_oracle(pi: &[Q], sigma: &[usize], correct: &[usize]) -> (Q, Q) {
    let c: BTreeSet<usize> = correct.iter().copied().collect();
    let (mut eq, mut eq_c, mut m, mut m_c) = (Q::zero(), Q::zero(), Q::zero(), Q::zero());
    for p in 0..pi.len() {
        for q in 0..pi.len() {
            let w = &pi[p] * &pi[q];
            if p == q {
                eq += &w;
                if c.contains(&p) {
                    eq_c += &w;
                }
            }
            if sigma[p] == q {
                m += &w;
                if c.contains(&p) {
                    m_c += &w;
                }
            }
        }
    }
    (eq_c / eq, m_c / m)
}

fn oracle_delta(model: &ParrotModel) -> Q {
    let mut total = Q::zero();
    for class in &model.classes {
        for d in &class.problems {
            let (plur, tri) = joint_oracle(&class.pi, &class.sigma, &class.correct[d]);
            total += tri - plur;
        }
    }
    total / Q::from_integer(BigInt::from(model.num_problems()))
}

#[test]
fn closed_forms_match_joint_enumeration() {
    for seed in 0..50 {
        for equal_correct in [true, false] {
            let spec = ModelSpec {
                equal_correct,
                correct_per_problem: 1 + (seed as usize % 2),
                num_program_classes: 10,
                ..ModelSpec::default()
            };
            let model = random_model(&spec, seed).unwrap();
            for class in &model.classes {
                for d in &class.problems {
                    let c = &class.correct[d];
                    let (plur, tri) = joint_oracle(&class.pi, &class.sigma, c);
                    assert_eq!(plurality_confidence(&class.pi, c), plur);
                    assert_eq!(triangulation_confidence(&class.pi, &class.sigma, c), tri);
                }
                assert_eq!(tri_core::theory::class_delta(class), tri_core::theory::class_delta_closed_form(class));
            }
            assert_eq!(expected_delta(&model), oracle_delta(&model));
        }
    }
}

#[test]
fn identity_sigma_gives_zero_gain() {
    for seed in 0..200 {
        let mut model = random_model(&ModelSpec::default(), seed).unwrap();
        for class in &mut model.classes {
            class.sigma = (0..class.pi.len()).collect();
            for d in &class.problems {
                let c = &class.correct[d];
                assert_eq!(triangulation_confidence(&class.pi, &class.sigma, c), plurality_confidence(&class.pi, c));
            }
        }
        assert_eq!(expected_delta(&model), Q::zero());
    }
}

#[test]
fn infeasible_specs_are_rejected() {
    let base = ModelSpec::default();
    for bad in [
        ModelSpec { problems_per_class: 1, ..base },
        ModelSpec { num_program_classes: 4, ..base },
        ModelSpec { correct_per_problem: 0, ..base },
        ModelSpec { num_hallucination_classes: 1, ..base },
    ] {
        assert!(matches!(random_model(&bad, 0), Err(TheoryError::Infeasible(_))));
    }
}

#[test]
fn monte_carlo_tracks_closed_form() {
    let model = random_model(&ModelSpec { equal_correct: false, ..ModelSpec::default() }, 42).unwrap();
    let exact = tri_core::theory::to_f64(&expected_delta(&model));
    let est = monte_carlo_delta(&model, 100_000, 42).unwrap();
    assert!(!est.widened);
    assert!(est.within(exact, 3.0), "{est:?} vs {exact}");
}

#[test]
fn positivity_suite() {
    let report = run_suite(&SuiteConfig { mc_models: 2, trials: 20_000, ..SuiteConfig::default() }).unwrap();
    assert!(report.equal_correct_ok(), "{}", report.render());
    assert!(report.dissociative_ok(), "{}", report.render());
    assert!(report.rearrangement_holds(), "{}", report.render());
    assert!(report.monte_carlo_ok(), "{}", report.render());
    assert_eq!(report, run_suite(&report.config).unwrap());
}

proptest! {
    #[test]
    fn rearrangement_inequality(
        (weights, sigma) in (2usize..8).prop_flat_map(|n| (
            proptest::collection::vec(1u64..6, n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )),
    ) {
        let total: u64 = weights.iter().sum();
        let pi: Vec<Q> = weights.iter().map(|&w| Q::new(w.into(), total.into())).collect();
        let r = rearrangement_check(&pi, &sigma);
        prop_assert!(r.lhs >= r.rhs);
        let distinct = weights.iter().collect::<BTreeSet<_>>().len() == weights.len();
        let deranged = sigma.iter().enumerate().all(|(i, &s)| i != s);
        prop_assert_eq!(r.strict, distinct && deranged);
        if r.strict {
            prop_assert!(r.lhs > r.rhs);
        }
        // Equality exactly when every entry is matched with an equal one.
        let matched = (0..pi.len()).all(|i| pi[i] == pi[sigma[i]]);
        prop_assert_eq!(r.lhs == r.rhs, matched);
    }

    #[test]
    fn equal_correct_models_gain(seed in any::<u64>()) {
        let model = random_model(&ModelSpec::default(), seed).unwrap();
        prop_assert!(expected_delta(&model) > Q::zero());
    }
}
