//! Equivalence classes of candidates and the consensus strategies built on
//! them: plurality, majority, RANSAC, and the select-or-abstain pipeline.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ExecError, Harness};
use crate::problem::TestInputSet;
use crate::property::EvalConfig;
use crate::triangulation::{
    cascade_enum_sinv, check_agreement, lifted_id, stream_elements, stream_lift, Scheme, TriError, VerdictRecord,
};
use crate::value::{encode_args, CanonicalKey, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("no equivalence classes")]
    NoClasses,
    #[error("agreement matrix is {rows}x{cols} but sizes are {row_sizes}x{col_sizes}")]
    Dimensions { rows: usize, cols: usize, row_sizes: usize, col_sizes: usize },
    #[error("threshold must lie in (0, 1]")]
    Threshold,
    #[error("no forward samples")]
    NoForward,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Triangulation(#[from] TriError),
}

pub type Mass = Ratio<u64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalenceClass {
    /// Equal to the representative's id.
    pub id: String,
    pub members: Vec<String>,
    pub representative: String,
    pub behavior: BTreeMap<CanonicalKey, Value>,
    pub sample_size: u64,
}

impl EquivalenceClass {
    pub fn size(&self) -> u64 {
        self.members.len() as u64
    }

    pub fn mass(&self) -> Mass {
        Ratio::new(self.size(), self.sample_size)
    }
}

/// Groups candidates with identical outcome vectors (specials compared by
/// kind). Classes come out by decreasing size, then representative id.
pub fn cluster(
    h: &Harness,
    candidates: &[String],
    inputs: &TestInputSet,
) -> Result<Vec<EquivalenceClass>, ConsensusError> {
    let outcomes = h.execute_many(candidates, inputs)?;
    let keys: Vec<CanonicalKey> =
        inputs.inputs().iter().map(|a| encode_args(a).expect("test inputs are canonical")).collect();
    let mut groups: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (i, outs) in outcomes.iter().enumerate() {
        let vector = Value::Seq(outs.iter().map(|o| o.value.clone()).collect());
        groups.entry(vector.fingerprint()).or_default().push(i);
    }
    let n = candidates.len() as u64;
    let mut classes: Vec<EquivalenceClass> = groups
        .into_values()
        .map(|idx| {
            let mut members: Vec<String> = idx.iter().map(|&i| candidates[i].clone()).collect();
            members.sort();
            let rep = members[0].clone();
            let behavior = keys.iter().cloned().zip(outcomes[idx[0]].iter().map(|o| o.value.clone())).collect();
            EquivalenceClass { id: rep.clone(), representative: rep, members, behavior, sample_size: n }
        })
        .collect();
    classes.sort_by(|a, b| b.size().cmp(&a.size()).then_with(|| a.id.cmp(&b.id)));
    Ok(classes)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConsensusDecision {
    Selected { class_id: String, representative: String, strategy: String, score: Mass },
    Abstained { strategy: String, reason: String },
}

impl ConsensusDecision {
    pub fn selected_class(&self) -> Option<&str> {
        match self {
            ConsensusDecision::Selected { class_id, .. } => Some(class_id),
            ConsensusDecision::Abstained { .. } => None,
        }
    }

    pub fn is_abstention(&self) -> bool {
        matches!(self, ConsensusDecision::Abstained { .. })
    }

    pub fn to_record(&self, problem_id: &str) -> DecisionRecord {
        match self {
            ConsensusDecision::Selected { class_id, strategy, score, .. } => DecisionRecord {
                problem_id: problem_id.to_string(),
                strategy: strategy.clone(),
                decision: "selected".into(),
                class_id: Some(class_id.clone()),
                score: Some(format!("{}/{}", score.numer(), score.denom())),
                reason: None,
            },
            ConsensusDecision::Abstained { strategy, reason } => DecisionRecord {
                problem_id: problem_id.to_string(),
                strategy: strategy.clone(),
                decision: "abstained".into(),
                class_id: None,
                score: None,
                reason: Some(reason.clone()),
            },
        }
    }
}

/// Serialized form of a decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub problem_id: String,
    pub strategy: String,
    pub decision: String,
    pub class_id: Option<String>,
    /// Exact score as `numerator/denominator`.
    pub score: Option<String>,
    pub reason: Option<String>,
}

fn best_by_mass(classes: &[EquivalenceClass]) -> Option<&EquivalenceClass> {
    classes.iter().min_by(|a, b| b.mass().cmp(&a.mass()).then_with(|| a.representative.cmp(&b.representative)))
}

pub fn plurality(classes: &[EquivalenceClass]) -> Result<ConsensusDecision, ConsensusError> {
    let best = best_by_mass(classes).ok_or(ConsensusError::NoClasses)?;
    Ok(ConsensusDecision::Selected {
        class_id: best.id.clone(),
        representative: best.representative.clone(),
        strategy: "plurality".into(),
        score: best.mass(),
    })
}

/// Selects the heaviest class if its mass reaches `threshold`.
pub fn majority(classes: &[EquivalenceClass], threshold: Mass) -> Result<ConsensusDecision, ConsensusError> {
    if threshold <= Ratio::from_integer(0) || threshold > Ratio::from_integer(1) {
        return Err(ConsensusError::Threshold);
    }
    let strategy = format!("majority{}/{}", threshold.numer(), threshold.denom());
    match best_by_mass(classes) {
        Some(best) if best.mass() >= threshold => Ok(ConsensusDecision::Selected {
            class_id: best.id.clone(),
            representative: best.representative.clone(),
            strategy,
            score: best.mass(),
        }),
        _ => Ok(ConsensusDecision::Abstained { strategy, reason: "no majority".into() }),
    }
}

/// Class-level agreement between program classes (rows) and witness
/// classes (columns).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgreementMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<bool>>,
}

impl AgreementMatrix {
    pub fn new(rows: Vec<String>, cols: Vec<String>) -> Self {
        let cells = vec![vec![false; cols.len()]; rows.len()];
        AgreementMatrix { rows, cols, cells }
    }

    pub fn set(&mut self, row: usize, col: usize, agrees: bool) {
        self.cells[row][col] = agrees;
    }
}

/// Best biclique found for one program class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RansacScore {
    pub row: usize,
    /// `mass(P) · mass(Q)` in sample counts.
    pub score: u64,
    pub program_mass: u64,
    pub witness_mass: u64,
    pub programs: Vec<usize>,
    pub witnesses: Vec<usize>,
}

/// For every row, the maximum of `|P|·|Q|` over bicliques `(P, Q)` with
/// the row in `P`, sizes weighted by class sizes.
///
/// Optimal bicliques are closed: `Q` is the intersection of the rows in
/// `P`, and `P` all rows containing `Q`. The closed witness sets are
/// enumerated as the intersection closure of the distinct rows.
pub fn ransac_scores(
    matrix: &AgreementMatrix,
    program_sizes: &[u64],
    witness_sizes: &[u64],
) -> Result<Vec<RansacScore>, ConsensusError> {
    let (r, c) = (matrix.rows.len(), matrix.cols.len());
    if program_sizes.len() != r
        || witness_sizes.len() != c
        || matrix.cells.len() != r
        || matrix.cells.iter().any(|row| row.len() != c)
    {
        return Err(ConsensusError::Dimensions {
            rows: r,
            cols: c,
            row_sizes: program_sizes.len(),
            col_sizes: witness_sizes.len(),
        });
    }
    let row_sets: Vec<BTreeSet<usize>> =
        matrix.cells.iter().map(|row| row.iter().enumerate().filter(|(_, &a)| a).map(|(j, _)| j).collect()).collect();
    let mut closed: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
    for row in row_sets.iter().filter(|s| !s.is_empty()) {
        let mut fresh: Vec<BTreeSet<usize>> = vec![row.clone()];
        for q in &closed {
            let meet: BTreeSet<usize> = q.intersection(row).copied().collect();
            if !meet.is_empty() {
                fresh.push(meet);
            }
        }
        closed.extend(fresh);
    }
    let mut best: Vec<RansacScore> = (0..r)
        .map(|row| RansacScore { row, score: 0, program_mass: 0, witness_mass: 0, programs: vec![], witnesses: vec![] })
        .collect();
    for q in &closed {
        let programs: Vec<usize> = (0..r).filter(|&i| q.is_subset(&row_sets[i])).collect();
        let pm: u64 = programs.iter().map(|&i| program_sizes[i]).sum();
        let wm: u64 = q.iter().map(|&j| witness_sizes[j]).sum();
        let score = pm * wm;
        for &i in &programs {
            let cur = &best[i];
            if (score, wm, pm) > (cur.score, cur.witness_mass, cur.program_mass) {
                best[i] = RansacScore {
                    row: i,
                    score,
                    program_mass: pm,
                    witness_mass: wm,
                    programs: programs.clone(),
                    witnesses: q.iter().copied().collect(),
                };
            }
        }
    }
    Ok(best)
}

/// RANSAC consensus over class-level agreement. Ties go to the larger
/// witness mass, then the larger class, then the smaller class id.
pub fn ransac(
    matrix: &AgreementMatrix,
    program_sizes: &[u64],
    witness_sizes: &[u64],
    sample_size: u64,
    strategy: &str,
) -> Result<ConsensusDecision, ConsensusError> {
    if matrix.rows.is_empty() {
        return Err(ConsensusError::NoClasses);
    }
    let scores = ransac_scores(matrix, program_sizes, witness_sizes)?;
    let winner = scores.iter().filter(|s| s.score > 0).min_by(|a, b| {
        (b.score, b.witness_mass, program_sizes[b.row])
            .cmp(&(a.score, a.witness_mass, program_sizes[a.row]))
            .then_with(|| matrix.rows[a.row].cmp(&matrix.rows[b.row]))
    });
    Ok(match winner {
        Some(s) => {
            let witness_total: u64 = witness_sizes.iter().sum::<u64>().max(1);
            ConsensusDecision::Selected {
                class_id: matrix.rows[s.row].clone(),
                representative: matrix.rows[s.row].clone(),
                strategy: strategy.to_string(),
                score: Ratio::new(s.score, sample_size.max(1) * witness_total),
            }
        }
        None => ConsensusDecision::Abstained { strategy: strategy.to_string(), reason: "no agreeing witness".into() },
    })
}

/// Class-level agreement of every program class with every witness class.
pub fn agreement_matrix(
    h: &Harness,
    scheme: &Scheme,
    programs: &[EquivalenceClass],
    witnesses: &[EquivalenceClass],
    inputs: &TestInputSet,
    cfg: &EvalConfig,
    log: &mut Vec<VerdictRecord>,
) -> Result<AgreementMatrix, ConsensusError> {
    let mut m = AgreementMatrix::new(
        programs.iter().map(|c| c.id.clone()).collect(),
        witnesses.iter().map(|c| c.id.clone()).collect(),
    );
    for (i, p) in programs.iter().enumerate() {
        for (j, q) in witnesses.iter().enumerate() {
            let v = check_agreement(h, scheme, &p.representative, &q.representative, inputs, cfg)?;
            log.push(VerdictRecord {
                problem_id: inputs.problem_id().to_string(),
                scheme: scheme.to_string(),
                p_id: p.representative.clone(),
                q_id: q.representative.clone(),
                agrees: v.agrees,
                counterexample: v.counterexample.map(|c| c.description),
            });
            m.set(i, j, v.agrees);
        }
    }
    Ok(m)
}

fn sizes(classes: &[EquivalenceClass]) -> Vec<u64> {
    classes.iter().map(EquivalenceClass::size).collect()
}

/// Samples available to the triangulation pipeline for one problem.
#[derive(Clone, Debug, Default)]
pub struct PipelineSamples {
    pub forward: Vec<String>,
    pub enumerators: Vec<String>,
    pub set_inverses: Vec<String>,
    pub inverses: Vec<String>,
    /// Argument inverted by the (set-valued) inverses; `None` for full
    /// inversion.
    pub invert_arg: Option<usize>,
    /// Forward samples process sequences element by element; witnesses
    /// then solve the pointwise problem.
    pub stream: bool,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub decision: ConsensusDecision,
    /// Scheme that produced the selection, if any.
    pub scheme: Option<String>,
    pub forward_classes: Vec<EquivalenceClass>,
    pub log: Vec<VerdictRecord>,
}

fn scheme_for(kind: &str, arg: Option<usize>) -> Scheme {
    match (kind, arg) {
        ("inv", None) => Scheme::FullFwdInv,
        ("inv", Some(arg)) => Scheme::PartialFwdInv { arg },
        ("sinv", None) => Scheme::FullFwdSinv,
        (_, Some(arg)) => Scheme::PartialFwdSinv { arg },
        _ => Scheme::FullFwdSinv,
    }
}

/// Runs ENUM-SINV cascade, FWD-SINV and FWD-INV in this order and returns
/// the first RANSAC selection; abstains if every scheme fails.
pub fn decide_pipeline(
    h: &Harness,
    samples: &PipelineSamples,
    inputs: &TestInputSet,
    cfg: &EvalConfig,
) -> Result<PipelineOutcome, ConsensusError> {
    if samples.forward.is_empty() {
        return Err(ConsensusError::NoForward);
    }
    let forward_classes = cluster(h, &samples.forward, inputs)?;
    let n = samples.forward.len() as u64;
    let mut log = Vec::new();

    // Stream programs are triangulated through their element-wise lifts;
    // the scheme then also checks pointwise consistency.
    let wrap = |s: Scheme| if samples.stream { Scheme::stream(s) } else { s };
    let (tri_inputs, program_ids): (TestInputSet, Vec<String>) = if samples.stream {
        for c in &forward_classes {
            let base =
                h.candidate(&c.representative).ok_or_else(|| ExecError::UnknownCandidate(c.representative.clone()))?;
            h.register(stream_lift(&base));
        }
        (stream_elements(inputs)?, forward_classes.iter().map(|c| lifted_id(&c.representative)).collect())
    } else {
        (inputs.clone(), forward_classes.iter().map(|c| c.representative.clone()).collect())
    };

    if !samples.enumerators.is_empty() && !samples.set_inverses.is_empty() {
        let enum_classes = cluster(h, &samples.enumerators, &tri_inputs)?;
        let enum_reps: Vec<String> = enum_classes.iter().map(|c| c.representative.clone()).collect();
        let sinv_reps = representatives(h, &samples.set_inverses, samples, inputs)?;
        let cascade = cascade_enum_sinv(h, &program_ids, &enum_reps, &sinv_reps, samples.invert_arg, &tri_inputs, cfg)?;
        log.extend(cascade.log.iter().cloned());
        let surviving: Vec<&EquivalenceClass> =
            enum_classes.iter().filter(|c| cascade.surviving_enumerators.contains(&c.representative)).collect();
        if !surviving.is_empty() {
            let mut m = AgreementMatrix::new(
                forward_classes.iter().map(|c| c.id.clone()).collect(),
                surviving.iter().map(|c| c.id.clone()).collect(),
            );
            for (i, pid) in program_ids.iter().enumerate() {
                for (j, e) in surviving.iter().enumerate() {
                    let hit = cascade.stage2_pairs.iter().any(|(f, ee)| f == pid && *ee == e.representative);
                    m.set(i, j, hit);
                }
            }
            let witness_sizes: Vec<u64> = surviving.iter().map(|c| c.size()).collect();
            let d = ransac(&m, &sizes(&forward_classes), &witness_sizes, n, "tri")?;
            if !d.is_abstention() {
                return Ok(PipelineOutcome {
                    decision: d,
                    scheme: Some(
                        wrap(match samples.invert_arg {
                            Some(arg) => Scheme::PartialEnumSinv { arg },
                            None => Scheme::FullEnumSinv,
                        })
                        .to_string(),
                    ),
                    forward_classes,
                    log,
                });
            }
        }
    }

    for (kind, witnesses) in [("sinv", &samples.set_inverses), ("inv", &samples.inverses)] {
        if witnesses.is_empty() {
            continue;
        }
        let scheme = scheme_for(kind, samples.invert_arg);
        let witness_classes = witness_classes(h, witnesses, samples, inputs)?;
        let mut m = AgreementMatrix::new(
            forward_classes.iter().map(|c| c.id.clone()).collect(),
            witness_classes.iter().map(|c| c.id.clone()).collect(),
        );
        for (i, c) in forward_classes.iter().enumerate() {
            for (j, w) in witness_classes.iter().enumerate() {
                let v = check_agreement(h, &wrap(scheme.clone()), &c.representative, &w.representative, inputs, cfg)?;
                log.push(VerdictRecord {
                    problem_id: inputs.problem_id().to_string(),
                    scheme: wrap(scheme.clone()).to_string(),
                    p_id: c.representative.clone(),
                    q_id: w.representative.clone(),
                    agrees: v.agrees,
                    counterexample: v.counterexample.map(|c| c.description),
                });
                m.set(i, j, v.agrees);
            }
        }
        let d = ransac(&m, &sizes(&forward_classes), &sizes(&witness_classes), n, "tri")?;
        if !d.is_abstention() {
            return Ok(PipelineOutcome { decision: d, scheme: Some(wrap(scheme).to_string()), forward_classes, log });
        }
    }
    Ok(PipelineOutcome {
        decision: ConsensusDecision::Abstained { strategy: "tri".into(), reason: "all schemes failed".into() },
        scheme: None,
        forward_classes,
        log,
    })
}

/// Witnesses grouped by behavior on their own inputs: the outputs of the
/// forward classes on the test inputs, placed at the inverted argument.
fn witness_classes(
    h: &Harness,
    witnesses: &[String],
    samples: &PipelineSamples,
    inputs: &TestInputSet,
) -> Result<Vec<EquivalenceClass>, ConsensusError> {
    let probe = witness_inputs(h, samples, inputs)?;
    match probe {
        Some(probe) => cluster(h, witnesses, &probe),
        // Nothing to probe with: every witness is its own class.
        None => Ok(witnesses
            .iter()
            .map(|w| EquivalenceClass {
                id: w.clone(),
                members: vec![w.clone()],
                representative: w.clone(),
                behavior: BTreeMap::new(),
                sample_size: witnesses.len() as u64,
            })
            .collect()),
    }
}

fn representatives(
    h: &Harness,
    witnesses: &[String],
    samples: &PipelineSamples,
    inputs: &TestInputSet,
) -> Result<Vec<String>, ConsensusError> {
    Ok(witness_classes(h, witnesses, samples, inputs)?.into_iter().map(|c| c.representative).collect())
}

/// Inputs for witnesses: forward outputs on the test inputs substituted at
/// the inverted argument.
fn witness_inputs(
    h: &Harness,
    samples: &PipelineSamples,
    inputs: &TestInputSet,
) -> Result<Option<TestInputSet>, ConsensusError> {
    let base = if samples.stream { stream_elements(inputs)? } else { inputs.clone() };
    let k = samples.invert_arg.unwrap_or(0);
    let mut probe = Vec::new();
    for f in &samples.forward {
        let id = if samples.stream { lifted_id(f) } else { f.clone() };
        if samples.stream && h.candidate(&id).is_none() {
            if let Some(c) = h.candidate(f) {
                h.register(stream_lift(&c));
            }
        }
        for args in base.inputs() {
            let out = h.execute(&id, args)?.value;
            if out.contains_special() || crate::value::canonical_encode(&out).is_err() {
                continue;
            }
            let mut a = args.clone();
            a[k] = out;
            probe.push(a);
        }
    }
    if probe.is_empty() {
        return Ok(None);
    }
    Ok(TestInputSet::new(format!("{}:witness", inputs.problem_id()), probe, crate::problem::Provenance::Fixture).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::strategy::Strategy;

    fn matrix(cells: &[&[bool]]) -> AgreementMatrix {
        let rows = (0..cells.len()).map(|i| format!("p{i}")).collect();
        let cols = (0..cells[0].len()).map(|j| format!("q{j}")).collect();
        AgreementMatrix { rows, cols, cells: cells.iter().map(|r| r.to_vec()).collect() }
    }

    #[test]
    fn all_false_abstains() {
        let m = matrix(&[&[false, false], &[false, false]]);
        let d = ransac(&m, &[1, 1], &[1, 1], 2, "r").unwrap();
        assert!(d.is_abstention());
    }

    #[test]
    fn identical_rows_pool() {
        let m = matrix(&[&[true, false], &[true, false], &[false, true]]);
        let s = ransac_scores(&m, &[2, 3, 4], &[5, 1]).unwrap();
        assert_eq!(s[0].score, 25);
        assert_eq!(s[1].score, 25);
        assert_eq!(s[2].score, 4);
        let d = ransac(&m, &[2, 3, 4], &[5, 1], 9, "r").unwrap();
        assert_eq!(d.selected_class(), Some("p1"));
    }

    #[test]
    fn overlapping_rows_share_a_common_biclique() {
        // No two rows are equal, yet all three agree with q0 and q1.
        let m = matrix(&[
            &[true, true, true, false, false],
            &[true, true, false, true, false],
            &[true, true, false, false, true],
        ]);
        let s = ransac_scores(&m, &[1, 1, 1], &[1, 1, 1, 1, 1]).unwrap();
        assert!(s.iter().all(|x| x.score == 6));
    }

    #[test]
    fn dimension_mismatch() {
        let m = matrix(&[&[true]]);
        assert!(matches!(ransac_scores(&m, &[1, 1], &[1]), Err(ConsensusError::Dimensions { .. })));
    }

    fn brute(cells: &[Vec<bool>], ps: &[u64], ws: &[u64], row: usize) -> u64 {
        let r = cells.len();
        let mut best = 0;
        for mask in 0u32..(1 << r) {
            if mask & (1 << row) == 0 {
                continue;
            }
            let pm: u64 = (0..r).filter(|i| mask & (1 << i) != 0).map(|i| ps[i]).sum();
            let wm: u64 =
                (0..ws.len()).filter(|&j| (0..r).all(|i| mask & (1 << i) == 0 || cells[i][j])).map(|j| ws[j]).sum();
            best = best.max(pm * wm);
        }
        best
    }

    proptest::proptest! {
        #[test]
        fn scores_match_exhaustive_search(
            (cells, ps, ws) in (1usize..7, 1usize..7).prop_flat_map(|(r, c)| (
                proptest::collection::vec(proptest::collection::vec(proptest::bool::ANY, c), r),
                proptest::collection::vec(1u64..5, r),
                proptest::collection::vec(1u64..5, c),
            ))
        ) {
            let m = AgreementMatrix {
                rows: (0..cells.len()).map(|i| format!("p{i}")).collect(),
                cols: (0..ws.len()).map(|j| format!("q{j}")).collect(),
                cells: cells.clone(),
            };
            let s = ransac_scores(&m, &ps, &ws).unwrap();
            for (i, x) in s.iter().enumerate() {
                proptest::prop_assert_eq!(x.score, brute(&cells, &ps, &ws, i));
            }
        }
    }
}
