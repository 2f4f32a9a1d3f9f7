//! Problem descriptions, candidate programs and shared test inputs.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::TypeTag;
use crate::value::{encode_args, CanonicalKey, Value, ValueError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProblemError {
    #[error("signature {0} has no parameters")]
    NoParams(String),
    #[error("signature {sig} repeats parameter {param}")]
    DuplicateParam { sig: String, param: String },
    #[error("argument index {index} out of range for {sig} with {arity} parameters")]
    ArgIndex { sig: String, index: usize, arity: usize },
    #[error("test input set for {0} is empty")]
    EmptyInputs(String),
    #[error("test input {index} for {problem}: {source}")]
    BadInput { problem: String, index: usize, source: ValueError },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeTag,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: TypeTag) -> Param {
        Param { name: name.into(), ty }
    }
}

fn default_result_name() -> String {
    "result".to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSignature {
    pub name: String,
    pub params: Vec<Param>,
    pub returns: TypeTag,
    /// Name the return value takes when it becomes a parameter of an
    /// inverse problem.
    #[serde(default = "default_result_name")]
    pub result_name: String,
}

impl FunctionSignature {
    pub fn new(name: impl Into<String>, params: Vec<Param>, returns: TypeTag) -> Self {
        FunctionSignature { name: name.into(), params, returns, result_name: default_result_name() }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.params.is_empty() {
            return Err(ProblemError::NoParams(self.name.clone()));
        }
        let mut seen = HashSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(ProblemError::DuplicateParam { sig: self.name.clone(), param: p.name.clone() });
            }
        }
        Ok(())
    }

    pub fn check_arg(&self, index: usize) -> Result<(), ProblemError> {
        if index < self.arity() {
            Ok(())
        } else {
            Err(ProblemError::ArgIndex { sig: self.name.clone(), index, arity: self.arity() })
        }
    }

    /// Does an argument tuple conform to the parameter types?
    pub fn admits_args(&self, args: &[Value]) -> bool {
        args.len() == self.arity() && self.params.iter().zip(args).all(|(p, v)| p.ty.admits(v))
    }

    /// Renders the signature as Python-style source text.
    pub fn render(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| format!("{}: {}", p.name, p.ty)).collect();
        format!("def {}({}) -> {}", self.name, params.join(", "), self.returns)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemRole {
    Original,
    Inverse,
    PartialInverse {
        arg: usize,
    },
    SetValuedInverse {
        arg: usize,
    },
    Enumeration,
    Pointwise,
    UnionBranch {
        tag: String,
    },
    /// Baseline perturbation of the original problem (translation,
    /// off-by-one).
    Perturbed {
        variant: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDescription {
    pub id: String,
    pub text: String,
    pub signature: FunctionSignature,
    pub role: ProblemRole,
    /// Stateless stream-processing problem (sequence in, sequence out).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stream: bool,
}

impl ProblemDescription {
    pub fn original(id: impl Into<String>, text: impl Into<String>, signature: FunctionSignature) -> Self {
        ProblemDescription { id: id.into(), text: text.into(), signature, role: ProblemRole::Original, stream: false }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        self.signature.validate()?;
        match self.role {
            ProblemRole::PartialInverse { arg } | ProblemRole::SetValuedInverse { arg } => {
                self.signature.check_arg(arg)
            }
            _ => Ok(()),
        }
    }
}

/// How a worker process for a runner-backed candidate is launched:
/// `command... source entrypoint`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerEndpoint {
    pub command: Vec<String>,
    pub source: PathBuf,
    pub entrypoint: String,
}

/// Lookup table from canonical argument-tuple encoding to output.
pub type FixtureTable = BTreeMap<CanonicalKey, Value>;

#[derive(Clone, Debug, PartialEq)]
pub enum Backend {
    Runner(RunnerEndpoint),
    Fixture(Arc<FixtureTable>),
    /// `i ↦ head(inner([i]))`.
    StreamLift {
        inner: String,
    },
    /// Dispatches on the constructor tag of the argument at `output_arg`.
    UnionInverse {
        output_arg: usize,
        branches: BTreeMap<String, String>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateProgram {
    pub id: String,
    pub problem_id: String,
    pub backend: Backend,
}

impl CandidateProgram {
    pub fn fixture(id: impl Into<String>, problem_id: impl Into<String>, table: FixtureTable) -> Self {
        CandidateProgram { id: id.into(), problem_id: problem_id.into(), backend: Backend::Fixture(Arc::new(table)) }
    }

    /// Builds a fixture-backed candidate by tabulating a function over
    /// argument tuples.
    pub fn tabulate<'a>(
        id: impl Into<String>,
        problem_id: impl Into<String>,
        inputs: impl IntoIterator<Item = &'a [Value]>,
        f: impl Fn(&[Value]) -> Value,
    ) -> Self {
        let table = inputs
            .into_iter()
            .map(|args| (encode_args(args).expect("fixture inputs are canonical"), f(args)))
            .collect();
        CandidateProgram::fixture(id, problem_id, table)
    }

    pub fn runner(id: impl Into<String>, problem_id: impl Into<String>, endpoint: RunnerEndpoint) -> Self {
        CandidateProgram { id: id.into(), problem_id: problem_id.into(), backend: Backend::Runner(endpoint) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    LlmGenerated,
    Fixture,
}

/// Argument tuples shared by every strategy run on a problem.
#[derive(Clone, Debug, PartialEq)]
pub struct TestInputSet {
    problem_id: String,
    inputs: Vec<Vec<Value>>,
    provenance: Provenance,
}

impl TestInputSet {
    /// Deduplicates under canonical encoding, keeping first occurrences.
    pub fn new(
        problem_id: impl Into<String>,
        inputs: impl IntoIterator<Item = Vec<Value>>,
        provenance: Provenance,
    ) -> Result<Self, ProblemError> {
        let problem_id = problem_id.into();
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for (index, args) in inputs.into_iter().enumerate() {
            let key = encode_args(&args).map_err(|source| ProblemError::BadInput {
                problem: problem_id.clone(),
                index,
                source,
            })?;
            if seen.insert(key) {
                kept.push(args);
            }
        }
        if kept.is_empty() {
            return Err(ProblemError::EmptyInputs(problem_id));
        }
        Ok(TestInputSet { problem_id, inputs: kept, provenance })
    }

    /// Single-argument inputs.
    pub fn unary(problem_id: impl Into<String>, values: impl IntoIterator<Item = Value>) -> Result<Self, ProblemError> {
        TestInputSet::new(problem_id, values.into_iter().map(|v| vec![v]), Provenance::Fixture)
    }

    pub fn problem_id(&self) -> &str {
        &self.problem_id
    }

    pub fn inputs(&self) -> &[Vec<Value>] {
        &self.inputs
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.inputs[0].len()
    }
}
