//! Selection of correct programs from a sample of generated candidates, or
//! abstention, by checking consistency across transformed problems.

pub mod baselines;
pub mod consensus;
pub mod corpus;
pub mod evaluation;
pub mod exec;
pub mod fixtures;
pub mod gateway;
pub mod problem;
pub mod property;
pub mod run;
pub mod theory;
pub mod triangulation;
pub mod types;
pub mod value;
pub mod wire;

pub use exec::{ExecError, ExecutionConfig, ExecutionOutcome, Harness};
pub use problem::{
    Backend, CandidateProgram, FunctionSignature, Param, ProblemDescription, ProblemRole, Provenance, RunnerEndpoint,
    TestInputSet,
};
pub use types::TypeTag;
pub use value::{canonical_encode, strongest, values_equal, CanonicalKey, SetKind, Special, Value};
