//! Sampling of programs, problem transformations, test inputs and baseline
//! artifacts from a language model, behind a record/replay transcript
//! cache.

pub mod signature;
pub mod transport;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{CandidateProgram, ProblemDescription, ProblemRole, Provenance, RunnerEndpoint, TestInputSet};
use crate::value::{encode_args, Value};

pub use transport::{
    CacheMode, CompletionRequest, CountingTransport, HttpTransport, LazyHttp, Offline, ScriptedTransport, Transcript,
    TranscriptCache, Transport,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("problem {0} has an empty description")]
    EmptyDescription(String),
    #[error("invalid sampling parameters: {0}")]
    Params(String),
    #[error("{kind} does not apply: {reason}")]
    Incompatible { kind: String, reason: String },
    #[error("provider failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("replay cache has no transcript {key} for {prompt_id}")]
    ReplayMiss { key: String, prompt_id: String },
    #[error("offline transport reached for {0}")]
    Offline(String),
    #[error("TRI_API_KEY is not set")]
    MissingApiKey,
    #[error("no valid test inputs for {0}")]
    NoInputs(String),
    #[error("cannot parse model response for {prompt_id}: {reason}")]
    Parse { prompt_id: String, reason: String },
    #[error("io: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub n: u32,
    pub temperature: f64,
    pub model: String,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { n: 30, temperature: 1.0, model: "gpt-4o".into() }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.n < 1 {
            return Err(GatewayError::Params("n must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Params("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "kebab-case")]
pub enum TransformKind {
    Inverse,
    PartialInverse(usize),
    SetValuedInverse(usize),
    Enumeration,
    Pointwise,
    UnionSplit,
    ChooseInvertArg,
    InputGeneration,
    BaselineTests,
    BaselinePostcondition,
    BaselineTranslate,
    BaselineOffByOne,
}

/// Prompt template shipped with the crate; the version enters the prompt
/// id and hence every transcript key.
#[derive(Clone, Copy, Debug)]
pub struct Template {
    pub name: &'static str,
    pub version: u32,
    pub text: &'static str,
}

macro_rules! template {
    ($name:literal, $version:literal) => {
        Template { name: $name, version: $version, text: include_str!(concat!("../../prompts/", $name, ".txt")) }
    };
}

pub const CODE: Template = template!("code", 1);
pub const INVERSE: Template = template!("inverse", 1);
pub const PARTIAL_INVERSE: Template = template!("partial_inverse", 1);
pub const SET_VALUED_INVERSE: Template = template!("set_valued_inverse", 1);
pub const ENUMERATION: Template = template!("enumeration", 1);
pub const POINTWISE: Template = template!("pointwise", 1);
pub const UNION_BRANCH: Template = template!("union_branch", 1);
pub const CHOOSE_ARG: Template = template!("choose_arg", 1);
pub const INPUTS: Template = template!("inputs", 1);
pub const BASELINE_TESTS: Template = template!("baseline_tests", 1);
pub const BASELINE_POSTCONDITION: Template = template!("baseline_postcondition", 1);
pub const BASELINE_TRANSLATE: Template = template!("baseline_translate", 1);
pub const BASELINE_OFF_BY_ONE: Template = template!("baseline_off_by_one", 1);

impl Template {
    /// Substitutes `{{name}}` placeholders.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        vars.iter().fold(self.text.to_string(), |acc, (k, v)| acc.replace(&format!("{{{{{k}}}}}"), v))
    }

    pub fn prompt_id(&self, problem_id: &str) -> String {
        format!("{}@{}:{problem_id}", self.name, self.version)
    }
}

/// Body of the first fenced code block, if any.
pub fn extract_code(response: &str) -> Option<String> {
    let start = response.find("```")?;
    let rest = &response[start + 3..];
    let body_start = rest.find('\n')? + 1;
    let body = &rest[body_start..];
    let end = body.find("```")?;
    let code = body[..end].trim_end();
    (!code.trim().is_empty()).then(|| format!("{code}\n"))
}

/// Plain JSON as produced by a generator: objects are maps, arrays are
/// sequences.
pub fn from_plain_json(j: &serde_json::Value) -> Option<Value> {
    Some(match j {
        serde_json::Value::Null => Value::None,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => Value::Int(n.to_string().parse::<BigInt>().ok()?),
        serde_json::Value::String(s) => Value::str(s.clone()),
        serde_json::Value::Array(items) => Value::Seq(items.iter().map(from_plain_json).collect::<Option<_>>()?),
        serde_json::Value::Object(m) => Value::Map(
            m.iter().map(|(k, v)| Some((k.clone(), from_plain_json(v)?))).collect::<Option<BTreeMap<_, _>>>()?,
        ),
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedInputs {
    pub inputs: Vec<Vec<Value>>,
    /// Lines that were not JSON arrays or did not match the signature.
    pub dropped: usize,
}

/// One JSON array of arguments per line, coerced to the parameter types.
pub fn parse_inputs(response: &str, d: &ProblemDescription) -> ParsedInputs {
    let mut out = ParsedInputs::default();
    let params = &d.signature.params;
    for line in response.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("```")) {
        let args = serde_json::from_str::<serde_json::Value>(line).ok().and_then(|j| match from_plain_json(&j)? {
            Value::Seq(items) if items.len() == params.len() => {
                params.iter().zip(&items).map(|(p, v)| p.ty.coerce(v)).collect::<Option<Vec<_>>>()
            }
            _ => None,
        });
        match args {
            Some(args) => out.inputs.push(args),
            None => out.dropped += 1,
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSample {
    pub id: String,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedInputs {
    pub inputs: TestInputSet,
    pub dropped: usize,
    pub batches: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Test,
    Postcondition,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineArtifact {
    pub id: String,
    pub kind: ArtifactKind,
    pub source: String,
    /// Arguments of a test case, from its `# args:` comment.
    pub args: Option<Vec<Value>>,
}

impl BaselineArtifact {
    pub fn entrypoint(&self) -> &'static str {
        match self.kind {
            ArtifactKind::Test => "check",
            ArtifactKind::Postcondition => "post",
        }
    }
}

/// Stops the input loop once this many distinct inputs exist.
pub const DEFAULT_INPUT_BUDGET: usize = 50;
/// Consecutive batches adding nothing new before the input loop stops.
pub const STAGNANT_BATCHES: u32 = 2;
/// Resamples of a response without a code block.
pub const MAX_RESAMPLES: u32 = 3;
const MAX_INPUT_BATCHES: u32 = 20;

pub struct Gateway<T> {
    transport: T,
    pub input_budget: usize,
}

fn is_valid_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl<T: Transport> Gateway<T> {
    pub fn new(transport: T) -> Self {
        Gateway { transport, input_budget: DEFAULT_INPUT_BUDGET }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn request(
        &self,
        tpl: &Template,
        d: &ProblemDescription,
        prompt: String,
        params: &SamplingParams,
        index: u32,
        attempt: u32,
    ) -> Result<String, GatewayError> {
        self.transport.complete(&CompletionRequest {
            prompt_id: tpl.prompt_id(&d.id),
            model: params.model.clone(),
            temperature: params.temperature,
            index,
            attempt,
            prompt,
        })
    }

    fn check(d: &ProblemDescription, params: &SamplingParams) -> Result<(), GatewayError> {
        if d.text.trim().is_empty() {
            return Err(GatewayError::EmptyDescription(d.id.clone()));
        }
        params.validate()
    }

    /// Samples code for `index` with up to `MAX_RESAMPLES` retries when the
    /// response has no code block.
    fn sample_code(
        &self,
        tpl: &Template,
        d: &ProblemDescription,
        prompt: &str,
        params: &SamplingParams,
        index: u32,
    ) -> Result<Option<String>, GatewayError> {
        for attempt in 0..=MAX_RESAMPLES {
            let response = self.request(tpl, d, prompt.to_string(), params, index, attempt)?;
            if let Some(code) = extract_code(&response) {
                return Ok(Some(code));
            }
            log::warn!("{}: sample {index} attempt {attempt} has no code block", d.id);
        }
        Ok(None)
    }

    /// `params.n` source texts for `d`; samples whose every attempt lacks a
    /// code block are dropped.
    pub fn sample_programs(
        &self,
        d: &ProblemDescription,
        params: &SamplingParams,
    ) -> Result<Vec<SourceSample>, GatewayError> {
        Self::check(d, params)?;
        let sig = d.signature.render();
        let prompt = CODE.render(&[("text", &d.text), ("signature", &sig)]);
        let mut out = Vec::new();
        for i in 0..params.n {
            if let Some(source) = self.sample_code(&CODE, d, &prompt, params, i)? {
                out.push(SourceSample { id: format!("{}#{i:03}", d.id), source });
            }
        }
        Ok(out)
    }

    fn rewrite(
        &self,
        tpl: &Template,
        d: &ProblemDescription,
        vars: &[(&str, &str)],
        params: &SamplingParams,
    ) -> Result<String, GatewayError> {
        let sig = d.signature.render();
        let mut all = vec![("text", d.text.as_str()), ("signature", sig.as_str())];
        all.extend_from_slice(vars);
        let zero = SamplingParams { temperature: 0.0, ..params.clone() };
        let text = self.request(tpl, d, tpl.render(&all), &zero, 0, 0)?;
        let text = text.trim();
        if text.is_empty() {
            return Err(GatewayError::Parse { prompt_id: tpl.prompt_id(&d.id), reason: "empty rewrite".into() });
        }
        Ok(text.to_string())
    }

    /// Transformed problem descriptions; one per branch for `UnionSplit`.
    /// Rewrites run at temperature 0.
    pub fn transform(
        &self,
        d: &ProblemDescription,
        kind: &TransformKind,
        params: &SamplingParams,
    ) -> Result<Vec<ProblemDescription>, GatewayError> {
        Self::check(d, params)?;
        let derived =
            |id: String, signature, role, text| ProblemDescription { id, text, signature, role, stream: false };
        let one = |tpl: &Template,
                   id: String,
                   sig: crate::problem::FunctionSignature,
                   role: ProblemRole,
                   extra: &[(&str, &str)]| {
            let target = sig.render();
            let mut vars = vec![("target", target.as_str())];
            vars.extend_from_slice(extra);
            let text = self.rewrite(tpl, d, &vars, params)?;
            Ok(vec![derived(id, sig, role, text)])
        };
        match kind {
            TransformKind::Inverse => {
                one(&INVERSE, format!("{}/inv", d.id), signature::inverse(&d.signature)?, ProblemRole::Inverse, &[])
            }
            TransformKind::PartialInverse(k) => {
                let sig = signature::partial_inverse(&d.signature, *k)?;
                let name = d.signature.params[*k].name.clone();
                one(
                    &PARTIAL_INVERSE,
                    format!("{}/inv{k}", d.id),
                    sig,
                    ProblemRole::PartialInverse { arg: *k },
                    &[("param", &name)],
                )
            }
            TransformKind::SetValuedInverse(k) => {
                let sig = signature::set_valued_inverse(&d.signature, *k)?;
                let name = d.signature.params[*k].name.clone();
                one(
                    &SET_VALUED_INVERSE,
                    format!("{}/sinv{k}", d.id),
                    sig,
                    ProblemRole::SetValuedInverse { arg: *k },
                    &[("param", &name)],
                )
            }
            TransformKind::Enumeration => one(
                &ENUMERATION,
                format!("{}/enum", d.id),
                signature::enumeration(&d.signature),
                ProblemRole::Enumeration,
                &[],
            ),
            TransformKind::Pointwise => one(
                &POINTWISE,
                format!("{}/pw", d.id),
                signature::pointwise(&d.signature)?,
                ProblemRole::Pointwise,
                &[],
            ),
            TransformKind::UnionSplit => {
                let mut out = Vec::new();
                for (tag, sig) in signature::union_split(&d.signature)? {
                    let branch = sig.returns.to_string();
                    out.extend(one(
                        &UNION_BRANCH,
                        format!("{}/{tag}", d.id),
                        sig,
                        ProblemRole::UnionBranch { tag },
                        &[("branch", &branch)],
                    )?);
                }
                Ok(out)
            }
            TransformKind::BaselineTranslate => {
                let text = self.rewrite(&BASELINE_TRANSLATE, d, &[], params)?;
                Ok(vec![derived(
                    format!("{}/zh", d.id),
                    d.signature.clone(),
                    ProblemRole::Perturbed { variant: "translate".into() },
                    text,
                )])
            }
            TransformKind::BaselineOffByOne => {
                let text = self.rewrite(&BASELINE_OFF_BY_ONE, d, &[], params)?;
                Ok(vec![derived(
                    format!("{}/plus1", d.id),
                    d.signature.clone(),
                    ProblemRole::Perturbed { variant: "off-by-one".into() },
                    text,
                )])
            }
            TransformKind::ChooseInvertArg
            | TransformKind::InputGeneration
            | TransformKind::BaselineTests
            | TransformKind::BaselinePostcondition => Err(GatewayError::Incompatible {
                kind: format!("{kind:?}"),
                reason: "not a problem transformation".into(),
            }),
        }
    }

    /// Index of the parameter to invert; single-parameter problems need no
    /// model call.
    pub fn choose_invert_arg(&self, d: &ProblemDescription, params: &SamplingParams) -> Result<usize, GatewayError> {
        Self::check(d, params)?;
        if d.signature.arity() == 1 {
            return Ok(0);
        }
        let answer = self.rewrite(&CHOOSE_ARG, d, &[], params)?;
        let name = answer.trim().trim_matches(|c| c == '`' || c == '"' || c == '\'' || c == '.');
        d.signature.params.iter().position(|p| p.name == name).ok_or_else(|| GatewayError::Parse {
            prompt_id: CHOOSE_ARG.prompt_id(&d.id),
            reason: format!("{name:?} is not a parameter"),
        })
    }

    /// Requests input batches until the budget is reached or
    /// `STAGNANT_BATCHES` consecutive batches add no new input.
    pub fn gen_test_inputs(
        &self,
        d: &ProblemDescription,
        params: &SamplingParams,
    ) -> Result<GeneratedInputs, GatewayError> {
        Self::check(d, params)?;
        let sig = d.signature.render();
        let prompt = INPUTS.render(&[("text", &d.text), ("signature", &sig)]);
        let mut seen = HashSet::new();
        let mut inputs = Vec::new();
        let (mut dropped, mut stagnant, mut batches) = (0, 0, 0);
        while inputs.len() < self.input_budget && stagnant < STAGNANT_BATCHES && batches < MAX_INPUT_BATCHES {
            let response = self.request(&INPUTS, d, prompt.clone(), params, batches, 0)?;
            batches += 1;
            let parsed = parse_inputs(&response, d);
            dropped += parsed.dropped;
            let before = inputs.len();
            for args in parsed.inputs {
                let key = encode_args(&args)
                    .map_err(|e| GatewayError::Parse { prompt_id: INPUTS.prompt_id(&d.id), reason: e.to_string() })?;
                if inputs.len() < self.input_budget && seen.insert(key) {
                    inputs.push(args);
                }
            }
            stagnant = if inputs.len() == before { stagnant + 1 } else { 0 };
        }
        if dropped > 0 {
            log::warn!("{}: dropped {dropped} generated inputs", d.id);
        }
        let inputs = TestInputSet::new(&d.id, inputs, Provenance::LlmGenerated)
            .map_err(|_| GatewayError::NoInputs(d.id.clone()))?;
        Ok(GeneratedInputs { inputs, dropped, batches })
    }

    /// Sampled assertion-style tests or postconditions.
    pub fn gen_baseline_artifacts(
        &self,
        d: &ProblemDescription,
        kind: &TransformKind,
        params: &SamplingParams,
    ) -> Result<Vec<BaselineArtifact>, GatewayError> {
        Self::check(d, params)?;
        let (tpl, kind, tag) = match kind {
            TransformKind::BaselineTests => (BASELINE_TESTS, ArtifactKind::Test, "test"),
            TransformKind::BaselinePostcondition => (BASELINE_POSTCONDITION, ArtifactKind::Postcondition, "post"),
            other => {
                return Err(GatewayError::Incompatible {
                    kind: format!("{other:?}"),
                    reason: "not a baseline artifact".into(),
                })
            }
        };
        let sig = d.signature.render();
        let prompt = tpl.render(&[("text", &d.text), ("signature", &sig)]);
        let mut out = Vec::new();
        for i in 0..params.n {
            let Some(source) = self.sample_code(&tpl, d, &prompt, params, i)? else { continue };
            let args = match kind {
                ArtifactKind::Test => match test_args(&source, d) {
                    Some(args) => Some(args),
                    None => {
                        log::warn!("{}: test {i} has no usable args comment", d.id);
                        continue;
                    }
                },
                ArtifactKind::Postcondition => None,
            };
            out.push(BaselineArtifact { id: format!("{}/{tag}#{i:03}", d.id), kind: kind.clone(), source, args });
        }
        Ok(out)
    }
}

fn test_args(source: &str, d: &ProblemDescription) -> Option<Vec<Value>> {
    let line = source.lines().find_map(|l| l.trim().strip_prefix("# args:"))?;
    parse_inputs(line, d).inputs.pop()
}

/// Writes a sampled source to `<dir>/<file-safe id>.py` and wraps it as a
/// runner-backed candidate.
pub fn source_candidate(
    id: &str,
    problem_id: &str,
    source: &str,
    entrypoint: &str,
    dir: &Path,
    command: &[String],
) -> Result<CandidateProgram, GatewayError> {
    if !is_valid_identifier(entrypoint) {
        return Err(GatewayError::Params(format!("bad entrypoint {entrypoint:?}")));
    }
    fs::create_dir_all(dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
    let file: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    let path = dir.join(format!("{file}.py"));
    fs::write(&path, source).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
    Ok(CandidateProgram::runner(
        id,
        problem_id,
        RunnerEndpoint { command: command.to_vec(), source: path, entrypoint: entrypoint.to_string() },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_extraction() {
        assert_eq!(
            extract_code("x\n```python\ndef f(x):\n    return x\n```\ny").as_deref(),
            Some("def f(x):\n    return x\n")
        );
        assert_eq!(extract_code("```\nreturn 1\n```").as_deref(), Some("return 1\n"));
        assert_eq!(extract_code("no code"), None);
        assert_eq!(extract_code("```python\n\n```"), None);
        assert_eq!(extract_code("```python\nunterminated"), None);
    }

    #[test]
    fn templates_render_every_placeholder() {
        for tpl in [
            CODE,
            INVERSE,
            PARTIAL_INVERSE,
            SET_VALUED_INVERSE,
            ENUMERATION,
            POINTWISE,
            UNION_BRANCH,
            CHOOSE_ARG,
            INPUTS,
            BASELINE_TESTS,
            BASELINE_POSTCONDITION,
            BASELINE_TRANSLATE,
            BASELINE_OFF_BY_ONE,
        ] {
            let vars = [("text", "T"), ("signature", "S"), ("target", "G"), ("param", "P"), ("branch", "B")];
            assert!(!tpl.render(&vars).contains("{{"), "{}", tpl.name);
        }
        assert_eq!(CODE.prompt_id("p"), "code@1:p");
    }

    #[test]
    fn params_are_validated() {
        assert!(SamplingParams::default().validate().is_ok());
        assert!(SamplingParams { n: 0, ..Default::default() }.validate().is_err());
        assert!(SamplingParams { temperature: -1.0, ..Default::default() }.validate().is_err());
        assert!(SamplingParams { temperature: f64::NAN, ..Default::default() }.validate().is_err());
    }
}
