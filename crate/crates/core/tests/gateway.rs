use std::collections::HashSet;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use tri_core::gateway::{
    CompletionRequest, CountingTransport, Gateway, GatewayError, Offline, SamplingParams, ScriptedTransport,
    TranscriptCache, TransformKind,
};
use tri_core::{FunctionSignature, Param, ProblemDescription, ProblemRole, TypeTag, Value};

fn toy() -> ProblemDescription {
    ProblemDescription::original(
        "toy-next",
        "Return the successor of an integer.",
        FunctionSignature::new("next", vec![Param::new("i", TypeTag::Int)], TypeTag::Int),
    )
}

fn fill() -> ProblemDescription {
    ProblemDescription::original(
        "fill-wildcards",
        "Replace every ? in s by a or b so that t is a subsequence of the result; return None if impossible.",
        FunctionSignature::new(
            "fill",
            vec![Param::new("s", TypeTag::Str), Param::new("t", TypeTag::Str)],
            TypeTag::optional(TypeTag::Str),
        ),
    )
}

fn code_reply(req: &CompletionRequest) -> Result<String, GatewayError> {
    Ok(format!("Here:\n```python\ndef next(i):\n    return i + {}\n```\n", req.index + 1))
}

fn params(n: u32) -> SamplingParams {
    SamplingParams { n, ..SamplingParams::default() }
}

#[test]
fn replay_returns_the_recorded_samples_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let live = Arc::new(CountingTransport::new(ScriptedTransport(code_reply)));
    let recorded =
        Gateway::new(TranscriptCache::record(dir.path(), live.clone())).sample_programs(&toy(), &params(2)).unwrap();
    assert_eq!(live.calls(), 2);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);

    let offline = Arc::new(CountingTransport::new(Offline));
    let replayed =
        Gateway::new(TranscriptCache::replay(dir.path(), offline.clone())).sample_programs(&toy(), &params(2)).unwrap();
    assert_eq!(replayed, recorded);
    assert_eq!(replayed.len(), 2);
    assert_eq!(offline.calls(), 0);
    assert!(replayed[1].source.contains("i + 2"));

    let miss = Gateway::new(TranscriptCache::replay(dir.path(), offline.clone())).sample_programs(&toy(), &params(3));
    assert!(matches!(miss, Err(GatewayError::ReplayMiss { .. })));
    assert_eq!(offline.calls(), 0);
}

#[test]
fn live_sampling_yields_n_sources() {
    let g = Gateway::new(TranscriptCache::live(ScriptedTransport(code_reply)));
    assert_eq!(g.sample_programs(&toy(), &params(30)).unwrap().len(), 30);
    let mut empty = toy();
    empty.text = "  ".into();
    assert!(matches!(g.sample_programs(&empty, &params(1)), Err(GatewayError::EmptyDescription(_))));
}

#[test]
fn responses_without_code_are_resampled() {
    let g = Gateway::new(ScriptedTransport(|req: &CompletionRequest| {
        Ok(match (req.index, req.attempt) {
            (0, a) if a < 2 => "I cannot".to_string(),
            (1, _) => "never code".to_string(),
            _ => "```python\ndef next(i):\n    return i + 1\n```".to_string(),
        })
    }));
    let out = g.sample_programs(&toy(), &params(3)).unwrap();
    let ids: Vec<&str> = out.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["toy-next#000", "toy-next#002"]);
}

#[test]
fn transformations_derive_signatures() {
    let calls = Arc::new(AtomicU32::new(0));
    let seen = calls.clone();
    let g = Gateway::new(ScriptedTransport(move |req: &CompletionRequest| {
        seen.fetch_add(1, Ordering::SeqCst);
        assert_eq!(req.temperature, 0.0);
        Ok(if req.prompt_id.starts_with("set_valued_inverse") {
            "Given s and a filled string, determine all possible strings t.".to_string()
        } else {
            "rewritten".to_string()
        })
    }));
    let sinv = g.transform(&fill(), &TransformKind::SetValuedInverse(1), &params(30)).unwrap();
    assert_eq!(sinv.len(), 1);
    assert!(sinv[0].text.contains("determine all possible strings t"));
    assert_eq!(sinv[0].role, ProblemRole::SetValuedInverse { arg: 1 });
    assert_eq!(sinv[0].signature.returns, TypeTag::set(TypeTag::Str));

    let branches = g.transform(&fill(), &TransformKind::UnionSplit, &params(30)).unwrap();
    let tags: Vec<_> = branches.iter().map(|b| b.role.clone()).collect();
    assert_eq!(tags, [ProblemRole::UnionBranch { tag: "str".into() }, ProblemRole::UnionBranch { tag: "none".into() }]);

    let stream = ProblemDescription::original(
        "double",
        "Double every element.",
        FunctionSignature::new(
            "double",
            vec![Param::new("xs", TypeTag::list(TypeTag::Int))],
            TypeTag::list(TypeTag::Int),
        ),
    );
    let pw = g.transform(&stream, &TransformKind::Pointwise, &params(30)).unwrap();
    assert_eq!(pw[0].signature.params[0].ty, TypeTag::Int);
    assert_eq!(pw[0].signature.returns, TypeTag::Int);

    assert!(matches!(
        g.transform(&fill(), &TransformKind::Inverse, &params(30)),
        Err(GatewayError::Incompatible { .. })
    ));
    assert!(g.transform(&fill(), &TransformKind::InputGeneration, &params(30)).is_err());
    assert_eq!(calls.load(Ordering::SeqCst), 1 + 2 + 1);
}

#[test]
fn invert_arg_choice() {
    let g = Gateway::new(ScriptedTransport(|_: &CompletionRequest| Ok("`t`\n".to_string())));
    assert_eq!(g.choose_invert_arg(&fill(), &params(1)).unwrap(), 1);
    let g = Gateway::new(Offline);
    assert_eq!(g.choose_invert_arg(&toy(), &params(1)).unwrap(), 0);
}

#[test]
fn input_generation_stops_on_stagnation() {
    let g = Gateway::new(ScriptedTransport(|req: &CompletionRequest| {
        Ok(match req.index {
            0 => (-10..=0).map(|i| format!("[{i}]\n")).collect::<String>() + "[0]\n[\"x\"]\n[1, 2]\nnot json\n",
            1 => (0..=10).map(|i| format!("[{i}]\n")).collect(),
            _ => "[3]\n[-3]\n".to_string(),
        })
    }));
    let out = g.gen_test_inputs(&toy(), &params(30)).unwrap();
    let got: Vec<Value> = out.inputs.inputs().iter().map(|a| a[0].clone()).collect();
    assert_eq!(got, (-10..=10).map(Value::int).collect::<Vec<_>>());
    assert_eq!(out.dropped, 3);
    assert_eq!(out.batches, 4);
}

#[test]
fn input_generation_respects_the_budget() {
    let mut g = Gateway::new(ScriptedTransport(|req: &CompletionRequest| {
        Ok((0..30).map(|i| format!("[{}]\n", req.index * 100 + i)).collect())
    }));
    assert_eq!(g.gen_test_inputs(&toy(), &params(1)).unwrap().inputs.len(), 50);
    g.input_budget = 10;
    let out = g.gen_test_inputs(&toy(), &params(1)).unwrap();
    assert_eq!((out.inputs.len(), out.batches), (10, 1));
    let none = Gateway::new(ScriptedTransport(|_: &CompletionRequest| Ok("[\"a\"]".to_string())));
    assert!(matches!(none.gen_test_inputs(&toy(), &params(1)), Err(GatewayError::NoInputs(_))));
}

#[test]
fn baseline_tests_carry_their_arguments() {
    let g = Gateway::new(ScriptedTransport(|req: &CompletionRequest| {
        Ok(if req.index == 1 {
            "```python\ndef check(args, result):\n    return True\n```".to_string()
        } else {
            format!(
                "```python\n# args: [{}]\ndef check(args, result):\n    return result == args[0] + 1\n```",
                req.index
            )
        })
    }));
    let tests = g.gen_baseline_artifacts(&toy(), &TransformKind::BaselineTests, &params(3)).unwrap();
    let args: Vec<_> = tests.iter().map(|t| t.args.clone().unwrap()).collect();
    assert_eq!(args, [vec![Value::int(0)], vec![Value::int(2)]]);
    let posts = g.gen_baseline_artifacts(&toy(), &TransformKind::BaselinePostcondition, &params(2)).unwrap();
    assert_eq!(posts.len(), 2);
    assert_eq!(posts[0].entrypoint(), "post");
    assert!(g.gen_baseline_artifacts(&toy(), &TransformKind::Enumeration, &params(1)).is_err());
}

#[test]
fn cache_keys_are_distinct() {
    let mut keys = HashSet::new();
    let mut n = 0;
    for prompt in ["code@1:a", "code@1:b", "inputs@1:a", "code@2:a"] {
        for model in ["m1", "m2"] {
            for temperature in [0.0, 0.5, 1.0] {
                for index in 0..20 {
                    for attempt in 0..3 {
                        let req = CompletionRequest {
                            prompt_id: prompt.into(),
                            model: model.into(),
                            temperature,
                            index,
                            attempt,
                            prompt: String::new(),
                        };
                        keys.insert(req.key());
                        n += 1;
                    }
                }
            }
        }
    }
    assert_eq!(keys.len(), n);
}
