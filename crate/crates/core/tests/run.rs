use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use tri_core::consensus::DecisionRecord;
use tri_core::corpus::{read_manifest, write_lines, ProblemRecord, MANIFEST, TRANSCRIPTS};
use tri_core::gateway::{
    CompletionRequest, CountingTransport, Gateway, GatewayError, Offline, SamplingParams, ScriptedTransport,
    TranscriptCache,
};
use tri_core::run::{run, ClassRecord, ErrorRecord, RunConfig, RunError, Strategy};
use tri_core::{FunctionSignature, Param, ProblemDescription, TypeTag, Value};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/toy")
}

type Replay = Gateway<TranscriptCache<Arc<CountingTransport<Offline>>>>;

fn replay_gateway(transcripts: &Path) -> (Replay, Arc<CountingTransport<Offline>>) {
    let offline = Arc::new(CountingTransport::new(Offline));
    (Gateway::new(TranscriptCache::replay(transcripts, offline.clone())), offline)
}

fn lines<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Vec<T> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn decision<'a>(ds: &'a [DecisionRecord], problem: &str, strategy: &str) -> &'a DecisionRecord {
    ds.iter()
        .find(|d| d.problem_id == problem && d.strategy == strategy)
        .unwrap_or_else(|| panic!("no {strategy} decision for {problem}"))
}

fn verdict(classes: &[ClassRecord], problem: &str, class: &str) -> String {
    let c = classes.iter().find(|c| c.problem_id == problem && c.class_id == class).unwrap();
    serde_json::to_string(&c.verdict).unwrap()
}

#[test]
fn toy_replay_is_offline_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (g, offline) = replay_gateway(&bundled().join(TRANSCRIPTS));
    let mut cfg = RunConfig::new(bundled().join(MANIFEST), dir.path().join("a"));
    run(&cfg, &g).unwrap();
    cfg.output = dir.path().join("b");
    cfg.jobs = 4;
    run(&cfg, &g).unwrap();
    assert_eq!(offline.calls(), 0);
    for f in ["decisions", "classes", "samples", "verdicts", "metrics", "errors"] {
        let name = format!("{f}.jsonl");
        let a = fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read(dir.path().join("b").join(&name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }

    let out = dir.path().join("a");
    let ds: Vec<DecisionRecord> = lines(&out.join("decisions.jsonl"));
    let classes: Vec<ClassRecord> = lines(&out.join("classes.jsonl"));
    assert_eq!(ds.len(), 5 * Strategy::ALL.len());
    assert!(lines::<ErrorRecord>(&out.join("errors.jsonl")).is_empty());
    for p in ["toy-next", "fill-wildcards", "toy-abs", "toy-double"] {
        let tri = decision(&ds, p, "tri");
        assert_eq!(tri.decision, "selected", "{p}");
        assert_eq!(verdict(&classes, p, tri.class_id.as_deref().unwrap()), "\"correct\"", "{p}");
        let plu = decision(&ds, p, "plurality");
        assert_eq!(verdict(&classes, p, plu.class_id.as_deref().unwrap()), "\"incorrect\"", "{p}");
    }
    assert_eq!(decision(&ds, "toy-square", "tri").decision, "abstained");

    let metrics: Vec<serde_json::Value> = lines(&out.join("metrics.jsonl"));
    let tri = metrics.iter().find(|m| m["strategy"] == "tri").unwrap();
    assert_eq!((tri["n1"].as_u64(), tri["n5"].as_u64()), (Some(4), Some(1)));
    assert_eq!(tri["reliable_accuracy"], "1/1");
    let plu = metrics.iter().find(|m| m["strategy"] == "plurality").unwrap();
    assert_eq!(plu["precision_abs"], "undefined");
}

#[test]
fn strategy_subset_limits_the_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let (g, _) = replay_gateway(&bundled().join(TRANSCRIPTS));
    let mut cfg = RunConfig::new(bundled().join(MANIFEST), dir.path());
    cfg.strategies = vec![Strategy::Plurality, Strategy::Plurality];
    run(&cfg, &g).unwrap();
    let ds: Vec<DecisionRecord> = lines(&dir.path().join("decisions.jsonl"));
    assert_eq!(ds.len(), 5);
    assert!(ds.iter().all(|d| d.strategy == "plurality"));
    assert!(lines::<serde_json::Value>(&dir.path().join("verdicts.jsonl")).is_empty());
    let metrics: Vec<serde_json::Value> = lines(&dir.path().join("metrics.jsonl"));
    assert_eq!(metrics.len(), 1);

    cfg.strategies.clear();
    assert!(matches!(run(&cfg, &g), Err(RunError::NoStrategies)));
    assert!(matches!("vote".parse::<Strategy>(), Err(RunError::UnknownStrategy(_))));
    for s in Strategy::ALL {
        assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
    }
}

#[test]
fn missing_judge_is_fatal_only_with_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = read_manifest(&bundled().join(MANIFEST)).unwrap();
    records[2].judge = None;
    let manifest = dir.path().join(MANIFEST);
    write_lines(&manifest, &records).unwrap();
    let (g, _) = replay_gateway(&bundled().join(TRANSCRIPTS));
    let mut cfg = RunConfig::new(&manifest, dir.path().join("out"));
    assert!(matches!(run(&cfg, &g), Err(RunError::MissingJudge(p)) if p == "toy-abs"));
    assert!(!dir.path().join("out").exists());
    cfg.metrics = false;
    run(&cfg, &g).unwrap();
    assert!(!dir.path().join("out/metrics.jsonl").exists());
    let classes: Vec<ClassRecord> = lines(&dir.path().join("out/classes.jsonl"));
    assert!(classes.iter().filter(|c| c.problem_id == "toy-abs").all(|c| c.verdict.is_none()));
}

#[test]
fn replay_miss_skips_only_that_problem() {
    let dir = tempfile::tempdir().unwrap();
    let (g, offline) = replay_gateway(&dir.path().join("empty"));
    let cfg = RunConfig::new(bundled().join(MANIFEST), dir.path().join("out"));
    let summary = run(&cfg, &g).unwrap();
    assert_eq!(offline.calls(), 0);
    assert_eq!(summary.reports.len(), 4);
    let errors: Vec<ErrorRecord> = lines(&dir.path().join("out/errors.jsonl"));
    assert_eq!(errors.len(), 1);
    assert_eq!((errors[0].problem_id.as_str(), errors[0].stage.as_str()), ("toy-next", "inputs"));
    assert!(errors[0].message.contains("replay"), "{}", errors[0].message);
    let tri = summary.metrics.iter().find(|m| m.strategy == "tri").unwrap();
    assert_eq!(tri.counts.n1 + tri.counts.n5, 4);
}

fn python_worker() -> Option<Vec<String>> {
    if !Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success()) {
        eprintln!("python3 not found; skipping");
        return None;
    }
    let worker = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/support/worker.py");
    Some(vec!["python3".into(), worker.display().to_string()])
}

/// Model stand-in for the `succ` problem: the forward samples are split
/// two correct to three off-by-one.
fn succ_model(req: &CompletionRequest) -> Result<String, GatewayError> {
    let (tpl, pid) = req.prompt_id.split_once(':').unwrap();
    let code = |body: &str| format!("```python\n{body}\n```\n");
    Ok(match (tpl, pid) {
        ("inputs@1", _) => (-5..=5).map(|i| format!("[{i}]\n")).collect(),
        ("code@1", "succ") if req.index < 2 => code("def succ(i):\n    return i + 1"),
        ("code@1", "succ") => code("def succ(i):\n    return i + 2"),
        ("code@1", "succ/inv") => code("def succ_inv(result):\n    return result - 1"),
        ("code@1", "succ/enum") => code("def succ_all(i):\n    return {i + 1}"),
        ("code@1", "succ/sinv0") => code("def succ_all_i(result):\n    return {result - 1}"),
        ("code@1", other) => panic!("unexpected code prompt for {other}"),
        _ => format!("Restated problem for {pid}."),
    })
}

fn succ_record() -> ProblemRecord {
    let mut rec = ProblemRecord::new(ProblemDescription::original(
        "succ",
        "Return i plus one.",
        FunctionSignature::new("succ", vec![Param::new("i", TypeTag::Int)], TypeTag::Int),
    ));
    rec.judge = Some((-5..=5).map(|i| (vec![Value::int(i)], vec![Value::int(i + 1)])).collect());
    rec
}

#[test]
fn live_sampling_runs_generated_sources() {
    let Some(worker) = python_worker() else { return };
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join(MANIFEST);
    write_lines(&manifest, [succ_record()]).unwrap();
    let transcripts = dir.path().join(TRANSCRIPTS);
    let model = Arc::new(CountingTransport::new(ScriptedTransport(succ_model)));
    let g = Gateway::new(TranscriptCache::record(&transcripts, model.clone()));
    let mut cfg = RunConfig::new(&manifest, dir.path().join("live"));
    cfg.strategies = vec![Strategy::Tri, Strategy::Plurality];
    cfg.sampling = SamplingParams { n: 5, ..SamplingParams::default() };
    cfg.worker_command = Some(worker);
    run(&cfg, &g).unwrap();
    let live_calls = model.calls();
    assert!(live_calls > 0);

    let ds: Vec<DecisionRecord> = lines(&dir.path().join("live/decisions.jsonl"));
    let classes: Vec<ClassRecord> = lines(&dir.path().join("live/classes.jsonl"));
    let tri = decision(&ds, "succ", "tri");
    assert_eq!(tri.class_id.as_deref(), Some("succ#000"), "{ds:?}");
    assert_eq!(verdict(&classes, "succ", "succ#000"), "\"correct\"");
    assert_eq!(decision(&ds, "succ", "plurality").class_id.as_deref(), Some("succ#002"));
    assert!(dir.path().join("live/sources/succ").read_dir().unwrap().count() >= 5 * 4);

    let (replay, offline) = replay_gateway(&transcripts);
    cfg.output = dir.path().join("replayed");
    run(&cfg, &replay).unwrap();
    assert_eq!(offline.calls(), 0);
    assert_eq!(model.calls(), live_calls);
    assert_eq!(
        fs::read(dir.path().join("live/decisions.jsonl")).unwrap(),
        fs::read(dir.path().join("replayed/decisions.jsonl")).unwrap()
    );

    cfg.worker_command = None;
    let records = vec![succ_record()];
    let summary = tri_core::run::run_records(&cfg, &records, &replay).unwrap();
    if std::env::var_os("TRI_WORKER_CMD").is_none() {
        assert_eq!(summary.errors[0].stage, "sampling");
    }
}
