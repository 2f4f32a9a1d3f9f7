use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tri(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tri")).args(args).env_remove("TRI_WORKER_CMD").output().unwrap()
}

fn toy(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/toy").join(file).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn replayed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for (i, out) in outs.iter().enumerate() {
        let jobs = if i == 0 { "1" } else { "3" };
        let o = tri(&[
            "--jobs",
            jobs,
            "run",
            "--manifest",
            &toy("manifest.jsonl"),
            "--replay",
            &toy("transcripts"),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["decisions.jsonl", "classes.jsonl", "verdicts.jsonl", "metrics.jsonl"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    let o = tri(&["entropy", outs[0].to_str().unwrap(), "--prefixes", "5,10"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("toy-next"));
    let o = tri(&["inspect", outs[0].to_str().unwrap()]);
    assert!(stdout(&o).lines().any(|l| l.starts_with("toy-next") && l.contains("tri") && l.ends_with("correct")));
}

#[test]
fn plurality_only_run_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let csv = dir.path().join("m.csv");
    let o = tri(&[
        "run",
        "--manifest",
        &toy("manifest.jsonl"),
        "--replay",
        &toy("transcripts"),
        "--out",
        out.to_str().unwrap(),
        "--strategies",
        "plurality",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let decisions = std::fs::read_to_string(out.join("decisions.jsonl")).unwrap();
    assert_eq!(decisions.lines().count(), 5);
    assert!(decisions.lines().all(|l| l.contains("\"strategy\":\"plurality\"")));
    let csv = std::fs::read_to_string(csv).unwrap();
    assert_eq!(csv.lines().nth(1), Some("plurality,0,4,0,1,0,0/1,0/1,0/1,undefined,0/1,undefined"));
}

#[test]
fn bad_invocations_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = tri(&["run", "--manifest", &toy("manifest.jsonl"), "--out", out.to_str().unwrap(), "--strategies", "vote"]);
    assert!(!o.status.success());
    let o = tri(&["run", "--manifest", "/nonexistent.jsonl", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let o = tri(&[
        "run",
        "--manifest",
        &toy("manifest.jsonl"),
        "--out",
        out.to_str().unwrap(),
        "--angelic-fraction",
        "0/3",
    ]);
    assert!(!o.status.success());
    let o = tri(&["entropy", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no recorded samples"));
    let o = tri(&["simulate", "--program-classes", "1", "--models", "2", "--mc-models", "0"]);
    assert!(!o.status.success());
}

#[test]
fn simulate_is_reproducible() {
    let args = ["--seed", "7", "simulate", "--models", "20", "--mc-models", "2", "--trials", "20000"];
    let a = tri(&args);
    let b = tri(&args);
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("overall pass"));
}

#[test]
fn properties_evaluate_from_the_command_line() {
    let o = tri(&["inspect", "--property", "(forall x (values 1 2 3) (= x 1))"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("result: false"));
    let o = tri(&[
        "inspect",
        &toy("manifest.jsonl"),
        "--problem",
        "toy-next",
        "--property",
        "(forall i (values 0 1 2) (= (call next-inv-00 (call next-fwd-00 i)) i))",
    ]);
    assert!(stdout(&o).contains("result: true"), "{}", stdout(&o));
    let o = tri(&["inspect", "--property", "(forall x"]);
    assert!(!o.status.success());
}
