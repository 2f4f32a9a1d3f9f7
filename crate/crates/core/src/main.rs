use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use tri_core::corpus::{read_manifest, resolve, worker_command_from_env, SourceSink};
use tri_core::gateway::{Gateway, LazyHttp, Offline, SamplingParams, TranscriptCache, Transport};
use tri_core::property::{eval, parse_term, AngelicFraction, Env, EvalConfig, EvalResult, NoPrograms};
use tri_core::run::{entropy_report, metrics_csv, render_metrics, run, RunConfig, Strategy};
use tri_core::theory::{run_suite, ModelSpec, SuiteConfig};
use tri_core::{ExecutionConfig, Harness};

/// Select or abstain over sampled programs by checking them against
/// programs for transformed problems.
#[derive(Parser)]
#[command(name = "tri", version)]
struct Cli {
    /// Problems (run) or models (simulate) processed concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Base seed of the theory simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Log verbosity; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide every problem of a manifest with the selected strategies.
    Run(RunArgs),
    /// Check the positivity results on random stochastic-parrot models.
    Simulate(SimulateArgs),
    /// Semantic entropy per sample-size prefix of a finished run.
    Entropy(EntropyArgs),
    /// Summarize a manifest or a run directory, or evaluate a property.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Problem manifest (line-delimited JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Serve model calls only from transcripts in this directory.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Call the model and store transcripts in this directory.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Comma-separated subset of tri, plurality, majority, ransac-tests,
    /// ransac-postcondition, syntactic, off-by-one.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Per-call timeout for workers and model requests.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = AngelicFraction::default())]
    angelic_fraction: AngelicFraction,
    /// Samples per prompt.
    #[arg(long, default_value_t = 30)]
    n: u32,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    /// Skip judging; no judge is then required.
    #[arg(long)]
    no_metrics: bool,
    /// Also write the metrics table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 3)]
    problems_per_class: usize,
    #[arg(long, default_value_t = 8)]
    program_classes: usize,
    #[arg(long, default_value_t = 1)]
    correct_per_problem: usize,
    /// Models checked for each positivity result.
    #[arg(long, default_value_t = 1000)]
    models: usize,
    /// Models compared against Monte-Carlo estimates.
    #[arg(long, default_value_t = 10)]
    mc_models: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Also write the report to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EntropyArgs {
    /// Run output directory containing samples.jsonl.
    dir: PathBuf,
    /// Comma-separated prefix sizes; defaults to 5, 10, ...
    #[arg(long, value_delimiter = ',')]
    prefixes: Option<Vec<usize>>,
}

#[derive(Args)]
struct InspectArgs {
    /// Manifest file or run directory.
    path: Option<PathBuf>,
    /// Property term in s-expression form to evaluate.
    #[arg(long)]
    property: Option<String>,
    /// Problem whose candidates the property may call.
    #[arg(long, requires = "path")]
    problem: Option<String>,
    #[arg(long, default_value_t = AngelicFraction::default())]
    angelic_fraction: AngelicFraction,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build_global() {
        log::warn!("thread pool: {e}");
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type Error = Box<dyn std::error::Error>;

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, cli.jobs),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Entropy(a) => cmd_entropy(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn cmd_run(a: &RunArgs, jobs: usize) -> Result<ExitCode, Error> {
    let timeout = Duration::from_millis(a.timeout_ms);
    let transport: Box<dyn Transport> = match (&a.replay, &a.record) {
        (Some(dir), _) => Box::new(TranscriptCache::replay(dir, Offline)),
        (None, Some(dir)) => Box::new(TranscriptCache::record(dir, LazyHttp::new(timeout))),
        (None, None) => Box::new(TranscriptCache::live(LazyHttp::new(timeout))),
    };
    let mut cfg = RunConfig::new(&a.manifest, &a.out);
    if let Some(s) = &a.strategies {
        cfg.strategies = s.clone();
    }
    cfg.eval = EvalConfig { angelic_fraction: a.angelic_fraction };
    cfg.sampling = SamplingParams { n: a.n, temperature: a.temperature, model: a.model.clone() };
    cfg.exec = ExecutionConfig { timeout, ..ExecutionConfig::default() };
    cfg.jobs = jobs;
    cfg.metrics = !a.no_metrics;
    let summary = run(&cfg, &Gateway::new(transport))?;
    for r in &summary.reports {
        for (s, d) in &r.decisions {
            let rec = d.to_record(&r.problem_id);
            println!(
                "{:<24} {:<22} {:<10} {}",
                r.problem_id,
                s,
                rec.decision,
                rec.class_id.or(rec.reason).unwrap_or_default()
            );
        }
    }
    for e in &summary.errors {
        println!("{:<24} skipped at {}: {}", e.problem_id, e.stage, e.message);
    }
    if !summary.metrics.is_empty() {
        println!();
        print!("{}", render_metrics(&summary.metrics));
        if let Some(path) = &a.csv {
            std::fs::write(path, metrics_csv(&summary.metrics))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<ExitCode, Error> {
    let config = SuiteConfig {
        spec: ModelSpec {
            num_hallucination_classes: a.classes,
            problems_per_class: a.problems_per_class,
            num_program_classes: a.program_classes,
            correct_per_problem: a.correct_per_problem,
            equal_correct: true,
        },
        seed,
        models: a.models,
        mc_models: a.mc_models,
        trials: a.trials,
    };
    let report = run_suite(&config)?;
    let text = report.render();
    print!("{text}");
    if let Some(path) = &a.csv {
        std::fs::write(path, text)?;
    }
    Ok(if report.all_ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_entropy(a: &EntropyArgs) -> Result<ExitCode, Error> {
    let rows = entropy_report(&a.dir, a.prefixes.as_deref())?;
    println!("{:<24}{:>6}{:>12}", "problem", "n", "entropy");
    for r in rows {
        println!("{:<24}{:>6}{:>12.6}", r.problem_id, r.n, r.entropy);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(a: &InspectArgs) -> Result<ExitCode, Error> {
    if let Some(src) = &a.property {
        return inspect_property(a, src);
    }
    let Some(path) = &a.path else {
        return Err("nothing to inspect: give a path or --property".into());
    };
    if path.is_dir() {
        inspect_run(path)
    } else {
        inspect_manifest(path)
    }
}

fn inspect_property(a: &InspectArgs, src: &str) -> Result<ExitCode, Error> {
    let term = parse_term(src)?;
    println!("{term}");
    let cfg = EvalConfig { angelic_fraction: a.angelic_fraction };
    let evaluation = match (&a.path, &a.problem) {
        (Some(manifest), Some(problem)) => {
            let records = read_manifest(manifest)?;
            let rec = records
                .iter()
                .find(|r| r.id() == problem)
                .ok_or_else(|| format!("no problem {problem} in {}", manifest.display()))?;
            let sink = worker_command_from_env()
                .map(|command| SourceSink { dir: std::env::temp_dir().join("tri-inspect"), command });
            let resolved = resolve(rec, sink.as_ref())?;
            let h = Harness::new(ExecutionConfig::default())?;
            for c in resolved.samples.iter().flat_map(|s| s.candidates.iter()) {
                h.register(c.clone());
            }
            eval(&term, &Env::new(), &cfg, &h)?
        }
        _ => eval(&term, &Env::new(), &cfg, &NoPrograms)?,
    };
    match evaluation.result {
        EvalResult::Bool(b) => println!("result: {b}"),
        EvalResult::Special(s) => println!("result: {s}"),
    }
    if let Some(trace) = evaluation.trace {
        println!("trace: {trace}");
    }
    Ok(ExitCode::SUCCESS)
}

fn inspect_manifest(path: &Path) -> Result<ExitCode, Error> {
    println!("{:<24}{:<44}{:>8}  {:<30}{:>6}", "problem", "signature", "inputs", "samples fwd/enum/sinv/inv", "judge");
    for rec in read_manifest(path)? {
        let (inputs, samples, judge) = if let Some(b) = &rec.builtin {
            (format!("[{b}]"), format!("[{b}]"), "yes")
        } else {
            let inputs = rec.inputs.as_ref().map_or("gateway".to_string(), |i| i.len().to_string());
            let samples = rec.samples.as_ref().map_or("gateway".to_string(), |s| {
                format!("{}/{}/{}/{}", s.forward.len(), s.enumerators.len(), s.set_inverses.len(), s.inverses.len())
            });
            (inputs, samples, if rec.judge.is_some() { "yes" } else { "no" })
        };
        println!("{:<24}{:<44}{:>8}  {:<30}{:>6}", rec.id(), rec.problem.signature.render(), inputs, samples, judge);
    }
    Ok(ExitCode::SUCCESS)
}

fn inspect_run(dir: &Path) -> Result<ExitCode, Error> {
    let decisions: Vec<tri_core::consensus::DecisionRecord> =
        tri_core::corpus::read_lines(&dir.join("decisions.jsonl"))?;
    let classes: Vec<tri_core::run::ClassRecord> = tri_core::corpus::read_lines(&dir.join("classes.jsonl"))?;
    println!("{:<24}{:<22}{:<11}{:<24}{:>8}  verdict", "problem", "strategy", "decision", "class", "score");
    for d in decisions {
        let verdict = d
            .class_id
            .as_ref()
            .and_then(|c| classes.iter().find(|k| k.problem_id == d.problem_id && &k.class_id == c))
            .and_then(|k| k.verdict)
            .map_or("-".to_string(), |v| format!("{v:?}").to_lowercase());
        println!(
            "{:<24}{:<22}{:<11}{:<24}{:>8}  {}",
            d.problem_id,
            d.strategy,
            d.decision,
            d.class_id.as_deref().or(d.reason.as_deref()).unwrap_or("-"),
            d.score.as_deref().unwrap_or("-"),
            verdict
        );
    }
    Ok(ExitCode::SUCCESS)
}
