use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use osgm::bench::{run_bench, BenchOptions};
use osgm::diagnostics::MonitorReport;
use osgm::feedback::FeedbackKind;
use osgm::landscape::ActionKind;
use osgm::learners::{LearnerKind, Schedule, Variant};
use osgm::problems::resolve_problem;
use osgm::solver::{run_gd_with, run_hdm, run_osgm, RunOutput, SolverConfig};
use osgm::stepsize::{CandidateSet, Pattern, Stepsize};
use osgm::trace::write_atomic;
use osgm::verify::{resolve_group, run_verify, VerifyOptions, VERIFY_GROUPS};
use osgm::OsgmError;

const EXIT_MONITOR: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

#[derive(Parser)]
#[command(name = "osgm", version, about = "Online scaled gradient methods: run, verify, bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one problem.
    Run(RunArgs),
    /// Run the invariant suite and print the check ledger.
    Verify(VerifyArgs),
    /// Run the variant matrix and baselines over a problem suite.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Osgm,
    Hdm,
    Gd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in `name:params` or a problem JSON file.
    #[arg(long, default_value = "tridiagonal:50")]
    problem: String,
    #[arg(long, value_enum, default_value = "osgm")]
    method: Method,
    #[arg(long, default_value = "ratio")]
    feedback: String,
    #[arg(long, default_value = "lookahead")]
    action: String,
    #[arg(long, default_value = "ogd")]
    learner: String,
    #[arg(long, default_value = "full")]
    pattern: String,
    /// none | box:lo,hi | nonneg | ball:r (centred at (1/L)I)
    #[arg(long, default_value = "none")]
    set: String,
    /// `auto` or a constant learning rate.
    #[arg(long, default_value = "auto")]
    eta: String,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Stop once f − f* falls below this.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Backtracking fraction in (0, 1) for estimating L.
    #[arg(long)]
    backtracking: Option<f64>,
    /// Trace CSV output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Monitor report JSON output.
    #[arg(long)]
    monitor_json: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "on")]
    monitors: Switch,
    /// Exit 2 when a monitor fails.
    #[arg(long)]
    strict: bool,
    /// Allow hypergradient feedback with a non-monotone action.
    #[arg(long = "unsafe")]
    allow_unsafe: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict to these groups (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Report JSON output.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite problems (comma separated or repeated).
    #[arg(long = "problem", value_delimiter = ',')]
    problems: Vec<String>,
    #[arg(long, default_value = "diag")]
    pattern: String,
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "off")]
    monitors: Switch,
    /// Directory for one trace CSV per cell.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn data(e: OsgmError) -> Failure {
    Failure { code: EXIT_DATA, message: e.to_string() }
}

fn parse<T: std::str::FromStr<Err = OsgmError>>(flag: &str, value: &str) -> Result<T, Failure> {
    value.parse().map_err(|e: OsgmError| usage(format!("--{flag}: {e}")))
}

enum SetSpec {
    Set(CandidateSet),
    Ball(f64),
}

fn parse_set(value: &str) -> Result<SetSpec, Failure> {
    if let Some(r) = value.strip_prefix("ball:") {
        let r: f64 = r.trim().parse().map_err(|_| usage(format!("--set: bad ball radius `{r}`")))?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(usage(format!("--set: ball radius must be positive, got {r}")));
        }
        return Ok(SetSpec::Ball(r));
    }
    parse("set", value).map(SetSpec::Set)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_report(path: &PathBuf, report: &MonitorReport) -> Result<(), Failure> {
    let text = format!("{:#}\n", report.to_json());
    write_atomic(path, text.as_bytes()).map_err(data)
}

fn cmd_run(a: RunArgs) -> Result<u8, Failure> {
    let feedback: FeedbackKind = parse("feedback", &a.feedback)?;
    let action: ActionKind = parse("action", &a.action)?;
    let learner: LearnerKind = parse("learner", &a.learner)?;
    let pattern: Pattern = parse("pattern", &a.pattern)?;
    let set = parse_set(&a.set)?;
    let eta = match a.eta.as_str() {
        "auto" => None,
        s => match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Some(v),
            _ => return Err(usage(format!("--eta must be `auto` or a nonnegative number, got `{s}`"))),
        },
    };
    if a.iters == 0 {
        return Err(usage("--iters must be at least 1"));
    }
    if !(a.tol >= 0.0) {
        return Err(usage(format!("--tol must be nonnegative, got {}", a.tol)));
    }
    if let Some(f) = a.backtracking {
        if !(f > 0.0 && f < 1.0) {
            return Err(usage(format!("--backtracking must lie in (0, 1), got {f}")));
        }
    }
    if matches!(a.method, Method::Osgm)
        && feedback == FeedbackKind::Hypergradient
        && !action.is_monotone()
        && !a.allow_unsafe
    {
        return Err(usage(format!(
            "--feedback hyper with --action {action} is unsafe: the hypergradient reduction bounds progress only \
             when function values never increase, so a non-monotone action can diverge. Use --action monotone \
             or --action monotone-lookahead, or pass --unsafe to run it anyway"
        )));
    }

    let problem = resolve_problem(&a.problem, a.seed).map_err(|e| match e {
        OsgmError::Parse(m) if !Path::new(&a.problem).exists() => usage(format!("--problem: {m}")),
        e => data(e),
    })?;
    let n = problem.dim();
    let l = problem.smoothness();
    let mut config = SolverConfig::for_variant(Variant::from_parts(feedback, action));
    config.learner = learner;
    config.pattern = pattern;
    config.set = match set {
        SetSpec::Set(s) => s,
        SetSpec::Ball(radius) => CandidateSet::Ball { center: Stepsize::scaled_identity(pattern, n, 1.0 / l), radius },
    };
    config.schedule = eta.map(|eta| Schedule::Constant { eta });
    config.max_iters = a.iters;
    config.stop_gap = a.tol;
    config.seed = a.seed;
    config.monitors = a.monitors == Switch::On;
    config.allow_unsafe = a.allow_unsafe;
    config.backtracking = a.backtracking;

    let out: RunOutput = match a.method {
        Method::Osgm => run_osgm(&problem, &config),
        Method::Hdm => {
            config.schedule = Some(Schedule::Constant { eta: eta.unwrap_or(1.0 / l) });
            run_hdm(&problem, &config)
        }
        Method::Gd => {
            let alpha = eta.unwrap_or(1.0 / l);
            run_gd_with(&problem, &Stepsize::scaled_identity(pattern, n, alpha), &config.start(n), a.iters, a.tol, config.stop_grad)
        }
    }
    .map_err(data)?;

    if let Some(path) = &a.trace {
        out.trace.write_csv_atomic(path).map_err(data)?;
    }
    if let Some(path) = &a.monitor_json {
        write_report(path, &out.report)?;
    }
    let h = &out.trace.header;
    println!(
        "{} on {}: {} after {} iterations, f - f* = {}, |grad| = {:.3e}, oracle calls f={} g={}",
        h.method,
        h.problem,
        h.status,
        out.trace.iterations(),
        h.final_f_gap.map_or("unknown".to_string(), |g| format!("{g:.3e}")),
        h.final_grad_norm,
        out.oracle_calls.f,
        out.oracle_calls.g
    );
    if config.monitors && !matches!(a.method, Method::Gd) {
        print!("{}", out.report.summarize());
    }
    if a.strict && !out.report.all_pass() {
        eprintln!("monitor failures: {}", out.report.failures().len());
        return Ok(EXIT_MONITOR);
    }
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8, Failure> {
    for g in &a.only {
        if resolve_group(g).is_none() {
            return Err(usage(format!("--only: unknown group `{g}` (expected one of {})", VERIFY_GROUPS.join(", "))));
        }
    }
    let report = run_verify(&VerifyOptions { seed: a.seed, only: a.only }).map_err(data)?;
    print!("{}", report.summarize());
    if let Some(path) = &a.json {
        write_report(path, &report)?;
    }
    Ok(if report.all_pass() && report.total_checked() > 0 { 0 } else { 1 })
}

fn cmd_bench(a: BenchArgs) -> Result<u8, Failure> {
    let pattern: Pattern = parse("pattern", &a.pattern)?;
    if a.iters == 0 {
        return Err(usage("--iters must be at least 1"));
    }
    if !(a.tol > 0.0) {
        return Err(usage(format!("--tol must be positive, got {}", a.tol)));
    }
    let mut opts = BenchOptions { pattern, iters: a.iters, tol: a.tol, seed: a.seed, csv_dir: a.csv, ..BenchOptions::default() };
    opts.monitors = a.monitors == Switch::On;
    if !a.problems.is_empty() {
        opts.problems = a.problems;
    }
    let report = run_bench(&opts).map_err(data)?;
    print!("{}", report.summary_table());
    Ok(if report.all_completed() { 0 } else { 1 })
}
