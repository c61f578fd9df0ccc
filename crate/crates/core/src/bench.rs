//! Variant matrix plus GD and HDM baselines over a problem suite.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{OsgmError, Result};
use crate::learners::Variant;
use crate::problems::{resolve_problem, Problem};
use crate::solver::{run_gd_with, run_hdm, run_osgm, SolverConfig};
use crate::stepsize::{CandidateSet, Pattern, Stepsize};
use crate::trace::SolverTrace;

pub const DEFAULT_SUITE: [&str; 2] = ["tridiagonal:100", "diagonal:100"];

pub const VARIANTS: [Variant; 8] = [
    Variant::LookaheadR,
    Variant::MonotoneLookaheadR,
    Variant::VanillaR,
    Variant::MonotoneR,
    Variant::LookaheadH,
    Variant::MonotoneLookaheadH,
    Variant::VanillaH,
    Variant::MonotoneH,
];

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub problems: Vec<String>,
    pub pattern: Pattern,
    pub iters: usize,
    /// Target gap for iterations-to-tol; runs stop there.
    pub tol: f64,
    pub seed: u64,
    pub monitors: bool,
    pub csv_dir: Option<PathBuf>,
    /// Worker threads; OSGM_THREADS or rayon's default when absent.
    pub threads: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            problems: DEFAULT_SUITE.iter().map(|s| s.to_string()).collect(),
            pattern: Pattern::Diagonal,
            iters: 20_000,
            tol: 1e-8,
            seed: 0,
            monitors: false,
            csv_dir: None,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Osgm(Variant),
    Gd,
    Hdm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Osgm(v) => v.name(),
            Method::Gd => "gd",
            Method::Hdm => "hdm",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub problem: String,
    pub method: Method,
    /// Iterations until f − f* ≤ tol; None when not reached.
    pub iters_to_tol: Option<usize>,
    pub iterations: usize,
    /// Geometric mean of f_gap(k+1)/f_gap(k) over the last tenth of the run.
    pub terminal_rate: Option<f64>,
    pub final_gap: Option<f64>,
    pub monitor_failures: usize,
    pub csv: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub tol: f64,
    pub cells: Vec<CellResult>,
}

impl BenchReport {
    pub fn all_completed(&self) -> bool {
        self.cells.iter().all(|c| c.error.is_none())
    }

    pub fn cell(&self, problem: &str, method: Method) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.problem == problem && c.method == method)
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:<26} {:>10} {:>10} {:>12} {:>12}",
            "problem",
            "method",
            format!("iters<{:.0e}", self.tol),
            "iters",
            "rate",
            "final_gap"
        );
        for c in &self.cells {
            if let Some(e) = &c.error {
                let _ = writeln!(s, "{:<24} {:<26} error: {e}", c.problem, c.method.name());
                continue;
            }
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
            let _ = writeln!(
                s,
                "{:<24} {:<26} {:>10} {:>10} {:>12} {:>12}{}",
                c.problem,
                c.method.name(),
                c.iters_to_tol.map_or(">max".to_string(), |k| k.to_string()),
                c.iterations,
                c.terminal_rate.map_or("-".to_string(), |r| format!("{r:.6}")),
                opt(c.final_gap),
                if c.monitor_failures > 0 { format!("  ({} monitor failures)", c.monitor_failures) } else { String::new() }
            );
        }
        s
    }
}

fn thread_count(opts: &BenchOptions) -> Option<usize> {
    opts.threads.or_else(|| std::env::var("OSGM_THREADS").ok()?.trim().parse().ok()).filter(|&t| t > 0)
}

pub fn run_bench(opts: &BenchOptions) -> Result<BenchReport> {
    if !(opts.tol > 0.0) {
        return Err(OsgmError::InvalidConfig(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let problems: Vec<Problem> = opts.problems.iter().map(|p| resolve_problem(p, opts.seed)).collect::<Result<_>>()?;
    if let Some(dir) = &opts.csv_dir {
        std::fs::create_dir_all(dir)?;
    }
    let methods: Vec<Method> = VARIANTS.iter().map(|&v| Method::Osgm(v)).chain([Method::Gd, Method::Hdm]).collect();
    let jobs: Vec<(usize, Method)> = (0..problems.len()).flat_map(|i| methods.iter().map(move |&m| (i, m))).collect();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(opts) {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| OsgmError::InvalidConfig(format!("thread pool: {e}")))?;
    let cells = pool.install(|| {
        jobs.par_iter().map(|&(i, m)| run_cell(&problems[i], &opts.problems[i], m, opts)).collect::<Vec<_>>()
    });
    Ok(BenchReport { tol: opts.tol, cells })
}

fn cell_config(problem: &Problem, variant: Variant, opts: &BenchOptions) -> SolverConfig {
    let mut c = SolverConfig::for_variant(variant);
    c.pattern = opts.pattern;
    c.max_iters = opts.iters;
    c.stop_gap = opts.tol;
    c.stop_grad = 0.0;
    c.monitors = opts.monitors;
    c.seed = opts.seed;
    c.allow_unsafe = true;
    if !variant.action().has_lookahead() {
        c.set = CandidateSet::Box { lo: 0.0, hi: 2.0 / problem.smoothness() };
    }
    c
}

fn run_cell(problem: &Problem, label: &str, method: Method, opts: &BenchOptions) -> CellResult {
    let mut cell = CellResult {
        problem: label.to_string(),
        method,
        iters_to_tol: None,
        iterations: 0,
        terminal_rate: None,
        final_gap: None,
        monitor_failures: 0,
        csv: None,
        error: None,
    };
    let l = problem.smoothness();
    let out = match method {
        Method::Osgm(v) => run_osgm(problem, &cell_config(problem, v, opts)),
        Method::Hdm => {
            let mut c = cell_config(problem, Variant::LookaheadH, opts);
            c.schedule = Some(crate::learners::Schedule::Constant { eta: 1.0 / l });
            run_hdm(problem, &c)
        }
        Method::Gd => {
            let n = problem.dim();
            let x1 = SolverConfig::default().start(n);
            run_gd_with(problem, &Stepsize::scaled_identity(opts.pattern, n, 1.0 / l), &x1, opts.iters, opts.tol, 0.0)
        }
    };
    let out = match out {
        Ok(o) => o,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    cell.monitor_failures = out.report.failures().len();
    summarize(&out.trace, opts.tol, &mut cell);
    if let Some(dir) = &opts.csv_dir {
        let path = dir.join(format!("{}__{}.csv", sanitize(label), method.name()));
        match out.trace.write_csv_atomic(&path) {
            Ok(()) => cell.csv = Some(path),
            Err(e) => cell.error = Some(format!("writing {}: {e}", path.display())),
        }
    }
    cell
}

fn sanitize(label: &str) -> String {
    let base = std::path::Path::new(label).file_stem().and_then(|s| s.to_str()).unwrap_or(label);
    base.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn summarize(trace: &SolverTrace, tol: f64, cell: &mut CellResult) {
    cell.iterations = trace.iterations();
    cell.final_gap = trace.header.final_f_gap;
    let Some(mut gaps) = trace.gaps() else { return };
    if let Some(g) = trace.header.final_f_gap {
        gaps.push(g);
    }
    cell.iters_to_tol = gaps.iter().position(|&g| g <= tol);
    let positive: Vec<f64> = gaps.into_iter().take_while(|&g| g > 0.0).collect();
    if positive.len() >= 2 {
        let m = ((positive.len() - 1) / 10).max(1);
        let last = positive.len() - 1;
        cell.terminal_rate = Some((positive[last] / positive[last - m]).powf(1.0 / m as f64));
    }
}
