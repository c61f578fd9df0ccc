//! The invariant suite behind `osgm verify`: property checks for each module
//! at fixed seeds, plus the run-time monitors over a matrix of runs.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{Checks, MonitorReport, GROUPS};
use crate::error::{OsgmError, Result};
use crate::feedback::{evaluate_feedback, feedback_value, FeedbackKind, Point};
use crate::landscape::{estimate_l, ActionKind};
use crate::learners::{Benchmark, LearnerKind, LearnerState, Schedule, Variant};
use crate::linalg::{gaussian_vector, symmetric_eigenvalues, Matrix, Vector};
use crate::problems::{
    make_diagonal_quadratic, make_piecewise_quadratic, make_random_spd, make_tridiagonal, piecewise_inverse_hessian,
    random_logistic, tridiagonal_eigenvalues, tridiagonal_matrix, Objective, Problem,
};
use crate::solver::{run_gd_with, run_hdm, run_osgm, run_osgm_observed, IterationEvent, SolverConfig};
use crate::stepsize::{contract_gradient, CandidateSet, Pattern, PatternGradient, Stepsize};
use crate::trace::SolverTrace;

/// Groups accepted by `--only`: the monitor groups followed by the
/// module-level property groups.
pub const VERIFY_GROUPS: [&str; 15] = [
    "progress",
    "regret",
    "reduction",
    "global",
    "potential",
    "local",
    "superlinear",
    "dichotomy",
    "problems",
    "feedback",
    "stepsize",
    "learners",
    "landscape",
    "hdm",
    "determinism",
];

/// Maps a `--only` name to its group.
pub fn resolve_group(name: &str) -> Option<&'static str> {
    let name = name.trim().to_ascii_lowercase();
    if name == "lemma3" {
        return Some("progress");
    }
    VERIFY_GROUPS.iter().copied().find(|g| *g == name)
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Groups to run; all when empty.
    pub only: Vec<String>,
}

pub fn run_verify(opts: &VerifyOptions) -> Result<MonitorReport> {
    let mut groups = Vec::new();
    for name in &opts.only {
        match resolve_group(name) {
            Some(g) => groups.push(g),
            None => {
                return Err(OsgmError::Parse(format!(
                    "unknown verify group `{name}` (expected one of {})",
                    VERIFY_GROUPS.join(", ")
                )))
            }
        }
    }
    let wants = |g: &str| groups.is_empty() || groups.contains(&g);
    let seed = opts.seed;
    let mut c = Checks::default();
    if wants("problems") {
        problems_group(&mut c, seed)?;
    }
    if wants("feedback") {
        feedback_group(&mut c, seed)?;
    }
    if wants("stepsize") {
        stepsize_group(&mut c, seed)?;
    }
    if wants("learners") {
        learners_group(&mut c, seed)?;
    }
    if wants("landscape") {
        landscape_group(&mut c, seed)?;
    }
    if GROUPS.iter().any(|g| wants(g)) {
        let mut runs = Checks::default();
        monitor_matrix(&mut runs, seed)?;
        let report = runs.into_report();
        for g in GROUPS.iter().filter(|g| wants(g)) {
            c.absorb(&report.group(g));
        }
    }
    if wants("hdm") {
        hdm_group(&mut c, seed)?;
    }
    if wants("determinism") {
        determinism_group(&mut c, seed)?;
    }
    Ok(c.into_report())
}

/// The built-in instance set for a seed.
pub fn builtins(seed: u64) -> Result<Vec<Problem>> {
    let diag: Vec<f64> = (1..=30).map(f64::from).collect();
    Ok(vec![
        make_tridiagonal(20)?,
        make_diagonal_quadratic(&diag)?,
        make_random_spd(10, 50.0, seed)?,
        make_piecewise_quadratic()?,
        random_logistic(40, 5, 0.01, seed)?,
        random_logistic(40, 5, 0.0, seed)?,
    ])
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(stream))
}

fn centre(p: &Problem) -> Vector {
    p.x_star().cloned().unwrap_or_else(|| Vector::zeros(p.dim()))
}

fn rel(lhs: f64, rhs: f64) -> f64 {
    (rhs - lhs) / 1f64.max(lhs.abs()).max(rhs.abs())
}

fn params(s: &Stepsize) -> Vec<f64> {
    match s {
        Stepsize::Scalar { alpha, .. } => vec![*alpha],
        Stepsize::Diagonal(d) => d.iter().copied().collect(),
        Stepsize::Full(m) => m.iter().copied().collect(),
    }
}

fn from_params(pattern: Pattern, n: usize, v: &[f64]) -> Stepsize {
    match pattern {
        Pattern::Scalar => Stepsize::Scalar { alpha: v[0], dim: n },
        Pattern::Diagonal => Stepsize::Diagonal(Vector::from_column_slice(v)),
        Pattern::Full => Stepsize::Full(Matrix::from_column_slice(n, n, v)),
    }
}

fn random_stepsize(r: &mut ChaCha8Rng, pattern: Pattern, n: usize, l: f64) -> Stepsize {
    let base = params(&Stepsize::scaled_identity(pattern, n, 1.0 / l));
    let v: Vec<f64> = base.iter().map(|b| b + 0.5 / l * r.random_range(-1.0..1.0)).collect();
    from_params(pattern, n, &v)
}

fn problems_group(c: &mut Checks, seed: u64) -> Result<()> {
    let mut r = rng(seed, 1);
    for p in builtins(seed)? {
        let n = p.dim();
        let l = p.smoothness();
        let x0 = centre(&p);
        for _ in 0..100 {
            let x = &x0 + gaussian_vector(n, &mut r);
            let y = &x0 + gaussian_vector(n, &mut r);
            let d = (&x - &y).norm();
            let gd = (p.gradient(&x) - p.gradient(&y)).norm();
            c.rec("problems.smoothness", 1e-8, (l * d - gd) / (l * d).max(f64::MIN_POSITIVE));
        }
        for _ in 0..50 {
            let x = &x0 + gaussian_vector(n, &mut r);
            let g = p.gradient(&x);
            let fd = Vector::from_fn(n, |i, _| {
                let h = 1e-6 * x[i].abs().max(1.0);
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                (p.value(&a) - p.value(&b)) / (2.0 * h)
            });
            c.rec("problems.gradient_fd", 1e-5, -(&g - &fd).norm() / fd.norm().max(1e-12));
        }
        if let (Some(fs), Some(xs)) = (p.f_star(), p.x_star()) {
            let scale = 1f64.max(fs.abs());
            c.rec("problems.optimum", 1e-10, -(p.value(xs) - fs).abs() / scale);
            c.rec("problems.optimum", 1e-10, -p.gradient(xs).norm() / 1f64.max(l));
            let mu = p.strong_convexity();
            for _ in 0..20 {
                let x = xs + gaussian_vector(n, &mut r);
                let f = p.value(&x);
                c.rec("problems.strong_convexity", 1e-12, (f - fs - 0.5 * mu * (&x - xs).norm_squared()) / 1f64.max(f.abs()));
            }
        }
    }
    for n in [2usize, 5, 20, 50, 100] {
        let dense = symmetric_eigenvalues(&tridiagonal_matrix(n));
        let formula = tridiagonal_eigenvalues(n);
        let p = make_tridiagonal(n)?;
        let worst = dense
            .iter()
            .zip(&formula)
            .map(|(a, b)| (a - b).abs())
            .fold((p.smoothness() - dense[n - 1]).abs().max((p.strong_convexity() - dense[0]).abs()), f64::max);
        c.rec("problems.tridiagonal_spectrum", 1e-10, -worst);
    }
    Ok(())
}

fn feedback_group(c: &mut Checks, seed: u64) -> Result<()> {
    let mut r = rng(seed, 2);
    let problems = builtins(seed)?;
    let smooth: Vec<&Problem> = problems.iter().filter(|p| p.name() != "piecewise2d").collect();
    for kind in [FeedbackKind::Ratio, FeedbackKind::Hypergradient] {
        let tag = match kind {
            FeedbackKind::Ratio => "ratio",
            FeedbackKind::Hypergradient => "hyper",
        };
        for t in 0..30 {
            let p = smooth[t % smooth.len()];
            let n = p.dim();
            let l = p.smoothness();
            let pattern = [Pattern::Scalar, Pattern::Diagonal, Pattern::Full][t % 3];
            let point = Point::evaluate(p, centre(p) + gaussian_vector(n, &mut r));
            let s = random_stepsize(&mut r, pattern, n, l);
            let sample = evaluate_feedback(kind, p, &point, &s)?;
            let analytic = params(&contract_gradient(&sample, pattern).to_stepsize());
            let base = params(&s);
            let h = 1e-6;
            let mut err = 0.0_f64;
            let mut norm = 0.0_f64;
            for i in 0..base.len() {
                let mut up = base.clone();
                let mut dn = base.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (feedback_value(kind, p, &point, &from_params(pattern, n, &up))?
                    - feedback_value(kind, p, &point, &from_params(pattern, n, &dn))?)
                    / (2.0 * h);
                err += (fd - analytic[i]).powi(2);
                norm += fd * fd;
            }
            c.rec(&format!("feedback.gradient_fd[{tag}]"), 1e-5, -err.sqrt() / norm.sqrt().max(1e-12));

            let full = sample.full_gradient().norm();
            c.rec("feedback.rank_one", 1e-12, -(full - sample.gradient_norm()).abs() / full.max(1e-300));

            let s2 = random_stepsize(&mut r, pattern, n, l);
            let w: f64 = r.random_range(0.0..1.0);
            let a = params(&s);
            let b = params(&s2);
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
            let l1 = feedback_value(kind, p, &point, &s)?;
            let l2 = feedback_value(kind, p, &point, &s2)?;
            let lm = feedback_value(kind, p, &point, &from_params(pattern, n, &mix))?;
            c.rec(&format!("feedback.convexity[{tag}]"), 1e-10, rel(lm, w * l1 + (1.0 - w) * l2));

            let full1 = Stepsize::Full(s.to_dense());
            let full2 = Stepsize::Full(s2.to_dense());
            let g1 = evaluate_feedback(kind, p, &point, &full1)?.full_gradient();
            let g2 = evaluate_feedback(kind, p, &point, &full2)?.full_gradient();
            let lip = match kind {
                FeedbackKind::Ratio => 2.0 * l * l,
                FeedbackKind::Hypergradient => l,
            };
            let bound = lip * (full1.to_dense() - full2.to_dense()).norm();
            c.rec(&format!("feedback.smoothness[{tag}]"), 1e-8, (bound - (g1 - g2).norm()) / bound.max(f64::MIN_POSITIVE));
        }
    }
    for p in problems.iter().filter(|p| p.f_star().is_some()) {
        let n = p.dim();
        for _ in 0..20 {
            let point = Point::evaluate(p, centre(p) + gaussian_vector(n, &mut r));
            let s = random_stepsize(&mut r, Pattern::Full, n, p.smoothness() / 2.0);
            c.rec("feedback.nonnegative_ratio", 1e-12, feedback_value(FeedbackKind::Ratio, p, &point, &s)?);
        }
    }
    Ok(())
}

fn stepsize_group(c: &mut Checks, seed: u64) -> Result<()> {
    let mut r = rng(seed, 3);
    for t in 0..200 {
        let n = 1 + t % 6;
        let pattern = [Pattern::Scalar, Pattern::Diagonal, Pattern::Full][t % 3];
        let rand_step = |r: &mut ChaCha8Rng| {
            let len = params(&Stepsize::zeros(pattern, n)).len();
            let v: Vec<f64> = (0..len).map(|_| r.random_range(-2.0..2.0)).collect();
            from_params(pattern, n, &v)
        };
        let set = match t % 4 {
            0 => CandidateSet::Unconstrained,
            1 => CandidateSet::Box { lo: -0.5, hi: r.random_range(0.0..1.0) },
            2 => CandidateSet::Nonnegative,
            _ => CandidateSet::Ball { center: rand_step(&mut r), radius: r.random_range(0.1..2.0) },
        };
        let a = rand_step(&mut r);
        let b = rand_step(&mut r);
        let pa = set.project(&a)?;
        let pb = set.project(&b)?;
        c.rec("stepsize.projection_nonexpansive", 1e-12, a.param_distance(&b)? - pa.param_distance(&pb)?);
        c.rec("stepsize.projection_feasible", 0.0, if set.contains(&pa, 1e-12)? { 0.0 } else { -1.0 });
    }
    for _ in 0..50 {
        let n = 5;
        let g_half = gaussian_vector(n, &mut r);
        let g = gaussian_vector(n, &mut r);
        let denom = r.random_range(0.1..3.0);
        let full = match contract_rank_one_dense(&g_half, &g, denom) {
            PatternGradient::Dense(m) => m,
            _ => unreachable!(),
        };
        if let PatternGradient::Diagonal(d) = crate::stepsize::contract_rank_one(&g_half, &g, denom, Pattern::Diagonal) {
            let diff = (full.diagonal() - &d).amax();
            c.rec("stepsize.diagonal_contraction", 1e-14, -diff / d.amax().max(1e-300));
        }
        let alpha: f64 = r.random_range(-1.0..1.0);
        let scalar = Stepsize::scalar(alpha, n);
        let embedded = scalar.embed(Pattern::Full)?.apply(&g)?;
        let direct = Stepsize::Full(Matrix::identity(n, n) * alpha).apply(&g)?;
        c.rec("stepsize.embedding", 1e-15, -(embedded - &direct).norm() / direct.norm().max(1e-300));
    }
    Ok(())
}

fn contract_rank_one_dense(g_half: &Vector, g: &Vector, denom: f64) -> PatternGradient {
    PatternGradient::Dense(g_half * g.transpose() * (-1.0 / denom))
}

fn base(variant: Variant, pattern: Pattern, iters: usize) -> SolverConfig {
    let mut c = SolverConfig::for_variant(variant);
    c.pattern = pattern;
    c.max_iters = iters;
    c.allow_unsafe = true;
    c
}

fn boxed(mut c: SolverConfig, p: &Problem) -> SolverConfig {
    if !c.action.has_lookahead() {
        c.set = CandidateSet::Box { lo: 0.0, hi: 2.0 / p.smoothness() };
    }
    c
}

fn dist_sq(a: &Stepsize, b: &Stepsize) -> f64 {
    params(a).iter().zip(params(b)).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn learners_group(c: &mut Checks, seed: u64) -> Result<()> {
    let problems = builtins(seed)?;
    let runs = [
        (Variant::LookaheadR, Pattern::Full),
        (Variant::MonotoneLookaheadH, Pattern::Diagonal),
        (Variant::VanillaR, Pattern::Diagonal),
        (Variant::MonotoneH, Pattern::Scalar),
    ];
    for p in problems.iter().filter(|p| p.f_star().is_some()) {
        let n = p.dim();
        let l = p.smoothness();
        for (variant, pattern) in runs {
            let config = boxed(base(variant, pattern, 300), p);
            let kind = config.feedback;
            let benches: Vec<Stepsize> = [0.5, 1.0, 1.5]
                .iter()
                .map(|a| Stepsize::scaled_identity(pattern, n, a / l))
                .filter(|s| config.set.contains(s, 1e-12).unwrap_or(false))
                .collect();
            let p1 = config.initial_stepsize(n, l);
            let mut sums = vec![0.0; benches.len()];
            let (mut own, mut grad_sq) = (0.0, 0.0);
            let mut eta_last = 0.0;
            let mut err = None;
            let constant = variant.action().has_lookahead();
            let mut observe = |ev: &IterationEvent<'_>| {
                let g2 = params(&ev.gradient.to_stepsize()).iter().map(|v| v * v).sum::<f64>();
                own += ev.sample.value;
                grad_sq += g2;
                eta_last = ev.eta;
                for (i, b) in benches.iter().enumerate() {
                    let fb = match feedback_value(kind, p, ev.current, b) {
                        Ok(v) => v,
                        Err(e) => {
                            err = Some(e);
                            return;
                        }
                    };
                    sums[i] += fb;
                    let before = dist_sq(ev.stepsize, b);
                    let after = dist_sq(ev.next_stepsize, b);
                    let rhs = before - 2.0 * ev.eta * (ev.sample.value - fb) + ev.eta * ev.eta * g2;
                    c.rec("learners.ogd_step", 1e-10, (rhs - after) / 1f64.max(before));
                    if constant {
                        let rhs = sums[i] + dist_sq(&p1, b) / (2.0 * ev.eta) + 0.5 * ev.eta * grad_sq;
                        c.rec("learners.static_regret", 1e-9, rel(own, rhs));
                    }
                }
            };
            run_osgm_observed(p, &config, &mut observe)?;
            if let Some(e) = err {
                return Err(e);
            }
        }
    }

    let p = make_piecewise_quadratic()?;
    let l = p.smoothness();
    let mut config = base(Variant::LookaheadR, Pattern::Diagonal, 200);
    config.x1 = Some(Vector::from_vec(vec![-1.0, 1.0]));
    config.benchmarks.push(Benchmark::sequence("regions", |_, x| Stepsize::Diagonal(piecewise_inverse_hessian(x))));
    let p1 = Stepsize::scaled_identity(Pattern::Diagonal, 2, 1.0 / l);
    let (mut own, mut fb_sum, mut grad_sq, mut path, mut drift) = (0.0, 0.0, 0.0, 0.0, 0.0_f64);
    let mut prev: Option<Stepsize> = None;
    let mut observe = |ev: &IterationEvent<'_>| {
        let hat = Stepsize::Diagonal(piecewise_inverse_hessian(&ev.current.x));
        own += ev.sample.value;
        fb_sum += feedback_value(FeedbackKind::Ratio, &p, ev.current, &hat).unwrap_or(f64::NAN);
        grad_sq += ev.gradient.norm_sq();
        drift = drift.max(dist_sq(ev.stepsize, &p1).sqrt());
        if let Some(q) = &prev {
            path += dist_sq(q, &hat).sqrt();
        }
        let rhs = fb_sum + 0.5 * ev.eta * grad_sq + dist_sq(&hat, &p1) / (2.0 * ev.eta) + drift * path / ev.eta;
        c.rec("learners.dynamic_regret", 1e-9, rel(own, rhs));
        prev = Some(hat);
    };
    run_osgm_observed(&p, &config, &mut observe)?;

    let mut r = rng(seed, 4);
    for pattern in [Pattern::Scalar, Pattern::Diagonal, Pattern::Full] {
        let n = 4;
        let mut state = LearnerState::new(
            LearnerKind::Adagrad,
            Stepsize::scaled_identity(pattern, n, 0.1),
            Schedule::Anytime { c: 0.5 },
            CandidateSet::Unconstrained,
        )?;
        let mut prev_rate: Option<Vec<f64>> = None;
        for _ in 0..100 {
            let grad = crate::stepsize::contract_rank_one(&gaussian_vector(n, &mut r), &gaussian_vector(n, &mut r), 1.0, pattern);
            let grad = match grad {
                PatternGradient::RankOne { left, right, scale } => PatternGradient::Dense(left * right.transpose() * scale),
                g => g,
            };
            let eta = state.step(&grad)?;
            let acc: Vec<f64> = match state.accumulator.as_ref() {
                Some(crate::learners::Accumulator::Scalar(a)) => vec![*a],
                Some(crate::learners::Accumulator::Diagonal(a)) => a.iter().copied().collect(),
                Some(crate::learners::Accumulator::Full(a)) => a.iter().copied().collect(),
                None => Vec::new(),
            };
            let rate: Vec<f64> = acc.iter().map(|g| eta / (g.sqrt() + crate::learners::ADAGRAD_EPS)).collect();
            if let Some(prev) = &prev_rate {
                let worst = prev.iter().zip(&rate).map(|(a, b)| (a - b) / a.max(f64::MIN_POSITIVE)).fold(f64::INFINITY, f64::min);
                c.rec("learners.adagrad_rate", 1e-15, worst);
            }
            prev_rate = Some(rate);
        }
    }
    Ok(())
}

/// Objective wrapper counting oracle calls.
#[derive(Debug)]
struct Counting {
    inner: Arc<dyn Objective>,
    f: Arc<AtomicU64>,
    g: Arc<AtomicU64>,
}

impl Objective for Counting {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.f.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.g.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x)
    }
    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        self.f.fetch_add(1, Ordering::Relaxed);
        self.g.fetch_add(1, Ordering::Relaxed);
        self.inner.value_and_gradient(x)
    }
    fn hessian_vec(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        self.inner.hessian_vec(x, v)
    }
    fn curvature_lower_bound(&self, c: &Vector, r: f64) -> Option<f64> {
        self.inner.curvature_lower_bound(c, r)
    }
}

/// `p` with its oracle routed through call counters.
pub fn counted(p: &Problem) -> Result<(Problem, Arc<AtomicU64>, Arc<AtomicU64>)> {
    let f = Arc::new(AtomicU64::new(0));
    let g = Arc::new(AtomicU64::new(0));
    let obj = Counting { inner: p.objective().clone(), f: f.clone(), g: g.clone() };
    let q = Problem::new(p.name(), Arc::new(obj), p.smoothness(), p.strong_convexity())?.with_optimum(
        p.f_star(),
        p.x_star().cloned(),
        p.f_star_estimated(),
    )?;
    f.store(0, Ordering::Relaxed);
    g.store(0, Ordering::Relaxed);
    Ok((q, f, g))
}

fn landscape_group(c: &mut Checks, seed: u64) -> Result<()> {
    for p in builtins(seed)?.iter().filter(|p| p.f_star().is_some()) {
        let l = p.smoothness();
        for feedback in [FeedbackKind::Ratio, FeedbackKind::Hypergradient] {
            for action in [ActionKind::Vanilla, ActionKind::Monotone, ActionKind::Lookahead, ActionKind::MonotoneLookahead] {
                let mut config = boxed(base(Variant::from_parts(feedback, action), Pattern::Diagonal, 200), p);
                config.monitors = false;
                let mut observe = |ev: &IterationEvent<'_>| {
                    let (f, f_next) = (ev.current.f, ev.outcome.f_next);
                    if action.is_monotone() {
                        c.rec("landscape.monotone", 0.0, (f - f_next) / 1f64.max(f.abs()));
                    }
                    if action == ActionKind::Lookahead {
                        let s = ev.sample;
                        let rhs = s.f_at_proposal - s.g_half.norm_squared() / (2.0 * l);
                        c.rec("landscape.descent_lemma", 1e-12, rhs - f_next);
                    }
                };
                run_osgm_observed(p, &config, &mut observe)?;

                let (q, fc, gc) = counted(p)?;
                let out = run_osgm(&q, &config)?;
                let (f, g) = (fc.load(Ordering::Relaxed), gc.load(Ordering::Relaxed));
                let ok = f == out.oracle_calls.f && g == out.oracle_calls.g;
                c.rec("landscape.oracle_calls", 0.0, if ok { 0.0 } else { -1.0 });
            }
        }
    }
    let p = make_diagonal_quadratic(&[1.0, 4.0])?;
    let probe = Vector::from_vec(vec![1.0, 1.0]);
    for (l0, expect) in [(4.0, 4.0), (1.0, 4.0), (8.0, 8.0)] {
        let got = estimate_l(&p, &probe, l0, 0.5)?;
        c.rec("landscape.estimate_l", 0.0, -(got - expect).abs());
    }
    Ok(())
}

/// Every variant over the built-ins with monitors on, plus the runs whose
/// schedules unlock the dichotomy and superlinear monitors.
fn monitor_matrix(c: &mut Checks, seed: u64) -> Result<()> {
    let problems = builtins(seed)?;
    let variants = [
        Variant::LookaheadR,
        Variant::MonotoneLookaheadR,
        Variant::VanillaR,
        Variant::MonotoneR,
        Variant::LookaheadH,
        Variant::MonotoneLookaheadH,
        Variant::VanillaH,
        Variant::MonotoneH,
    ];
    for p in &problems {
        let l = p.smoothness();
        for variant in variants {
            for pattern in [Pattern::Diagonal, Pattern::Full] {
                let mut config = boxed(base(variant, pattern, 400), p);
                config.stop_gap = 1e-12f64.max(if p.f_star_estimated() { 1e-10 } else { 0.0 });
                config.stop_grad = 0.0;
                if variant.action().has_lookahead() && p.strong_convexity() > 0.0 && pattern == Pattern::Full {
                    let mut tight = config.clone();
                    tight.schedule = Some(Schedule::Constant {
                        eta: match variant.feedback() {
                            FeedbackKind::Ratio => 1.0 / (4.0 * l * l),
                            FeedbackKind::Hypergradient => 1.0 / (2.0 * l),
                        },
                    });
                    c.absorb(&run_osgm(p, &tight)?.report);
                }
                c.absorb(&run_osgm(p, &config)?.report);
            }
        }
    }
    for (n, s) in [(5usize, 0u64), (20, 1)] {
        let p = make_random_spd(n, 2.0, seed.wrapping_add(s))?;
        for variant in [Variant::LookaheadR, Variant::MonotoneLookaheadH] {
            let mut config = base(variant, Pattern::Full, 200);
            config.stop_gap = 0.0;
            config.stop_grad = 0.0;
            c.absorb(&run_osgm(&p, &config)?.report);
        }
    }
    Ok(())
}

fn hdm_group(c: &mut Checks, seed: u64) -> Result<()> {
    let p = make_random_spd(10, 1000.0, seed)?;
    let l = p.smoothness();
    let mut config = base(Variant::LookaheadH, Pattern::Full, 100);
    config.record_iterates = true;
    config.monitors = false;
    config.stop_gap = 0.0;
    config.stop_grad = 0.0;
    config.schedule = Some(Schedule::Constant { eta: 1.0 / l });
    let a = run_osgm(&p, &config)?.iterates;
    let b = run_hdm(&p, &config)?.iterates;
    c.rec("hdm.equivalence", 1e-12, if a.len() == b.len() { 0.0 } else { -1.0 });
    for (xa, xb) in a.iter().zip(&b) {
        c.rec("hdm.equivalence", 1e-12, -(xa - xb).norm() / xa.norm().max(1e-300));
    }

    let mut frozen = config.clone();
    frozen.schedule = Some(Schedule::Constant { eta: 0.0 });
    frozen.max_iters = 50;
    let h = run_hdm(&p, &frozen)?;
    let gd = run_gd_with(&p, &Stepsize::scaled_identity(Pattern::Full, 10, 1.0 / l), &frozen.start(10), 50, 0.0, 0.0)?;
    for (r1, r2) in h.trace.rows.iter().zip(&gd.trace.rows) {
        let (g1, g2) = (r1.f_gap.unwrap_or(f64::NAN), r2.f_gap.unwrap_or(f64::NAN));
        c.rec("hdm.frozen", 1e-12, -(g1 - g2).abs() / g2.max(1e-300));
    }

    Ok(())
}

fn determinism_group(c: &mut Checks, seed: u64) -> Result<()> {
    let runs = [
        (Variant::LookaheadR, Pattern::Full),
        (Variant::MonotoneLookaheadH, Pattern::Diagonal),
        (Variant::MonotoneR, Pattern::Scalar),
    ];
    for (variant, pattern) in runs {
        for p in builtins(seed)?.iter().filter(|p| p.f_star().is_some()) {
            let config = boxed(base(variant, pattern, 150), p);
            let a = run_osgm(p, &config)?.trace;
            let b = run_osgm(p, &config)?.trace;
            let (ta, tb) = (a.to_csv_string()?, b.to_csv_string()?);
            c.rec("determinism.rerun", 0.0, if ta == tb { 0.0 } else { -1.0 });
            let back = SolverTrace::from_csv_str(&ta)?;
            c.rec("determinism.round_trip", 0.0, if back == a { 0.0 } else { -1.0 });
            let mut quiet = config.clone();
            quiet.monitors = false;
            let off = run_osgm(p, &quiet)?.trace;
            c.rec("determinism.monitors_side_effect_free", 0.0, if off.rows == a.rows { 0.0 } else { -1.0 });
        }
    }
    Ok(())
}
