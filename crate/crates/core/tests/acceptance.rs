use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use osgm::diagnostics::MonitorReport;
use osgm::feedback::{evaluate_feedback, feedback_value, FeedbackKind, Point};
use osgm::landscape::ActionKind;
use osgm::learners::{Benchmark, Variant};
use osgm::linalg::{gaussian_matrix, gaussian_vector, symmetric_eigenvalues, Matrix, Vector};
use osgm::problems::{
    make_diagonal_quadratic, make_piecewise_quadratic, make_random_spd, make_tridiagonal, make_tridiagonal_twin,
    piecewise_inverse_hessian, random_logistic, sublevel_radius, tridiagonal_eigenvalues, tridiagonal_eigenvectors,
    tridiagonal_matrix, Problem,
};
use osgm::solver::{run_hdm, run_osgm, run_osgm_observed, IterationEvent, RunOutput, SolverConfig};
use osgm::stepsize::{contract_gradient, CandidateSet, Pattern, Stepsize};
use osgm::trace::SolverTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn lift<T>(r: osgm::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Smallest slack seen so far and where it occurred.
struct Worst {
    slack: f64,
    at: String,
    count: usize,
}

impl Worst {
    fn new() -> Self {
        Self { slack: f64::INFINITY, at: String::new(), count: 0 }
    }

    fn see(&mut self, slack: f64, at: impl FnOnce() -> String) {
        self.count += 1;
        let s = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        if s < self.slack {
            self.slack = s;
            self.at = at();
        }
    }

    fn require(&self, what: &str, tol: f64) -> Result<String, String> {
        if self.count == 0 {
            return Err(format!("{what}: nothing evaluated"));
        }
        if self.slack >= -tol {
            Ok(format!("{what}: {} evaluations, worst slack {:.2e}", self.count, self.slack))
        } else {
            Err(format!("{what}: worst slack {:.3e} < -{tol:.0e} at {}", self.slack, self.at))
        }
    }
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

fn param_dist_sq(a: &Stepsize, b: &Stepsize) -> f64 {
    params(a).iter().zip(params(b)).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// f(x^k) − f* for k = 1..K+1.
fn gaps(trace: &SolverTrace) -> Result<Vec<f64>, String> {
    let mut g: Vec<f64> = trace.rows.iter().map(|r| r.f_gap.ok_or("row without f_gap")).collect::<Result<_, _>>()?;
    g.push(trace.header.final_f_gap.ok_or("trace without final gap")?);
    Ok(g)
}

fn ln0(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// ln(base^k), with base ≤ 0 giving −∞.
fn ln_pow(base: f64, k: f64) -> f64 {
    if base > 0.0 {
        k * base.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// rhs − lhs for two logarithms, with −∞ on both sides counting as equal.
fn log_gap(lhs: f64, rhs: f64) -> f64 {
    if lhs == f64::NEG_INFINITY {
        0.0
    } else {
        rhs - lhs
    }
}

fn require_monitors(report: &MonitorReport, prefixes: &[&str], label: &str) -> Result<usize, String> {
    let mut n = 0;
    for p in prefixes {
        let recs = report.matching(p);
        let checked: usize = recs.iter().map(|r| r.checked).sum();
        if checked == 0 {
            return Err(format!("{label}: no `{p}` monitor evaluations"));
        }
        if let Some(bad) = recs.iter().find(|r| !r.pass) {
            return Err(format!("{label}: monitor {} failed, worst slack {:?}", bad.name, bad.worst_slack));
        }
        n += checked;
    }
    Ok(n)
}

fn no_monitor_failures(report: &MonitorReport, label: &str) -> Result<(), String> {
    match report.failures().first() {
        Some(bad) => Err(format!("{label}: monitor {} failed, worst slack {:?}", bad.name, bad.worst_slack)),
        None => Ok(()),
    }
}

fn base_config(variant: Variant, pattern: Pattern, iters: usize) -> SolverConfig {
    let mut c = SolverConfig::for_variant(variant);
    c.pattern = pattern;
    c.max_iters = iters;
    c.stop_gap = 0.0;
    c.stop_grad = 0.0;
    c
}

// ---------------------------------------------------------------------------

fn c1_gradient_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0_f64;
    let mut count = 0;
    for pattern in [Pattern::Scalar, Pattern::Diagonal, Pattern::Full] {
        for kind in [FeedbackKind::Ratio, FeedbackKind::Hypergradient] {
            for t in 0..30u64 {
                let problem = lift(match t % 3 {
                    0 => make_random_spd(4, 20.0, 1000 + t),
                    1 => random_logistic(30, 4, 0.1, 2000 + t),
                    _ => make_tridiagonal(5),
                })?;
                let n = problem.dim();
                let l = problem.smoothness();
                let xs = problem.x_star().cloned().unwrap_or_else(|| Vector::zeros(n));
                let x = &xs + gaussian_vector(n, &mut rng);
                let base = Stepsize::scaled_identity(pattern, n, 1.0 / l);
                let mut p = params(&base);
                for v in p.iter_mut() {
                    *v += 0.5 / l * rng.random_range(-1.0..1.0);
                }
                let stepsize = from_params(pattern, n, &p);
                let point = Point::evaluate(&problem, x);
                let sample = lift(evaluate_feedback(kind, &problem, &point, &stepsize))?;
                let analytic = params(&contract_gradient(&sample, pattern).to_stepsize());
                let h = 1e-6;
                let mut fd = Vec::with_capacity(p.len());
                for i in 0..p.len() {
                    let mut up = p.clone();
                    let mut dn = p.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fu = lift(feedback_value(kind, &problem, &point, &from_params(pattern, n, &up)))?;
                    let fl = lift(feedback_value(kind, &problem, &point, &from_params(pattern, n, &dn)))?;
                    fd.push((fu - fl) / (2.0 * h));
                }
                let diff: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let rel = diff / scale;
                if !(rel <= 1e-5) {
                    return Err(format!(
                        "{kind} feedback, {pattern} pattern, {}: relative error {rel:.3e}",
                        problem.name()
                    ));
                }
                worst = worst.max(rel);
                count += 1;
            }
        }
    }
    Ok(format!("{count} triples, worst relative error {worst:.2e}"))
}

fn progress_config(problem: &Problem, feedback: FeedbackKind, action: ActionKind) -> SolverConfig {
    let l = problem.smoothness();
    let variant = Variant::from_parts(feedback, action);
    let mut c = if action.has_lookahead() {
        base_config(variant, Pattern::Full, 1000)
    } else {
        let mut c = base_config(variant, Pattern::Diagonal, 1000);
        c.set = CandidateSet::Box { lo: 0.0, hi: 2.0 / l };
        c
    };
    c.allow_unsafe = true;
    c
}

fn progress_problems() -> Result<Vec<Problem>, String> {
    Ok(vec![lift(make_tridiagonal(50))?, lift(make_random_spd(20, 100.0, 3))?, lift(make_piecewise_quadratic())?])
}

const ACTIONS: [ActionKind; 4] =
    [ActionKind::Vanilla, ActionKind::Monotone, ActionKind::Lookahead, ActionKind::MonotoneLookahead];
const FEEDBACKS: [FeedbackKind; 2] = [FeedbackKind::Ratio, FeedbackKind::Hypergradient];

fn c2_progress() -> Outcome {
    let mut worst = Worst::new();
    let mut monitored = 0;
    for problem in progress_problems()? {
        let fs = problem.f_star().ok_or("built-in without f*")?;
        let l = problem.smoothness();
        for feedback in FEEDBACKS {
            for action in ACTIONS {
                let config = progress_config(&problem, feedback, action);
                let label = format!("{} {}", problem.name(), config.variant());
                let mut observe = |ev: &IterationEvent<'_>| {
                    let s = ev.sample;
                    let f_next = ev.outcome.f_next;
                    let gn2 = s.g.norm_squared();
                    let gh2 = s.g_half.norm_squared();
                    let gap = s.f_at_x - fs;
                    let r_k = (f_next - fs) / gap;
                    let r_p = (s.f_at_proposal - fs) / gap;
                    let grad_r = gh2 * gn2 / (gap * gap);
                    let h_k = (f_next - s.f_at_x) / gn2;
                    let h_p = (s.f_at_proposal - s.f_at_x) / gn2;
                    let grad_h = gh2 / gn2;
                    let (sr, sh) = match action {
                        ActionKind::Vanilla => (-(r_k - r_p).abs(), -(h_k - h_p).abs()),
                        ActionKind::Monotone => (r_p.min(1.0) - r_k, h_p.min(0.0) - h_k),
                        ActionKind::Lookahead => (r_p - grad_r / (4.0 * l * l) - r_k, h_p - grad_h / (2.0 * l) - h_k),
                        ActionKind::MonotoneLookahead => (
                            (r_p - grad_r / (4.0 * l * l)).min(1.0) - r_k,
                            (h_p - grad_h / (2.0 * l)).min(0.0) - h_k,
                        ),
                    };
                    worst.see(sr, || format!("{label} k={} (ratio)", ev.k));
                    worst.see(sh, || format!("{label} k={} (hypergradient)", ev.k));
                };
                let out = lift(run_osgm_observed(&problem, &config, &mut observe))?;
                monitored += require_monitors(&out.report, &["progress."], &label)?;
            }
        }
    }
    let msg = worst.require("progress inequalities", 1e-10)?;
    Ok(format!("{msg}; {monitored} monitor evaluations pass"))
}

fn c3_regret() -> Outcome {
    let mut step = Worst::new();
    let mut stat = Worst::new();
    let mut monitored = 0;
    for problem in progress_problems()? {
        let n = problem.dim();
        let l = problem.smoothness();
        for feedback in FEEDBACKS {
            for action in ACTIONS {
                let mut config = progress_config(&problem, feedback, action);
                config.max_iters = 500;
                config.p1 = Some(Stepsize::scaled_identity(config.pattern, n, 0.5 / l));
                let pattern = config.pattern;
                let label = format!("{} {} {}", problem.name(), config.variant(), pattern);
                let mut benches = vec![
                    ("P1", Stepsize::scaled_identity(pattern, n, 0.5 / l)),
                    ("inv_L", Stepsize::scaled_identity(pattern, n, 1.0 / l)),
                ];
                let inv = problem.inverse_hessian_at_opt().and_then(|m| Stepsize::Full(m).restrict(pattern));
                if let Some(inv) = &inv {
                    if lift(config.set.contains(inv, 1e-12))? {
                        benches.push(("inv_hessian", inv.clone()));
                    }
                }
                let p1 = params(&benches[0].1);
                let mut sums = vec![(0.0, 0.0); benches.len()];
                let mut grad_sq = 0.0;
                let mut eta_const = None;
                let mut failed: Option<String> = None;
                let mut observe = |ev: &IterationEvent<'_>| {
                    let g2 = params(&ev.gradient.to_stepsize()).iter().map(|v| v * v).sum::<f64>();
                    grad_sq += g2;
                    eta_const = Some(ev.eta);
                    for (i, (name, p_hat)) in benches.iter().enumerate() {
                        let fb = match feedback_value(feedback, &problem, ev.current, p_hat) {
                            Ok(v) => v,
                            Err(e) => {
                                failed = Some(e.to_string());
                                return;
                            }
                        };
                        let before = param_dist_sq(ev.stepsize, p_hat);
                        let after = param_dist_sq(ev.next_stepsize, p_hat);
                        let rhs = before - 2.0 * ev.eta * (ev.sample.value - fb) + ev.eta * ev.eta * g2;
                        let scale = 1f64.max(before.abs()).max(after.abs());
                        step.see((rhs - after) / scale, || format!("{label} [{name}] k={}", ev.k));
                        sums[i].0 += ev.sample.value;
                        sums[i].1 += fb;
                    }
                };
                let out = lift(run_osgm_observed(&problem, &config, &mut observe))?;
                if let Some(e) = failed {
                    return Err(e);
                }
                let mut needed = vec![String::from("regret.ogd_step[P1]"), String::from("regret.ogd_step[inv_L]")];
                needed.push(String::from("regret.static[P1]"));
                needed.push(String::from("regret.static[inv_L]"));
                if benches.len() == 3 {
                    needed.push(String::from("regret.static[inv_hessian]"));
                }
                let refs: Vec<&str> = needed.iter().map(String::as_str).collect();
                monitored += require_monitors(&out.report, &refs, &label)?;
                monitored += require_monitors(&out.report, &["regret."], &label)?;
                if action.has_lookahead() {
                    let eta = eta_const.ok_or("no iterations")?;
                    for (i, (name, p_hat)) in benches.iter().enumerate() {
                        let d1: f64 = p1.iter().zip(params(p_hat)).map(|(a, b)| (a - b) * (a - b)).sum();
                        let (lhs, fb) = sums[i];
                        let rhs = fb + d1 / (2.0 * eta) + 0.5 * eta * grad_sq;
                        let scale = 1f64.max(lhs.abs()).max(rhs.abs());
                        stat.see((rhs - lhs) / scale, || format!("{label} [{name}]"));
                    }
                }
            }
        }
    }

    // Region-switching benchmark sequence on the piecewise quadratic.
    let problem = lift(make_piecewise_quadratic())?;
    let l = problem.smoothness();
    let mut dynamic = Worst::new();
    let mut switches_total = 0;
    for (variant, x1) in [
        (Variant::LookaheadR, DVector::from_vec(vec![-1.0, 1.0])),
        (Variant::VanillaR, DVector::from_vec(vec![-1.0, 0.5])),
        (Variant::MonotoneLookaheadH, DVector::from_vec(vec![-2.0, 1.0])),
    ] {
        let mut config = base_config(variant, Pattern::Diagonal, 300);
        config.x1 = Some(x1);
        if variant == Variant::VanillaR {
            config.schedule = Some(osgm::learners::Schedule::Constant { eta: 1.0 / (8.0 * l * l) });
        }
        config.benchmarks.push(Benchmark::sequence("regions", |_, x| Stepsize::Diagonal(piecewise_inverse_hessian(x))));
        let feedback = config.feedback;
        let label = format!("piecewise2d {variant}");
        let p1 = Stepsize::scaled_identity(Pattern::Diagonal, 2, 1.0 / l);
        let (mut lhs, mut fb_sum, mut grad_sq, mut path, mut max_drift) = (0.0, 0.0, 0.0, 0.0, 0.0_f64);
        let mut prev_hat: Option<Stepsize> = None;
        let mut eta = 0.0;
        let mut zero_feedback = Worst::new();
        let mut switches = 0;
        let mut observe = |ev: &IterationEvent<'_>| {
            let p_hat = Stepsize::Diagonal(piecewise_inverse_hessian(&ev.current.x));
            let fb = feedback_value(feedback, &problem, ev.current, &p_hat).unwrap_or(f64::NAN);
            if feedback == FeedbackKind::Ratio {
                zero_feedback.see(-fb.abs(), || format!("{label} k={}", ev.k));
            }
            lhs += ev.sample.value;
            fb_sum += fb;
            grad_sq += ev.gradient.norm_sq();
            max_drift = max_drift.max(param_dist_sq(ev.stepsize, &p1).sqrt());
            if let Some(prev) = &prev_hat {
                let d = param_dist_sq(prev, &p_hat).sqrt();
                if d > 0.0 {
                    switches += 1;
                }
                path += d;
            }
            eta = ev.eta;
            let d_k = param_dist_sq(&p_hat, &p1);
            let rhs = fb_sum + 0.5 * eta * grad_sq + d_k / (2.0 * eta) + max_drift * path / eta;
            let scale = 1f64.max(lhs.abs()).max(rhs.abs());
            dynamic.see((rhs - lhs) / scale, || format!("{label} k={}", ev.k));
            prev_hat = Some(p_hat);
        };
        let out = lift(run_osgm_observed(&problem, &config, &mut observe))?;
        if switches == 0 {
            return Err(format!("{label}: the trajectory never switched regions"));
        }
        switches_total += switches;
        if feedback == FeedbackKind::Ratio {
            zero_feedback.require("region inverse Hessian feedback", 1e-14)?;
        }
        monitored += require_monitors(&out.report, &["regret.dynamic[regions]"], &label)?;
    }
    let a = step.require("per-step OGD inequality", 1e-9)?;
    let b = stat.require("static regret", 1e-9)?;
    let c = dynamic.require("dynamic regret", 1e-9)?;
    Ok(format!("{a}; {b}; {c} ({switches_total} region switches); {monitored} monitor evaluations pass"))
}

/// P* and κ* for the pattern, independently of the library's own choice.
fn optimal_pair(problem: &Problem, pattern: Pattern) -> Result<(Stepsize, f64), String> {
    let a = problem.hessian_at_opt().ok_or("no Hessian")?;
    let inv = a.clone().try_inverse().ok_or("singular Hessian")?;
    match pattern {
        Pattern::Full => Ok((Stepsize::Full(inv), 1.0)),
        _ => {
            if osgm::linalg::is_diagonal(a) {
                Ok((Stepsize::Diagonal(inv.diagonal()), 1.0))
            } else {
                let (d, k) = problem.diagonal_optimum().ok_or("no diagonal optimum")?;
                Ok((Stepsize::Diagonal(d.clone()), *k))
            }
        }
    }
}

fn thm3_problems() -> Result<Vec<Problem>, String> {
    let diag: Vec<f64> = (1..=100).map(f64::from).collect();
    Ok(vec![lift(make_tridiagonal(100))?, lift(make_diagonal_quadratic(&diag))?])
}

fn c4_global_ratio() -> Outcome {
    let mut worst = Worst::new();
    let mut monitored = 0;
    let mut details = Vec::new();
    for problem in thm3_problems()? {
        let n = problem.dim();
        let l = problem.smoothness();
        let kappa = l / problem.strong_convexity();
        for pattern in [Pattern::Full, Pattern::Diagonal] {
            let config = base_config(Variant::LookaheadR, pattern, 5000);
            let label = format!("{} {pattern}", problem.name());
            let out = lift(run_osgm(&problem, &config))?;
            let (p_star, kappa_star) = optimal_pair(&problem, pattern)?;
            let p1 = Stepsize::scaled_identity(pattern, n, 1.0 / l);
            let d = param_dist_sq(&p1, &p_star);
            let g = gaps(&out.trace)?;
            for k in 1..g.len() {
                let kf = k as f64;
                let lhs = ln0(g[k]) - g[0].ln();
                let rhs = ln_pow(1.0 - 1.0 / kappa, kf).min(ln_pow(1.0 - 1.0 / kappa_star + l * l * d / kf, kf));
                worst.see(log_gap(lhs, rhs) / kf, || format!("{label} K={k}"));
            }
            monitored += require_monitors(&out.report, &["global.ratio_lookahead", "global.best_of_both"], &label)?;
            no_monitor_failures(&out.report, &label)?;
            details.push(format!("{label}: K={} gap {:.1e}", g.len() - 1, g[g.len() - 1]));
        }
    }
    let msg = worst.require("log-space bound, per-K slack", 1e-9)?;
    Ok(format!("{msg}; {monitored} monitor evaluations pass; {}", details.join(", ")))
}

fn c5_potentials() -> Outcome {
    let mut phi_r = Worst::new();
    let mut phi_h = Worst::new();
    let mut omega_h = Worst::new();
    let mut monitored = 0;
    for problem in thm3_problems()? {
        let n = problem.dim();
        let l = problem.smoothness();
        let mu = problem.strong_convexity();
        let fs = problem.f_star().ok_or("no f*")?;
        let inv = Stepsize::Full(problem.hessian_at_opt().ok_or("no Hessian")?.clone().try_inverse().ok_or("singular")?);
        let config = base_config(Variant::LookaheadR, Pattern::Full, 5000);
        let label = format!("{} lookahead-osgm-r", problem.name());
        let rho = 1.0 / (l * l);
        let mut observe = |ev: &IterationEvent<'_>| {
            let (g0, g1) = (ev.current.f - fs, ev.outcome.f_next - fs);
            if g0 <= 0.0 || g1 <= 0.0 {
                return;
            }
            let change = rho * (g1 / g0).ln() + param_dist_sq(ev.next_stepsize, &inv) - param_dist_sq(ev.stepsize, &inv);
            phi_r.see(-1.0 / (l * l) - change, || format!("{label} k={}", ev.k));
        };
        let out = lift(run_osgm_observed(&problem, &config, &mut observe))?;
        monitored += require_monitors(&out.report, &["potential.ratio_phi[inv_hessian]"], &label)?;

        let config = base_config(Variant::MonotoneLookaheadH, Pattern::Full, 5000);
        let x1 = config.start(n);
        let delta = lift(sublevel_radius(&problem, &x1))?.value;
        let rho_omega = 2.0 * delta * delta / l;
        let inv_l = Stepsize::scaled_identity(Pattern::Full, n, 1.0 / l);
        let label = format!("{} monotone-lookahead-osgm-h", problem.name());
        let mut observe = |ev: &IterationEvent<'_>| {
            let (g0, g1) = (ev.current.f - fs, ev.outcome.f_next - fs);
            if g0 <= 0.0 || g1 <= 0.0 {
                return;
            }
            let dc = param_dist_sq(ev.next_stepsize, &inv_l) - param_dist_sq(ev.stepsize, &inv_l);
            let phi = (g1 / g0).ln() / (l * mu) + dc;
            phi_h.see(-1.0 / (l * l) - phi, || format!("{label} k={}", ev.k));
            let omega = -rho_omega / g1 + rho_omega / g0 + dc;
            omega_h.see(-1.0 / (l * l) - omega, || format!("{label} k={}", ev.k));
        };
        let out = lift(run_osgm_observed(&problem, &config, &mut observe))?;
        monitored += require_monitors(&out.report, &["potential.hyper_phi", "potential.hyper_omega"], &label)?;
    }
    let a = phi_r.require("ratio potential, rho=1/L^2, A^-1", 1e-9)?;
    let b = phi_h.require("hypergradient phi", 1e-9)?;
    let c = omega_h.require("hypergradient omega", 1e-9)?;
    Ok(format!("{a}; {b}; {c}; {monitored} monitor evaluations pass"))
}

fn c6_global_hyper() -> Outcome {
    let mut strong = Worst::new();
    let mut convex = Worst::new();
    let mut monitored = 0;
    let diag: Vec<f64> = (1..=100).map(f64::from).collect();
    let strongly = vec![
        lift(make_tridiagonal(100))?,
        lift(make_diagonal_quadratic(&diag))?,
        lift(make_random_spd(20, 100.0, 3))?,
        lift(make_piecewise_quadratic())?,
        lift(random_logistic(60, 8, 0.05, 4))?,
    ];
    for problem in &strongly {
        let kappa = problem.smoothness() / problem.strong_convexity();
        let mut config = base_config(Variant::MonotoneLookaheadH, Pattern::Full, 3000);
        if problem.f_star_estimated() {
            config.stop_gap = 1e-10;
        }
        let label = format!("{} monotone-lookahead-osgm-h", problem.name());
        let out = lift(run_osgm(problem, &config))?;
        let g = gaps(&out.trace)?;
        for k in 1..g.len() {
            let kf = k as f64;
            let lhs = ln0(g[k]) - g[0].ln();
            strong.see(log_gap(lhs, ln_pow(1.0 - 1.0 / kappa, kf)) / kf, || format!("{label} K={k}"));
        }
        monitored += require_monitors(&out.report, &["global.hyper_specific_strong"], &label)?;
        no_monitor_failures(&out.report, &label)?;
    }

    let mut deltas = Vec::new();
    for seed in 0..2 {
        let problem = lift(random_logistic(40, 5, 0.0, seed))?;
        let l = problem.smoothness();
        let mut config = base_config(Variant::MonotoneLookaheadH, Pattern::Full, 3000);
        config.stop_gap = 1e-10;
        let x1 = config.start(problem.dim());
        let delta = lift(sublevel_radius(&problem, &x1))?.value;
        deltas.push(format!("{delta:.2}"));
        let label = format!("{} monotone-lookahead-osgm-h", problem.name());
        let out = lift(run_osgm(&problem, &config))?;
        let g = gaps(&out.trace)?;
        for k in 1..g.len() {
            let bound = (2.0 * l * delta * delta / k as f64).min(g[0]);
            let scale = 1f64.max(bound);
            convex.see((bound - g[k]) / scale, || format!("{label} K={k}"));
        }
        monitored += require_monitors(&out.report, &["global.hyper_specific_convex"], &label)?;
        no_monitor_failures(&out.report, &label)?;
    }
    let a = strong.require("(1-1/kappa)^K, per-K log slack", 1e-9)?;
    let b = convex.require("min{2L Delta^2/K, gap1}", 1e-9)?;
    Ok(format!("{a}; {b} (Delta = {}); {monitored} monitor evaluations pass", deltas.join(", ")))
}

fn c7_superlinear() -> Outcome {
    let mut env = Worst::new();
    let mut details = Vec::new();
    // The envelope only bites once C/K < 1 before the gap floor, which needs a
    // well-conditioned instance; the r_K deadline is also checked at cond 10.
    let instances = [(5usize, 11u64, SUPERLINEAR_COND), (5, 12, SUPERLINEAR_COND), (20, 13, SUPERLINEAR_COND), (20, 14, SUPERLINEAR_COND), (5, 15, 10.0), (20, 16, 10.0)];
    for (n, seed, cond) in instances {
        let problem = lift(make_random_spd(n, cond, seed))?;
        let l = problem.smoothness();
        let kappa = l / problem.strong_convexity();
        let inv = problem.hessian_at_opt().ok_or("no Hessian")?.clone().try_inverse().ok_or("singular")?;
        let c = l * l * (Matrix::identity(n, n) / l - &inv).norm_squared();
        let config = base_config(Variant::LookaheadR, Pattern::Full, 2000);
        let label = problem.name().to_string();
        let out = lift(run_osgm(&problem, &config))?;
        let g = gaps(&out.trace)?;
        let mut evaluated = 0;
        for k in 1..g.len() {
            let kf = k as f64;
            if c / kf < 1.0 {
                let lhs = ln0(g[k]) - g[0].ln();
                env.see(log_gap(lhs, ln_pow(c / kf, kf)) / kf, || format!("{label} K={k}"));
                evaluated += 1;
            }
        }
        if evaluated == 0 && cond == SUPERLINEAR_COND {
            return Err(format!("{label}: run converged before C/K < 1 (C = {c:.2}, K = {})", g.len() - 1));
        }
        let limit = (4.0 * c).ceil() as usize;
        let target = (1.0 - 1.0 / kappa) / 2.0;
        let hit = (1..g.len()).find(|&k| k < limit && g[k] < target * g[k - 1]);
        match hit {
            Some(k) => details.push(format!("{label}: C={c:.1}, r_K<{target:.2} at K={k}, {evaluated} envelope evaluations")),
            None => {
                return Err(format!("{label}: contraction never fell below (1-1/kappa)/2 = {target:.3} before K = {limit}"))
            }
        }
        if evaluated > 0 {
            monitor_superlinear(&out, &label)?;
        } else {
            no_monitor_failures(&out.report, &label)?;
        }
    }
    let msg = env.require("(C/K)^K envelope, per-K log slack", 1e-9)?;
    Ok(format!("{msg}; {}", details.join("; ")))
}

/// Condition number of the random quadratics used for the superlinear check.
const SUPERLINEAR_COND: f64 = 2.0;

fn monitor_superlinear(out: &RunOutput, label: &str) -> Result<(), String> {
    require_monitors(&out.report, &["superlinear.ratio"], label)?;
    no_monitor_failures(&out.report, label)
}

fn c8_dichotomy() -> Outcome {
    let mut monitored = 0;
    let mut worst = Worst::new();
    for problem in thm3_problems()? {
        let n = problem.dim();
        let l = problem.smoothness();
        let mu = problem.strong_convexity();
        let kappa = l / mu;
        let fs = problem.f_star().ok_or("no f*")?;
        for (variant, eta) in [(Variant::LookaheadR, 1.0 / (4.0 * l * l)), (Variant::MonotoneLookaheadH, 1.0 / (2.0 * l))] {
            let mut config = base_config(variant, Pattern::Full, 5000);
            config.schedule = Some(osgm::learners::Schedule::Constant { eta });
            let feedback = config.feedback;
            let label = format!("{} {variant} eta={eta:.3e}", problem.name());
            let inv = Stepsize::Full(problem.hessian_at_opt().ok_or("no Hessian")?.clone().try_inverse().ok_or("singular")?);
            let benches = [Stepsize::scaled_identity(Pattern::Full, n, 1.0 / l), inv, Stepsize::zeros(Pattern::Full, n)];
            let p1 = benches[0].clone();
            let mut own = 0.0;
            let mut sums = [0.0; 3];
            let mut g1_sq = None;
            let mut failed = None;
            let mut observe = |ev: &IterationEvent<'_>| {
                let gn2 = ev.current.g.norm_squared();
                let g1 = *g1_sq.get_or_insert(gn2);
                own += match feedback {
                    FeedbackKind::Ratio => (ev.outcome.f_next - fs) / (ev.current.f - fs),
                    FeedbackKind::Hypergradient => (ev.outcome.f_next - ev.current.f) / gn2,
                };
                let kf = ev.k as f64;
                for (i, b) in benches.iter().enumerate() {
                    match feedback_value(feedback, &problem, ev.current, b) {
                        Ok(v) => sums[i] += v,
                        Err(e) => failed = Some(e.to_string()),
                    }
                    let case1 = (sums[i] - own) / 1f64.max(own.abs()).max(sums[i].abs());
                    let d1 = param_dist_sq(&p1, b);
                    let base = match feedback {
                        FeedbackKind::Ratio => kappa * kappa * d1 / (eta * kf),
                        FeedbackKind::Hypergradient => 2.0 * l * d1 / (eta * kf),
                    };
                    let rhs = (g1 / (2.0 * mu)).ln() + ln_pow(base, kf);
                    let case2 = log_gap(ln0(ev.outcome.f_next - fs), rhs) / kf;
                    worst.see(case1.max(case2), || format!("{label} bench {i} K={}", ev.k));
                }
            };
            let out = lift(run_osgm_observed(&problem, &config, &mut observe))?;
            if let Some(e) = failed {
                return Err(e);
            }
            let fam = if feedback == FeedbackKind::Ratio { "dichotomy.ratio" } else { "dichotomy.hyper" };
            monitored += require_monitors(&out.report, &[fam], &label)?;
            no_monitor_failures(&out.report, &label)?;
        }
    }
    // Every other monitored run in the suite must agree.
    for problem in progress_problems()? {
        let l = problem.smoothness();
        if problem.strong_convexity() <= 0.0 {
            continue;
        }
        let mut config = base_config(Variant::LookaheadR, Pattern::Full, 1000);
        config.schedule = Some(osgm::learners::Schedule::Constant { eta: 1.0 / (4.0 * l * l) });
        let label = format!("{} lookahead-osgm-r", problem.name());
        let out = lift(run_osgm(&problem, &config))?;
        monitored += require_monitors(&out.report, &["dichotomy.ratio"], &label)?;
    }
    let msg = worst.require("at least one alternative", 1e-10)?;
    Ok(format!("{msg}; {monitored} monitor evaluations pass"))
}

fn c9_hdm() -> Outcome {
    let problem = lift(make_random_spd(10, 1000.0, 21))?;
    let l = problem.smoothness();
    let mut config = base_config(Variant::LookaheadH, Pattern::Full, 100);
    config.allow_unsafe = true;
    config.record_iterates = true;
    config.schedule = Some(osgm::learners::Schedule::Constant { eta: 1.0 / l });
    config.monitors = false;
    let osgm_run = lift(run_osgm(&problem, &config))?;
    let hdm_run = lift(run_hdm(&problem, &config))?;
    let (a, b) = (&osgm_run.iterates, &hdm_run.iterates);
    if a.len() != 101 || b.len() != 101 {
        return Err(format!("expected 101 iterates, got {} and {}", a.len(), b.len()));
    }
    let mut worst = 0.0_f64;
    for (k, (xa, xb)) in a.iter().zip(b).enumerate() {
        let rel = (xa - xb).norm() / xa.norm();
        if !(rel <= 1e-12) {
            return Err(format!("iterate {}: relative difference {rel:.3e}", k + 1));
        }
        worst = worst.max(rel);
    }
    Ok(format!("100 iterations, worst relative difference {worst:.2e}"))
}

fn c10_appendix() -> Outcome {
    let problem = lift(make_tridiagonal(50))?;
    let n = problem.dim();
    let l = problem.smoothness();
    let mu = problem.strong_convexity();
    let fs = problem.f_star().ok_or("no f*")?;
    let set = CandidateSet::Box { lo: 0.0, hi: 2.0 / l };
    let d = set.diam(Pattern::Diagonal, n).ok_or("unbounded set")?;
    let benches = [
        Stepsize::scaled_identity(Pattern::Diagonal, n, 1.0 / l),
        Stepsize::scaled_identity(Pattern::Diagonal, n, 1.5 / l),
        Stepsize::scaled_identity(Pattern::Diagonal, n, 0.5 / l),
    ];
    let mut ratio = Worst::new();
    let mut hyper = Worst::new();
    let mut monitored = 0;
    for variant in [Variant::VanillaR, Variant::MonotoneH] {
        let mut config = base_config(variant, Pattern::Diagonal, 2000);
        config.set = set.clone();
        let feedback = config.feedback;
        let x1 = config.start(n);
        let delta = lift(sublevel_radius(&problem, &x1))?.value;
        let label = format!("{} {variant}", problem.name());
        let mut sums = [0.0; 3];
        let mut gap1 = None;
        let mut failed = None;
        let mut observe = |ev: &IterationEvent<'_>| {
            let g1 = *gap1.get_or_insert(ev.current.f - fs);
            let kf = ev.k as f64;
            let lhs = ln0(ev.outcome.f_next - fs) - g1.ln();
            for (i, b) in benches.iter().enumerate() {
                match feedback_value(feedback, &problem, ev.current, b) {
                    Ok(v) => sums[i] += v,
                    Err(e) => failed = Some(e.to_string()),
                }
                let avg = sums[i] / kf;
                match feedback {
                    FeedbackKind::Ratio => {
                        let rhs = ln_pow(avg + 3.0 * l * d * (l * d + 1.0) / kf.sqrt(), kf);
                        ratio.see(log_gap(lhs, rhs) / kf, || format!("{label} bench {i} K={}", ev.k));
                    }
                    FeedbackKind::Hypergradient => {
                        let v = (-avg - 3.0 * d * (l * d + 1.0) / kf.sqrt()).max(0.0);
                        let convex = (2.0 * delta.ln() - kf.ln() - ln0(v)).min(g1.ln()) - g1.ln();
                        hyper.see(log_gap(lhs, convex), || format!("{label} convex bench {i} K={}", ev.k));
                        let strong = ln_pow(1.0 - 2.0 * mu * v, kf);
                        hyper.see(log_gap(lhs, strong) / kf, || format!("{label} strong bench {i} K={}", ev.k));
                    }
                }
            }
        };
        let out = lift(run_osgm_observed(&problem, &config, &mut observe))?;
        if let Some(e) = failed {
            return Err(e);
        }
        let prefixes: &[&str] = match feedback {
            FeedbackKind::Ratio => &["global.ratio_regret"],
            FeedbackKind::Hypergradient => &["global.hyper_regret_convex", "global.hyper_regret_strong"],
        };
        monitored += require_monitors(&out.report, prefixes, &label)?;
        no_monitor_failures(&out.report, &label)?;
    }
    let a = ratio.require("vanilla ratio bound", 1e-9)?;
    let b = hyper.require("monotone hypergradient bounds", 1e-9)?;
    Ok(format!("{a}; {b}; {monitored} monitor evaluations pass"))
}

fn c11_example_structure() -> Outcome {
    let mut worst = 0.0_f64;
    for n in [2usize, 10, 50, 100] {
        let dense = symmetric_eigenvalues(&tridiagonal_matrix(n));
        let formula = tridiagonal_eigenvalues(n);
        for (a, b) in dense.iter().zip(&formula) {
            worst = worst.max((a - b).abs());
        }
        let p = lift(make_tridiagonal(n))?;
        worst = worst.max((p.smoothness() - dense[n - 1]).abs()).max((p.strong_convexity() - dense[0]).abs());
    }
    if !(worst <= 1e-10) {
        return Err(format!("eigenvalue mismatch {worst:.3e}"));
    }
    let n = 50;
    let tri = lift(make_tridiagonal(n))?;
    let twin = lift(make_tridiagonal_twin(n))?;
    let ones = Vector::from_element(n, 1.0);
    let x1_twin = tridiagonal_eigenvectors(n).transpose() * &ones;
    let mut counts = Vec::new();
    for (problem, x1) in [(&tri, ones.clone()), (&twin, x1_twin)] {
        let mut config = base_config(Variant::LookaheadR, Pattern::Diagonal, 30_000);
        config.stop_gap = 1e-8;
        config.x1 = Some(x1);
        config.monitors = false;
        let out = lift(run_osgm(problem, &config))?;
        let g = gaps(&out.trace)?;
        let reached = g.iter().position(|&v| v <= 1e-8);
        counts.push((problem.name().to_string(), reached, g[0]));
    }
    let (t, w) = (&counts[0], &counts[1]);
    if (t.2 - w.2).abs() > 1e-12 * t.2 {
        return Err(format!("starting gaps differ: {} vs {}", t.2, w.2));
    }
    match (t.1, w.1) {
        (tk, Some(wk)) if tk.is_none_or(|tk| wk < tk) => Ok(format!(
            "eigenvalues match to {worst:.1e}; iterations to 1e-8: {} {}, {} {wk}",
            t.0,
            tk.map(|v| v.to_string()).unwrap_or_else(|| "> 30000".into()),
            w.0
        )),
        _ => Err(format!("iterations to 1e-8: {} {:?}, {} {:?}", t.0, t.1, w.0, w.1)),
    }
}

fn c12_determinism() -> Outcome {
    let mut traces = Vec::new();
    let configs = [
        (Variant::LookaheadR, Pattern::Full),
        (Variant::MonotoneLookaheadH, Pattern::Diagonal),
        (Variant::VanillaR, Pattern::Scalar),
    ];
    for (variant, pattern) in configs {
        let mut csvs = Vec::new();
        for _ in 0..2 {
            let problem = lift(make_random_spd(12, 50.0, 77))?;
            let mut config = base_config(variant, pattern, 300);
            if variant == Variant::VanillaR {
                config.set = CandidateSet::Box { lo: 0.0, hi: 2.0 / problem.smoothness() };
            }
            config.seed = 77;
            let out = lift(run_osgm(&problem, &config))?;
            csvs.push(lift(out.trace.to_csv_string())?);
            traces.push(out.trace);
        }
        if csvs[0] != csvs[1] {
            return Err(format!("{variant} {pattern}: CSVs differ between identical runs"));
        }
    }
    let logistic = lift(random_logistic(50, 6, 0.01, 5))?;
    let out = lift(run_osgm(&logistic, &base_config(Variant::LookaheadR, Pattern::Diagonal, 200)))?;
    traces.push(out.trace);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, t) in traces.iter().enumerate() {
        let text = lift(t.to_csv_string())?;
        let back = lift(SolverTrace::from_csv_str(&text))?;
        if &back != t {
            return Err(format!("trace {i} ({}) does not round-trip", t.header.method));
        }
        let path = dir.path().join(format!("t{i}.csv"));
        lift(t.write_csv_atomic(&path))?;
        let bytes = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        if bytes != text {
            return Err(format!("trace {i}: file bytes differ from the in-memory CSV"));
        }
    }
    let rng_check = {
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        gaussian_matrix(3, 3, &mut r1) == gaussian_matrix(3, 3, &mut r2)
    };
    if !rng_check {
        return Err("seeded generators disagree".into());
    }
    Ok(format!("{} traces byte-identical across reruns and round-trip exactly", traces.len()))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "feedback gradients vs finite differences", limit: Duration::from_secs(5), run: c1_gradient_oracles },
        Criterion { id: 2, name: "per-step progress inequalities", limit: Duration::from_secs(30), run: c2_progress },
        Criterion { id: 3, name: "OGD step, static and dynamic regret", limit: Duration::from_secs(30), run: c3_regret },
        Criterion { id: 4, name: "lookahead ratio global rate", limit: Duration::from_secs(60), run: c4_global_ratio },
        Criterion { id: 5, name: "potential reduction", limit: Duration::from_secs(60), run: c5_potentials },
        Criterion { id: 6, name: "monotone lookahead hypergradient rates", limit: Duration::from_secs(60), run: c6_global_hyper },
        Criterion { id: 7, name: "superlinear envelope", limit: Duration::from_secs(60), run: c7_superlinear },
        Criterion { id: 8, name: "negative-regret dichotomy", limit: Duration::from_secs(60), run: c8_dichotomy },
        Criterion { id: 9, name: "HDM equivalence", limit: Duration::from_secs(5), run: c9_hdm },
        Criterion { id: 10, name: "vanilla ratio and monotone hypergradient bounds", limit: Duration::from_secs(30), run: c10_appendix },
        Criterion { id: 11, name: "tridiagonal spectrum and rotated twin", limit: Duration::from_secs(30), run: c11_example_structure },
        Criterion { id: 12, name: "determinism and trace round-trip", limit: Duration::from_secs(30), run: c12_determinism },
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; runtime exceeded {:?}", c.limit)),
            Err(e) => (false, e),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} [{:>2}] {} ({:.2}s / {}s): {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            detail
        );
    }
    if failures == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
