//! The OSGM loop (propose, evaluate feedback at (x^k, P_k), act, learner
//! step), the hypergradient descent method, fixed-stepsize gradient descent,
//! and an experimental heavy-ball mode.

use crate::diagnostics::{default_potentials, kappa_star, MonitorReport, PotentialSpec, RunMonitor};
use crate::error::{check_dim, OsgmError, Result};
use crate::feedback::{evaluate_feedback, FeedbackKind, FeedbackSample, OracleCalls, Point};
use crate::landscape::{act, backtracking_conditions_hold, ActionKind, ActionOutcome, MAX_DOUBLINGS};
use crate::learners::{default_schedule, Benchmark, LearnerKind, LearnerState, Schedule, Variant};
use crate::linalg::Vector;
use crate::problems::{sublevel_radius_at, tol_gap, Problem};
use crate::stepsize::{contract_gradient, contract_rank_one, CandidateSet, Pattern, PatternGradient, Stepsize};
use crate::trace::{fmt_f64, SolverTrace, Status, TraceHeader, TraceRow};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub feedback: FeedbackKind,
    pub action: ActionKind,
    pub learner: LearnerKind,
    pub pattern: Pattern,
    pub set: CandidateSet,
    /// Initial stepsize; (1/L)I in the pattern when absent.
    pub p1: Option<Stepsize>,
    /// Starting point; the all-ones vector when absent.
    pub x1: Option<Vector>,
    /// Learning-rate schedule; derived from the variant when absent.
    pub schedule: Option<Schedule>,
    pub max_iters: usize,
    pub stop_gap: f64,
    pub stop_grad: f64,
    pub monitors: bool,
    pub seed: u64,
    /// Permits hypergradient feedback with a non-monotone action.
    pub allow_unsafe: bool,
    /// Backtracking fraction in (0, 1); a failed check divides the
    /// smoothness estimate by it.
    pub backtracking: Option<f64>,
    /// Smoothness used by the action and schedules (initial estimate when
    /// backtracking); the problem's L when absent.
    pub smoothness: Option<f64>,
    /// Benchmarks monitored in addition to the defaults.
    pub benchmarks: Vec<Benchmark>,
    pub default_benchmarks: bool,
    /// Sublevel radius Δ; computed from the problem when absent.
    pub delta: Option<f64>,
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feedback: FeedbackKind::Ratio,
            action: ActionKind::Lookahead,
            learner: LearnerKind::Ogd,
            pattern: Pattern::Full,
            set: CandidateSet::Unconstrained,
            p1: None,
            x1: None,
            schedule: None,
            max_iters: 1000,
            stop_gap: 1e-10,
            stop_grad: 1e-8,
            monitors: true,
            seed: 0,
            allow_unsafe: false,
            backtracking: None,
            smoothness: None,
            benchmarks: Vec::new(),
            default_benchmarks: true,
            delta: None,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self { feedback: variant.feedback(), action: variant.action(), ..Self::default() }
    }

    pub fn variant(&self) -> Variant {
        Variant::from_parts(self.feedback, self.action)
    }

    /// Checks everything that can be checked without calling the oracle.
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let n = problem.dim();
        if self.feedback == FeedbackKind::Hypergradient && !self.action.is_monotone() && !self.allow_unsafe {
            return Err(OsgmError::InvalidConfig(format!(
                "hypergradient feedback with the {} action is unsafe: the hypergradient reduction needs \
                 nonincreasing function values, so use a monotone action (monotone or monotone-lookahead) \
                 or pass the unsafe override",
                self.action
            )));
        }
        if self.feedback == FeedbackKind::Ratio && problem.f_star().is_none() {
            return Err(OsgmError::MissingOptimalValue);
        }
        if self.max_iters == 0 {
            return Err(OsgmError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.stop_gap >= 0.0 && self.stop_grad >= 0.0) {
            return Err(OsgmError::InvalidConfig("stopping tolerances must be nonnegative".into()));
        }
        if let Some(f) = self.backtracking {
            if !(f > 0.0 && f < 1.0) {
                return Err(OsgmError::InvalidConfig(format!("backtracking factor must lie in (0, 1), got {f}")));
            }
        }
        if let Some(l) = self.smoothness {
            if !(l > 0.0 && l.is_finite()) {
                return Err(OsgmError::InvalidConfig(format!("smoothness must be positive, got {l}")));
            }
        }
        if let Some(x1) = &self.x1 {
            check_dim(n, x1.len())?;
            if !x1.iter().all(|v| v.is_finite()) {
                return Err(OsgmError::InvalidConfig("x1 has non-finite entries".into()));
            }
        }
        self.set.validate(self.pattern, n)?;
        if let Some(p1) = &self.p1 {
            check_dim(n, p1.dim())?;
            if p1.pattern() != self.pattern {
                return Err(OsgmError::InvalidConfig(format!(
                    "P1 has pattern {} but the run uses {}",
                    p1.pattern(),
                    self.pattern
                )));
            }
        }
        let l = self.smoothness.unwrap_or(problem.smoothness());
        let p1 = self.initial_stepsize(n, l);
        if !self.set.contains(&p1, 1e-12)? {
            return Err(OsgmError::InvalidConfig(format!("P1 lies outside the candidate set {}", self.set)));
        }
        let schedule = self.resolve_schedule(l, n)?;
        schedule.eta(1)?;
        for b in &self.benchmarks {
            if let Benchmark::Fixed { stepsize, name } = b {
                if stepsize.pattern() != self.pattern || stepsize.dim() != n {
                    return Err(OsgmError::InvalidConfig(format!("benchmark `{name}` does not match the run's pattern")));
                }
            }
        }
        Ok(())
    }

    pub fn initial_stepsize(&self, n: usize, l: f64) -> Stepsize {
        self.p1.clone().unwrap_or_else(|| Stepsize::scaled_identity(self.pattern, n, 1.0 / l))
    }

    pub fn start(&self, n: usize) -> Vector {
        self.x1.clone().unwrap_or_else(|| Vector::from_element(n, 1.0))
    }

    pub fn resolve_schedule(&self, l: f64, n: usize) -> Result<Schedule> {
        match (self.schedule, self.learner) {
            (Some(s), _) => Ok(s),
            (None, LearnerKind::Adagrad) => Ok(Schedule::Constant { eta: 0.1 / l }),
            (None, LearnerKind::Ogd) => default_schedule(self.variant(), l, self.set.diam(self.pattern, n)),
        }
    }

    fn header_config(&self, schedule: &Schedule, eta1: f64) -> Vec<(String, String)> {
        let mut c = vec![
            ("feedback".to_string(), self.feedback.to_string()),
            ("action".to_string(), self.action.to_string()),
            ("learner".to_string(), self.learner.to_string()),
            ("pattern".to_string(), self.pattern.to_string()),
            ("set".to_string(), self.set.to_string()),
            ("schedule".to_string(), schedule.to_string()),
            ("eta".to_string(), fmt_f64(eta1)),
            ("iters".to_string(), self.max_iters.to_string()),
            ("stop_gap".to_string(), fmt_f64(self.stop_gap)),
            ("stop_grad".to_string(), fmt_f64(self.stop_grad)),
            ("seed".to_string(), self.seed.to_string()),
            ("p1".to_string(), if self.p1.is_some() { "custom" } else { "inv_L" }.to_string()),
            ("x1".to_string(), if self.x1.is_some() { "custom" } else { "ones" }.to_string()),
        ];
        if self.allow_unsafe {
            c.push(("unsafe".to_string(), "true".to_string()));
        }
        if let Some(f) = self.backtracking {
            c.push(("backtracking".to_string(), fmt_f64(f)));
        }
        if let Some(l) = self.smoothness {
            c.push(("smoothness".to_string(), fmt_f64(l)));
        }
        c
    }
}

/// Everything a monitor can see about one iteration.
#[derive(Debug)]
pub struct IterationEvent<'a> {
    pub k: usize,
    pub current: &'a Point,
    pub sample: &'a FeedbackSample,
    pub outcome: &'a ActionOutcome,
    pub stepsize: &'a Stepsize,
    pub next_stepsize: &'a Stepsize,
    pub gradient: &'a PatternGradient,
    pub eta: f64,
    /// Smoothness used by the action at this iteration.
    pub smoothness: f64,
    pub row: &'a TraceRow,
}

/// Per-run quantities fixed before the first iteration.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub variant: Variant,
    pub smoothness: f64,
    pub p1: Stepsize,
    pub x1: Vector,
    pub schedule: Schedule,
    pub delta: Option<f64>,
    pub phi: Option<PotentialSpec>,
    pub omega: Option<PotentialSpec>,
}

impl RunSetup {
    /// `f1` is f at the start point.
    pub fn new(problem: &Problem, config: &SolverConfig, f1: f64) -> Result<Self> {
        config.validate(problem)?;
        let n = problem.dim();
        let l = config.smoothness.unwrap_or(problem.smoothness());
        let x1 = config.start(n);
        let delta = match config.delta {
            Some(d) => Some(d),
            None if config.feedback == FeedbackKind::Hypergradient => sublevel_radius_at(problem, f1).ok().map(|r| r.value),
            None => None,
        };
        let (phi, omega) = default_potentials(problem, config.feedback, config.pattern, delta);
        Ok(Self {
            variant: config.variant(),
            smoothness: l,
            p1: config.initial_stepsize(n, l),
            schedule: config.resolve_schedule(l, n)?,
            x1,
            delta,
            phi,
            omega,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: SolverTrace,
    pub report: MonitorReport,
    pub final_x: Vector,
    pub final_stepsize: Stepsize,
    /// x^1, ..., x^{K+1} when `record_iterates` is set.
    pub iterates: Vec<Vector>,
    pub oracle_calls: OracleCalls,
}

fn header(problem: &Problem, method: String, kappa_star: Option<f64>, config: Vec<(String, String)>) -> TraceHeader {
    TraceHeader {
        method,
        problem: problem.name().to_string(),
        dim: problem.dim(),
        smoothness: problem.smoothness(),
        strong_convexity: problem.strong_convexity(),
        kappa: problem.condition_number(),
        kappa_star,
        f_star: problem.f_star(),
        f_star_estimated: problem.f_star_estimated(),
        config,
        note: None,
        status: Status::MaxIters,
        final_f_gap: None,
        final_grad_norm: f64::NAN,
    }
}

fn potentials(setup: &RunSetup, gap: Option<f64>, p: &Stepsize) -> (Option<f64>, Option<f64>) {
    let eval = |spec: &Option<PotentialSpec>| match (spec, gap) {
        (Some(s), Some(g)) if g > 0.0 => s.value_at_gap(g, p).ok(),
        _ => None,
    };
    (eval(&setup.phi), eval(&setup.omega))
}

/// Status for x^k when a stopping rule fires there.
fn stop_status(problem: &Problem, point: &Point, stop_gap: f64, stop_grad: f64) -> Option<Status> {
    if !point.f.is_finite() || !point.g.iter().all(|v| v.is_finite()) {
        return Some(Status::Diverged);
    }
    if let Some(fs) = problem.f_star() {
        if point.f - fs <= stop_gap.max(tol_gap(fs)) {
            return Some(Status::Converged);
        }
    }
    if point.g.norm() <= stop_grad {
        return Some(Status::Stationary);
    }
    None
}

fn finish(trace: &mut SolverTrace, problem: &Problem, point: &Point, status: Status) {
    trace.header.status = status;
    trace.header.final_f_gap = problem.gap(point.f);
    trace.header.final_grad_norm = point.g.norm();
}

pub fn run_osgm(problem: &Problem, config: &SolverConfig) -> Result<RunOutput> {
    run_osgm_observed(problem, config, &mut |_| {})
}

/// Runs OSGM and hands every iteration to `observer` (after the monitors).
pub fn run_osgm_observed(
    problem: &Problem,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&IterationEvent<'_>),
) -> Result<RunOutput> {
    config.validate(problem)?;
    let n = problem.dim();
    let mut current = Point::evaluate(problem, config.start(n));
    let setup = RunSetup::new(problem, config, current.f)?;
    let mut l = setup.smoothness;
    let mut learner = LearnerState::new(config.learner, setup.p1.clone(), setup.schedule, config.set.clone())?;
    let eta1 = learner.next_eta()?;
    let mut monitor = config.monitors.then(|| RunMonitor::new(problem, config, &setup));

    let mut trace = SolverTrace {
        header: header(
            problem,
            setup.variant.name().to_string(),
            kappa_star(problem, config.pattern),
            config.header_config(&setup.schedule, eta1),
        ),
        rows: Vec::new(),
    };
    let mut calls = OracleCalls::new(1, 1);
    let mut iterates = Vec::new();
    if config.record_iterates {
        iterates.push(current.x.clone());
    }
    let mut status = Status::MaxIters;

    for k in 1..=config.max_iters {
        if let Some(s) = stop_status(problem, &current, config.stop_gap, config.stop_grad) {
            status = s;
            break;
        }
        let p_k = learner.current.clone();
        let sample = match evaluate_feedback(config.feedback, problem, &current, &p_k) {
            Ok(s) => s,
            Err(OsgmError::Converged { .. }) => {
                status = Status::Converged;
                break;
            }
            Err(OsgmError::Stationary { .. }) => {
                status = Status::Stationary;
                break;
            }
            Err(e) => return Err(e),
        };
        calls += sample.oracle_calls;
        let proposal = sample.proposal_point();

        if let Some(factor) = config.backtracking {
            let mut raised = false;
            let mut doublings = 0;
            loop {
                let (ok, c) = backtracking_conditions_hold(problem, &proposal, &current.g, l);
                calls += c;
                if ok {
                    break;
                }
                doublings += 1;
                if doublings > MAX_DOUBLINGS {
                    return Err(OsgmError::NotSmooth);
                }
                l /= factor;
                raised = true;
            }
            if raised && config.schedule.is_none() {
                learner.rederive(config.resolve_schedule(l, n)?)?;
            }
        }

        let outcome = act(config.action, &current.x, &proposal, problem, l)?;
        calls += outcome.extra_oracle_calls;
        let grad = contract_gradient(&sample, config.pattern);
        let eta = learner.step(&grad)?;
        if !learner.current.is_finite() {
            status = Status::Diverged;
        }

        let gap = problem.gap(current.f);
        let (phi, omega) = potentials(&setup, gap, &p_k);
        let prog = match config.feedback {
            FeedbackKind::Ratio => problem.gap(outcome.f_next).zip(gap).map(|(a, b)| a / b),
            FeedbackKind::Hypergradient => Some((outcome.f_next - current.f) / current.g.norm_squared()),
        };
        let row = TraceRow {
            k,
            f_gap: gap,
            grad_norm: current.g.norm(),
            feedback: Some(sample.value),
            progress: prog,
            eta: Some(eta),
            drift: Some(p_k.param_distance(&setup.p1)?),
            potential_phi: phi,
            potential_omega: omega,
            oracle_calls: calls.total(),
        };
        let event = IterationEvent {
            k,
            current: &current,
            sample: &sample,
            outcome: &outcome,
            stepsize: &p_k,
            next_stepsize: &learner.current,
            gradient: &grad,
            eta,
            smoothness: l,
            row: &row,
        };
        if let Some(m) = monitor.as_mut() {
            m.observe(&event)?;
        }
        observer(&event);
        trace.rows.push(row);

        let g_next = outcome.g_next.clone().unwrap_or_else(|| current.g.clone());
        current = Point { x: outcome.x_next, f: outcome.f_next, g: g_next };
        if config.record_iterates {
            iterates.push(current.x.clone());
        }
        if status == Status::Diverged {
            break;
        }
        if k == config.max_iters {
            status = stop_status(problem, &current, config.stop_gap, config.stop_grad)
                .filter(|s| *s == Status::Diverged)
                .unwrap_or(Status::MaxIters);
        }
    }
    finish(&mut trace, problem, &current, status);
    let report = match monitor {
        Some(m) => m.finalize(&trace),
        None => MonitorReport::disabled(),
    };
    Ok(RunOutput { trace, report, final_x: current.x, final_stepsize: learner.current, iterates, oracle_calls: calls })
}

/// Hypergradient descent: P_{k+1} = P_k − η∇h_{x^k}(P_k), then
/// x^{k+1} = x^k − P_{k+1}∇f(x^k). No projection.
pub fn run_hdm(problem: &Problem, config: &SolverConfig) -> Result<RunOutput> {
    if !matches!(config.set, CandidateSet::Unconstrained) {
        return Err(OsgmError::InvalidConfig("HDM runs without projection; the candidate set must be unconstrained".into()));
    }
    let n = problem.dim();
    let l = config.smoothness.unwrap_or(problem.smoothness());
    let mut hconf = config.clone();
    hconf.feedback = FeedbackKind::Hypergradient;
    hconf.action = ActionKind::Lookahead;
    hconf.allow_unsafe = true;
    hconf.validate(problem)?;
    let schedule = config.schedule.unwrap_or(Schedule::Constant { eta: 1.0 / l });
    let p1 = config.initial_stepsize(n, l);
    let x1 = config.start(n);
    let mut current = Point::evaluate(problem, x1.clone());
    let delta = config.delta.or_else(|| sublevel_radius_at(problem, current.f).ok().map(|r| r.value));
    let (phi, omega) = default_potentials(problem, FeedbackKind::Hypergradient, config.pattern, delta);
    let setup = RunSetup { variant: Variant::LookaheadH, smoothness: l, p1: p1.clone(), x1, schedule, delta, phi, omega };

    let mut p = p1.clone();
    let mut trace = SolverTrace {
        header: header(problem, "hdm".to_string(), kappa_star(problem, config.pattern), {
            let mut c = config.header_config(&schedule, schedule.eta(1)?);
            c.retain(|(k, _)| !matches!(k.as_str(), "feedback" | "action" | "unsafe"));
            c
        }),
        rows: Vec::new(),
    };
    let mut calls = OracleCalls::new(1, 1);
    let mut iterates = Vec::new();
    if config.record_iterates {
        iterates.push(current.x.clone());
    }
    let mut status = Status::MaxIters;
    let mut last_eta = f64::INFINITY;
    for k in 1..=config.max_iters {
        if let Some(s) = stop_status(problem, &current, config.stop_gap, config.stop_grad) {
            status = s;
            break;
        }
        let sample = match evaluate_feedback(FeedbackKind::Hypergradient, problem, &current, &p) {
            Ok(s) => s,
            Err(OsgmError::Stationary { .. }) => {
                status = Status::Stationary;
                break;
            }
            Err(e) => return Err(e),
        };
        calls += sample.oracle_calls;
        let eta = schedule.eta(k)?.min(last_eta);
        last_eta = eta;
        let grad = contract_gradient(&sample, config.pattern);
        let mut p_next = p.clone();
        p_next.add_scaled(-eta, &grad)?;
        let x_next = &current.x - p_next.apply(&current.g)?;
        let next = Point::evaluate(problem, x_next);
        calls += OracleCalls::new(1, 1);

        let gap = problem.gap(current.f);
        let (phi, omega) = potentials(&setup, gap, &p);
        trace.rows.push(TraceRow {
            k,
            f_gap: gap,
            grad_norm: current.g.norm(),
            feedback: Some(sample.value),
            progress: Some((next.f - current.f) / current.g.norm_squared()),
            eta: Some(eta),
            drift: Some(p.param_distance(&setup.p1)?),
            potential_phi: phi,
            potential_omega: omega,
            oracle_calls: calls.total(),
        });
        p = p_next;
        current = next;
        if config.record_iterates {
            iterates.push(current.x.clone());
        }
        if k == config.max_iters && !current.f.is_finite() {
            status = Status::Diverged;
        }
    }
    finish(&mut trace, problem, &current, status);
    Ok(RunOutput {
        trace,
        report: MonitorReport::disabled(),
        final_x: current.x,
        final_stepsize: p,
        iterates,
        oracle_calls: calls,
    })
}

/// Gradient descent with a fixed stepsize and the default stopping rules.
pub fn run_gd(problem: &Problem, stepsize: &Stepsize, x1: &Vector, max_iters: usize) -> Result<SolverTrace> {
    let d = SolverConfig::default();
    run_gd_with(problem, stepsize, x1, max_iters, d.stop_gap, d.stop_grad).map(|o| o.trace)
}

pub fn run_gd_with(
    problem: &Problem,
    stepsize: &Stepsize,
    x1: &Vector,
    max_iters: usize,
    stop_gap: f64,
    stop_grad: f64,
) -> Result<RunOutput> {
    check_dim(problem.dim(), stepsize.dim())?;
    check_dim(problem.dim(), x1.len())?;
    let kind = if problem.f_star().is_some() { FeedbackKind::Ratio } else { FeedbackKind::Hypergradient };
    let mut trace = SolverTrace {
        header: header(
            problem,
            "gd".to_string(),
            None,
            vec![
                ("pattern".to_string(), stepsize.pattern().to_string()),
                ("iters".to_string(), max_iters.to_string()),
                ("stop_gap".to_string(), fmt_f64(stop_gap)),
                ("stop_grad".to_string(), fmt_f64(stop_grad)),
            ],
        ),
        rows: Vec::new(),
    };
    let mut current = Point::evaluate(problem, x1.clone());
    let mut calls = OracleCalls::new(1, 1);
    let mut status = Status::MaxIters;
    for k in 1..=max_iters {
        if let Some(s) = stop_status(problem, &current, stop_gap, stop_grad) {
            status = s;
            break;
        }
        let sample = match evaluate_feedback(kind, problem, &current, stepsize) {
            Ok(s) => s,
            Err(OsgmError::Converged { .. }) => {
                status = Status::Converged;
                break;
            }
            Err(OsgmError::Stationary { .. }) => {
                status = Status::Stationary;
                break;
            }
            Err(e) => return Err(e),
        };
        calls += sample.oracle_calls;
        trace.rows.push(TraceRow {
            k,
            f_gap: problem.gap(current.f),
            grad_norm: current.g.norm(),
            feedback: Some(sample.value),
            progress: Some(sample.value),
            eta: None,
            drift: Some(0.0),
            potential_phi: None,
            potential_omega: None,
            oracle_calls: calls.total(),
        });
        current = sample.proposal_point();
        if k == max_iters && !current.f.is_finite() {
            status = Status::Diverged;
        }
    }
    finish(&mut trace, problem, &current, status);
    Ok(RunOutput {
        trace,
        report: MonitorReport::disabled(),
        final_x: current.x,
        final_stepsize: stepsize.clone(),
        iterates: Vec::new(),
        oracle_calls: calls,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Momentum {
    Fixed(f64),
    /// β learned by projected gradient steps onto [0, BETA_MAX].
    Learned { beta1: f64, eta: f64 },
}

pub const BETA_MAX: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeavyBallConfig {
    pub momentum: Momentum,
    pub omega: f64,
    /// Must be set: the mode is a heuristic extension.
    pub experimental: bool,
}

/// Heavy-ball feedback at (P, β):
/// ℓ = [f(x⁺) − f(x) + (ω/2)(‖x⁺ − x‖² − ‖x − x⁻‖²)]/‖∇f(x)‖² with
/// x⁺ = x − P∇f(x) + β(x − x⁻).
#[derive(Debug, Clone)]
pub struct HeavyBallSample {
    pub value: f64,
    pub grad_p: PatternGradient,
    pub grad_beta: f64,
    pub next: Point,
}

pub fn heavyball_feedback(
    problem: &Problem,
    current: &Point,
    x_prev: &Vector,
    stepsize: &Stepsize,
    beta: f64,
    omega: f64,
) -> Result<HeavyBallSample> {
    let gn2 = current.g.norm_squared();
    if gn2.sqrt() <= crate::problems::TOL_GRAD {
        return Err(OsgmError::Stationary { grad_norm: gn2.sqrt() });
    }
    let mom = &current.x - x_prev;
    let x_plus = &current.x - stepsize.apply(&current.g)? + &mom * beta;
    let next = Point::evaluate(problem, x_plus);
    let step = &next.x - &current.x;
    let value = (next.f - current.f + 0.5 * omega * (step.norm_squared() - mom.norm_squared())) / gn2;
    let m = &next.g + &step * omega;
    Ok(HeavyBallSample {
        value,
        grad_p: contract_rank_one(&m, &current.g, gn2, stepsize.pattern()),
        grad_beta: m.dot(&mom) / gn2,
        next,
    })
}

/// Learns P (and optionally β) on the heavy-ball feedback; every step is
/// accepted. Heuristic: no guarantees and no theorem monitors.
pub fn run_osgm_heavyball(problem: &Problem, config: &SolverConfig, hb: &HeavyBallConfig) -> Result<RunOutput> {
    if !hb.experimental {
        return Err(OsgmError::InvalidConfig("heavy-ball mode is experimental and must be enabled explicitly".into()));
    }
    if config.feedback != FeedbackKind::Hypergradient || config.action != ActionKind::Vanilla {
        return Err(OsgmError::InvalidConfig(
            "heavy-ball mode uses its own potential feedback normalized by the squared gradient norm, with every step accepted; \
             configure hypergradient feedback and the vanilla action"
                .into(),
        ));
    }
    if !(hb.omega >= 0.0 && hb.omega.is_finite()) {
        return Err(OsgmError::InvalidConfig("omega must be nonnegative".into()));
    }
    let (mut beta, beta_eta) = match hb.momentum {
        Momentum::Fixed(b) => (b, None),
        Momentum::Learned { beta1, eta } => (beta1, Some(eta)),
    };
    if !(0.0..=BETA_MAX).contains(&beta) {
        return Err(OsgmError::InvalidConfig(format!("momentum must lie in [0, {BETA_MAX}], got {beta}")));
    }
    config.validate(problem)?;
    let mut current = Point::evaluate(problem, config.start(problem.dim()));
    let mut setup = RunSetup::new(problem, config, current.f)?;
    setup.phi = None;
    setup.omega = None;
    let mut learner = LearnerState::new(config.learner, setup.p1.clone(), setup.schedule, config.set.clone())?;
    let eta1 = learner.next_eta()?;
    let mut hconfig = config.header_config(&setup.schedule, eta1);
    hconfig.push((
        "momentum".to_string(),
        match hb.momentum {
            Momentum::Fixed(b) => format!("fixed({})", fmt_f64(b)),
            Momentum::Learned { beta1, eta } => format!("learned({},{})", fmt_f64(beta1), fmt_f64(eta)),
        },
    ));
    hconfig.push(("omega".to_string(), fmt_f64(hb.omega)));
    let mut trace = SolverTrace {
        header: header(problem, "heavyball-osgm-h".to_string(), kappa_star(problem, config.pattern), hconfig),
        rows: Vec::new(),
    };
    trace.header.note = Some("heuristic heavy-ball extension; no guarantees".to_string());

    let mut x_prev = current.x.clone();
    let mut calls = OracleCalls::new(1, 1);
    let mut iterates = Vec::new();
    if config.record_iterates {
        iterates.push(current.x.clone());
    }
    let mut status = Status::MaxIters;
    for k in 1..=config.max_iters {
        if let Some(s) = stop_status(problem, &current, config.stop_gap, config.stop_grad) {
            status = s;
            break;
        }
        let p_k = learner.current.clone();
        let s = match heavyball_feedback(problem, &current, &x_prev, &p_k, beta, hb.omega) {
            Ok(s) => s,
            Err(OsgmError::Stationary { .. }) => {
                status = Status::Stationary;
                break;
            }
            Err(e) => return Err(e),
        };
        calls += OracleCalls::new(1, 1);
        let eta = learner.step(&s.grad_p)?;
        if let Some(eb) = beta_eta {
            beta = (beta - eb * s.grad_beta).clamp(0.0, BETA_MAX);
        }
        trace.rows.push(TraceRow {
            k,
            f_gap: problem.gap(current.f),
            grad_norm: current.g.norm(),
            feedback: Some(s.value),
            progress: Some((s.next.f - current.f) / current.g.norm_squared()),
            eta: Some(eta),
            drift: Some(p_k.param_distance(&setup.p1)?),
            potential_phi: None,
            potential_omega: None,
            oracle_calls: calls.total(),
        });
        x_prev = std::mem::replace(&mut current, s.next).x;
        if config.record_iterates {
            iterates.push(current.x.clone());
        }
        if k == config.max_iters && !current.f.is_finite() {
            status = Status::Diverged;
        }
    }
    finish(&mut trace, problem, &current, status);
    Ok(RunOutput {
        trace,
        report: MonitorReport::disabled(),
        final_x: current.x,
        final_stepsize: learner.current,
        iterates,
        oracle_calls: calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problems::{make_diagonal_quadratic, make_quadratic, make_tridiagonal};

    #[test]
    fn perfectly_conditioned_converges_in_one_step() {
        let l = 3.0;
        let p = make_quadratic(Matrix::identity(4, 4) * l, Vector::zeros(4)).unwrap();
        for v in [Variant::LookaheadR, Variant::MonotoneLookaheadH, Variant::MonotoneLookaheadR, Variant::LookaheadH] {
            let mut c = SolverConfig::for_variant(v);
            c.allow_unsafe = true;
            let out = run_osgm(&p, &c).unwrap();
            assert_eq!(out.trace.rows.len(), 1, "{v}");
            assert_eq!(out.trace.header.status, Status::Converged);
            assert_eq!(out.trace.header.final_f_gap, Some(0.0));
        }
    }

    #[test]
    fn hyper_vanilla_needs_override() {
        let p = make_tridiagonal(5).unwrap();
        let mut c = SolverConfig::for_variant(Variant::VanillaH);
        c.set = CandidateSet::Box { lo: 0.0, hi: 0.5 };
        assert!(matches!(run_osgm(&p, &c), Err(OsgmError::InvalidConfig(_))));
        c.allow_unsafe = true;
        assert!(run_osgm(&p, &c).is_ok());
    }

    #[test]
    fn gd_examples() {
        let p = make_diagonal_quadratic(&[1.0, 4.0]).unwrap();
        let x1 = Vector::from_vec(vec![1.0, 1.0]);
        let t = run_gd(&p, &Stepsize::Diagonal(Vector::from_vec(vec![1.0, 0.25])), &x1, 10).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.header.final_f_gap, Some(0.0));
        let t0 = run_gd(&p, &Stepsize::scalar(0.0, 2), &x1, 5).unwrap();
        assert_eq!(t0.rows.len(), 5);
        assert!(t0.rows.iter().all(|r| r.progress == Some(1.0)));
    }

    #[test]
    fn oracle_calls_increase() {
        let p = make_tridiagonal(10).unwrap();
        for a in ActionKind::ALL {
            let mut c = SolverConfig { action: a, max_iters: 30, ..SolverConfig::default() };
            if !a.has_lookahead() {
                c.set = CandidateSet::Box { lo: 0.0, hi: 0.5 };
                c.pattern = Pattern::Scalar;
            }
            let t = run_osgm(&p, &c).unwrap().trace;
            assert!(t.rows.windows(2).all(|w| w[1].oracle_calls > w[0].oracle_calls));
            assert!(t.rows.iter().all(|r| r.f_gap.unwrap() > 0.0));
        }
    }
}
