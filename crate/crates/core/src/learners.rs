//! Online learners over stepsizes: projected online gradient descent with the
//! schedules the convergence guarantees prescribe, and AdaGrad.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{OsgmError, Result};
use crate::feedback::{feedback_value, FeedbackKind, Point};
use crate::landscape::ActionKind;
use crate::problems::Problem;
use crate::stepsize::{CandidateSet, Pattern, PatternGradient, Stepsize};

pub const ADAGRAD_EPS: f64 = 1e-12;

/// Learning-rate schedule η_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant { eta: f64 },
    /// η_k = c/√K for a known horizon K.
    Horizon { c: f64, horizon: Option<usize> },
    /// η_k = c/√k.
    Anytime { c: f64 },
}

impl Schedule {
    /// η for iteration k (1-based).
    pub fn eta(&self, k: usize) -> Result<f64> {
        match *self {
            Schedule::Constant { eta } => Ok(eta),
            Schedule::Horizon { c, horizon: Some(h) } => Ok(c / (h.max(1) as f64).sqrt()),
            Schedule::Horizon { horizon: None, .. } => Err(OsgmError::InvalidConfig(
                "schedule c/sqrt(K) needs a horizon K".into(),
            )),
            Schedule::Anytime { c } => Ok(c / (k.max(1) as f64).sqrt()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant { .. } | Schedule::Horizon { horizon: Some(_), .. })
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant { eta } => write!(f, "constant({eta:e})"),
            Schedule::Horizon { c, horizon } => match horizon {
                Some(h) => write!(f, "c/sqrt(K)(c={c:e},K={h})"),
                None => write!(f, "c/sqrt(K)(c={c:e})"),
            },
            Schedule::Anytime { c } => write!(f, "c/sqrt(k)(c={c:e})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    Ogd,
    Adagrad,
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Ogd => "ogd",
            LearnerKind::Adagrad => "adagrad",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = OsgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ogd" => Ok(LearnerKind::Ogd),
            "adagrad" => Ok(LearnerKind::Adagrad),
            _ => Err(OsgmError::Parse(format!("unknown learner `{s}` (expected ogd or adagrad)"))),
        }
    }
}

/// Pattern-shaped running sum of squared gradient entries.
#[derive(Debug, Clone, PartialEq)]
pub enum Accumulator {
    Scalar(f64),
    Diagonal(crate::linalg::Vector),
    Full(crate::linalg::Matrix),
}

#[derive(Debug, Clone)]
pub struct LearnerState {
    pub current: Stepsize,
    pub schedule: Schedule,
    pub set: CandidateSet,
    pub kind: LearnerKind,
    /// Steps taken so far.
    pub k: usize,
    pub accumulator: Option<Accumulator>,
    last_eta: Option<f64>,
}

impl LearnerState {
    pub fn new(kind: LearnerKind, p1: Stepsize, schedule: Schedule, set: CandidateSet) -> Result<Self> {
        set.validate(p1.pattern(), p1.dim())?;
        if !set.contains(&p1, 1e-12)? {
            return Err(OsgmError::InvalidConfig(format!("initial stepsize is outside the candidate set {set}")));
        }
        schedule.eta(1)?;
        let accumulator = (kind == LearnerKind::Adagrad).then(|| match &p1 {
            Stepsize::Scalar { .. } => Accumulator::Scalar(0.0),
            Stepsize::Diagonal(d) => Accumulator::Diagonal(d * 0.0),
            Stepsize::Full(p) => Accumulator::Full(p * 0.0),
        });
        Ok(Self { current: p1, schedule, set, kind, k: 0, accumulator, last_eta: None })
    }

    /// Learning rate for the next step; never exceeds a previously used one.
    pub fn next_eta(&self) -> Result<f64> {
        let eta = self.schedule.eta(self.k + 1)?;
        Ok(self.last_eta.map_or(eta, |prev| eta.min(prev)))
    }

    /// Swaps in a re-derived schedule (e.g. after L was revised upward).
    pub fn rederive(&mut self, schedule: Schedule) -> Result<()> {
        schedule.eta(self.k + 1)?;
        self.schedule = schedule;
        Ok(())
    }

    /// Takes one learner step and returns the η used.
    pub fn step(&mut self, grad: &PatternGradient) -> Result<f64> {
        match self.kind {
            LearnerKind::Ogd => self.ogd_step(grad),
            LearnerKind::Adagrad => self.adagrad_step(grad),
        }
    }

    /// P ← Π[P − η_k ∇ℓ].
    pub fn ogd_step(&mut self, grad: &PatternGradient) -> Result<f64> {
        let eta = self.next_eta()?;
        let mut next = self.current.clone();
        next.add_scaled(-eta, grad)?;
        self.current = self.set.project(&next)?;
        self.k += 1;
        self.last_eta = Some(eta);
        Ok(eta)
    }

    /// G ← G + ∇ℓ∘∇ℓ; P ← Π[P − η ∇ℓ/(√G + ε)] entrywise.
    pub fn adagrad_step(&mut self, grad: &PatternGradient) -> Result<f64> {
        let eta = self.next_eta()?;
        if grad.pattern() != self.current.pattern() {
            return Err(OsgmError::InvalidConfig(format!(
                "gradient pattern {} does not match stepsize pattern {}",
                grad.pattern(),
                self.current.pattern()
            )));
        }
        let g = grad.to_stepsize();
        let acc = self.accumulator.get_or_insert_with(|| match &g {
            Stepsize::Scalar { .. } => Accumulator::Scalar(0.0),
            Stepsize::Diagonal(d) => Accumulator::Diagonal(d * 0.0),
            Stepsize::Full(p) => Accumulator::Full(p * 0.0),
        });
        let next = match (&self.current, &g, acc) {
            (Stepsize::Scalar { alpha, dim }, Stepsize::Scalar { alpha: gv, .. }, Accumulator::Scalar(a)) => {
                *a += gv * gv;
                Stepsize::Scalar { alpha: alpha - eta * gv / (a.sqrt() + ADAGRAD_EPS), dim: *dim }
            }
            (Stepsize::Diagonal(d), Stepsize::Diagonal(gv), Accumulator::Diagonal(a)) => {
                *a += gv.component_mul(gv);
                Stepsize::Diagonal(d - eta * gv.component_div(&a.map(|s| s.sqrt() + ADAGRAD_EPS)))
            }
            (Stepsize::Full(p), Stepsize::Full(gv), Accumulator::Full(a)) => {
                *a += gv.component_mul(gv);
                Stepsize::Full(p - eta * gv.component_div(&a.map(|s| s.sqrt() + ADAGRAD_EPS)))
            }
            _ => return Err(OsgmError::InvalidConfig("AdaGrad accumulator shape mismatch".into())),
        };
        self.current = self.set.project(&next)?;
        self.k += 1;
        self.last_eta = Some(eta);
        Ok(eta)
    }
}

/// The named algorithm variants: a feedback paired with a landscape action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    LookaheadR,
    MonotoneLookaheadR,
    VanillaR,
    MonotoneR,
    LookaheadH,
    MonotoneLookaheadH,
    VanillaH,
    MonotoneH,
}

impl Variant {
    pub fn from_parts(feedback: FeedbackKind, action: ActionKind) -> Variant {
        use ActionKind::*;
        match (feedback, action) {
            (FeedbackKind::Ratio, Lookahead) => Variant::LookaheadR,
            (FeedbackKind::Ratio, MonotoneLookahead) => Variant::MonotoneLookaheadR,
            (FeedbackKind::Ratio, Vanilla) => Variant::VanillaR,
            (FeedbackKind::Ratio, Monotone) => Variant::MonotoneR,
            (FeedbackKind::Hypergradient, Lookahead) => Variant::LookaheadH,
            (FeedbackKind::Hypergradient, MonotoneLookahead) => Variant::MonotoneLookaheadH,
            (FeedbackKind::Hypergradient, Vanilla) => Variant::VanillaH,
            (FeedbackKind::Hypergradient, Monotone) => Variant::MonotoneH,
        }
    }

    pub fn feedback(self) -> FeedbackKind {
        match self {
            Variant::LookaheadR | Variant::MonotoneLookaheadR | Variant::VanillaR | Variant::MonotoneR => FeedbackKind::Ratio,
            _ => FeedbackKind::Hypergradient,
        }
    }

    pub fn action(self) -> ActionKind {
        match self {
            Variant::LookaheadR | Variant::LookaheadH => ActionKind::Lookahead,
            Variant::MonotoneLookaheadR | Variant::MonotoneLookaheadH => ActionKind::MonotoneLookahead,
            Variant::VanillaR | Variant::VanillaH => ActionKind::Vanilla,
            Variant::MonotoneR | Variant::MonotoneH => ActionKind::Monotone,
        }
    }

    /// Variants whose default schedule needs the set diameter D.
    pub fn needs_diameter(self) -> bool {
        !self.action().has_lookahead()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::LookaheadR => "lookahead-osgm-r",
            Variant::MonotoneLookaheadR => "monotone-lookahead-osgm-r",
            Variant::VanillaR => "vanilla-osgm-r",
            Variant::MonotoneR => "monotone-osgm-r",
            Variant::LookaheadH => "lookahead-osgm-h",
            Variant::MonotoneLookaheadH => "monotone-lookahead-osgm-h",
            Variant::VanillaH => "vanilla-osgm-h",
            Variant::MonotoneH => "monotone-osgm-h",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The schedule the guarantees prescribe for each variant:
/// η = 1/(2L²) with ratio feedback and a lookahead action, η = 1/L with
/// hypergradient feedback and a lookahead action, and the anytime schedules
/// c/√k with c = D/(2L(LD+1)) (ratio) or c = D/(LD+1) (hypergradient) for
/// the actions without lookahead.
pub fn default_schedule(variant: Variant, smoothness: f64, diam: Option<f64>) -> Result<Schedule> {
    let l = smoothness;
    match variant.feedback() {
        _ if variant.action().has_lookahead() => Ok(Schedule::Constant {
            eta: match variant.feedback() {
                FeedbackKind::Ratio => 1.0 / (2.0 * l * l),
                FeedbackKind::Hypergradient => 1.0 / l,
            },
        }),
        feedback => {
            let d = diam.ok_or_else(|| {
                OsgmError::InvalidConfig(format!(
                    "{} needs a bounded candidate set (diameter D) for its default schedule",
                    variant.name()
                ))
            })?;
            let c = match feedback {
                FeedbackKind::Ratio => d / (2.0 * l * (l * d + 1.0)),
                FeedbackKind::Hypergradient => d / (l * d + 1.0),
            };
            Ok(Schedule::Anytime { c })
        }
    }
}

/// The fixed-horizon form of the diameter-based schedules.
pub fn horizon_schedule(variant: Variant, smoothness: f64, diam: f64, horizon: usize) -> Schedule {
    let l = smoothness;
    let c = match variant.feedback() {
        FeedbackKind::Ratio => diam / (2.0 * l * (l * diam + 1.0)),
        FeedbackKind::Hypergradient => diam / (l * diam + 1.0),
    };
    Schedule::Horizon { c, horizon: Some(horizon) }
}

/// Default c = D/σ for the c/√K and c/√k schedules.
pub fn default_c(diam: f64, lipschitz: f64) -> f64 {
    diam / lipschitz
}

pub type BenchmarkRule = Arc<dyn Fn(usize, &crate::linalg::Vector) -> Stepsize + Send + Sync>;

/// A comparator for regret: a fixed stepsize or a sequence P̂_k chosen from
/// the iteration index and the current iterate.
#[derive(Clone)]
pub enum Benchmark {
    Fixed { name: String, stepsize: Stepsize },
    Sequence { name: String, rule: BenchmarkRule },
}

impl fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Benchmark::Fixed { name, stepsize } => f.debug_struct("Fixed").field("name", name).field("stepsize", stepsize).finish(),
            Benchmark::Sequence { name, .. } => f.debug_struct("Sequence").field("name", name).finish(),
        }
    }
}

impl Benchmark {
    pub fn fixed(name: impl Into<String>, stepsize: Stepsize) -> Self {
        Benchmark::Fixed { name: name.into(), stepsize }
    }
    pub fn sequence(name: impl Into<String>, rule: impl Fn(usize, &crate::linalg::Vector) -> Stepsize + Send + Sync + 'static) -> Self {
        Benchmark::Sequence { name: name.into(), rule: Arc::new(rule) }
    }
    pub fn name(&self) -> &str {
        match self {
            Benchmark::Fixed { name, .. } | Benchmark::Sequence { name, .. } => name,
        }
    }
    pub fn at(&self, k: usize, x: &crate::linalg::Vector) -> Stepsize {
        match self {
            Benchmark::Fixed { stepsize, .. } => stepsize.clone(),
            Benchmark::Sequence { rule, .. } => rule(k, x),
        }
    }
    pub fn is_fixed(&self) -> bool {
        matches!(self, Benchmark::Fixed { .. })
    }
}

/// Default benchmarks: P₁, (1/L)I, the inverse Hessian at the optimum and
/// the known diagonal optimum, when representable in the pattern. Duplicates
/// are dropped.
pub fn default_benchmarks(problem: &Problem, pattern: Pattern, p1: &Stepsize) -> Vec<Benchmark> {
    let n = problem.dim();
    let mut candidates = vec![
        ("P1", Some(p1.clone())),
        ("inv_L", Some(Stepsize::scaled_identity(pattern, n, 1.0 / problem.smoothness()))),
        ("inv_hessian", problem.inverse_hessian_at_opt().and_then(|m| Stepsize::Full(m).restrict(pattern))),
    ];
    if pattern != Pattern::Scalar {
        candidates.push(("diag_opt", problem.diagonal_optimum().and_then(|(d, _)| Stepsize::Diagonal(d.clone()).embed(pattern).ok())));
    }
    let mut out: Vec<Benchmark> = Vec::new();
    for (name, s) in candidates {
        let Some(s) = s else { continue };
        let dup = out.iter().any(|b| match b {
            Benchmark::Fixed { stepsize, .. } => stepsize.param_distance(&s).map(|d| d <= 1e-15 * (1.0 + s.frobenius_norm())).unwrap_or(false),
            Benchmark::Sequence { .. } => false,
        });
        if !dup {
            out.push(Benchmark::fixed(name, s));
        }
    }
    out
}

/// Running sums for the regret inequalities against each benchmark.
#[derive(Debug, Clone, Default)]
pub struct BenchmarkTrack {
    pub name: String,
    pub fixed: bool,
    pub in_set: bool,
    /// Σ ℓ_{x^k}(P̂_k) after each iteration.
    pub feedback_sums: Vec<f64>,
    /// ℓ_{x^k}(P̂_k) at each iteration.
    pub feedback_values: Vec<f64>,
    /// Σ_{j<k} ‖P̂_j − P̂_{j+1}‖ after each iteration (path length up to P̂_k).
    pub path_lengths: Vec<f64>,
    /// ‖P̂_k − P₁‖ at each iteration.
    pub dist_to_p1: Vec<f64>,
    pub last: Option<Stepsize>,
}

#[derive(Debug, Clone, Default)]
pub struct RegretTracker {
    /// Σ ℓ_{x^k}(P_k) after each iteration.
    pub cumulative_feedback: Vec<f64>,
    /// Σ ‖∇ℓ_{x^k}(P_k)‖² (parameter space) after each iteration.
    pub grad_sq_sums: Vec<f64>,
    /// Σ η_k ‖∇ℓ_{x^k}(P_k)‖² after each iteration.
    pub weighted_grad_sq_sums: Vec<f64>,
    /// max_{j≤k} ‖P_j − P₁‖ after each iteration.
    pub max_drift: Vec<f64>,
    pub benchmarks: Vec<BenchmarkTrack>,
}

impl RegretTracker {
    pub fn new(benchmarks: &[Benchmark]) -> Self {
        Self {
            benchmarks: benchmarks
                .iter()
                .map(|b| BenchmarkTrack { name: b.name().to_string(), fixed: b.is_fixed(), in_set: true, ..Default::default() })
                .collect(),
            ..Default::default()
        }
    }

    pub fn iterations(&self) -> usize {
        self.cumulative_feedback.len()
    }

    /// Records iteration k: the learner's feedback, its gradient norm, and the
    /// benchmark feedback values at the same point x^k.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        problem: &Problem,
        kind: FeedbackKind,
        current: &Point,
        k: usize,
        p_k: &Stepsize,
        p1: &Stepsize,
        feedback: f64,
        grad_sq: f64,
        eta: f64,
        set: &CandidateSet,
        benchmarks: &[Benchmark],
    ) -> Result<()> {
        let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
        self.cumulative_feedback.push(last(&self.cumulative_feedback) + feedback);
        self.grad_sq_sums.push(last(&self.grad_sq_sums) + grad_sq);
        self.weighted_grad_sq_sums.push(last(&self.weighted_grad_sq_sums) + eta * grad_sq);
        let drift = p_k.param_distance(p1)?;
        self.max_drift.push(last(&self.max_drift).max(drift));
        for (track, bench) in self.benchmarks.iter_mut().zip(benchmarks) {
            let p_hat = bench.at(k, &current.x);
            if !set.contains(&p_hat, 1e-12)? {
                track.in_set = false;
            }
            let value = feedback_value(kind, problem, current, &p_hat)?;
            track.feedback_values.push(value);
            track.feedback_sums.push(last(&track.feedback_sums) + value);
            let step = match &track.last {
                Some(prev) => prev.param_distance(&p_hat)?,
                None => 0.0,
            };
            track.path_lengths.push(last(&track.path_lengths) + step);
            track.dist_to_p1.push(p_hat.param_distance(p1)?);
            track.last = Some(p_hat);
        }
        Ok(())
    }
}
