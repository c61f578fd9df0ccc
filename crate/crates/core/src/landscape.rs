//! Landscape actions: how the next iterate is chosen from the current point and
//! the scheduler's proposal, plus backtracking estimation of L.

use std::fmt;
use std::str::FromStr;

use crate::error::{OsgmError, Result};
use crate::feedback::{FeedbackSample, OracleCalls, Point};
use crate::linalg::Vector;
use crate::problems::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Vanilla,
    Monotone,
    Lookahead,
    MonotoneLookahead,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] =
        [ActionKind::Vanilla, ActionKind::Monotone, ActionKind::Lookahead, ActionKind::MonotoneLookahead];

    pub fn is_monotone(self) -> bool {
        matches!(self, ActionKind::Monotone | ActionKind::MonotoneLookahead)
    }

    pub fn has_lookahead(self) -> bool {
        matches!(self, ActionKind::Lookahead | ActionKind::MonotoneLookahead)
    }

    /// Oracle calls charged on top of the proposal's own f and ∇f.
    pub fn extra_calls(self) -> OracleCalls {
        match self {
            ActionKind::Vanilla => OracleCalls::new(0, 0),
            ActionKind::Monotone => OracleCalls::new(1, 0),
            ActionKind::Lookahead => OracleCalls::new(1, 1),
            ActionKind::MonotoneLookahead => OracleCalls::new(2, 1),
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Vanilla => "vanilla",
            ActionKind::Monotone => "monotone",
            ActionKind::Lookahead => "lookahead",
            ActionKind::MonotoneLookahead => "monotone-lookahead",
        })
    }
}

impl FromStr for ActionKind {
    type Err = OsgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(ActionKind::Vanilla),
            "monotone" => Ok(ActionKind::Monotone),
            "lookahead" => Ok(ActionKind::Lookahead),
            "monotone-lookahead" | "monotone_lookahead" => Ok(ActionKind::MonotoneLookahead),
            _ => Err(OsgmError::Parse(format!(
                "unknown action `{s}` (expected vanilla, monotone, lookahead or monotone-lookahead)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub kind: ActionKind,
    pub x_next: Vector,
    pub f_next: f64,
    /// Gradient at `x_next`; `None` after a null step, where the caller already
    /// holds the gradient of the current point.
    pub g_next: Option<Vector>,
    pub accepted_proposal: bool,
    pub extra_oracle_calls: OracleCalls,
}

/// Applies the landscape action to the evaluated proposal.
///
/// Null-step comparisons re-evaluate f(x); ties go to the candidate.
pub fn act(kind: ActionKind, x: &Vector, proposal: &Point, problem: &Problem, l: f64) -> Result<ActionOutcome> {
    if !(l > 0.0) {
        return Err(OsgmError::InvalidConfig(format!("smoothness estimate must be positive, got {l}")));
    }
    problem.check_point(x)?;
    let lookahead = |p: &Point| {
        let z = &p.x - &p.g / l;
        Point::evaluate(problem, z)
    };
    let outcome = match kind {
        ActionKind::Vanilla => ActionOutcome {
            kind,
            x_next: proposal.x.clone(),
            f_next: proposal.f,
            g_next: Some(proposal.g.clone()),
            accepted_proposal: true,
            extra_oracle_calls: kind.extra_calls(),
        },
        ActionKind::Lookahead => {
            let z = lookahead(proposal);
            ActionOutcome {
                kind,
                x_next: z.x,
                f_next: z.f,
                g_next: Some(z.g),
                accepted_proposal: true,
                extra_oracle_calls: kind.extra_calls(),
            }
        }
        ActionKind::Monotone | ActionKind::MonotoneLookahead => {
            let f_x = problem.value(x);
            let candidate = if kind == ActionKind::Monotone { proposal.clone() } else { lookahead(proposal) };
            if candidate.f <= f_x {
                ActionOutcome {
                    kind,
                    x_next: candidate.x,
                    f_next: candidate.f,
                    g_next: Some(candidate.g),
                    accepted_proposal: true,
                    extra_oracle_calls: kind.extra_calls(),
                }
            } else {
                ActionOutcome {
                    kind,
                    x_next: x.clone(),
                    f_next: f_x,
                    g_next: None,
                    accepted_proposal: false,
                    extra_oracle_calls: kind.extra_calls(),
                }
            }
        }
    };
    Ok(outcome)
}

/// Per-iteration progress measured on the accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    /// r_k = (f(x^{k+1}) − f*)/(f(x^k) − f*), when f* is known.
    pub ratio: Option<f64>,
    /// h_k = (f(x^{k+1}) − f(x^k))/‖∇f(x^k)‖².
    pub hyper: f64,
}

pub fn progress(sample: &FeedbackSample, f_next: f64, problem: &Problem) -> Progress {
    let gn2 = sample.g.norm_squared();
    Progress {
        ratio: problem.f_star().map(|fs| (f_next - fs) / (sample.f_at_x - fs)),
        hyper: (f_next - sample.f_at_x) / gn2,
    }
}

/// One evaluated progress inequality: `slack = rhs − lhs` (or `−|lhs − rhs|`
/// for equalities).
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRecord {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl MonitorRecord {
    fn inequality(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self { name, lhs, rhs, slack: rhs - lhs }
    }
    fn equality(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self { name, lhs, rhs, slack: -(lhs - rhs).abs() }
    }
}

/// Evaluates the progress inequalities that the action guarantees, for both
/// feedback functions (the ratio ones only when f* is known).
///
/// The lookahead bounds use the Frobenius norm of the full-matrix feedback
/// gradient, which dominates every pattern contraction.
pub fn check_progress_inequalities(
    kind: ActionKind,
    sample: &FeedbackSample,
    outcome: &ActionOutcome,
    problem: &Problem,
    l: f64,
) -> Vec<MonitorRecord> {
    let prog = progress(sample, outcome.f_next, problem);
    let gn2 = sample.g.norm_squared();
    let gh2 = sample.g_half.norm_squared();
    let h_value = (sample.f_at_proposal - sample.f_at_x) / gn2;
    let mut out = Vec::new();

    let mut push = |family: Family, progress: f64, value: f64, grad_sq: f64| {
        let (cap, la_coef) = match family {
            Family::Ratio => (1.0, 1.0 / (4.0 * l * l)),
            Family::Hyper => (0.0, 1.0 / (2.0 * l)),
        };
        let name = |s: [&'static str; 2]| match family {
            Family::Ratio => s[0],
            Family::Hyper => s[1],
        };
        match kind {
            ActionKind::Vanilla => out.push(MonitorRecord::equality(name(["vanilla_ratio", "vanilla_hyper"]), progress, value)),
            ActionKind::Monotone => out.push(MonitorRecord::inequality(
                name(["monotone_ratio", "monotone_hyper"]),
                progress,
                value.min(cap),
            )),
            ActionKind::Lookahead => out.push(MonitorRecord::inequality(
                name(["lookahead_ratio", "lookahead_hyper"]),
                progress,
                value - la_coef * grad_sq,
            )),
            ActionKind::MonotoneLookahead => out.push(MonitorRecord::inequality(
                name(["monotone_lookahead_ratio", "monotone_lookahead_hyper"]),
                progress,
                (value - la_coef * grad_sq).min(cap),
            )),
        }
    };

    if let (Some(r_k), Some(fs)) = (prog.ratio, problem.f_star()) {
        let gap = sample.f_at_x - fs;
        let r_value = (sample.f_at_proposal - fs) / gap;
        let grad_sq = gh2 * gn2 / (gap * gap);
        push(Family::Ratio, r_k, r_value, grad_sq);
    }
    push(Family::Hyper, prog.hyper, h_value, gh2 / gn2);
    out
}

#[derive(Clone, Copy)]
enum Family {
    Ratio,
    Hyper,
}

/// Both backtracking conditions at the proposal x½ for a trial constant L':
/// the descent lemma for f at x½, and the hypergradient decrease
/// h(P − ∇h(P)/L') − h(P) ≤ −‖∇h(P)‖²/(2L'). For the full-matrix gradient the
/// two trial points coincide, so one extra function value serves both.
pub fn backtracking_conditions_hold(problem: &Problem, proposal: &Point, g: &Vector, l_trial: f64) -> (bool, OracleCalls) {
    let gh2 = proposal.g.norm_squared();
    if gh2 == 0.0 {
        return (true, OracleCalls::default());
    }
    let trial = &proposal.x - &proposal.g / l_trial;
    let f_trial = problem.value(&trial);
    let descent = f_trial - proposal.f <= -gh2 / (2.0 * l_trial);
    let gn2 = g.norm_squared();
    let dh = (f_trial - proposal.f) / gn2;
    let hyper = dh <= -(gh2 / gn2) / (2.0 * l_trial);
    (descent && hyper, OracleCalls::new(1, 0))
}

pub const MAX_DOUBLINGS: u32 = 60;

/// Smallest L' = L_init / factor^j (j ≥ 0) for which both backtracking
/// conditions hold at the probe (taken with P = 0, so x½ is the probe).
pub fn estimate_l(problem: &Problem, probe: &Vector, l_init: f64, factor: f64) -> Result<f64> {
    if !(l_init > 0.0) || !(factor > 0.0 && factor < 1.0) {
        return Err(OsgmError::InvalidConfig(format!(
            "backtracking needs L_init > 0 and factor in (0, 1), got {l_init}, {factor}"
        )));
    }
    problem.check_point(probe)?;
    let point = Point::evaluate(problem, probe.clone());
    let mut l = l_init;
    for _ in 0..=MAX_DOUBLINGS {
        if backtracking_conditions_hold(problem, &point, &point.g, l).0 {
            return Ok(l);
        }
        l /= factor;
    }
    Err(OsgmError::NotSmooth)
}
