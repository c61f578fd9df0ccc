//! Ratio and hypergradient feedback functions and their exact stepsize gradients.
//!
//! For a point x with gradient g and proposal x½ = x − Pg:
//!
//! * ratio: r_x(P) = (f(x½) − f*) / (f(x) − f*), gradient −∇f(x½) gᵀ / (f(x) − f*);
//! * hypergradient: h_x(P) = (f(x½) − f(x)) / ‖g‖², gradient −∇f(x½) gᵀ / ‖g‖².
//!
//! Both gradients are rank one and are stored as `(g_half, g, denom)`.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use crate::error::{check_dim, OsgmError, Result};
use crate::linalg::{Matrix, Vector};
use crate::problems::{tol_gap, Problem, TOL_GRAD};
use crate::stepsize::Stepsize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeedbackKind {
    Ratio,
    Hypergradient,
}

impl fmt::Display for FeedbackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackKind::Ratio => "ratio",
            FeedbackKind::Hypergradient => "hyper",
        })
    }
}

impl FromStr for FeedbackKind {
    type Err = OsgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(FeedbackKind::Ratio),
            "hyper" | "hypergradient" => Ok(FeedbackKind::Hypergradient),
            _ => Err(OsgmError::Parse(format!("unknown feedback `{s}` (expected ratio or hyper)"))),
        }
    }
}

/// Function and gradient oracle calls consumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCalls {
    pub f: u64,
    pub g: u64,
}

impl OracleCalls {
    pub const fn new(f: u64, g: u64) -> Self {
        Self { f, g }
    }
    pub fn total(&self) -> u64 {
        self.f + self.g
    }
}

impl Add for OracleCalls {
    type Output = OracleCalls;
    fn add(self, rhs: Self) -> Self {
        OracleCalls { f: self.f + rhs.f, g: self.g + rhs.g }
    }
}

impl AddAssign for OracleCalls {
    fn add_assign(&mut self, rhs: Self) {
        self.f += rhs.f;
        self.g += rhs.g;
    }
}

/// A point with its function value and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vector,
    pub f: f64,
    pub g: Vector,
}

impl Point {
    pub fn evaluate(problem: &Problem, x: Vector) -> Self {
        let (f, g) = problem.eval(&x);
        Point { x, f, g }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSample {
    pub kind: FeedbackKind,
    pub value: f64,
    /// ∇f at the proposal.
    pub g_half: Vector,
    /// ∇f at the current point.
    pub g: Vector,
    /// f(x) − f* for ratio feedback, ‖g‖² for hypergradient feedback.
    pub denom: f64,
    pub proposal: Vector,
    pub f_at_proposal: f64,
    pub f_at_x: f64,
    pub oracle_calls: OracleCalls,
}

impl FeedbackSample {
    /// Frobenius norm of the full-matrix gradient, ‖g_half‖·‖g‖/denom.
    pub fn gradient_norm(&self) -> f64 {
        self.g_half.norm() * self.g.norm() / self.denom
    }

    /// The dense gradient −g_half gᵀ/denom.
    pub fn full_gradient(&self) -> Matrix {
        &self.g_half * self.g.transpose() * (-1.0 / self.denom)
    }

    /// The proposal as an evaluated point.
    pub fn proposal_point(&self) -> Point {
        Point { x: self.proposal.clone(), f: self.f_at_proposal, g: self.g_half.clone() }
    }
}

/// x − P g.
pub fn propose(x: &Vector, stepsize: &Stepsize, g: &Vector) -> Result<Vector> {
    check_dim(x.len(), g.len())?;
    Ok(x - stepsize.apply(g)?)
}

fn denominator(kind: FeedbackKind, problem: &Problem, current: &Point) -> Result<f64> {
    match kind {
        FeedbackKind::Ratio => {
            let f_star = problem.f_star().ok_or(OsgmError::MissingOptimalValue)?;
            let gap = current.f - f_star;
            if gap <= tol_gap(f_star) {
                return Err(OsgmError::Converged { gap });
            }
            Ok(gap)
        }
        FeedbackKind::Hypergradient => {
            let gn = current.g.norm();
            if gn <= TOL_GRAD {
                return Err(OsgmError::Stationary { grad_norm: gn });
            }
            Ok(gn * gn)
        }
    }
}

fn numerator(kind: FeedbackKind, problem: &Problem, current: &Point, f_half: f64) -> f64 {
    match kind {
        FeedbackKind::Ratio => f_half - problem.f_star().unwrap_or(f64::NAN),
        FeedbackKind::Hypergradient => f_half - current.f,
    }
}

/// Feedback at a point whose value and gradient are already known; charges
/// only the proposal's function value and gradient.
pub fn evaluate_feedback(kind: FeedbackKind, problem: &Problem, current: &Point, stepsize: &Stepsize) -> Result<FeedbackSample> {
    problem.check_point(&current.x)?;
    let denom = denominator(kind, problem, current)?;
    let proposal = propose(&current.x, stepsize, &current.g)?;
    let (f_half, g_half) = problem.eval(&proposal);
    Ok(FeedbackSample {
        kind,
        value: numerator(kind, problem, current, f_half) / denom,
        g_half,
        g: current.g.clone(),
        denom,
        proposal,
        f_at_proposal: f_half,
        f_at_x: current.f,
        oracle_calls: OracleCalls::new(1, 1),
    })
}

/// Feedback value only, as used for benchmark stepsizes; one function call.
pub fn feedback_value(kind: FeedbackKind, problem: &Problem, current: &Point, stepsize: &Stepsize) -> Result<f64> {
    let denom = denominator(kind, problem, current)?;
    let proposal = propose(&current.x, stepsize, &current.g)?;
    Ok(numerator(kind, problem, current, problem.value(&proposal)) / denom)
}

fn standalone(kind: FeedbackKind, problem: &Problem, x: &Vector, stepsize: &Stepsize) -> Result<FeedbackSample> {
    problem.check_point(x)?;
    let current = Point::evaluate(problem, x.clone());
    let mut sample = evaluate_feedback(kind, problem, &current, stepsize)?;
    sample.oracle_calls += OracleCalls::new(1, 1);
    Ok(sample)
}

/// r_x(P) = (f(x − P∇f(x)) − f*) / (f(x) − f*).
pub fn ratio_feedback(problem: &Problem, x: &Vector, stepsize: &Stepsize) -> Result<FeedbackSample> {
    standalone(FeedbackKind::Ratio, problem, x, stepsize)
}

/// h_x(P) = (f(x − P∇f(x)) − f(x)) / ‖∇f(x)‖².
pub fn hypergradient_feedback(problem: &Problem, x: &Vector, stepsize: &Stepsize) -> Result<FeedbackSample> {
    standalone(FeedbackKind::Hypergradient, problem, x, stepsize)
}

/// Smoothness and Lipschitz constants of the feedback functions over a set of
/// diameter D containing 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackConstants {
    pub ratio_smoothness: f64,
    pub hyper_smoothness: f64,
    pub ratio_lipschitz: Option<f64>,
    pub hyper_lipschitz: Option<f64>,
}

impl FeedbackConstants {
    pub fn smoothness(&self, kind: FeedbackKind) -> f64 {
        match kind {
            FeedbackKind::Ratio => self.ratio_smoothness,
            FeedbackKind::Hypergradient => self.hyper_smoothness,
        }
    }
    pub fn lipschitz(&self, kind: FeedbackKind) -> Option<f64> {
        match kind {
            FeedbackKind::Ratio => self.ratio_lipschitz,
            FeedbackKind::Hypergradient => self.hyper_lipschitz,
        }
    }
}

pub fn feedback_constants(smoothness: f64, set_diam: Option<f64>) -> FeedbackConstants {
    let l = smoothness;
    FeedbackConstants {
        ratio_smoothness: 2.0 * l * l,
        hyper_smoothness: l,
        ratio_lipschitz: set_diam.map(|d| 2.0 * l * (l * d + 1.0)),
        hyper_lipschitz: set_diam.map(|d| l * d + 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_diagonal_quadratic, make_quadratic};
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn propose_examples() {
        let x = v(&[2.0, 2.0]);
        let g = v(&[1.0, 2.0]);
        assert_eq!(propose(&x, &Stepsize::zeros(crate::stepsize::Pattern::Full, 2), &g).unwrap(), x);
        assert_eq!(propose(&x, &Stepsize::Diagonal(v(&[0.5, 1.0])), &g).unwrap(), v(&[1.5, 0.0]));
    }

    #[test]
    fn ratio_examples() {
        let p = make_diagonal_quadratic(&[1.0, 4.0]).unwrap();
        let x = v(&[1.0, 1.0]);
        let inv = Stepsize::Diagonal(v(&[1.0, 0.25]));
        let s = ratio_feedback(&p, &x, &inv).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.oracle_calls, OracleCalls::new(2, 2));
        let zero = ratio_feedback(&p, &x, &Stepsize::scalar(0.0, 2)).unwrap();
        assert_eq!(zero.value, 1.0);
    }

    #[test]
    fn hypergradient_examples() {
        let p = make_quadratic(Matrix::identity(3, 3), Vector::zeros(3)).unwrap();
        let x = v(&[1.0, -2.0, 0.5]);
        assert_eq!(hypergradient_feedback(&p, &x, &Stepsize::scalar(0.0, 3)).unwrap().value, 0.0);
        assert_relative_eq!(hypergradient_feedback(&p, &x, &Stepsize::scalar(1.0, 3)).unwrap().value, -0.5);
        let q = make_diagonal_quadratic(&[1.0, 4.0]).unwrap();
        let h = hypergradient_feedback(&q, &v(&[0.3, -1.0]), &Stepsize::scalar(0.25, 2)).unwrap();
        assert!(h.value <= -1.0 / 8.0);
    }

    #[test]
    fn terminal_conditions() {
        let p = make_diagonal_quadratic(&[1.0, 4.0]).unwrap();
        let at_opt = v(&[0.0, 0.0]);
        assert!(matches!(ratio_feedback(&p, &at_opt, &Stepsize::scalar(0.1, 2)), Err(OsgmError::Converged { .. })));
        assert!(matches!(
            hypergradient_feedback(&p, &at_opt, &Stepsize::scalar(0.1, 2)),
            Err(OsgmError::Stationary { .. })
        ));
    }

    #[test]
    fn constants() {
        let c = feedback_constants(1.0, None);
        assert_eq!((c.ratio_smoothness, c.hyper_smoothness), (2.0, 1.0));
        assert_eq!(c.ratio_lipschitz, None);
        assert_eq!(feedback_constants(2.0, Some(1.0)).hyper_lipschitz, Some(3.0));
    }
}
