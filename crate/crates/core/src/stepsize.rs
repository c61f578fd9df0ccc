//! Stepsize parameterizations, the pattern-shaped feedback gradients, and
//! candidate sets with their Euclidean projections.
//!
//! Each pattern is learned in its own parameter space: α ∈ ℝ for the scalar
//! pattern, d ∈ ℝⁿ for diagonal and P ∈ ℝⁿˣⁿ for full. Distances, gradient
//! norms and set diameters used by the learner live in that space. For
//! diagonal and full patterns this coincides with the Frobenius embedding;
//! for the scalar pattern the embedding norm of αI is |α|·√n while the
//! parameter norm is |α|.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, OsgmError, Result};
use crate::feedback::FeedbackSample;
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    Scalar,
    Diagonal,
    Full,
}

impl Pattern {
    fn rank(self) -> u8 {
        match self {
            Pattern::Scalar => 0,
            Pattern::Diagonal => 1,
            Pattern::Full => 2,
        }
    }
    pub fn wider(self, other: Pattern) -> Pattern {
        if self.rank() >= other.rank() {
            self
        } else {
            other
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Scalar => "scalar",
            Pattern::Diagonal => "diag",
            Pattern::Full => "full",
        })
    }
}

impl FromStr for Pattern {
    type Err = OsgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(Pattern::Scalar),
            "diag" | "diagonal" => Ok(Pattern::Diagonal),
            "full" => Ok(Pattern::Full),
            _ => Err(OsgmError::Parse(format!("unknown pattern `{s}` (expected scalar, diag or full)"))),
        }
    }
}

/// A matrix stepsize P in one of three patterns.
#[derive(Debug, Clone, PartialEq)]
pub enum Stepsize {
    Scalar { alpha: f64, dim: usize },
    Diagonal(Vector),
    Full(Matrix),
}

impl Stepsize {
    pub fn scalar(alpha: f64, dim: usize) -> Self {
        Stepsize::Scalar { alpha, dim }
    }

    /// αI expressed in the given pattern.
    pub fn scaled_identity(pattern: Pattern, dim: usize, alpha: f64) -> Self {
        match pattern {
            Pattern::Scalar => Stepsize::Scalar { alpha, dim },
            Pattern::Diagonal => Stepsize::Diagonal(Vector::from_element(dim, alpha)),
            Pattern::Full => Stepsize::Full(Matrix::identity(dim, dim) * alpha),
        }
    }

    pub fn zeros(pattern: Pattern, dim: usize) -> Self {
        Self::scaled_identity(pattern, dim, 0.0)
    }

    pub fn pattern(&self) -> Pattern {
        match self {
            Stepsize::Scalar { .. } => Pattern::Scalar,
            Stepsize::Diagonal(_) => Pattern::Diagonal,
            Stepsize::Full(_) => Pattern::Full,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Stepsize::Scalar { dim, .. } => *dim,
            Stepsize::Diagonal(d) => d.len(),
            Stepsize::Full(p) => p.nrows(),
        }
    }

    /// P g for the pattern: αg, d∘g or the dense product.
    pub fn apply(&self, g: &Vector) -> Result<Vector> {
        check_dim(self.dim(), g.len())?;
        Ok(match self {
            Stepsize::Scalar { alpha, .. } => g * *alpha,
            Stepsize::Diagonal(d) => d.component_mul(g),
            Stepsize::Full(p) => p * g,
        })
    }

    /// The dense n×n matrix this stepsize represents.
    pub fn to_dense(&self) -> Matrix {
        match self {
            Stepsize::Scalar { alpha, dim } => Matrix::identity(*dim, *dim) * *alpha,
            Stepsize::Diagonal(d) => Matrix::from_diagonal(d),
            Stepsize::Full(p) => p.clone(),
        }
    }

    /// Re-expresses the stepsize in a pattern at least as wide as its own.
    pub fn embed(&self, pattern: Pattern) -> Result<Stepsize> {
        if pattern.rank() < self.pattern().rank() {
            return Err(OsgmError::InvalidConfig(format!(
                "cannot embed a {} stepsize into the {} pattern",
                self.pattern(),
                pattern
            )));
        }
        Ok(match (self, pattern) {
            (s, p) if s.pattern() == p => s.clone(),
            (Stepsize::Scalar { alpha, dim }, Pattern::Diagonal) => Stepsize::Diagonal(Vector::from_element(*dim, *alpha)),
            (s, _) => Stepsize::Full(s.to_dense()),
        })
    }

    /// Exact representation in `pattern`, if the matrix has that structure.
    pub fn restrict(&self, pattern: Pattern) -> Option<Stepsize> {
        if pattern.rank() >= self.pattern().rank() {
            return self.embed(pattern).ok();
        }
        let dense = self.to_dense();
        let n = self.dim();
        let diag = dense.diagonal();
        let off_diagonal_zero = (0..n).all(|i| (0..n).all(|j| i == j || dense[(i, j)] == 0.0));
        if !off_diagonal_zero {
            return None;
        }
        match pattern {
            Pattern::Diagonal => Some(Stepsize::Diagonal(diag)),
            Pattern::Scalar => {
                let a = diag[0];
                diag.iter().all(|&v| v == a).then_some(Stepsize::Scalar { alpha: a, dim: n })
            }
            Pattern::Full => unreachable!(),
        }
    }

    /// Frobenius norm of the embedded matrix.
    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Stepsize::Scalar { alpha, dim } => alpha.abs() * (*dim as f64).sqrt(),
            Stepsize::Diagonal(d) => d.norm(),
            Stepsize::Full(p) => p.norm(),
        }
    }

    /// Frobenius distance between the embedded matrices; patterns may differ.
    pub fn frobenius_distance(&self, other: &Stepsize) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        let p = self.pattern().wider(other.pattern());
        let a = self.embed(p)?;
        let b = other.embed(p)?;
        Ok(a.sub(&b)?.frobenius_norm())
    }

    /// Squared norm in the pattern's parameter space.
    pub fn param_norm_sq(&self) -> f64 {
        match self {
            Stepsize::Scalar { alpha, .. } => alpha * alpha,
            Stepsize::Diagonal(d) => d.norm_squared(),
            Stepsize::Full(p) => p.norm_squared(),
        }
    }

    /// Squared parameter-space distance; both stepsizes must share a pattern.
    pub fn param_distance_sq(&self, other: &Stepsize) -> Result<f64> {
        Ok(self.sub(other)?.param_norm_sq())
    }

    pub fn param_distance(&self, other: &Stepsize) -> Result<f64> {
        self.param_distance_sq(other).map(f64::sqrt)
    }

    /// Parameter-space inner product; both stepsizes must share a pattern.
    pub fn param_inner(&self, other: &Stepsize) -> Result<f64> {
        self.same_shape(other)?;
        Ok(match (self, other) {
            (Stepsize::Scalar { alpha: a, .. }, Stepsize::Scalar { alpha: b, .. }) => a * b,
            (Stepsize::Diagonal(a), Stepsize::Diagonal(b)) => a.dot(b),
            (Stepsize::Full(a), Stepsize::Full(b)) => a.dot(b),
            _ => unreachable!(),
        })
    }

    fn same_shape(&self, other: &Stepsize) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        if self.pattern() != other.pattern() {
            return Err(OsgmError::InvalidConfig(format!(
                "stepsize patterns differ: {} vs {}",
                self.pattern(),
                other.pattern()
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Stepsize) -> Result<Stepsize> {
        self.same_shape(other)?;
        Ok(match (self, other) {
            (Stepsize::Scalar { alpha: a, dim }, Stepsize::Scalar { alpha: b, .. }) => Stepsize::Scalar { alpha: a - b, dim: *dim },
            (Stepsize::Diagonal(a), Stepsize::Diagonal(b)) => Stepsize::Diagonal(a - b),
            (Stepsize::Full(a), Stepsize::Full(b)) => Stepsize::Full(a - b),
            _ => unreachable!(),
        })
    }

    /// self + t·grad, with the gradient in this stepsize's pattern.
    pub fn add_scaled(&mut self, t: f64, grad: &PatternGradient) -> Result<()> {
        check_dim(self.dim(), grad.dim())?;
        match (self, grad) {
            (Stepsize::Scalar { alpha, .. }, PatternGradient::Scalar { value, .. }) => *alpha += t * value,
            (Stepsize::Diagonal(d), PatternGradient::Diagonal(v)) => d.axpy(t, v, 1.0),
            (Stepsize::Full(p), PatternGradient::RankOne { left, right, scale }) => p.ger(t * scale, left, right, 1.0),
            (Stepsize::Full(p), PatternGradient::Dense(m)) => *p += m * t,
            (s, g) => {
                return Err(OsgmError::InvalidConfig(format!(
                    "gradient pattern {} does not match stepsize pattern {}",
                    g.pattern(),
                    s.pattern()
                )))
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Stepsize::Scalar { alpha, .. } => alpha.is_finite(),
            Stepsize::Diagonal(d) => d.iter().all(|v| v.is_finite()),
            Stepsize::Full(p) => p.iter().all(|v| v.is_finite()),
        }
    }

    fn map_entries(&self, f: impl Fn(f64) -> f64) -> Stepsize {
        match self {
            Stepsize::Scalar { alpha, dim } => Stepsize::Scalar { alpha: f(*alpha), dim: *dim },
            Stepsize::Diagonal(d) => Stepsize::Diagonal(d.map(&f)),
            Stepsize::Full(p) => Stepsize::Full(p.map(&f)),
        }
    }

    fn entries(&self) -> Vec<f64> {
        match self {
            Stepsize::Scalar { alpha, .. } => vec![*alpha],
            Stepsize::Diagonal(d) => d.iter().copied().collect(),
            Stepsize::Full(p) => p.iter().copied().collect(),
        }
    }
}

/// Feedback gradient contracted onto a stepsize pattern.
///
/// The full-matrix gradient `−g_half gᵀ/denom` stays in rank-one form
/// (`scale · left · rightᵀ`) until something needs the dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternGradient {
    Scalar { value: f64, dim: usize },
    Diagonal(Vector),
    RankOne { left: Vector, right: Vector, scale: f64 },
    Dense(Matrix),
}

impl PatternGradient {
    pub fn pattern(&self) -> Pattern {
        match self {
            PatternGradient::Scalar { .. } => Pattern::Scalar,
            PatternGradient::Diagonal(_) => Pattern::Diagonal,
            PatternGradient::RankOne { .. } | PatternGradient::Dense(_) => Pattern::Full,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PatternGradient::Scalar { dim, .. } => *dim,
            PatternGradient::Diagonal(v) => v.len(),
            PatternGradient::RankOne { left, .. } => left.len(),
            PatternGradient::Dense(m) => m.nrows(),
        }
    }

    /// Squared norm in the pattern's parameter space.
    pub fn norm_sq(&self) -> f64 {
        match self {
            PatternGradient::Scalar { value, .. } => value * value,
            PatternGradient::Diagonal(v) => v.norm_squared(),
            PatternGradient::RankOne { left, right, scale } => scale * scale * left.norm_squared() * right.norm_squared(),
            PatternGradient::Dense(m) => m.norm_squared(),
        }
    }

    /// The gradient as a stepsize-shaped object.
    pub fn to_stepsize(&self) -> Stepsize {
        match self {
            PatternGradient::Scalar { value, dim } => Stepsize::Scalar { alpha: *value, dim: *dim },
            PatternGradient::Diagonal(v) => Stepsize::Diagonal(v.clone()),
            PatternGradient::RankOne { left, right, scale } => Stepsize::Full(left * right.transpose() * *scale),
            PatternGradient::Dense(m) => Stepsize::Full(m.clone()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PatternGradient::Scalar { value, .. } => *value == 0.0,
            PatternGradient::Diagonal(v) => v.iter().all(|&x| x == 0.0),
            PatternGradient::RankOne { left, right, scale } => {
                *scale == 0.0 || left.iter().all(|&x| x == 0.0) || right.iter().all(|&x| x == 0.0)
            }
            PatternGradient::Dense(m) => m.iter().all(|&x| x == 0.0),
        }
    }
}

/// Contracts the rank-one feedback gradient onto a pattern:
/// scalar −⟨g_half, g⟩/denom, diagonal −(g_half∘g)/denom, full −g_half gᵀ/denom.
pub fn contract_gradient(sample: &FeedbackSample, pattern: Pattern) -> PatternGradient {
    contract_rank_one(&sample.g_half, &sample.g, sample.denom, pattern)
}

pub fn contract_rank_one(g_half: &Vector, g: &Vector, denom: f64, pattern: Pattern) -> PatternGradient {
    match pattern {
        Pattern::Scalar => PatternGradient::Scalar { value: -g_half.dot(g) / denom, dim: g.len() },
        Pattern::Diagonal => PatternGradient::Diagonal(-g_half.component_mul(g) / denom),
        Pattern::Full => PatternGradient::RankOne { left: g_half.clone(), right: g.clone(), scale: -1.0 / denom },
    }
}

/// Closed convex set of admissible stepsizes.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateSet {
    Unconstrained,
    /// Every parameter entry in [lo, hi].
    Box { lo: f64, hi: f64 },
    /// Every parameter entry nonnegative.
    Nonnegative,
    /// Frobenius ball of the given radius around `center`.
    Ball { center: Stepsize, radius: f64 },
}

impl fmt::Display for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateSet::Unconstrained => f.write_str("none"),
            CandidateSet::Box { lo, hi } => write!(f, "box:{lo:e},{hi:e}"),
            CandidateSet::Nonnegative => f.write_str("nonneg"),
            CandidateSet::Ball { radius, .. } => write!(f, "ball:{radius:e}"),
        }
    }
}

impl CandidateSet {
    /// Rejects combinations that cannot be projected onto.
    pub fn validate(&self, pattern: Pattern, dim: usize) -> Result<()> {
        match self {
            CandidateSet::Box { lo, hi } if !(lo <= hi) => {
                Err(OsgmError::InvalidConfig(format!("box bounds must satisfy lo <= hi, got [{lo}, {hi}]")))
            }
            CandidateSet::Ball { radius, .. } if !(*radius >= 0.0) => {
                Err(OsgmError::InvalidConfig(format!("ball radius must be nonnegative, got {radius}")))
            }
            CandidateSet::Ball { center, .. } if center.pattern() != pattern || center.dim() != dim => {
                Err(OsgmError::InvalidConfig(format!(
                    "ball center is a {} stepsize of dimension {}, expected {} of dimension {dim}",
                    center.pattern(),
                    center.dim(),
                    pattern
                )))
            }
            _ => Ok(()),
        }
    }

    /// Euclidean projection.
    pub fn project(&self, s: &Stepsize) -> Result<Stepsize> {
        Ok(match self {
            CandidateSet::Unconstrained => s.clone(),
            CandidateSet::Box { lo, hi } => s.map_entries(|v| v.clamp(*lo, *hi)),
            CandidateSet::Nonnegative => s.map_entries(|v| v.max(0.0)),
            CandidateSet::Ball { center, radius } => {
                let diff = s.sub(center)?;
                let dist = diff.frobenius_norm();
                if dist <= *radius {
                    s.clone()
                } else {
                    let t = radius / dist;
                    let mut out = center.clone();
                    out.add_scaled(t, &stepsize_as_gradient(&diff))?;
                    out
                }
            }
        })
    }

    pub fn contains(&self, s: &Stepsize, tol: f64) -> Result<bool> {
        Ok(match self {
            CandidateSet::Unconstrained => true,
            CandidateSet::Box { lo, hi } => s.entries().iter().all(|&v| v >= lo - tol && v <= hi + tol),
            CandidateSet::Nonnegative => s.entries().iter().all(|&v| v >= -tol),
            CandidateSet::Ball { center, radius } => s.sub(center)?.frobenius_norm() <= radius + tol,
        })
    }

    /// Diameter in the pattern's parameter space, absent for unbounded sets.
    pub fn diam(&self, pattern: Pattern, dim: usize) -> Option<f64> {
        let entries = match pattern {
            Pattern::Scalar => 1.0,
            Pattern::Diagonal => dim as f64,
            Pattern::Full => (dim * dim) as f64,
        };
        match self {
            CandidateSet::Unconstrained | CandidateSet::Nonnegative => None,
            CandidateSet::Box { lo, hi } => Some((hi - lo) * entries.sqrt()),
            CandidateSet::Ball { radius, .. } => Some(match pattern {
                Pattern::Scalar => 2.0 * radius / (dim as f64).sqrt(),
                _ => 2.0 * radius,
            }),
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, CandidateSet::Box { .. } | CandidateSet::Ball { .. })
    }
}

fn stepsize_as_gradient(s: &Stepsize) -> PatternGradient {
    match s {
        Stepsize::Scalar { alpha, dim } => PatternGradient::Scalar { value: *alpha, dim: *dim },
        Stepsize::Diagonal(d) => PatternGradient::Diagonal(d.clone()),
        Stepsize::Full(p) => PatternGradient::Dense(p.clone()),
    }
}

impl FromStr for CandidateSet {
    type Err = OsgmError;
    /// Parses `none`, `nonneg` and `box:lo,hi`. Balls need a center and are
    /// built by the caller.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CandidateSet::Unconstrained),
            "nonneg" => Ok(CandidateSet::Nonnegative),
            _ => {
                let rest = s
                    .strip_prefix("box:")
                    .ok_or_else(|| OsgmError::Parse(format!("unknown candidate set `{s}`")))?;
                let (lo, hi) = rest
                    .split_once(',')
                    .ok_or_else(|| OsgmError::Parse(format!("box needs `lo,hi`, got `{rest}`")))?;
                let lo: f64 = lo.trim().parse().map_err(|_| OsgmError::Parse(format!("bad box bound `{lo}`")))?;
                let hi: f64 = hi.trim().parse().map_err(|_| OsgmError::Parse(format!("bad box bound `{hi}`")))?;
                Ok(CandidateSet::Box { lo, hi })
            }
        }
    }
}
