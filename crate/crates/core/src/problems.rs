//! Test problems: smooth convex objectives with the metadata the theory needs
//! (L, μ, f*, x*, the Hessian at the optimum and its Lipschitz constant).
//!
//! Built-ins are the strongly convex quadratic, the tridiagonal Laplacian T_n
//! and its diagonal twin, a two-piece quadratic whose curvature changes across
//! `x1 = 0`, and regularized logistic regression.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{check_dim, OsgmError, Result};
use crate::linalg::{self, Matrix, Vector};

/// Gap below which feedback evaluation reports convergence.
pub fn tol_gap(f_star: f64) -> f64 {
    1e-14 * f_star.abs().max(1.0)
}

/// Gradient norm below which feedback evaluation reports stationarity.
pub const TOL_GRAD: f64 = 1e-12;

/// First-order oracle of a smooth convex function.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;

    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        (self.value(x), self.gradient(x))
    }

    fn hessian_vec(&self, _x: &Vector, _v: &Vector) -> Option<Vector> {
        None
    }

    /// Lower bound on the smallest Hessian eigenvalue over the ball of the
    /// given radius around `center`, when the objective can certify one.
    fn curvature_lower_bound(&self, _center: &Vector, _radius: f64) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    a: Matrix,
    x_star: Vector,
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.x_star.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.x_star;
        0.5 * d.dot(&(&self.a * &d))
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.a * (x - &self.x_star)
    }
    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        let d = x - &self.x_star;
        let ad = &self.a * &d;
        (0.5 * d.dot(&ad), ad)
    }
    fn hessian_vec(&self, _x: &Vector, v: &Vector) -> Option<Vector> {
        Some(&self.a * v)
    }
}

/// f(x) = ½⟨x, T_n x⟩ with T_n = tridiag(−1, 2, −1), evaluated matrix-free.
#[derive(Debug, Clone)]
pub struct TridiagonalObjective {
    n: usize,
}

impl TridiagonalObjective {
    fn matvec(&self, x: &Vector) -> Vector {
        let n = self.n;
        Vector::from_fn(n, |i, _| {
            let mut v = 2.0 * x[i];
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            v
        })
    }
}

impl Objective for TridiagonalObjective {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&self.matvec(x))
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.matvec(x)
    }
    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        let tx = self.matvec(x);
        (0.5 * x.dot(&tx), tx)
    }
    fn hessian_vec(&self, _x: &Vector, v: &Vector) -> Option<Vector> {
        Some(self.matvec(v))
    }
}

/// ¼x₁² + ½x₂² on x₁ ≥ 0 and ¾x₁² + ½x₂² on x₁ < 0.
#[derive(Debug, Clone, Copy)]
pub struct PiecewiseQuadratic;

impl PiecewiseQuadratic {
    fn curvature(x1: f64) -> f64 {
        if x1 >= 0.0 {
            0.5
        } else {
            1.5
        }
    }
}

impl Objective for PiecewiseQuadratic {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * Self::curvature(x[0]) * x[0] * x[0] + 0.5 * x[1] * x[1]
    }
    fn gradient(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![Self::curvature(x[0]) * x[0], x[1]])
    }
    fn hessian_vec(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        Some(Vector::from_vec(vec![Self::curvature(x[0]) * v[0], v[1]]))
    }
}

/// (1/m) Σ log(1 + exp(−yᵢ⟨aᵢ, x⟩)) + (reg/2)‖x‖².
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    features: Matrix,
    labels: Vector,
    reg: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticObjective {
    fn margins(&self, x: &Vector) -> Vector {
        (&self.features * x).component_mul(&self.labels)
    }
    fn m(&self) -> f64 {
        self.features.nrows() as f64
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.features.ncols()
    }
    fn value(&self, x: &Vector) -> f64 {
        let z = self.margins(x);
        z.iter().map(|&t| softplus(-t)).sum::<f64>() / self.m() + 0.5 * self.reg * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.value_and_gradient(x).1
    }
    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        let z = self.margins(x);
        let m = self.m();
        let value = z.iter().map(|&t| softplus(-t)).sum::<f64>() / m + 0.5 * self.reg * x.norm_squared();
        let weights = Vector::from_fn(z.len(), |i, _| -self.labels[i] * sigmoid(-z[i]) / m);
        let grad = self.features.tr_mul(&weights) + self.reg * x;
        (value, grad)
    }
    fn hessian_vec(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        let z = self.margins(x);
        let av = &self.features * v;
        let m = self.m();
        let w = Vector::from_fn(z.len(), |i, _| sigmoid(z[i]) * sigmoid(-z[i]) * av[i] / m);
        Some(self.features.tr_mul(&w) + self.reg * v)
    }
    fn curvature_lower_bound(&self, center: &Vector, radius: f64) -> Option<f64> {
        // σ'(t) is even and decreasing in |t|, and |⟨aᵢ, x⟩| ≤ |⟨aᵢ, c⟩| + ‖aᵢ‖r on the ball.
        let m = self.m();
        let ac = &self.features * center;
        let n = self.dim();
        let mut h = Matrix::zeros(n, n);
        for i in 0..self.features.nrows() {
            let row = self.features.row(i).transpose();
            let t = ac[i].abs() + row.norm() * radius;
            let w = sigmoid(t) * sigmoid(-t) / m;
            h.ger(w, &row, &row, 1.0);
        }
        let lo = linalg::symmetric_eigenvalues(&h)[0] + self.reg;
        Some(lo.max(0.0))
    }
}

/// An objective together with the constants the convergence theory uses.
#[derive(Clone)]
pub struct Problem {
    name: String,
    objective: Arc<dyn Objective>,
    smoothness: f64,
    strong_convexity: f64,
    f_star: Option<f64>,
    f_star_estimated: bool,
    x_star: Option<Vector>,
    hessian_at_opt: Option<Matrix>,
    hessian_lipschitz: Option<f64>,
    diagonal_optimum: Option<(Vector, f64)>,
    quadratic: bool,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("smoothness", &self.smoothness)
            .field("strong_convexity", &self.strong_convexity)
            .field("f_star", &self.f_star)
            .finish()
    }
}

impl Problem {
    /// Wraps a user objective. `smoothness` must be a valid global Lipschitz
    /// constant of the gradient and `strong_convexity` a valid modulus (0 if
    /// merely convex).
    pub fn new(
        name: impl Into<String>,
        objective: Arc<dyn Objective>,
        smoothness: f64,
        strong_convexity: f64,
    ) -> Result<Self> {
        if objective.dim() == 0 {
            return Err(OsgmError::InvalidProblem("dimension must be positive".into()));
        }
        if !(smoothness.is_finite() && smoothness > 0.0) {
            return Err(OsgmError::InvalidProblem(format!("smoothness must be positive, got {smoothness}")));
        }
        if !(strong_convexity >= 0.0 && strong_convexity <= smoothness) {
            return Err(OsgmError::InvalidProblem(format!(
                "strong convexity {strong_convexity} must lie in [0, L = {smoothness}]"
            )));
        }
        Ok(Self {
            name: name.into(),
            objective,
            smoothness,
            strong_convexity,
            f_star: None,
            f_star_estimated: false,
            x_star: None,
            hessian_at_opt: None,
            hessian_lipschitz: None,
            diagonal_optimum: None,
            quadratic: false,
        })
    }

    /// Attaches the optimum and checks it against the oracle.
    pub fn with_optimum(mut self, f_star: Option<f64>, x_star: Option<Vector>, estimated: bool) -> Result<Self> {
        if let Some(xs) = &x_star {
            check_dim(self.dim(), xs.len())?;
            let (fx, gx) = self.objective.value_and_gradient(xs);
            let gtol = 1e-10 * self.smoothness.max(1.0);
            if gx.norm() > gtol {
                return Err(OsgmError::InvalidProblem(format!(
                    "gradient norm {:e} at x* exceeds {gtol:e}",
                    gx.norm()
                )));
            }
            if let Some(fs) = f_star {
                let ftol = 1e-10 * fs.abs().max(1.0);
                if (fx - fs).abs() > ftol {
                    return Err(OsgmError::InvalidProblem(format!("f(x*) = {fx} disagrees with f* = {fs}")));
                }
            }
        }
        self.f_star = f_star;
        self.x_star = x_star;
        self.f_star_estimated = estimated;
        Ok(self)
    }

    pub fn with_hessian_at_opt(mut self, hessian: Matrix, hessian_lipschitz: Option<f64>) -> Result<Self> {
        check_dim(self.dim(), hessian.nrows())?;
        check_dim(self.dim(), hessian.ncols())?;
        self.hessian_at_opt = Some(hessian);
        self.hessian_lipschitz = hessian_lipschitz;
        Ok(self)
    }

    /// Records the best diagonal stepsize `d` and its worst-case condition
    /// number over the whole domain.
    pub fn with_diagonal_optimum(mut self, d: Vector, kappa: f64) -> Result<Self> {
        check_dim(self.dim(), d.len())?;
        self.diagonal_optimum = Some((d, kappa));
        Ok(self)
    }

    fn mark_quadratic(mut self) -> Self {
        self.quadratic = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.objective.dim()
    }
    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.objective
    }
    pub fn value(&self, x: &Vector) -> f64 {
        self.objective.value(x)
    }
    pub fn gradient(&self, x: &Vector) -> Vector {
        self.objective.gradient(x)
    }
    pub fn eval(&self, x: &Vector) -> (f64, Vector) {
        self.objective.value_and_gradient(x)
    }
    pub fn hessian_vec(&self, x: &Vector, v: &Vector) -> Option<Vector> {
        self.objective.hessian_vec(x, v)
    }
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }
    /// κ = L/μ, absent for merely convex problems.
    pub fn condition_number(&self) -> Option<f64> {
        (self.strong_convexity > 0.0).then(|| self.smoothness / self.strong_convexity)
    }
    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }
    pub fn f_star_estimated(&self) -> bool {
        self.f_star_estimated
    }
    pub fn x_star(&self) -> Option<&Vector> {
        self.x_star.as_ref()
    }
    pub fn hessian_at_opt(&self) -> Option<&Matrix> {
        self.hessian_at_opt.as_ref()
    }
    pub fn hessian_lipschitz(&self) -> Option<f64> {
        self.hessian_lipschitz
    }
    pub fn kappa_star_diag(&self) -> Option<f64> {
        self.diagonal_optimum.as_ref().map(|(_, k)| *k)
    }
    pub fn diagonal_optimum(&self) -> Option<&(Vector, f64)> {
        self.diagonal_optimum.as_ref()
    }
    /// True when the Hessian is constant (and equal to `hessian_at_opt`).
    pub fn is_quadratic(&self) -> bool {
        self.quadratic
    }
    /// Inverse of the Hessian at the optimum, when that Hessian is known.
    pub fn inverse_hessian_at_opt(&self) -> Option<Matrix> {
        self.hessian_at_opt.as_ref().and_then(|h| h.clone().try_inverse())
    }
    pub fn gap(&self, f: f64) -> Option<f64> {
        self.f_star.map(|fs| f - fs)
    }
    pub fn check_point(&self, x: &Vector) -> Result<()> {
        check_dim(self.dim(), x.len())
    }
}

/// f(x) = ½⟨x − x*, A(x − x*)⟩.
pub fn make_quadratic(a: Matrix, x_star: Vector) -> Result<Problem> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(OsgmError::InvalidProblem(format!("matrix must be square, got {}x{}", n, a.ncols())));
    }
    if n == 0 {
        return Err(OsgmError::InvalidProblem("matrix must be non-empty".into()));
    }
    check_dim(n, x_star.len())?;
    let scale = a.amax().max(1.0);
    let asym = linalg::asymmetry(&a);
    if asym > 1e-12 * scale {
        return Err(OsgmError::InvalidProblem(format!(
            "matrix is not symmetric (largest |A_ij - A_ji| = {asym:e})"
        )));
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = linalg::symmetric_eigenvalues(&a);
    let (mu, l) = (eig[0], eig[n - 1]);
    if !(mu > 0.0) {
        return Err(OsgmError::InvalidProblem(format!(
            "matrix is not positive definite: eigenvalue {mu:e} <= 0"
        )));
    }
    let diagonal = linalg::is_diagonal(&a);
    let objective = Arc::new(QuadraticObjective { a: a.clone(), x_star: x_star.clone() });
    let mut p = Problem::new(format!("quadratic:{n}"), objective, l, mu)?
        .with_optimum(Some(0.0), Some(x_star), false)?
        .with_hessian_at_opt(a.clone(), Some(0.0))?
        .mark_quadratic();
    if diagonal {
        let d = a.diagonal().map(|v| 1.0 / v);
        p = p.with_diagonal_optimum(d, 1.0)?;
    }
    Ok(p)
}

/// Diagonal quadratic with the given curvatures and minimizer at the origin.
pub fn make_diagonal_quadratic(diag: &[f64]) -> Result<Problem> {
    let n = diag.len();
    make_quadratic(Matrix::from_diagonal(&Vector::from_column_slice(diag)), Vector::zeros(n))
}

/// Eigenvalues 4 sin²(πk / (2(n+1))), k = 1..n, of T_n in ascending order.
pub fn tridiagonal_eigenvalues(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let s = (PI * k as f64 / (2.0 * (n as f64 + 1.0))).sin();
            4.0 * s * s
        })
        .collect()
}

/// Orthonormal eigenvectors of T_n as columns, matching `tridiagonal_eigenvalues`.
pub fn tridiagonal_eigenvectors(n: usize) -> Matrix {
    let c = (2.0 / (n as f64 + 1.0)).sqrt();
    Matrix::from_fn(n, n, |j, k| c * (PI * ((j + 1) * (k + 1)) as f64 / (n as f64 + 1.0)).sin())
}

pub fn tridiagonal_matrix(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// f(x) = ½⟨x, T_n x⟩. No diagonal stepsize improves its conditioning.
pub fn make_tridiagonal(n: usize) -> Result<Problem> {
    if n < 2 {
        return Err(OsgmError::InvalidProblem(format!("tridiagonal problem needs n >= 2, got {n}")));
    }
    let eig = tridiagonal_eigenvalues(n);
    let (mu, l) = (eig[0], eig[n - 1]);
    let p = Problem::new(format!("tridiagonal:{n}"), Arc::new(TridiagonalObjective { n }), l, mu)?
        .with_optimum(Some(0.0), Some(Vector::zeros(n)), false)?
        .with_hessian_at_opt(tridiagonal_matrix(n), Some(0.0))?
        .with_diagonal_optimum(Vector::from_element(n, 1.0 / l), l / mu)?
        .mark_quadratic();
    Ok(p)
}

/// The diagonal quadratic sharing T_n's spectrum (T_n rotated into its eigenbasis).
pub fn make_tridiagonal_twin(n: usize) -> Result<Problem> {
    if n < 2 {
        return Err(OsgmError::InvalidProblem(format!("tridiagonal problem needs n >= 2, got {n}")));
    }
    let mut p = make_diagonal_quadratic(&tridiagonal_eigenvalues(n))?;
    p.name = format!("tridiagonal-twin:{n}");
    Ok(p)
}

/// Two quadratic pieces glued along x₁ = 0; the boundary belongs to the x₁ ≥ 0 piece.
pub fn make_piecewise_quadratic() -> Result<Problem> {
    // Per-coordinate curvature ranges are [0.5, 1.5] and [1, 1]; the best
    // diagonal stepsize takes the reciprocal upper ends and leaves κ = 3.
    Problem::new("piecewise2d", Arc::new(PiecewiseQuadratic), 1.5, 0.5)?
        .with_optimum(Some(0.0), Some(Vector::zeros(2)), false)?
        .with_diagonal_optimum(Vector::from_vec(vec![1.0 / 1.5, 1.0]), 3.0)
}

/// Region-wise inverse Hessian of the piecewise quadratic at `x`.
pub fn piecewise_inverse_hessian(x: &Vector) -> Vector {
    if x[0] >= 0.0 {
        Vector::from_vec(vec![2.0, 1.0])
    } else {
        Vector::from_vec(vec![1.0 / 1.5, 1.0])
    }
}

const PRESOLVE_MAX_ITERS: usize = 2_000_000;
const PRESOLVE_GRAD_TOL: f64 = 1e-12;

/// Minimizes the logistic loss by gradient descent with stepsize 1/L from `start`
/// until the gradient norm drops to 1e-12.
pub fn logistic_presolve(features: &Matrix, labels: &Vector, reg: f64, start: &Vector) -> Result<(f64, Vector)> {
    let obj = LogisticObjective { features: features.clone(), labels: labels.clone(), reg };
    let l = logistic_smoothness(features, reg);
    let mut x = start.clone();
    for _ in 0..PRESOLVE_MAX_ITERS {
        let (f, g) = obj.value_and_gradient(&x);
        if g.norm() <= PRESOLVE_GRAD_TOL {
            return Ok((f, x));
        }
        x -= g / l;
    }
    Err(OsgmError::InvalidProblem(
        "logistic pre-solve did not reach gradient norm 1e-12; the minimizer may not exist".into(),
    ))
}

fn logistic_smoothness(features: &Matrix, reg: f64) -> f64 {
    let m = features.nrows() as f64;
    let ata = features.tr_mul(features);
    let eig = linalg::symmetric_eigenvalues(&ata);
    eig[eig.len() - 1] / (4.0 * m) + reg
}

/// Regularized logistic regression. f* comes from an internal pre-solve and is
/// flagged as estimated.
pub fn make_logistic(features: Matrix, labels: Vector, reg: f64) -> Result<Problem> {
    let (m, n) = features.shape();
    if m == 0 || n == 0 {
        return Err(OsgmError::InvalidProblem("logistic regression needs m, n >= 1".into()));
    }
    check_dim(m, labels.len())?;
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(OsgmError::InvalidProblem(format!("label {bad} is not in {{-1, +1}}")));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(OsgmError::InvalidProblem(format!("regularization must be nonnegative, got {reg}")));
    }
    let l = logistic_smoothness(&features, reg);
    let (f_star, x_star) = logistic_presolve(&features, &labels, reg, &Vector::zeros(n))?;
    let obj = Arc::new(LogisticObjective { features, labels, reg });
    Problem::new(format!("logistic:{m}x{n}"), obj, l, reg)?.with_optimum(Some(f_star), Some(x_star), true)
}

/// Random SPD matrix Q diag(λ) Qᵀ with λ spread log-uniformly over [1, cond]
/// and both ends attained.
pub fn random_spd(n: usize, cond: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = linalg::random_orthogonal(n, &mut rng);
    let lambdas = Vector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            cond.powf(i as f64 / (n - 1) as f64)
        }
    });
    let a = &q * Matrix::from_diagonal(&lambdas) * q.transpose();
    (&a + a.transpose()) * 0.5
}

pub fn make_random_spd(n: usize, cond: f64, seed: u64) -> Result<Problem> {
    if n == 0 || !(cond >= 1.0) {
        return Err(OsgmError::InvalidProblem(format!("random SPD needs n >= 1 and cond >= 1, got {n}, {cond}")));
    }
    let a = random_spd(n, cond, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let x_star = linalg::gaussian_vector(n, &mut rng);
    let mut p = make_quadratic(a, x_star)?;
    p.name = format!("spd:{n}:{cond}");
    Ok(p)
}

/// Random logistic instance with noisy labels. With `reg = 0` the rows ±e_j
/// are appended with both labels so that the loss is coercive and a
/// minimizer exists.
pub fn random_logistic(m: usize, n: usize, reg: f64, seed: u64) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = linalg::gaussian_matrix(m, n, &mut rng);
    let w = linalg::gaussian_vector(n, &mut rng);
    let noise = linalg::gaussian_vector(m, &mut rng);
    let mut labels: Vec<f64> = (0..m)
        .map(|i| if a.row(i).transpose().dot(&w) + 2.0 * noise[i] >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    let features = if reg == 0.0 {
        let mut f = Matrix::zeros(m + 2 * n, n);
        f.rows_mut(0, m).copy_from(&a);
        for j in 0..n {
            f[(m + 2 * j, j)] = 1.0;
            f[(m + 2 * j + 1, j)] = 1.0;
            labels.push(1.0);
            labels.push(-1.0);
        }
        f
    } else {
        a
    };
    let mut p = make_logistic(features, Vector::from_vec(labels), reg)?;
    p.name = format!("logistic:{m}:{n}:{reg}");
    Ok(p)
}

/// Upper bound Δ on the distance from the f(x¹)-sublevel set to the minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SublevelRadius {
    pub value: f64,
    /// True when `value` is the exact maximum rather than an upper bound.
    pub exact: bool,
}

pub fn sublevel_radius(problem: &Problem, x1: &Vector) -> Result<SublevelRadius> {
    problem.check_point(x1)?;
    sublevel_radius_at(problem, problem.value(x1))
}

/// [`sublevel_radius`] for a start point with known value `f1`.
pub fn sublevel_radius_at(problem: &Problem, f1: f64) -> Result<SublevelRadius> {
    let f_star = problem.f_star().ok_or(OsgmError::MissingOptimalValue)?;
    let x_star = problem.x_star().ok_or(OsgmError::MissingOptimalPoint)?;
    let gap = (f1 - f_star).max(0.0);
    let mu = problem.strong_convexity();
    if mu > 0.0 {
        return Ok(SublevelRadius { value: (2.0 * gap / mu).sqrt(), exact: problem.is_quadratic() });
    }
    // Convex case: along any ray from x*, the second derivative at distance s
    // is at least m(s), the curvature bound on B(x*, s), which decreases in s.
    // Hence f − f* ≥ g(R) = ∫₀ᴿ (R − s) m(s) ds at distance R, and the
    // sublevel set lies within the first R with g(R) ≥ gap. The integral is
    // accumulated with right-endpoint values, which keeps it a lower bound.
    let obj = problem.objective();
    if gap == 0.0 {
        return Ok(SublevelRadius { value: 0.0, exact: false });
    }
    let scale = (2.0 * gap / problem.smoothness()).sqrt();
    let (mut r, mut slope, mut g) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..200_000 {
        let h = (1e-3 * scale).max(0.01 * r);
        let Some(m_next) = obj.curvature_lower_bound(x_star, r + h) else { break };
        g += h * slope;
        r += h;
        slope += h * m_next;
        if g >= gap {
            return Ok(SublevelRadius { value: r, exact: false });
        }
        if slope == 0.0 && r > 1e6 * scale {
            break;
        }
    }
    Err(OsgmError::Undefined("Δ undefined without strong convexity; supply a bound".into()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticFile {
    #[allow(dead_code)]
    kind: String,
    dim: Option<usize>,
    matrix: Vec<Vec<f64>>,
    x_star: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TridiagonalFile {
    #[allow(dead_code)]
    kind: String,
    dim: Option<usize>,
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PiecewiseFile {
    #[allow(dead_code)]
    kind: String,
    dim: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogisticFile {
    #[allow(dead_code)]
    kind: String,
    dim: Option<usize>,
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    reg: f64,
}

fn typed<'a, T: Deserialize<'a>>(value: &'a serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value)
        .map_err(|e| OsgmError::Parse(format!("field `{}`: {}", e.path(), e.inner())))
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(OsgmError::Parse(format!(
            "field `{what}`: row {i} has {} entries, expected {c}",
            row.len()
        )));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn check_declared_dim(declared: Option<usize>, actual: usize) -> Result<()> {
    match declared {
        Some(d) => check_dim(d, actual),
        None => Ok(()),
    }
}

/// Builds a problem from the JSON description used by problem files.
pub fn parse_problem_json(text: &str) -> Result<Problem> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| OsgmError::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    let kind = value
        .get("kind")
        .ok_or_else(|| OsgmError::Parse("missing field `kind`".into()))?
        .as_str()
        .ok_or_else(|| OsgmError::Parse("field `kind`: expected a string".into()))?;
    match kind {
        "quadratic" => {
            let f: QuadraticFile = typed(&value)?;
            let a = rows_to_matrix(&f.matrix, "matrix")?;
            check_declared_dim(f.dim, a.nrows())?;
            make_quadratic(a, Vector::from_vec(f.x_star))
        }
        "tridiagonal" => {
            let f: TridiagonalFile = typed(&value)?;
            check_declared_dim(f.dim, f.n)?;
            make_tridiagonal(f.n)
        }
        "piecewise2d" => {
            let f: PiecewiseFile = typed(&value)?;
            check_declared_dim(f.dim, 2)?;
            make_piecewise_quadratic()
        }
        "logistic" => {
            let f: LogisticFile = typed(&value)?;
            let a = rows_to_matrix(&f.features, "features")?;
            check_declared_dim(f.dim, a.ncols())?;
            make_logistic(a, Vector::from_vec(f.labels), f.reg)
        }
        other => Err(OsgmError::Parse(format!(
            "unknown kind `{other}` (expected quadratic, tridiagonal, piecewise2d or logistic)"
        ))),
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<Problem> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_problem_json(&text)
}

fn parse_field<T: std::str::FromStr>(spec: &str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| OsgmError::Parse(format!("problem `{spec}`: cannot parse `{field}`")))
}

/// Resolves a built-in problem name or a problem file path.
///
/// Names: `tridiagonal:N`, `tridiagonal-twin:N`, `diagonal:N` (curvatures
/// 1..N), `piecewise2d`, `spd:N:COND` and `logistic:M:N:REG` (random
/// instances drawn from `seed`).
pub fn resolve_problem(spec: &str, seed: u64) -> Result<Problem> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["tridiagonal", n] => make_tridiagonal(parse_field(spec, n)?),
        ["tridiagonal-twin", n] => make_tridiagonal_twin(parse_field(spec, n)?),
        ["diagonal", n] => {
            let n: usize = parse_field(spec, n)?;
            let mut p = make_diagonal_quadratic(&(1..=n).map(|i| i as f64).collect::<Vec<_>>())?;
            p.name = spec.to_string();
            Ok(p)
        }
        ["piecewise2d"] => make_piecewise_quadratic(),
        ["spd", n, cond] => make_random_spd(parse_field(spec, n)?, parse_field(spec, cond)?, seed),
        ["logistic", m, n, reg] => {
            random_logistic(parse_field(spec, m)?, parse_field(spec, n)?, parse_field(spec, reg)?, seed)
        }
        _ if Path::new(spec).exists() => load_problem(spec),
        _ => Err(OsgmError::Parse(format!("unknown problem `{spec}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_quadratic_oracle() {
        let p = make_quadratic(Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let (f, g) = p.eval(&Vector::from_vec(vec![3.0, 4.0]));
        assert_eq!(f, 12.5);
        assert_eq!(g, Vector::from_vec(vec![3.0, 4.0]));
    }

    #[test]
    fn diagonal_quadratic_constants() {
        let p = make_diagonal_quadratic(&[1.0, 4.0]).unwrap();
        assert_eq!(p.smoothness(), 4.0);
        assert_eq!(p.strong_convexity(), 1.0);
        assert_eq!(p.condition_number(), Some(4.0));
        assert_eq!(p.kappa_star_diag(), Some(1.0));
    }

    #[test]
    fn quadratic_rejects_bad_matrices() {
        let nonsym = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(make_quadratic(nonsym, Vector::zeros(2)).is_err());
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let err = make_quadratic(indefinite, Vector::zeros(2)).unwrap_err().to_string();
        assert!(err.contains("-5e-1"), "{err}");
    }

    #[test]
    fn tridiagonal_small_spectra() {
        let e3 = tridiagonal_eigenvalues(3);
        assert_relative_eq!(e3[0], 0.585786437626905, epsilon = 1e-12);
        assert_relative_eq!(e3[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(e3[2], 3.414213562373095, epsilon = 1e-12);
        let p = make_tridiagonal(2).unwrap();
        assert_relative_eq!(p.strong_convexity(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.smoothness(), 3.0, epsilon = 1e-14);
        assert!(make_tridiagonal(1).is_err());
    }

    #[test]
    fn tridiagonal_eigenvectors_diagonalize() {
        let n = 12;
        let q = tridiagonal_eigenvectors(n);
        let d = q.transpose() * tridiagonal_matrix(n) * &q;
        let eig = tridiagonal_eigenvalues(n);
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { eig[i] } else { 0.0 };
                assert!((d[(i, j)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn piecewise_examples() {
        let p = make_piecewise_quadratic().unwrap();
        let cases = [([2.0, 2.0], 3.0, [1.0, 2.0]), ([-2.0, 0.0], 3.0, [-3.0, 0.0]), ([0.0, 1.0], 0.5, [0.0, 1.0])];
        for (x, f, g) in cases {
            let (fv, gv) = p.eval(&Vector::from_column_slice(&x));
            assert_eq!(fv, f);
            assert_eq!(gv, Vector::from_column_slice(&g));
        }
    }

    #[test]
    fn logistic_zero_and_separable_limit() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = Vector::from_vec(vec![1.0, -1.0, 1.0]);
        let p = make_logistic(a, y, 0.1).unwrap();
        assert_relative_eq!(p.value(&Vector::zeros(2)), 2f64.ln(), epsilon = 1e-15);
        assert!(p.f_star_estimated());

        let single = LogisticObjective {
            features: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            labels: Vector::from_vec(vec![1.0]),
            reg: 0.0,
        };
        let far = single.value(&Vector::from_vec(vec![50.0, 0.0]));
        assert!(far < 1e-20);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let a = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(make_logistic(a.clone(), Vector::from_vec(vec![1.0, 0.0]), 0.1).is_err());
        assert!(make_logistic(a, Vector::from_vec(vec![1.0]), 0.1).is_err());
    }

    #[test]
    fn sublevel_radius_examples() {
        let p = make_quadratic(Matrix::identity(3, 3), Vector::zeros(3)).unwrap();
        let x1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let r = sublevel_radius(&p, &x1).unwrap();
        assert_eq!(r, SublevelRadius { value: 1.0, exact: true });

        let p = make_diagonal_quadratic(&[1.0, 4.0]).unwrap();
        let x1 = Vector::from_vec(vec![0.0, 1.0]);
        assert_relative_eq!(sublevel_radius(&p, &x1).unwrap().value, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn problem_files() {
        let p = parse_problem_json(r#"{"kind":"quadratic","matrix":[[2,0],[0,1]],"x_star":[0,0]}"#).unwrap();
        assert_eq!((p.smoothness(), p.strong_convexity()), (2.0, 1.0));

        let err = parse_problem_json(r#"{"kind":"tridiagonal","n":8,"dim":"eight"}"#).unwrap_err();
        assert!(err.to_string().contains("dim"), "{err}");
        let err = parse_problem_json(r#"{"kind":"tridiagonal","n":8,"dim":9}"#).unwrap_err();
        assert!(matches!(err, OsgmError::DimensionMismatch { .. }));
        let err = parse_problem_json(r#"{"kind":"cubic"}"#).unwrap_err();
        assert!(err.to_string().contains("cubic"));
        let err = parse_problem_json("{\n\"kind\": ").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn resolve_names() {
        assert_eq!(resolve_problem("tridiagonal:7", 0).unwrap().dim(), 7);
        assert_eq!(resolve_problem("diagonal:5", 0).unwrap().smoothness(), 5.0);
        assert_eq!(resolve_problem("piecewise2d", 0).unwrap().dim(), 2);
        let a = resolve_problem("spd:6:30", 3).unwrap();
        let b = resolve_problem("spd:6:30", 3).unwrap();
        assert_eq!(a.hessian_at_opt(), b.hessian_at_opt());
        assert_relative_eq!(a.smoothness() / a.strong_convexity(), 30.0, max_relative = 1e-10);
        assert!(resolve_problem("nope:1", 0).is_err());
    }
}
