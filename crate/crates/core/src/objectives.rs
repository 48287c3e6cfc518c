//! Problem model for the linearly constrained separable program
//! `min f(x) + g(y)  s.t.  Ax + By = b`, and the two subproblem solvers used
//! by the alternating scheme.
//!
//! Subproblems are solved exactly, by one of two strategies:
//!
//! - QUADRATIC: the objective piece is quadratic, so the regularized
//!   subproblem is an SPD linear system solved directly (with one step of
//!   iterative refinement).
//! - PROX: the objective piece is prox-capable and the coupling matrix has a
//!   scaled-identity Gram (`AᵀA = νI`) together with a scaled-identity
//!   proximal weight, so the subproblem collapses to a single prox call.
//!
//! Anything else fails fast with a configuration error: the certification
//! layer assumes exact subproblem optimality, so no inner iterative solver is
//! offered. Every solve returns an explicit subgradient witness so downstream
//! checks never have to re-derive one.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::PsdOperator;

/// Max-norm tolerance for detecting `AᵀA = νI` at problem construction.
const SCALED_IDENTITY_TOL: f64 = 1e-10;

/// KKT residual allowed for a declared known solution.
const KNOWN_SOLUTION_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("declared known solution has KKT residual {residual:.3e} > {KNOWN_SOLUTION_TOL:.0e}")]
    KnownSolutionInvalid { residual: f64 },
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
    #[error("invalid problem JSON: {0}")]
    Json(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("the {side}-subproblem normal equations are singular")]
    SingularSystem { side: char },
    #[error("prox strategy inapplicable for the {side}-subproblem: {reason}")]
    StrategyInapplicable { side: char, reason: String },
    #[error("the {side}-subproblem has no quadratic term; the minimizer is not unique")]
    NoCurvature { side: char },
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
}

/// A convex function with an exactly evaluable proximal map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ProxFunction {
    /// `λ‖v‖₁`, `λ ≥ 0`.
    L1 { lambda: f64 },
    /// `(c/2)‖v − center‖²`, `c ≥ 0`.
    SquaredL2 { weight: f64, center: DVector<f64> },
    /// Indicator of the box `[lower, upper]` (componentwise).
    Box { lower: DVector<f64>, upper: DVector<f64> },
    Zero,
}

impl ProxFunction {
    pub fn value(&self, v: &DVector<f64>) -> f64 {
        match self {
            ProxFunction::L1 { lambda } => lambda * v.iter().map(|x| x.abs()).sum::<f64>(),
            ProxFunction::SquaredL2 { weight, center } => 0.5 * weight * (v - center).norm_squared(),
            ProxFunction::Box { lower, upper } => {
                let inside = v
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .all(|(x, (lo, hi))| *x >= lo - 1e-12 && *x <= hi + 1e-12);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxFunction::Zero => 0.0,
        }
    }

    /// `prox_{t f}(v) = argmin_u f(u) + ‖u − v‖²/(2t)`, `t > 0`.
    pub fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        assert!(t > 0.0, "prox step must be positive");
        match self {
            ProxFunction::L1 { lambda } => {
                let k = lambda * t;
                v.map(|x| {
                    if x > k {
                        x - k
                    } else if x < -k {
                        x + k
                    } else {
                        0.0
                    }
                })
            }
            ProxFunction::SquaredL2 { weight, center } => {
                // argmin (c/2)‖u−z‖² + ‖u−v‖²/(2t)  ⇒  u = (v + t c z)/(1 + t c)
                (v + center * (t * weight)) / (1.0 + t * weight)
            }
            ProxFunction::Box { lower, upper } => DVector::from_fn(v.len(), |i, _| {
                v[i].max(lower[i]).min(upper[i])
            }),
            ProxFunction::Zero => v.clone(),
        }
    }

    /// Euclidean distance from `s` to the subdifferential at `u`.
    ///
    /// Each supported kind has a componentwise (or exact-gradient)
    /// characterization, so the distance decomposes.
    pub fn subdiff_distance(&self, u: &DVector<f64>, s: &DVector<f64>) -> f64 {
        match self {
            ProxFunction::L1 { lambda } => u
                .iter()
                .zip(s.iter())
                .map(|(ui, si)| {
                    let d = if *ui > 0.0 {
                        si - lambda
                    } else if *ui < 0.0 {
                        si + lambda
                    } else {
                        (si.abs() - lambda).max(0.0)
                    };
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            ProxFunction::SquaredL2 { weight, center } => (s - (u - center) * *weight).norm(),
            ProxFunction::Box { lower, upper } => u
                .iter()
                .zip(s.iter())
                .enumerate()
                .map(|(i, (ui, si))| {
                    let at_lower = (ui - lower[i]).abs() <= 1e-12;
                    let at_upper = (ui - upper[i]).abs() <= 1e-12;
                    let d = match (at_lower, at_upper) {
                        (true, true) => 0.0,               // pinned component
                        (true, false) => si.max(0.0),      // normals are ≤ 0
                        (false, true) => (-si).max(0.0),   // normals are ≥ 0
                        (false, false) => *si,             // interior: {0}
                    };
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            ProxFunction::Zero => s.norm(),
        }
    }

    /// Dimension pinned by the parameters, when any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ProxFunction::L1 { .. } | ProxFunction::Zero => None,
            ProxFunction::SquaredL2 { center, .. } => Some(center.len()),
            ProxFunction::Box { lower, .. } => Some(lower.len()),
        }
    }
}

/// `½ xᵀPx + qᵀx + r` with PSD `P`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticFunction {
    pub p: PsdOperator,
    pub q: DVector<f64>,
    pub r: f64,
}

impl QuadraticFunction {
    pub fn new(p: PsdOperator, q: DVector<f64>, r: f64) -> Self {
        assert_eq!(p.dim(), q.len(), "quadratic operator and linear term must agree");
        QuadraticFunction { p, q, r }
    }

    pub fn value(&self, v: &DVector<f64>) -> f64 {
        0.5 * self.p.quad_form(v).expect("dimension checked at construction")
            + self.q.dot(v)
            + self.r
    }

    pub fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        self.p.apply(v).expect("dimension checked at construction") + &self.q
    }
}

/// One side of the separable objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Objective {
    Quadratic(QuadraticFunction),
    Prox(ProxFunction),
}

impl Objective {
    pub fn value(&self, v: &DVector<f64>) -> f64 {
        match self {
            Objective::Prox(f) => f.value(v),
            Objective::Quadratic(f) => f.value(v),
        }
    }

    pub fn subdiff_distance(&self, u: &DVector<f64>, s: &DVector<f64>) -> f64 {
        match self {
            Objective::Prox(f) => f.subdiff_distance(u, s),
            Objective::Quadratic(f) => (s - f.gradient(u)).norm(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Objective::Prox(f) => f.dim(),
            Objective::Quadratic(f) => Some(f.p.dim()),
        }
    }
}

/// Optional primal-dual solution attached to synthetic instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnownSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub gamma: DVector<f64>,
}

/// `min f(x) + g(y)  s.t.  Ax + By = b` with `A ∈ ℝ^{m×n}`, `B ∈ ℝ^{m×p}`.
#[derive(Debug, Clone)]
pub struct SeparableProblem {
    pub f: Objective,
    pub g: Objective,
    pub a: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub known_solution: Option<KnownSolution>,
    /// `ν` with `AᵀA = νI`, when that holds to tolerance.
    ata_scaled_identity: Option<f64>,
    /// `ν` with `BᵀB = νI`, when that holds to tolerance.
    btb_scaled_identity: Option<f64>,
}

fn detect_scaled_identity(m: &DMatrix<f64>) -> Option<f64> {
    let gram = m.transpose() * m;
    let n = gram.nrows();
    if n == 0 {
        return Some(0.0);
    }
    let nu = gram.diagonal().sum() / n as f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { nu } else { 0.0 };
            if (gram[(i, j)] - target).abs() > SCALED_IDENTITY_TOL {
                return None;
            }
        }
    }
    Some(nu)
}

impl SeparableProblem {
    pub fn new(
        f: Objective,
        g: Objective,
        a: DMatrix<f64>,
        b_mat: DMatrix<f64>,
        rhs: DVector<f64>,
        known_solution: Option<KnownSolution>,
    ) -> Result<Self, ProblemError> {
        let (m, n) = (a.nrows(), a.ncols());
        let p = b_mat.ncols();
        if b_mat.nrows() != m {
            return Err(ProblemError::Dimension { what: "B rows", expected: m, got: b_mat.nrows() });
        }
        if rhs.len() != m {
            return Err(ProblemError::Dimension { what: "b", expected: m, got: rhs.len() });
        }
        if let Some(fd) = f.dim() {
            if fd != n {
                return Err(ProblemError::Dimension { what: "f", expected: n, got: fd });
            }
        }
        if let Some(gd) = g.dim() {
            if gd != p {
                return Err(ProblemError::Dimension { what: "g", expected: p, got: gd });
            }
        }
        if let Some(sol) = &known_solution {
            for (what, got, expected) in [
                ("known x", sol.x.len(), n),
                ("known y", sol.y.len(), p),
                ("known gamma", sol.gamma.len(), m),
            ] {
                if got != expected {
                    return Err(ProblemError::Dimension { what, expected, got });
                }
            }
        }
        let problem = SeparableProblem {
            ata_scaled_identity: detect_scaled_identity(&a),
            btb_scaled_identity: detect_scaled_identity(&b_mat),
            f,
            g,
            a,
            b_mat,
            rhs,
            known_solution,
        };
        if let Some(sol) = &problem.known_solution {
            let residual = problem.kkt_residual(&sol.x, &sol.y, &sol.gamma);
            if residual > KNOWN_SOLUTION_TOL {
                return Err(ProblemError::KnownSolutionInvalid { residual });
            }
        }
        Ok(problem)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.ncols(), self.b_mat.ncols(), self.a.nrows())
    }

    pub fn ata_scaled_identity(&self) -> Option<f64> {
        self.ata_scaled_identity
    }

    pub fn btb_scaled_identity(&self) -> Option<f64> {
        self.btb_scaled_identity
    }

    /// Max over the three KKT residuals at `(x, y, γ)`: distance of `Aᵀγ`
    /// from `∂f(x)`, distance of `Bᵀγ` from `∂g(y)`, and `‖Ax + By − b‖`.
    pub fn kkt_residual(&self, x: &DVector<f64>, y: &DVector<f64>, gamma: &DVector<f64>) -> f64 {
        let df = self.f.subdiff_distance(x, &(self.a.transpose() * gamma));
        let dg = self.g.subdiff_distance(y, &(self.b_mat.transpose() * gamma));
        let feas = (&self.a * x + &self.b_mat * y - &self.rhs).norm();
        df.max(dg).max(feas)
    }
}

/// SPD solve with one refinement pass; the factorizations are cheap at the
/// dimensions this library targets and refinement keeps stationarity
/// residuals near machine precision.
struct SpdSolver {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl SpdSolver {
    fn new(matrix: DMatrix<f64>, side: char) -> Result<Self, SolveError> {
        let chol = Cholesky::new(matrix.clone()).ok_or(SolveError::SingularSystem { side })?;
        Ok(SpdSolver { matrix, chol })
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(rhs);
        let residual = rhs - &self.matrix * &x;
        x += self.chol.solve(&residual);
        x
    }
}

enum Strategy {
    Quadratic { solver: SpdSolver },
    Prox { step: f64 },
}

/// The x-subproblem
///
/// ```text
/// min_x f(x) − ⟨γ̂, Ax⟩ + (β₁/2)‖Ax + B y_prev − b‖² + ((1+μ)/2)‖x − x̂‖²_R
/// ```
///
/// prepared once per cycle (the quadratic part depends only on `β₁` and `μ`)
/// and solved once per iteration.
pub struct XSubproblem<'a> {
    problem: &'a SeparableProblem,
    beta1: f64,
    mu: f64,
    r: &'a PsdOperator,
    strategy: Strategy,
}

impl<'a> XSubproblem<'a> {
    pub fn prepare(
        problem: &'a SeparableProblem,
        beta1: f64,
        mu: f64,
        r: &'a PsdOperator,
    ) -> Result<Self, SolveError> {
        assert!(beta1 > 0.0 && mu > 0.0, "x-subproblem needs positive beta1 and mu");
        let (n, _, _) = problem.dims();
        let strategy = match &problem.f {
            Objective::Quadratic(quad) => {
                let mut h = quad.p.to_dense();
                h += problem.a.transpose() * &problem.a * beta1;
                h += r.to_dense() * (1.0 + mu);
                Strategy::Quadratic { solver: SpdSolver::new(h, 'x')? }
            }
            Objective::Prox(_) => {
                let nu = problem.ata_scaled_identity().ok_or_else(|| {
                    SolveError::StrategyInapplicable {
                        side: 'x',
                        reason: "f is prox-capable but AᵀA is not a scaled identity".into(),
                    }
                })?;
                let r_scale = r.as_scaled_identity().ok_or_else(|| {
                    SolveError::StrategyInapplicable {
                        side: 'x',
                        reason: "f is prox-capable but R is not a scaled identity".into(),
                    }
                })?;
                let curvature = beta1 * nu + (1.0 + mu) * r_scale;
                if curvature <= 0.0 {
                    return Err(SolveError::NoCurvature { side: 'x' });
                }
                Strategy::Prox { step: 1.0 / curvature }
            }
        };
        let _ = n;
        Ok(XSubproblem { problem, beta1, mu, r, strategy })
    }

    /// Returns the minimizer and a witness in `∂f(x_k)`.
    pub fn solve(
        &self,
        gamma_hat: &DVector<f64>,
        y_prev: &DVector<f64>,
        x_hat: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), SolveError> {
        let a = &self.problem.a;
        let offset = &self.problem.b_mat * y_prev - &self.problem.rhs;
        match &self.strategy {
            Strategy::Quadratic { solver } => {
                let quad = match &self.problem.f {
                    Objective::Quadratic(q) => q,
                    Objective::Prox(_) => unreachable!("strategy fixed at preparation"),
                };
                let rhs = a.transpose() * gamma_hat
                    - a.transpose() * &offset * self.beta1
                    - &quad.q
                    + self.r.apply(x_hat)? * (1.0 + self.mu);
                let x = solver.solve(&rhs);
                let witness = quad.gradient(&x);
                Ok((x, witness))
            }
            Strategy::Prox { step } => {
                let prox_f = match &self.problem.f {
                    Objective::Prox(f) => f,
                    Objective::Quadratic(_) => unreachable!("strategy fixed at preparation"),
                };
                let r_scale = self.r.as_scaled_identity().expect("checked at preparation");
                let w = a.transpose() * gamma_hat
                    - a.transpose() * &offset * self.beta1
                    + x_hat * ((1.0 + self.mu) * r_scale);
                let center = &w * *step;
                let x = prox_f.prox(&center, *step);
                let witness = (&center - &x) / *step;
                Ok((x, witness))
            }
        }
    }
}

/// The y-subproblem
///
/// ```text
/// min_y g(y) − ⟨u, By⟩ + (β₂/2)[‖Ax_k + By − b‖² + α‖B(y − ŷ)‖² + ‖y − ŷ‖²_S/β]
/// ```
pub struct YSubproblem<'a> {
    problem: &'a SeparableProblem,
    beta2: f64,
    alpha: f64,
    beta: f64,
    s: &'a PsdOperator,
    strategy: Strategy,
}

impl<'a> YSubproblem<'a> {
    pub fn prepare(
        problem: &'a SeparableProblem,
        beta2: f64,
        alpha: f64,
        beta: f64,
        s: &'a PsdOperator,
    ) -> Result<Self, SolveError> {
        assert!(beta2 > 0.0 && beta > 0.0 && alpha >= 0.0, "invalid y-subproblem constants");
        let strategy = match &problem.g {
            Objective::Quadratic(quad) => {
                let mut h = quad.p.to_dense();
                h += problem.b_mat.transpose() * &problem.b_mat * (beta2 * (1.0 + alpha));
                h += s.to_dense() * (beta2 / beta);
                Strategy::Quadratic { solver: SpdSolver::new(h, 'y')? }
            }
            Objective::Prox(_) => {
                let nu = problem.btb_scaled_identity().ok_or_else(|| {
                    SolveError::StrategyInapplicable {
                        side: 'y',
                        reason: "g is prox-capable but BᵀB is not a scaled identity".into(),
                    }
                })?;
                let s_scale = s.as_scaled_identity().ok_or_else(|| {
                    SolveError::StrategyInapplicable {
                        side: 'y',
                        reason: "g is prox-capable but S is not a scaled identity".into(),
                    }
                })?;
                let curvature = beta2 * (1.0 + alpha) * nu + (beta2 / beta) * s_scale;
                if curvature <= 0.0 {
                    return Err(SolveError::NoCurvature { side: 'y' });
                }
                Strategy::Prox { step: 1.0 / curvature }
            }
        };
        Ok(YSubproblem { problem, beta2, alpha, beta, s, strategy })
    }

    /// Returns the minimizer and a witness in `∂g(y_k)`.
    pub fn solve(
        &self,
        u: &DVector<f64>,
        x_k: &DVector<f64>,
        y_hat: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>), SolveError> {
        let b = &self.problem.b_mat;
        let offset = &self.problem.a * x_k - &self.problem.rhs;
        match &self.strategy {
            Strategy::Quadratic { solver } => {
                let quad = match &self.problem.g {
                    Objective::Quadratic(q) => q,
                    Objective::Prox(_) => unreachable!("strategy fixed at preparation"),
                };
                let rhs = b.transpose() * u - b.transpose() * &offset * self.beta2 - &quad.q
                    + b.transpose() * (b * y_hat) * (self.beta2 * self.alpha)
                    + self.s.apply(y_hat)? * (self.beta2 / self.beta);
                let y = solver.solve(&rhs);
                let witness = quad.gradient(&y);
                Ok((y, witness))
            }
            Strategy::Prox { step } => {
                let prox_g = match &self.problem.g {
                    Objective::Prox(g) => g,
                    Objective::Quadratic(_) => unreachable!("strategy fixed at preparation"),
                };
                let nu = self.problem.btb_scaled_identity().expect("checked at preparation");
                let s_scale = self.s.as_scaled_identity().expect("checked at preparation");
                let w = b.transpose() * u - b.transpose() * &offset * self.beta2
                    + y_hat * (self.beta2 * self.alpha * nu)
                    + y_hat * ((self.beta2 / self.beta) * s_scale);
                let center = &w * *step;
                let y = prox_g.prox(&center, *step);
                let witness = (&center - &y) / *step;
                Ok((y, witness))
            }
        }
    }
}

/// One-shot form of [`XSubproblem`]; prepares and solves in a single call.
#[allow(clippy::too_many_arguments)]
pub fn solve_x_subproblem(
    problem: &SeparableProblem,
    gamma_hat: &DVector<f64>,
    y_prev: &DVector<f64>,
    x_hat: &DVector<f64>,
    beta1: f64,
    mu: f64,
    r: &PsdOperator,
) -> Result<(DVector<f64>, DVector<f64>), SolveError> {
    XSubproblem::prepare(problem, beta1, mu, r)?.solve(gamma_hat, y_prev, x_hat)
}

/// One-shot form of [`YSubproblem`].
#[allow(clippy::too_many_arguments)]
pub fn solve_y_subproblem(
    problem: &SeparableProblem,
    u: &DVector<f64>,
    x_k: &DVector<f64>,
    y_hat: &DVector<f64>,
    beta2: f64,
    alpha: f64,
    beta: f64,
    s: &PsdOperator,
) -> Result<(DVector<f64>, DVector<f64>), SolveError> {
    YSubproblem::prepare(problem, beta2, alpha, beta, s)?.solve(u, x_k, y_hat)
}

/// Stationarity residual of the x-subproblem at `(x, witness)`; exposed for
/// tests and the certifier.
#[allow(clippy::too_many_arguments)]
pub fn x_stationarity_residual(
    problem: &SeparableProblem,
    x: &DVector<f64>,
    witness: &DVector<f64>,
    gamma_hat: &DVector<f64>,
    y_prev: &DVector<f64>,
    x_hat: &DVector<f64>,
    beta1: f64,
    mu: f64,
    r: &PsdOperator,
) -> f64 {
    let grad = witness - problem.a.transpose() * gamma_hat
        + problem.a.transpose() * (&problem.a * x + &problem.b_mat * y_prev - &problem.rhs) * beta1
        + r.apply(&(x - x_hat)).expect("dims") * (1.0 + mu);
    grad.norm()
}

/// Stationarity residual of the y-subproblem at `(y, witness)`.
#[allow(clippy::too_many_arguments)]
pub fn y_stationarity_residual(
    problem: &SeparableProblem,
    y: &DVector<f64>,
    witness: &DVector<f64>,
    u: &DVector<f64>,
    x_k: &DVector<f64>,
    y_hat: &DVector<f64>,
    beta2: f64,
    alpha: f64,
    beta: f64,
    s: &PsdOperator,
) -> f64 {
    let b = &problem.b_mat;
    let dy = y - y_hat;
    let grad = witness - b.transpose() * u
        + b.transpose() * (&problem.a * x_k + b * y - &problem.rhs) * beta2
        + b.transpose() * (b * &dy) * (beta2 * alpha)
        + s.apply(&dy).expect("dims") * (beta2 / beta);
    grad.norm()
}

// ---------------------------------------------------------------------------
// Instance file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    n: usize,
    p: usize,
    m: usize,
    f: ObjectiveFile,
    g: ObjectiveFile,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<f64>,
    #[serde(rename = "b")]
    rhs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    known_solution: Option<KnownSolutionFile>,
}

#[derive(Serialize, Deserialize)]
struct KnownSolutionFile {
    x: Vec<f64>,
    y: Vec<f64>,
    gamma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
enum ObjectiveFile {
    L1 { lambda: f64 },
    SquaredL2 { weight: f64, center: Vec<f64> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Zero {},
    Quadratic { #[serde(rename = "P")] p: PsdOperatorFile, q: Vec<f64>, r: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum PsdOperatorFile {
    Zero { dim: usize },
    ScaledIdentity { dim: usize, scale: f64 },
    Diagonal { diag: Vec<f64> },
    /// Row-major square matrix.
    Dense { dim: usize, data: Vec<f64> },
    /// Row-major factor; the operator is `scale · factorᵀ factor`.
    ScaledGram { scale: f64, rows: usize, cols: usize, factor: Vec<f64> },
}

fn matrix_from_row_major(rows: usize, cols: usize, data: &[f64], what: &'static str) -> Result<DMatrix<f64>, ProblemError> {
    if data.len() != rows * cols {
        return Err(ProblemError::Dimension { what, expected: rows * cols, got: data.len() });
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl PsdOperatorFile {
    fn build(&self) -> Result<PsdOperator, ProblemError> {
        Ok(match self {
            PsdOperatorFile::Zero { dim } => PsdOperator::zero(*dim),
            PsdOperatorFile::ScaledIdentity { dim, scale } => PsdOperator::scaled_identity(*dim, *scale),
            PsdOperatorFile::Diagonal { diag } => PsdOperator::diagonal(DVector::from_vec(diag.clone())),
            PsdOperatorFile::Dense { dim, data } => {
                PsdOperator::dense(matrix_from_row_major(*dim, *dim, data, "dense P")?)
            }
            PsdOperatorFile::ScaledGram { scale, rows, cols, factor } => {
                PsdOperator::scaled_gram(*scale, matrix_from_row_major(*rows, *cols, factor, "gram factor")?)
            }
        })
    }

    fn from_op(op: &PsdOperator) -> Self {
        match op {
            PsdOperator::Zero { dim } => PsdOperatorFile::Zero { dim: *dim },
            PsdOperator::ScaledIdentity { dim, scale } => {
                PsdOperatorFile::ScaledIdentity { dim: *dim, scale: *scale }
            }
            PsdOperator::Diagonal { diag } => {
                PsdOperatorFile::Diagonal { diag: diag.iter().cloned().collect() }
            }
            PsdOperator::Dense { matrix } => PsdOperatorFile::Dense {
                dim: matrix.nrows(),
                data: matrix.transpose().as_slice().to_vec(),
            },
            PsdOperator::ScaledGram { scale, factor, .. } => PsdOperatorFile::ScaledGram {
                scale: *scale,
                rows: factor.nrows(),
                cols: factor.ncols(),
                factor: factor.transpose().as_slice().to_vec(),
            },
        }
    }
}

impl ObjectiveFile {
    fn build(&self) -> Result<Objective, ProblemError> {
        Ok(match self {
            ObjectiveFile::L1 { lambda } => Objective::Prox(ProxFunction::L1 { lambda: *lambda }),
            ObjectiveFile::SquaredL2 { weight, center } => Objective::Prox(ProxFunction::SquaredL2 {
                weight: *weight,
                center: DVector::from_vec(center.clone()),
            }),
            ObjectiveFile::Box { lower, upper } => Objective::Prox(ProxFunction::Box {
                lower: DVector::from_vec(lower.clone()),
                upper: DVector::from_vec(upper.clone()),
            }),
            ObjectiveFile::Zero {} => Objective::Prox(ProxFunction::Zero),
            ObjectiveFile::Quadratic { p, q, r } => Objective::Quadratic(QuadraticFunction::new(
                p.build()?,
                DVector::from_vec(q.clone()),
                *r,
            )),
        })
    }

    fn from_objective(obj: &Objective) -> Self {
        match obj {
            Objective::Prox(ProxFunction::L1 { lambda }) => ObjectiveFile::L1 { lambda: *lambda },
            Objective::Prox(ProxFunction::SquaredL2 { weight, center }) => ObjectiveFile::SquaredL2 {
                weight: *weight,
                center: center.iter().cloned().collect(),
            },
            Objective::Prox(ProxFunction::Box { lower, upper }) => ObjectiveFile::Box {
                lower: lower.iter().cloned().collect(),
                upper: upper.iter().cloned().collect(),
            },
            Objective::Prox(ProxFunction::Zero) => ObjectiveFile::Zero {},
            Objective::Quadratic(q) => ObjectiveFile::Quadratic {
                p: PsdOperatorFile::from_op(&q.p),
                q: q.q.iter().cloned().collect(),
                r: q.r,
            },
        }
    }
}

impl SeparableProblem {
    /// Parses the JSON instance format
    /// `{n, p, m, f, g, A (row-major), B (row-major), b, known_solution?}`.
    pub fn from_json_str(text: &str) -> Result<Self, ProblemError> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| ProblemError::Json(e.to_string()))?;
        let a = matrix_from_row_major(file.m, file.n, &file.a, "A")?;
        let b_mat = matrix_from_row_major(file.m, file.p, &file.b, "B")?;
        if file.rhs.len() != file.m {
            return Err(ProblemError::Dimension { what: "b", expected: file.m, got: file.rhs.len() });
        }
        let known = file.known_solution.map(|k| KnownSolution {
            x: DVector::from_vec(k.x),
            y: DVector::from_vec(k.y),
            gamma: DVector::from_vec(k.gamma),
        });
        SeparableProblem::new(
            file.f.build()?,
            file.g.build()?,
            a,
            b_mat,
            DVector::from_vec(file.rhs),
            known,
        )
    }

    pub fn to_json_string(&self) -> String {
        let (n, p, m) = self.dims();
        let file = ProblemFile {
            n,
            p,
            m,
            f: ObjectiveFile::from_objective(&self.f),
            g: ObjectiveFile::from_objective(&self.g),
            a: self.a.transpose().as_slice().to_vec(),
            b: self.b_mat.transpose().as_slice().to_vec(),
            rhs: self.rhs.iter().cloned().collect(),
            known_solution: self.known_solution.as_ref().map(|k| KnownSolutionFile {
                x: k.x.iter().cloned().collect(),
                y: k.y.iter().cloned().collect(),
                gamma: k.gamma.iter().cloned().collect(),
            }),
        };
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }
}
