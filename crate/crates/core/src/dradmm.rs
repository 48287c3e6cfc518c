//! The dynamic regularized ADMM (DR-ADMM) with over-relaxed stepsize.
//!
//! One iteration of a cycle (fixed regularization weight `μ`):
//!
//! 1. `β₁ = β/(θ+μ)`, `β₂ = β(1+μ)`, hat points
//!    `x̂ = (x_{k−1}+μx₀)/(1+μ)`, `γ̂ = (θγ_{k−1}+μγ₀)/(θ+μ)`, then the
//!    x-subproblem;
//! 2. `γ̃_k = γ̂ − β₁(Ax_k + By_{k−1} − b)`, `ŷ = (y_{k−1}+μy₀)/(1+μ)`,
//!    `u_k = γ̃_k + β₂(Ax_k + Bŷ − b)`, then the y-subproblem and
//!    `γ_k = γ_{k−1} − θβ[Ax_k + By_k − b + μ(γ̃_k − γ₀)/(βθ)]`;
//! 3. stop the cycle when `‖(Δx, Δy, Δγ)‖_Q ≤ ρ/2`;
//! 4. `v = Δz − μ(z̃_k − z₀)`; output when `‖v‖_Q ≤ ρ`, else halve `μ`.
//!
//! The same iteration body backs both [`run`] and the [`AdmmStepOracle`]
//! driven by [`crate::hpe::hpe_run`], so the two routes replay identically.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hpe::{HpeError, StepOracle, StepTriple};
use crate::objectives::{SeparableProblem, SolveError, XSubproblem, YSubproblem};
use crate::operators::{q_norm, BlockPoint, OperatorError, PsdOperator, QMetric};

/// Full-record retention limit; beyond it a trace keeps every 100th iterate
/// plus a sliding window of the most recent ones.
const TRACE_FULL_LIMIT: usize = 100_000;
const TRACE_KEEP_EVERY: usize = 100;
const TRACE_WINDOW: usize = 10_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("stepsize theta = {theta} outside (0, {bound}) for alpha = {alpha}")]
    ThetaOutOfDomain { theta: f64, alpha: f64, bound: f64 },
    #[error("penalty beta = {0} must be positive")]
    BetaNotPositive(f64),
    #[error("tolerance rho = {0} must be positive")]
    RhoNotPositive(f64),
    #[error("proximal factor alpha = {0} must be nonnegative")]
    AlphaNegative(f64),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(
        "no convergence within limits: {cycles} cycles, {total_iters} iterations, final mu {mu:.3e}"
    )]
    NonConvergence { cycles: usize, total_iters: usize, mu: f64, trace: Box<IterateTrace> },
}

/// Upper endpoint of the admissible stepsize interval,
/// `(1 − α + √(α² + 6α + 5))/2`; tends to 2 as `α → ∞` and equals the golden
/// ratio at `α = 0`.
pub fn theta_bound(alpha: f64) -> f64 {
    (1.0 - alpha + (alpha * alpha + 6.0 * alpha + 5.0).sqrt()) / 2.0
}

#[derive(Debug, Clone)]
pub struct DrAdmmConfig {
    pub beta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub r: PsdOperator,
    pub s: PsdOperator,
    pub z0: BlockPoint,
    pub max_cycles: usize,
    pub max_inner_iters: usize,
    /// Start each new cycle from the last iterate instead of `z₀`; the
    /// regularization center stays `z₀` either way.
    pub warm_start: bool,
    pub trace_enabled: bool,
}

impl DrAdmmConfig {
    /// Defaults sized for desk-scale problems: `R = S = 0`, start at the
    /// origin, warm-started cycles, tracing on.
    pub fn new(problem: &SeparableProblem, beta: f64, theta: f64, alpha: f64, rho: f64) -> Self {
        let (n, p, m) = problem.dims();
        DrAdmmConfig {
            beta,
            theta,
            alpha,
            rho,
            r: PsdOperator::zero(n),
            s: PsdOperator::zero(p),
            z0: BlockPoint::zeros(n, p, m),
            max_cycles: 60,
            max_inner_iters: 1_000_000,
            warm_start: true,
            trace_enabled: true,
        }
    }

    pub fn q_metric(&self, problem: &SeparableProblem) -> QMetric {
        QMetric::new(
            self.r.clone(),
            self.s.clone(),
            problem.b_mat.clone(),
            self.alpha,
            self.beta,
            self.theta,
        )
    }
}

/// Accepts iff `θ` lies strictly inside its bound, `β > 0`, `ρ > 0`,
/// `α ≥ 0`, and all dimensions match; each violation is its own variant.
pub fn validate_config(cfg: &DrAdmmConfig, problem: &SeparableProblem) -> Result<(), ConfigError> {
    if cfg.alpha < 0.0 {
        return Err(ConfigError::AlphaNegative(cfg.alpha));
    }
    let bound = theta_bound(cfg.alpha);
    if !(cfg.theta > 0.0 && cfg.theta < bound) {
        return Err(ConfigError::ThetaOutOfDomain { theta: cfg.theta, alpha: cfg.alpha, bound });
    }
    if cfg.beta <= 0.0 {
        return Err(ConfigError::BetaNotPositive(cfg.beta));
    }
    if cfg.rho <= 0.0 {
        return Err(ConfigError::RhoNotPositive(cfg.rho));
    }
    let (n, p, m) = problem.dims();
    for (what, got, expected) in [
        ("R", cfg.r.dim(), n),
        ("S", cfg.s.dim(), p),
        ("z0.x", cfg.z0.x.len(), n),
        ("z0.y", cfg.z0.y.len(), p),
        ("z0.gamma", cfg.z0.gamma.len(), m),
    ] {
        if got != expected {
            return Err(ConfigError::DimensionMismatch { what, expected, got });
        }
    }
    Ok(())
}

/// `β₁ = β/(θ+μ)`, `β₂ = β(1+μ)`.
pub fn cycle_constants(beta: f64, theta: f64, mu: f64) -> (f64, f64) {
    (beta / (theta + mu), beta * (1.0 + mu))
}

/// The convex combinations `x̂ = (x+μx₀)/(1+μ)`, `ŷ = (y+μy₀)/(1+μ)`,
/// `γ̂ = (θγ+μγ₀)/(θ+μ)`.
pub fn hat_points(
    z_prev: &BlockPoint,
    z0: &BlockPoint,
    mu: f64,
    theta: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let x_hat = (&z_prev.x + &z0.x * mu) / (1.0 + mu);
    let y_hat = (&z_prev.y + &z0.y * mu) / (1.0 + mu);
    let gamma_hat = (&z_prev.gamma * theta + &z0.gamma * mu) / (theta + mu);
    (x_hat, y_hat, gamma_hat)
}

pub(crate) fn gamma_tilde_from(
    gamma_hat: &DVector<f64>,
    residual_prev: &DVector<f64>,
    beta1: f64,
) -> DVector<f64> {
    gamma_hat - residual_prev * beta1
}

pub(crate) fn u_from(
    gamma_tilde: &DVector<f64>,
    hat_residual: &DVector<f64>,
    beta2: f64,
) -> DVector<f64> {
    gamma_tilde + hat_residual * beta2
}

/// `γ_k = γ_{k−1} − θβ[(Ax_k + By_k − b) + μ(γ̃_k − γ₀)/(βθ)]`.
pub fn gamma_update(
    gamma_prev: &DVector<f64>,
    primal_residual: &DVector<f64>,
    gamma_tilde: &DVector<f64>,
    gamma0: &DVector<f64>,
    beta: f64,
    theta: f64,
    mu: f64,
) -> DVector<f64> {
    let bracket = primal_residual + (gamma_tilde - gamma0) * (mu / (beta * theta));
    gamma_prev - bracket * (theta * beta)
}

/// The three multiplier quantities of one iteration:
/// `γ̃_k = γ̂ − β₁(Ax_k + By_{k−1} − b)`, `u_k = γ̃_k + β₂(Ax_k + Bŷ − b)`,
/// and the `γ_k` update.
#[allow(clippy::too_many_arguments)]
pub fn multiplier_updates(
    gamma_hat: &DVector<f64>,
    x_k: &DVector<f64>,
    y_prev: &DVector<f64>,
    y_k: &DVector<f64>,
    y_hat: &DVector<f64>,
    gamma_prev: &DVector<f64>,
    gamma0: &DVector<f64>,
    beta1: f64,
    beta2: f64,
    beta: f64,
    theta: f64,
    mu: f64,
    a: &DMatrix<f64>,
    b_mat: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let ax = a * x_k;
    let gamma_tilde = gamma_tilde_from(gamma_hat, &(&ax + b_mat * y_prev - rhs), beta1);
    let u = u_from(&gamma_tilde, &(&ax + b_mat * y_hat - rhs), beta2);
    let gamma =
        gamma_update(gamma_prev, &(&ax + b_mat * y_k - rhs), &gamma_tilde, gamma0, beta, theta, mu);
    (gamma_tilde, u, gamma)
}

/// Cycle stopping rule: `‖(Δx, Δy, Δγ)‖_Q ≤ ρ/2` (non-strict at the
/// boundary).
pub fn inner_stop(q: &QMetric, delta: &BlockPoint, rho: f64) -> Result<bool, OperatorError> {
    Ok(q_norm(q, delta)? <= rho / 2.0)
}

/// `v = Δz − μ(z̃_k − z₀)` blockwise, with `z̃_k = (x_k, y_k, γ̃_k)`.
pub fn outer_residuals(
    delta: &BlockPoint,
    z_tilde: &BlockPoint,
    z0: &BlockPoint,
    mu: f64,
) -> BlockPoint {
    delta.sub(&z_tilde.sub(z0).scale(mu))
}

/// Everything one iteration produced, as consumed by the certifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateRecord {
    pub global_index: usize,
    pub cycle: usize,
    pub k: usize,
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub x_hat: DVector<f64>,
    pub y_hat: DVector<f64>,
    pub gamma_hat: DVector<f64>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub gamma: DVector<f64>,
    pub gamma_tilde: DVector<f64>,
    pub u: DVector<f64>,
    pub dx: DVector<f64>,
    pub dy: DVector<f64>,
    pub dgamma: DVector<f64>,
    pub f_witness: DVector<f64>,
    pub g_witness: DVector<f64>,
}

impl IterateRecord {
    pub fn z(&self) -> BlockPoint {
        BlockPoint::new(self.x.clone(), self.y.clone(), self.gamma.clone())
    }

    pub fn z_tilde(&self) -> BlockPoint {
        BlockPoint::new(self.x.clone(), self.y.clone(), self.gamma_tilde.clone())
    }

    pub fn delta(&self) -> BlockPoint {
        BlockPoint::new(self.dx.clone(), self.dy.clone(), self.dgamma.clone())
    }

    /// The previous iterate, reconstructed from the stored differences.
    pub fn z_prev(&self) -> BlockPoint {
        BlockPoint::new(&self.x + &self.dx, &self.y + &self.dy, &self.gamma + &self.dgamma)
    }
}

/// Per-iteration records of a run. Bounded: past [`TRACE_FULL_LIMIT`]
/// entries, retention drops to every 100th iterate plus a sliding window, and
/// `complete` flips to false so consumers know pairs may be missing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
    pub complete: bool,
    pub total_iterations: usize,
}

impl IterateTrace {
    pub fn new() -> Self {
        IterateTrace { records: Vec::new(), complete: true, total_iterations: 0 }
    }

    pub fn push(&mut self, record: IterateRecord) {
        self.total_iterations += 1;
        self.records.push(record);
        if self.records.len() > TRACE_FULL_LIMIT {
            let newest = self.records.last().expect("nonempty").global_index;
            self.records.retain(|r| {
                r.global_index % TRACE_KEEP_EVERY == 0 || r.global_index + TRACE_WINDOW > newest
            });
            self.complete = false;
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Output of a successful run: the approximate solution, its residual triple
/// `v`, and the final subgradient witnesses the certifier needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub gamma_tilde: DVector<f64>,
    pub vx: DVector<f64>,
    pub vy: DVector<f64>,
    pub vgamma: DVector<f64>,
    /// `‖(vˣ, vʸ, v^γ)‖_Q`, at most `ρ` on success.
    pub residual: f64,
    pub cycles: usize,
    pub total_iters: usize,
    pub final_mu: f64,
    pub f_witness: DVector<f64>,
    pub g_witness: DVector<f64>,
}

impl Certificate {
    pub fn v(&self) -> BlockPoint {
        BlockPoint::new(self.vx.clone(), self.vy.clone(), self.vgamma.clone())
    }
}

/// One iteration body shared by [`run`] and the step oracle.
#[allow(clippy::too_many_arguments)]
fn iterate_once(
    problem: &SeparableProblem,
    x_sub: &XSubproblem,
    y_sub: &YSubproblem,
    z_prev: &BlockPoint,
    z0: &BlockPoint,
    mu: f64,
    theta: f64,
    beta: f64,
    beta1: f64,
    beta2: f64,
    global_index: usize,
    cycle: usize,
    k: usize,
) -> Result<IterateRecord, SolveError> {
    let (x_hat, y_hat, gamma_hat) = hat_points(z_prev, z0, mu, theta);
    let (x, f_witness) = x_sub.solve(&gamma_hat, &z_prev.y, &x_hat)?;
    let ax = &problem.a * &x;
    let residual_prev = &ax + &problem.b_mat * &z_prev.y - &problem.rhs;
    let gamma_tilde = gamma_tilde_from(&gamma_hat, &residual_prev, beta1);
    let hat_residual = &ax + &problem.b_mat * &y_hat - &problem.rhs;
    let u = u_from(&gamma_tilde, &hat_residual, beta2);
    let (y, g_witness) = y_sub.solve(&u, &x, &y_hat)?;
    let primal_residual = &ax + &problem.b_mat * &y - &problem.rhs;
    let gamma =
        gamma_update(&z_prev.gamma, &primal_residual, &gamma_tilde, &z0.gamma, beta, theta, mu);
    let z_k = BlockPoint::new(x, y, gamma);
    let delta = z_prev.sub(&z_k);
    Ok(IterateRecord {
        global_index,
        cycle,
        k,
        mu,
        beta1,
        beta2,
        x_hat,
        y_hat,
        gamma_hat,
        x: z_k.x,
        y: z_k.y,
        gamma: z_k.gamma,
        gamma_tilde,
        u,
        dx: delta.x,
        dy: delta.y,
        dgamma: delta.gamma,
        f_witness,
        g_witness,
    })
}

/// Runs DR-ADMM to a `ρ`-approximate certificate.
pub fn run(
    problem: &SeparableProblem,
    cfg: &DrAdmmConfig,
) -> Result<(Certificate, IterateTrace), AdmmError> {
    run_with_observer(problem, cfg, |_| {})
}

/// As [`run`], invoking `observer` on every iterate before it is (possibly)
/// stored; lets callers certify long runs without holding the full trace.
pub fn run_with_observer(
    problem: &SeparableProblem,
    cfg: &DrAdmmConfig,
    mut observer: impl FnMut(&IterateRecord),
) -> Result<(Certificate, IterateTrace), AdmmError> {
    validate_config(cfg, problem)?;
    let q = cfg.q_metric(problem);
    let mut trace = IterateTrace::new();
    let mut mu = 1.0;
    let mut cycle = 1usize;
    let mut total_iters = 0usize;
    let mut global_index = 0usize;
    let mut z_prev = cfg.z0.clone();

    'cycles: loop {
        let (beta1, beta2) = cycle_constants(cfg.beta, cfg.theta, mu);
        let x_sub = XSubproblem::prepare(problem, beta1, mu, &cfg.r)?;
        let y_sub = YSubproblem::prepare(problem, beta2, cfg.alpha, cfg.beta, &cfg.s)?;
        let mut k = 1usize;
        loop {
            let record = iterate_once(
                problem, &x_sub, &y_sub, &z_prev, &cfg.z0, mu, cfg.theta, cfg.beta, beta1, beta2,
                global_index, cycle, k,
            )?;
            total_iters += 1;
            global_index += 1;
            observer(&record);
            let z_k = record.z();
            let delta = record.delta();
            if cfg.trace_enabled {
                trace.push(record.clone());
            } else {
                trace.total_iterations += 1;
            }
            if total_iters > cfg.max_inner_iters {
                return Err(AdmmError::NonConvergence {
                    cycles: cycle,
                    total_iters,
                    mu,
                    trace: Box::new(trace),
                });
            }
            if inner_stop(&q, &delta, cfg.rho)? {
                let z_tilde = record.z_tilde();
                let v = outer_residuals(&delta, &z_tilde, &cfg.z0, mu);
                let residual = q_norm(&q, &v)?;
                if residual <= cfg.rho {
                    let certificate = Certificate {
                        x: record.x,
                        y: record.y,
                        gamma_tilde: record.gamma_tilde,
                        vx: v.x,
                        vy: v.y,
                        vgamma: v.gamma,
                        residual,
                        cycles: cycle,
                        total_iters,
                        final_mu: mu,
                        f_witness: record.f_witness,
                        g_witness: record.g_witness,
                    };
                    return Ok((certificate, trace));
                }
                cycle += 1;
                if cycle > cfg.max_cycles {
                    return Err(AdmmError::NonConvergence {
                        cycles: cycle - 1,
                        total_iters,
                        mu,
                        trace: Box::new(trace),
                    });
                }
                mu /= 2.0;
                z_prev = if cfg.warm_start { z_k } else { cfg.z0.clone() };
                continue 'cycles;
            }
            z_prev = z_k;
            k += 1;
        }
    }
}

/// DR-ADMM steps 1–2 packaged as a step oracle for the generic loop; the
/// produced pairs claim the framework's inclusion and error conditions with
/// `M = Q`.
pub struct AdmmStepOracle<'a> {
    problem: &'a SeparableProblem,
    cfg: &'a DrAdmmConfig,
    cache: Option<CycleCache<'a>>,
    pub trace: IterateTrace,
    global_index: usize,
    cycle: usize,
    k: usize,
}

struct CycleCache<'a> {
    mu: f64,
    beta1: f64,
    beta2: f64,
    x_sub: XSubproblem<'a>,
    y_sub: YSubproblem<'a>,
}

impl<'a> AdmmStepOracle<'a> {
    pub fn new(problem: &'a SeparableProblem, cfg: &'a DrAdmmConfig) -> Self {
        AdmmStepOracle {
            problem,
            cfg,
            cache: None,
            trace: IterateTrace::new(),
            global_index: 0,
            cycle: 0,
            k: 0,
        }
    }
}

impl StepOracle for AdmmStepOracle<'_> {
    type P = BlockPoint;

    fn produce(
        &mut self,
        z_prev: &BlockPoint,
        mu: f64,
        z0: &BlockPoint,
    ) -> Result<StepTriple<BlockPoint>, HpeError> {
        let stale = match &self.cache {
            Some(cache) => cache.mu != mu,
            None => true,
        };
        if stale {
            let (beta1, beta2) = cycle_constants(self.cfg.beta, self.cfg.theta, mu);
            let x_sub = XSubproblem::prepare(self.problem, beta1, mu, &self.cfg.r)
                .map_err(|e| HpeError::Oracle(e.to_string()))?;
            let y_sub =
                YSubproblem::prepare(self.problem, beta2, self.cfg.alpha, self.cfg.beta, &self.cfg.s)
                    .map_err(|e| HpeError::Oracle(e.to_string()))?;
            self.cache = Some(CycleCache { mu, beta1, beta2, x_sub, y_sub });
            self.cycle += 1;
            self.k = 0;
        }
        let cache = self.cache.as_ref().expect("cache just ensured");
        self.k += 1;
        let record = iterate_once(
            self.problem,
            &cache.x_sub,
            &cache.y_sub,
            z_prev,
            z0,
            mu,
            self.cfg.theta,
            self.cfg.beta,
            cache.beta1,
            cache.beta2,
            self.global_index,
            self.cycle,
            self.k,
        )
        .map_err(|e| HpeError::Oracle(e.to_string()))?;
        self.global_index += 1;
        let z = record.z();
        let z_tilde = record.z_tilde();
        self.trace.push(record);
        Ok(StepTriple { z, z_tilde, eta: 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpe::{hpe_run, HpeParams};
    use crate::objectives::{Objective, ProxFunction, QuadraticFunction};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn trivial_problem(n: usize) -> SeparableProblem {
        SeparableProblem::new(
            Objective::Prox(ProxFunction::Zero),
            Objective::Prox(ProxFunction::Zero),
            DMatrix::identity(n, n),
            DMatrix::identity(n, n),
            DVector::zeros(n),
            None,
        )
        .unwrap()
    }

    /// Small LASSO split: f = ½‖Dx − d‖², g = λ‖y‖₁, x − y = 0.
    fn lasso_problem(d_mat: DMatrix<f64>, d: DVector<f64>, lambda: f64) -> SeparableProblem {
        let n = d_mat.ncols();
        SeparableProblem::new(
            Objective::Quadratic(QuadraticFunction::new(
                PsdOperator::scaled_gram(1.0, d_mat.clone()),
                -(d_mat.transpose() * &d),
                0.5 * d.norm_squared(),
            )),
            Objective::Prox(ProxFunction::L1 { lambda }),
            DMatrix::identity(n, n),
            -DMatrix::identity(n, n),
            DVector::zeros(n),
            None,
        )
        .unwrap()
    }

    /// Cyclic coordinate descent for ½‖Dx − d‖² + λ‖x‖₁, used as an
    /// independent oracle.
    fn lasso_coordinate_descent(d_mat: &DMatrix<f64>, d: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let n = d_mat.ncols();
        let mut x = DVector::zeros(n);
        let mut residual = d.clone();
        for _ in 0..100_000 {
            let mut change: f64 = 0.0;
            for j in 0..n {
                let col = d_mat.column(j);
                let cjj = col.norm_squared();
                if cjj == 0.0 {
                    continue;
                }
                let old = x[j];
                let rho = col.dot(&residual) + cjj * old;
                let new = {
                    let v = rho;
                    let t = lambda;
                    if v > t {
                        (v - t) / cjj
                    } else if v < -t {
                        (v + t) / cjj
                    } else {
                        0.0
                    }
                };
                if new != old {
                    residual -= col * (new - old);
                    x[j] = new;
                    change = change.max((new - old).abs());
                }
            }
            if change < 1e-13 {
                break;
            }
        }
        x
    }

    #[test]
    fn theta_bound_values() {
        assert!((theta_bound(0.0) - 1.618034).abs() < 1e-6);
        assert!((theta_bound(1.0) - 3f64.sqrt()).abs() < 1e-12);
        assert!((theta_bound(100.0) - 1.990291).abs() < 1e-6);
        assert!(theta_bound(1e9) < 2.0);
    }

    #[test]
    fn validate_config_theta_boundaries() {
        let problem = trivial_problem(2);
        let accept = |theta: f64, alpha: f64| {
            let mut cfg = DrAdmmConfig::new(&problem, 1.0, theta, alpha, 1e-3);
            cfg.alpha = alpha;
            validate_config(&cfg, &problem).is_ok()
        };
        assert!(accept(1.6, 0.0));
        assert!(!accept(1.62, 0.0));
        assert!(accept(1.73, 1.0));
        assert!(!accept(1.74, 1.0));
        assert!(accept(1.9902, 100.0));
        assert!(!accept(1.9904, 100.0));
        assert!(!accept(theta_bound(0.5), 0.5), "the endpoint itself is excluded");
        assert!(!accept(0.0, 0.0));
    }

    #[test]
    fn validate_config_other_violations() {
        let problem = trivial_problem(2);
        let base = DrAdmmConfig::new(&problem, 1.0, 1.0, 0.0, 1e-3);

        let mut cfg = base.clone();
        cfg.beta = 0.0;
        assert!(matches!(validate_config(&cfg, &problem), Err(ConfigError::BetaNotPositive(_))));

        let mut cfg = base.clone();
        cfg.rho = -1.0;
        assert!(matches!(validate_config(&cfg, &problem), Err(ConfigError::RhoNotPositive(_))));

        let mut cfg = base.clone();
        cfg.alpha = -0.1;
        assert!(matches!(validate_config(&cfg, &problem), Err(ConfigError::AlphaNegative(_))));

        let mut cfg = base;
        cfg.r = PsdOperator::zero(3);
        assert!(matches!(
            validate_config(&cfg, &problem),
            Err(ConfigError::DimensionMismatch { what: "R", .. })
        ));
    }

    #[test]
    fn cycle_constants_examples() {
        assert_eq!(cycle_constants(1.0, 1.0, 1.0), (0.5, 2.0));
        let (b1, b2) = cycle_constants(1.0, 2.0, 2f64.powi(-20));
        assert!((b1 - 0.5).abs() < 1e-5 && (b2 - 1.0).abs() < 1e-5);
        let (b1, b2) = cycle_constants(3.0, 1.5, 0.5);
        assert!((b1 - 1.5).abs() < 1e-15 && (b2 - 4.5).abs() < 1e-15);
    }

    #[test]
    fn hat_points_examples() {
        let z_prev = BlockPoint::new(vec2(2.0, 4.0), vec2(6.0, 8.0), vec2(3.0, 3.0));
        let z0 = BlockPoint::zeros(2, 2, 2);
        // μ = 1: midpoints of x and y with the origin
        let (x_hat, y_hat, _) = hat_points(&z_prev, &z0, 1.0, 1.0);
        assert_eq!(x_hat, vec2(1.0, 2.0));
        assert_eq!(y_hat, vec2(3.0, 4.0));
        // θ = 2, μ = 1, γ_prev = 3, γ₀ = 0 → γ̂ = 2
        let (_, _, gamma_hat) = hat_points(&z_prev, &z0, 1.0, 2.0);
        assert_eq!(gamma_hat, vec2(2.0, 2.0));
        // fixed point: z_prev = z0
        let (x_hat, _, gamma_hat) = hat_points(&z0, &z0, 0.3, 1.7);
        assert_eq!(x_hat, z0.x);
        assert_eq!(gamma_hat, z0.gamma);
    }

    #[test]
    fn multiplier_updates_stationary_case() {
        // Feasible stationary data: Ax_k + By − b = 0 for both y's and
        // γ̃ = γ₀ make both bracket terms vanish, so γ_k = γ_prev.
        let a = DMatrix::identity(1, 1);
        let b_mat = DMatrix::identity(1, 1);
        let rhs = DVector::from_vec(vec![0.0]);
        let x_k = DVector::from_vec(vec![1.0]);
        let y = DVector::from_vec(vec![-1.0]);
        let gamma0 = DVector::from_vec(vec![0.7]);
        let (gamma_tilde, _, gamma) = multiplier_updates(
            &gamma0, &x_k, &y, &y, &y, &gamma0, &gamma0, 0.5, 2.0, 1.0, 1.3, 1.0, &a, &b_mat, &rhs,
        );
        assert_eq!(gamma_tilde, gamma0);
        assert_eq!(gamma, gamma0);
    }

    #[test]
    fn multiplier_updates_scalar_smoke_chain() {
        // m = 1 with every quantity equal to 1: γ̃ = 0, u = 1, γ_k = 1.
        let one = DVector::from_vec(vec![1.0]);
        let a = DMatrix::identity(1, 1);
        let (gamma_tilde, u, gamma) = multiplier_updates(
            &one, &one, &one, &one, &one, &one, &one, 1.0, 1.0, 1.0, 1.0, 1.0, &a, &a, &one,
        );
        assert_eq!(gamma_tilde[0], 0.0);
        assert_eq!(u[0], 1.0);
        assert_eq!(gamma[0], 1.0);
    }

    #[test]
    fn multiplier_updates_satisfy_identity() {
        // γ̃_k − γ_{k−1} = −βBΔy_k − Δγ_k/θ on random data.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let m = rng.gen_range(1..5);
            let p = rng.gen_range(1..5);
            let n = rng.gen_range(1..5);
            let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let b_mat = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-1.0..1.0));
            let rhs = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let theta = rng.gen_range(0.3..1.9);
            let mu = rng.gen_range(0.01..1.0);
            let beta = rng.gen_range(0.2..2.0);
            let (beta1, beta2) = cycle_constants(beta, theta, mu);
            let gamma_prev = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let gamma0 = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
            let gamma_hat = (&gamma_prev * theta + &gamma0 * mu) / (theta + mu);
            let x_k = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let y_prev = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let y_k = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let y_hat = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let (gamma_tilde, _, gamma) = multiplier_updates(
                &gamma_hat, &x_k, &y_prev, &y_k, &y_hat, &gamma_prev, &gamma0, beta1, beta2, beta,
                theta, mu, &a, &b_mat, &rhs,
            );
            let dy = &y_prev - &y_k;
            let dgamma = &gamma_prev - &gamma;
            let lhs = &gamma_tilde - &gamma_prev;
            let rhs_identity = -(&b_mat * &dy) * beta - &dgamma / theta;
            assert!(
                (lhs - rhs_identity).norm() <= 1e-9 * (1.0 + gamma_tilde.norm()),
                "identity violated"
            );
        }
    }

    #[test]
    fn inner_stop_cases() {
        let q = QMetric::new(
            PsdOperator::zero(2),
            PsdOperator::zero(2),
            DMatrix::identity(2, 2),
            0.0,
            1.0,
            1.0,
        );
        let rho = 0.3;
        assert!(inner_stop(&q, &BlockPoint::zeros(2, 2, 2), rho).unwrap());
        // Δy = (ρ/2)e₁ puts the norm exactly on the boundary; ≤ admits it.
        let delta = BlockPoint::new(vec2(9.0, 9.0), vec2(rho / 2.0, 0.0), vec2(0.0, 0.0));
        assert!(inner_stop(&q, &delta, rho).unwrap());
        let delta = BlockPoint::new(vec2(0.0, 0.0), vec2(rho, 0.0), vec2(0.0, 0.0));
        assert!(!inner_stop(&q, &delta, rho).unwrap());
    }

    #[test]
    fn inner_stop_agrees_with_explicit_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let (n, p, m) = (3, 2, 2);
            let r = PsdOperator::scaled_identity(n, rng.gen_range(0.0..2.0));
            let s = PsdOperator::scaled_identity(p, rng.gen_range(0.0..2.0));
            let b_mat = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-1.0..1.0));
            let (alpha, beta, theta) =
                (rng.gen_range(0.0..4.0), rng.gen_range(0.2..2.0), rng.gen_range(0.3..1.9));
            let q = QMetric::new(r.clone(), s.clone(), b_mat.clone(), alpha, beta, theta);
            let delta = BlockPoint::new(
                DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
                DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0)),
                DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
            );
            let explicit = (r.quad_form(&delta.x).unwrap()
                + (1.0 + alpha) * beta * (&b_mat * &delta.y).norm_squared()
                + s.quad_form(&delta.y).unwrap()
                + delta.gamma.norm_squared() / (beta * theta))
                .sqrt();
            let rho = rng.gen_range(0.01..3.0);
            assert_eq!(inner_stop(&q, &delta, rho).unwrap(), explicit <= rho / 2.0);
            assert!((q_norm(&q, &delta).unwrap() - explicit).abs() <= 1e-12 * (1.0 + explicit));
        }
    }

    #[test]
    fn outer_residuals_cases() {
        let z0 = BlockPoint::zeros(2, 2, 2);
        // everything at the start point: v = 0
        let v = outer_residuals(&BlockPoint::zeros(2, 2, 2), &z0, &z0, 0.7);
        assert_eq!(v.x, DVector::zeros(2));
        // μ = 1, Δx = 0, x_k − x₀ = w → vˣ = −w
        let w = vec2(0.4, -0.8);
        let z_tilde = BlockPoint::new(w.clone(), DVector::zeros(2), DVector::zeros(2));
        let v = outer_residuals(&BlockPoint::zeros(2, 2, 2), &z_tilde, &z0, 1.0);
        assert_eq!(v.x, -w);
    }

    #[test]
    fn run_trivial_problem_terminates_at_first_iterate() {
        let problem = trivial_problem(3);
        let cfg = DrAdmmConfig::new(&problem, 1.0, 1.0, 0.0, 1e-6);
        let (cert, trace) = run(&problem, &cfg).unwrap();
        assert_eq!(cert.total_iters, 1);
        assert_eq!(cert.cycles, 1);
        assert_eq!(cert.residual, 0.0);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn run_small_lasso_matches_coordinate_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d_mat = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let lambda = 0.2;
        let problem = lasso_problem(d_mat.clone(), d.clone(), lambda);
        let rho = 1e-7;
        let cfg = DrAdmmConfig::new(&problem, 1.0, 1.6, 0.0, rho);
        let (cert, _) = run(&problem, &cfg).unwrap();
        assert!(cert.residual <= rho);

        let oracle = lasso_coordinate_descent(&d_mat, &d, lambda);
        assert!(
            (&cert.x - &oracle).norm() <= 1e-4,
            "admm {:?} vs cd {:?}",
            cert.x,
            oracle
        );

        // KKT residual bounded by √λmax(Q)·ρ plus slack.
        let q = cfg.q_metric(&problem);
        let lambda_max = q
            .to_dense()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let kkt = problem.kkt_residual(&cert.x, &cert.y, &cert.gamma_tilde);
        assert!(kkt <= lambda_max.sqrt() * rho * (1.0 + 1e-6) + 1e-12, "kkt {kkt}");
    }

    #[test]
    fn run_converges_for_small_and_large_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let d_mat = DMatrix::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let problem = lasso_problem(d_mat, d, 0.1);
        for theta in [0.5, 1.6] {
            let cfg = DrAdmmConfig::new(&problem, 1.0, theta, 0.0, 1e-6);
            let (cert, trace) = run(&problem, &cfg).unwrap();
            assert!(cert.residual <= 1e-6, "theta {theta}");
            assert_eq!(trace.total_iterations, cert.total_iters);
        }
    }

    #[test]
    fn termination_residual_recomputed_independently() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let d_mat = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let problem = lasso_problem(d_mat, d, 0.15);
        let cfg = DrAdmmConfig::new(&problem, 1.0, 1.0, 0.0, 1e-5);
        let (cert, _) = run(&problem, &cfg).unwrap();
        let q = cfg.q_metric(&problem);
        let dense = q.to_dense();
        let (n, p, m) = problem.dims();
        let mut flat = DVector::zeros(n + p + m);
        flat.rows_mut(0, n).copy_from(&cert.vx);
        flat.rows_mut(n, p).copy_from(&cert.vy);
        flat.rows_mut(n + p, m).copy_from(&cert.vgamma);
        let independent = flat.dot(&(&dense * &flat)).max(0.0).sqrt();
        assert!((independent - cert.residual).abs() <= 1e-12 * (1.0 + cert.residual));
        assert!(cert.residual <= cfg.rho);
    }

    #[test]
    fn lemma_a_identity_holds_along_a_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let d_mat = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let problem = lasso_problem(d_mat, d, 0.1);
        let cfg = DrAdmmConfig::new(&problem, 1.3, 1.2, 0.5, 1e-5);
        let (_, trace) = run(&problem, &cfg).unwrap();
        assert!(!trace.is_empty());
        for rec in &trace.records {
            let gamma_prev = &rec.gamma + &rec.dgamma;
            let lhs = &rec.gamma_tilde - &gamma_prev;
            let rhs = -(&problem.b_mat * &rec.dy) * cfg.beta - &rec.dgamma / cfg.theta;
            assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + rec.gamma_tilde.norm()));
        }
    }

    #[test]
    fn hpe_instance_replays_run_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let d_mat = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let problem = lasso_problem(d_mat, d, 0.1);
        let cfg = DrAdmmConfig::new(&problem, 1.0, 1.6, 0.0, 1e-6);
        let (cert, trace) = run(&problem, &cfg).unwrap();

        let q = cfg.q_metric(&problem);
        let mut oracle = AdmmStepOracle::new(&problem, &cfg);
        let params = HpeParams::new(0.0, 0.5, 0.5, cfg.rho)
            .unwrap()
            .with_limits(cfg.max_cycles, cfg.max_inner_iters);
        let out = hpe_run(&mut oracle, &cfg.z0, &q, &params).unwrap();

        assert_eq!(out.total_iters, cert.total_iters);
        assert_eq!(out.cycles, cert.cycles);
        assert_eq!(out.final_mu, cert.final_mu);
        assert_eq!(out.v.x, cert.vx);
        assert_eq!(out.v.y, cert.vy);
        assert_eq!(out.v.gamma, cert.vgamma);
        assert_eq!(oracle.trace.len(), trace.len());
        for (a, b) in oracle.trace.records.iter().zip(trace.records.iter()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
            assert_eq!(a.gamma, b.gamma);
            assert_eq!(a.gamma_tilde, b.gamma_tilde);
            assert_eq!(a.cycle, b.cycle);
            assert_eq!(a.k, b.k);
        }
    }

    #[test]
    fn es2_error_condition_for_small_theta() {
        // θ ∈ (0,1): σ = θ + (θ−1)², η ≡ 0 holds at every iteration.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let d_mat = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let problem = lasso_problem(d_mat, d, 0.1);
        let theta = 0.5;
        let cfg = DrAdmmConfig::new(&problem, 1.0, theta, 0.0, 1e-5);
        let (_, trace) = run(&problem, &cfg).unwrap();
        let q = cfg.q_metric(&problem);
        let sigma = theta + (theta - 1.0) * (theta - 1.0);
        for rec in &trace.records {
            let z_prev_minus_tilde = BlockPoint::new(
                rec.dx.clone(),
                rec.dy.clone(),
                (&rec.gamma + &rec.dgamma) - &rec.gamma_tilde,
            );
            let z_minus_tilde =
                BlockPoint::new(DVector::zeros(3), DVector::zeros(3), &rec.gamma - &rec.gamma_tilde);
            let lhs = q.norm_squared(&z_minus_tilde).unwrap();
            let rhs = sigma * q.norm_squared(&z_prev_minus_tilde).unwrap();
            assert!(lhs <= rhs + 1e-8 * (1.0 + rhs), "es2 violated at k={}", rec.k);
        }
    }

    #[test]
    fn trace_bounding_keeps_window_and_samples() {
        let mut trace = IterateTrace::new();
        let rec = IterateRecord {
            global_index: 0,
            cycle: 1,
            k: 1,
            mu: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            x_hat: DVector::zeros(1),
            y_hat: DVector::zeros(1),
            gamma_hat: DVector::zeros(1),
            x: DVector::zeros(1),
            y: DVector::zeros(1),
            gamma: DVector::zeros(1),
            gamma_tilde: DVector::zeros(1),
            u: DVector::zeros(1),
            dx: DVector::zeros(1),
            dy: DVector::zeros(1),
            dgamma: DVector::zeros(1),
            f_witness: DVector::zeros(1),
            g_witness: DVector::zeros(1),
        };
        for i in 0..(TRACE_FULL_LIMIT + 5_000) {
            let mut r = rec.clone();
            r.global_index = i;
            trace.push(r);
        }
        assert!(!trace.complete);
        assert_eq!(trace.total_iterations, TRACE_FULL_LIMIT + 5_000);
        assert!(trace.len() < TRACE_FULL_LIMIT);
        // the most recent records are all present
        let newest = trace.records.last().unwrap().global_index;
        assert_eq!(newest, TRACE_FULL_LIMIT + 5_000 - 1);
        let kept: Vec<usize> = trace.records.iter().map(|r| r.global_index).collect();
        for idx in (newest - 100)..=newest {
            assert!(kept.contains(&idx));
        }
        // sampled older records are on the 100-grid
        assert!(kept.iter().any(|&i| i % TRACE_KEEP_EVERY == 0 && i + TRACE_WINDOW <= newest));
    }
}
