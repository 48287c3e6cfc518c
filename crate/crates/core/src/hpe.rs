//! Dynamic regularized hybrid proximal extragradient (DR-HPE) loop for the
//! monotone inclusion `0 ∈ T(z)`.
//!
//! The loop solves a sequence of regularized inclusions
//! `0 ∈ T(z) + μM(z − z₀)` through an abstract step oracle, halving `μ`
//! whenever the regularized residual is small but the unregularized one is
//! not:
//!
//! - step 1: the oracle produces `(z_k, z̃_k, η_k)`;
//! - step 2: if `‖z_{k−1} − z_k‖_M ≤ ρ/2`, go to step 3, else iterate;
//! - step 3: `v_k := z_{k−1} − z_k − μ(z̃_k − z₀)`; stop when `‖v_k‖_M ≤ ρ`,
//!   else halve `μ` and start a new cycle.
//!
//! The oracle's claimed inclusion/error conditions are *not* trusted here;
//! the certification layer verifies them from traces.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::operators::{seminorm, PsdOperator};

#[derive(Debug, Error)]
pub enum HpeError {
    #[error("invalid parameter {name}: {value} (expected {expected})")]
    InvalidParam { name: &'static str, value: f64, expected: &'static str },
    #[error(
        "no convergence within limits: {cycles} cycles, {total_iters} iterations, final mu {mu:.3e}"
    )]
    NonConvergence { cycles: usize, total_iters: usize, mu: f64 },
    #[error("singular linear system in affine oracle")]
    SingularSystem,
    #[error("oracle failure: {0}")]
    Oracle(String),
}

/// Parameters of the loop. The regularization weight always starts at 1.
#[derive(Debug, Clone)]
pub struct HpeParams {
    pub eta0: f64,
    pub sigma: f64,
    pub tau: f64,
    pub rho: f64,
    pub max_cycles: usize,
    pub max_inner_iters: usize,
    /// Start each new cycle from the last computed iterate (`true`) or from
    /// `z₀` (`false`). The regularization center is `z₀` either way.
    pub warm_start: bool,
}

impl HpeParams {
    pub fn new(eta0: f64, sigma: f64, tau: f64, rho: f64) -> Result<Self, HpeError> {
        if eta0 < 0.0 {
            return Err(HpeError::InvalidParam { name: "eta0", value: eta0, expected: "≥ 0" });
        }
        if !(0.0..1.0).contains(&sigma) {
            return Err(HpeError::InvalidParam { name: "sigma", value: sigma, expected: "[0, 1)" });
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(HpeError::InvalidParam { name: "tau", value: tau, expected: "(0, 1)" });
        }
        if rho <= 0.0 {
            return Err(HpeError::InvalidParam { name: "rho", value: rho, expected: "> 0" });
        }
        Ok(HpeParams {
            eta0,
            sigma,
            tau,
            rho,
            max_cycles: 60,
            max_inner_iters: 1_000_000,
            warm_start: true,
        })
    }

    pub fn with_limits(mut self, max_cycles: usize, max_inner_iters: usize) -> Self {
        self.max_cycles = max_cycles;
        self.max_inner_iters = max_inner_iters;
        self
    }

    pub fn with_warm_start(mut self, warm_start: bool) -> Self {
        self.warm_start = warm_start;
        self
    }
}

/// Element of the space the loop iterates over.
pub trait Point: Clone {
    fn sub(&self, other: &Self) -> Self;
    fn scale(&self, t: f64) -> Self;
}

impl Point for DVector<f64> {
    fn sub(&self, other: &Self) -> Self {
        self - other
    }

    fn scale(&self, t: f64) -> Self {
        self * t
    }
}

impl Point for crate::operators::BlockPoint {
    fn sub(&self, other: &Self) -> Self {
        crate::operators::BlockPoint::sub(self, other)
    }

    fn scale(&self, t: f64) -> Self {
        crate::operators::BlockPoint::scale(self, t)
    }
}

/// Seminorm used by the stopping rules.
pub trait Metric<P: Point> {
    fn norm(&self, p: &P) -> f64;
}

impl Metric<DVector<f64>> for PsdOperator {
    fn norm(&self, p: &DVector<f64>) -> f64 {
        seminorm(self, p).expect("metric evaluation failed")
    }
}

impl Metric<crate::operators::BlockPoint> for crate::operators::QMetric {
    fn norm(&self, p: &crate::operators::BlockPoint) -> f64 {
        crate::operators::QMetric::norm(self, p).expect("metric evaluation failed")
    }
}

/// One step-1 result.
pub struct StepTriple<P> {
    pub z: P,
    pub z_tilde: P,
    pub eta: f64,
}

/// Produces `(z_k, z̃_k, η_k)` claimed to satisfy the inclusion and error
/// conditions for the current `μ` and center `z₀`.
pub trait StepOracle {
    type P: Point;

    fn produce(
        &mut self,
        z_prev: &Self::P,
        mu: f64,
        z0: &Self::P,
    ) -> Result<StepTriple<Self::P>, HpeError>;
}

#[derive(Debug, Clone)]
pub struct HpeOutput<P> {
    pub z_tilde: P,
    pub v: P,
    pub cycles: usize,
    pub total_iters: usize,
    pub per_cycle_iters: Vec<usize>,
    pub final_mu: f64,
}

/// Runs the loop until `‖v‖_M ≤ ρ` or a limit is hit.
pub fn hpe_run<P, O, M>(
    oracle: &mut O,
    z0: &P,
    metric: &M,
    params: &HpeParams,
) -> Result<HpeOutput<P>, HpeError>
where
    P: Point,
    O: StepOracle<P = P>,
    M: Metric<P>,
{
    let mut mu = 1.0;
    let mut cycles = 1usize;
    let mut total_iters = 0usize;
    let mut per_cycle_iters = vec![0usize];
    let mut z_prev = z0.clone();

    loop {
        let step = oracle.produce(&z_prev, mu, z0)?;
        total_iters += 1;
        *per_cycle_iters.last_mut().expect("nonempty") += 1;
        if total_iters > params.max_inner_iters {
            return Err(HpeError::NonConvergence { cycles, total_iters, mu });
        }

        let diff = z_prev.sub(&step.z);
        if metric.norm(&diff) <= params.rho / 2.0 {
            let v = diff.sub(&step.z_tilde.sub(z0).scale(mu));
            if metric.norm(&v) <= params.rho {
                return Ok(HpeOutput {
                    z_tilde: step.z_tilde,
                    v,
                    cycles,
                    total_iters,
                    per_cycle_iters,
                    final_mu: mu,
                });
            }
            cycles += 1;
            if cycles > params.max_cycles {
                return Err(HpeError::NonConvergence { cycles: cycles - 1, total_iters, mu });
            }
            mu /= 2.0;
            per_cycle_iters.push(0);
            z_prev = if params.warm_start { step.z } else { z0.clone() };
        } else {
            z_prev = step.z;
        }
    }
}

/// `T(z) = Gz + h` with monotone (PSD) `G`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl AffineOperator {
    pub fn new(g: DMatrix<f64>, h: DVector<f64>) -> Self {
        assert_eq!(g.nrows(), g.ncols(), "affine operator matrix must be square");
        assert_eq!(g.nrows(), h.len(), "affine operator dimensions must agree");
        AffineOperator { g, h }
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.g * z + &self.h
    }

    /// A zero of `T` (unique when `G` is nonsingular).
    pub fn zero_of(&self) -> Result<DVector<f64>, HpeError> {
        self.g.clone().lu().solve(&(-&self.h)).ok_or(HpeError::SingularSystem)
    }
}

/// Solves the regularized inclusion exactly: the unique `z̄_μ` with
/// `0 = T(z̄_μ) + μM(z̄_μ − z₀)`, i.e. `(G + μM) z = μM z₀ − h`.
pub fn regularized_solution_affine(
    op: &AffineOperator,
    z0: &DVector<f64>,
    mu: f64,
    metric: &PsdOperator,
) -> Result<DVector<f64>, HpeError> {
    let system = &op.g + metric.to_dense() * mu;
    let rhs = metric.apply(z0).expect("metric dimension") * mu - &op.h;
    system.lu().solve(&rhs).ok_or(HpeError::SingularSystem)
}

/// Checks `‖z₀ − z̄_μ‖_M ≤ ‖z₀ − z̄‖_M` for the computed regularized and
/// unregularized solutions.
pub fn check_reldist(
    op: &AffineOperator,
    z0: &DVector<f64>,
    mu: f64,
    metric: &PsdOperator,
) -> Result<bool, HpeError> {
    let z_mu = regularized_solution_affine(op, z0, mu, metric)?;
    let z_bar = op.zero_of()?;
    let lhs = seminorm(metric, &(z0 - z_mu)).map_err(|e| HpeError::Oracle(e.to_string()))?;
    let rhs = seminorm(metric, &(z0 - z_bar)).map_err(|e| HpeError::Oracle(e.to_string()))?;
    Ok(lhs <= rhs + 1e-10)
}

/// Exact proximal step oracle for an affine operator: solves
/// `M(z_{k−1} − z_k) = T(z_k) + μM(z_k − z₀)` and returns `z̃_k = z_k`,
/// `η_k = 0`.
pub struct AffineProxOracle {
    pub op: AffineOperator,
    pub metric: PsdOperator,
}

impl StepOracle for AffineProxOracle {
    type P = DVector<f64>;

    fn produce(
        &mut self,
        z_prev: &DVector<f64>,
        mu: f64,
        z0: &DVector<f64>,
    ) -> Result<StepTriple<DVector<f64>>, HpeError> {
        let m_dense = self.metric.to_dense();
        let system = &self.op.g + &m_dense * (1.0 + mu);
        let rhs = &m_dense * z_prev + (&m_dense * z0) * mu - &self.op.h;
        let z = system.lu().solve(&rhs).ok_or(HpeError::SingularSystem)?;
        Ok(StepTriple { z: z.clone(), z_tilde: z, eta: 0.0 })
    }
}
