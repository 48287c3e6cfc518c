//! Analysis constants for the over-relaxed stepsize domain and per-iterate
//! verification of the solver's inclusion and error inequalities.
//!
//! The admissible stepsize interval is `θ ∈ (0, (1−α+√(α²+6α+5))/2)`. For
//! `θ < 1` the error condition holds with `σ = θ + (θ−1)²` and no memory
//! term. For `θ ≥ 1` a feasibility parameter `τ̄ ∈ (0, ½)` is picked on a
//! dyadic grid and
//!
//! ```text
//! σ̄ = (b + √(b² − 4ac)) / (2a)
//! ```
//!
//! with `(a, b, c)` the stepsize polynomials; `σ̄` is the largest root of
//! `det(G(σ)) = 0` for the 2×2 comparison matrix `G`, and a memory sequence
//! `η_k` built from the iterate differences makes the error condition hold.
//!
//! Every check here consumes explicit subgradient witnesses recorded by the
//! solver; nothing is re-derived from the iterates.

use nalgebra::{DVector, Matrix2};
use serde::Serialize;
use thiserror::Error;

use crate::dradmm::{theta_bound, Certificate, IterateRecord, IterateTrace};
use crate::objectives::SeparableProblem;
use crate::operators::{BlockPoint, QMetric};

/// Dyadic grid resolution for the feasibility parameter search.
const TAU_GRID_SCALE: f64 = 1024.0;
const TAU_GRID_MAX_INDEX: usize = 511;

/// Relative tolerance for the identity checks (inclusion blocks, multiplier
/// identity) and the inequality checks (slack ≥ −tol).
pub const INCLUSION_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-9;
pub const INEQUALITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("theta = {theta} outside [1, {bound}) for alpha = {alpha}")]
    ThetaOutOfRegime { theta: f64, alpha: f64, bound: f64 },
    #[error("theta = {0} outside the admissible stepsize domain")]
    ThetaOutOfDomain(f64),
    #[error("feasibility condition violated for (theta, alpha, tau) = ({theta}, {alpha}, {tau}): {condition}")]
    Infeasible { theta: f64, alpha: f64, tau: f64, condition: &'static str },
    #[error("no feasible tau on the dyadic grid for (theta, alpha) = ({theta}, {alpha}); this contradicts the stepsize-domain analysis")]
    NoFeasibleTau { theta: f64, alpha: f64 },
    #[error("eta coefficient {name} = {value:.3e} is negative beyond tolerance")]
    NegativeEtaCoefficient { name: &'static str, value: f64 },
    #[error("no known solution attached to the problem instance")]
    NoKnownSolution,
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    ThetaBelowOne,
    ThetaAtLeastOne,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::ThetaBelowOne => write!(f, "theta_lt_1"),
            Regime::ThetaAtLeastOne => write!(f, "theta_ge_1"),
        }
    }
}

/// The `θ ≥ 1` regime constants.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisConstants {
    pub theta: f64,
    pub alpha: f64,
    pub tau_bar: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sigma_bar: f64,
    pub g_at_sigma_bar: Matrix2<f64>,
    pub regime: Regime,
}

/// The stepsize polynomials:
///
/// ```text
/// a = (1−τ̄)(1+α)(1+θ) − α − (1−θ)²
/// b = [(1−τ̄)(1+α)(1+θ) − α − 2(1−θ)](1−θ)² − ατ̄(1−θ) + 1 − τ̄
/// c = [1 − τ̄ − ατ̄(1−θ) − (1−θ)²](1−θ)²
/// ```
pub fn abc(theta: f64, alpha: f64, tau_bar: f64) -> (f64, f64, f64) {
    let omt = 1.0 - theta;
    let omt2 = omt * omt;
    let common = (1.0 - tau_bar) * (1.0 + alpha) * (1.0 + theta) - alpha;
    let a = common - omt2;
    let b = (common - 2.0 * omt) * omt2 - alpha * tau_bar * omt + 1.0 - tau_bar;
    let c = (1.0 - tau_bar - alpha * tau_bar * omt - omt2) * omt2;
    (a, b, c)
}

/// The comparison matrix
///
/// ```text
/// G(σ) = [ (1−τ̄)[σ(1+θ)−1] + α[θσ − τ̄(σ+θ+σθ−1)]   (σ+θ−1)(1−θ) ]
///        [ (σ+θ−1)(1−θ)                               σ − (1−θ)²   ]
/// ```
pub fn g_matrix(sigma: f64, theta: f64, alpha: f64, tau_bar: f64) -> Matrix2<f64> {
    let omt = 1.0 - theta;
    let g11 = (1.0 - tau_bar) * (sigma * (1.0 + theta) - 1.0)
        + alpha * (theta * sigma - tau_bar * (sigma + theta + sigma * theta - 1.0));
    let g12 = (sigma + theta - 1.0) * omt;
    let g22 = sigma - omt * omt;
    Matrix2::new(g11, g12, g12, g22)
}

fn feasibility(theta: f64, alpha: f64, tau: f64) -> Result<(f64, f64, f64, f64), CertifyError> {
    let (a, b, c) = abc(theta, alpha, tau);
    let fail = |condition| Err(CertifyError::Infeasible { theta, alpha, tau, condition });
    if !(a > 0.0) {
        return fail("a > 0");
    }
    if !(b > 0.0) {
        return fail("b > 0");
    }
    if !(a - b + c > 0.0) {
        return fail("a - b + c > 0");
    }
    let disc = b * b - 4.0 * a * c;
    // guard against rounding when the discriminant is an exact zero
    let disc_slack = 1e-12 * (b * b).max((4.0 * a * c).abs()).max(1.0);
    if disc < -disc_slack {
        return fail("b^2 - 4ac >= 0");
    }
    Ok((a, b, c, disc.max(0.0)))
}

/// The three lower bounds that `σ̄` must dominate:
/// `(1−θ)²`, `τ̄(θ−1)/((1−τ̄)θ−τ̄)`, and
/// `(1−τ̄[1+α(1−θ)])/((1−τ̄)(1+α)(1+θ)−α)`.
pub fn sigma_lower_bounds(theta: f64, alpha: f64, tau_bar: f64) -> [f64; 3] {
    let omt = 1.0 - theta;
    let t1 = omt * omt;
    let t2 = tau_bar * (theta - 1.0) / ((1.0 - tau_bar) * theta - tau_bar);
    let t3 = (1.0 - tau_bar * (1.0 + alpha * omt))
        / ((1.0 - tau_bar) * (1.0 + alpha) * (1.0 + theta) - alpha);
    [t1, t2, t3]
}

/// `σ̄ = (b + √(b² − 4ac))/(2a)`, requiring the feasibility conditions; the
/// result is the largest root of `det(G(σ)) = 0` and lies in `(0, 1)`.
pub fn sigma_bar(theta: f64, alpha: f64, tau_bar: f64) -> Result<f64, CertifyError> {
    let (a, b, _c, disc) = feasibility(theta, alpha, tau_bar)?;
    let sigma = (b + disc.sqrt()) / (2.0 * a);
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(CertifyError::Infeasible {
            theta,
            alpha,
            tau: tau_bar,
            condition: "sigma in (0, 1)",
        });
    }
    Ok(sigma)
}

fn tau_feasible(theta: f64, alpha: f64, tau: f64) -> bool {
    let Ok(sigma) = sigma_bar(theta, alpha, tau) else { return false };
    sigma_lower_bounds(theta, alpha, tau).iter().all(|t| *t <= sigma + 1e-10)
}

/// Largest feasible `τ̄` on the dyadic grid `{j·2⁻¹⁰ : j = 1..511}`;
/// deterministic. Larger `τ̄` improves the outer complexity constant, so the
/// scan runs from above.
pub fn find_tau(theta: f64, alpha: f64) -> Result<f64, CertifyError> {
    let bound = theta_bound(alpha);
    if !(1.0..).contains(&theta) || theta >= bound {
        return Err(CertifyError::ThetaOutOfRegime { theta, alpha, bound });
    }
    for j in (1..=TAU_GRID_MAX_INDEX).rev() {
        let tau = j as f64 / TAU_GRID_SCALE;
        if tau_feasible(theta, alpha, tau) {
            return Ok(tau);
        }
    }
    Err(CertifyError::NoFeasibleTau { theta, alpha })
}

/// Full `θ ≥ 1` constant set for a stepsize/proximal-factor pair.
pub fn analysis_constants(theta: f64, alpha: f64) -> Result<AnalysisConstants, CertifyError> {
    let tau_bar = find_tau(theta, alpha)?;
    let (a, b, c) = abc(theta, alpha, tau_bar);
    let sigma = sigma_bar(theta, alpha, tau_bar)?;
    Ok(AnalysisConstants {
        theta,
        alpha,
        tau_bar,
        a,
        b,
        c,
        sigma_bar: sigma,
        g_at_sigma_bar: g_matrix(sigma, theta, alpha, tau_bar),
        regime: Regime::ThetaAtLeastOne,
    })
}

/// Error-condition parameters for the whole stepsize domain.
#[derive(Debug, Clone, Serialize)]
pub enum ErrorConditionParams {
    /// `θ ∈ (0, 1)`: any `τ` works (fixed to ½ here), `σ = θ + (θ−1)²`,
    /// `η ≡ 0`.
    SmallTheta { sigma: f64, tau: f64 },
    /// `θ ∈ [1, bound)`: `(σ̄, τ̄)` from the grid search plus the `η` rule.
    LargeTheta { constants: AnalysisConstants },
}

impl ErrorConditionParams {
    pub fn sigma(&self) -> f64 {
        match self {
            ErrorConditionParams::SmallTheta { sigma, .. } => *sigma,
            ErrorConditionParams::LargeTheta { constants } => constants.sigma_bar,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            ErrorConditionParams::SmallTheta { tau, .. } => *tau,
            ErrorConditionParams::LargeTheta { constants } => constants.tau_bar,
        }
    }

    pub fn regime(&self) -> Regime {
        match self {
            ErrorConditionParams::SmallTheta { .. } => Regime::ThetaBelowOne,
            ErrorConditionParams::LargeTheta { .. } => Regime::ThetaAtLeastOne,
        }
    }
}

/// Picks the regime for `θ` and returns its `(σ, τ, η)` parameters.
pub fn proposition_params(theta: f64, alpha: f64) -> Result<ErrorConditionParams, CertifyError> {
    let bound = theta_bound(alpha);
    if theta <= 0.0 || theta >= bound {
        return Err(CertifyError::ThetaOutOfDomain(theta));
    }
    if theta < 1.0 {
        Ok(ErrorConditionParams::SmallTheta {
            sigma: theta + (theta - 1.0) * (theta - 1.0),
            tau: 0.5,
        })
    } else {
        Ok(ErrorConditionParams::LargeTheta { constants: analysis_constants(theta, alpha)? })
    }
}

/// `‖w‖²` in the operator `αβBᵀB + S` (the y-memory seminorm of the η rule;
/// note `α`, not `1+α`).
fn y_memory_normsq(q: &QMetric, w: &DVector<f64>) -> f64 {
    q.alpha * q.beta * (&q.b * w).norm_squared()
        + q.s.quad_form(w).expect("dimension checked upstream")
}

/// The memory sequence of the `θ ≥ 1` regime:
///
/// ```text
/// η₀ = 4(σ̄+θ−1)·d₀ / ((2−θ)(1−τ̄))
/// η_k = (σ̄−(θ−1)²)/(βθ³)·‖Δγ_k‖² + (σ̄+θ−1)/(θ(1−τ̄))·‖Δy_k‖²_{αβBᵀB+S}
/// ```
///
/// `d0_bound` must upper-bound the **squared** seminorm distance from the
/// start point to the solution set; that is the quantity the `k = 1` error
/// bound consumes.
#[derive(Debug, Clone, Serialize)]
pub struct EtaSequence {
    pub eta0: f64,
    pub d0_bound: f64,
    /// Aligned with the trace records it was computed from.
    pub values: Vec<f64>,
}

pub fn eta_coefficients(constants: &AnalysisConstants, beta: f64) -> Result<(f64, f64), CertifyError> {
    let theta = constants.theta;
    let sigma = constants.sigma_bar;
    let gamma_coeff = (sigma - (theta - 1.0) * (theta - 1.0)) / (beta * theta.powi(3));
    let y_coeff = (sigma + theta - 1.0) / (theta * (1.0 - constants.tau_bar));
    for (name, value) in [("gamma", gamma_coeff), ("y", y_coeff)] {
        if value < -1e-10 {
            return Err(CertifyError::NegativeEtaCoefficient { name, value });
        }
    }
    Ok((gamma_coeff.max(0.0), y_coeff.max(0.0)))
}

pub fn eta_for_record(
    record: &IterateRecord,
    constants: &AnalysisConstants,
    q: &QMetric,
) -> Result<f64, CertifyError> {
    let (gamma_coeff, y_coeff) = eta_coefficients(constants, q.beta)?;
    Ok(gamma_coeff * record.dgamma.norm_squared() + y_coeff * y_memory_normsq(q, &record.dy))
}

pub fn eta_zero(constants: &AnalysisConstants, d0_bound: f64) -> Result<f64, CertifyError> {
    let theta = constants.theta;
    if theta >= 2.0 {
        return Err(CertifyError::ThetaOutOfDomain(theta));
    }
    Ok(4.0 * (constants.sigma_bar + theta - 1.0) * d0_bound
        / ((2.0 - theta) * (1.0 - constants.tau_bar)))
}

/// Evaluates the η rule over a whole trace.
pub fn eta_sequence(
    trace: &IterateTrace,
    constants: &AnalysisConstants,
    d0_bound: f64,
    q: &QMetric,
) -> Result<EtaSequence, CertifyError> {
    let eta0 = eta_zero(constants, d0_bound)?;
    let values = trace
        .records
        .iter()
        .map(|rec| eta_for_record(rec, constants, q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EtaSequence { eta0, d0_bound, values })
}

/// Seminorm distance from the start point to the declared solution, an upper
/// bound on the distance to the solution set (exact for singletons). Square
/// it before feeding the η rule or the `k = 1` memory bound.
pub fn d0_upper(
    problem: &SeparableProblem,
    z0: &BlockPoint,
    q: &QMetric,
) -> Result<f64, CertifyError> {
    let sol = problem.known_solution.as_ref().ok_or(CertifyError::NoKnownSolution)?;
    let z_star = BlockPoint::new(sol.x.clone(), sol.y.clone(), sol.gamma.clone());
    Ok(q.norm(&z0.sub(&z_star))?)
}

/// A residual paired with the scale that makes it comparable across an
/// entire run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlockResidual {
    pub residual: f64,
    pub scale: f64,
}

impl BlockResidual {
    pub fn violation(&self) -> f64 {
        self.residual / self.scale
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.violation() <= tol
    }
}

/// Verifies the per-iterate inclusion with the regularization term:
/// each block of `QΔz − μQ(z̃−z₀)` must equal the operator block built from
/// the recorded witnesses. Returns the worst block residual and its scale.
pub fn check_inclusion_aux0(
    record: &IterateRecord,
    problem: &SeparableProblem,
    q: &QMetric,
    z0: &BlockPoint,
) -> BlockResidual {
    let mu = record.mu;
    // x block: R Δx  vs  (f_wit − Aᵀγ̃) + μR(x − x₀)
    let lhs_x = q.r.apply(&record.dx).expect("dims");
    let rhs_x = &record.f_witness - problem.a.transpose() * &record.gamma_tilde
        + q.r.apply(&(&record.x - &z0.x)).expect("dims") * mu;
    // y block: ((1+α)βBᵀB + S) Δy  vs  (g_wit − Bᵀγ̃) + μ((1+α)βBᵀB + S)(y − y₀)
    let y_op = |w: &DVector<f64>| {
        q.b.transpose() * (&q.b * w) * ((1.0 + q.alpha) * q.beta)
            + q.s.apply(w).expect("dims")
    };
    let lhs_y = y_op(&record.dy);
    let rhs_y = &record.g_witness - problem.b_mat.transpose() * &record.gamma_tilde
        + y_op(&(&record.y - &z0.y)) * mu;
    // γ block: Δγ/(βθ)  vs  (Ax + By − b) + μ(γ̃ − γ₀)/(βθ)
    let inv_tb = 1.0 / (q.theta * q.beta);
    let lhs_g = &record.dgamma * inv_tb;
    let rhs_g = &problem.a * &record.x + &problem.b_mat * &record.y - &problem.rhs
        + (&record.gamma_tilde - &z0.gamma) * (mu * inv_tb);

    let mut residual = 0.0f64;
    let mut magnitude = 0.0f64;
    for (lhs, rhs) in [(&lhs_x, &rhs_x), (&lhs_y, &rhs_y), (&lhs_g, &rhs_g)] {
        residual = residual.max((lhs - rhs).norm());
        magnitude = magnitude.max(lhs.norm()).max(rhs.norm());
    }
    BlockResidual { residual, scale: 1.0 + magnitude }
}

/// Terminal inclusion check: `Qv` must match the operator blocks at
/// `(x, y, γ̃)` built from the final witnesses, the witnesses must lie in the
/// relevant subdifferentials, and `‖v‖_Q ≤ ρ` is recomputed.
#[derive(Debug, Clone, Serialize)]
pub struct FinalInclusionReport {
    pub inclusion: BlockResidual,
    pub witness_f_distance: f64,
    pub witness_g_distance: f64,
    pub v_norm: f64,
    pub rho: f64,
}

impl FinalInclusionReport {
    pub fn passes(&self) -> bool {
        self.inclusion.passes(INCLUSION_TOL)
            && self.witness_f_distance <= INCLUSION_TOL * self.inclusion.scale
            && self.witness_g_distance <= INCLUSION_TOL * self.inclusion.scale
            && self.v_norm <= self.rho
    }
}

pub fn check_inclusion_a467(
    certificate: &Certificate,
    problem: &SeparableProblem,
    q: &QMetric,
    rho: f64,
) -> FinalInclusionReport {
    let lhs_x = q.r.apply(&certificate.vx).expect("dims");
    let rhs_x = &certificate.f_witness - problem.a.transpose() * &certificate.gamma_tilde;
    let lhs_y = q.b.transpose() * (&q.b * &certificate.vy) * ((1.0 + q.alpha) * q.beta)
        + q.s.apply(&certificate.vy).expect("dims");
    let rhs_y = &certificate.g_witness - problem.b_mat.transpose() * &certificate.gamma_tilde;
    let lhs_g = &certificate.vgamma * (1.0 / (q.theta * q.beta));
    let rhs_g = &problem.a * &certificate.x + &problem.b_mat * &certificate.y - &problem.rhs;

    let mut residual = 0.0f64;
    let mut magnitude = 0.0f64;
    for (lhs, rhs) in [(&lhs_x, &rhs_x), (&lhs_y, &rhs_y), (&lhs_g, &rhs_g)] {
        residual = residual.max((lhs - rhs).norm());
        magnitude = magnitude.max(lhs.norm()).max(rhs.norm());
    }
    let v_norm = q.norm(&certificate.v()).expect("dims");
    FinalInclusionReport {
        inclusion: BlockResidual { residual, scale: 1.0 + magnitude },
        witness_f_distance: problem.f.subdiff_distance(&certificate.x, &certificate.f_witness),
        witness_g_distance: problem.g.subdiff_distance(&certificate.y, &certificate.g_witness),
        v_norm,
        rho,
    }
}

/// `‖z_k − z̃_k‖²_Q`; only the multiplier block differs.
fn z_minus_tilde_normsq(q: &QMetric, rec: &IterateRecord) -> f64 {
    (&rec.gamma - &rec.gamma_tilde).norm_squared() / (q.beta * q.theta)
}

/// `‖z_{k−1} − z̃_k‖²_Q` from the stored differences.
fn zprev_minus_tilde_normsq(q: &QMetric, rec: &IterateRecord) -> f64 {
    let gamma_prev = &rec.gamma + &rec.dgamma;
    let diff = BlockPoint::new(rec.dx.clone(), rec.dy.clone(), gamma_prev - &rec.gamma_tilde);
    q.norm_squared(&diff).expect("dims")
}

/// Signed violation of the error condition
/// `‖z_k − z̃_k‖² + η_k ≤ σ‖z_{k−1} − z̃_k‖² + (1−τ)η_{k−1}`,
/// normalized by `1 + RHS`; nonpositive means satisfied.
pub fn es2_violation(
    record: &IterateRecord,
    q: &QMetric,
    sigma: f64,
    tau: f64,
    eta_prev: f64,
    eta_k: f64,
) -> f64 {
    let lhs = z_minus_tilde_normsq(q, record) + eta_k;
    let rhs = sigma * zprev_minus_tilde_normsq(q, record) + (1.0 - tau) * eta_prev;
    (lhs - rhs) / (1.0 + rhs)
}

#[derive(Debug, Clone, Serialize)]
pub struct Es2Entry {
    pub cycle: usize,
    pub k: usize,
    pub violation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Es2Report {
    pub entries: Vec<Es2Entry>,
    pub skipped_gaps: usize,
    pub worst_violation: f64,
    pub all_pass: bool,
}

/// Evaluates the error condition at every `k` available in the trace. The
/// memory value `η_{k−1}` at `k = 1` of each cycle is `η₀`; gaps from trace
/// sampling are skipped and counted.
pub fn check_es2(
    trace: &IterateTrace,
    q: &QMetric,
    sigma: f64,
    tau: f64,
    eta: &EtaSequence,
) -> Es2Report {
    let mut entries = Vec::with_capacity(trace.records.len());
    let mut skipped = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for (i, rec) in trace.records.iter().enumerate() {
        let eta_k = eta.values.get(i).copied().unwrap_or(0.0);
        let eta_prev = if rec.k == 1 {
            Some(eta.eta0)
        } else if i > 0 {
            let prev = &trace.records[i - 1];
            (prev.cycle == rec.cycle && prev.k + 1 == rec.k).then(|| eta.values[i - 1])
        } else {
            None
        };
        let Some(eta_prev) = eta_prev else {
            skipped += 1;
            continue;
        };
        let violation = es2_violation(rec, q, sigma, tau, eta_prev, eta_k);
        worst = worst.max(violation);
        entries.push(Es2Entry {
            cycle: rec.cycle,
            k: rec.k,
            violation,
            pass: violation <= INEQUALITY_TOL,
        });
    }
    let all_pass = entries.iter().all(|e| e.pass);
    Es2Report {
        entries,
        skipped_gaps: skipped,
        worst_violation: if worst.is_finite() { worst } else { 0.0 },
        all_pass,
    }
}

/// Violation of the multiplier identity
/// `γ̃_k − γ_{k−1} = −βBΔy_k − Δγ_k/θ`, normalized by `1 + ‖γ̃_k‖`.
pub fn lemma_a_violation(record: &IterateRecord, q: &QMetric) -> f64 {
    let gamma_prev = &record.gamma + &record.dgamma;
    let lhs = &record.gamma_tilde - gamma_prev;
    let rhs = -(&q.b * &record.dy) * q.beta - &record.dgamma / q.theta;
    (lhs - rhs).norm() / (1.0 + record.gamma_tilde.norm())
}

/// Signed violation of the `k ≥ 2` cross-term inequality
/// `2⟨BΔy_k, Δγ_k⟩ ≥ 2(1−θ)⟨BΔy_k, Δγ_{k−1}⟩ + θ‖Δy_k‖²_m − θ‖Δy_{k−1}‖²_m`
/// with `‖·‖_m` the `αβBᵀB + S` seminorm.
pub fn lemma_c_violation(record: &IterateRecord, prev: &IterateRecord, q: &QMetric) -> f64 {
    let b_dy = &q.b * &record.dy;
    let lhs = 2.0 * b_dy.dot(&record.dgamma);
    let rhs = 2.0 * (1.0 - q.theta) * b_dy.dot(&prev.dgamma)
        + q.theta * y_memory_normsq(q, &record.dy)
        - q.theta * y_memory_normsq(q, &prev.dy);
    (rhs - lhs) / (1.0 + rhs.abs())
}

/// Signed violation of the `k = 1` memory bound
/// `⟨BΔy₁, Δγ₁⟩/θ ≥ ½‖Δy₁‖²_{αβBᵀB+S} − 2θd₀/(2−θ)`; `d0_bound` bounds the
/// squared seminorm distance to the solution set.
pub fn lemma_b_violation(record: &IterateRecord, q: &QMetric, d0_bound: f64) -> f64 {
    let lhs = (&q.b * &record.dy).dot(&record.dgamma) / q.theta;
    let rhs = 0.5 * y_memory_normsq(q, &record.dy)
        - 2.0 * q.theta * d0_bound / (2.0 - q.theta);
    (rhs - lhs) / (1.0 + rhs.abs())
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct LemmaDeltakReport {
    pub identity_checked: usize,
    pub identity_worst: f64,
    pub cross_checked: usize,
    pub cross_skipped: usize,
    pub cross_worst: f64,
    pub memory_checked: usize,
    pub memory_worst: f64,
    pub all_pass: bool,
}

/// Runs the multiplier identity at every `k`, the cross-term inequality at
/// every consecutive pair, and (when a `d₀` bound is supplied and `θ ≥ 1`)
/// the `k = 1` memory bound.
pub fn check_lemma_deltak(
    trace: &IterateTrace,
    q: &QMetric,
    d0_bound: Option<f64>,
) -> LemmaDeltakReport {
    let mut report = LemmaDeltakReport { all_pass: true, ..Default::default() };
    let mut worst_identity = f64::NEG_INFINITY;
    let mut worst_cross = f64::NEG_INFINITY;
    let mut worst_memory = f64::NEG_INFINITY;
    for (i, rec) in trace.records.iter().enumerate() {
        let v = lemma_a_violation(rec, q);
        report.identity_checked += 1;
        worst_identity = worst_identity.max(v);
        if v > IDENTITY_TOL {
            report.all_pass = false;
        }
        if rec.k >= 2 {
            let prev = (i > 0).then(|| &trace.records[i - 1]).filter(|p| {
                p.cycle == rec.cycle && p.k + 1 == rec.k
            });
            match prev {
                Some(prev) => {
                    let v = lemma_c_violation(rec, prev, q);
                    report.cross_checked += 1;
                    worst_cross = worst_cross.max(v);
                    if v > INEQUALITY_TOL {
                        report.all_pass = false;
                    }
                }
                None => report.cross_skipped += 1,
            }
        }
        if rec.k == 1 && q.theta >= 1.0 {
            if let Some(d0) = d0_bound {
                let v = lemma_b_violation(rec, q, d0);
                report.memory_checked += 1;
                worst_memory = worst_memory.max(v);
                if v > INEQUALITY_TOL {
                    report.all_pass = false;
                }
            }
        }
    }
    let clean = |w: f64| if w.is_finite() { w } else { 0.0 };
    report.identity_worst = clean(worst_identity);
    report.cross_worst = clean(worst_cross);
    report.memory_worst = clean(worst_memory);
    report
}

// ---------------------------------------------------------------------------
// Streaming checker and aggregated report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub failures: usize,
    pub worst_violation: f64,
    pub tolerance: f64,
}

impl CheckSummary {
    fn new(name: &str, tolerance: f64) -> Self {
        CheckSummary {
            name: name.to_string(),
            checked: 0,
            skipped: 0,
            failures: 0,
            worst_violation: f64::NEG_INFINITY,
            tolerance,
        }
    }

    fn record(&mut self, violation: f64) {
        self.checked += 1;
        self.worst_violation = self.worst_violation.max(violation);
        if violation > self.tolerance {
            self.failures += 1;
        }
    }

    pub fn pass(&self) -> bool {
        self.failures == 0
    }

    fn worst(&self) -> f64 {
        if self.worst_violation.is_finite() {
            self.worst_violation
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub regime: Regime,
    pub sigma: f64,
    pub tau: f64,
    pub eta0: Option<f64>,
    pub d0_bound: Option<f64>,
    pub checks: Vec<CheckSummary>,
    pub notes: Vec<String>,
}

impl CertificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(CheckSummary::pass)
    }

    /// Human-readable rendering, one line per check.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("certification report\n");
        out.push_str(&format!(
            "regime={} sigma={:.12} tau={:.12}\n",
            self.regime, self.sigma, self.tau
        ));
        if let Some(eta0) = self.eta0 {
            out.push_str(&format!(
                "eta0={:.6e} (d0_bound={:.6e})\n",
                eta0,
                self.d0_bound.unwrap_or(f64::NAN)
            ));
        }
        for check in &self.checks {
            out.push_str(&format!(
                "[{}] {}: checked={} skipped={} worst_violation={:.3e} tolerance={:.0e}\n",
                if check.pass() { "PASS" } else { "FAIL" },
                check.name,
                check.checked,
                check.skipped,
                check.worst(),
                check.tolerance,
            ));
        }
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out.push_str(&format!("overall: {}\n", if self.all_pass() { "PASS" } else { "FAIL" }));
        out
    }

    /// Machine-readable `key=value` rendering.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("regime={}\n", self.regime));
        out.push_str(&format!("sigma={:.17e}\n", self.sigma));
        out.push_str(&format!("tau={:.17e}\n", self.tau));
        if let Some(eta0) = self.eta0 {
            out.push_str(&format!("eta0={eta0:.17e}\n"));
        }
        if let Some(d0) = self.d0_bound {
            out.push_str(&format!("d0_bound={d0:.17e}\n"));
        }
        for check in &self.checks {
            let key = check.name.replace(' ', "_");
            out.push_str(&format!("check.{key}.pass={}\n", check.pass()));
            out.push_str(&format!("check.{key}.checked={}\n", check.checked));
            out.push_str(&format!("check.{key}.skipped={}\n", check.skipped));
            out.push_str(&format!("check.{key}.worst_violation={:.17e}\n", check.worst()));
            out.push_str(&format!("check.{key}.tolerance={:.3e}\n", check.tolerance));
        }
        out.push_str(&format!("overall_pass={}\n", self.all_pass()));
        out
    }
}

/// Per-iterate checker usable in streaming mode (via an observer) or over a
/// stored trace; keeps only the previous record.
pub struct TraceChecker<'a> {
    problem: &'a SeparableProblem,
    q: &'a QMetric,
    z0: &'a BlockPoint,
    params: ErrorConditionParams,
    eta0: Option<f64>,
    d0_bound: Option<f64>,
    gamma_coeff: f64,
    y_coeff: f64,
    prev: Option<(IterateRecord, f64)>,
    aux0: CheckSummary,
    identity: CheckSummary,
    cross: CheckSummary,
    memory: CheckSummary,
    es2: CheckSummary,
    notes: Vec<String>,
}

impl<'a> TraceChecker<'a> {
    /// `d0_bound`, when given, must bound the squared seminorm distance from
    /// the start point to the solution set; without it the memory-dependent
    /// checks are skipped in the `θ ≥ 1` regime.
    pub fn new(
        problem: &'a SeparableProblem,
        q: &'a QMetric,
        z0: &'a BlockPoint,
        d0_bound: Option<f64>,
    ) -> Result<Self, CertifyError> {
        let params = proposition_params(q.theta, q.alpha)?;
        let mut notes = Vec::new();
        let (eta0, gamma_coeff, y_coeff) = match &params {
            ErrorConditionParams::SmallTheta { .. } => (Some(0.0), 0.0, 0.0),
            ErrorConditionParams::LargeTheta { constants } => {
                let (gc, yc) = eta_coefficients(constants, q.beta)?;
                notes.push(format!(
                    "eta rule: eta_k = {gc:.6e}*|dgamma|^2 + {yc:.6e}*|dy|^2_(alpha*beta*B'B+S); \
                     eta0 = 4(sigma+theta-1)/((2-theta)(1-tau)) * d0_bound with d0_bound a squared distance"
                ));
                match d0_bound {
                    Some(d0) => (Some(eta_zero(constants, d0)?), gc, yc),
                    None => {
                        notes.push(
                            "no d0 bound supplied: error-condition and k=1 memory checks skipped"
                                .to_string(),
                        );
                        (None, gc, yc)
                    }
                }
            }
        };
        Ok(TraceChecker {
            problem,
            q,
            z0,
            params,
            eta0,
            d0_bound,
            gamma_coeff,
            y_coeff,
            prev: None,
            aux0: CheckSummary::new("inclusion per iterate", INCLUSION_TOL),
            identity: CheckSummary::new("multiplier identity", IDENTITY_TOL),
            cross: CheckSummary::new("cross-term inequality k>=2", INEQUALITY_TOL),
            memory: CheckSummary::new("memory bound k=1", INEQUALITY_TOL),
            es2: CheckSummary::new("error condition", INEQUALITY_TOL),
            notes,
        })
    }

    fn eta_of(&self, record: &IterateRecord) -> f64 {
        self.gamma_coeff * record.dgamma.norm_squared()
            + self.y_coeff * y_memory_normsq(self.q, &record.dy)
    }

    pub fn observe(&mut self, record: &IterateRecord) {
        self.aux0
            .record(check_inclusion_aux0(record, self.problem, self.q, self.z0).violation());
        self.identity.record(lemma_a_violation(record, self.q));

        let consecutive = self
            .prev
            .as_ref()
            .filter(|(p, _)| p.cycle == record.cycle && p.k + 1 == record.k);
        if record.k >= 2 {
            match consecutive {
                Some((prev, _)) => self.cross.record(lemma_c_violation(record, prev, self.q)),
                None => self.cross.skipped += 1,
            }
        }
        if record.k == 1 && self.params.regime() == Regime::ThetaAtLeastOne {
            match self.d0_bound {
                Some(d0) => self.memory.record(lemma_b_violation(record, self.q, d0)),
                None => self.memory.skipped += 1,
            }
        }

        let eta_k = self.eta_of(record);
        let eta_prev = if record.k == 1 {
            self.eta0
        } else {
            consecutive.map(|(_, eta)| *eta)
        };
        match eta_prev {
            Some(eta_prev) => self.es2.record(es2_violation(
                record,
                self.q,
                self.params.sigma(),
                self.params.tau(),
                eta_prev,
                eta_k,
            )),
            None => self.es2.skipped += 1,
        }

        self.prev = Some((record.clone(), eta_k));
    }

    /// Folds in the terminal certificate check and produces the report.
    pub fn finish(self, certificate: Option<(&Certificate, f64)>) -> CertificationReport {
        let mut checks =
            vec![self.aux0, self.identity, self.cross, self.memory, self.es2];
        if let Some((certificate, rho)) = certificate {
            let final_report = check_inclusion_a467(certificate, self.problem, self.q, rho);
            let mut summary = CheckSummary::new("terminal inclusion", INCLUSION_TOL);
            summary.record(final_report.inclusion.violation());
            summary.record(final_report.witness_f_distance / final_report.inclusion.scale);
            summary.record(final_report.witness_g_distance / final_report.inclusion.scale);
            checks.push(summary);
            let mut residual = CheckSummary::new("terminal residual bound", 0.0);
            residual.record(final_report.v_norm - rho);
            checks.push(residual);
        }
        CertificationReport {
            regime: self.params.regime(),
            sigma: self.params.sigma(),
            tau: self.params.tau(),
            eta0: self.eta0,
            d0_bound: self.d0_bound,
            checks,
            notes: self.notes,
        }
    }
}

/// Certifies a stored trace plus optional certificate in one call.
pub fn certify_trace(
    problem: &SeparableProblem,
    q: &QMetric,
    z0: &BlockPoint,
    trace: &IterateTrace,
    certificate: Option<(&Certificate, f64)>,
    d0_bound: Option<f64>,
) -> Result<CertificationReport, CertifyError> {
    let mut checker = TraceChecker::new(problem, q, z0, d0_bound)?;
    for record in &trace.records {
        checker.observe(record);
    }
    Ok(checker.finish(certificate))
}
