//! Positive-semidefinite operator algebra, seminorms, and the block metric
//! used by the solver and the certifier.
//!
//! The central object is [`QMetric`], the block-diagonal operator
//!
//! ```text
//! Q = diag( R,  (1+α)β BᵀB + S,  (θβ)⁻¹ I )
//! ```
//!
//! acting on triples `(x, y, γ)`. `Q` is stored structurally (blocks, not
//! assembled) because the same `Q` is reused across all regularization cycles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gram representations cache the assembled `MᵀM` up to this column count and
/// recompute it per apply beyond it.
const GRAM_CACHE_MAX_COLS: usize = 2000;

/// Radicand slack allowed before a seminorm evaluation is treated as a PSD
/// violation rather than rounding noise.
const PSD_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("dimension mismatch: operator expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("PSD violation: quadratic form {value:.3e} is negative beyond rounding slack")]
    PsdViolation { value: f64 },
}

/// A self-adjoint positive-semidefinite operator in one of a few structured
/// representations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PsdOperator {
    Zero { dim: usize },
    /// `c · I` with `c ≥ 0`.
    ScaledIdentity { dim: usize, scale: f64 },
    /// Diagonal with nonnegative entries.
    Diagonal { diag: DVector<f64> },
    /// Dense symmetric matrix.
    Dense { matrix: DMatrix<f64> },
    /// `c · MᵀM` for a stored factor `M`; the Gram matrix is cached for
    /// small column counts.
    ScaledGram {
        scale: f64,
        factor: DMatrix<f64>,
        #[serde(skip)]
        cached: Option<DMatrix<f64>>,
    },
}

impl PsdOperator {
    pub fn zero(dim: usize) -> Self {
        PsdOperator::Zero { dim }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        assert!(scale >= 0.0, "scaled identity requires a nonnegative scale");
        PsdOperator::ScaledIdentity { dim, scale }
    }

    pub fn diagonal(diag: DVector<f64>) -> Self {
        assert!(
            diag.iter().all(|&d| d >= 0.0),
            "diagonal representation requires nonnegative entries"
        );
        PsdOperator::Diagonal { diag }
    }

    /// Dense symmetric representation; the input is symmetrized to guard
    /// against rounding asymmetry in the caller.
    pub fn dense(matrix: DMatrix<f64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "dense operator must be square");
        let sym = (&matrix + matrix.transpose()) * 0.5;
        PsdOperator::Dense { matrix: sym }
    }

    /// `scale · MᵀM`. Caches the Gram matrix when `M` has at most
    /// [`GRAM_CACHE_MAX_COLS`] columns.
    pub fn scaled_gram(scale: f64, factor: DMatrix<f64>) -> Self {
        assert!(scale >= 0.0, "scaled Gram requires a nonnegative scale");
        let cached = if factor.ncols() <= GRAM_CACHE_MAX_COLS {
            Some(factor.transpose() * &factor)
        } else {
            None
        };
        PsdOperator::ScaledGram { scale, factor, cached }
    }

    pub fn dim(&self) -> usize {
        match self {
            PsdOperator::Zero { dim } => *dim,
            PsdOperator::ScaledIdentity { dim, .. } => *dim,
            PsdOperator::Diagonal { diag } => diag.len(),
            PsdOperator::Dense { matrix } => matrix.nrows(),
            PsdOperator::ScaledGram { factor, .. } => factor.ncols(),
        }
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<(), OperatorError> {
        if v.len() != self.dim() {
            return Err(OperatorError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// `H v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>, OperatorError> {
        self.check_dim(v)?;
        Ok(match self {
            PsdOperator::Zero { dim } => DVector::zeros(*dim),
            PsdOperator::ScaledIdentity { scale, .. } => v * *scale,
            PsdOperator::Diagonal { diag } => diag.component_mul(v),
            PsdOperator::Dense { matrix } => matrix * v,
            PsdOperator::ScaledGram { scale, factor, cached } => match cached {
                Some(gram) => (gram * v) * *scale,
                None => (factor.transpose() * (factor * v)) * *scale,
            },
        })
    }

    /// Quadratic form `v·Hv`. Uses the factored route for Gram
    /// representations so the result is nonnegative by construction.
    pub fn quad_form(&self, v: &DVector<f64>) -> Result<f64, OperatorError> {
        self.check_dim(v)?;
        Ok(match self {
            PsdOperator::Zero { .. } => 0.0,
            PsdOperator::ScaledIdentity { scale, .. } => scale * v.norm_squared(),
            PsdOperator::Diagonal { diag } => {
                v.iter().zip(diag.iter()).map(|(vi, di)| di * vi * vi).sum()
            }
            PsdOperator::Dense { matrix } => v.dot(&(matrix * v)),
            PsdOperator::ScaledGram { scale, factor, .. } => scale * (factor * v).norm_squared(),
        })
    }

    /// Whether the operator is `r·I` (including the zero operator); returns
    /// the scale when it is.
    pub fn as_scaled_identity(&self) -> Option<f64> {
        match self {
            PsdOperator::Zero { .. } => Some(0.0),
            PsdOperator::ScaledIdentity { scale, .. } => Some(*scale),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PsdOperator::Zero { .. })
            || matches!(self, PsdOperator::ScaledIdentity { scale, .. } if *scale == 0.0)
    }

    /// Dense assembly, used by oracles and by the quadratic subproblem
    /// strategy.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        match self {
            PsdOperator::Zero { .. } => DMatrix::zeros(n, n),
            PsdOperator::ScaledIdentity { scale, .. } => DMatrix::identity(n, n) * *scale,
            PsdOperator::Diagonal { diag } => DMatrix::from_diagonal(diag),
            PsdOperator::Dense { matrix } => matrix.clone(),
            PsdOperator::ScaledGram { scale, factor, cached } => match cached {
                Some(gram) => gram * *scale,
                None => (factor.transpose() * factor) * *scale,
            },
        }
    }
}

/// `‖v‖_H = √(v·Hv)`, the seminorm induced by a PSD operator.
///
/// A slightly negative radicand within rounding slack is clamped to zero;
/// anything beyond it is reported as a PSD violation.
pub fn seminorm(h: &PsdOperator, v: &DVector<f64>) -> Result<f64, OperatorError> {
    let quad = h.quad_form(v)?;
    if quad >= 0.0 {
        return Ok(quad.sqrt());
    }
    let slack = PSD_SLACK * (1.0 + v.norm_squared());
    if quad >= -slack {
        Ok(0.0)
    } else {
        Err(OperatorError::PsdViolation { value: quad })
    }
}

/// A point `z = (x, y, γ)` of the product space ℝⁿ × ℝᵖ × ℝᵐ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl BlockPoint {
    pub fn new(x: DVector<f64>, y: DVector<f64>, gamma: DVector<f64>) -> Self {
        BlockPoint { x, y, gamma }
    }

    pub fn zeros(n: usize, p: usize, m: usize) -> Self {
        BlockPoint {
            x: DVector::zeros(n),
            y: DVector::zeros(p),
            gamma: DVector::zeros(m),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x.len(), self.y.len(), self.gamma.len())
    }

    pub fn sub(&self, other: &Self) -> Self {
        BlockPoint {
            x: &self.x - &other.x,
            y: &self.y - &other.y,
            gamma: &self.gamma - &other.gamma,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        BlockPoint {
            x: &self.x + &other.x,
            y: &self.y + &other.y,
            gamma: &self.gamma + &other.gamma,
        }
    }

    pub fn scale(&self, t: f64) -> Self {
        BlockPoint { x: &self.x * t, y: &self.y * t, gamma: &self.gamma * t }
    }
}

/// The block-diagonal metric `Q = diag(R, (1+α)β BᵀB + S, (θβ)⁻¹ I)`.
///
/// `Q` does not depend on the dynamic regularization parameter, so one
/// instance serves a whole run.
#[derive(Debug, Clone)]
pub struct QMetric {
    pub r: PsdOperator,
    pub s: PsdOperator,
    pub b: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl QMetric {
    pub fn new(
        r: PsdOperator,
        s: PsdOperator,
        b: DMatrix<f64>,
        alpha: f64,
        beta: f64,
        theta: f64,
    ) -> Self {
        assert!(alpha >= 0.0 && beta > 0.0 && theta > 0.0, "invalid Q parameters");
        assert_eq!(s.dim(), b.ncols(), "S and B column dimensions must agree");
        QMetric { r, s, b, alpha, beta, theta }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.r.dim(), self.s.dim(), self.b.nrows())
    }

    fn check_dims(&self, z: &BlockPoint) -> Result<(), OperatorError> {
        let (n, p, m) = self.dims();
        let (zn, zp, zm) = z.dims();
        for (expected, got) in [(n, zn), (p, zp), (m, zm)] {
            if expected != got {
                return Err(OperatorError::DimensionMismatch { expected, got });
            }
        }
        Ok(())
    }

    /// `Q z = (R x, ((1+α)β BᵀB + S) y, (θβ)⁻¹ γ)`.
    pub fn apply(&self, z: &BlockPoint) -> Result<BlockPoint, OperatorError> {
        self.check_dims(z)?;
        let x = self.r.apply(&z.x)?;
        let by = &self.b * &z.y;
        let y = self.b.transpose() * by * ((1.0 + self.alpha) * self.beta) + self.s.apply(&z.y)?;
        let gamma = &z.gamma * (1.0 / (self.theta * self.beta));
        Ok(BlockPoint { x, y, gamma })
    }

    /// `‖z‖_Q = √(‖x‖²_R + (1+α)β‖By‖² + ‖y‖²_S + (βθ)⁻¹‖γ‖²)`.
    pub fn norm(&self, z: &BlockPoint) -> Result<f64, OperatorError> {
        Ok(self.norm_squared(z)?.sqrt())
    }

    pub fn norm_squared(&self, z: &BlockPoint) -> Result<f64, OperatorError> {
        self.check_dims(z)?;
        let x_part = self.r.quad_form(&z.x)?;
        let y_gram = (1.0 + self.alpha) * self.beta * (&self.b * &z.y).norm_squared();
        let y_s = self.s.quad_form(&z.y)?;
        let gamma_part = z.gamma.norm_squared() / (self.beta * self.theta);
        Ok(x_part + y_gram + y_s + gamma_part)
    }

    /// Dense assembly of the full `(n+p+m)²` operator; oracle/test use only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n, p, m) = self.dims();
        let total = n + p + m;
        let mut q = DMatrix::zeros(total, total);
        q.view_mut((0, 0), (n, n)).copy_from(&self.r.to_dense());
        let y_block = self.b.transpose() * &self.b * ((1.0 + self.alpha) * self.beta)
            + self.s.to_dense();
        q.view_mut((n, n), (p, p)).copy_from(&y_block);
        let gamma_block = DMatrix::identity(m, m) * (1.0 / (self.theta * self.beta));
        q.view_mut((n + p, n + p), (m, m)).copy_from(&gamma_block);
        q
    }
}

/// `‖v‖_Q` for a block triple; thin wrapper used by the solver's stopping
/// rules so every caller shares one code path.
pub fn q_norm(q: &QMetric, z: &BlockPoint) -> Result<f64, OperatorError> {
    q.norm(z)
}

/// `Q z`.
pub fn q_apply(q: &QMetric, z: &BlockPoint) -> Result<BlockPoint, OperatorError> {
    q.apply(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_psd(rng: &mut ChaCha8Rng, dim: usize) -> PsdOperator {
        match rng.gen_range(0..5) {
            0 => PsdOperator::zero(dim),
            1 => PsdOperator::scaled_identity(dim, rng.gen_range(0.0..3.0)),
            2 => PsdOperator::diagonal(DVector::from_fn(dim, |_, _| rng.gen_range(0.0..3.0))),
            3 => {
                let l = random_matrix(rng, dim, dim);
                PsdOperator::dense(l.transpose() * &l)
            }
            _ => PsdOperator::scaled_gram(rng.gen_range(0.1..2.0), random_matrix(rng, dim + 1, dim)),
        }
    }

    #[test]
    fn seminorm_identity_is_euclidean() {
        let h = PsdOperator::scaled_identity(2, 1.0);
        let v = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(seminorm(&h, &v).unwrap(), 5.0);
    }

    #[test]
    fn seminorm_zero_operator_vanishes() {
        let h = PsdOperator::zero(4);
        let v = DVector::from_vec(vec![1.0, -2.0, 3.0, 4.0]);
        assert_eq!(seminorm(&h, &v).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_matches_factor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let dim = rng.gen_range(1..12);
            let l = random_matrix(&mut rng, dim + 2, dim);
            let h = PsdOperator::dense(l.transpose() * &l);
            let v = random_vector(&mut rng, dim);
            let expected = (&l * &v).norm();
            let got = seminorm(&h, &v).unwrap();
            assert!((got - expected).abs() <= 1e-10 * (1.0 + expected));
        }
    }

    #[test]
    fn seminorm_dimension_mismatch_errors() {
        let h = PsdOperator::zero(3);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            seminorm(&h, &v),
            Err(OperatorError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn seminorm_rejects_indefinite_dense() {
        // Not PSD; the constructor only symmetrizes, it does not project.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let h = PsdOperator::dense(m);
        let v = DVector::from_vec(vec![0.0, 2.0]);
        assert!(matches!(seminorm(&h, &v), Err(OperatorError::PsdViolation { .. })));
    }

    #[test]
    fn operators_are_symmetric_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let dim = rng.gen_range(1..10);
            let h = random_psd(&mut rng, dim);
            let v = random_vector(&mut rng, dim);
            let w = random_vector(&mut rng, dim);
            let hv_w = h.apply(&v).unwrap().dot(&w);
            let hw_v = h.apply(&w).unwrap().dot(&v);
            assert!((hv_w - hw_v).abs() <= 1e-12 * (1.0 + hv_w.abs()));
        }
    }

    #[test]
    fn psd_against_dense_eigenvalue_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..40 {
            let dim = rng.gen_range(1..=20);
            let h = random_psd(&mut rng, dim);
            let dense = h.to_dense();
            let eig = dense.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let scale = eig.eigenvalues.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(min >= -1e-10 * (1.0 + scale), "min eigenvalue {min} for {h:?}");
        }
    }

    fn simple_q(alpha: f64, beta: f64, theta: f64, dim: usize) -> QMetric {
        QMetric::new(
            PsdOperator::zero(dim),
            PsdOperator::zero(dim),
            DMatrix::identity(dim, dim),
            alpha,
            beta,
            theta,
        )
    }

    #[test]
    fn q_apply_identity_blocks() {
        let q = simple_q(0.0, 1.0, 1.0, 2);
        let z = BlockPoint::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![3.0, 4.0]),
            DVector::from_vec(vec![5.0, 6.0]),
        );
        let qz = q_apply(&q, &z).unwrap();
        assert_eq!(qz.x, DVector::zeros(2));
        assert_eq!(qz.y, z.y);
        assert_eq!(qz.gamma, z.gamma);
    }

    #[test]
    fn q_apply_y_block_scales_with_alpha_beta() {
        // (1+α)β = 4 with α=1, β=2.
        let q = simple_q(1.0, 2.0, 1.0, 2);
        let z = BlockPoint::new(
            DVector::zeros(2),
            DVector::from_vec(vec![1.0, -2.0]),
            DVector::zeros(2),
        );
        let qz = q_apply(&q, &z).unwrap();
        assert_eq!(qz.y, &z.y * 4.0);
    }

    #[test]
    fn q_apply_gamma_block_inverse_theta_beta() {
        let q = simple_q(0.0, 1.0, 2.0, 2);
        let z = BlockPoint::new(
            DVector::zeros(2),
            DVector::zeros(2),
            DVector::from_vec(vec![4.0, -2.0]),
        );
        let qz = q_apply(&q, &z).unwrap();
        assert_eq!(qz.gamma, &z.gamma * 0.5);
    }

    #[test]
    fn q_norm_pythagorean_case() {
        let q = simple_q(0.0, 1.0, 1.0, 2);
        let z = BlockPoint::new(
            DVector::from_vec(vec![7.0, -9.0]),
            DVector::from_vec(vec![3.0, 0.0]),
            DVector::from_vec(vec![0.0, 4.0]),
        );
        assert!((q_norm(&q, &z).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(q_norm(&q, &BlockPoint::zeros(2, 2, 2)).unwrap(), 0.0);
    }

    fn random_q(rng: &mut ChaCha8Rng) -> (QMetric, usize, usize, usize) {
        let n = rng.gen_range(1..6);
        let p = rng.gen_range(1..6);
        let m = rng.gen_range(1..6);
        let q = QMetric::new(
            random_psd(rng, n),
            random_psd(rng, p),
            random_matrix(rng, m, p),
            rng.gen_range(0.0..3.0),
            rng.gen_range(0.2..3.0),
            rng.gen_range(0.2..1.9),
        );
        (q, n, p, m)
    }

    #[test]
    fn q_norm_matches_dense_assembly_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..60 {
            let (q, n, p, m) = random_q(&mut rng);
            let z = BlockPoint::new(
                random_vector(&mut rng, n),
                random_vector(&mut rng, p),
                random_vector(&mut rng, m),
            );
            let dense = q.to_dense();
            let mut flat = DVector::zeros(n + p + m);
            flat.rows_mut(0, n).copy_from(&z.x);
            flat.rows_mut(n, p).copy_from(&z.y);
            flat.rows_mut(n + p, m).copy_from(&z.gamma);
            let expected = flat.dot(&(&dense * &flat)).max(0.0).sqrt();
            let got = q_norm(&q, &z).unwrap();
            assert!((got - expected).abs() <= 1e-9 * (1.0 + expected));
        }
    }

    #[test]
    fn q_norm_squared_agrees_with_q_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let (q, n, p, m) = random_q(&mut rng);
            let z = BlockPoint::new(
                random_vector(&mut rng, n),
                random_vector(&mut rng, p),
                random_vector(&mut rng, m),
            );
            let qz = q_apply(&q, &z).unwrap();
            let via_apply = z.x.dot(&qz.x) + z.y.dot(&qz.y) + z.gamma.dot(&qz.gamma);
            let via_norm = q.norm_squared(&z).unwrap();
            assert!((via_apply - via_norm).abs() <= 1e-10 * (1.0 + via_norm.abs()));
        }
    }

    #[test]
    fn q_norm_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let (q, n, p, m) = random_q(&mut rng);
            let z = BlockPoint::new(
                random_vector(&mut rng, n),
                random_vector(&mut rng, p),
                random_vector(&mut rng, m),
            );
            let w = BlockPoint::new(
                random_vector(&mut rng, n),
                random_vector(&mut rng, p),
                random_vector(&mut rng, m),
            );
            let lhs = q_norm(&q, &z.add(&w)).unwrap();
            let rhs = q_norm(&q, &z).unwrap() + q_norm(&q, &w).unwrap();
            assert!(lhs <= rhs + 1e-10);
        }
    }

    proptest! {
        #[test]
        fn diagonal_quad_form_nonnegative(entries in proptest::collection::vec(0.0f64..5.0, 1..8),
                                          probe in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let dim = entries.len().min(probe.len());
            let h = PsdOperator::diagonal(DVector::from_vec(entries[..dim].to_vec()));
            let v = DVector::from_vec(probe[..dim].to_vec());
            prop_assert!(h.quad_form(&v).unwrap() >= 0.0);
        }

        #[test]
        fn gram_apply_matches_dense(scale in 0.0f64..3.0,
                                    data in proptest::collection::vec(-1.0f64..1.0, 12),
                                    probe in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let factor = DMatrix::from_vec(4, 3, data);
            let h = PsdOperator::scaled_gram(scale, factor.clone());
            let v = DVector::from_vec(probe);
            let got = h.apply(&v).unwrap();
            let expected = (factor.transpose() * &factor) * &v * scale;
            prop_assert!((got - expected).norm() <= 1e-10);
        }
    }
}
