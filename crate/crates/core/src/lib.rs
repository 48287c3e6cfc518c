//! Dynamic regularized ADMM (DR-ADMM) with over-relaxed stepsize for linearly
//! constrained separable convex problems
//!
//! ```text
//! min  f(x) + g(y)   s.t.  A x + B y = b,
//! ```
//!
//! together with the dynamic regularized hybrid proximal extragradient
//! (DR-HPE) framework it instantiates, and a certification layer that
//! recomputes the method's analysis constants and verifies its inclusion and
//! error inequalities on live iterates.
//!
//! Module map:
//! - [`operators`]: PSD operator algebra, seminorms, and the block metric `Q`.
//! - [`objectives`]: problem model, prox/quadratic objectives, subproblem solvers.
//! - [`hpe`]: the generic DR-HPE loop over an abstract step oracle, plus an
//!   exact proximal oracle for affine monotone operators.
//! - [`dradmm`]: the DR-ADMM algorithm producing a certified approximate solution.
//! - [`certify`]: analysis constants and per-iterate inequality checks.

pub mod certify;
pub mod dradmm;
pub mod hpe;
pub mod objectives;
pub mod operators;

pub use dradmm::{Certificate, DrAdmmConfig, IterateRecord, IterateTrace};
pub use objectives::{Objective, ProxFunction, QuadraticFunction, SeparableProblem};
pub use operators::{BlockPoint, PsdOperator, QMetric};
