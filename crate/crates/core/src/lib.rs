//! Information-optimal sensor placement for system identification of
//! shear-building structures.
//!
//! The pipeline runs in stages:
//!
//! 1. [`structural`]: build the shear-building model, decompose it into
//!    modes and evaluate the forced response and its parameter
//!    sensitivities in closed form.
//! 2. [`priors`]: draw reproducible Monte-Carlo samples of the uncertain
//!    system parameters.
//! 3. [`fim`]: turn sensitivities into per-location elementary Fisher
//!    information matrices and evaluate the expected log-determinant
//!    objective with its gradient and Hessian.
//! 4. [`solver`]: solve the relaxed convex placement problem with an
//!    interior-point Newton method, then round and certify the result.
//! 5. [`baselines`]: greedy, exhaustive and fixed layouts for comparison.
//! 6. [`pipeline`]: config validation, orchestration and report output.
//!
//! With the default `parallel` feature, per-sample work is spread over a
//! rayon pool. Reductions always run in sample order, so results are
//! bit-identical regardless of the thread count or the feature setting.

pub mod baselines;
pub mod error;
pub mod exec;
pub mod fim;
mod jet;
pub mod pipeline;
pub mod priors;
pub mod solver;
pub mod structural;

pub use error::{Error, Result};
pub use exec::Execution;

/// Number of uncertain system parameters `[omega0, alpha, beta, omega, a0]`.
pub const N_PARAMS: usize = 5;
