//! Independent cross-checks of the analytic engine.
//!
//! Everything in [`crate::equilibrium`] flows through one pipeline: rate
//! moments of the weighting distribution feed closed-form triggers and value
//! functions. A bug in that pipeline would corrupt every downstream number
//! while keeping them mutually consistent, so the checks here deliberately
//! avoid the pipeline and rebuild the same quantities along three unrelated
//! routes:
//!
//! * [`laplace`] recomputes the characteristic-root moments from integral
//!   transforms of the discount curve itself, never touching the rate
//!   density.
//! * [`residuals`] plugs the assembled value function into the variational
//!   inequality it is supposed to solve and measures what is left over.
//! * [`montecarlo`] replays the candidate trigger policy on simulated price
//!   paths and compares the sampled payoff, and the payoff of deliberate
//!   deviations, against the closed form.
//!
//! Agreement across routes is evidence; disagreement localises the fault
//! (transform route wrong: suspect the quadrature; residual route wrong:
//! suspect the value assembly; simulation route wrong: suspect the trigger).

pub mod laplace;
pub mod montecarlo;
mod parallel;
pub mod residuals;
