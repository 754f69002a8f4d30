//! Transform-domain recomputation of the characteristic-root moments.
//!
//! The engine obtains `m_theta` and `m_tmor` by integrating `theta(r)` and
//! `(theta(r) - 1) / r` against the rate density. Both admit a second life as
//! integrals of the discount curve `h` itself: `theta` is built from
//! `sqrt(r + sigma^2/8)`, and `sqrt(a)` is the Laplace transform of an
//! explicit kernel, so swapping integration order turns each rate moment into
//! a time integral of `h(t)` (or of `1 - h(t)`) against a fixed
//! model-independent weight. The routines here evaluate those time integrals
//! directly. They share no code with [`crate::discounting::WeightingDistribution::rate_moment`]
//! beyond the generic quadrature, so agreement between the two routes checks
//! the rate-density handling, the closed-form curve formulas, and the moment
//! quadratures against each other.
//!
//! All integrands are mapped through `t = u^2` before quadrature. Every one
//! of them carries an integrable `1/sqrt(t)` endpoint from the kernel, and
//! the substitution absorbs it exactly rather than leaving the adaptive
//! subdivider to chase a singular corner.

use crate::discounting::{DiscountError, WeightingDistribution};
use crate::quad::{integrate, QuadError};
use thiserror::Error;

/// A transform-route computation could not be completed.
#[derive(Debug, Error)]
pub enum LaplaceError {
    /// An argument was rejected before any integration ran.
    #[error("parameter {name} = {value} is outside its admissible range")]
    BadParameter { name: &'static str, value: f64 },
    /// The adaptive quadrature gave up; the error is passed through intact.
    #[error("transform integration failed: {0}")]
    Quadrature(#[from] QuadError),
    /// Evaluating the discount curve failed.
    #[error(transparent)]
    Discount(#[from] DiscountError),
}

fn require(name: &'static str, value: f64, ok: bool) -> Result<(), LaplaceError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(LaplaceError::BadParameter { name, value })
    }
}

/// Kernel whose Laplace transform in `s` is `sqrt(c + r) / r`.
///
/// ```text
/// f(s; c) = exp(-c s) / sqrt(pi s) + sqrt(c) * erf(sqrt(c s))
/// ```
///
/// For `c = 0` this is the power kernel `1 / sqrt(pi s)` transforming to
/// `1 / sqrt(r)`; for `c > 0` it flattens to the constant `sqrt(c)` once
/// `c s` is large. Both summands are nonnegative, so the evaluation is
/// cancellation-free for every `(s, c)`.
pub fn laplace_kernel_f(s: f64, c: f64) -> Result<f64, LaplaceError> {
    require("s", s, s > 0.0)?;
    require("c", c, c >= 0.0)?;
    let z = (c * s).sqrt();
    Ok((-c * s).exp() / (core::f64::consts::PI * s).sqrt() + c.sqrt() * libm::erf(z))
}

/// Numerically integrates `exp(-s r) * f(s; c)` over `s` in `(0, inf)`.
///
/// The closed form of this transform is `sqrt(c + r) / r`; the quadrature
/// here exists so tests can confirm the kernel and the closed form agree
/// before either is trusted inside the moment recomputations.
pub fn kernel_laplace_transform(r: f64, c: f64) -> Result<f64, LaplaceError> {
    require("r", r, r > 0.0)?;
    require("c", c, c >= 0.0)?;
    // s = u^2: the 1/sqrt(pi s) endpoint of the kernel cancels against ds,
    // leaving a bounded integrand with Gaussian decay exp(-r u^2).
    let sqrt_pi = core::f64::consts::PI.sqrt();
    let sqrt_c = c.sqrt();
    let integrand = move |u: f64| {
        2.0 * (-(r + c) * u * u).exp() / sqrt_pi
            + 2.0 * u * sqrt_c * libm::erf(sqrt_c * u) * (-r * u * u).exp()
    };
    // exp(-50) ~ 2e-22 leaves the truncated tail far below the tolerance.
    let u_max = (50.0 / r).sqrt();
    let quad = integrate(integrand, &halving_ladder(u_max), 1e-10)?;
    Ok(quad.value)
}

/// Recomputes the mean characteristic root from the discount curve alone.
///
/// The identity being exercised:
///
/// ```text
/// m_theta = 1 + 1/(sqrt(2 pi) sigma) * Int_0^inf t^(-3/2) e^(-sigma^2 t / 8) (1 - h(t)) dt
/// ```
///
/// Only `1 - h(t)` enters, so it is evaluated through
/// [`WeightingDistribution::h_complement`], which keeps full precision where
/// `h` is within rounding of one and the bracket would otherwise lose every
/// significant digit.
pub fn moment_theta_via_laplace(
    weighting: &WeightingDistribution,
    sigma: f64,
) -> Result<f64, LaplaceError> {
    require("sigma", sigma, sigma > 0.0)?;
    let c = sigma * sigma / 8.0;
    let prefactor = 1.0 / ((2.0 * core::f64::consts::PI).sqrt() * sigma);
    // The tail has no help from h: 1 - h(t) -> 1, so the envelope is
    // t^(-3/2) e^(-c t) and the truncation point must come from c alone.
    // At sigma = 0.1 that pushes the horizon out to t ~ 2.6e4.
    let t_max = truncation_time(c, |t| prefactor * (-c * t).exp() * 2.0 / t.sqrt());
    // t = u^2 turns t^(-3/2) dt into 2 u^(-2) du; the remaining u^(-2) is
    // tamed by h_complement(u^2) ~ rho(0) u^2 near zero, so the integrand
    // opens at the finite value 2 rho(0).
    let w = weighting.clone();
    let integrand = move |u: f64| 2.0 * (-c * u * u).exp() * w.h_complement(u * u) / (u * u);
    let quad = integrate(integrand, &halving_ladder(t_max.sqrt()), 1e-10)?;
    Ok(1.0 + prefactor * quad.value)
}

/// Recomputes the investment-delay moment from the discount curve alone.
///
/// The identity being exercised:
///
/// ```text
/// m_tmor = Int_0^inf h(s) * [ sqrt(2)/sigma * f(s; sigma^2/8) - 1/2 ] ds
/// ```
///
/// The bracket is not assembled from [`laplace_kernel_f`] literally: with
/// `c = sigma^2/8` the kernel's `sqrt(c) erf` plateau equals exactly `1/2`,
/// so the subtraction collapses analytically to
///
/// ```text
/// sqrt(2)/sigma * exp(-c s) / sqrt(pi s) - erfc(sqrt(c s)) / 2
/// ```
///
/// which is evaluated with `erfc` directly. Forming `erf - 1` in floating
/// point instead would erase the entire integrand once `c s` passes ~15 and
/// drag spurious mass into the tail.
pub fn moment_tmor_via_laplace(
    weighting: &WeightingDistribution,
    sigma: f64,
) -> Result<f64, LaplaceError> {
    require("sigma", sigma, sigma > 0.0)?;
    let c = sigma * sigma / 8.0;
    let sqrt_pi = core::f64::consts::PI.sqrt();
    // Both factors decay: h contributes its slowest rate and the bracket
    // contributes c, so the envelope dies at the combined rate.
    let decay = weighting.min_rate() + c;
    let amp = core::f64::consts::SQRT_2 / sigma;
    let t_max = truncation_time(decay, |t| amp * (-decay * t).exp() / (sqrt_pi * t.sqrt()));
    // s = u^2 again; 2u ds-factor distributed over both bracket terms.
    let w = weighting.clone();
    let integrand = move |u: f64| {
        let cs = c * u * u;
        let bracket = 2.0 * amp * (-cs).exp() / sqrt_pi - u * libm::erfc(cs.sqrt());
        w.h_raw(u * u) * bracket
    };
    let quad = integrate(integrand, &halving_ladder(t_max.sqrt()), 1e-10)?;
    Ok(quad.value)
}

/// First `t` along a doubling ladder where the tail envelope drops below
/// `1e-14`, which is far under the relative tolerance any caller asks of the
/// quadrature (the integrals this truncates are all of order one or larger).
fn truncation_time(decay: f64, envelope: impl Fn(f64) -> f64) -> f64 {
    debug_assert!(decay > 0.0);
    let mut t = 64.0;
    // 80 doublings reach t ~ 7e25; with any positive decay rate the envelope
    // has collapsed long before, so the cap is unreachable in practice.
    for _ in 0..80 {
        if envelope(t) < 1e-14 {
            break;
        }
        t *= 2.0;
    }
    t
}

/// Geometric segment seeds `[0, m/512, m/256, ..., m/2, m]`.
///
/// Every integrand in this module is largest somewhere in its first decade
/// and then decays; halving seeds hand the adaptive pass a bracketed scale
/// transition instead of one enormous flat segment next to a narrow active
/// one.
fn halving_ladder(u_max: f64) -> Vec<f64> {
    let mut seeds = Vec::with_capacity(11);
    let mut u = u_max;
    seeds.push(u);
    for _ in 0..9 {
        u /= 2.0;
        seeds.push(u);
    }
    seeds.push(0.0);
    seeds.reverse();
    seeds
}
