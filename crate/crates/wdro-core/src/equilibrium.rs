//! Closed-form equilibrium objects for irreversible capacity expansion under
//! a weighting distribution over discount rates.
//!
//! The market: cumulative output q earns the profit flow X_t·q^{1−1/γ},
//! where X follows a driftless geometric Brownian motion with volatility σ
//! and γ > 1 is the demand elasticity. Capacity can only be raised, at cost
//! K per unit. An exponential discounter with rate r prices claims through
//! the positive characteristic root θ(r) of ½σ²θ(θ−1) = r; a weighted
//! discounter aggregates those components against F.
//!
//! The equilibrium trigger has the same shape as the classical one,
//!
//!   x*(q) = ι · (γ/(γ−1)) · q^{1/γ} · K,
//!
//! with the single rate replaced by the effective cost-of-capital
//! ι = ∫θ dF / ∫((θ−1)/r) dF. Whether that trigger actually is an
//! equilibrium depends on the sign of the smooth-pasting margin
//! ∫θ dF − ∫r dF · ∫((θ−1)/r) dF, which this module computes and enforces:
//! when it is negative the trigger and total value are only available
//! through the explicitly named candidate accessors.
//!
//! ```
//! use wdro_core::discounting::WeightingDistribution;
//! use wdro_core::equilibrium::{build_model, MarketParams};
//!
//! let market = MarketParams::new(0.2, 1.5, 1.0).unwrap();
//! let f = WeightingDistribution::degenerate(0.05).unwrap();
//! let model = build_model(f, market).unwrap();
//! assert!(model.sp_holds);
//! let trigger = model.x_star(1.0).unwrap();
//! assert!((model.q_tilde(trigger) - 1.0).abs() < 1e-12);
//! ```

use crate::discounting::{DiscountError, WeightingDistribution};

#[derive(Debug, thiserror::Error)]
pub enum EquilibriumError {
    #[error("parameter {name} = {value} is outside its admissible range")]
    BadParameter { name: &'static str, value: f64 },
    #[error(
        "value function is infinite: demand elasticity {gamma} is not below the \
         characteristic root {theta_min} at the lowest supported rate"
    )]
    ValueUnbounded { gamma: f64, theta_min: f64 },
    #[error(
        "smooth pasting fails (margin {sp_margin:.6e} < 0): the candidate trigger is \
         not an equilibrium; request the raw candidate explicitly to inspect it"
    )]
    NotEquilibrium { sp_margin: f64 },
    #[error(
        "component value at rate {r} is infinite: the demand elasticity reaches the \
         characteristic root"
    )]
    ComponentUnbounded { r: f64 },
    #[error(transparent)]
    Discount(#[from] DiscountError),
}

/// Positive root of ½σ²θ² − ½σ²θ − r = 0, i.e. θ = ½ + √(¼ + 2r/σ²).
/// θ(0) = 1, and θ is strictly increasing and concave in r.
///
/// Panics if σ ≤ 0 or r < 0; validate market parameters first.
pub fn theta(r: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "theta needs sigma > 0, got {sigma}");
    assert!(r >= 0.0, "theta needs r >= 0, got {r}");
    0.5 + (0.25 + 2.0 * r / (sigma * sigma)).sqrt()
}

/// θ(r) − γ without subtractive cancellation. Rationalizing the root gives
///
///   θ(r) − γ = 2(r − r_γ) / (s + s_γ),
///
/// with r_γ = ½σ²γ(γ−1), s = σ²√(¼ + 2r/σ²), s_γ = σ²(γ − ½). For γ > ½
/// both denominator terms are positive, so the only subtraction left is
/// r − r_γ, which is the exact condition the caller cares about. The direct
/// difference of two ~γ-sized roots would lose half the significant digits
/// precisely where γ/(γ − θ) amplifies them most.
pub fn theta_minus_gamma(r: f64, sigma: f64, gamma: f64) -> f64 {
    assert!(sigma > 0.0, "theta_minus_gamma needs sigma > 0, got {sigma}");
    assert!(r >= 0.0, "theta_minus_gamma needs r >= 0, got {r}");
    assert!(gamma > 0.5, "theta_minus_gamma needs gamma > 1/2, got {gamma}");
    let s2 = sigma * sigma;
    let r_gamma = 0.5 * s2 * gamma * (gamma - 1.0);
    let s = s2 * (0.25 + 2.0 * r / s2).sqrt();
    let s_gamma = s2 * (gamma - 0.5);
    2.0 * (r - r_gamma) / (s + s_gamma)
}

/// Market primitives: volatility, demand elasticity, unit investment cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub sigma: f64,
    pub gamma: f64,
    pub k: f64,
}

impl MarketParams {
    pub fn new(sigma: f64, gamma: f64, k: f64) -> Result<Self, EquilibriumError> {
        for (name, value, floor) in [("sigma", sigma, 0.0), ("gamma", gamma, 1.0), ("k", k, 0.0)] {
            if !(value.is_finite() && value > floor) {
                return Err(EquilibriumError::BadParameter { name, value });
            }
        }
        Ok(Self { sigma, gamma, k })
    }
}

/// A weighting distribution paired with market parameters, together with the
/// four rate moments every downstream quantity is built from. Immutable
/// after construction; all evaluations are pure.
#[derive(Debug, Clone)]
pub struct EquilibriumModel {
    pub weighting: WeightingDistribution,
    pub market: MarketParams,
    /// ∫ θ(r) dF
    pub m_theta: f64,
    /// ∫ r dF
    pub m_rate: f64,
    /// ∫ (θ(r) − 1)/r dF
    pub m_tmor: f64,
    /// ∫ (1/r) dF
    pub m_recip: f64,
    /// Effective cost-of-capital ι = m_theta / m_tmor.
    pub iota: f64,
    /// m_theta − m_rate·m_tmor; nonnegative exactly when the smooth-pasting
    /// construction yields an equilibrium.
    pub sp_margin: f64,
    pub sp_holds: bool,
}

/// Validate admissibility (γ < θ(r) on the entire support of F, otherwise
/// the value function is infinite) and assemble the moments.
pub fn build_model(
    weighting: WeightingDistribution,
    market: MarketParams,
) -> Result<EquilibriumModel, EquilibriumError> {
    let MarketParams { sigma, gamma, .. } = market;
    let r_min = weighting.min_rate();
    if theta_minus_gamma(r_min, sigma, gamma) <= 0.0 {
        return Err(EquilibriumError::ValueUnbounded {
            gamma,
            theta_min: theta(r_min, sigma),
        });
    }
    let m_theta = weighting.rate_moment(|r| theta(r, sigma))?;
    let m_rate = weighting.rate_moment(|r| r)?;
    // (θ(r) − 1)/r via the cancellation-free difference with γ = 1; the
    // ratio stays bounded as r → 0 because θ(r) − 1 vanishes linearly.
    let m_tmor = weighting.rate_moment(|r| theta_minus_gamma(r, sigma, 1.0) / r)?;
    let m_recip = weighting.rate_moment(|r| 1.0 / r)?;
    let sp_margin = m_theta - m_rate * m_tmor;
    Ok(EquilibriumModel {
        weighting,
        market,
        m_theta,
        m_rate,
        m_tmor,
        m_recip,
        iota: m_theta / m_tmor,
        sp_margin,
        sp_holds: sp_margin >= 0.0,
    })
}

impl EquilibriumModel {
    /// Investment trigger x*(q) = ι·(γ/(γ−1))·q^{1/γ}·K. Refuses when the
    /// smooth-pasting margin is negative, because then the formula is only a
    /// candidate, not an equilibrium; see [`Self::x_star_candidate`].
    pub fn x_star(&self, q: f64) -> Result<f64, EquilibriumError> {
        if !self.sp_holds {
            return Err(EquilibriumError::NotEquilibrium { sp_margin: self.sp_margin });
        }
        Ok(self.x_star_candidate(q))
    }

    /// The raw trigger formula, bypassing the smooth-pasting gate. When
    /// `sp_holds` is false this is a diagnostic object (the policy it
    /// describes is strictly improvable), useful for plotting exactly how
    /// the construction breaks.
    pub fn x_star_candidate(&self, q: f64) -> f64 {
        assert!(q > 0.0, "x_star needs q > 0, got {q}");
        let MarketParams { gamma, k, .. } = self.market;
        self.iota * (gamma / (gamma - 1.0)) * q.powf(1.0 / gamma) * k
    }

    /// Inverse of the trigger: the capacity q̃(x) = (x(γ−1)/(γιK))^γ at
    /// which x would sit exactly on the trigger.
    pub fn q_tilde(&self, x: f64) -> f64 {
        assert!(x > 0.0, "q_tilde needs x > 0, got {x}");
        let MarketParams { gamma, k, .. } = self.market;
        (x * (gamma - 1.0) / (gamma * self.iota * k)).powf(gamma)
    }

    /// Marginal value of capacity for the rate-r component:
    /// K(1 − ι/r)(x/x*(q))^{θ(r)} + (x/r)(1 − 1/γ)q^{−1/γ} below the
    /// trigger, K above it. Continuous at the trigger for every r because
    /// x*(q)·(1 − 1/γ)q^{−1/γ} = ιK.
    pub fn w_q_marginal(&self, x: f64, q: f64, r: f64) -> f64 {
        assert!(x > 0.0 && q > 0.0, "w_q_marginal needs x, q > 0");
        let MarketParams { sigma, gamma, k } = self.market;
        let x_s = self.x_star_candidate(q);
        if x > x_s {
            return k;
        }
        let pow = (theta(r, sigma) * (x / x_s).ln()).exp();
        k * (1.0 - self.iota / r) * pow + (x / r) * (1.0 - 1.0 / gamma) * q.powf(-1.0 / gamma)
    }

    /// F-weighted marginal value ∂V/∂q. Equals K identically in the
    /// expansion region x ≥ x*(q); below the trigger it is the weighted
    /// average of the per-rate marginals. Not gated on `sp_holds`: the whole
    /// point of the validity diagnostic is inspecting this curve when the
    /// margin is negative (it then overshoots K inside the continuation
    /// region).
    pub fn v_q_marginal(&self, x: f64, q: f64) -> Result<f64, EquilibriumError> {
        assert!(x > 0.0 && q > 0.0, "v_q_marginal needs x, q > 0");
        let MarketParams { sigma, gamma, k } = self.market;
        let x_s = self.x_star_candidate(q);
        if x >= x_s {
            return Ok(k);
        }
        let ln_ratio = (x / x_s).ln();
        let linear = x * (1.0 - 1.0 / gamma) * q.powf(-1.0 / gamma);
        let iota = self.iota;
        let v = self.weighting.rate_moment(|r| {
            k * (1.0 - iota / r) * (theta(r, sigma) * ln_ratio).exp() + linear / r
        })?;
        Ok(v)
    }

    /// Value of the whole program to the rate-r component under the
    /// equilibrium policy. Requires γ < θ(r); at or past that point the
    /// component's perpetuity diverges.
    pub fn w_value(&self, x: f64, q: f64, r: f64) -> Result<f64, EquilibriumError> {
        assert!(x > 0.0 && q > 0.0, "w_value needs x, q > 0");
        let tmg = theta_minus_gamma(r, self.market.sigma, self.market.gamma);
        if tmg <= 0.0 {
            return Err(EquilibriumError::ComponentUnbounded { r });
        }
        let x_s = self.x_star_candidate(q);
        if x <= x_s {
            Ok(self.w_continuation(x, q, r, tmg))
        } else {
            // In the expansion region the policy jumps capacity to q̃(x),
            // paying K per unit; the remaining value is the continuation
            // value at the trigger boundary.
            let q_up = self.q_tilde(x);
            Ok(self.w_continuation(x, q_up, r, tmg) - self.market.k * (q_up - q))
        }
    }

    /// Continuation-branch component value, grouped as
    /// K(1 − ι/r)·(γ/(γ−θ))·q·(x/x*(q))^θ + (x/r)·q^{1−1/γ} so the only
    /// x-dependence is through the ratio x/x*(q) ≤ 1. The conventional
    /// C(q)·x^θ form evaluates x^θ and q^{1−θ/γ} separately, which overflows
    /// long before the product does.
    pub(crate) fn w_continuation(&self, x: f64, q: f64, r: f64, tmg: f64) -> f64 {
        let MarketParams { sigma, gamma, k } = self.market;
        let x_s = self.x_star_candidate(q);
        let pow = (theta(r, sigma) * (x / x_s).ln()).exp();
        k * (1.0 - self.iota / r) * (-gamma / tmg) * q * pow
            + (x / r) * q.powf(1.0 - 1.0 / gamma)
    }

    /// Equilibrium value V(x,q) = ∫ w(x,q;r) dF(r). Gated exactly like
    /// [`Self::x_star`]; see [`Self::v_value_candidate`] for the raw object.
    pub fn v_value(&self, x: f64, q: f64) -> Result<f64, EquilibriumError> {
        if !self.sp_holds {
            return Err(EquilibriumError::NotEquilibrium { sp_margin: self.sp_margin });
        }
        self.v_value_candidate(x, q)
    }

    /// F-weighted program value under the candidate trigger policy, without
    /// the smooth-pasting gate.
    pub fn v_value_candidate(&self, x: f64, q: f64) -> Result<f64, EquilibriumError> {
        assert!(x > 0.0 && q > 0.0, "v_value needs x, q > 0");
        let x_s = self.x_star_candidate(q);
        if x <= x_s {
            self.integrated_continuation(x, q)
        } else {
            let q_up = self.q_tilde(x);
            Ok(self.integrated_continuation(x, q_up)? - self.market.k * (q_up - q))
        }
    }

    // Left unclamped past the trigger on purpose: the callers above only
    // reach x/x*(q) > 1 by a rounding ulp, where exp(theta * ln_ratio) is
    // still 1 to machine precision, and the residual checker deliberately
    // extends this branch a stencil width beyond the trigger.
    pub(crate) fn integrated_continuation(&self, x: f64, q: f64) -> Result<f64, EquilibriumError> {
        let MarketParams { sigma, gamma, k } = self.market;
        let x_s = self.x_star_candidate(q);
        let ln_ratio = (x / x_s).ln();
        let flow = x * q.powf(1.0 - 1.0 / gamma);
        let iota = self.iota;
        let v = self.weighting.rate_moment(|r| {
            let tmg = theta_minus_gamma(r, sigma, gamma);
            let pow = (theta(r, sigma) * ln_ratio).exp();
            k * (1.0 - iota / r) * (-gamma / tmg) * q * pow + flow / r
        })?;
        Ok(v)
    }
}

/// Classical single-rate trigger x°(r0) = [θ/(θ−1)]·r0·(γ/(γ−1))·q^{1/γ}·K:
/// what an exponential discounter with rate r0 would use. Coincides with
/// `x_star` under a degenerate weighting at r0, and anchors the comparative
/// benchmarks for non-degenerate ones.
pub fn benchmark_x_o(r0: f64, market: &MarketParams, q: f64) -> Result<f64, EquilibriumError> {
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(EquilibriumError::BadParameter { name: "r0", value: r0 });
    }
    if !(q.is_finite() && q > 0.0) {
        return Err(EquilibriumError::BadParameter { name: "q", value: q });
    }
    let MarketParams { sigma, gamma, k } = *market;
    let tm1 = theta_minus_gamma(r0, sigma, 1.0);
    if theta_minus_gamma(r0, sigma, gamma) <= 0.0 {
        return Err(EquilibriumError::ValueUnbounded { gamma, theta_min: theta(r0, sigma) });
    }
    let th = theta(r0, sigma);
    Ok((th / tm1) * r0 * (gamma / (gamma - 1.0)) * q.powf(1.0 / gamma) * k)
}
