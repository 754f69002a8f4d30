//! Browser bindings for the investment-trigger engine. Three operations are
//! exposed to JavaScript, each taking a JSON model description and returning
//! JSON data ready to plot: a model summary, a value-function slice, and a
//! validity-margin sweep across impatience levels.
//!
//! The exported functions are thin `wasm_bindgen` shims over plain Rust
//! functions that do all the work on strings, so the whole crate compiles
//! and tests natively; only the shim layer concerns the wasm ABI.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use wdro_core::analysis::{log_grid, sp_margin_curve, WeightingFamily};
use wdro_core::discounting::WeightingDistribution;
use wdro_core::equilibrium::{build_model, EquilibriumModel, MarketParams};

/// Mirrors the CLI config shape: a tagged discount block plus the market.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    discount: DiscountSpec,
    market: MarketSpec,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DiscountSpec {
    Degenerate { r0: f64 },
    TwoPoint { r: f64, lambda: f64, delta: f64 },
    GammaShifted { phi: f64, alpha: f64, beta: f64 },
    Mixture { atoms: Vec<(f64, f64)> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketSpec {
    sigma: f64,
    gamma: f64,
    k: f64,
}

fn parse_model(config_json: &str) -> Result<EquilibriumModel, String> {
    let spec: ModelSpec =
        serde_json::from_str(config_json).map_err(|e| format!("config: {e}"))?;
    let weighting = match spec.discount {
        DiscountSpec::Degenerate { r0 } => WeightingDistribution::degenerate(r0),
        DiscountSpec::TwoPoint { r, lambda, delta } => {
            WeightingDistribution::two_point(r, lambda, delta)
        }
        DiscountSpec::GammaShifted { phi, alpha, beta } => {
            WeightingDistribution::gamma_shifted(phi, alpha, beta)
        }
        DiscountSpec::Mixture { atoms } => WeightingDistribution::mixture(atoms),
    }
    .map_err(|e| format!("discount: {e}"))?;
    let market = MarketParams::new(spec.market.sigma, spec.market.gamma, spec.market.k)
        .map_err(|e| format!("market: {e}"))?;
    build_model(weighting, market).map_err(|e| format!("model: {e}"))
}

#[derive(Serialize)]
struct Summary {
    iota: f64,
    sp_margin: f64,
    sp_holds: bool,
    x_star_at_1: f64,
    mean_rate: f64,
    initial_rate: f64,
}

fn summary_impl(config_json: &str) -> Result<String, String> {
    let model = parse_model(config_json)?;
    let out = Summary {
        iota: model.iota,
        sp_margin: model.sp_margin,
        sp_holds: model.sp_holds,
        x_star_at_1: model.x_star_candidate(1.0),
        mean_rate: model.m_rate,
        initial_rate: model.weighting.rho(0.0),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ValueSlice {
    x_star: f64,
    k: f64,
    sp_holds: bool,
    x: Vec<f64>,
    v: Vec<f64>,
    v_q: Vec<f64>,
}

/// Value and marginal value against the shock level at fixed capacity `q`,
/// over `n` points reaching up to 1.5 times the trigger (the shock level
/// zero itself is excluded: the process is absorbed there and the value is
/// identically zero). Invalid models are evaluated as raw candidates on
/// purpose: seeing the marginal value overshoot the unit cost is exactly
/// what the plot is for.
fn value_slice_impl(config_json: &str, q: f64, n: usize) -> Result<String, String> {
    if !(q.is_finite() && q > 0.0) {
        return Err(format!("q = {q} must be positive and finite"));
    }
    if !(2..=100_000).contains(&n) {
        return Err(format!("n = {n} must be between 2 and 100000"));
    }
    let model = parse_model(config_json)?;
    let x_star = model.x_star_candidate(q);
    let mut slice = ValueSlice {
        x_star,
        k: model.market.k,
        sp_holds: model.sp_holds,
        x: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        v_q: Vec::with_capacity(n),
    };
    for i in 0..n {
        let x = 1.5 * x_star * (i + 1) as f64 / n as f64;
        slice.x.push(x);
        slice.v.push(model.v_value_candidate(x, q).map_err(|e| e.to_string())?);
        slice.v_q.push(model.v_q_marginal(x, q).map_err(|e| e.to_string())?);
    }
    serde_json::to_string(&slice).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct MarginCurve {
    alpha: Vec<f64>,
    sp_margin: Vec<f64>,
    sp_holds: Vec<bool>,
    admissible: Vec<bool>,
}

/// Validity margin across impatience levels for the shifted-Gamma family
/// with long-run rate `phi` and rate spread `beta`, on a geometric grid of
/// `n` points between `alpha_lo` and `alpha_hi`.
fn margin_curve_impl(
    market_json: &str,
    phi: f64,
    beta: f64,
    alpha_lo: f64,
    alpha_hi: f64,
    n: usize,
) -> Result<String, String> {
    let spec: MarketSpec =
        serde_json::from_str(market_json).map_err(|e| format!("market: {e}"))?;
    let market =
        MarketParams::new(spec.sigma, spec.gamma, spec.k).map_err(|e| format!("market: {e}"))?;
    if n > 100_000 {
        return Err(format!("n = {n} must be at most 100000"));
    }
    let grid = log_grid(alpha_lo, alpha_hi, n).map_err(|e| e.to_string())?;
    let family = WeightingFamily::gamma_alpha(phi, beta);
    let curve = sp_margin_curve(&family, &grid, market).map_err(|e| e.to_string())?;
    let mut out = MarginCurve {
        alpha: Vec::with_capacity(n),
        sp_margin: Vec::with_capacity(n),
        sp_holds: Vec::with_capacity(n),
        admissible: Vec::with_capacity(n),
    };
    for rec in &curve.records {
        out.alpha.push(rec.param);
        out.sp_margin.push(rec.sp_margin);
        out.sp_holds.push(rec.sp_holds);
        out.admissible.push(rec.admissible);
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Model summary as JSON: trigger scale, validity margin, and the headline
/// rates. Errors come back as JS exceptions carrying the message.
#[wasm_bindgen]
pub fn model_summary(config_json: &str) -> Result<String, JsValue> {
    summary_impl(config_json).map_err(|e| JsValue::from_str(&e))
}

/// Value-function slice as JSON; see the crate docs for the schema.
#[wasm_bindgen]
pub fn value_slice(config_json: &str, q: f64, n: usize) -> Result<String, JsValue> {
    value_slice_impl(config_json, q, n).map_err(|e| JsValue::from_str(&e))
}

/// Impatience sweep of the validity margin as JSON.
#[wasm_bindgen]
pub fn margin_curve(
    market_json: &str,
    phi: f64,
    beta: f64,
    alpha_lo: f64,
    alpha_hi: f64,
    n: usize,
) -> Result<String, JsValue> {
    margin_curve_impl(market_json, phi, beta, alpha_lo, alpha_hi, n)
        .map_err(|e| JsValue::from_str(&e))
}
