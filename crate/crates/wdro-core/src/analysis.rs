//! Comparative statics over one-parameter families of weighting
//! distributions: smooth-pasting margin sweeps, bisection for the parameter
//! value where the margin changes sign, monotonicity scans of the trigger in
//! the decreasing-impatience parameter, and the classical-benchmark ordering
//! x°(r) ≤ x* ≤ x°(ρ(0)).

use crate::discounting::{DiscountError, WeightingDistribution};
use crate::equilibrium::{benchmark_x_o, build_model, EquilibriumError, MarketParams};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(
        "margin does not change sign over the bracket: {lo_margin:.6e} at the low end, \
         {hi_margin:.6e} at the high end"
    )]
    BracketSameSign { lo_margin: f64, hi_margin: f64 },
    #[error("bad parameter grid: {reason}")]
    BadGrid { reason: &'static str },
    #[error(transparent)]
    Weighting(#[from] DiscountError),
    #[error(transparent)]
    Model(#[from] EquilibriumError),
}

/// A weighting distribution indexed by one scalar parameter, with the
/// parameter's name carried along for reporting.
pub struct WeightingFamily {
    name: &'static str,
    make: Box<dyn Fn(f64) -> Result<WeightingDistribution, DiscountError> + Send + Sync>,
}

impl WeightingFamily {
    pub fn new(
        name: &'static str,
        make: impl Fn(f64) -> Result<WeightingDistribution, DiscountError> + Send + Sync + 'static,
    ) -> Self {
        Self { name, make: Box::new(make) }
    }

    /// Two-point distributions indexed by the rate gap, holding the base
    /// rate and its weight fixed.
    pub fn two_point_lambda(r: f64, delta: f64) -> Self {
        Self::new("lambda", move |lambda| {
            WeightingDistribution::two_point(r, lambda, delta)
        })
    }

    /// Shifted-Gamma distributions indexed by the impatience parameter α,
    /// holding φ and β fixed. Along this family the mean rate β + φ stays
    /// constant, which is the hypothesis for the monotonicity results.
    pub fn gamma_alpha(phi: f64, beta: f64) -> Self {
        Self::new("alpha", move |alpha| {
            WeightingDistribution::gamma_shifted(phi, alpha, beta)
        })
    }

    /// Point masses indexed by their rate.
    pub fn degenerate_rate() -> Self {
        Self::new("r0", WeightingDistribution::degenerate)
    }

    pub fn param_name(&self) -> &'static str {
        self.name
    }

    pub fn instantiate(&self, param: f64) -> Result<WeightingDistribution, DiscountError> {
        (self.make)(param)
    }
}

impl std::fmt::Debug for WeightingFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightingFamily").field("name", &self.name).finish()
    }
}

/// One grid point of a statics sweep. `x_star` is the raw trigger candidate
/// at unit capacity (the diagnostic object of interest even where
/// `sp_holds` is false); an inadmissible model (elasticity at or above the
/// lowest characteristic root) keeps its place in the curve with
/// `admissible = false` and NaN values.
#[derive(Debug, Clone, Copy)]
pub struct CurveRecord {
    pub param: f64,
    pub x_star: f64,
    pub sp_margin: f64,
    pub sp_holds: bool,
    pub prelec_at_0: f64,
    pub admissible: bool,
}

/// Sweep results aligned with a strictly increasing parameter grid.
#[derive(Debug, Clone)]
pub struct StaticsCurve {
    pub param_name: &'static str,
    pub records: Vec<CurveRecord>,
}

/// A root of the smooth-pasting margin located by bisection.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdResult {
    pub param_name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub root: f64,
    pub margin_at_root: f64,
    pub iterations: usize,
}

/// Geometric grid with `n` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, AnalysisError> {
    if !(lo > 0.0 && hi > lo) {
        return Err(AnalysisError::BadGrid { reason: "log grid needs 0 < lo < hi" });
    }
    if n < 2 {
        return Err(AnalysisError::BadGrid { reason: "log grid needs at least two points" });
    }
    let ratio = hi / lo;
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo * ratio.powf(i as f64 / (n - 1) as f64)
            }
        })
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<(), AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::BadGrid { reason: "empty grid" });
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(AnalysisError::BadGrid { reason: "grid must be strictly increasing" });
    }
    Ok(())
}

/// Evaluate margin, trigger candidate (at q = 1), and impatience at zero for
/// each parameter value. Inadmissible grid points are flagged in place, so a
/// sweep across a validity boundary survives to be plotted; any other
/// failure (malformed parameter, quadrature breakdown) aborts the sweep.
pub fn sp_margin_curve(
    family: &WeightingFamily,
    grid: &[f64],
    market: MarketParams,
) -> Result<StaticsCurve, AnalysisError> {
    check_grid(grid)?;
    let mut records = Vec::with_capacity(grid.len());
    for &param in grid {
        let weighting = family.instantiate(param)?;
        let prelec_at_0 = weighting.prelec(0.0);
        match build_model(weighting, market) {
            Ok(model) => records.push(CurveRecord {
                param,
                x_star: model.x_star_candidate(1.0),
                sp_margin: model.sp_margin,
                sp_holds: model.sp_holds,
                prelec_at_0,
                admissible: true,
            }),
            Err(EquilibriumError::ValueUnbounded { .. }) => records.push(CurveRecord {
                param,
                x_star: f64::NAN,
                sp_margin: f64::NAN,
                sp_holds: false,
                prelec_at_0,
                admissible: false,
            }),
            Err(other) => return Err(other.into()),
        }
    }
    Ok(StaticsCurve { param_name: family.param_name(), records })
}

/// Bisect the smooth-pasting margin to a root inside `(lo, hi)`. Stops when
/// |margin| < 1e-9 or after 200 halvings, whichever comes first; margins at
/// both bracket ends must differ in sign.
pub fn find_sp_threshold(
    family: &WeightingFamily,
    bracket: (f64, f64),
    market: MarketParams,
) -> Result<ThresholdResult, AnalysisError> {
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(AnalysisError::BadGrid { reason: "bracket must satisfy lo < hi" });
    }
    let margin = |param: f64| -> Result<f64, AnalysisError> {
        Ok(build_model(family.instantiate(param)?, market)?.sp_margin)
    };
    let m_lo = margin(lo)?;
    let m_hi = margin(hi)?;
    if m_lo.signum() == m_hi.signum() {
        return Err(AnalysisError::BracketSameSign { lo_margin: m_lo, hi_margin: m_hi });
    }
    let (mut a, mut b, mut m_a) = (lo, hi, m_lo);
    let mut root = 0.5 * (a + b);
    let mut m_root = margin(root)?;
    let mut iterations = 0;
    while m_root.abs() >= 1e-9 && iterations < 200 {
        if m_root.signum() == m_a.signum() {
            a = root;
            m_a = m_root;
        } else {
            b = root;
        }
        root = 0.5 * (a + b);
        m_root = margin(root)?;
        iterations += 1;
    }
    Ok(ThresholdResult {
        param_name: family.param_name(),
        lo,
        hi,
        root,
        margin_at_root: m_root,
        iterations,
    })
}

/// Trigger levels x*(q) along an α-grid of shifted-Gamma weightings with φ
/// and β held fixed (so the mean rate β + φ is constant, isolating the
/// impatience channel). The recorded triggers are expected to fall as α
/// rises; callers assert that on the returned curve.
pub fn di_monotonicity_scan(
    alpha_grid: &[f64],
    phi: f64,
    beta: f64,
    market: MarketParams,
    q: f64,
) -> Result<StaticsCurve, AnalysisError> {
    check_grid(alpha_grid)?;
    let family = WeightingFamily::gamma_alpha(phi, beta);
    let mut curve = sp_margin_curve(&family, alpha_grid, market)?;
    if q != 1.0 {
        let scale = q.powf(1.0 / market.gamma);
        for record in &mut curve.records {
            record.x_star *= scale;
        }
    }
    Ok(curve)
}

/// The three triggers of the classical-benchmark comparison for a two-point
/// weighting: the patient benchmark x°(r), the equilibrium trigger x*, and
/// the naive benchmark x°(ρ(0)) at the mean rate. `x_e` is `None` when
/// smooth pasting fails, in which case only the two benchmarks are returned.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkOrdering {
    pub x_r: f64,
    pub x_e: Option<f64>,
    pub x_rho0: f64,
}

pub fn benchmark_ordering(
    r: f64,
    lambda: f64,
    delta: f64,
    market: MarketParams,
    q: f64,
) -> Result<BenchmarkOrdering, AnalysisError> {
    let weighting = WeightingDistribution::two_point(r, lambda, delta)?;
    let rho0 = weighting.rate_moment(|rate| rate)?;
    let x_r = benchmark_x_o(r, &market, q)?;
    let x_rho0 = benchmark_x_o(rho0, &market, q)?;
    let model = build_model(weighting, market)?;
    let x_e = match model.x_star(q) {
        Ok(x) => Some(x),
        Err(EquilibriumError::NotEquilibrium { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(x) = x_e {
        let slack = 1e-12 * x_rho0;
        assert!(
            x_r <= x + slack && x <= x_rho0 + slack,
            "benchmark ordering violated: {x_r} / {x} / {x_rho0}"
        );
    }
    Ok(BenchmarkOrdering { x_r, x_e, x_rho0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market() -> MarketParams {
        MarketParams::new(0.2, 1.5, 1.0).unwrap()
    }

    fn assert_rel(actual: f64, expected: f64, tol: f64) {
        let err = (actual - expected).abs() / expected.abs().max(1e-300);
        assert!(err < tol, "got {actual:.17e}, want {expected:.17e}, rel err {err:.3e}");
    }

    #[test]
    fn log_grid_endpoints_and_shape() {
        let g = log_grid(1e-3, 10.0, 50).unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[49], 10.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        // constant ratio between neighbors
        let r0 = g[1] / g[0];
        let r1 = g[25] / g[24];
        assert_rel(r1, r0, 1e-12);
        assert!(log_grid(0.0, 1.0, 5).is_err());
        assert!(log_grid(1.0, 1.0, 5).is_err());
        assert!(log_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn two_point_margin_curve_signs() {
        let family = WeightingFamily::two_point_lambda(0.05, 0.5);
        let curve = sp_margin_curve(&family, &[0.1, 1.0], market()).unwrap();
        assert_eq!(curve.param_name, "lambda");
        assert_rel(curve.records[0].sp_margin, 0.8014908326469851978978894, 1e-13);
        assert_rel(curve.records[1].sp_margin, -3.181343041801124614652956, 1e-13);
        assert!(curve.records[0].sp_holds);
        assert!(!curve.records[1].sp_holds);
        assert!(curve.records.iter().all(|rec| rec.admissible));
    }

    #[test]
    fn degenerate_margin_is_constantly_one() {
        let family = WeightingFamily::degenerate_rate();
        let grid: Vec<f64> = (1..=12).map(|i| 0.03 + 0.05 * i as f64).collect();
        let curve = sp_margin_curve(&family, &grid, market()).unwrap();
        for rec in &curve.records {
            assert!((rec.sp_margin - 1.0).abs() < 1e-12);
            assert_eq!(rec.prelec_at_0, 0.0);
        }
    }

    #[test]
    fn inadmissible_points_are_flagged_not_fatal() {
        // θ(0.01, 0.2) ≈ 1.366 < γ = 1.5: the first point cannot support a
        // finite value function, but the sweep must carry on.
        let family = WeightingFamily::degenerate_rate();
        let curve = sp_margin_curve(&family, &[0.01, 0.05, 0.1], market()).unwrap();
        assert!(!curve.records[0].admissible);
        assert!(curve.records[0].x_star.is_nan());
        assert!(curve.records[1].admissible);
        assert_rel(curve.records[1].x_star, 0.2794987437106619954734480, 1e-13);
    }

    #[test]
    fn rejects_unsorted_grid() {
        let family = WeightingFamily::degenerate_rate();
        assert!(matches!(
            sp_margin_curve(&family, &[0.1, 0.1], market()),
            Err(AnalysisError::BadGrid { .. })
        ));
    }

    #[test]
    fn lambda_threshold_matches_frozen_root() {
        let family = WeightingFamily::two_point_lambda(0.05, 0.5);
        let result = find_sp_threshold(&family, (0.1, 1.0), market()).unwrap();
        assert_rel(result.root, 0.3139883742703802268222292, 1e-8);
        assert!(result.margin_at_root.abs() < 1e-9);
        assert!(result.root > result.lo && result.root < result.hi);

        // the margin genuinely changes sign in a ±1e-6 window
        let margin = |lambda: f64| {
            build_model(family.instantiate(lambda).unwrap(), market())
                .unwrap()
                .sp_margin
        };
        assert!(margin(result.root - 1e-6) > 0.0);
        assert!(margin(result.root + 1e-6) < 0.0);
    }

    #[test]
    fn alpha_threshold_matches_frozen_root() {
        let family = WeightingFamily::gamma_alpha(0.05, 0.25);
        let result = find_sp_threshold(&family, (1e-3, 10.0), market()).unwrap();
        assert_rel(result.root, 0.2852626525901764262941563, 1e-7);
        assert!(result.margin_at_root.abs() < 1e-9);
    }

    #[test]
    fn degenerate_family_has_no_threshold() {
        let family = WeightingFamily::degenerate_rate();
        assert!(matches!(
            find_sp_threshold(&family, (0.05, 0.5), market()),
            Err(AnalysisError::BracketSameSign { .. })
        ));
    }

    #[test]
    fn gamma_margin_sweep_decreases_with_single_sign_change() {
        let family = WeightingFamily::gamma_alpha(0.05, 0.25);
        let grid = log_grid(1e-3, 10.0, 200).unwrap();
        let curve = sp_margin_curve(&family, &grid, market()).unwrap();

        let margins: Vec<f64> = curve.records.iter().map(|rec| rec.sp_margin).collect();
        assert!((margins[0] - 0.9958768898265606).abs() < 1e-6);
        // round α values don't land on a log grid, so probe them directly
        for (alpha, expected) in [
            (0.05, 0.7967379386295811),
            (0.2, 0.255452325533),
            (0.5, -0.511899225999),
            (10.0, -3.511981863),
        ] {
            let m = build_model(family.instantiate(alpha).unwrap(), market()).unwrap();
            assert!(
                (m.sp_margin - expected).abs() < 1e-6,
                "margin at alpha={alpha}: {}",
                m.sp_margin
            );
        }

        let mut sign_changes = 0;
        for w in margins.windows(2) {
            let slack = 1e-7 * (1.0 + w[0].abs());
            assert!(w[1] <= w[0] + slack, "margin increased: {} -> {}", w[0], w[1]);
            if w[0] > 0.0 && w[1] <= 0.0 {
                sign_changes += 1;
            }
        }
        assert_eq!(sign_changes, 1);
    }

    #[test]
    fn trigger_falls_as_impatience_rises() {
        let grid = log_grid(1e-3, 10.0, 50).unwrap();
        let curve = di_monotonicity_scan(&grid, 0.05, 0.05, market(), 1.0).unwrap();
        for w in curve.records.windows(2) {
            assert!(
                w[1].x_star < w[0].x_star,
                "trigger rose from {} to {} at alpha = {}",
                w[0].x_star,
                w[1].x_star,
                w[1].param
            );
        }
        for (alpha, expected) in [
            (1e-2, 0.4600828850594143952950129),
            (0.1, 0.4203847546704650569094255),
            (0.5, 0.3684696027729736176798298),
            (2.0, 0.3307106147025895438777483),
            (10.0, 0.3041130593184231516718329),
        ] {
            let f = WeightingDistribution::gamma_shifted(0.05, alpha, 0.05).unwrap();
            let m = build_model(f, market()).unwrap();
            assert_rel(m.x_star_candidate(1.0), expected, 1e-8);
        }
    }

    #[test]
    fn vanishing_alpha_approaches_classical_benchmark() {
        // As α → 0 the Gamma weighting collapses onto β + φ; at α = 1e-5 the
        // trigger sits within 1e-4 of x°(0.10) (the gap closes linearly in α).
        let f = WeightingDistribution::gamma_shifted(0.05, 1e-5, 0.05).unwrap();
        let m = build_model(f, market()).unwrap();
        let x_limit = benchmark_x_o(0.10, &market(), 1.0).unwrap();
        assert_rel(x_limit, 0.4674772708486752001976414, 1e-13);
        assert_rel(m.x_star(1.0).unwrap(), x_limit, 1e-4);
    }

    #[test]
    fn benchmark_ordering_valid_gap() {
        let b = benchmark_ordering(0.05, 0.1, 0.5, market(), 1.0).unwrap();
        assert_rel(b.x_r, 0.2794987437106619954734480, 1e-13);
        assert_rel(b.x_e.unwrap(), 0.4252586169870721447325487, 1e-13);
        assert_rel(b.x_rho0, 0.4674772708486752001976414, 1e-13);
        assert!(b.x_r <= b.x_e.unwrap() && b.x_e.unwrap() <= b.x_rho0);
    }

    #[test]
    fn benchmark_ordering_invalid_gap_is_partial() {
        let b = benchmark_ordering(0.05, 1.0, 0.5, market(), 1.0).unwrap();
        assert!(b.x_e.is_none());
        assert_rel(b.x_r, 0.2794987437106619954734480, 1e-13);
        assert_rel(b.x_rho0, 1.996069612585582165452042, 1e-13);
    }

    #[test]
    fn benchmark_ordering_collapses_without_spread() {
        let b = benchmark_ordering(0.05, 0.0, 0.5, market(), 1.0).unwrap();
        assert_rel(b.x_e.unwrap(), b.x_r, 1e-13);
        assert_rel(b.x_rho0, b.x_r, 1e-13);

        // Nearly all weight on the base rate: everything collapses to x°(r).
        let b = benchmark_ordering(0.05, 1.0, 1.0 - 1e-7, market(), 1.0).unwrap();
        assert_rel(b.x_e.unwrap(), b.x_r, 1e-4);
        assert_rel(b.x_rho0, b.x_r, 1e-4);
    }
}
