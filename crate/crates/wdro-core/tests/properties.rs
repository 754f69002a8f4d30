//! Randomized checks of the identities the engine is built on.
//!
//! Each property states something that must hold for every admissible
//! parameter draw, not just the handful of models pinned in unit tests:
//! reductions between weighting variants, scaling laws of the trigger,
//! the defining quadratic of the characteristic exponent, and the
//! ordering and bound properties of the marginal value.

use proptest::prelude::*;
use wdro_core::analysis::benchmark_ordering;
use wdro_core::discounting::WeightingDistribution;
use wdro_core::equilibrium::{
    benchmark_x_o, build_model, theta, EquilibriumModel, MarketParams,
};

fn rel(actual: f64, expected: f64) -> f64 {
    (actual - expected).abs() / expected.abs().max(1e-300)
}

fn any_weighting() -> impl Strategy<Value = WeightingDistribution> {
    prop_oneof![
        (1e-3f64..2.0).prop_map(|r| WeightingDistribution::degenerate(r).unwrap()),
        ((1e-3f64..1.0), (0.0f64..2.0), (0.01f64..0.99))
            .prop_map(|(r, l, d)| WeightingDistribution::two_point(r, l, d).unwrap()),
        ((1e-3f64..0.5), (1e-2f64..5.0), (1e-2f64..1.0))
            .prop_map(|(p, a, b)| WeightingDistribution::gamma_shifted(p, a, b).unwrap()),
        proptest::collection::vec(((1e-3f64..2.0), (0.05f64..1.0)), 1..5).prop_map(|raw| {
            let total: f64 = raw.iter().map(|&(_, w)| w).sum();
            let mut atoms: Vec<(f64, f64)> =
                raw.iter().map(|&(r, w)| (r, w / total)).collect();
            // Rebalance the last weight so the stored weights sum to 1.0
            // exactly, not merely within the constructor's tolerance.
            let partial: f64 = atoms[..atoms.len() - 1].iter().map(|&(_, w)| w).sum();
            atoms.last_mut().unwrap().1 = 1.0 - partial;
            WeightingDistribution::mixture(atoms).unwrap()
        }),
    ]
}

/// A weighting together with market parameters guaranteed admissible for
/// it: the curvature γ is placed strictly between 1 and the smallest
/// characteristic exponent on the support of F, which is exactly the
/// condition for the value to be finite.
fn any_model() -> impl Strategy<Value = EquilibriumModel> {
    (any_weighting(), 0.05f64..0.8, 0.1f64..10.0, 0.02f64..0.95).prop_filter_map(
        "model must assemble",
        |(weighting, sigma, k, u)| {
            let headroom = (theta(weighting.min_rate(), sigma) - 1.0).min(3.0);
            let gamma = 1.0 + u * headroom;
            let market = MarketParams::new(sigma, gamma, k).ok()?;
            build_model(weighting, market).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discount_curves_start_at_one_and_decrease(
        weighting in any_weighting(),
        times in proptest::collection::vec(1e-3f64..50.0, 2..8),
    ) {
        prop_assert_eq!(weighting.h_eval(0.0).unwrap(), 1.0);
        let mut ts = times;
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let mut prev_t = 0.0;
        let mut prev_h = 1.0;
        for t in ts {
            let h = weighting.h_eval(t).unwrap();
            prop_assert!(h > 0.0 && h < prev_h, "h({t}) = {h} vs h({prev_t}) = {prev_h}");
            prev_t = t;
            prev_h = h;
        }
    }

    #[test]
    fn every_mixture_of_exponentials_shows_decreasing_impatience(
        weighting in any_weighting(),
        t in 0.0f64..50.0,
    ) {
        // Prelec's measure of the induced curve is a variance (of the rate
        // under the time-t reweighting), so it can only dip below zero by
        // numerical noise.
        prop_assert!(weighting.prelec(t) >= -1e-10);
    }

    #[test]
    fn the_initial_discount_rate_is_the_mean_rate(weighting in any_weighting()) {
        let mean_rate = weighting.rate_moment(|r| r).unwrap();
        prop_assert!(rel(weighting.rho(0.0), mean_rate) < 1e-10);
    }

    #[test]
    fn characteristic_exponent_solves_its_quadratic(
        r in 1e-3f64..5.0,
        sigma in 0.05f64..1.0,
    ) {
        let th = theta(r, sigma);
        prop_assert!(th > 1.0);
        let residual = 0.5 * sigma * sigma * th * (th - 1.0) - r;
        prop_assert!(residual.abs() <= 1e-12 * r.max(1.0), "residual {residual}");
    }

    #[test]
    fn point_mass_weighting_reduces_to_the_classical_trigger(
        r0 in 1e-3f64..2.0,
        sigma in 0.05f64..0.8,
        k in 0.1f64..10.0,
        u in 0.02f64..0.95,
        q in 0.05f64..20.0,
    ) {
        let gamma = 1.0 + u * (theta(r0, sigma) - 1.0).min(3.0);
        let market = MarketParams::new(sigma, gamma, k).unwrap();
        let weighting = WeightingDistribution::degenerate(r0).unwrap();
        let model = build_model(weighting, market).unwrap();
        prop_assert!((model.sp_margin - 1.0).abs() < 1e-12);
        let classical = benchmark_x_o(r0, &market, q).unwrap();
        prop_assert!(rel(model.x_star(q).unwrap(), classical) < 1e-12);
    }

    #[test]
    fn closing_the_rate_gap_recovers_the_point_mass(
        r in 1e-3f64..1.0,
        delta in 0.01f64..0.99,
        sigma in 0.05f64..0.8,
        k in 0.1f64..10.0,
        u in 0.02f64..0.95,
        t in 0.0f64..50.0,
    ) {
        let gamma = 1.0 + u * (theta(r, sigma) - 1.0).min(3.0);
        let market = MarketParams::new(sigma, gamma, k).unwrap();
        let gapless = WeightingDistribution::two_point(r, 0.0, delta).unwrap();
        let point = WeightingDistribution::degenerate(r).unwrap();
        prop_assert!(rel(gapless.h_eval(t).unwrap(), point.h_eval(t).unwrap()) < 1e-14);
        let m_gapless = build_model(gapless, market).unwrap();
        let m_point = build_model(point, market).unwrap();
        prop_assert!(rel(m_gapless.x_star_candidate(1.0), m_point.x_star_candidate(1.0)) < 1e-12);
        prop_assert!((m_gapless.sp_margin - m_point.sp_margin).abs() < 1e-12);
    }

    #[test]
    fn a_two_point_weighting_is_its_own_two_atom_mixture(
        r in 1e-3f64..1.0,
        lambda in 0.0f64..2.0,
        delta in 0.01f64..0.99,
        sigma in 0.05f64..0.8,
        k in 0.1f64..10.0,
        u in 0.02f64..0.95,
        t in 0.0f64..50.0,
    ) {
        let gamma = 1.0 + u * (theta(r, sigma) - 1.0).min(3.0);
        let market = MarketParams::new(sigma, gamma, k).unwrap();
        let two_point = WeightingDistribution::two_point(r, lambda, delta).unwrap();
        let mixture =
            WeightingDistribution::mixture(vec![(r, delta), (r + lambda, 1.0 - delta)]).unwrap();
        prop_assert!(rel(two_point.h_eval(t).unwrap(), mixture.h_eval(t).unwrap()) < 1e-14);
        let m_tp = build_model(two_point, market).unwrap();
        let m_mx = build_model(mixture, market).unwrap();
        prop_assert!(rel(m_tp.iota, m_mx.iota) < 1e-13);
        prop_assert!(rel(m_tp.x_star_candidate(1.0), m_mx.x_star_candidate(1.0)) < 1e-13);
        prop_assert!((m_tp.sp_margin - m_mx.sp_margin).abs() < 1e-13 * m_tp.sp_margin.abs().max(1.0));
    }

    #[test]
    fn trigger_and_capacity_rule_invert_each_other(
        model in any_model(),
        q in 0.05f64..20.0,
        x in 0.01f64..10.0,
    ) {
        prop_assert!(rel(model.q_tilde(model.x_star_candidate(q)), q) < 1e-10);
        prop_assert!(rel(model.x_star_candidate(model.q_tilde(x)), x) < 1e-10);
    }

    #[test]
    fn trigger_scales_with_capacity_to_the_inverse_curvature(
        model in any_model(),
        q in 0.05f64..20.0,
        c in 0.1f64..10.0,
    ) {
        let gamma = model.market.gamma;
        let scaled = model.x_star_candidate(c.powf(gamma) * q);
        prop_assert!(rel(scaled, c * model.x_star_candidate(q)) < 1e-12);
    }

    #[test]
    fn marginal_value_never_exceeds_marginal_cost_on_valid_models(
        model in any_model(),
        q in 0.05f64..20.0,
        frac in 0.05f64..2.0,
    ) {
        prop_assume!(model.sp_holds);
        let k = model.market.k;
        let x = frac * model.x_star_candidate(q);
        let v_q = model.v_q_marginal(x, q).unwrap();
        prop_assert!(v_q <= k + 1e-10 * k, "V_q = {v_q} above K = {k} at x/x* = {frac}");
        if frac < 0.995 {
            prop_assert!(v_q < k, "V_q must stay strictly below K inside continuation");
        }
    }

    #[test]
    fn value_is_continuous_across_the_trigger(
        model in any_model(),
        q in 0.05f64..20.0,
    ) {
        let x_s = model.x_star_candidate(q);
        let below = model.v_value_candidate(x_s * (1.0 - 1e-9), q).unwrap();
        let above = model.v_value_candidate(x_s * (1.0 + 1e-9), q).unwrap();
        let scale = below.abs().max(1.0);
        prop_assert!(
            (above - below).abs() < 1e-6 * scale,
            "value jumps across the trigger: {below} vs {above}"
        );
    }

    #[test]
    fn classical_triggers_bracket_the_equilibrium_trigger(
        r in 1e-3f64..1.0,
        lambda in 0.0f64..2.0,
        delta in 0.01f64..0.99,
        sigma in 0.05f64..0.8,
        k in 0.1f64..10.0,
        u in 0.02f64..0.95,
        q in 0.05f64..20.0,
    ) {
        let gamma = 1.0 + u * (theta(r, sigma) - 1.0).min(3.0);
        let market = MarketParams::new(sigma, gamma, k).unwrap();
        let ordering = benchmark_ordering(r, lambda, delta, market, q).unwrap();
        let slack = 1e-12 * ordering.x_rho0;
        prop_assert!(ordering.x_r <= ordering.x_rho0 + slack);
        if let Some(x_e) = ordering.x_e {
            prop_assert!(ordering.x_r <= x_e + slack && x_e <= ordering.x_rho0 + slack);
        }
    }
}
