//! Adaptive Gauss-Kronrod quadrature on a chain of segments.
//!
//! The estimator is the classic 7/15 pair: a 7-point Gauss rule embedded in a
//! 15-point Kronrod extension, with the QUADPACK error rescaling
//! `err ↦ resasc · min(1, (200·err/resasc)^{3/2})`. Segments are refined
//! worst-first by bisection until the summed error estimate drops below
//! `rel_tol · |integral|`.
//!
//! Callers are expected to seed the initial segment list with the analytic
//! structure of the integrand (peaks, scale changes, substitution
//! boundaries). A sharply localized feature that no initial node touches is
//! invisible to any sampling rule, so the adaptive loop can only refine
//! structure it has seen.
//!
//! ```
//! use wdro_core::quad::integrate;
//! let q = integrate(|x| x * x, &[0.0, 1.0], 1e-12).unwrap();
//! assert!((q.value - 1.0 / 3.0).abs() < 1e-14);
//! ```

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Result of an adaptive integration: the value, the summed error estimate of
/// all leaf segments, and how many segments the refinement produced.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub segments: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum QuadError {
    #[error("segment budget exhausted: {segments} segments, error {abs_error:.3e} above target {target:.3e}")]
    BudgetExhausted {
        segments: usize,
        abs_error: f64,
        target: f64,
    },
    #[error("integrand returned a non-finite value near x = {x}")]
    NonFinite { x: f64 },
    #[error("segment list must be finite and strictly increasing")]
    BadSegments,
}

/// 15-point Kronrod abscissae on [-1, 1]; odd indices are the embedded
/// 7-point Gauss abscissae, the last entry is the midpoint.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const MAX_SEGMENTS: usize = 2048;

/// QUADPACK's error rescaling: trust |K15 - G7| only up to the scale of the
/// integrand's variation, and never report below 50 ulps of |∫|f||.
fn rescale_error(err: f64, result_abs: f64, result_asc: f64) -> f64 {
    let mut err = err.abs();
    if result_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / result_asc).powf(1.5);
        err = if scale < 1.0 { result_asc * scale } else { result_asc };
    }
    let min_positive = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if result_abs > min_positive {
        err = err.max(50.0 * f64::EPSILON * result_abs);
    }
    err
}

/// One 15-point Kronrod evaluation over [a, b]: (value, error estimate).
fn qk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0_f64; 7];
    let mut fv2 = [0.0_f64; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        let fsum = f1 + f2;
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }

    let value = resk * half;
    if !value.is_finite() {
        return Err(QuadError::NonFinite { x: center });
    }
    let err = rescale_error((resk - resg) * half, resabs * half, resasc * half);
    Ok((value, err))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrate `f` over the chain `segments[0] .. segments[last]`, refining
/// worst-first until the total error estimate is below `rel_tol · |integral|`.
/// The tolerance is purely relative: an integral that vanishes by
/// cancellation cannot converge here (the 1e-300 floor only lets the
/// identically-zero integrand terminate). Every integrand in this crate is
/// nonnegative, so that trade is free.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    segments: &[f64],
    rel_tol: f64,
) -> Result<Quadrature, QuadError> {
    if segments.len() < 2 || segments.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(QuadError::BadSegments);
    }

    let mut heap = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    // Segments too narrow to bisect are retired here; their error estimates
    // still count toward the total.
    let mut stuck_error = 0.0;
    let mut count = segments.len() - 1;

    for w in segments.windows(2) {
        let (v, e) = qk15(&mut f, w[0], w[1])?;
        value += v;
        error += e;
        heap.push(Segment { a: w[0], b: w[1], value: v, error: e });
    }

    loop {
        let target = (rel_tol * value.abs()).max(1e-300);
        if error + stuck_error <= target {
            return Ok(Quadrature { value, abs_error: error + stuck_error, segments: count });
        }
        let Some(worst) = heap.pop() else {
            // Every remaining segment is unrefinable; report what we have.
            return Ok(Quadrature { value, abs_error: stuck_error, segments: count });
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            error -= worst.error;
            stuck_error += worst.error;
            continue;
        }
        if count >= MAX_SEGMENTS {
            return Err(QuadError::BudgetExhausted {
                segments: count,
                abs_error: error + stuck_error,
                target,
            });
        }
        let (v1, e1) = qk15(&mut f, worst.a, mid)?;
        let (v2, e2) = qk15(&mut f, mid, worst.b)?;
        value += v1 + v2 - worst.value;
        error += e1 + e2 - worst.error;
        count += 1;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| x * x, &[0.0, 1.0], 1e-12).unwrap();
        assert!((q.value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(q.segments, 1);
    }

    #[test]
    fn sine_over_half_period() {
        let q = integrate(f64::sin, &[0.0, std::f64::consts::PI], 1e-13).unwrap();
        assert!((q.value - 2.0).abs() < 1e-13);
    }

    #[test]
    fn exponential_tail() {
        let q = integrate(|x| (-x).exp(), &[0.0, 1.0, 10.0, 700.0], 1e-12).unwrap();
        assert!((q.value - 1.0).abs() < 1e-12, "value {}", q.value);
    }

    #[test]
    fn seeded_narrow_peak() {
        // Normalized Gaussian of width 1e-2 centered at 5; the seed nodes
        // bracket the peak so refinement can find it.
        let c = 1e4_f64;
        let norm = (c / std::f64::consts::PI).sqrt();
        let f = |x: f64| norm * (-c * (x - 5.0) * (x - 5.0)).exp();
        let q = integrate(f, &[0.0, 4.9, 5.1, 10.0], 1e-10).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10, "value {}", q.value);
    }

    #[test]
    fn unresolvable_oscillation_exhausts_budget() {
        // sin(1/x) oscillates infinitely often approaching zero; resolving it
        // near x needs segments of width ~x², so no finite budget reaches a
        // 1e-9 relative tolerance. Integrands like this must be transformed
        // before reaching this module, and the failure must be loud.
        let res = integrate(|x| (1.0 / x).sin(), &[0.0, 1.0], 1e-9);
        assert!(matches!(res, Err(QuadError::BudgetExhausted { .. })));
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(matches!(
            integrate(|x| x, &[1.0, 0.0], 1e-9),
            Err(QuadError::BadSegments)
        ));
        assert!(matches!(
            integrate(|x| x, &[0.0], 1e-9),
            Err(QuadError::BadSegments)
        ));
        assert!(matches!(
            integrate(|x| x, &[0.0, f64::NAN], 1e-9),
            Err(QuadError::BadSegments)
        ));
    }

    #[test]
    fn propagates_non_finite_integrand() {
        let res = integrate(|x| 1.0 / x, &[-1.0, 1.0], 1e-9);
        assert!(matches!(res, Err(QuadError::NonFinite { .. })));
    }
}
