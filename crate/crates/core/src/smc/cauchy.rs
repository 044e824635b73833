//! Standard-Cauchy helpers for the truncated proposal. The CDF is
//! F(z) = atan(z)/pi + 1/2, so everything reduces to stable arctangent gaps.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// atan(M) - atan(m) for m <= M without cancellation. When both endpoints sit
/// deep in the same tail the direct difference loses all precision; the
/// addition formula atan(M) - atan(m) = atan((M - m)/(1 + M m)) is exact
/// whenever M m > -1, and for large same-sign endpoints the reciprocal form
/// atan(1/m) - atan(1/M) avoids overflow in the product.
fn atan_gap(m: f64, big: f64) -> f64 {
    let lo = if m == f64::NEG_INFINITY { -FRAC_PI_2 } else { m.atan() };
    let hi = if big == f64::INFINITY { FRAC_PI_2 } else { big.atan() };
    if !m.is_finite() || !big.is_finite() {
        return hi - lo;
    }
    if m * big > -1.0 {
        if m.abs() > 1.0 && big.abs() > 1.0 {
            let (s, t) = (1.0 / m, 1.0 / big);
            ((s - t) / (1.0 + s * t)).atan()
        } else {
            ((big - m) / (1.0 + m * big)).atan()
        }
    } else {
        hi - lo
    }
}

/// F(M) - F(m), the Cauchy mass of (m, M].
pub fn cauchy_cdf_span(m: f64, big: f64) -> f64 {
    atan_gap(m, big) / PI
}

/// Quantile u of the standard Cauchy truncated to (m, M).
pub fn truncated_cauchy_quantile(m: f64, big: f64, u: f64) -> f64 {
    debug_assert!(m < big, "empty support ({m}, {big})");
    debug_assert!(u > 0.0 && u < 1.0, "quantile level {u} outside (0, 1)");
    let base = if m == f64::NEG_INFINITY { -FRAC_PI_2 } else { m.atan() };
    (base + u * atan_gap(m, big)).tan()
}

/// One draw from the standard Cauchy truncated to (m, M); `None` when the
/// support is empty. The raw uniform is clamped away from {0, 1} so the draw
/// stays strictly interior.
pub fn sample_truncated_cauchy(rng: &mut ChaCha8Rng, m: f64, big: f64) -> Option<f64> {
    if !(m < big) {
        return None;
    }
    let u = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
    Some(truncated_cauchy_quantile(m, big, u))
}
