//! Principal branch of the Lambert W function on the nonnegative reals.

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 50;

/// Solves `w * exp(w) = x` for `w >= 0` by Halley iteration.
///
/// The starting guess `ln(1 + x)` is within a factor of two of the root on
/// the whole half-line, so a handful of third-order steps reach machine
/// precision.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "lambert_w0 requires a finite nonnegative argument, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let mut w = x.ln_1p();
    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let residual = w * ew - x;
        let d1 = ew * (w + 1.0);
        let step = residual / (d1 - (w + 2.0) * residual / (2.0 * w + 2.0));
        let next = (w - step).max(0.0);
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(x: f64) -> f64 {
        let w = lambert_w0(x).unwrap();
        (w * w.exp() - x).abs() / x.max(1.0)
    }

    /// Bisection oracle on w e^w - x, independent of the Halley path.
    fn bisect(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, x.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn closed_form_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        // omega constant, frozen from the bisection oracle to 1e-14
        let omega = bisect(1.0);
        assert!((omega - 0.567_143_290_409_783_8).abs() < 1e-14);
        assert!((lambert_w0(1.0).unwrap() - omega).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(lambert_w0(-1e-300).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
        assert!(lambert_w0(f64::INFINITY).is_err());
    }

    #[test]
    fn agrees_with_bisection() {
        for &x in &[1e-12, 1e-6, 0.3, 2.0, 17.0, 2400.0, 1e6] {
            let w = lambert_w0(x).unwrap();
            let b = bisect(x);
            assert!((w - b).abs() <= 1e-12 * b.max(1e-12), "x={x} w={w} b={b}");
        }
    }

    proptest! {
        #[test]
        fn self_consistent_log_uniform(log_x in -12.0f64..6.0) {
            let x = 10f64.powf(log_x);
            prop_assert!(residual(x) <= 1e-12);
        }
    }
}
