//! Standard normal density, tail probability and inverse Mills ratio.

use std::f64::consts::{PI, SQRT_2};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Beyond this argument the Mills ratio switches to its continued fraction.
const MILLS_CF_CUTOVER: f64 = 8.0;
const MILLS_CF_DEPTH: usize = 64;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Zero-mean Gaussian density with variance `var`.
pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Upper tail `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `Phi(x) = P(N(0,1) <= x)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    q_function(-x)
}

/// Inverse Mills ratio `phi(x) / Q(x)`, finite for every finite `x`.
///
/// Uses `erfc` below the cutover and the Laplace continued fraction
/// `Q(x)/phi(x) = 1/(x + 1/(x + 2/(x + ...)))` above it, so the ratio does not
/// degrade into `0/0` in the far tail.
pub fn inverse_mills(x: f64) -> f64 {
    if x < MILLS_CF_CUTOVER {
        std_normal_pdf(x) / q_function(x)
    } else {
        let mut cf = x;
        for k in (1..=MILLS_CF_DEPTH).rev() {
            cf = x + k as f64 / cf;
        }
        cf
    }
}

/// `r(x) (r(x) - x)` with `r` the inverse Mills ratio; lies in `(0, 1)`.
///
/// This is the variance-reduction factor of a Gaussian truncated to `(x, inf)`
/// and the derivative of `r`. The far tail uses `r - x = 1/(x + 2/(x + ...))`
/// to avoid cancellation.
pub fn mills_slope(x: f64) -> f64 {
    if x < MILLS_CF_CUTOVER {
        let r = inverse_mills(x);
        r * (r - x)
    } else {
        let mut cf = x;
        for k in (2..=MILLS_CF_DEPTH).rev() {
            cf = x + k as f64 / cf;
        }
        let excess = 1.0 / cf;
        (x + excess) * excess
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        assert_relative_eq!(std_normal_pdf(2.0), 0.053_990_966_513_188_06, max_relative = 1e-14);
        assert_relative_eq!(q_function(2.0), 0.022_750_131_948_179_21, max_relative = 1e-13);
        assert_relative_eq!(q_function(0.0), 0.5);
        assert_relative_eq!(q_function(-1.0) + q_function(1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(normal_pdf(2.0, 1.0), std_normal_pdf(2.0), max_relative = 1e-15);
    }

    #[test]
    fn mills_branches_agree_at_cutover() {
        let below = std_normal_pdf(7.999) / q_function(7.999);
        assert_relative_eq!(inverse_mills(7.999), below, max_relative = 1e-13);
        let direct = std_normal_pdf(8.0) / q_function(8.0);
        assert_relative_eq!(inverse_mills(8.0), direct, max_relative = 1e-10);
        let slope_direct = direct * (direct - 8.0);
        assert_relative_eq!(mills_slope(8.0), slope_direct, max_relative = 1e-7);
    }

    #[test]
    fn mills_far_tail_is_finite() {
        for &x in &[10.0, 40.0, 1e3, 1e8] {
            let r = inverse_mills(x);
            assert!(r.is_finite() && r > x);
            let s = mills_slope(x);
            assert!(s > 0.0 && s <= 1.0, "slope {s} at {x}");
        }
        assert!(inverse_mills(-40.0) >= 0.0);
        assert!(mills_slope(-40.0) >= 0.0);
    }
}
