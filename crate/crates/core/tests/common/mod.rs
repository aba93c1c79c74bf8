//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls the closed forms under test.

#![allow(dead_code)]

use dgamp::channel::ChannelKind;
use dgamp::network::TreeNetwork;
use rand::Rng;

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    QuadratureNonConvergence { a: f64, b: f64 },
    Degenerate,
}

/// `ln Q(x)` for the standard normal tail, stable for large `x`.
pub fn ln_q(x: f64) -> f64 {
    if x < 25.0 {
        (0.5 * libm::erfc(x / std::f64::consts::SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (x * SQRT_2PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln()
    }
}

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean) * (x - mean) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Adaptive Simpson on `[a, b]` with an absolute tolerance.
pub fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, OracleError> {
    fn step(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64, OracleError> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(OracleError::QuadratureNonConvergence { a, b });
        }
        Ok(step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// [`simpson`] over `[a, b]` split at `breaks` and into `panels` pieces.
pub fn integrate(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    panels: usize,
    tol: f64,
) -> Result<f64, OracleError> {
    let mut cuts: Vec<f64> = (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect();
    cuts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let per = tol / cuts.len() as f64;
    cuts.windows(2).map(|w| simpson(f, w[0], w[1], per)).sum()
}

/// Posterior mean of `Z ~ N(theta, v)` given `y = g(Z + W)`, `W ~ N(0, sigma2)`,
/// by direct integration of the unnormalized posterior.
pub fn posterior_z_oracle(
    theta: f64,
    y: f64,
    v: f64,
    sigma2: f64,
    kind: ChannelKind,
) -> Result<f64, OracleError> {
    if !(v > 0.0 && sigma2 > 0.0) {
        return Err(OracleError::Degenerate);
    }
    let sd = sigma2.sqrt();
    let ln_lik = move |z: f64| -> f64 {
        match kind {
            ChannelKind::Clip { threshold } if y >= threshold => ln_q((threshold - z) / sd),
            ChannelKind::Clip { threshold } if y <= -threshold => ln_q((threshold + z) / sd),
            _ => ln_normal(y, z, sigma2),
        }
    };
    let ln_post = |z: f64| ln_normal(z, theta, v) + ln_lik(z);

    // The log posterior is concave: locate its mode by golden-section search.
    let span = 40.0 * (v.sqrt() + sd) + (y - theta).abs();
    let (mut lo, mut hi) = (theta.min(y) - span, theta.max(y) + span);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..300 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if ln_post(c) > ln_post(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    let mode = 0.5 * (lo + hi);
    let peak = ln_post(mode);
    let width = 40.0 * v.sqrt();
    let breaks: Vec<f64> = [-20.0, -5.0, -1.0, 0.0, 1.0, 5.0, 20.0]
        .iter()
        .map(|k| mode + k * sd)
        .collect();
    let (a, b) = (mode - width, mode + width);
    let weight = |z: f64| (ln_post(z) - peak).exp();
    let norm = integrate(&weight, a, b, &breaks, 64, 1e-14)?;
    let first = integrate(&|z| (z - mode) * weight(z), a, b, &breaks, 64, 1e-14 * width)?;
    Ok(mode + first / norm)
}

/// `f_out = (theta - Z_hat) / v` through the posterior-mean oracle.
pub fn f_out_oracle(theta: f64, y: f64, v: f64, sigma2: f64, kind: ChannelKind) -> Result<f64, OracleError> {
    Ok((theta - posterior_z_oracle(theta, y, v, sigma2, kind)?) / v)
}

/// Posterior mean of `X` given `u = a X + N(0, s2)` under the
/// Bernoulli-Gaussian prior, by trapezoidal integration over `x`.
pub fn f_in_oracle(u: f64, a: f64, s2: f64, rho: f64) -> f64 {
    let vx = 1.0 / rho;
    let ln_active = |x: f64| rho.ln() + ln_normal(x, 0.0, vx) + ln_normal(u, a * x, s2);
    let ln_inactive = if rho < 1.0 {
        (1.0 - rho).ln() + ln_normal(u, 0.0, s2)
    } else {
        f64::NEG_INFINITY
    };
    // Grid wide enough to hold the active integrand around its peak.
    let prec = 1.0 / vx + a * a / s2;
    let centre = (a * u / s2) / prec;
    let width = 20.0 / prec.sqrt();
    let n = 8000;
    let h = 2.0 * width / n as f64;
    let grid: Vec<f64> = (0..=n).map(|k| centre - width + h * k as f64).collect();
    let peak = grid.iter().map(|&x| ln_active(x)).fold(ln_inactive, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, &x) in grid.iter().enumerate() {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let e = (ln_active(x) - peak).exp() * w * h;
        num += x * e;
        den += e;
    }
    den += (ln_inactive - peak).exp();
    num / den
}

/// Textbook posterior mean for `u = x + N(0, tau2)` with a
/// Bernoulli-Gaussian prior of unit power, written independently.
fn bg_posterior_mean(u: f64, tau2: f64, rho: f64) -> f64 {
    let vx = 1.0 / rho;
    let ln_on = rho.ln() + ln_normal(u, 0.0, vx + tau2);
    let ln_off = if rho < 1.0 {
        (1.0 - rho).ln() + ln_normal(u, 0.0, tau2)
    } else {
        f64::NEG_INFINITY
    };
    let m = ln_on.max(ln_off);
    let pi = (ln_on - m).exp() / ((ln_on - m).exp() + (ln_off - m).exp());
    pi * vx / (vx + tau2) * u
}

/// Bayes MMSE of the scalar channel `U = X + N(0, tau2)`.
pub fn bg_mmse(tau2: f64, rho: f64) -> f64 {
    let vx = 1.0 / rho;
    let span = 14.0 * (vx + tau2).sqrt();
    let h = tau2.sqrt().min(1.0) / 40.0;
    let n = (2.0 * span / h).ceil() as usize;
    let h = 2.0 * span / n as f64;
    let mut ef2 = 0.0;
    for k in 0..=n {
        let u = -span + h * k as f64;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        let mut p = rho * ln_normal(u, 0.0, vx + tau2).exp();
        if rho < 1.0 {
            p += (1.0 - rho) * ln_normal(u, 0.0, tau2).exp();
        }
        let f = bg_posterior_mean(u, tau2, rho);
        ef2 += w * h * p * f * f;
    }
    1.0 - ef2
}

/// Scalar AMP state evolution for the linear channel with `delta_total`
/// measurements per unknown: `tau2 = sigma2 + mse / delta_total`,
/// `mse <- mmse(tau2)`. Returns `mse_1 ..= mse_iterations`.
pub fn amp_se_oracle(rho: f64, sigma2: f64, delta_total: f64, iterations: usize) -> Vec<f64> {
    let mut mse = 1.0;
    (0..iterations)
        .map(|_| {
            mse = bg_mmse(sigma2 + mse / delta_total, rho);
            mse
        })
        .collect()
}

/// Fixed point of the Gaussian-prior (`rho = 1`) AMP recursion
/// `m = tau2 / (1 + tau2)`, `tau2 = sigma2 + m / delta`, as the positive
/// root of `m^2 / delta + (1 + sigma2 - 1/delta) m - sigma2 = 0`.
pub fn wiener_fixed_point(sigma2: f64, delta: f64) -> f64 {
    let b = 1.0 + sigma2 - 1.0 / delta;
    (-b + (b * b + 4.0 * sigma2 / delta).sqrt()) * delta / 2.0
}

/// Uniformly random labelled tree on `n` nodes via random parent attachment
/// on a shuffled order.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> TreeNetwork {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let edges: Vec<(usize, usize)> = (1..n)
        .map(|k| (order[rng.gen_range(0..k)], order[k]))
        .collect();
    TreeNetwork::new(n, &edges).expect("random attachment yields a tree")
}

/// Sample mean, variance and excess kurtosis.
pub fn moments(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (mean, m2, m4 / (m2 * m2) - 3.0)
}
