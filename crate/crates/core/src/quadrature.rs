//! Deterministic one-dimensional quadrature for Gaussian expectations.
//!
//! Two independent rules are provided:
//!
//! * [`GaussHermite`]: fixed-order rule, exact for polynomial integrands of
//!   degree `2n - 1` against a Gaussian weight. Best for smooth integrands.
//! * [`integrate_adaptive`]: globally adaptive Gauss-Kronrod (7/15) on a finite
//!   interval with user breakpoints. Used where integrands have kinks or
//!   features much narrower than the Gaussian scale.
//!
//! [`gaussian_expectation`] wraps the adaptive rule for `E[f(X)]`,
//! `X ~ N(0, var)`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::special::std_normal_pdf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature stopped at error {achieved:e} (target {target:e}) after {intervals} intervals")]
    ToleranceExceeded {
        achieved: f64,
        target: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
    #[error("Gauss-Hermite order must be at least 1")]
    ZeroOrder,
}

/// Gauss-Hermite nodes and weights for the weight `exp(-x^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence.
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        if order == 0 {
            return Err(QuadratureError::ZeroOrder);
        }
        let n = order;
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..m {
            // Initial guesses for the largest roots first.
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `integral of exp(-x^2) f(x) dx` over the real line.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `E[f(X)]` for `X ~ N(0, var)`.
    pub fn expect_normal(&self, var: f64, f: impl Fn(f64) -> f64) -> f64 {
        let scale = (2.0 * var).sqrt();
        self.integrate(|x| f(scale * x)) / PI.sqrt()
    }

    /// `E[f(X, Y)]` for independent `X ~ N(0, var_x)`, `Y ~ N(0, var_y)`.
    pub fn expect_normal_2d(&self, var_x: f64, var_y: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let (sx, sy) = ((2.0 * var_x).sqrt(), (2.0 * var_y).sqrt());
        let mut acc = 0.0;
        for (&x, &wx) in self.nodes.iter().zip(&self.weights) {
            for (&y, &wy) in self.nodes.iter().zip(&self.weights) {
                acc += wx * wy * f(sx * x, sy * y);
            }
        }
        acc / PI
    }
}

/// Settings for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights at the odd-indexed Kronrod nodes (1, 3, 5, 7).
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: [f64; K],
}

fn gauss_kronrod<const K: usize>(
    f: &impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
) -> Result<Segment<K>, QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.iter().all(|v| v.is_finite()) {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite { at: x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc.map(|v| GK_WEIGHTS[7] * v);
    let mut gauss = fc.map(|v| G_WEIGHTS[3] * v);
    for k in 0..7 {
        let dx = half * GK_NODES[k];
        let lo = eval(center - dx)?;
        let hi = eval(center + dx)?;
        for i in 0..K {
            let pair = lo[i] + hi[i];
            kronrod[i] += GK_WEIGHTS[k] * pair;
            if k % 2 == 1 {
                gauss[i] += G_WEIGHTS[k / 2] * pair;
            }
        }
    }
    let mut error = [0.0; K];
    for i in 0..K {
        error[i] = ((kronrod[i] - gauss[i]) * half).abs();
    }
    Ok(Segment {
        a,
        b,
        value: kronrod.map(|v| v * half),
        error,
    })
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// `breakpoints` inside `(a, b)` seed the initial partition; put them at
/// kinks and discontinuities of the integrand.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: AdaptiveOptions,
) -> Result<f64, QuadratureError> {
    integrate_adaptive_vec(|x| [f(x)], a, b, breakpoints, opts).map(|[v]| v)
}

/// [`integrate_adaptive`] for a vector of integrands sharing one partition.
///
/// Every component must meet the tolerance on its own.
pub fn integrate_adaptive_vec<const K: usize>(
    f: impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: AdaptiveOptions,
) -> Result<[f64; K], QuadratureError> {
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&p| p > a && p < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut segments = Vec::with_capacity(64);
    for w in cuts.windows(2) {
        segments.push(gauss_kronrod(&f, w[0], w[1])?);
    }
    loop {
        let mut value = [0.0; K];
        let mut error = [0.0; K];
        for s in &segments {
            for i in 0..K {
                value[i] += s.value[i];
                error[i] += s.error[i];
            }
        }
        let target = value.map(|v| opts.abs_tol.max(opts.rel_tol * v.abs()));
        let (excess, worst_component) = (0..K)
            .map(|i| (error[i] / target[i], i))
            .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc });
        if excess <= 1.0 {
            return Ok(value);
        }
        let fail = |intervals| QuadratureError::ToleranceExceeded {
            achieved: error[worst_component],
            target: target[worst_component],
            intervals,
        };
        if segments.len() >= opts.max_intervals {
            return Err(fail(segments.len()));
        }
        let score = |s: &Segment<K>| (0..K).map(|i| s.error[i] / target[i]).sum::<f64>();
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| score(x.1).total_cmp(&score(y.1)))
            .map(|(i, _)| i)
            .unwrap();
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // Interval collapsed to adjacent floats; nothing left to refine.
            return Err(fail(segments.len() + 1));
        }
        segments.push(gauss_kronrod(&f, s.a, mid)?);
        segments.push(gauss_kronrod(&f, mid, s.b)?);
    }
}

/// Half-width, in standard deviations, of the truncated Gaussian domain.
pub const GAUSSIAN_TRUNCATION: f64 = 12.0;

/// `E[f(X)]` for `X ~ N(0, var)` by adaptive quadrature.
///
/// `breakpoints` are given in the units of `X`. A zero variance returns
/// `f(0)`.
pub fn gaussian_expectation(
    var: f64,
    breakpoints: &[f64],
    opts: AdaptiveOptions,
    f: impl Fn(f64) -> f64,
) -> Result<f64, QuadratureError> {
    gaussian_expectation_vec(var, breakpoints, opts, |x| [f(x)]).map(|[v]| v)
}

/// Vector form of [`gaussian_expectation`].
pub fn gaussian_expectation_vec<const K: usize>(
    var: f64,
    breakpoints: &[f64],
    opts: AdaptiveOptions,
    f: impl Fn(f64) -> [f64; K],
) -> Result<[f64; K], QuadratureError> {
    if var <= 0.0 {
        return Ok(f(0.0));
    }
    let sd = var.sqrt();
    let scaled: Vec<f64> = breakpoints.iter().map(|&p| p / sd).collect();
    integrate_adaptive_vec(
        |h| {
            let w = std_normal_pdf(h);
            f(sd * h).map(|v| v * w)
        },
        -GAUSSIAN_TRUNCATION,
        GAUSSIAN_TRUNCATION,
        &scaled,
        opts,
    )
}
