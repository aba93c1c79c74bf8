//! Posterior-mean denoisers.
//!
//! The inner denoiser is the MMSE estimate of a Bernoulli-Gaussian `X` from
//! `U = aX + N(0, s2)`. The outer denoisers return the score
//! `(theta - E[Z | theta, y]) / v` for the linear and clipping channels.

use thiserror::Error;

use crate::channel::{Channel, ChannelKind, SignalPrior};
use crate::special::{inverse_mills, mills_slope};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum DenoiserError {
    #[error("variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),
    #[error("clip threshold must be positive, got {0}")]
    InvalidThreshold(f64),
}

fn check_variance(v: f64) -> Result<f64, DenoiserError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(DenoiserError::NonPositiveVariance(v))
    }
}

/// Bernoulli-Gaussian posterior-mean denoiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerDenoiser {
    prior: SignalPrior,
}

impl InnerDenoiser {
    pub fn new(prior: SignalPrior) -> Self {
        Self { prior }
    }

    pub fn prior(&self) -> SignalPrior {
        self.prior
    }

    /// Binds the effective gain `a` and noise variance `s2`.
    pub fn with_params(&self, a: f64, s2: f64) -> Result<InnerParams, DenoiserError> {
        let s2 = check_variance(s2)?;
        if !a.is_finite() {
            return Err(DenoiserError::NonPositiveVariance(a));
        }
        let rho = self.prior.density();
        let v1 = a * a / rho + s2;
        let gain = (a / rho) / v1;
        let log_odds_const = if rho < 1.0 {
            (rho / (1.0 - rho)).ln() - 0.5 * (v1 / s2).ln()
        } else {
            f64::INFINITY
        };
        Ok(InnerParams {
            gain,
            inv_v0: 1.0 / s2,
            inv_v1: 1.0 / v1,
            log_odds_const,
        })
    }
}

/// Inner denoiser with `a` and `s2` fixed; evaluation is infallible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerParams {
    gain: f64,
    inv_v0: f64,
    inv_v1: f64,
    log_odds_const: f64,
}

impl InnerParams {
    /// Posterior probability that the entry is active.
    pub fn activity(&self, u: f64) -> f64 {
        if self.log_odds_const == f64::INFINITY {
            return 1.0;
        }
        let log_odds = self.log_odds_const + 0.5 * u * u * (self.inv_v0 - self.inv_v1);
        if log_odds >= 0.0 {
            1.0 / (1.0 + (-log_odds).exp())
        } else {
            let e = log_odds.exp();
            e / (1.0 + e)
        }
    }

    /// `(f_in(u), f_in'(u))`.
    pub fn eval(&self, u: f64) -> (f64, f64) {
        let pi = self.activity(u);
        let f = pi * self.gain * u;
        let df = self.gain * pi * (1.0 + (1.0 - pi) * u * u * (self.inv_v0 - self.inv_v1));
        (f, df)
    }

    pub fn value(&self, u: f64) -> f64 {
        self.eval(u).0
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.eval(u).1
    }
}

/// `E[X | aX + N(0, s2) = u]`.
pub fn f_in(u: f64, a: f64, s2: f64, prior: &SignalPrior) -> Result<f64, DenoiserError> {
    Ok(InnerDenoiser::new(*prior).with_params(a, s2)?.value(u))
}

/// `d f_in / du`, equal to `a Var(X | u) / s2`.
pub fn f_in_prime(u: f64, a: f64, s2: f64, prior: &SignalPrior) -> Result<f64, DenoiserError> {
    Ok(InnerDenoiser::new(*prior).with_params(a, s2)?.derivative(u))
}

/// `(theta - y) / (v + sigma2)`.
pub fn f_out_linear(theta: f64, y: f64, v: f64, sigma2: f64) -> Result<f64, DenoiserError> {
    let tau = check_variance(v + sigma2)?;
    Ok((theta - y) / tau)
}

/// Score for `y = clamp(z + w, -A, A)` given the prior `Z ~ N(theta, v)`.
pub fn f_out_clip(theta: f64, y: f64, v: f64, sigma2: f64, threshold: f64) -> Result<f64, DenoiserError> {
    Ok(clip_eval(theta, y, check_variance(v + sigma2)?, check_threshold(threshold)?).0)
}

/// `d f_out / d theta` for either channel.
pub fn f_out_prime(theta: f64, y: f64, v: f64, sigma2: f64, kind: ChannelKind) -> Result<f64, DenoiserError> {
    let tau = check_variance(v + sigma2)?;
    match kind {
        ChannelKind::Linear => Ok(1.0 / tau),
        ChannelKind::Clip { threshold } => Ok(clip_eval(theta, y, tau, check_threshold(threshold)?).1),
    }
}

fn check_threshold(a: f64) -> Result<f64, DenoiserError> {
    if a > 0.0 {
        Ok(a)
    } else {
        Err(DenoiserError::InvalidThreshold(a))
    }
}

fn clip_eval(theta: f64, y: f64, tau: f64, threshold: f64) -> (f64, f64) {
    let sd = tau.sqrt();
    if y >= threshold {
        let beta = (threshold - theta) / sd;
        (-inverse_mills(beta) / sd, mills_slope(beta) / tau)
    } else if y <= -threshold {
        let gamma = (threshold + theta) / sd;
        (inverse_mills(gamma) / sd, mills_slope(gamma) / tau)
    } else {
        ((theta - y) / tau, 1.0 / tau)
    }
}

/// Channel-matched outer denoiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterDenoiser {
    channel: Channel,
}

impl OuterDenoiser {
    pub fn new(channel: Channel) -> Self {
        Self { channel }
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    /// Binds the prior variance `v` of `Z` around `theta`.
    pub fn with_variance(&self, v: f64) -> Result<OuterParams, DenoiserError> {
        let tau = check_variance(v + self.channel.noise_variance)?;
        if v < 0.0 {
            return Err(DenoiserError::NonPositiveVariance(v));
        }
        let threshold = match self.channel.kind {
            ChannelKind::Linear => None,
            ChannelKind::Clip { threshold } => Some(check_threshold(threshold)?),
        };
        Ok(OuterParams { tau, threshold })
    }
}

/// Outer denoiser with `v` fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterParams {
    tau: f64,
    threshold: Option<f64>,
}

impl OuterParams {
    /// `(f_out(theta, y), d f_out / d theta)`.
    pub fn eval(&self, theta: f64, y: f64) -> (f64, f64) {
        match self.threshold {
            None => ((theta - y) / self.tau, 1.0 / self.tau),
            Some(a) => clip_eval(theta, y, self.tau, a),
        }
    }

    /// Total variance `v + sigma2`.
    pub fn tau(&self) -> f64 {
        self.tau
    }
}
