//! State evolution for Bayes-optimal D-GAMP and its reference protocols.
//!
//! Each node carries a handful of scalars. The outer side needs the joint
//! law of `(Z, Z_t)` and the denoiser variance `v`; the inner side sees the
//! scalar channel `U = alpha X + N(0, Sigma)` and a denoiser tuned to
//! `(a, s2)`. The per-node quantities are exchanged with the same
//! consensus engine the simulator uses.

use thiserror::Error;

use crate::channel::{Channel, ChannelKind, SignalPrior};
use crate::denoiser::{DenoiserError, InnerDenoiser};
use crate::gamp::{naive_weights, GampError, Schedule};
use crate::network::{Consensus, TreeNetwork};
use crate::quadrature::{gaussian_expectation_vec, AdaptiveOptions, QuadratureError};
use crate::special::{inverse_mills, mills_slope, q_function, std_normal_pdf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeError {
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Schedule(#[from] GampError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("iteration {t}, node {node}: {what} mismatch {lhs:e} vs {rhs:e}")]
    Inconsistent {
        t: usize,
        node: usize,
        what: &'static str,
        lhs: f64,
        rhs: f64,
    },
    #[error("iteration {t}, node {node}: mse rose from {before:e} to {after:e}")]
    NonMonotone {
        t: usize,
        node: usize,
        before: f64,
        after: f64,
    },
    #[error("no fixed point within {iterations} iterations (last change {last_delta:e})")]
    NoConvergence { iterations: usize, last_delta: f64 },
}

/// Prior, channel and per-node measurement ratios `delta[l] = M[l]/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeModel {
    pub prior: SignalPrior,
    pub channel: Channel,
    pub deltas: Vec<f64>,
}

impl SeModel {
    pub fn new(prior: SignalPrior, channel: Channel, deltas: Vec<f64>) -> Result<Self, SeError> {
        if deltas.is_empty() {
            return Err(SeError::InvalidModel("no nodes".into()));
        }
        if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(SeError::InvalidModel(format!("delta {d} is not positive")));
        }
        Ok(Self {
            prior,
            channel,
            deltas,
        })
    }

    pub fn homogeneous(prior: SignalPrior, channel: Channel, delta: f64, node_count: usize) -> Result<Self, SeError> {
        Self::new(prior, channel, vec![delta; node_count])
    }

    pub fn node_count(&self) -> usize {
        self.deltas.len()
    }
}

/// Quadrature settings and the tolerance of the consistency checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    pub quadrature: AdaptiveOptions,
    pub consistency_tol: f64,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self {
            quadrature: AdaptiveOptions::default(),
            consistency_tol: 1e-8,
        }
    }
}

/// Second moments of `(Z, Z_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZCovariance {
    pub ez2: f64,
    pub ezzt: f64,
    pub ezt2: f64,
}

impl ZCovariance {
    /// `E[Z^2] = E[X^2]/(L delta)` and `Z_0 = 0`.
    pub fn initial(node_count: usize, delta: f64) -> Self {
        Self {
            ez2: 1.0 / (node_count as f64 * delta),
            ezzt: 0.0,
            ezt2: 0.0,
        }
    }

    /// `Z = c Z_t + B` with `B ~ N(0, residual)` independent of `Z_t`.
    pub fn regression(&self) -> (f64, f64) {
        if self.ezt2 > 0.0 {
            let c = self.ezzt / self.ezt2;
            (c, (self.ez2 - self.ezzt * c).max(0.0))
        } else {
            (0.0, self.ez2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterMoments {
    /// `E[f_out^2]`.
    pub m2: f64,
    /// `E[d f_out / d theta]`.
    pub xi_out: f64,
    /// `-E[d f_out / d z]`.
    pub zeta: f64,
}

/// Conditional outer moments given `Z_t = theta`: `(E[f^2], E[f'], E[S f])`.
fn outer_conditional(theta: f64, c: f64, tau_s: f64, tau_d: f64, kind: ChannelKind) -> [f64; 3] {
    let d = theta * (1.0 - c);
    match kind {
        ChannelKind::Linear => [(d * d + tau_s) / (tau_d * tau_d), 1.0 / tau_d, -tau_s / tau_d],
        ChannelKind::Clip { threshold } => {
            let s = tau_s.sqrt();
            let sd = tau_d.sqrt();
            let lo = (-threshold - c * theta) / s;
            let hi = (threshold - c * theta) / s;
            let (phi_lo, phi_hi) = (std_normal_pdf(lo), std_normal_pdf(hi));
            let p_high = q_function(hi);
            let p_low = q_function(-lo);
            let p_mid = if lo >= 0.0 {
                q_function(lo) - q_function(hi)
            } else if hi <= 0.0 {
                q_function(-hi) - q_function(-lo)
            } else {
                1.0 - p_high - p_low
            };
            let es = s * (phi_lo - phi_hi);
            let es2 = tau_s * (p_mid + lo * phi_lo - hi * phi_hi);

            let beta = (threshold - theta) / sd;
            let gamma = (threshold + theta) / sd;
            let f_high = -inverse_mills(beta) / sd;
            let f_low = inverse_mills(gamma) / sd;

            let m2 = p_high * f_high * f_high
                + p_low * f_low * f_low
                + (d * d * p_mid - 2.0 * d * es + es2) / (tau_d * tau_d);
            let dprime = (p_high * mills_slope(beta) + p_low * mills_slope(gamma) + p_mid) / tau_d;
            let sf = f_high * s * phi_hi - f_low * s * phi_lo + (d * es - es2) / tau_d;
            [m2, dprime, sf]
        }
    }
}

/// Outer moments for denoiser variance `v` and the joint law `cov` of `(Z, Z_t)`.
pub fn outer_moments(
    v: f64,
    cov: ZCovariance,
    channel: &Channel,
    opts: &AdaptiveOptions,
) -> Result<OuterMoments, SeError> {
    let sigma2 = channel.noise_variance;
    let tau_d = v + sigma2;
    if !(tau_d > 0.0 && tau_d.is_finite()) {
        return Err(DenoiserError::NonPositiveVariance(tau_d).into());
    }
    let (c, resid) = cov.regression();
    let tau_s = resid + sigma2;
    let breaks: Vec<f64> = match channel.kind {
        ChannelKind::Clip { threshold } if c.abs() > 1e-12 => vec![-threshold / c, threshold / c],
        _ => Vec::new(),
    };
    let [m2, xi_out, sf] = gaussian_expectation_vec(cov.ezt2, &breaks, *opts, |theta| {
        outer_conditional(theta, c, tau_s, tau_d, channel.kind)
    })?;
    Ok(OuterMoments {
        m2,
        xi_out,
        zeta: -sf / tau_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerMoments {
    pub mse: f64,
    pub xi_in: f64,
    /// `E[X f_in]`.
    pub exf: f64,
    /// `E[f_in^2]`.
    pub ef2: f64,
}

/// Moments of `f_in(alpha X + N(0, sigma); a, s2)`.
///
/// The point mass and the Gaussian component of the prior are integrated
/// separately; within the Gaussian component `X | U` is Gaussian, so only
/// `U` needs quadrature.
pub fn inner_moments(
    alpha: f64,
    sigma: f64,
    a: f64,
    s2: f64,
    prior: &SignalPrior,
    opts: &AdaptiveOptions,
) -> Result<InnerMoments, SeError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DenoiserError::NonPositiveVariance(sigma).into());
    }
    let params = InnerDenoiser::new(*prior).with_params(a, s2)?;
    let rho = prior.density();
    let vx = prior.active_variance();

    // Where the posterior activity crosses one half.
    let switch = {
        let v1 = a * a * vx + s2;
        let k = 1.0 / s2 - 1.0 / v1;
        let c = if rho < 1.0 {
            (rho / (1.0 - rho)).ln() - 0.5 * (v1 / s2).ln()
        } else {
            f64::NEG_INFINITY
        };
        if k > 0.0 && c < 0.0 && c.is_finite() {
            let u = (-2.0 * c / k).sqrt();
            vec![-u, u]
        } else {
            Vec::new()
        }
    };

    let mut out = InnerMoments {
        mse: 0.0,
        xi_in: 0.0,
        exf: 0.0,
        ef2: 0.0,
    };
    if rho < 1.0 {
        let [f2, df] = gaussian_expectation_vec(sigma, &switch, *opts, |u| {
            let (f, df) = params.eval(u);
            [f * f, df]
        })?;
        out.mse += (1.0 - rho) * f2;
        out.ef2 += (1.0 - rho) * f2;
        out.xi_in += (1.0 - rho) * df;
    }
    let v1 = alpha * alpha * vx + sigma;
    let k = alpha * vx / v1;
    let post_var = vx - alpha * vx * k;
    let [f2, df, xf, err] = gaussian_expectation_vec(v1, &switch, *opts, |u| {
        let (f, df) = params.eval(u);
        let xm = k * u;
        [f * f, df, xm * f, (f - xm) * (f - xm)]
    })?;
    out.mse += rho * (err + post_var);
    out.ef2 += rho * f2;
    out.xi_in += rho * df;
    out.exf += rho * xf;
    Ok(out)
}

/// Per-node state-evolution variables after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeNodeState {
    /// Denoiser variance `v_bar_t` used by the outer step of this iteration.
    pub v_bar: f64,
    pub cov: ZCovariance,
    pub m2: f64,
    pub xi_out: f64,
    pub zeta: f64,
    /// Noise variance `Sigma_bar` of the inner channel.
    pub sigma_bar: f64,
    /// Consensus count `eta`.
    pub eta: f64,
    /// Signal amplitude `eta_bar` (the channel gain is `eta_bar / L`).
    pub eta_bar: f64,
    /// Noise variance assumed by the inner denoiser.
    pub sigma2_bar: f64,
    pub xi_in: f64,
    /// `mse_{t+1}`.
    pub mse: f64,
}

/// State-evolution output; row `t` holds the state after iteration `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeTrajectory {
    pub states: Vec<Vec<SeNodeState>>,
    pub cp_sweeps: Vec<usize>,
}

impl SeTrajectory {
    pub fn iterations(&self) -> usize {
        self.states.len()
    }

    pub fn mse(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|row| row.iter().map(|s| s.mse).collect()).collect()
    }

    pub fn max_mse(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|row| row.iter().map(|s| s.mse).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Consistency of the Bayes-optimal recursion at every iteration:
    /// `sigma2_bar = Sigma_bar`, `eta_bar = eta`, `xi_out = E[M^2]` and
    /// `v_bar` equal to the true outer error variance.
    pub fn check_consistency(&self, tol: f64) -> Result<(), SeError> {
        let close = |x: f64, y: f64| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300);
        for (t, row) in self.states.iter().enumerate() {
            for (l, s) in row.iter().enumerate() {
                let (_, resid) = s.cov.regression();
                let checks = [
                    ("sigma2/Sigma", s.sigma2_bar, s.sigma_bar),
                    ("eta_bar/eta", s.eta_bar, s.eta),
                    ("xi_out/E[M^2]", s.xi_out, s.m2),
                    ("v_bar/v_true", s.v_bar, resid),
                ];
                for (what, lhs, rhs) in checks {
                    if !close(lhs, rhs) {
                        return Err(SeError::Inconsistent { t, node: l, what, lhs, rhs });
                    }
                }
                if s.cov.ezzt * s.cov.ezzt > s.cov.ez2 * s.cov.ezt2 * (1.0 + tol) {
                    return Err(SeError::Inconsistent {
                        t,
                        node: l,
                        what: "Gram",
                        lhs: s.cov.ezzt * s.cov.ezzt,
                        rhs: s.cov.ez2 * s.cov.ezt2,
                    });
                }
            }
        }
        Ok(())
    }

    /// Per-node MSE never increases by more than `tol`.
    pub fn check_monotone(&self, tol: f64) -> Result<(), SeError> {
        for t in 1..self.states.len() {
            for (l, (prev, cur)) in self.states[t - 1].iter().zip(&self.states[t]).enumerate() {
                if cur.mse > prev.mse + tol {
                    return Err(SeError::NonMonotone {
                        t,
                        node: l,
                        before: prev.mse,
                        after: cur.mse,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Converged value of a per-node MSE sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    /// Largest per-node MSE at the detected fixed point.
    pub mse: f64,
    pub iteration: usize,
}

/// First `t` with `|mse[t+stride] - mse[t]| < tol * max(mse[t], 1e-12)` at
/// every node.
pub fn fixed_point(rows: &[Vec<f64>], stride: usize, tol: f64) -> Result<FixedPoint, SeError> {
    let stride = stride.max(1);
    let mut last_delta = f64::NAN;
    for t in 0..rows.len().saturating_sub(stride) {
        let mut settled = true;
        last_delta = 0.0;
        for (a, b) in rows[t].iter().zip(&rows[t + stride]) {
            let delta = (b - a).abs();
            last_delta = f64::max(last_delta, delta);
            if delta >= tol * a.max(1e-12) {
                settled = false;
            }
        }
        if settled {
            let mse = rows[t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return Ok(FixedPoint { mse, iteration: t });
        }
    }
    Err(SeError::NoConvergence {
        iterations: rows.len(),
        last_delta,
    })
}

/// Consensus on the SE payload `(1/(L E[M^2]), 1, 1/xi_out, zeta/xi_out)`.
///
/// Returns per node `(Sigma_bar, eta, sigma2_bar, eta_bar)` assembled from
/// the node's own outer moments and its neighbours' aggregates.
pub fn se_consensus(
    net: &TreeNetwork,
    outer: &[OuterMoments],
    engine: &mut Consensus<[f64; 4]>,
    sweeps: usize,
) -> Vec<[f64; 4]> {
    let local: Vec<[f64; 4]> = outer.iter().map(|o| se_payload(o, net.node_count())).collect();
    engine.round(net, &local, sweeps)
}

fn se_payload(o: &OuterMoments, node_count: usize) -> [f64; 4] {
    let lf = node_count as f64;
    [1.0 / (lf * o.m2), 1.0, 1.0 / o.xi_out, o.zeta / o.xi_out]
}

fn compose(own: &OuterMoments, agg: &[f64; 4], node_count: usize) -> (f64, f64, f64, f64) {
    let lf = node_count as f64;
    let p = se_payload(own, node_count);
    (p[0] + agg[0], p[1] + agg[1], (p[2] + agg[2]) / lf, p[3] + agg[3])
}

/// Inner-channel description produced by one protocol step.
struct InnerSpec {
    sigma_bar: f64,
    eta: f64,
    eta_bar: f64,
    sigma2_bar: f64,
}

fn initial_states(model: &SeModel) -> Vec<SeNodeState> {
    let l = model.node_count();
    model
        .deltas
        .iter()
        .map(|&d| {
            let cov = ZCovariance::initial(l, d);
            SeNodeState {
                v_bar: cov.ez2,
                cov,
                m2: f64::NAN,
                xi_out: f64::NAN,
                zeta: f64::NAN,
                sigma_bar: f64::NAN,
                eta: f64::NAN,
                eta_bar: f64::NAN,
                sigma2_bar: f64::NAN,
                xi_in: f64::NAN,
                mse: 1.0,
            }
        })
        .collect()
}

/// Applies the inner step to `state` and prepares its next outer step.
fn advance(
    state: &mut SeNodeState,
    outer: OuterMoments,
    spec: InnerSpec,
    model: &SeModel,
    delta: f64,
    opts: &SeOptions,
) -> Result<(), SeError> {
    let lf = model.node_count() as f64;
    let m = inner_moments(
        spec.eta_bar / lf,
        spec.sigma_bar,
        spec.eta / lf,
        spec.sigma2_bar,
        &model.prior,
        &opts.quadrature,
    )?;
    state.m2 = outer.m2;
    state.xi_out = outer.xi_out;
    state.zeta = outer.zeta;
    state.sigma_bar = spec.sigma_bar;
    state.eta = spec.eta;
    state.eta_bar = spec.eta_bar;
    state.sigma2_bar = spec.sigma2_bar;
    state.xi_in = m.xi_in;
    state.mse = m.mse;
    state.v_bar = spec.sigma2_bar * m.xi_in / (delta * spec.eta);
    let scale = 1.0 / (lf * delta);
    state.cov = ZCovariance {
        ez2: state.cov.ez2,
        ezzt: m.exf * scale,
        ezt2: m.ef2 * scale,
    };
    Ok(())
}

fn outer_all(
    states: &[SeNodeState],
    active: &[bool],
    model: &SeModel,
    opts: &SeOptions,
    previous: &[OuterMoments],
) -> Result<Vec<OuterMoments>, SeError> {
    states
        .iter()
        .zip(active)
        .enumerate()
        .map(|(l, (s, &on))| {
            if on {
                outer_moments(s.v_bar, s.cov, &model.channel, &opts.quadrature)
            } else {
                Ok(previous[l])
            }
        })
        .collect()
}

/// State evolution of D-GAMP on `net` under `schedule`.
pub fn se_dgamp(
    net: &TreeNetwork,
    schedule: &Schedule,
    model: &SeModel,
    opts: &SeOptions,
) -> Result<SeTrajectory, SeError> {
    let nodes = model.node_count();
    if net.node_count() != nodes || schedule.node_count() != nodes {
        return Err(SeError::InvalidModel(format!(
            "model has {nodes} nodes, network {}, schedule {}",
            net.node_count(),
            schedule.node_count()
        )));
    }
    let mut states = initial_states(model);
    let mut engine = Consensus::new(net, [0.0; 4]);
    let mut agg = vec![[0.0; 4]; nodes];
    let mut outer = vec![
        OuterMoments {
            m2: f64::NAN,
            xi_out: f64::NAN,
            zeta: f64::NAN
        };
        nodes
    ];
    let mut traj = SeTrajectory::default();
    for t in 0..schedule.iterations() {
        let active: Vec<bool> = (0..nodes).map(|l| schedule.is_active(l, t)).collect();
        outer = outer_all(&states, &active, model, opts, &outer)?;
        if schedule.is_consensus(t) {
            agg = se_consensus(net, &outer, &mut engine, schedule.sweeps());
        }
        for l in (0..nodes).filter(|&l| active[l]) {
            let (sigma_bar, eta, sigma2_bar, eta_bar) = compose(&outer[l], &agg[l], nodes);
            let spec = InnerSpec {
                sigma_bar,
                eta,
                eta_bar,
                sigma2_bar,
            };
            advance(&mut states[l], outer[l], spec, model, model.deltas[l], opts)?;
        }
        traj.states.push(states.clone());
        traj.cp_sweeps.push(schedule.sweeps_after(t));
    }
    Ok(traj)
}

/// State evolution of centralized GAMP with per-node ratios `delta[l]`.
///
/// The fused message has amplitude `sum(zeta)/(L xi)` and noise variance
/// `sum(E[M^2])/(L xi^2)`, where `xi` is the mean of the nodes' `xi_out`.
pub fn se_centralized(model: &SeModel, iterations: usize, opts: &SeOptions) -> Result<SeTrajectory, SeError> {
    let nodes = model.node_count();
    let lf = nodes as f64;
    let mut states = initial_states(model);
    let mut traj = SeTrajectory::default();
    let active = vec![true; nodes];
    let mut outer = Vec::new();
    for _ in 0..iterations {
        outer = outer_all(&states, &active, model, opts, &outer)?;
        let xi = outer.iter().map(|o| o.xi_out).sum::<f64>() / lf;
        let m2: f64 = outer.iter().map(|o| o.m2).sum();
        let zeta: f64 = outer.iter().map(|o| o.zeta).sum();
        for l in 0..nodes {
            let spec = InnerSpec {
                sigma_bar: m2 / (lf * xi * xi),
                eta: lf,
                eta_bar: zeta / xi,
                sigma2_bar: 1.0 / xi,
            };
            advance(&mut states[l], outer[l], spec, model, model.deltas[l], opts)?;
        }
        traj.states.push(states.clone());
        traj.cp_sweeps.push(0);
    }
    Ok(traj)
}

/// State evolution of one-step neighbour averaging with weight `gamma`.
pub fn se_naive(
    net: &TreeNetwork,
    gamma: f64,
    model: &SeModel,
    iterations: usize,
    opts: &SeOptions,
) -> Result<SeTrajectory, SeError> {
    let nodes = model.node_count();
    if net.node_count() != nodes {
        return Err(SeError::InvalidModel("network and model sizes differ".into()));
    }
    let lf = nodes as f64;
    let weights = naive_weights(net, gamma)?;
    let mut states = initial_states(model);
    let mut traj = SeTrajectory::default();
    let active = vec![true; nodes];
    let mut outer = Vec::new();
    for t in 0..iterations {
        outer = outer_all(&states, &active, model, opts, &outer)?;
        for (l, row) in weights.iter().enumerate() {
            let mut spec = InnerSpec {
                sigma_bar: 0.0,
                eta: 0.0,
                eta_bar: 0.0,
                sigma2_bar: 0.0,
            };
            for &(k, w) in row {
                let o = &outer[k];
                spec.sigma_bar += w * w * o.m2 / (lf * o.xi_out * o.xi_out);
                spec.eta += w;
                spec.eta_bar += w * o.zeta / o.xi_out;
                spec.sigma2_bar += w * w / (lf * o.xi_out);
            }
            advance(&mut states[l], outer[l], spec, model, model.deltas[l], opts)?;
        }
        traj.states.push(states.clone());
        traj.cp_sweeps.push(t + 1);
    }
    Ok(traj)
}
