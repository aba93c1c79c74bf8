//! D-GAMP node state machine and the reference runners.
//!
//! Each node alternates an outer step on its own measurements and an inner
//! denoising step on the signal. Every `T` iterations the nodes exchange their
//! post-Onsager messages through consensus propagation; in between, each node
//! reuses the last aggregates and refines locally until its own budget
//! `T[l]` is spent, after which its messages stay fixed.

use ndarray::Array1;
use thiserror::Error;

use crate::channel::{MeasurementInstance, NodeMeasurements};
use crate::denoiser::{DenoiserError, InnerDenoiser, OuterDenoiser};
use crate::network::{Consensus, TreeNetwork};

/// `|xi_out|` below this is treated as a breakdown of the outer step.
pub const XI_OUT_FLOOR: f64 = 1e-14;

/// Default per-node MSE above which a run is declared diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Failure of a single node step.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("xi_out collapsed to {0:e}")]
    ZeroXiOut(f64),
    #[error("inner noise variance is not positive: {0:e}")]
    NonPositiveSigma2(f64),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GampError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("damping factor must lie in (0, 1], got {0}")]
    InvalidDamping(f64),
    #[error("mixing weight must be non-negative and finite, got {0}")]
    InvalidGamma(f64),
    #[error("instance has {instance} nodes but the network has {network}")]
    NodeCountMismatch { instance: usize, network: usize },
    #[error("iteration {t}, node {node}: {source}")]
    Step {
        t: usize,
        node: usize,
        #[source]
        source: StepError,
    },
    #[error("iteration {t}, node {node}: mse {mse:e} exceeds the divergence threshold")]
    Diverged { t: usize, node: usize, mse: f64 },
}

impl GampError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            GampError::Diverged { .. }
                | GampError::Step {
                    source: StepError::ZeroXiOut(_) | StepError::NonPositiveSigma2(_),
                    ..
                }
        )
    }
}

/// Round length, per-node iteration budgets and consensus sweeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    periods: Vec<usize>,
    round: usize,
    sweeps: usize,
    iterations: usize,
}

impl Schedule {
    pub fn homogeneous(
        node_count: usize,
        period: usize,
        sweeps: usize,
        iterations: usize,
    ) -> Result<Self, GampError> {
        Self::heterogeneous(vec![period; node_count], sweeps, iterations)
    }

    pub fn heterogeneous(periods: Vec<usize>, sweeps: usize, iterations: usize) -> Result<Self, GampError> {
        if periods.is_empty() {
            return Err(GampError::InvalidSchedule("no nodes".into()));
        }
        if let Some(l) = periods.iter().position(|&p| p == 0) {
            return Err(GampError::InvalidSchedule(format!("node {l} has period 0")));
        }
        if sweeps == 0 {
            return Err(GampError::InvalidSchedule("sweeps must be at least 1".into()));
        }
        let round = *periods.iter().max().unwrap();
        Ok(Self {
            periods,
            round,
            sweeps,
            iterations,
        })
    }

    pub fn node_count(&self) -> usize {
        self.periods.len()
    }

    /// `T = max_l T[l]`.
    pub fn round_len(&self) -> usize {
        self.round
    }

    pub fn period(&self, node: usize) -> usize {
        self.periods[node]
    }

    pub fn periods(&self) -> &[usize] {
        &self.periods
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_consensus(&self, t: usize) -> bool {
        t.is_multiple_of(self.round)
    }

    /// Whether node `l` updates its messages in iteration `t`.
    pub fn is_active(&self, node: usize, t: usize) -> bool {
        t % self.round < self.periods[node]
    }

    /// Cumulative consensus sweeps once iteration `t` has completed.
    pub fn sweeps_after(&self, t: usize) -> usize {
        self.sweeps * (t / self.round + 1)
    }
}

/// Messages held by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub z_tilde: Array1<f64>,
    pub v: f64,
    pub x_hat: Array1<f64>,
    pub z_hat: Array1<f64>,
    pub x_msg: Array1<f64>,
    pub xi_out: f64,
    pub xi_in: f64,
}

impl NodeState {
    /// `z_tilde = 0`, `x_hat = 0`, `v = E||x||^2 / (L M)` with unit-power entries.
    pub fn initial(signal_dim: usize, rows: usize, node_count: usize) -> Self {
        Self {
            z_tilde: Array1::zeros(rows),
            v: signal_dim as f64 / (node_count as f64 * rows as f64),
            x_hat: Array1::zeros(signal_dim),
            z_hat: Array1::zeros(rows),
            x_msg: Array1::zeros(signal_dim),
            xi_out: f64::NAN,
            xi_in: f64::NAN,
        }
    }

    pub fn mse(&self, x: &Array1<f64>) -> f64 {
        mean_squared_error(&self.x_hat, x)
    }
}

pub fn mean_squared_error(estimate: &Array1<f64>, truth: &Array1<f64>) -> f64 {
    estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64
}

/// Matched inner and outer denoisers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Denoisers {
    pub inner: InnerDenoiser,
    pub outer: OuterDenoiser,
}

impl Denoisers {
    pub fn matched(instance: &MeasurementInstance) -> Self {
        Self {
            inner: InnerDenoiser::new(instance.prior),
            outer: OuterDenoiser::new(instance.channel),
        }
    }
}

/// Outer module: `z_hat`, `xi_out` and the post-Onsager message `x_msg`.
pub fn outer_step(
    state: &mut NodeState,
    data: &NodeMeasurements,
    outer: &OuterDenoiser,
    node_count: usize,
) -> Result<(), StepError> {
    let params = outer.with_variance(state.v)?;
    let mut xi = 0.0;
    for ((zh, &zt), &y) in state.z_hat.iter_mut().zip(&state.z_tilde).zip(&data.y) {
        let (f, df) = params.eval(zt, y);
        *zh = f;
        xi += df;
    }
    xi /= data.rows() as f64;
    if !(xi.abs() >= XI_OUT_FLOOR) {
        return Err(StepError::ZeroXiOut(xi));
    }
    let lf = node_count as f64;
    state.x_msg.zip_mut_with(&state.x_hat, |m, &xh| *m = xh / lf);
    for (row, &zh) in data.matrix.outer_iter().zip(&state.z_hat) {
        state.x_msg.scaled_add(-zh / xi, &row);
    }
    state.xi_out = xi;
    Ok(())
}

/// Aggregates of the neighbours' messages delivered by consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusView {
    pub x_bar: Array1<f64>,
    pub eta_bar: f64,
    pub sigma2_bar: f64,
}

impl ConsensusView {
    pub fn empty(signal_dim: usize) -> Self {
        Self {
            x_bar: Array1::zeros(signal_dim),
            eta_bar: 0.0,
            sigma2_bar: 0.0,
        }
    }
}

/// Runs `sweeps` consensus sweeps on the payload `(x_msg, 1, 1/xi_out)`.
pub fn consensus_exchange(
    net: &TreeNetwork,
    states: &[NodeState],
    engine: &mut Consensus<Vec<f64>>,
    sweeps: usize,
) -> Vec<ConsensusView> {
    let n = states.first().map_or(0, |s| s.x_msg.len());
    let local: Vec<Vec<f64>> = states
        .iter()
        .map(|s| {
            let mut p = Vec::with_capacity(n + 2);
            p.extend(s.x_msg.iter().copied());
            p.push(1.0);
            p.push(1.0 / s.xi_out);
            p
        })
        .collect();
    engine
        .round(net, &local, sweeps)
        .into_iter()
        .map(|agg| ConsensusView {
            x_bar: Array1::from(agg[..n].to_vec()),
            eta_bar: agg[n],
            sigma2_bar: agg[n + 1],
        })
        .collect()
}

pub fn consensus_engine(net: &TreeNetwork, signal_dim: usize) -> Consensus<Vec<f64>> {
    Consensus::new(net, vec![0.0; signal_dim + 2])
}

/// Inputs of the inner denoiser for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerInputs {
    pub x_tilde: Array1<f64>,
    pub eta: f64,
    pub sigma2: f64,
    /// Weight of the node's own message in `x_tilde`; scales the Onsager term.
    pub own_weight: f64,
}

/// `x_tilde = x_msg + x_bar`, `eta = 1 + eta_bar`, `sigma2 = (1/xi_out + sigma2_bar)/L`.
pub fn local_inputs(state: &NodeState, view: &ConsensusView, node_count: usize) -> InnerInputs {
    InnerInputs {
        x_tilde: &state.x_msg + &view.x_bar,
        eta: 1.0 + view.eta_bar,
        sigma2: (1.0 / state.xi_out + view.sigma2_bar) / node_count as f64,
        own_weight: 1.0,
    }
}

/// Inner module with damping `chi` on `x_hat` and `v`.
pub fn inner_step(
    state: &mut NodeState,
    inputs: &InnerInputs,
    data: &NodeMeasurements,
    inner: &InnerDenoiser,
    chi: f64,
    node_count: usize,
) -> Result<(), StepError> {
    if !(inputs.sigma2 > 0.0 && inputs.sigma2.is_finite()) {
        return Err(StepError::NonPositiveSigma2(inputs.sigma2));
    }
    let lf = node_count as f64;
    let n = state.x_hat.len() as f64;
    let m = data.rows() as f64;
    let params = inner.with_params(inputs.eta / lf, inputs.sigma2)?;
    let mut xi_in = 0.0;
    for (xh, &u) in state.x_hat.iter_mut().zip(&inputs.x_tilde) {
        let (f, df) = params.eval(u);
        *xh = chi * f + (1.0 - chi) * *xh;
        xi_in += df;
    }
    xi_in /= n;
    state.v = chi * (n / m) * inputs.sigma2 * xi_in / inputs.eta + (1.0 - chi) * state.v;
    let onsager = inputs.own_weight * n * xi_in / (lf * m * state.xi_out);
    for ((zt, row), &zh) in state.z_tilde.iter_mut().zip(data.matrix.outer_iter()).zip(&state.z_hat) {
        *zt = row.dot(&state.x_hat) + onsager * zh;
    }
    state.xi_in = xi_in;
    Ok(())
}

/// Run-wide settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub damping: f64,
    pub divergence_threshold: f64,
}

impl RunOptions {
    pub fn damped(damping: f64) -> Self {
        Self {
            damping,
            ..Self::default()
        }
    }
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            damping: 1.0,
            divergence_threshold: DIVERGENCE_THRESHOLD,
        }
    }
}

/// Per-node scalars recorded each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDiagnostics {
    pub xi_out: f64,
    pub xi_in: f64,
    pub v: f64,
    pub eta: f64,
    pub sigma2: f64,
}

/// Per-iteration, per-node results. Row `t` describes `x_hat_{t+1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub mse: Vec<Vec<f64>>,
    pub cp_sweeps: Vec<usize>,
    pub diagnostics: Vec<Vec<NodeDiagnostics>>,
}

impl Trajectory {
    pub fn iterations(&self) -> usize {
        self.mse.len()
    }

    /// Largest per-node MSE for every iteration.
    pub fn max_mse(&self) -> Vec<f64> {
        self.mse
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn final_max_mse(&self) -> Option<f64> {
        self.max_mse().last().copied()
    }
}

/// Inner-module inputs seen by an observer just before denoising.
#[derive(Debug, Clone, Copy)]
pub struct InnerObservation<'a> {
    pub t: usize,
    pub node: usize,
    pub x_tilde: &'a Array1<f64>,
    pub eta: f64,
    pub sigma2: f64,
}

enum Protocol<'a> {
    Consensus {
        net: &'a TreeNetwork,
        schedule: &'a Schedule,
    },
    Centralized,
    ExactSum,
    Naive {
        weights: Vec<Vec<(usize, f64)>>,
    },
}

/// Decentralized GAMP with consensus propagation over `net`.
pub fn run_dgamp(
    instance: &MeasurementInstance,
    net: &TreeNetwork,
    schedule: &Schedule,
    denoisers: &Denoisers,
    options: RunOptions,
) -> Result<Trajectory, GampError> {
    run_dgamp_observed(instance, net, schedule, denoisers, options, |_| {})
}

/// [`run_dgamp`] with a callback on every inner-module input.
pub fn run_dgamp_observed(
    instance: &MeasurementInstance,
    net: &TreeNetwork,
    schedule: &Schedule,
    denoisers: &Denoisers,
    options: RunOptions,
    observer: impl FnMut(InnerObservation<'_>),
) -> Result<Trajectory, GampError> {
    for count in [net.node_count(), schedule.node_count()] {
        if count != instance.node_count() {
            return Err(GampError::NodeCountMismatch {
                instance: instance.node_count(),
                network: count,
            });
        }
    }
    run(
        instance,
        Protocol::Consensus { net, schedule },
        schedule.iterations(),
        denoisers,
        options,
        observer,
    )
}

/// Centralized GAMP: every node denoises the fusion of all messages.
///
/// The messages are combined with weights `xi_out[l] / mean(xi_out)`, which
/// reproduces GAMP on the stacked measurements even when the nodes' `xi_out`
/// differ.
pub fn run_centralized(
    instance: &MeasurementInstance,
    iterations: usize,
    denoisers: &Denoisers,
    options: RunOptions,
) -> Result<Trajectory, GampError> {
    run(instance, Protocol::Centralized, iterations, denoisers, options, |_| {})
}

/// Exact global sums `x_tilde = sum x_msg`, `eta = L`,
/// `sigma2 = sum(1/xi_out)/L` at every iteration.
pub fn run_exact_sum(
    instance: &MeasurementInstance,
    iterations: usize,
    denoisers: &Denoisers,
    options: RunOptions,
) -> Result<Trajectory, GampError> {
    run_exact_sum_observed(instance, iterations, denoisers, options, |_| {})
}

pub fn run_exact_sum_observed(
    instance: &MeasurementInstance,
    iterations: usize,
    denoisers: &Denoisers,
    options: RunOptions,
    observer: impl FnMut(InnerObservation<'_>),
) -> Result<Trajectory, GampError> {
    run(instance, Protocol::ExactSum, iterations, denoisers, options, observer)
}

/// Mixing weights of one-step neighbour averaging: `1 - gamma |N[l]|` on the
/// diagonal and `gamma` per neighbour.
pub fn naive_weights(net: &TreeNetwork, gamma: f64) -> Result<Vec<Vec<(usize, f64)>>, GampError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(GampError::InvalidGamma(gamma));
    }
    Ok((0..net.node_count())
        .map(|l| {
            std::iter::once((l, 1.0 - gamma * net.degree(l) as f64))
                .chain(net.neighbors(l).iter().map(|&k| (k, gamma)))
                .collect()
        })
        .collect())
}

/// One-step neighbour averaging in place of consensus propagation.
///
/// `x_tilde[l] = sum_k W[l,k] x_msg[k]`; the weights sum to one, so
/// `eta = 1`, and the noise variance is `sum_k W[l,k]^2 / xi_out[k] / L`.
pub fn run_naive(
    instance: &MeasurementInstance,
    net: &TreeNetwork,
    gamma: f64,
    iterations: usize,
    denoisers: &Denoisers,
    options: RunOptions,
) -> Result<Trajectory, GampError> {
    if net.node_count() != instance.node_count() {
        return Err(GampError::NodeCountMismatch {
            instance: instance.node_count(),
            network: net.node_count(),
        });
    }
    let weights = naive_weights(net, gamma)?;
    run(instance, Protocol::Naive { weights }, iterations, denoisers, options, |_| {})
}

fn run(
    instance: &MeasurementInstance,
    protocol: Protocol<'_>,
    iterations: usize,
    denoisers: &Denoisers,
    options: RunOptions,
    mut observer: impl FnMut(InnerObservation<'_>),
) -> Result<Trajectory, GampError> {
    let chi = options.damping;
    if !(chi > 0.0 && chi <= 1.0) {
        return Err(GampError::InvalidDamping(chi));
    }
    let nodes = instance.node_count();
    let n = instance.signal_dim();
    let lf = nodes as f64;
    let mut states: Vec<NodeState> = instance
        .nodes
        .iter()
        .map(|d| NodeState::initial(n, d.rows(), nodes))
        .collect();
    let mut views = vec![ConsensusView::empty(n); nodes];
    let mut engine = match &protocol {
        Protocol::Consensus { net, .. } => Some(consensus_engine(net, n)),
        _ => None,
    };
    let mut last_inputs: Vec<Option<(f64, f64)>> = vec![None; nodes];
    let mut traj = Trajectory::default();
    let step_err = |t: usize, node: usize| move |source: StepError| GampError::Step { t, node, source };

    for t in 0..iterations {
        let active: Vec<bool> = match &protocol {
            Protocol::Consensus { schedule, .. } => (0..nodes).map(|l| schedule.is_active(l, t)).collect(),
            _ => vec![true; nodes],
        };
        for l in (0..nodes).filter(|&l| active[l]) {
            outer_step(&mut states[l], &instance.nodes[l], &denoisers.outer, nodes).map_err(step_err(t, l))?;
        }

        let inputs: Vec<Option<InnerInputs>> = match &protocol {
            Protocol::Consensus { net, schedule } => {
                if schedule.is_consensus(t) {
                    views = consensus_exchange(net, &states, engine.as_mut().unwrap(), schedule.sweeps());
                }
                (0..nodes)
                    .map(|l| active[l].then(|| local_inputs(&states[l], &views[l], nodes)))
                    .collect()
            }
            Protocol::Centralized => {
                let xi_bar = states.iter().map(|s| s.xi_out).sum::<f64>() / lf;
                let mut x_tilde = Array1::zeros(n);
                for s in &states {
                    x_tilde.scaled_add(s.xi_out / xi_bar, &s.x_msg);
                }
                states
                    .iter()
                    .map(|s| {
                        Some(InnerInputs {
                            x_tilde: x_tilde.clone(),
                            eta: lf,
                            sigma2: 1.0 / xi_bar,
                            own_weight: s.xi_out / xi_bar,
                        })
                    })
                    .collect()
            }
            Protocol::ExactSum => {
                let mut x_tilde = Array1::zeros(n);
                for s in &states {
                    x_tilde += &s.x_msg;
                }
                let sigma2 = states.iter().map(|s| 1.0 / s.xi_out).sum::<f64>() / lf;
                let shared = InnerInputs {
                    x_tilde,
                    eta: lf,
                    sigma2,
                    own_weight: 1.0,
                };
                vec![Some(shared); nodes]
            }
            Protocol::Naive { weights } => weights
                .iter()
                .map(|row| {
                    let mut x_tilde = Array1::zeros(n);
                    let mut eta = 0.0;
                    let mut var = 0.0;
                    for &(k, w) in row {
                        x_tilde.scaled_add(w, &states[k].x_msg);
                        eta += w;
                        var += w * w / states[k].xi_out;
                    }
                    // The diagonal weight comes first in each row.
                    Some(InnerInputs {
                        x_tilde,
                        eta,
                        sigma2: var / lf,
                        own_weight: row[0].1,
                    })
                })
                .collect(),
        };

        for (l, inp) in inputs.iter().enumerate() {
            let Some(inp) = inp else { continue };
            observer(InnerObservation {
                t,
                node: l,
                x_tilde: &inp.x_tilde,
                eta: inp.eta,
                sigma2: inp.sigma2,
            });
            inner_step(&mut states[l], inp, &instance.nodes[l], &denoisers.inner, chi, nodes)
                .map_err(step_err(t, l))?;
            last_inputs[l] = Some((inp.eta, inp.sigma2));
        }

        let mut row = Vec::with_capacity(nodes);
        for (l, s) in states.iter().enumerate() {
            let mse = s.mse(&instance.x);
            if !(mse <= options.divergence_threshold) {
                return Err(GampError::Diverged { t, node: l, mse });
            }
            row.push(mse);
        }
        traj.mse.push(row);
        traj.cp_sweeps.push(match &protocol {
            Protocol::Consensus { schedule, .. } => schedule.sweeps_after(t),
            Protocol::Naive { .. } => t + 1,
            _ => 0,
        });
        traj.diagnostics.push(
            states
                .iter()
                .zip(&last_inputs)
                .map(|(s, li)| {
                    let (eta, sigma2) = li.unwrap_or((f64::NAN, f64::NAN));
                    NodeDiagnostics {
                        xi_out: s.xi_out,
                        xi_in: s.xi_in,
                        v: s.v,
                        eta,
                        sigma2,
                    }
                })
                .collect(),
        );
    }
    Ok(traj)
}
