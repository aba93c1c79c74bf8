//! Random problem instances: Bernoulli-Gaussian signals, i.i.d. Gaussian
//! sensing matrices, Gaussian noise and the element-wise measurement
//! functions.
//!
//! All draws come from ChaCha streams keyed by `(seed, stream)`, so each
//! node's matrix and noise are independent of how many other nodes exist.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("signal density must lie in (0, 1], got {0}")]
    InvalidDensity(f64),
    #[error("noise variance must be positive and finite, got {0}")]
    InvalidNoiseVariance(f64),
    #[error("clip threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("dimensions must be at least 1")]
    EmptyDimension,
}

/// Bernoulli-Gaussian prior with unit second moment: zero with probability
/// `1 - rho`, otherwise `N(0, 1/rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPrior {
    rho: f64,
}

impl SignalPrior {
    pub fn bernoulli_gaussian(rho: f64) -> Result<Self, ChannelError> {
        if rho > 0.0 && rho <= 1.0 {
            Ok(Self { rho })
        } else {
            Err(ChannelError::InvalidDensity(rho))
        }
    }

    pub fn density(&self) -> f64 {
        self.rho
    }

    /// Variance of the active component, `1/rho`.
    pub fn active_variance(&self) -> f64 {
        1.0 / self.rho
    }

    /// `E[X^2] = rho * (1/rho) = 1`.
    pub fn second_moment(&self) -> f64 {
        self.rho * self.active_variance()
    }
}

/// Measurement function `g(z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Linear,
    Clip { threshold: f64 },
}

/// A measurement function together with its additive noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub kind: ChannelKind,
    pub noise_variance: f64,
}

impl Channel {
    pub fn new(kind: ChannelKind, noise_variance: f64) -> Result<Self, ChannelError> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(ChannelError::InvalidNoiseVariance(noise_variance));
        }
        if let ChannelKind::Clip { threshold } = kind {
            if !(threshold > 0.0) {
                return Err(ChannelError::InvalidThreshold(threshold));
            }
        }
        Ok(Self {
            kind,
            noise_variance,
        })
    }

    pub fn linear(noise_variance: f64) -> Result<Self, ChannelError> {
        Self::new(ChannelKind::Linear, noise_variance)
    }

    pub fn clip(threshold: f64, noise_variance: f64) -> Result<Self, ChannelError> {
        Self::new(ChannelKind::Clip { threshold }, noise_variance)
    }

    /// SNR convention `1/sigma^2` in dB.
    pub fn noise_variance_from_snr_db(snr_db: f64) -> f64 {
        10f64.powf(-snr_db / 10.0)
    }

    /// Scalar measurement `g(z, w)`.
    pub fn measure(&self, z: f64, w: f64) -> f64 {
        let s = z + w;
        match self.kind {
            ChannelKind::Linear => s,
            ChannelKind::Clip { threshold } => s.clamp(-threshold, threshold),
        }
    }

    /// Element-wise measurement of a whole block.
    pub fn apply(&self, z: &[f64], w: &[f64]) -> Result<Vec<f64>, ChannelError> {
        if z.len() != w.len() {
            return Err(ChannelError::DimensionMismatch(z.len(), w.len()));
        }
        Ok(z.iter().zip(w).map(|(&z, &w)| self.measure(z, w)).collect())
    }
}

/// Random stream ids inside one instance seed.
const STREAM_SIGNAL: u64 = 0;
const STREAM_MATRIX_BASE: u64 = 1;
const STREAM_NOISE_BASE: u64 = 1 << 32;

/// Deterministic generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 step; derives independent sub-seeds from a master seed.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_signal(n: usize, prior: &SignalPrior, rng: &mut impl Rng) -> Vec<f64> {
    let sd = prior.active_variance().sqrt();
    (0..n)
        .map(|_| {
            // Draw both variates so the stream position does not depend on rho.
            let active = rng.gen::<f64>() < prior.density();
            let g: f64 = rng.sample(StandardNormal);
            if active {
                sd * g
            } else {
                0.0
            }
        })
        .collect()
}

/// `m x n` matrix with i.i.d. `N(0, 1/(L m))` entries.
pub fn sample_matrix(m: usize, n: usize, node_count: usize, rng: &mut impl Rng) -> Array2<f64> {
    let sd = (1.0 / (node_count as f64 * m as f64)).sqrt();
    Array2::from_shape_fn((m, n), |_| sd * rng.sample::<f64, _>(StandardNormal))
}

pub fn sample_noise(m: usize, variance: f64, rng: &mut impl Rng) -> Vec<f64> {
    let sd = variance.sqrt();
    (0..m).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Local data held by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMeasurements {
    pub matrix: Array2<f64>,
    pub noise: Array1<f64>,
    pub z: Array1<f64>,
    pub y: Array1<f64>,
}

impl NodeMeasurements {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
}

/// One realization of the signal and every node's measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementInstance {
    pub prior: SignalPrior,
    pub channel: Channel,
    pub x: Array1<f64>,
    pub nodes: Vec<NodeMeasurements>,
}

impl MeasurementInstance {
    /// Draws `x`, then for every node `A[l]`, `w[l]`, `z[l] = A[l] x` and
    /// `y[l] = g(z[l], w[l])`.
    pub fn sample(
        n: usize,
        rows: &[usize],
        prior: SignalPrior,
        channel: Channel,
        seed: u64,
    ) -> Result<Self, ChannelError> {
        if n == 0 || rows.is_empty() || rows.contains(&0) {
            return Err(ChannelError::EmptyDimension);
        }
        let node_count = rows.len();
        let x = Array1::from(sample_signal(n, &prior, &mut stream_rng(seed, STREAM_SIGNAL)));
        let nodes = rows
            .iter()
            .enumerate()
            .map(|(l, &m)| {
                let matrix = sample_matrix(
                    m,
                    n,
                    node_count,
                    &mut stream_rng(seed, STREAM_MATRIX_BASE + l as u64),
                );
                let noise = Array1::from(sample_noise(
                    m,
                    channel.noise_variance,
                    &mut stream_rng(seed, STREAM_NOISE_BASE + l as u64),
                ));
                let z = matrix.dot(&x);
                let y = Array1::from(channel.apply(z.as_slice().unwrap(), noise.as_slice().unwrap())?);
                Ok(NodeMeasurements { matrix, noise, z, y })
            })
            .collect::<Result<Vec<_>, ChannelError>>()?;
        Ok(Self {
            prior,
            channel,
            x,
            nodes,
        })
    }

    pub fn signal_dim(&self) -> usize {
        self.x.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}
