//! Decentralized generalized approximate message passing over tree networks.

pub mod channel;
pub mod denoiser;
pub mod gamp;
pub mod harness;
pub mod network;
pub mod quadrature;
pub mod se;
pub mod special;
