//! Loads a tree from a JSON topology file and runs D-GAMP on one instance.
//!
//! `cargo run --example custom_topology -- [topology.json]`; without an
//! argument a star with four leaves is used.

use dgamp::channel::{Channel, MeasurementInstance, SignalPrior};
use dgamp::gamp::{run_centralized, run_dgamp, Denoisers, RunOptions, Schedule};
use dgamp::harness::to_db;
use dgamp::network::TreeNetwork;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = match std::env::args().nth(1) {
        Some(path) => TreeNetwork::load(path)?,
        None => TreeNetwork::new(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])?,
    };
    println!("{}", serde_json::to_string(&net.to_file())?);
    let nodes = net.node_count();
    let prior = SignalPrior::bernoulli_gaussian(0.1)?;
    let channel = Channel::clip(2.0, Channel::noise_variance_from_snr_db(30.0))?;
    let instance = MeasurementInstance::sample(1000, &vec![600 / nodes; nodes], prior, channel, 11)?;
    let den = Denoisers::matched(&instance);

    let schedule = Schedule::homogeneous(nodes, 1, 1, 40)?;
    let d = run_dgamp(&instance, &net, &schedule, &den, RunOptions::default())?;
    let c = run_centralized(&instance, 40, &den, RunOptions::default())?;
    for t in (0..40).step_by(5) {
        println!(
            "t={:>2}  dgamp {:>8.3} dB  centralized {:>8.3} dB",
            t + 1,
            to_db(d.max_mse()[t]),
            to_db(c.max_mse()[t])
        );
    }
    Ok(())
}
