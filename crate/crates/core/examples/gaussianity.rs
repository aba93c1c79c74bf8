//! Empirical check that the inner-module input behaves like the signal
//! observed in Gaussian noise: `x_tilde - (eta/L) x` has near-zero excess
//! kurtosis and the variance predicted by state evolution.

use dgamp::channel::{Channel, MeasurementInstance, SignalPrior};
use dgamp::gamp::{run_dgamp_observed, Denoisers, RunOptions, Schedule};
use dgamp::network::TreeNetwork;
use dgamp::se::{se_dgamp, SeModel, SeOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, m, nodes) = (3200, 240, 4);
    let prior = SignalPrior::bernoulli_gaussian(0.1)?;
    let channel = Channel::linear(Channel::noise_variance_from_snr_db(30.0))?;
    let net = TreeNetwork::chain(nodes)?;
    let schedule = Schedule::homogeneous(nodes, 1, 1, 6)?;
    let model = SeModel::homogeneous(prior, channel, m as f64 / n as f64, nodes)?;
    let se = se_dgamp(&net, &schedule, &model, &SeOptions::default())?;

    let instance = MeasurementInstance::sample(n, &vec![m; nodes], prior, channel, 1)?;
    let den = Denoisers::matched(&instance);
    let lf = nodes as f64;
    let x = instance.x.clone();
    println!("{:>3} {:>4} {:>10} {:>10} {:>9}", "t", "node", "var", "se var", "kurtosis");
    run_dgamp_observed(&instance, &net, &schedule, &den, RunOptions::default(), |obs| {
        if ![0, 2, 4].contains(&obs.t) {
            return;
        }
        let err: Vec<f64> = obs
            .x_tilde
            .iter()
            .zip(&x)
            .map(|(xt, xi)| xt - obs.eta / lf * xi)
            .collect();
        let mean = err.iter().sum::<f64>() / n as f64;
        let m2 = err.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
        let m4 = err.iter().map(|e| (e - mean).powi(4)).sum::<f64>() / n as f64;
        let sigma_bar = se.states[obs.t][obs.node].sigma_bar;
        println!(
            "{:>3} {:>4} {:>10.5} {:>10.5} {:>9.3}",
            obs.t + 1,
            obs.node + 1,
            m2,
            sigma_bar,
            m4 / (m2 * m2) - 3.0
        );
    })?;
    Ok(())
}
