//! One-step neighbour averaging instead of consensus propagation: its state
//! evolution settles away from the centralized fixed point.

use dgamp::channel::{Channel, SignalPrior};
use dgamp::harness::to_db;
use dgamp::network::TreeNetwork;
use dgamp::se::{fixed_point, se_centralized, se_naive, SeModel, SeOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prior = SignalPrior::bernoulli_gaussian(0.1)?;
    let channel = Channel::linear(Channel::noise_variance_from_snr_db(30.0))?;
    let model = SeModel::homogeneous(prior, channel, 0.075, 4)?;
    let net = TreeNetwork::chain(4)?;
    let opts = SeOptions::default();

    let central = fixed_point(&se_centralized(&model, 200, &opts)?.mse(), 1, 1e-10)?;
    println!("centralized: {:.3} dB", to_db(central.mse));
    for gamma in [0.1, 1.0 / 3.0] {
        let traj = se_naive(&net, gamma, &model, 400, &opts)?;
        let fp = fixed_point(&traj.mse(), 1, 1e-10)?;
        println!(
            "naive gamma={gamma:.3}: {:.3} dB ({:+.1}% vs centralized)",
            to_db(fp.mse),
            100.0 * (fp.mse / central.mse - 1.0)
        );
    }
    Ok(())
}
