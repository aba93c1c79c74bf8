//! State evolution of D-GAMP on a 4-node chain for several consensus
//! schedules, next to centralized GAMP.

use dgamp::channel::{Channel, SignalPrior};
use dgamp::gamp::Schedule;
use dgamp::harness::to_db;
use dgamp::network::TreeNetwork;
use dgamp::se::{fixed_point, se_centralized, se_dgamp, SeModel, SeOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prior = SignalPrior::bernoulli_gaussian(0.1)?;
    let channel = Channel::linear(Channel::noise_variance_from_snr_db(30.0))?;
    let model = SeModel::homogeneous(prior, channel, 0.075, 4)?;
    let net = TreeNetwork::chain(4)?;
    let opts = SeOptions::default();

    let central = se_centralized(&model, 80, &opts)?;
    let fp = fixed_point(&central.mse(), 1, 1e-9)?;
    println!("centralized fixed point {:.3} dB at t = {}", to_db(fp.mse), fp.iteration + 1);

    for (name, t, j) in [("T=1 J=1", 1, 1), ("T=2 J=1", 2, 1), ("T=1 J=2", 1, 2)] {
        let schedule = Schedule::homogeneous(4, t, j, 60 * t / j)?;
        let traj = se_dgamp(&net, &schedule, &model, &opts)?;
        traj.check_consistency(1e-8)?;
        let max = traj.max_mse();
        let reached = max
            .iter()
            .zip(&traj.cp_sweeps)
            .find(|(m, _)| to_db(**m) <= to_db(fp.mse) + 0.5)
            .map(|(_, s)| *s);
        println!(
            "{name}: final {:.3} dB after {} sweeps, within 0.5 dB after {:?} sweeps",
            to_db(*max.last().unwrap()),
            traj.cp_sweeps.last().unwrap(),
            reached
        );
    }
    Ok(())
}
