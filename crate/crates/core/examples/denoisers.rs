//! Bayes-optimal inner and outer denoisers for a Bernoulli-Gaussian signal
//! observed through linear and clipping channels.

use dgamp::channel::{Channel, ChannelKind, SignalPrior};
use dgamp::denoiser::{f_out_clip, f_out_linear, f_out_prime, InnerDenoiser};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prior = SignalPrior::bernoulli_gaussian(0.1)?;
    let inner = InnerDenoiser::new(prior).with_params(1.0, 0.05)?;
    println!("inner denoiser, gain 1, noise 0.05");
    println!("{:>6} {:>10} {:>10} {:>10}", "u", "f_in", "f_in'", "P(active)");
    for u in [-2.0, -0.5, 0.0, 0.2, 0.5, 1.0, 3.0] {
        let (f, df) = inner.eval(u);
        println!("{u:>6.2} {f:>10.5} {df:>10.5} {:>10.5}", inner.activity(u));
    }

    let sigma2 = Channel::noise_variance_from_snr_db(30.0);
    let kind = ChannelKind::Clip { threshold: 2.0 };
    println!("\nouter denoisers, v = 0.5, sigma2 = {sigma2:.0e}, clip at 2");
    println!("{:>6} {:>6} {:>10} {:>10} {:>10}", "theta", "y", "linear", "clip", "clip'");
    for (theta, y) in [(0.0, 1.0), (1.5, 2.0), (3.0, 2.0), (-1.0, -2.0), (0.5, -0.3)] {
        println!(
            "{theta:>6.2} {y:>6.2} {:>10.4} {:>10.4} {:>10.4}",
            f_out_linear(theta, y, 0.5, sigma2)?,
            f_out_clip(theta, y, 0.5, sigma2, 2.0)?,
            f_out_prime(theta, y, 0.5, sigma2, kind)?,
        );
    }
    Ok(())
}
