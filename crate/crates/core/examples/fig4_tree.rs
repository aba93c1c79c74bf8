//! Clipping channel on the 8-node tree: D-GAMP against centralized GAMP in
//! terms of inner iterations, with the damping factors used for each size.
//!
//! `cargo run --release --example fig4_tree -- [trials]`

use dgamp::harness::{self, first_within_db, preset, to_db};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let set = preset("fig4-desk", false)?.with_trials(trials);
    for (config, result) in set.experiments.iter().zip(harness::run_set(&set)?) {
        let s = &result.summary;
        let final_mse = result.final_mean().unwrap_or(f64::NAN);
        let settle = first_within_db(&s.points, final_mse, 1.0).map(|p| p.t);
        println!(
            "{:<22} chi={:<5} final {:>8.3} dB, within 1 dB of final at t={:?}, diverged {}",
            s.label,
            config.damping,
            to_db(final_mse),
            settle,
            s.diverged
        );
    }
    Ok(())
}
