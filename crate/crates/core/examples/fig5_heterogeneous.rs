//! Heterogeneous measurement counts on the 8-node tree: with unequal `M[l]`
//! D-GAMP settles above centralized GAMP, with equal counts it does not.
//!
//! `cargo run --release --example fig5_heterogeneous -- [trials]`

use dgamp::harness::{self, preset, to_db, Runner};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let set = preset("fig5-desk", false)?.with_trials(trials);
    let results = harness::run_set(&set)?;
    for case in ["homogeneous", "heterogeneous"] {
        let get = |runner: Runner| {
            results
                .iter()
                .find(|r| r.summary.runner == runner && r.summary.label.ends_with(case))
                .and_then(|r| r.final_mean())
                .unwrap_or(f64::NAN)
        };
        println!(
            "{case:<14} dgamp {:>8.3} dB  centralized {:>8.3} dB  (SE {:>8.3} / {:>8.3})",
            to_db(get(Runner::Dgamp)),
            to_db(get(Runner::Centralized)),
            to_db(get(Runner::Se)),
            to_db(get(Runner::SeCentralized)),
        );
    }
    Ok(())
}
