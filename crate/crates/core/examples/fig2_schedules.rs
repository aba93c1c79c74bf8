//! Linear channel on a 4-node chain: mean largest MSE against cumulative
//! consensus sweeps for three schedules, with SE predictions.
//!
//! `cargo run --release --example fig2_schedules -- [trials] [out.csv]`

use dgamp::harness::{self, first_within_db, preset, Runner};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let set = preset("fig2-desk", false)?.with_trials(trials);
    let results = harness::run_set(&set)?;
    let fixed = results
        .iter()
        .find(|r| r.summary.runner == Runner::SeCentralized)
        .and_then(|r| r.final_mean())
        .expect("centralized SE series");
    println!("centralized SE fixed point {:.3} dB", harness::to_db(fixed));
    for r in results.iter().filter(|r| r.summary.runner == Runner::Dgamp) {
        let hit = first_within_db(&r.summary.points, fixed, 0.5);
        println!(
            "{:<14} final {:>8.3} dB, within 0.5 dB of the fixed point after {:?} sweeps",
            r.summary.label,
            harness::to_db(r.final_mean().unwrap_or(f64::NAN)),
            hit.map(|p| p.cp_sweeps)
        );
    }
    if let Some(path) = args.next() {
        harness::write_csv_file(&path, &results)?;
        println!("wrote {path}");
    }
    Ok(())
}
