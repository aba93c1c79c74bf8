//! Clipping channel on a 4-node chain, including a heterogeneous schedule in
//! which odd nodes run two local iterations per round.
//!
//! `cargo run --release --example fig3_clipping -- [trials]`

use dgamp::harness::{self, preset, to_db, Runner};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let set = preset("fig3-desk", false)?.with_trials(trials);
    let results = harness::run_set(&set)?;
    let sims: Vec<_> = results.iter().filter(|r| r.summary.runner == Runner::Dgamp).collect();
    print!("{:>7}", "sweeps");
    for r in &sims {
        print!(" {:>15}", r.summary.label);
    }
    println!();
    for sweeps in (2..=20).step_by(2) {
        print!("{sweeps:>7}");
        for r in &sims {
            // Last iteration that finished within this many sweeps.
            let point = r.summary.points.iter().rfind(|p| p.cp_sweeps == sweeps);
            match point {
                Some(p) => print!(" {:>15.3}", to_db(p.mean_max_mse)),
                None => print!(" {:>15}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
