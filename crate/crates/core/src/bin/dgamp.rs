use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgamp::harness::{self, ExperimentSet, HarnessError, Tolerance};
use dgamp::network::TreeNetwork;

const EXIT_CONFIG: u8 = 1;
const EXIT_TOLERANCE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dgamp", version, about = "Decentralized GAMP simulator and state-evolution predictor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every series of an experiment set and write the CSV.
    Simulate(RunArgs),
    /// State-evolution curves only.
    Se(RunArgs),
    /// Compare simulated series with their state-evolution predictions.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Accepted gap in dB.
        #[arg(long, default_value_t = 0.5)]
        tolerance_db: f64,
        /// Accepted gap in Monte-Carlo standard errors.
        #[arg(long, default_value_t = 3.0)]
        std_errors: f64,
    },
    /// List the built-in presets, or print one as JSON.
    Presets {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        full_scale: bool,
    },
    /// Validate a topology: a JSON file, `tree8` or `chain:<L>`.
    TopologyCheck {
        #[arg(long)]
        config: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Config(String),
    Tolerance,
    Internal(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentSet, HarnessError> {
        let mut set = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentSet::load(path)?,
            (None, Some(name)) => harness::preset(name, self.full_scale)?,
            (None, None) => unreachable!("clap enforces one source"),
        };
        if let Some(seed) = self.seed {
            set = set.with_seed(seed);
        }
        if let Some(trials) = self.trials {
            set = set.with_trials(trials);
        }
        set.validate()?;
        Ok(set)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            if n == 0 {
                return Err(Failure::Config("--workers must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| Failure::Internal(e.to_string()))
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Internal(format!("{}: {e}", path.display()))
}

fn emit(args: &RunArgs, set: &ExperimentSet, results: &[harness::SeriesResult]) -> Result<(), Failure> {
    match &args.out {
        Some(path) => {
            harness::write_csv_file(path, results)?;
            let provenance = path.with_extension("config.json");
            std::fs::write(&provenance, set.to_json()).map_err(|e| io_failure(&provenance, e))?;
        }
        None => harness::write_csv(std::io::stdout().lock(), results)?,
    }
    for r in results {
        let s = &r.summary;
        let last = s.points.last();
        eprintln!(
            "{:<28} completed {:>5}  diverged {:>3}  failed {:>3}  final {}",
            s.label,
            s.completed,
            s.diverged,
            s.failures.len(),
            last.map_or("n/a".to_string(), |p| format!(
                "{:.3} dB (se {:.2e})",
                harness::to_db(p.mean_max_mse),
                p.std_error
            )),
        );
        for f in &s.failures {
            eprintln!("  trial {}: {}", f.trial, f.message);
        }
    }
    Ok(())
}

fn simulate(args: &RunArgs, se_only: bool) -> Result<(), Failure> {
    let mut set = args.load()?;
    if se_only {
        let has_se = set.experiments.iter().any(|c| c.runner.is_state_evolution());
        if has_se {
            set.experiments.retain(|c| c.runner.is_state_evolution());
        } else {
            for c in &mut set.experiments {
                c.runner = c.runner.state_evolution();
                c.label = Some(format!("se_{}", c.label()));
            }
        }
    }
    let results = args.pool()?.install(|| harness::run_set(&set))?;
    emit(args, &set, &results)
}

fn compare(args: &RunArgs, tolerance: Tolerance) -> Result<(), Failure> {
    let set = args.load()?;
    let experiments = set.validate()?;
    let pool = args.pool()?;
    let mut all_passed = true;
    let mut results = Vec::new();
    for exp in experiments.iter().filter(|e| !e.config.runner.is_state_evolution()) {
        let sim = pool.install(|| harness::run(exp))?;
        let report = harness::compare_with(exp, &sim, tolerance)?;
        print!("{report}");
        println!(
            "{}: worst gap {:.3} dB -> {}\n",
            report.label,
            report.worst_gap_db(),
            if report.passed() { "ok" } else { "FAIL" }
        );
        all_passed &= report.passed();
        results.push(sim);
    }
    if results.is_empty() {
        return Err(Failure::Config("no simulation series to compare".into()));
    }
    if let Some(path) = &args.out {
        harness::write_csv_file(path, &results)?;
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Tolerance)
    }
}

fn presets(name: Option<&str>, full_scale: bool) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match name {
        Some(name) => {
            let set = harness::preset(name, full_scale)?;
            writeln!(out, "{}", set.to_json()).map_err(|e| Failure::Internal(e.to_string()))?;
        }
        None => {
            for set in harness::presets(full_scale) {
                let sims = set.experiments.iter().filter(|c| !c.runner.is_state_evolution()).count();
                let first = &set.experiments[0];
                writeln!(
                    out,
                    "{:<10} N={:<5} trials={:<6} series={} ({} simulated)",
                    set.name,
                    first.signal_dim,
                    first.trials,
                    set.experiments.len(),
                    sims
                )
                .map_err(|e| Failure::Internal(e.to_string()))?;
            }
        }
    }
    Ok(())
}

fn topology_check(spec: &str) -> Result<(), Failure> {
    let net = if spec == "tree8" {
        TreeNetwork::tree8()
    } else if let Some(n) = spec.strip_prefix("chain:") {
        let n: usize = n.parse().map_err(|_| Failure::Config(format!("bad chain length `{n}`")))?;
        TreeNetwork::chain(n).map_err(|e| Failure::Config(e.to_string()))?
    } else {
        TreeNetwork::load(spec).map_err(|e| Failure::Config(e.to_string()))?
    };
    println!("nodes     {}", net.node_count());
    println!("edges     {}", net.edges().len());
    println!("diameter  {}", net.diameter());
    let degrees: Vec<usize> = (0..net.node_count()).map(|l| net.degree(l)).collect();
    println!("degrees   {degrees:?}");
    println!("messages  {} per sweep", net.directed_edge_count());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(args) => simulate(args, false),
        Command::Se(args) => simulate(args, true),
        Command::Compare {
            run,
            tolerance_db,
            std_errors,
        } => compare(
            run,
            Tolerance {
                db: *tolerance_db,
                std_errors: *std_errors,
            },
        ),
        Command::Presets { preset, full_scale } => presets(preset.as_deref(), *full_scale),
        Command::TopologyCheck { config } => topology_check(config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Tolerance) => {
            eprintln!("tolerance exceeded");
            ExitCode::from(EXIT_TOLERANCE)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
