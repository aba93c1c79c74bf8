//! Experiment configuration, Monte-Carlo execution, SE comparison and CSV
//! output.
//!
//! Trial `k` of an experiment with seed `s` always draws its instance from
//! `split_seed(s, k)`, so experiments sharing a seed see the same instances.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::channel::{split_seed, Channel, ChannelKind, MeasurementInstance, SignalPrior};
use crate::gamp::{self, Denoisers, GampError, RunOptions, Schedule, Trajectory};
use crate::network::TreeNetwork;
use crate::se::{self, SeModel, SeOptions, SeTrajectory};

/// Largest accepted SNR; beyond it the noise variance degenerates.
pub const MAX_SNR_DB: f64 = 120.0;

pub const CSV_HEADER: [&str; 6] = ["runner", "trial", "t", "cp_sweeps", "node", "mse"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("state evolution failed: {0}")]
    StateEvolution(#[from] se::SeError),
    #[error("csv output: {0}")]
    Csv(String),
}

impl HarnessError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Self::ConfigInvalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::ConfigInvalid { .. } | Self::Io { .. } | Self::Parse(_) | Self::UnknownPreset(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Chain { nodes: usize },
    Tree8,
    File { path: PathBuf },
}

impl TopologySpec {
    pub fn build(&self) -> Result<TreeNetwork, HarnessError> {
        match self {
            Self::Chain { nodes } => {
                TreeNetwork::chain(*nodes).map_err(|e| HarnessError::invalid("topology", e.to_string()))
            }
            Self::Tree8 => Ok(TreeNetwork::tree8()),
            Self::File { path } => {
                TreeNetwork::load(path).map_err(|e| HarnessError::invalid("topology", e.to_string()))
            }
        }
    }
}

/// Per-node measurement counts, explicit or as `M[l] = round(delta N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementSpec {
    PerNode { rows: Vec<usize> },
    Ratio { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Runner {
    Dgamp,
    Centralized,
    Naive { gamma: f64 },
    Se,
    SeCentralized,
    SeNaive { gamma: f64 },
}

impl Runner {
    pub fn is_state_evolution(self) -> bool {
        matches!(self, Self::Se | Self::SeCentralized | Self::SeNaive { .. })
    }

    /// State-evolution runner predicting this simulation runner.
    pub fn state_evolution(self) -> Self {
        match self {
            Self::Dgamp => Self::Se,
            Self::Centralized => Self::SeCentralized,
            Self::Naive { gamma } => Self::SeNaive { gamma },
            se => se,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Dgamp => "dgamp",
            Self::Centralized => "centralized",
            Self::Naive { .. } => "naive",
            Self::Se => "se",
            Self::SeCentralized => "se_centralized",
            Self::SeNaive { .. } => "se_naive",
        }
    }
}

/// One series: a problem, a runner and its schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub topology: TopologySpec,
    pub signal_dim: usize,
    pub measurements: MeasurementSpec,
    pub rho: f64,
    pub snr_db: f64,
    pub channel: ChannelKind,
    /// `T[l]`; a single entry applies to every node.
    pub periods: Vec<usize>,
    pub sweeps: usize,
    pub damping: f64,
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    pub runner: Runner,
}

/// Fully validated experiment.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub label: String,
    pub network: TreeNetwork,
    pub rows: Vec<usize>,
    pub prior: SignalPrior,
    pub channel: Channel,
    pub schedule: Schedule,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        let name = self.runner.name();
        match self.runner {
            Runner::Dgamp | Runner::Se => {
                let periods: String = self.periods.iter().map(|p| p.to_string()).collect();
                format!("{name}_T{periods}_J{}", self.sweeps)
            }
            Runner::Naive { gamma } | Runner::SeNaive { gamma } => format!("{name}_g{gamma}"),
            _ => name.to_string(),
        }
    }

    pub fn node_rows(&self, node_count: usize) -> Result<Vec<usize>, HarnessError> {
        let rows = match &self.measurements {
            MeasurementSpec::PerNode { rows } => rows.clone(),
            MeasurementSpec::Ratio { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(HarnessError::invalid("measurements", "delta must be positive"));
                }
                vec![(delta * self.signal_dim as f64).round() as usize; node_count]
            }
        };
        if rows.len() != node_count {
            return Err(HarnessError::invalid(
                "measurements",
                format!("{} entries for {node_count} nodes", rows.len()),
            ));
        }
        if rows.contains(&0) {
            return Err(HarnessError::invalid("measurements", "every node needs at least one row"));
        }
        Ok(rows)
    }

    pub fn validate(&self) -> Result<ResolvedExperiment, HarnessError> {
        if self.signal_dim == 0 {
            return Err(HarnessError::invalid("signal_dim", "must be at least 1"));
        }
        let prior = SignalPrior::bernoulli_gaussian(self.rho)
            .map_err(|e| HarnessError::invalid("rho", e.to_string()))?;
        if !(self.snr_db.is_finite() && self.snr_db <= MAX_SNR_DB) {
            return Err(HarnessError::invalid(
                "snr_db",
                format!("must be finite and at most {MAX_SNR_DB} dB"),
            ));
        }
        let channel = Channel::new(self.channel, Channel::noise_variance_from_snr_db(self.snr_db))
            .map_err(|e| HarnessError::invalid("channel", e.to_string()))?;
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(HarnessError::invalid("damping", "must lie in (0, 1]"));
        }
        if self.iterations == 0 {
            return Err(HarnessError::invalid("iterations", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(HarnessError::invalid("trials", "must be at least 1"));
        }
        if self.sweeps == 0 {
            return Err(HarnessError::invalid("sweeps", "must be at least 1"));
        }
        if let Runner::Naive { gamma } | Runner::SeNaive { gamma } = self.runner {
            if !(gamma.is_finite() && gamma >= 0.0) {
                return Err(HarnessError::invalid("runner", "gamma must be non-negative"));
            }
        }
        let network = self.topology.build()?;
        let nodes = network.node_count();
        let rows = self.node_rows(nodes)?;
        let periods = match self.periods.len() {
            1 => vec![self.periods[0]; nodes],
            n if n == nodes => self.periods.clone(),
            n => {
                return Err(HarnessError::invalid(
                    "periods",
                    format!("{n} entries for {nodes} nodes"),
                ))
            }
        };
        let schedule = Schedule::heterogeneous(periods, self.sweeps, self.iterations)
            .map_err(|e| HarnessError::invalid("periods", e.to_string()))?;
        Ok(ResolvedExperiment {
            label: self.label(),
            network,
            rows,
            prior,
            channel,
            schedule,
            config: self.clone(),
        })
    }
}

/// Named collection of series sharing one output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSet {
    pub name: String,
    pub experiments: Vec<ExperimentConfig>,
}

impl ExperimentSet {
    /// Parses either a set or a single experiment.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let parse_err = |e: serde_json::Error| HarnessError::Parse(e.to_string());
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
        if value.get("experiments").is_some() {
            return serde_json::from_value(value).map_err(parse_err);
        }
        let config: ExperimentConfig = serde_json::from_value(value).map_err(parse_err)?;
        Ok(Self {
            name: config.label(),
            experiments: vec![config],
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.experiments.iter_mut().for_each(|c| c.seed = seed);
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.experiments.iter_mut().for_each(|c| c.trials = trials);
        self
    }

    pub fn validate(&self) -> Result<Vec<ResolvedExperiment>, HarnessError> {
        if self.experiments.is_empty() {
            return Err(HarnessError::invalid("experiments", "empty"));
        }
        self.experiments.iter().map(ExperimentConfig::validate).collect()
    }
}

/// Trial index, or the deterministic state-evolution pseudo-trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrialId {
    Index(usize),
    Se,
}

impl fmt::Display for TrialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Index(k) => write!(f, "{k}"),
            Self::Se => f.write_str("se"),
        }
    }
}

impl Serialize for TrialId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Index(k) => s.serialize_u64(*k as u64),
            Self::Se => s.serialize_str("se"),
        }
    }
}

/// Node column: 1-based node index, or `-1` for the max over nodes.
pub const MAX_NODE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub runner: String,
    pub trial: TrialId,
    /// 1-based iteration.
    pub t: usize,
    pub cp_sweeps: usize,
    pub node: i64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryPoint {
    pub t: usize,
    pub cp_sweeps: usize,
    pub mean_max_mse: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub label: String,
    pub runner: Runner,
    /// Trials that finished and enter the means.
    pub completed: usize,
    pub diverged: usize,
    /// Non-divergence failures.
    pub failures: Vec<TrialFailure>,
    pub points: Vec<SummaryPoint>,
}

/// Per-trial largest-node MSE curves; `None` marks excluded trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub summary: SeriesSummary,
    pub rows: Vec<ResultRow>,
    pub max_mse: Vec<Option<Vec<f64>>>,
    pub cp_sweeps: Vec<usize>,
}

impl SeriesResult {
    pub fn final_mean(&self) -> Option<f64> {
        self.summary.points.last().map(|p| p.mean_max_mse)
    }
}

/// Sample mean and its standard error.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn sim_rows(label: &str, trial: usize, traj: &Trajectory) -> Vec<ResultRow> {
    let max = traj.max_mse();
    traj.mse
        .iter()
        .enumerate()
        .flat_map(|(t, per_node)| {
            let sweeps = traj.cp_sweeps[t];
            let row = move |node: i64, mse: f64| ResultRow {
                runner: label.to_string(),
                trial: TrialId::Index(trial),
                t: t + 1,
                cp_sweeps: sweeps,
                node,
                mse,
            };
            per_node
                .iter()
                .enumerate()
                .map(move |(l, &m)| row(l as i64 + 1, m))
                .chain(std::iter::once(row(MAX_NODE, max[t])))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn se_rows(label: &str, traj: &SeTrajectory) -> Vec<ResultRow> {
    let max = traj.max_mse();
    let mut rows = Vec::new();
    for (t, states) in traj.states.iter().enumerate() {
        let sweeps = traj.cp_sweeps[t];
        let row = |node: i64, mse: f64| ResultRow {
            runner: label.to_string(),
            trial: TrialId::Se,
            t: t + 1,
            cp_sweeps: sweeps,
            node,
            mse,
        };
        rows.extend(states.iter().enumerate().map(|(l, s)| row(l as i64 + 1, s.mse)));
        rows.push(row(MAX_NODE, max[t]));
    }
    rows
}

/// Runs one simulation trial on the instance drawn for `trial`.
pub fn simulate_trial(exp: &ResolvedExperiment, trial: usize) -> Result<Trajectory, GampError> {
    let cfg = &exp.config;
    let seed = split_seed(cfg.seed, trial as u64);
    let instance = MeasurementInstance::sample(cfg.signal_dim, &exp.rows, exp.prior, exp.channel, seed)
        .expect("validated dimensions");
    let den = Denoisers::matched(&instance);
    let opts = RunOptions::damped(cfg.damping);
    match cfg.runner {
        Runner::Dgamp => gamp::run_dgamp(&instance, &exp.network, &exp.schedule, &den, opts),
        Runner::Centralized => gamp::run_centralized(&instance, cfg.iterations, &den, opts),
        Runner::Naive { gamma } => gamp::run_naive(&instance, &exp.network, gamma, cfg.iterations, &den, opts),
        _ => unreachable!("state-evolution runner in simulate_trial"),
    }
}

/// State-evolution model with `delta[l] = M[l] / N`.
pub fn se_model(exp: &ResolvedExperiment) -> Result<SeModel, HarnessError> {
    let n = exp.config.signal_dim as f64;
    let deltas = exp.rows.iter().map(|&m| m as f64 / n).collect();
    Ok(SeModel::new(exp.prior, exp.channel, deltas)?)
}

/// State evolution of `runner` (or its SE counterpart) for this experiment.
pub fn state_evolution(exp: &ResolvedExperiment, opts: &SeOptions) -> Result<SeTrajectory, HarnessError> {
    let model = se_model(exp)?;
    let iters = exp.config.iterations;
    Ok(match exp.config.runner.state_evolution() {
        Runner::Se => se::se_dgamp(&exp.network, &exp.schedule, &model, opts)?,
        Runner::SeCentralized => se::se_centralized(&model, iters, opts)?,
        Runner::SeNaive { gamma } => se::se_naive(&exp.network, gamma, &model, iters, opts)?,
        _ => unreachable!(),
    })
}

/// Executes one experiment. Failed trials are reported in the summary and
/// never abort the batch.
pub fn run(exp: &ResolvedExperiment) -> Result<SeriesResult, HarnessError> {
    let label = exp.label.clone();
    let runner = exp.config.runner;
    if runner.is_state_evolution() {
        let traj = state_evolution(exp, &SeOptions::default())?;
        let points = traj
            .max_mse()
            .iter()
            .enumerate()
            .map(|(t, &m)| SummaryPoint {
                t: t + 1,
                cp_sweeps: traj.cp_sweeps[t],
                mean_max_mse: m,
                std_error: 0.0,
            })
            .collect();
        return Ok(SeriesResult {
            rows: se_rows(&label, &traj),
            max_mse: vec![Some(traj.max_mse())],
            cp_sweeps: traj.cp_sweeps.clone(),
            summary: SeriesSummary {
                label,
                runner,
                completed: 1,
                diverged: 0,
                failures: Vec::new(),
                points,
            },
        });
    }

    let outcomes: Vec<Result<Trajectory, GampError>> = (0..exp.config.trials)
        .into_par_iter()
        .map(|k| simulate_trial(exp, k))
        .collect();

    let mut rows = Vec::new();
    let mut max_mse = Vec::with_capacity(outcomes.len());
    let mut diverged = 0;
    let mut failures = Vec::new();
    let mut cp_sweeps = Vec::new();
    for (k, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(traj) => {
                rows.extend(sim_rows(&label, k, traj));
                max_mse.push(Some(traj.max_mse()));
                if cp_sweeps.is_empty() {
                    cp_sweeps = traj.cp_sweeps.clone();
                }
            }
            Err(e) => {
                if e.is_divergence() {
                    diverged += 1;
                } else {
                    failures.push(TrialFailure {
                        trial: k,
                        message: e.to_string(),
                    });
                }
                max_mse.push(None);
            }
        }
    }
    let completed: Vec<&Vec<f64>> = max_mse.iter().flatten().collect();
    let points = (0..cp_sweeps.len())
        .map(|t| {
            let column: Vec<f64> = completed.iter().map(|c| c[t]).collect();
            let (mean, se) = mean_and_std_error(&column);
            SummaryPoint {
                t: t + 1,
                cp_sweeps: cp_sweeps[t],
                mean_max_mse: mean,
                std_error: se,
            }
        })
        .collect();
    Ok(SeriesResult {
        summary: SeriesSummary {
            label,
            runner,
            completed: completed.len(),
            diverged,
            failures,
            points,
        },
        rows,
        max_mse,
        cp_sweeps,
    })
}

/// Runs every experiment of a set, in order.
pub fn run_set(set: &ExperimentSet) -> Result<Vec<SeriesResult>, HarnessError> {
    set.validate()?.iter().map(run).collect()
}

/// Writes rows under the fixed header, sorted by (runner, trial, t, node).
pub fn write_csv<W: Write>(out: W, results: &[SeriesResult]) -> Result<(), HarnessError> {
    let mut rows: Vec<&ResultRow> = results.iter().flat_map(|r| &r.rows).collect();
    rows.sort_by(|a, b| {
        (&a.runner, a.trial, a.t, a.node < 0, a.node).cmp(&(&b.runner, b.trial, b.t, b.node < 0, b.node))
    });
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.to_string()))
}

pub fn write_csv_file(path: impl AsRef<Path>, results: &[SeriesResult]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_csv(std::io::BufWriter::new(file), results)
}

/// Accepted simulation/SE disagreement: the larger of a dB band and a
/// multiple of the Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub db: f64,
    pub std_errors: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            db: 0.5,
            std_errors: 3.0,
        }
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonPoint {
    pub t: usize,
    pub cp_sweeps: usize,
    pub simulated: f64,
    pub std_error: f64,
    pub predicted: f64,
    pub gap_db: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub label: String,
    pub tolerance: Tolerance,
    pub points: Vec<ComparisonPoint>,
    pub diverged: usize,
    pub simulation: SeriesSummary,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.within)
    }

    pub fn worst_gap_db(&self) -> f64 {
        self.points.iter().map(|p| p.gap_db.abs()).fold(0.0, f64::max)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} ({} trials, {} diverged)",
            self.label, self.simulation.completed, self.diverged
        )?;
        writeln!(f, "{:>5} {:>6} {:>11} {:>9} {:>11} {:>8}", "t", "sweeps", "sim[dB]", "se[dB]", "pred[dB]", "gap[dB]")?;
        for p in &self.points {
            writeln!(
                f,
                "{:>5} {:>6} {:>11.3} {:>9.4} {:>11.3} {:>8.3}{}",
                p.t,
                p.cp_sweeps,
                to_db(p.simulated),
                to_db(1.0 + p.std_error / p.simulated),
                to_db(p.predicted),
                p.gap_db,
                if p.within { "" } else { "  FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Compares the simulated mean max-node MSE with its SE prediction at every
/// iteration that closes a consensus round.
pub fn compare_se(exp: &ResolvedExperiment, tolerance: Tolerance) -> Result<ComparisonReport, HarnessError> {
    if exp.config.runner.is_state_evolution() {
        return Err(HarnessError::invalid("runner", "compare needs a simulation runner"));
    }
    let sim = run(exp)?;
    compare_with(exp, &sim, tolerance)
}

/// [`compare_se`] against an already computed simulation series.
pub fn compare_with(
    exp: &ResolvedExperiment,
    sim: &SeriesResult,
    tolerance: Tolerance,
) -> Result<ComparisonReport, HarnessError> {
    let predicted = state_evolution(exp, &SeOptions::default())?.max_mse();
    let round = match exp.config.runner {
        Runner::Dgamp => exp.schedule.round_len(),
        _ => 1,
    };
    let points = sim
        .summary
        .points
        .iter()
        .filter(|p| p.t % round == 0)
        .map(|p| {
            let pred = predicted[p.t - 1];
            let gap_db = to_db(p.mean_max_mse / pred);
            let within = gap_db.abs() <= tolerance.db
                || (p.mean_max_mse - pred).abs() <= tolerance.std_errors * p.std_error;
            ComparisonPoint {
                t: p.t,
                cp_sweeps: p.cp_sweeps,
                simulated: p.mean_max_mse,
                std_error: p.std_error,
                predicted: pred,
                gap_db,
                within,
            }
        })
        .collect();
    Ok(ComparisonReport {
        label: exp.label.clone(),
        tolerance,
        points,
        diverged: sim.summary.diverged,
        simulation: sim.summary.clone(),
    })
}

/// First summary point whose mean lies within `margin_db` of `target`.
pub fn first_within_db(points: &[SummaryPoint], target: f64, margin_db: f64) -> Option<SummaryPoint> {
    points
        .iter()
        .copied()
        .find(|p| (to_db(p.mean_max_mse) - to_db(target)).abs() <= margin_db)
}

pub const PRESET_NAMES: [&str; 4] = ["fig2-desk", "fig3-desk", "fig4-desk", "fig5-desk"];

struct Base {
    topology: TopologySpec,
    signal_dim: usize,
    channel: ChannelKind,
    trials: usize,
    seed: u64,
}

impl Base {
    fn series(
        &self,
        label: &str,
        runner: Runner,
        measurements: MeasurementSpec,
        periods: Vec<usize>,
        sweeps: usize,
        damping: f64,
        iterations: usize,
    ) -> ExperimentConfig {
        ExperimentConfig {
            label: Some(label.to_string()),
            topology: self.topology.clone(),
            signal_dim: self.signal_dim,
            measurements,
            rho: 0.1,
            snr_db: 30.0,
            channel: self.channel,
            periods,
            sweeps,
            damping,
            iterations,
            trials: self.trials,
            seed: self.seed,
            runner,
        }
    }
}

/// Consensus-schedule comparison on the 4-node chain: each schedule gets a
/// budget of `budget` cumulative sweeps, with an SE line per schedule.
fn chain_schedules(
    name: &str,
    base: Base,
    delta: f64,
    schedules: &[(&str, Vec<usize>, usize)],
    budget: usize,
) -> ExperimentSet {
    let mut experiments = Vec::new();
    for (tag, periods, sweeps) in schedules {
        let round = *periods.iter().max().unwrap();
        let iterations = budget / sweeps * round;
        for (prefix, runner) in [("dgamp", Runner::Dgamp), ("se", Runner::Se)] {
            experiments.push(base.series(
                &format!("{prefix}_{tag}"),
                runner,
                MeasurementSpec::Ratio { delta },
                periods.clone(),
                *sweeps,
                1.0,
                iterations,
            ));
        }
    }
    experiments.push(base.series(
        "se_centralized",
        Runner::SeCentralized,
        MeasurementSpec::Ratio { delta },
        vec![1],
        1,
        1.0,
        budget,
    ));
    ExperimentSet {
        name: name.to_string(),
        experiments,
    }
}

/// Built-in experiment sets; `full_scale` restores the published sizes.
pub fn preset(name: &str, full_scale: bool) -> Result<ExperimentSet, HarnessError> {
    let trials = if full_scale { 10_000 } else { 50 };
    let clip = ChannelKind::Clip { threshold: 2.0 };
    let set = match name {
        "fig2-desk" => chain_schedules(
            name,
            Base {
                topology: TopologySpec::Chain { nodes: 4 },
                signal_dim: if full_scale { 6400 } else { 3200 },
                channel: ChannelKind::Linear,
                trials,
                seed: 2,
            },
            0.075,
            &[
                ("T1_J1", vec![1], 1),
                ("T2_J1", vec![2], 1),
                ("T1_J2", vec![1], 2),
            ],
            50,
        ),
        "fig3-desk" => chain_schedules(
            name,
            Base {
                topology: TopologySpec::Chain { nodes: 4 },
                signal_dim: if full_scale { 4000 } else { 2000 },
                channel: clip,
                trials,
                seed: 3,
            },
            0.2,
            &[
                ("T1_J1", vec![1], 1),
                ("T2_J1", vec![2], 1),
                ("T1_J2", vec![1], 2),
                ("T2121_J1", vec![2, 1, 2, 1], 1),
            ],
            20,
        ),
        "fig4-desk" => {
            let sizes: &[(usize, f64, f64)] = if full_scale {
                &[(500, 0.9, 0.9), (1000, 1.0, 0.95), (2000, 1.0, 0.95)]
            } else {
                &[(500, 0.9, 0.9), (1000, 1.0, 0.95)]
            };
            let mut experiments = Vec::new();
            for &(n, chi_d, chi_c) in sizes {
                let base = Base {
                    topology: TopologySpec::Tree8,
                    signal_dim: n,
                    channel: clip,
                    trials,
                    seed: 4,
                };
                let m = MeasurementSpec::Ratio { delta: 0.05 };
                for (prefix, runner, chi) in [
                    ("dgamp", Runner::Dgamp, chi_d),
                    ("centralized", Runner::Centralized, chi_c),
                    ("se", Runner::Se, 1.0),
                    ("se_centralized", Runner::SeCentralized, 1.0),
                ] {
                    experiments.push(base.series(&format!("{prefix}_N{n}"), runner, m.clone(), vec![1], 1, chi, 80));
                }
            }
            ExperimentSet {
                name: name.to_string(),
                experiments,
            }
        }
        "fig5-desk" => {
            let base = Base {
                topology: TopologySpec::Tree8,
                signal_dim: 600,
                channel: clip,
                trials,
                seed: 5,
            };
            let hetero: Vec<usize> = (0..8).map(|l| if l % 2 == 0 { 150 } else { 30 }).collect();
            let mut experiments = Vec::new();
            for (tag, rows) in [("homogeneous", vec![90; 8]), ("heterogeneous", hetero)] {
                let m = MeasurementSpec::PerNode { rows };
                for (prefix, runner, chi) in [
                    ("dgamp", Runner::Dgamp, 0.95),
                    ("centralized", Runner::Centralized, 1.0),
                    ("se", Runner::Se, 1.0),
                    ("se_centralized", Runner::SeCentralized, 1.0),
                ] {
                    experiments.push(base.series(&format!("{prefix}_{tag}"), runner, m.clone(), vec![1], 1, chi, 60));
                }
            }
            ExperimentSet {
                name: name.to_string(),
                experiments,
            }
        }
        other => return Err(HarnessError::UnknownPreset(other.to_string())),
    };
    Ok(set)
}

pub fn presets(full_scale: bool) -> Vec<ExperimentSet> {
    PRESET_NAMES
        .iter()
        .map(|name| preset(name, full_scale).expect("built-in preset"))
        .collect()
}
