//! Seeded Monte Carlo trials of the decoder (or of its auxiliary problem),
//! aggregation with uncertainty, and the k-bit joint error test.
//!
//! Trial `t` draws everything from `RngStream(master_seed, t, ·)`, so results
//! do not depend on scheduling. Trials may run on the rayon pool (feature
//! `parallel`), but they are always reduced sequentially in trial order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::ao_sim::{ao_solve, AoSample};
use crate::boxsolve::{detect, solve_box_ls, SolveOptions};
use crate::error::{Error, Result};
use crate::model::{sample_instance, ProblemShape, Purpose, RngStream, SignalPrior, TrialSeed};
use crate::theory::{predict_pe, TheoryPoint};

/// Runs fail when more than this fraction of trials does not converge.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimPath {
    /// The real decoder on sampled channels.
    #[default]
    Po,
    /// The auxiliary problem on sampled `(g, h)`.
    Ao,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when built with `parallel`, sequential otherwise.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub shape: ProblemShape,
    pub trials: usize,
    pub master_seed: u64,
    pub path: SimPath,
    pub solver_tol: f64,
    pub max_iter: Option<usize>,
    pub force_all_ones_signal: bool,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(shape: ProblemShape, trials: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            shape,
            trials,
            master_seed,
            path: SimPath::Po,
            solver_tol: SolveOptions::default().tol,
            max_iter: None,
            force_all_ones_signal: false,
            execution: Execution::default(),
        }
    }

    pub fn with_path(mut self, path: SimPath) -> Self {
        self.path = path;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "solver tolerance must be positive, got {}",
                self.solver_tol
            )));
        }
        Ok(())
    }
}

/// Result of one trial. `None` BER marks a trial whose solve failed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: u64,
    pub ber: Option<f64>,
    pub error_mask: Vec<bool>,
    /// AO path only; absent when the clamp was active.
    pub tau_hat: Option<f64>,
    pub clamped: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub shape: ProblemShape,
    pub path: SimPath,
    /// Trials requested.
    pub trials: usize,
    /// Bits over the trials that were kept.
    pub total_bits: usize,
    pub ber_mean: f64,
    /// Standard error across trials (0 with fewer than two trials).
    pub ber_stderr: f64,
    pub ci95: (f64, f64),
    pub per_trial_ber: Vec<f64>,
    /// Non-converged solves plus AO samples with the clamp active.
    pub clamp_or_nonconverged: usize,
    /// Trials dropped from the BER estimate.
    pub excluded: usize,
    /// AO path: `τ̂` of every unclamped sample, in trial order.
    pub tau_hat: Vec<f64>,
}

/// k-bit joint error frequency against the independence prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct JointErrorStats {
    pub k: usize,
    /// Subsets drawn per trial.
    pub subsets_sampled: usize,
    pub joint_error_freq: f64,
    /// `Q(1/τ*)^k`; `None` when the theory does not apply (δ ≤ 1/2).
    pub independence_prediction: Option<f64>,
    pub stderr: f64,
    /// Marginal BER over the same trials.
    pub ber_mean: f64,
    pub trials_used: usize,
}

/// One output row; fields a command does not produce stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComparisonRow {
    pub snr_db: Option<f64>,
    pub delta: Option<f64>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub ber_mean: Option<f64>,
    pub ber_ci_lo: Option<f64>,
    pub ber_ci_hi: Option<f64>,
    pub pe_theory: Option<f64>,
    pub pe_high_snr: Option<f64>,
    pub pe_mfb: Option<f64>,
    pub tau_star: Option<f64>,
    pub z_score: Option<f64>,
}

impl ComparisonRow {
    pub fn from_theory(point: &TheoryPoint) -> Self {
        ComparisonRow {
            snr_db: Some(point.snr_db()),
            delta: Some(point.delta),
            pe_theory: Some(point.pe),
            pe_high_snr: Some(point.pe_high_snr),
            pe_mfb: Some(point.pe_mfb),
            tau_star: Some(point.tau_star),
            ..Default::default()
        }
    }
}

/// Neumaier-compensated sum, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Mean and standard error of the mean of `values`.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let count = values.len();
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / count as f64;
    if count < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (count - 1) as f64;
    (mean, (var / count as f64).sqrt())
}

/// Maps `f` over trial indices, in parallel when enabled, and returns the
/// results in trial order.
fn map_trials<T, F>(execution: Execution, trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution == Execution::Parallel {
        return (0..trials as u64).into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = execution;
    (0..trials as u64).map(f).collect()
}

fn run_one(config: &ExperimentConfig, trial: u64) -> TrialOutcome {
    let seed = TrialSeed::new(config.master_seed, trial);
    match config.path {
        SimPath::Po => {
            let prior = if config.force_all_ones_signal {
                SignalPrior::AllOnes
            } else {
                SignalPrior::Uniform
            };
            let inst = sample_instance(&config.shape, &seed, prior);
            let opts = SolveOptions {
                tol: config.solver_tol,
                max_iter: config.max_iter,
            };
            match solve_box_ls(&inst.a, &inst.y, &opts) {
                Ok(sol) => {
                    let det =
                        detect(&sol.x_hat, &inst.x0).expect("dimensions agree by construction");
                    TrialOutcome {
                        trial,
                        ber: Some(det.ber),
                        error_mask: det.error_mask,
                        tau_hat: None,
                        clamped: false,
                        iterations: sol.iterations,
                    }
                }
                Err(err) => {
                    log::warn!("trial {trial}: {err}; excluded from the estimate");
                    let iterations = match &err {
                        Error::NonConvergence { iterations, .. } => *iterations,
                        _ => 0,
                    };
                    failed_outcome(trial, iterations)
                }
            }
        }
        SimPath::Ao => {
            let sample = AoSample::draw(&config.shape, &seed);
            match ao_solve(&sample) {
                Ok(sol) => TrialOutcome {
                    trial,
                    ber: Some(sol.ao_ber),
                    error_mask: sol.error_mask(),
                    tau_hat: (!sol.clamped).then_some(sol.tau_hat),
                    clamped: sol.clamped,
                    iterations: 0,
                },
                Err(err) => {
                    log::warn!("trial {trial}: {err}; excluded from the estimate");
                    failed_outcome(trial, 0)
                }
            }
        }
    }
}

fn failed_outcome(trial: u64, iterations: usize) -> TrialOutcome {
    TrialOutcome {
        trial,
        ber: None,
        error_mask: Vec::new(),
        tau_hat: None,
        clamped: false,
        iterations,
    }
}

/// Runs every trial of `config` and returns the raw outcomes in trial order.
///
/// Fails if more than 10% of the trials could not be solved.
pub fn run_outcomes(config: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    let outcomes = map_trials(config.execution, config.trials, |t| run_one(config, t));
    let failed = outcomes.iter().filter(|o| o.ber.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * config.trials as f64 {
        return Err(Error::AggregateFailure {
            failed,
            trials: config.trials,
        });
    }
    Ok(outcomes)
}

/// Reduces outcomes to a summary, strictly in trial order.
pub fn summarize(config: &ExperimentConfig, outcomes: &[TrialOutcome]) -> TrialSummary {
    let per_trial_ber: Vec<f64> = outcomes.iter().filter_map(|o| o.ber).collect();
    let excluded = outcomes.len() - per_trial_ber.len();
    let clamped = outcomes.iter().filter(|o| o.clamped).count();
    let (ber_mean, ber_stderr) = mean_and_stderr(&per_trial_ber);
    TrialSummary {
        shape: config.shape,
        path: config.path,
        trials: config.trials,
        total_bits: per_trial_ber.len() * config.shape.n,
        ber_mean,
        ber_stderr,
        ci95: (ber_mean - Z95 * ber_stderr, ber_mean + Z95 * ber_stderr),
        per_trial_ber,
        clamp_or_nonconverged: excluded + clamped,
        excluded,
        tau_hat: outcomes.iter().filter_map(|o| o.tau_hat).collect(),
    }
}

/// Estimates `P_e = E[BER]` from seeded trials.
pub fn run_trials(config: &ExperimentConfig) -> Result<TrialSummary> {
    let outcomes = run_outcomes(config)?;
    Ok(summarize(config, &outcomes))
}

/// Counts, over `subsets` uniformly random `k`-subsets drawn from `stream`,
/// how many have every bit in error.
pub fn count_joint_errors(
    mask: &[bool],
    k: usize,
    subsets: usize,
    stream: &RngStream,
) -> Result<usize> {
    if k == 0 || k > mask.len() {
        return Err(Error::InvalidArgument(format!(
            "subset size must be in 1..={}, got {k}",
            mask.len()
        )));
    }
    let mut rng = stream.rng();
    let mut hits = 0;
    for _ in 0..subsets {
        let idx = rand::seq::index::sample(&mut rng, mask.len(), k);
        if idx.iter().all(|i| mask[i]) {
            hits += 1;
        }
    }
    Ok(hits)
}

/// Joint error statistics from precomputed outcomes.
pub fn joint_error_stats_from(
    config: &ExperimentConfig,
    outcomes: &[TrialOutcome],
    k: usize,
    subsets: usize,
) -> Result<JointErrorStats> {
    if k == 0 || k > config.shape.n {
        return Err(Error::InvalidArgument(format!(
            "subset size must be in 1..={}, got {k}",
            config.shape.n
        )));
    }
    if subsets == 0 {
        return Err(Error::InvalidArgument("subsets must be at least 1".into()));
    }
    let kept: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.ber.is_some()).collect();
    let per_trial: Vec<f64> = kept
        .iter()
        .map(|o| {
            let stream = RngStream::new(config.master_seed, o.trial, Purpose::SubsetSampling);
            count_joint_errors(&o.error_mask, k, subsets, &stream)
                .map(|h| h as f64 / subsets as f64)
        })
        .collect::<Result<_>>()?;
    let (joint_error_freq, stderr) = mean_and_stderr(&per_trial);
    let bers: Vec<f64> = kept.iter().filter_map(|o| o.ber).collect();
    let (ber_mean, _) = mean_and_stderr(&bers);

    let independence_prediction = predict_pe(config.shape.delta, config.shape.snr())
        .ok()
        .map(|p| p.pe.powi(k as i32));

    Ok(JointErrorStats {
        k,
        subsets_sampled: subsets,
        joint_error_freq,
        independence_prediction,
        stderr,
        ber_mean,
        trials_used: kept.len(),
    })
}

/// Runs the trials of `config` and measures how often `k` random bits are
/// all in error, against the prediction `Q(1/τ*)^k` of independent errors.
pub fn joint_error_stats(
    config: &ExperimentConfig,
    k: usize,
    subsets: usize,
) -> Result<JointErrorStats> {
    if k == 0 || k > config.shape.n {
        return Err(Error::InvalidArgument(format!(
            "subset size must be in 1..={}, got {k}",
            config.shape.n
        )));
    }
    let outcomes = run_outcomes(config)?;
    joint_error_stats_from(config, &outcomes, k, subsets)
}

fn same_snr(a: f64, b: f64) -> bool {
    (a.is_infinite() && b.is_infinite()) || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Lines a simulation summary up against the theory at the same point.
///
/// `z_score = (ber_mean − pe)/stderr`; with zero stderr it is 0 when the two
/// agree exactly and undefined otherwise.
pub fn compare_to_theory(summary: &TrialSummary, point: &TheoryPoint) -> Result<ComparisonRow> {
    let shape = &summary.shape;
    if (shape.delta - point.delta).abs() > 1e-12 * shape.delta.abs().max(1.0)
        || !same_snr(shape.snr(), point.snr)
    {
        return Err(Error::InvalidArgument(format!(
            "summary at (delta {}, snr {}) does not match theory point (delta {}, snr {})",
            shape.delta,
            shape.snr(),
            point.delta,
            point.snr
        )));
    }
    let z_score = if summary.ber_stderr > 0.0 {
        Some((summary.ber_mean - point.pe) / summary.ber_stderr)
    } else if summary.ber_mean == point.pe {
        Some(0.0)
    } else {
        None
    };
    Ok(ComparisonRow {
        n: Some(shape.n),
        trials: Some(summary.trials),
        ber_mean: Some(summary.ber_mean),
        ber_ci_lo: Some(summary.ci95.0),
        ber_ci_hi: Some(summary.ci95.1),
        z_score,
        ..ComparisonRow::from_theory(point)
    })
}
