//! The `boxrelax` command-line front end.
//!
//! Every command writes one table (CSV or JSON) to the output sink and
//! diagnostics to the error stream. Exit codes: 0 success, 2 bad arguments,
//! 3 numerical or I/O failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::model::make_shape;
use crate::montecarlo::{
    compare_to_theory, joint_error_stats, run_trials, ComparisonRow, ExperimentConfig, SimPath,
    TrialSummary,
};
use crate::theory::{predict_pe, snr_gap_db, solve_tau_star, TauMethod, TheoryPoint, TAU_TOL};

/// Environment variable holding the worker count for parallel trials.
pub const THREADS_ENV: &str = "BOXRELAX_THREADS";

/// Columns of every comparison table, in order.
pub const COMPARISON_HEADER: [&str; 12] = [
    "snr_db",
    "delta",
    "n",
    "trials",
    "ber_mean",
    "ber_ci_lo",
    "ber_ci_hi",
    "pe_theory",
    "pe_high_snr",
    "pe_mfb",
    "tau_star",
    "z_score",
];

pub const EXIT_OK: i32 = 0;
pub const EXIT_ARGUMENT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "boxrelax",
    version,
    about = "Box-relaxation BPSK decoding: theory and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Asymptotic error probability Q(1/tau*) on a (delta, SNR) grid.
    Predict(PredictArgs),
    /// Monte Carlo BER of the box-relaxation decoder at one point.
    Simulate(SimArgs),
    /// Monte Carlo BER of the auxiliary problem at one point.
    Ao(SimArgs),
    /// Simulation against theory over a (delta, SNR) grid.
    Sweep(SweepArgs),
    /// Joint error frequency of k random bits against Q(1/tau*)^k.
    Independence(IndependenceArgs),
    /// SNR gap in dB between the box relaxation and the matched filter bound.
    Gap(GapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Method {
    /// Solve the first-order condition by bisection.
    #[default]
    FixedPoint,
    /// Golden-section search on the scalar objective.
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum PathArg {
    #[default]
    Po,
    Ao,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key-value file of defaults for any flag of this command (flags win).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Measurement ratios m/n, comma separated.
    #[arg(long, default_value = "1.0")]
    pub delta: String,
    /// SNR grid in dB: a value, a comma list, or start:stop:step.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub snr_db: String,
    /// Route to tau*.
    #[arg(long, value_enum, default_value_t = Method::FixedPoint)]
    pub method: Method,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    /// Signal length.
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// Independent trials per point.
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// KKT tolerance of the decoder.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Transmit the all-ones signal instead of uniform random signs.
    #[arg(long)]
    pub all_ones: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Measurement ratio m/n.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// SNR in dB (`inf` for noiseless).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub snr_db: f64,
    #[command(flatten)]
    pub trial: TrialArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Measurement ratios m/n, comma separated.
    #[arg(long, default_value = "0.7,1.0")]
    pub delta: String,
    /// SNR grid in dB: a value, a comma list, or start:stop:step.
    #[arg(long, default_value = "0:12:1", allow_hyphen_values = true)]
    pub snr_db: String,
    /// Which problem to simulate.
    #[arg(long, value_enum, default_value_t = PathArg::Po)]
    pub path: PathArg,
    /// Emit theory columns only, without simulating.
    #[arg(long)]
    pub theory_only: bool,
    #[command(flatten)]
    pub trial: TrialArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct IndependenceArgs {
    /// Number of bits per subset.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Random subsets drawn per trial.
    #[arg(long, default_value_t = 2000)]
    pub subsets: usize,
    /// Measurement ratio m/n.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// SNR in dB.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub snr_db: f64,
    /// Which problem to simulate.
    #[arg(long, value_enum, default_value_t = PathArg::Po)]
    pub path: PathArg,
    #[command(flatten)]
    pub trial: TrialArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// Measurement ratios m/n, comma separated.
    #[arg(long, default_value = "1.0")]
    pub delta: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// One table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Empty,
    Int(u64),
    Num(f64),
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Empty, |x| Cell::Int(x as u64))
    }
}

/// Number with 17 significant digits; enough to round-trip any f64.
fn format_num(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

fn csv_cell(cell: &Cell) -> String {
    match *cell {
        Cell::Empty => String::new(),
        Cell::Int(v) => v.to_string(),
        Cell::Num(v) => format_num(v).unwrap_or_default(),
    }
}

fn json_cell(cell: &Cell) -> String {
    match *cell {
        Cell::Empty => "null".into(),
        Cell::Int(v) => v.to_string(),
        Cell::Num(v) => format_num(v).unwrap_or_else(|| "null".into()),
    }
}

/// Renders a table. Non-finite numbers become empty fields (CSV) or null.
pub fn render_table(header: &[&str], rows: &[Vec<Cell>], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                let line: Vec<String> = row.iter().map(csv_cell).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
        Format::Json => {
            out.push('[');
            for (i, row) in rows.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str("\n  {");
                for (j, (key, cell)) in header.iter().zip(row).enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&format!("\"{key}\": {}", json_cell(cell)));
                }
                out.push('}');
            }
            if !rows.is_empty() {
                out.push('\n');
            }
            out.push_str("]\n");
        }
    }
    out
}

pub fn comparison_cells(row: &ComparisonRow) -> Vec<Cell> {
    vec![
        row.snr_db.into(),
        row.delta.into(),
        row.n.into(),
        row.trials.into(),
        row.ber_mean.into(),
        row.ber_ci_lo.into(),
        row.ber_ci_hi.into(),
        row.pe_theory.into(),
        row.pe_high_snr.into(),
        row.pe_mfb.into(),
        row.tau_star.into(),
        row.z_score.into(),
    ]
}

/// Writes comparison rows in the shared schema.
pub fn emit_rows(rows: &[ComparisonRow], format: Format, sink: &mut dyn Write) -> Result<()> {
    let cells: Vec<Vec<Cell>> = rows.iter().map(comparison_cells).collect();
    sink.write_all(render_table(&COMPARISON_HEADER, &cells, format).as_bytes())?;
    Ok(())
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
}

/// Parses `a,b,c`.
pub fn parse_list(spec: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = spec.split(',').map(parse_number).collect::<Result<_>>()?;
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument(format!("NaN in list {spec:?}")));
    }
    Ok(values)
}

/// Parses an SNR grid: `start:stop:step` (inclusive), a comma list, or one value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [_] => parse_list(spec),
        [start, stop, step] => {
            let (start, stop, step) = (
                parse_number(start)?,
                parse_number(stop)?,
                parse_number(step)?,
            );
            if !(start.is_finite() && stop.is_finite() && step.is_finite())
                || step <= 0.0
                || stop < start
            {
                return Err(Error::InvalidArgument(format!(
                    "grid {spec:?} needs finite start <= stop and step > 0"
                )));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(Error::InvalidArgument(format!(
            "grid {spec:?} must be a value, a comma list or start:stop:step"
        ))),
    }
}

/// Reads `key = value` lines (`#` starts a comment) into flag pairs.
fn read_config(path: &PathBuf) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "{}:{}: expected key = value",
                path.display(),
                lineno + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key == "config" {
            return Err(Error::InvalidArgument("config files cannot nest".into()));
        }
        pairs.push((key, value.trim().to_string()));
    }
    Ok(pairs)
}

fn find_config(args: &[String]) -> Option<PathBuf> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn has_flag(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_value = format!("--{key}=");
    args.iter()
        .any(|a| *a == flag || a.starts_with(&with_value))
}

/// Inserts config-file settings after the subcommand for every flag the user
/// did not give, so explicit flags take precedence.
fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    if args.len() < 2 {
        return Ok(args);
    }
    let mut extra = Vec::new();
    for (key, value) in read_config(&path)? {
        if has_flag(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => extra.push(format!("--{key}={value}")),
        }
    }
    let mut merged = args[..2].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[2..]);
    Ok(merged)
}

fn theory_point(delta: f64, snr_db: f64, method: Method) -> Result<TheoryPoint> {
    let snr = 10f64.powf(snr_db / 10.0);
    let mut point = predict_pe(delta, snr)?;
    if method == Method::Minimize && snr.is_finite() {
        let tau = solve_tau_star(delta, 1.0 / snr, TauMethod::Minimize, TAU_TOL)?;
        point.tau_star = tau;
        point.pe = crate::theory::gauss::q_function(1.0 / tau);
    }
    Ok(point)
}

fn experiment(
    delta: f64,
    snr_db: f64,
    trial: &TrialArgs,
    path: PathArg,
) -> Result<ExperimentConfig> {
    let shape = make_shape(trial.n, delta, snr_db)?;
    let mut cfg = ExperimentConfig::new(shape, trial.trials, trial.seed);
    cfg.solver_tol = trial.tol;
    cfg.force_all_ones_signal = trial.all_ones;
    cfg.path = match path {
        PathArg::Po => SimPath::Po,
        PathArg::Ao => SimPath::Ao,
    };
    Ok(cfg)
}

/// Rows report the SNR as requested rather than the dB value recomputed
/// from the linear SNR, which can differ in the last digit.
fn theory_row(point: &TheoryPoint, snr_db: f64) -> ComparisonRow {
    ComparisonRow {
        snr_db: Some(snr_db),
        ..ComparisonRow::from_theory(point)
    }
}

/// Simulation row; theory columns stay empty below the recovery threshold.
fn simulation_row(summary: &TrialSummary, delta: f64, snr_db: f64) -> Result<ComparisonRow> {
    match theory_point(delta, snr_db, Method::FixedPoint) {
        Ok(point) => compare_to_theory(summary, &point).map(|row| ComparisonRow {
            snr_db: Some(snr_db),
            ..row
        }),
        Err(Error::UnsupportedRegime { .. }) => Ok(ComparisonRow {
            snr_db: Some(snr_db),
            delta: Some(delta),
            n: Some(summary.shape.n),
            trials: Some(summary.trials),
            ber_mean: Some(summary.ber_mean),
            ber_ci_lo: Some(summary.ci95.0),
            ber_ci_hi: Some(summary.ci95.1),
            ..Default::default()
        }),
        Err(e) => Err(e),
    }
}

fn report(summary: &TrialSummary, err: &mut dyn Write) -> Result<()> {
    if summary.excluded > 0 || summary.clamp_or_nonconverged > 0 {
        writeln!(
            err,
            "warning: {} of {} trials excluded, {} clamped or non-converged",
            summary.excluded, summary.trials, summary.clamp_or_nonconverged
        )?;
    }
    if summary.path == SimPath::Ao && summary.tau_hat.len() > 1 {
        let (mean, se) = crate::montecarlo::mean_and_stderr(&summary.tau_hat);
        let sd = se * (summary.tau_hat.len() as f64).sqrt();
        writeln!(
            err,
            "tau_hat mean {mean:.6} sd {sd:.6} over {} samples",
            summary.tau_hat.len()
        )?;
    }
    Ok(())
}

fn sorted_grid(deltas: &[f64], snrs: &[f64]) -> Vec<(f64, f64)> {
    let mut grid: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| snrs.iter().map(move |&s| (d, s)))
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    grid
}

/// Runs a parsed command and returns the rendered table.
fn execute(command: &Command, err: &mut dyn Write) -> Result<String> {
    match command {
        Command::Predict(args) => {
            let grid = sorted_grid(&parse_list(&args.delta)?, &parse_grid(&args.snr_db)?);
            let rows = grid
                .iter()
                .map(|&(d, s)| theory_point(d, s, args.method).map(|p| theory_row(&p, s)))
                .collect::<Result<Vec<_>>>()?;
            Ok(comparison_table(&rows, args.output.format))
        }
        Command::Simulate(args) | Command::Ao(args) => {
            let path = if matches!(command, Command::Ao(_)) {
                PathArg::Ao
            } else {
                PathArg::Po
            };
            let summary = run_trials(&experiment(args.delta, args.snr_db, &args.trial, path)?)?;
            report(&summary, err)?;
            let row = simulation_row(&summary, args.delta, args.snr_db)?;
            Ok(comparison_table(&[row], args.output.format))
        }
        Command::Sweep(args) => {
            let grid = sorted_grid(&parse_list(&args.delta)?, &parse_grid(&args.snr_db)?);
            let mut rows = Vec::with_capacity(grid.len());
            for (d, s) in grid {
                if args.theory_only {
                    rows.push(theory_row(&theory_point(d, s, Method::FixedPoint)?, s));
                    continue;
                }
                log::info!("sweep point delta {d} snr {s} dB");
                let summary = run_trials(&experiment(d, s, &args.trial, args.path)?)?;
                report(&summary, err)?;
                rows.push(simulation_row(&summary, d, s)?);
            }
            Ok(comparison_table(&rows, args.output.format))
        }
        Command::Independence(args) => {
            let cfg = experiment(args.delta, args.snr_db, &args.trial, args.path)?;
            let stats = joint_error_stats(&cfg, args.k, args.subsets)?;
            let header = [
                "k",
                "delta",
                "snr_db",
                "n",
                "trials",
                "subsets",
                "joint_error_freq",
                "stderr",
                "independence_prediction",
                "ber_mean",
            ];
            let row = vec![
                Cell::Int(stats.k as u64),
                Cell::Num(args.delta),
                Cell::Num(args.snr_db),
                Cell::Int(args.trial.n as u64),
                Cell::Int(stats.trials_used as u64),
                Cell::Int(stats.subsets_sampled as u64),
                Cell::Num(stats.joint_error_freq),
                Cell::Num(stats.stderr),
                stats.independence_prediction.into(),
                Cell::Num(stats.ber_mean),
            ];
            Ok(render_table(&header, &[row], args.output.format))
        }
        Command::Gap(args) => {
            let rows = parse_list(&args.delta)?
                .into_iter()
                .map(|d| Ok(vec![Cell::Num(d), Cell::Num(snr_gap_db(d)?)]))
                .collect::<Result<Vec<_>>>()?;
            Ok(render_table(
                &["delta", "gap_db"],
                &rows,
                args.output.format,
            ))
        }
    }
}

fn comparison_table(rows: &[ComparisonRow], format: Format) -> String {
    let cells: Vec<Vec<Cell>> = rows.iter().map(comparison_cells).collect();
    render_table(&COMPARISON_HEADER, &cells, format)
}

fn output_args(command: &Command) -> &OutputArgs {
    match command {
        Command::Predict(a) => &a.output,
        Command::Simulate(a) | Command::Ao(a) => &a.output,
        Command::Sweep(a) => &a.output,
        Command::Independence(a) => &a.output,
        Command::Gap(a) => &a.output,
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_argument_error() {
        EXIT_ARGUMENT
    } else {
        EXIT_NUMERICAL
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Data goes to `out` unless `--out` names a file.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_ARGUMENT
                }
            };
        }
    };
    let result = execute(&cli.command, err).and_then(|table| {
        match &output_args(&cli.command).out {
            Some(path) => fs::write(path, table)?,
            None => out.write_all(table.as_bytes())?,
        }
        Ok(())
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
#[cfg(feature = "parallel")]
pub fn configure_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={value:?}: expected a positive integer"),
    }
}

/// Without the `parallel` feature every run is sequential.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads() {
    if std::env::var_os(THREADS_ENV).is_some() {
        log::warn!("{THREADS_ENV} has no effect in a sequential build");
    }
}
