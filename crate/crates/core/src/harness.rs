//! Batch run orchestration and series reports.
//!
//! A run directory holds `config.toml`, `series.csv`, `monitor.log`,
//! `snapshot_<step>.csv`, `inequalities_initial.csv`, `inequalities_final.csv`,
//! `summary.json` and, on failure, `failure.json`. Nothing time-dependent is
//! written, so identical configs give byte-identical directories.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowState, MonitorReport, RunOptions, Termination, CONVERGED_DGAMMA_SQ};
use crate::geometry::Ambient;
use crate::numeric::{linear_fit, LinearFit};
use crate::quantities::{
    check_trend, evaluate, inequality_suite, write_inequality_csv, InequalityReport, Trend,
    CUMULATIVE_TOL, PER_STEP_TOL,
};

/// Fixed leading columns of `series.csv`.
pub const SERIES_COLUMNS: [&str; 14] = [
    "t",
    "tau",
    "rho_min",
    "rho_max",
    "dgamma_sq_max",
    "Q_min",
    "Q_max",
    "u_min",
    "u_max",
    "f_min",
    "f_max",
    "kappa_max",
    "area",
    "volume",
];
/// Prefix of inequality-margin columns.
pub const MARGIN_PREFIX: &str = "margin:";
/// Exit status of a run stopped by a monitor or numerical failure.
pub const EXIT_FAILURE_RECORD: i32 = 2;

/// Machine-readable record written to `failure.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRecord {
    /// `monitor`, `degenerate`, `admissibility` or `domain`.
    pub kind: String,
    pub message: String,
    pub t: Option<f64>,
    pub node: Option<usize>,
    /// Step of the last series row written before the failure.
    pub last_row_step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub steps: usize,
    pub t: f64,
    pub rows: usize,
    pub final_report: MonitorReport,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed(RunSummary),
    Failed(FailureRecord),
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed(_) => 0,
            RunStatus::Failed(_) => EXIT_FAILURE_RECORD,
        }
    }
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

struct Writers {
    series: csv::Writer<BufWriter<File>>,
    log: BufWriter<File>,
}

/// Executes the configured run and writes its artifacts to `config.out_dir`.
/// `Err` is reserved for I/O and configuration problems; numerical failures
/// are reported through [`RunStatus::Failed`] and `failure.json`.
pub fn run_command(config: &RunConfig) -> Result<RunStatus> {
    let spec = &config.flow;
    spec.validate()?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    let failure_path = dir.join("failure.json");
    if failure_path.exists() {
        fs::remove_file(&failure_path)?;
    }

    let keys = config.quantity_keys();
    let with_inequalities = config.inequalities && spec.ambient == Ambient::Euclidean;
    let mut out = Writers {
        series: csv::Writer::from_writer(BufWriter::new(File::create(dir.join("series.csv"))?)),
        log: BufWriter::new(File::create(dir.join("monitor.log"))?),
    };
    writeln!(out.log, "config: {} {} alpha={:?} beta={:?} f={} grid={} body={}", spec.ambient, spec.mode, spec.alpha, spec.beta, spec.f, spec.grid, spec.body)?;
    if config.inequalities && !with_inequalities {
        writeln!(out.log, "inequality suite skipped: Euclidean ambient only")?;
    }

    let mut margin_labels: Vec<String> = Vec::new();
    let mut rows = 0usize;
    let mut last_row_step = 0usize;
    let mut io_error: Option<Error> = None;
    let options = RunOptions {
        cadence: config.cadence,
        max_steps: config.max_steps.unwrap_or(usize::MAX),
        seed: config.seed,
        stop_on_convergence: config.stop_on_convergence,
    };

    let mut observer = |state: &FlowState, report: &MonitorReport| -> Result<()> {
        let margins = if with_inequalities {
            Some(inequality_suite(&state.geometry, &config.inequality_iotas)?)
        } else {
            None
        };
        if rows == 0 {
            if let Some(m) = &margins {
                margin_labels = m.iter().map(InequalityReport::label).collect();
                write_inequality_csv(m, File::create(dir.join("inequalities_initial.csv"))?)?;
            }
            let mut header: Vec<String> = SERIES_COLUMNS.iter().map(|s| s.to_string()).collect();
            header.extend(keys.iter().map(|k| k.to_string()));
            header.extend(margin_labels.iter().map(|l| format!("{MARGIN_PREFIX}{l}")));
            out.series.write_record(&header).map_err(csv_error)?;
        }
        let write = |out: &mut Writers| -> Result<()> {
            let volume = state.geometry.volume().unwrap_or(f64::NAN);
            let fixed = [
                report.t,
                report.tau,
                report.rho_min,
                report.rho_max,
                report.dgamma_sq_max,
                report.q_min,
                report.q_max,
                report.u_min,
                report.u_max,
                report.f_min,
                report.f_max,
                report.kappa_max,
                report.area,
                volume,
            ];
            let mut line: Vec<String> = fixed.iter().map(|&v| cell(v)).collect();
            line.extend(keys.iter().map(|&k| cell(evaluate(k, &state.geometry).unwrap_or(f64::NAN))));
            if let Some(m) = &margins {
                line.extend(m.iter().map(|r| if r.applicable { cell(r.margin) } else { String::new() }));
            }
            out.series.write_record(&line).map_err(csv_error)?;
            Ok(writeln!(
                out.log,
                "step={} t={:e} dt={:e} rho=[{:e},{:e}] dgamma_sq_max={:e} kappa_max={:e} area_rate_residual={:e}",
                report.step, report.t, report.dt, report.rho_min, report.rho_max, report.dgamma_sq_max, report.kappa_max, report.area_rate_residual
            )?)
        };
        if let Err(e) = write(&mut out) {
            io_error.get_or_insert(e);
        }
        if config.snapshot_interval > 0 && state.step % config.snapshot_interval == 0 {
            let f = File::create(dir.join(format!("snapshot_{}.csv", state.step)))?;
            state.geometry.write_snapshot(BufWriter::new(f))?;
        }
        rows += 1;
        last_row_step = state.step;
        Ok(())
    };

    let result = run_flow(spec, options, &mut observer);
    if let Some(e) = io_error {
        return Err(e);
    }
    let status = match result {
        Ok(outcome) => {
            if with_inequalities {
                let reports = inequality_suite(&outcome.final_state.geometry, &config.inequality_iotas)?;
                write_inequality_csv(&reports, File::create(dir.join("inequalities_final.csv"))?)?;
            }
            let final_report = outcome.reports.last().cloned().expect("the initial row is always reported");
            writeln!(out.log, "termination: {:?} at step {} t={:e}", outcome.termination, outcome.final_state.step, outcome.final_state.t)?;
            let summary = RunSummary {
                termination: outcome.termination,
                steps: outcome.final_state.step,
                t: outcome.final_state.t,
                rows,
                final_report,
            };
            fs::write(dir.join("summary.json"), to_json(&summary)?)?;
            RunStatus::Completed(summary)
        }
        Err(Error::Io(e)) => return Err(Error::Io(e)),
        Err(Error::Config(m)) => return Err(Error::Config(m)),
        Err(e) => {
            let (kind, t, node) = match &e {
                Error::Monitor { t, reason } => ("monitor", Some(*t), node_of(reason)),
                Error::Degenerate { node, .. } => ("degenerate", None, Some(*node)),
                Error::Admissibility(_) => ("admissibility", None, None),
                _ => ("domain", None, None),
            };
            let record = FailureRecord {
                kind: kind.to_owned(),
                message: e.to_string(),
                t,
                node,
                last_row_step,
            };
            writeln!(out.log, "failure: {}", record.message)?;
            fs::write(&failure_path, to_json(&record)?)?;
            RunStatus::Failed(record)
        }
    };
    out.series.flush()?;
    out.log.flush()?;
    Ok(status)
}

/// Node index from a `node <k>: ...` monitor reason.
fn node_of(reason: &str) -> Option<usize> {
    reason.strip_prefix("node ")?.split(':').next()?.parse().ok()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// A parsed `series.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub columns: Vec<String>,
    /// Row-major values; empty cells are NaN.
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn read(path: &Path) -> Result<Series> {
        let reader = BufReader::new(File::open(path)?);
        Self::parse(reader).map_err(|e| match e {
            Error::Parse { message, line, key } => Error::Parse {
                message: format!("{}: {message}", path.display()),
                line,
                key,
            },
            other => other,
        })
    }

    pub fn parse(input: impl Read) -> Result<Series> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let at = |e: csv::Error| {
            let line = e.position().map(|p| p.line() as usize);
            Error::Parse { message: e.to_string(), line, key: None }
        };
        let columns: Vec<String> = reader.headers().map_err(at)?.iter().map(str::to_owned).collect();
        if columns.len() < SERIES_COLUMNS.len() || columns[..SERIES_COLUMNS.len()] != SERIES_COLUMNS {
            return Err(Error::Parse {
                message: format!("header must start with {}", SERIES_COLUMNS.join(",")),
                line: Some(1),
                key: None,
            });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(at)?;
            let line = record.position().map(|p| p.line() as usize);
            let row = record
                .iter()
                .zip(&columns)
                .map(|(c, name)| {
                    if c.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        c.parse::<f64>().map_err(|_| Error::Parse {
                            message: format!("invalid number `{c}`"),
                            line,
                            key: Some(name.clone()),
                        })
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Series { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Classification of one tracked quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantityVerdict {
    pub key: String,
    /// The strongest trend that holds, if any.
    pub trend: Option<Trend>,
    /// Largest drift relative to the first value.
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesReport {
    pub path: PathBuf,
    pub quantities: Vec<QuantityVerdict>,
    /// Fit of `ln dgamma_sq_max` against `t` over the last half of the rows.
    pub decay: Option<LinearFit>,
    /// Final margins; NaN where inapplicable.
    pub margins: Vec<(String, f64)>,
}

/// Invariant if the drift is within the cumulative tolerance, otherwise the
/// monotone trend that holds.
pub fn classify_series(values: &[f64]) -> (Option<Trend>, f64) {
    let values: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let inv = check_trend(&values, Trend::Invariant, PER_STEP_TOL, CUMULATIVE_TOL);
    if inv.holds {
        return (Some(Trend::Invariant), inv.cumulative);
    }
    for trend in [Trend::NonIncreasing, Trend::NonDecreasing] {
        if check_trend(&values, trend, PER_STEP_TOL, CUMULATIVE_TOL).holds {
            return (Some(trend), inv.cumulative);
        }
    }
    (None, inv.cumulative)
}

/// Exponential decay fit of `ln y` over the last half of the decay phase.
/// The phase ends at the first sample below [`CONVERGED_DGAMMA_SQ`]; later
/// samples sit on the round-off floor of `|Dγ|²` and carry no decay signal.
pub fn decay_fit(t: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = t.len().min(y.len());
    let end = y[..n].iter().position(|&v| v < CONVERGED_DGAMMA_SQ).map_or(n, |i| i + 1);
    let t_stop = t[..end].last().copied()?;
    let t_start = t[0] + 0.5 * (t_stop - t[0]);
    let (xs, ys): (Vec<f64>, Vec<f64>) = t[..end]
        .iter()
        .zip(&y[..end])
        .filter(|(x, _)| **x >= t_start)
        .filter(|(x, v)| x.is_finite() && **v > 0.0 && v.is_finite())
        .map(|(x, v)| (*x, v.ln()))
        .unzip();
    linear_fit(&xs, &ys)
}

pub fn analyze_series(path: &Path, series: &Series) -> SeriesReport {
    let fixed = SERIES_COLUMNS.len();
    let mut quantities = Vec::new();
    let mut margins = Vec::new();
    for (i, name) in series.columns.iter().enumerate().skip(fixed) {
        let values: Vec<f64> = series.rows.iter().map(|r| r[i]).collect();
        if let Some(label) = name.strip_prefix(MARGIN_PREFIX) {
            margins.push((label.to_owned(), values.last().copied().unwrap_or(f64::NAN)));
        } else {
            let (trend, drift) = classify_series(&values);
            quantities.push(QuantityVerdict { key: name.clone(), trend, drift });
        }
    }
    let t = series.column("t").unwrap_or_default();
    let d = series.column("dgamma_sq_max").unwrap_or_default();
    SeriesReport {
        path: path.to_owned(),
        quantities,
        decay: decay_fit(&t, &d),
        margins,
    }
}

impl SeriesReport {
    pub fn render(&self) -> String {
        let mut s = format!("series {}\n", self.path.display());
        for q in &self.quantities {
            let verdict = q.trend.map_or("not monotone".to_owned(), |t| t.to_string());
            let _ = writeln!(s, "  {:<24} {:<16} drift={:.3e}", q.key, verdict, q.drift);
        }
        match self.decay {
            Some(fit) => {
                let _ = writeln!(s, "  dgamma_sq_max decay rate={:.6e} R2={:.6}", -fit.slope, fit.r_squared);
            }
            None => {
                let _ = writeln!(s, "  dgamma_sq_max decay: not enough positive samples");
            }
        }
        let applicable: Vec<&(String, f64)> = self.margins.iter().filter(|(_, m)| m.is_finite()).collect();
        if !applicable.is_empty() {
            let min = applicable.iter().map(|(_, m)| *m).fold(f64::INFINITY, f64::min);
            let _ = writeln!(s, "  final margins ({} applicable, min {:.3e}):", applicable.len(), min);
            for (label, m) in applicable {
                let _ = writeln!(s, "    {label:<44} {m:.3e}");
            }
        }
        s
    }
}

/// Reads and analyzes each series file; the text is the concatenated reports.
pub fn report_command(paths: &[PathBuf]) -> Result<(Vec<SeriesReport>, String)> {
    let mut reports = Vec::new();
    let mut text = String::new();
    for p in paths {
        let series = Series::read(p)?;
        let r = analyze_series(p, &series);
        text.push_str(&r.render());
        reports.push(r);
    }
    Ok((reports, text))
}
