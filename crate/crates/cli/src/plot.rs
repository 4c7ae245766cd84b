//! Delimited-text exports for plotting, one file per figure family.
//!
//! | file                     | columns                                                   |
//! |--------------------------|-----------------------------------------------------------|
//! | `scaling.csv`            | `R, C, N, error, wall_time_s, relative_error, mc_error, functional, sweeps, isoline_slope, frontier_slope, failure` |
//! | `frontier.csv`           | `N, error, R, C`                                          |
//! | `residual_history.csv`   | `step, value`                                             |
//! | `inversion_ensemble.csv` | `seed, converged, outcome, iterations, residual, x0, x1, ...` |
//! | `burgers_error.csv`      | `x, t, approx, exact, abs_error`                          |
//!
//! Floats are written in shortest round-trip form, so parsing a file back
//! reproduces the in-memory values exactly.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sna_core::inversion::{InversionResult, SeedOutcome};
use sna_core::variational::{burgers_characteristics_oracle, ScalingTable, SpectralTrial};

use crate::error::{CliError, CliResult};

pub const SCALING_FILE: &str = "scaling.csv";
pub const FRONTIER_FILE: &str = "frontier.csv";
pub const RESIDUAL_FILE: &str = "residual_history.csv";
pub const ENSEMBLE_FILE: &str = "inversion_ensemble.csv";
pub const BURGERS_FILE: &str = "burgers_error.csv";

pub const SCALING_HEADER: [&str; 12] = [
    "R",
    "C",
    "N",
    "error",
    "wall_time_s",
    "relative_error",
    "mc_error",
    "functional",
    "sweeps",
    "isoline_slope",
    "frontier_slope",
    "failure",
];
pub const FRONTIER_HEADER: [&str; 4] = ["N", "error", "R", "C"];
pub const RESIDUAL_HEADER: [&str; 2] = ["step", "value"];
pub const BURGERS_HEADER: [&str; 5] = ["x", "t", "approx", "exact", "abs_error"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCsvRow {
    #[serde(rename = "R")]
    pub rank: usize,
    #[serde(rename = "C")]
    pub resolution: usize,
    #[serde(rename = "N")]
    pub parameter_count: usize,
    pub error: f64,
    pub wall_time_s: f64,
    pub relative_error: f64,
    pub mc_error: f64,
    pub functional: f64,
    pub sweeps: usize,
    pub isoline_slope: Option<f64>,
    pub frontier_slope: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    #[serde(rename = "N")]
    pub parameter_count: usize,
    pub error: f64,
    #[serde(rename = "R")]
    pub rank: usize,
    #[serde(rename = "C")]
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub step: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub seed: usize,
    pub converged: bool,
    pub outcome: SeedOutcome,
    pub iterations: usize,
    pub residual: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersErrorRow {
    pub x: f64,
    pub t: f64,
    pub approx: f64,
    pub exact: f64,
    pub abs_error: f64,
}

pub fn scaling_rows(table: &ScalingTable) -> Vec<ScalingCsvRow> {
    table
        .rows
        .iter()
        .map(|r| ScalingCsvRow {
            rank: r.rank,
            resolution: r.resolution,
            parameter_count: r.parameter_count,
            error: r.error,
            wall_time_s: r.wall_time_s,
            relative_error: r.relative_error,
            mc_error: r.mc_error,
            functional: r.functional,
            sweeps: r.sweeps,
            isoline_slope: table.isolines.iter().find(|i| i.rank == r.rank).and_then(|i| i.slope),
            frontier_slope: table.frontier_slope,
            failure: r.failure.clone(),
        })
        .collect()
}

pub fn frontier_rows(table: &ScalingTable) -> Vec<FrontierRow> {
    table
        .frontier
        .iter()
        .map(|&i| {
            let r = &table.rows[i];
            FrontierRow { parameter_count: r.parameter_count, error: r.error, rank: r.rank, resolution: r.resolution }
        })
        .collect()
}

pub fn residual_rows(history: &[f64]) -> Vec<ResidualRow> {
    history.iter().enumerate().map(|(step, &value)| ResidualRow { step, value }).collect()
}

pub fn ensemble_rows(result: &InversionResult) -> Vec<EnsembleRow> {
    (0..result.solutions.len())
        .map(|i| EnsembleRow {
            seed: i,
            converged: result.converged_flags[i],
            outcome: result.outcomes[i],
            iterations: result.iterations[i],
            residual: result.residuals[i],
            x: result.solutions[i].clone(),
        })
        .collect()
}

/// Approximation, oracle and error on an `n × n` grid over `[0,1] × [0, t_max]`.
pub fn burgers_error_rows(trial: &SpectralTrial, t_max: f64, n: usize) -> CliResult<Vec<BurgersErrorRow>> {
    if n < 2 {
        return Err(CliError::Config("Burgers error grid needs at least 2 points per axis".into()));
    }
    let u0 = |x: f64| trial.u0.value(x);
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        let t = t_max * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let x = j as f64 / (n - 1) as f64;
            let exact = burgers_characteristics_oracle(u0, x, t)?;
            let approx = trial.eval(x, t);
            rows.push(BurgersErrorRow { x, t, approx, exact, abs_error: (approx - exact).abs() });
        }
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

pub fn write_scaling(path: &Path, rows: &[ScalingCsvRow]) -> CliResult<()> {
    write_rows(path, &SCALING_HEADER, rows)
}

pub fn read_scaling(path: &Path) -> CliResult<Vec<ScalingCsvRow>> {
    read_rows(path)
}

pub fn write_frontier(path: &Path, rows: &[FrontierRow]) -> CliResult<()> {
    write_rows(path, &FRONTIER_HEADER, rows)
}

pub fn read_frontier(path: &Path) -> CliResult<Vec<FrontierRow>> {
    read_rows(path)
}

pub fn write_residuals(path: &Path, rows: &[ResidualRow]) -> CliResult<()> {
    write_rows(path, &RESIDUAL_HEADER, rows)
}

pub fn read_residuals(path: &Path) -> CliResult<Vec<ResidualRow>> {
    read_rows(path)
}

pub fn write_burgers(path: &Path, rows: &[BurgersErrorRow]) -> CliResult<()> {
    write_rows(path, &BURGERS_HEADER, rows)
}

pub fn read_burgers(path: &Path) -> CliResult<Vec<BurgersErrorRow>> {
    read_rows(path)
}

fn outcome_name(o: SeedOutcome) -> String {
    match serde_json::to_value(o) {
        Ok(serde_json::Value::String(s)) => s,
        _ => format!("{o:?}"),
    }
}

/// `dims` sets the coordinate columns when `rows` is empty.
pub fn write_ensemble(path: &Path, rows: &[EnsembleRow], dims: usize) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["seed", "converged", "outcome", "iterations", "residual"].map(String::from).to_vec();
    header.extend((0..dims).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for r in rows {
        if r.x.len() != dims {
            return Err(CliError::Runtime(format!("ensemble row has {} coordinates, expected {dims}", r.x.len())));
        }
        let mut rec = vec![
            r.seed.to_string(),
            r.converged.to_string(),
            outcome_name(r.outcome),
            r.iterations.to_string(),
            r.residual.to_string(),
        ];
        rec.extend(r.x.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> CliResult<Vec<EnsembleRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let dims = r.headers()?.len().saturating_sub(5);
    let bad = |what: &str| CliError::Runtime(format!("{}: malformed {what}", path.display()));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("row"));
        let num = |i: usize| -> CliResult<f64> { field(i)?.parse().map_err(|_| bad("number")) };
        let outcome = crate::config::parse_enum(field(2)?).map_err(|_| bad("outcome"))?;
        rows.push(EnsembleRow {
            seed: field(0)?.parse().map_err(|_| bad("seed"))?,
            converged: field(1)?.parse().map_err(|_| bad("flag"))?,
            outcome,
            iterations: field(3)?.parse().map_err(|_| bad("iteration count"))?,
            residual: num(4)?,
            x: (0..dims).map(|k| num(5 + k)).collect::<CliResult<Vec<f64>>>()?,
        });
    }
    Ok(rows)
}

/// Everything a run can plot; absent families write no file.
#[derive(Debug, Clone, Default)]
pub struct PlotData {
    pub scaling: Option<ScalingTable>,
    pub residual_history: Option<Vec<f64>>,
    pub inversion: Option<(InversionResult, usize)>,
    pub burgers_error: Option<Vec<BurgersErrorRow>>,
}

/// Write one file per present figure family into `dir`; returns the file names.
pub fn emit_plot_data(dir: &Path, data: &PlotData) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    if let Some(t) = &data.scaling {
        write_scaling(&dir.join(SCALING_FILE), &scaling_rows(t))?;
        write_frontier(&dir.join(FRONTIER_FILE), &frontier_rows(t))?;
        written.extend([SCALING_FILE.to_string(), FRONTIER_FILE.to_string()]);
    }
    if let Some(h) = &data.residual_history {
        write_residuals(&dir.join(RESIDUAL_FILE), &residual_rows(h))?;
        written.push(RESIDUAL_FILE.into());
    }
    if let Some((res, dims)) = &data.inversion {
        write_ensemble(&dir.join(ENSEMBLE_FILE), &ensemble_rows(res), *dims)?;
        written.push(ENSEMBLE_FILE.into());
    }
    if let Some(rows) = &data.burgers_error {
        write_burgers(&dir.join(BURGERS_FILE), rows)?;
        written.push(BURGERS_FILE.into());
    }
    Ok(written)
}
