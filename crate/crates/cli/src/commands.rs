//! Pipelines behind each subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sna_core::bench::{make_dataset_scaled, RegressionSuite};
use sna_core::inversion::{ensemble_envelope, invert, DEDUP_THRESHOLD};
use sna_core::model::CpModel;
use sna_core::splines::SplineBasis1D;
use sna_core::training::{fit_supervised, Dataset, TrainConfig};
use sna_core::variational::{
    advection_diffusion, als_solve, burgers_weak_solve, heat_manufactured, poisson_nd, scaling_study, solution_error,
    Formulation, Profile1D, VariationalProblem,
};

use crate::args::{BenchmarkArgs, Cli, Command, FitArgs, GenDataArgs, InvertArgs, PlumeArgs, ScalingArgs, SolvePdeArgs, TrainArgs};
use crate::config::{PdeProblem, RunConfig, Suite};
use crate::error::{CliError, CliResult};
use crate::plot::{burgers_error_rows, emit_plot_data, PlotData};
use crate::report::Report;

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// A finished run: the report as written and the human summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub summary: String,
    pub out_dir: PathBuf,
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

/// Output directory that refuses to overwrite any of the run's inputs.
struct OutDir {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
}

impl OutDir {
    fn create(dir: &Path, inputs: &[PathBuf]) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        let inputs = inputs.iter().filter_map(|p| p.canonicalize().ok()).collect();
        Ok(Self { dir: dir.to_path_buf(), inputs })
    }

    fn file(&self, name: &str) -> CliResult<PathBuf> {
        let p = self.dir.join(name);
        if let Ok(c) = p.canonicalize() {
            if self.inputs.contains(&c) {
                return Err(CliError::Config(format!("refusing to overwrite input file {}", p.display())));
            }
        }
        Ok(p)
    }

    fn emit(&self, data: &PlotData, artifacts: &mut Vec<String>) -> CliResult<()> {
        // Check every target before writing any of them.
        for name in [
            crate::plot::SCALING_FILE,
            crate::plot::FRONTIER_FILE,
            crate::plot::RESIDUAL_FILE,
            crate::plot::ENSEMBLE_FILE,
            crate::plot::BURGERS_FILE,
        ] {
            self.file(name)?;
        }
        artifacts.extend(emit_plot_data(&self.dir, data)?);
        Ok(())
    }

    fn finish(&self, mut report: Report, mut artifacts: Vec<String>, summary: String) -> CliResult<Outcome> {
        let report_path = self.file(REPORT_FILE)?;
        let summary_path = self.file(SUMMARY_FILE)?;
        artifacts.push(SUMMARY_FILE.into());
        report.artifacts = artifacts;
        report.write(&report_path)?;
        std::fs::write(summary_path, &summary)?;
        Ok(Outcome { report, summary, out_dir: self.dir.clone() })
    }
}

fn require_file(what: &str, path: Option<PathBuf>, hint: &str) -> CliResult<PathBuf> {
    let p = path.ok_or_else(|| CliError::Config(format!("no {what} given; {hint}")))?;
    if !p.is_file() {
        return Err(CliError::missing_input(what, &p));
    }
    Ok(p)
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out, cli.out.clone());
    cfg.propagate_seed();
    let inputs: Vec<PathBuf> = cli.config.iter().cloned().collect();
    match &cli.command {
        Command::GenData(a) => gen_data(cfg, a, inputs),
        Command::Fit(a) => fit(cfg, a, inputs),
        Command::Invert(a) => invert_cmd(cfg, a, inputs),
        Command::SolvePde(a) => solve_pde(cfg, a, inputs),
        Command::Scaling(a) => scaling(cfg, a, inputs),
        Command::Benchmark(a) => benchmark(cfg, a, inputs),
    }
}

fn gen_data(mut cfg: RunConfig, a: &GenDataArgs, inputs: Vec<PathBuf>) -> CliResult<Outcome> {
    set(&mut cfg.data.generator, a.generator);
    set(&mut cfg.data.n_samples, a.n_samples);
    set(&mut cfg.data.noise_sigma, a.noise_sigma);
    set(&mut cfg.data.target_scaling, a.target_scaling);
    let generator = cfg.data.generator(cfg.seed);
    let out = OutDir::create(&cfg.out, &inputs)?;
    let data_path = out.file("data.csv")?;
    out.file("data.csv.meta.json")?;
    let start = Instant::now();
    let ds = make_dataset_scaled(&generator, cfg.data.target_scaling)?;
    let generation_time_s = start.elapsed().as_secs_f64();
    ds.save_csv(&data_path, Some(serde_json::to_value(&generator)?))?;
    let results = json!({
        "n_samples": ds.len(),
        "dims": ds.dims,
        "columns": ds.columns,
        "target_bounds": ds.target_bounds,
        "has_clean_targets": ds.y_clean.is_some(),
        "generation_time_s": generation_time_s,
    });
    let report = Report::new("gen-data", cfg.seed, json!({ "generator": generator, "target_scaling": cfg.data.target_scaling }), results)?;
    let summary = format!(
        "gen-data: {} samples of {} inputs written to {}\n",
        ds.len(),
        ds.dims,
        data_path.display()
    );
    out.finish(report, vec!["data.csv".into(), "data.csv.meta.json".into()], summary)
}

fn apply_train(t: &mut TrainConfig, a: &TrainArgs) {
    set(&mut t.optimiser, a.optimiser);
    set(&mut t.learning_rate, a.learning_rate);
    set(&mut t.max_epochs, a.max_epochs);
    set(&mut t.lbfgs_iters, a.lbfgs_iters);
    if a.batch_size.is_some() {
        t.batch_size = a.batch_size;
    }
    set(&mut t.l2_penalty, a.l2_penalty);
    set(&mut t.train_fraction, a.train_fraction);
}

fn fit(mut cfg: RunConfig, a: &FitArgs, mut inputs: Vec<PathBuf>) -> CliResult<Outcome> {
    set(&mut cfg.model.rank, a.model.rank);
    set(&mut cfg.model.cells, a.model.cells);
    set(&mut cfg.model.order, a.model.order);
    set(&mut cfg.model.activation, a.model.activation);
    apply_train(&mut cfg.train, &a.train);
    let path = require_file("dataset", a.data.clone().or(cfg.data.path.clone()), "pass --data or set [data] path")?;
    inputs.push(path.clone());
    let ds = Dataset::load_csv(&path)?;
    let m = &cfg.model;
    let bases = (0..ds.dims)
        .map(|_| SplineBasis1D::new(m.order, m.cells, (0.0, 1.0)))
        .collect::<sna_core::Result<Vec<_>>>()?;
    let model = CpModel::new(bases, m.rank, m.activation)?.with_init(cfg.seed);
    let out = OutDir::create(&cfg.out, &inputs)?;
    let model_path = out.file("model.json")?;
    let (trained, report) = fit_supervised(&model, &ds, &cfg.train)?;
    trained.save(&model_path)?;
    let mut artifacts = vec!["model.json".to_string()];
    out.emit(&PlotData { residual_history: Some(report.loss_history.clone()), ..Default::default() }, &mut artifacts)?;
    let mut results = serde_json::to_value(&report)?;
    if let Some(o) = results.as_object_mut() {
        o.remove("loss_history");
        o.insert("dims".into(), ds.dims.into());
        o.insert("target_bounds".into(), json!(ds.target_bounds));
    }
    let summary = format!(
        "fit: {} parameters, test R² {:.6}, test MSE {:.3e}, train MSE {:.3e} ({:.2} s)\n",
        report.parameter_count, report.test_r2, report.test_mse, report.final_train_mse, report.wall_time_s
    );
    let rep = Report::new("fit", cfg.seed, json!({ "data": path, "model": cfg.model, "train": cfg.train }), results)?;
    out.finish(rep, artifacts, summary)
}

fn invert_cmd(mut cfg: RunConfig, a: &InvertArgs, mut inputs: Vec<PathBuf>) -> CliResult<Outcome> {
    set(&mut cfg.inversion.n_seeds, a.n_seeds);
    set(&mut cfg.inversion.max_iters, a.max_iters);
    set(&mut cfg.inversion.target_tol, a.target_tol);
    let path = require_file("model file", a.model.clone().or(cfg.invert.model.clone()), "pass --model or set [invert] model")?;
    let target = a
        .target
        .or(cfg.invert.target)
        .ok_or_else(|| CliError::Config("no target given; pass --target or set [invert] target".into()))?;
    inputs.push(path.clone());
    let model = CpModel::load(&path)?;
    let out = OutDir::create(&cfg.out, &inputs)?;
    let res = invert(&model, target, &cfg.inversion)?;
    let envelope = ensemble_envelope(&res).ok();
    let worst = res
        .converged_flags
        .iter()
        .zip(&res.residuals)
        .filter(|(c, _)| **c)
        .fold(0.0f64, |m, (_, r)| m.max(r.abs()));
    let distinct = res.distinct(DEDUP_THRESHOLD).len();
    let mut artifacts = Vec::new();
    out.emit(&PlotData { inversion: Some((res.clone(), model.dims())), ..Default::default() }, &mut artifacts)?;
    let results = json!({
        "target": target,
        "n_seeds": res.solutions.len(),
        "n_converged": res.n_converged(),
        "n_distinct": distinct,
        "max_converged_residual": worst,
        "envelope": envelope,
        "wall_time_s": res.wall_time_s,
    });
    let summary = format!(
        "invert: {}/{} seeds converged to {target}, {distinct} distinct solutions ({:.1} ms)\n",
        res.n_converged(),
        res.solutions.len(),
        res.wall_time_s * 1e3
    );
    let rep = Report::new("invert", cfg.seed, json!({ "model": path, "target": target, "inversion": cfg.inversion }), results)?;
    out.finish(rep, artifacts, summary)
}

fn apply_plume(cfg: &mut RunConfig, a: &PlumeArgs) {
    let adv = &mut cfg.advection;
    if let Some(n) = a.n_space {
        adv.n_space = n;
        // Keep the default centre consistent with the new dimension.
        let mut c = adv.centre.clone();
        c.resize(n, 0.5);
        adv.centre = c;
    }
    set(&mut adv.omega, a.omega.clone());
    set(&mut adv.diffusivity, a.diffusivity.clone());
}

fn build_problem(cfg: &RunConfig, kind: PdeProblem) -> CliResult<VariationalProblem> {
    Ok(match kind {
        PdeProblem::AdvectionDiffusion => advection_diffusion(&cfg.advection)?,
        PdeProblem::Poisson => poisson_nd(cfg.poisson.dims, &cfg.poisson.modes, cfg.pde.formulation)?,
        PdeProblem::Heat => heat_manufactured(),
        PdeProblem::Burgers => {
            return Err(CliError::Config("the Burgers problem has no separable least-squares form; use solve-pde".into()))
        }
    })
}

fn problem_config(cfg: &RunConfig, kind: PdeProblem) -> serde_json::Value {
    match kind {
        PdeProblem::AdvectionDiffusion => json!({ "advection": cfg.advection }),
        PdeProblem::Poisson => json!({ "poisson": cfg.poisson, "formulation": cfg.pde.formulation }),
        PdeProblem::Heat => json!({}),
        PdeProblem::Burgers => json!({ "burgers": cfg.burgers }),
    }
}

#[derive(Serialize)]
struct SolutionExport<'a> {
    coordinates: &'a [sna_core::variational::problem::Coordinate],
    formulation: Formulation,
    /// The field is `model + Π lifting`.
    model: sna_core::model::ModelDocument,
    lifting: &'a Option<Vec<Profile1D>>,
}

fn solve_pde(mut cfg: RunConfig, a: &SolvePdeArgs, inputs: Vec<PathBuf>) -> CliResult<Outcome> {
    set(&mut cfg.pde.problem, a.problem);
    set(&mut cfg.pde.formulation, a.formulation);
    set(&mut cfg.pde.grid, a.grid);
    set(&mut cfg.pde.quadrature_per_dim, a.quadrature);
    set(&mut cfg.als.rank, a.rank);
    set(&mut cfg.als.resolution, a.resolution);
    set(&mut cfg.als.order, a.order);
    set(&mut cfg.als.max_sweeps, a.max_sweeps);
    set(&mut cfg.als.tikhonov_lambda, a.tikhonov_lambda);
    set(&mut cfg.burgers.n_x, a.n_x);
    set(&mut cfg.burgers.n_t, a.n_t);
    set(&mut cfg.burgers.t_end, a.t_end);
    set(&mut cfg.burgers.max_iters, a.max_iters);
    apply_plume(&mut cfg, &a.plume);
    let kind = cfg.pde.problem;
    let out = OutDir::create(&cfg.out, &inputs)?;
    let mut artifacts = Vec::new();
    if kind == PdeProblem::Burgers {
        let sol_path = out.file("burgers_solution.json")?;
        let trial = cfg.burgers.trial(Profile1D::Sine { frequency: 1.0 })?;
        let sol = burgers_weak_solve(trial, &cfg.burgers)?;
        let rows = burgers_error_rows(&sol.trial, sol.trial.t_end, cfg.pde.grid)?;
        let max_error = rows.iter().fold(0.0f64, |m, r| m.max(r.abs_error));
        let c = &sol.trial.coeffs;
        let export = json!({
            "u0": sol.trial.u0,
            "t_end": sol.trial.t_end,
            "n_x": sol.trial.n_x(),
            "n_t": sol.trial.n_t(),
            "coeffs": (0..c.nrows()).map(|i| c.row(i).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        });
        std::fs::write(&sol_path, serde_json::to_string_pretty(&export)?)?;
        artifacts.push("burgers_solution.json".into());
        out.emit(&PlotData { burgers_error: Some(rows), ..Default::default() }, &mut artifacts)?;
        let results = json!({
            "problem": kind,
            "parameter_count": sol.trial.parameter_count(),
            "residual": sol.residual,
            "initial_residual": sol.initial_residual,
            "iterations": sol.iterations,
            "converged": sol.converged,
            "grid": cfg.pde.grid,
            "max_abs_error": max_error,
            "wall_time_s": sol.wall_time_s,
        });
        let summary = format!(
            "solve-pde burgers: {} coefficients, weak residual {:.3e}, max error {:.3e} for t <= {} ({:.2} s)\n",
            sol.trial.parameter_count(),
            sol.residual,
            max_error,
            sol.trial.t_end,
            sol.wall_time_s
        );
        let rep = Report::new("solve-pde", cfg.seed, json!({ "problem": kind, "burgers": cfg.burgers, "grid": cfg.pde.grid }), results)?;
        return out.finish(rep, artifacts, summary);
    }
    let problem = build_problem(&cfg, kind)?;
    let sol_path = out.file("solution.json")?;
    let sol = als_solve(&problem, &cfg.als)?;
    let err = solution_error(&problem, &sol, cfg.pde.quadrature_per_dim, cfg.pde.mc_samples, cfg.seed)?;
    let export = SolutionExport {
        coordinates: &problem.coords,
        formulation: sol.formulation,
        model: sol.model.to_document(),
        lifting: &sol.lifting,
    };
    std::fs::write(&sol_path, serde_json::to_string_pretty(&export)?)?;
    artifacts.push("solution.json".into());
    out.emit(&PlotData { residual_history: Some(sol.residual_history.clone()), ..Default::default() }, &mut artifacts)?;
    let results = json!({
        "problem": kind,
        "dims": problem.dims(),
        "parameter_count": sol.model.parameter_count(),
        "sweeps_run": sol.sweeps_run,
        "final_functional": sol.residual_history.last(),
        "final_residual": sol.final_residual(),
        "error": err,
        "wall_time_s": sol.wall_time_s,
    });
    let summary = format!(
        "solve-pde {:?}: {} coordinates, {} parameters, {} sweeps, L2 error {:.3e} (relative {:.3e}) ({:.2} s)\n",
        kind,
        problem.dims(),
        sol.model.parameter_count(),
        sol.sweeps_run,
        err.l2,
        err.relative,
        sol.wall_time_s
    );
    let mut config = problem_config(&cfg, kind);
    config["problem"] = json!(kind);
    config["als"] = json!(cfg.als);
    config["quadrature_per_dim"] = json!(cfg.pde.quadrature_per_dim);
    config["mc_samples"] = json!(cfg.pde.mc_samples);
    let rep = Report::new("solve-pde", cfg.seed, config, results)?;
    out.finish(rep, artifacts, summary)
}

fn scaling(mut cfg: RunConfig, a: &ScalingArgs, inputs: Vec<PathBuf>) -> CliResult<Outcome> {
    set(&mut cfg.pde.problem, a.problem);
    let s = &mut cfg.scaling;
    set(&mut s.ranks, a.ranks.clone());
    set(&mut s.resolutions, a.resolutions.clone());
    set(&mut s.order, a.order);
    set(&mut s.max_sweeps, a.max_sweeps);
    set(&mut s.quadrature_per_dim, a.quadrature);
    set(&mut s.mc_samples, a.mc_samples);
    if a.cold_start {
        s.warm_start = false;
    }
    if s.ranks.is_empty() || s.resolutions.is_empty() || s.ranks.contains(&0) || s.resolutions.contains(&0) {
        return Err(CliError::Config("ranks and resolutions must be non-empty lists of positive integers".into()));
    }
    apply_plume(&mut cfg, &a.plume);
    let kind = cfg.pde.problem;
    let problem = build_problem(&cfg, kind)?;
    let out = OutDir::create(&cfg.out, &inputs)?;
    let table = scaling_study(&problem, &cfg.scaling)?;
    let mut artifacts = Vec::new();
    out.emit(&PlotData { scaling: Some(table.clone()), ..Default::default() }, &mut artifacts)?;
    let mut summary = format!("scaling {:?}: {} coordinates\n", kind, problem.dims());
    let _ = writeln!(summary, "{:>4} {:>4} {:>8} {:>12} {:>8}", "R", "C", "N", "error", "time_s");
    for r in &table.rows {
        let _ = writeln!(
            summary,
            "{:>4} {:>4} {:>8} {:>12.4e} {:>8.2}{}",
            r.rank,
            r.resolution,
            r.parameter_count,
            r.error,
            r.wall_time_s,
            r.failure.as_deref().map(|f| format!("  failed: {f}")).unwrap_or_default()
        );
    }
    for iso in &table.isolines {
        let _ = writeln!(summary, "isoline R={} over C={:?}: slope {}", iso.rank, iso.resolutions, fmt_opt(iso.slope));
    }
    let _ = writeln!(summary, "frontier slope {}", fmt_opt(table.frontier_slope));
    let mut config = problem_config(&cfg, kind);
    config["problem"] = json!(kind);
    config["scaling"] = json!(cfg.scaling);
    let rep = Report::new("scaling", cfg.seed, config, &table)?;
    out.finish(rep, artifacts, summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |s| format!("{s:.3}"))
}

fn benchmark(cfg: RunConfig, a: &BenchmarkArgs, inputs: Vec<PathBuf>) -> CliResult<Outcome> {
    let suite = a.suite.unwrap_or(cfg.benchmark.suite);
    let n_samples = a.n_samples.or(cfg.benchmark.n_samples);
    let names = match suite {
        Suite::All => vec![Suite::Borehole, Suite::SobolG, Suite::Witness, Suite::Burgers],
        s => vec![s],
    };
    let out = OutDir::create(&cfg.out, &inputs)?;
    let mut artifacts = Vec::new();
    let mut results = Vec::new();
    let mut configs = Vec::new();
    let mut summary = String::new();
    for s in names {
        let mut reg = match s {
            Suite::Borehole => RegressionSuite::borehole(cfg.seed),
            Suite::SobolG => RegressionSuite::sobol_g(cfg.seed),
            Suite::Witness => RegressionSuite::witness(cfg.seed),
            Suite::Burgers => {
                let trial = cfg.burgers.trial(Profile1D::Sine { frequency: 1.0 })?;
                let sol = burgers_weak_solve(trial, &cfg.burgers)?;
                let rows = burgers_error_rows(&sol.trial, sol.trial.t_end, cfg.pde.grid)?;
                let max_error = rows.iter().fold(0.0f64, |m, r| m.max(r.abs_error));
                out.emit(&PlotData { burgers_error: Some(rows), ..Default::default() }, &mut artifacts)?;
                let _ = writeln!(
                    summary,
                    "burgers: {} coefficients, max error {:.3e} for t <= {} ({:.2} s)",
                    sol.trial.parameter_count(),
                    max_error,
                    sol.trial.t_end,
                    sol.wall_time_s
                );
                configs.push(json!({ "suite": "burgers", "burgers": cfg.burgers, "grid": cfg.pde.grid }));
                results.push(json!({
                    "suite": "burgers",
                    "parameter_count": sol.trial.parameter_count(),
                    "max_abs_error": max_error,
                    "residual": sol.residual,
                    "iterations": sol.iterations,
                    "converged": sol.converged,
                    "wall_time_s": sol.wall_time_s,
                }));
                continue;
            }
            Suite::All => unreachable!("expanded above"),
        };
        if let Some(n) = n_samples {
            reg.set_n_samples(n);
        }
        apply_train(&mut reg.train, &a.train);
        let model_name = format!("{}_model.json", reg.name);
        let model_path = out.file(&model_name)?;
        let (model, o) = reg.run()?;
        model.save(&model_path)?;
        artifacts.push(model_name);
        let _ = writeln!(
            summary,
            "{}: {} parameters, test R² {:.6}, test MSE {:.3e} ({:.2} s fit)",
            reg.name, o.fit.parameter_count, o.fit.test_r2, o.fit.test_mse, o.fit.wall_time_s
        );
        configs.push(serde_json::to_value(&reg)?);
        results.push(json!({
            "suite": reg.name,
            "parameter_count": o.fit.parameter_count,
            "n_samples": o.n_samples,
            "n_train": o.fit.n_train,
            "n_test": o.fit.n_test,
            "test_r2": o.fit.test_r2,
            "test_mse": o.fit.test_mse,
            "test_mse_observed": o.fit.test_mse_observed,
            "final_train_mse": o.fit.final_train_mse,
            "epochs_run": o.fit.epochs_run,
            "lbfgs_iterations": o.fit.lbfgs_iterations,
            "generation_time_s": o.generation_time_s,
            "wall_time_s": o.fit.wall_time_s,
        }));
    }
    let rep = Report::new("benchmark", cfg.seed, json!({ "suites": configs }), json!({ "suites": results }))?;
    out.finish(rep, artifacts, summary)
}
