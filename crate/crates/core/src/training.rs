//! Supervised fitting of separable models on tabular data.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Activation, BasisCache, CpModel, InteractionModel};
use crate::optim::{lbfgs, Adam, AdamConfig, LbfgsConfig};
use crate::rng::substream;
use crate::splines::{OutOfDomain, SplineBasis1D};

/// Points per parallel work unit. Fixed so that reductions are identical
/// for any thread count.
const CHUNK: usize = 1024;

/// Tabular data with inputs scaled to `[0, 1]` and min-max scaled targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dims: usize,
    /// Row-major `n × dims`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Noise-free targets on the same scale as `y`, when known.
    pub y_clean: Option<Vec<f64>>,
    pub feature_bounds: Vec<(f64, f64)>,
    pub target_bounds: (f64, f64),
    pub columns: Vec<String>,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetMeta {
    dims: usize,
    feature_bounds: Vec<(f64, f64)>,
    target_bounds: (f64, f64),
    columns: Vec<String>,
    split_seed: u64,
    #[serde(default)]
    generator: Option<serde_json::Value>,
}

/// How raw targets are mapped before fitting. Every choice is an affine map
/// recorded in `Dataset::target_bounds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScaling {
    /// `(y − min) / (max − min)`.
    #[default]
    MinMax,
    /// `y / max|y|`; keeps product-form targets exactly representable.
    MaxAbs,
    None,
}

fn min_max(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn scale_to_unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

impl Dataset {
    /// Build from raw values. Features are scaled by `feature_bounds` (sample
    /// extremes when `None`), targets according to `target_scaling`.
    pub fn from_raw(
        dims: usize,
        x_raw: &[f64],
        y_raw: &[f64],
        y_clean_raw: Option<&[f64]>,
        feature_bounds: Option<Vec<(f64, f64)>>,
        target_scaling: TargetScaling,
        split_seed: u64,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(invalid("dataset needs at least one feature"));
        }
        let n = y_raw.len();
        if x_raw.len() != n * dims {
            return Err(Error::LengthMismatch(x_raw.len(), n * dims));
        }
        if let Some(c) = y_clean_raw {
            if c.len() != n {
                return Err(Error::LengthMismatch(c.len(), n));
            }
        }
        if x_raw.iter().chain(y_raw).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset values".into()));
        }
        let fb = match feature_bounds {
            Some(b) => {
                if b.len() != dims {
                    return Err(Error::DimensionMismatch { expected: dims, got: b.len() });
                }
                b
            }
            None => (0..dims)
                .map(|i| min_max(x_raw.iter().skip(i).step_by(dims).copied()))
                .collect(),
        };
        let tb = match target_scaling {
            _ if n == 0 => (0.0, 1.0),
            TargetScaling::MinMax => min_max(y_raw.iter().copied()),
            TargetScaling::MaxAbs => {
                let m = y_raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (0.0, if m > 0.0 { m } else { 1.0 })
            }
            TargetScaling::None => (0.0, 1.0),
        };
        let x = x_raw
            .iter()
            .enumerate()
            .map(|(k, &v)| scale_to_unit(v, fb[k % dims]).clamp(0.0, 1.0))
            .collect();
        let y = y_raw.iter().map(|&v| scale_to_unit(v, tb)).collect();
        let y_clean = y_clean_raw.map(|c| c.iter().map(|&v| scale_to_unit(v, tb)).collect());
        Ok(Self {
            dims,
            x,
            y,
            y_clean,
            feature_bounds: fb,
            target_bounds: tb,
            columns: (0..dims).map(|i| format!("x{i}")).collect(),
            split_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dims..(i + 1) * self.dims]
    }

    /// Clean targets if present, else the training targets.
    pub fn reference_targets(&self) -> &[f64] {
        self.y_clean.as_deref().unwrap_or(&self.y)
    }

    /// Map a scaled target back to raw units.
    pub fn unscale_target(&self, v: f64) -> f64 {
        let (lo, hi) = self.target_bounds;
        lo + v * (hi - lo)
    }

    pub fn unscale_feature(&self, dim: usize, u: f64) -> f64 {
        let (lo, hi) = self.feature_bounds[dim];
        lo + u * (hi - lo)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.dims);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Self {
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            y_clean: self.y_clean.as_ref().map(|c| idx.iter().map(|&i| c[i]).collect()),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            dims: self.dims,
            x: Vec::new(),
            y: Vec::new(),
            y_clean: None,
            feature_bounds: self.feature_bounds.clone(),
            target_bounds: self.target_bounds,
            columns: self.columns.clone(),
            split_seed: self.split_seed,
        }
    }

    fn meta_path(path: &Path) -> std::path::PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        s.into()
    }

    /// Write scaled values as CSV plus a `<path>.meta.json` sidecar with the
    /// scaling and optional generator description.
    pub fn save_csv(&self, path: &Path, generator: Option<serde_json::Value>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.columns.clone();
        header.push("y".into());
        if self.y_clean.is_some() {
            header.push("y_clean".into());
        }
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            rec.clear();
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            if let Some(c) = &self.y_clean {
                rec.push(c[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        let meta = DatasetMeta {
            dims: self.dims,
            feature_bounds: self.feature_bounds.clone(),
            target_bounds: self.target_bounds,
            columns: self.columns.clone(),
            split_seed: self.split_seed,
            generator,
        };
        std::fs::write(Self::meta_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Read a CSV written by [`Dataset::save_csv`]. Without a sidecar the
    /// columns are treated as raw values: the last column (or `y` if named)
    /// is the target and everything is rescaled to the unit range.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let y_col = header
            .iter()
            .position(|h| h == "y")
            .unwrap_or(header.len().saturating_sub(1));
        let clean_col = header.iter().position(|h| h == "y_clean");
        let feat_cols: Vec<usize> = (0..header.len())
            .filter(|&c| c != y_col && Some(c) != clean_col)
            .collect();
        if feat_cols.is_empty() {
            return Err(Error::Parse(format!("{}: no feature columns", path.display())));
        }
        let (mut x, mut y, mut yc) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let get = |c: usize| -> Result<f64> {
                rec.get(c)
                    .ok_or_else(|| Error::Parse(format!("row {}: missing column {c}", line + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))
            };
            for &c in &feat_cols {
                x.push(get(c)?);
            }
            y.push(get(y_col)?);
            if let Some(c) = clean_col {
                yc.push(get(c)?);
            }
        }
        let dims = feat_cols.len();
        let columns: Vec<String> = feat_cols.iter().map(|&c| header[c].clone()).collect();
        let y_clean = clean_col.map(|_| yc);
        let meta_path = Self::meta_path(path);
        if meta_path.exists() {
            let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
            if meta.dims != dims {
                return Err(Error::DimensionMismatch { expected: meta.dims, got: dims });
            }
            if x.iter().chain(&y).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset values".into()));
            }
            return Ok(Self {
                dims,
                x,
                y,
                y_clean,
                feature_bounds: meta.feature_bounds,
                target_bounds: meta.target_bounds,
                columns,
                split_seed: meta.split_seed,
            });
        }
        let mut ds = Self::from_raw(dims, &x, &y, y_clean.as_deref(), None, TargetScaling::MinMax, 0)?;
        ds.columns = columns;
        Ok(ds)
    }
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(invalid("mse of empty slices"));
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y_true.len() as f64)
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(invalid("r2 needs at least two samples"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Seeded shuffle split; the train part holds `round(fraction · n)` rows.
pub fn train_test_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let n = data.len();
    if n < 2 {
        return Err(invalid("need at least two rows to split"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, "split"));
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    Ok((data.subset(&idx[..n_train]), data.subset(&idx[n_train..])))
}

/// Models trainable by [`fit_supervised`].
pub trait Regressor: Clone + Send + Sync {
    fn dims(&self) -> usize;
    fn bases(&self) -> &[SplineBasis1D];
    fn activation(&self) -> Activation;
    fn out_of_domain(&self) -> OutOfDomain {
        OutOfDomain::Error
    }
    fn parameter_count(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// Size of the per-point scratch buffer.
    fn scratch_len(&self) -> usize;
    fn forward(&self, cache: &BasisCache, pt: usize, scratch: &mut Vec<f64>) -> f64;
    /// Accumulate `scale · ∂s/∂θ` at point `pt` after a matching `forward`.
    fn backward(&self, cache: &BasisCache, pt: usize, scratch: &mut Vec<f64>, scale: f64, grad: &mut [f64]);
    /// One sweep of block least squares, if the model supports it.
    fn als_sweep(&mut self, _cache: &BasisCache, _y: &[f64], _ridge: f64) -> Option<Result<()>> {
        None
    }
}

impl Regressor for CpModel {
    fn dims(&self) -> usize {
        CpModel::dims(self)
    }
    fn bases(&self) -> &[SplineBasis1D] {
        CpModel::bases(self)
    }
    fn activation(&self) -> Activation {
        CpModel::activation(self)
    }
    fn out_of_domain(&self) -> OutOfDomain {
        CpModel::out_of_domain(self)
    }
    fn parameter_count(&self) -> usize {
        CpModel::parameter_count(self)
    }
    fn params(&self) -> Vec<f64> {
        CpModel::params(self)
    }
    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        CpModel::set_params(self, params)
    }
    fn scratch_len(&self) -> usize {
        2 * self.rank() * self.dims()
    }
    fn forward(&self, cache: &BasisCache, pt: usize, scratch: &mut Vec<f64>) -> f64 {
        let n = self.rank() * self.dims();
        scratch.resize(2 * n, 0.0);
        self.forward_cached(cache, pt, &mut scratch[..n])
    }
    fn backward(&self, cache: &BasisCache, pt: usize, scratch: &mut Vec<f64>, scale: f64, grad: &mut [f64]) {
        let n = self.rank() * self.dims();
        let d = self.dims();
        let (psi, others) = scratch.split_at_mut(n);
        self.backward_cached(cache, pt, psi, scale, &mut others[..d], grad);
    }
    fn als_sweep(&mut self, cache: &BasisCache, y: &[f64], ridge: f64) -> Option<Result<()>> {
        if self.activation() != Activation::Identity {
            return None;
        }
        Some(cp_als_sweep(self, cache, y, ridge))
    }
}

impl Regressor for InteractionModel {
    fn dims(&self) -> usize {
        InteractionModel::dims(self)
    }
    fn bases(&self) -> &[SplineBasis1D] {
        InteractionModel::bases(self)
    }
    fn activation(&self) -> Activation {
        InteractionModel::activation(self)
    }
    fn parameter_count(&self) -> usize {
        InteractionModel::parameter_count(self)
    }
    fn params(&self) -> Vec<f64> {
        InteractionModel::params(self)
    }
    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        InteractionModel::set_params(self, params)
    }
    fn scratch_len(&self) -> usize {
        self.terms().iter().map(|t| t.subset.len()).sum()
    }
    fn forward(&self, cache: &BasisCache, pt: usize, scratch: &mut Vec<f64>) -> f64 {
        self.forward_cached(cache, pt, scratch)
    }
    fn backward(&self, cache: &BasisCache, pt: usize, scratch: &mut Vec<f64>, scale: f64, grad: &mut [f64]) {
        self.backward_cached(cache, pt, scratch, scale, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimiser {
    Adam,
    Lbfgs,
    #[default]
    AdamThenLbfgs,
    /// Alternating block least squares; identity-activation CP models only.
    Als,
    /// ALS sweeps followed by L-BFGS polishing.
    AlsThenLbfgs,
}

impl std::str::FromStr for Optimiser {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "lbfgs" => Ok(Self::Lbfgs),
            "adam_then_lbfgs" => Ok(Self::AdamThenLbfgs),
            "als" => Ok(Self::Als),
            "als_then_lbfgs" => Ok(Self::AlsThenLbfgs),
            other => Err(Error::Parse(format!("unknown optimiser `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimiser: Optimiser,
    pub learning_rate: f64,
    /// Adam epochs (or ALS sweeps).
    pub max_epochs: usize,
    pub lbfgs_iters: usize,
    pub lbfgs_history: usize,
    /// Mini-batch size for Adam; full batch when `None`.
    pub batch_size: Option<usize>,
    /// Relative loss change that ends a phase early.
    pub tol_rel_loss: f64,
    /// Coefficient of the `‖θ‖²` penalty.
    pub l2_penalty: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimiser: Optimiser::AdamThenLbfgs,
            learning_rate: 1e-2,
            max_epochs: 500,
            lbfgs_iters: 2000,
            lbfgs_history: 20,
            batch_size: None,
            tol_rel_loss: 1e-12,
            l2_penalty: 0.0,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub final_train_mse: f64,
    /// Held-out MSE against clean targets when they exist.
    pub test_mse: f64,
    pub test_r2: f64,
    /// Held-out MSE against the targets used for training.
    pub test_mse_observed: f64,
    pub epochs_run: usize,
    pub lbfgs_iterations: usize,
    pub wall_time_s: f64,
    pub parameter_count: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub loss_history: Vec<f64>,
}

/// Loss `mean((ρ(s) − y)²) + λ‖θ‖²` and its gradient over the given rows.
struct Objective<'a, M: Regressor> {
    cache: &'a BasisCache,
    y: &'a [f64],
    l2: f64,
    proto: &'a M,
}

impl<M: Regressor> Objective<'_, M> {
    fn eval(&self, params: &[f64], rows: Option<&[usize]>, grad: &mut [f64]) -> f64 {
        let mut model = self.proto.clone();
        if model.set_params(params).is_err() {
            return f64::NAN;
        }
        let n_rows = rows.map_or(self.y.len(), |r| r.len());
        let act = model.activation();
        let np = params.len();
        let n_chunks = n_rows.div_ceil(CHUNK);
        let parts: Vec<(f64, Vec<f64>)> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut g = vec![0.0; np];
                let mut scratch = Vec::with_capacity(model.scratch_len());
                let mut loss = 0.0;
                for k in c * CHUNK..((c + 1) * CHUNK).min(n_rows) {
                    let pt = rows.map_or(k, |r| r[k]);
                    let s = model.forward(self.cache, pt, &mut scratch);
                    let r = act.apply(s) - self.y[pt];
                    loss += r * r;
                    model.backward(self.cache, pt, &mut scratch, 2.0 * r * act.derivative(s), &mut g);
                }
                (loss, g)
            })
            .collect();
        let inv = 1.0 / n_rows as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        loss *= inv;
        grad.iter_mut().for_each(|g| *g *= inv);
        if self.l2 > 0.0 {
            for (g, p) in grad.iter_mut().zip(params) {
                loss += self.l2 * p * p;
                *g += 2.0 * self.l2 * p;
            }
        }
        loss
    }
}

/// Predictions of `model` on cached rows.
pub fn predict_cached<M: Regressor>(model: &M, cache: &BasisCache) -> Vec<f64> {
    let act = model.activation();
    let n = cache.n_points();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut scratch = Vec::with_capacity(model.scratch_len());
            (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|pt| act.apply(model.forward(cache, pt, &mut scratch)))
                .collect()
        })
        .collect();
    chunks.concat()
}

pub fn predict<M: Regressor>(model: &M, x: &[f64]) -> Result<Vec<f64>> {
    let cache = BasisCache::build(model.bases(), x, model.out_of_domain())?;
    Ok(predict_cached(model, &cache))
}

/// Split `data` with its own split seed and fit on the training part.
pub fn fit_supervised<M: Regressor>(model: &M, data: &Dataset, config: &TrainConfig) -> Result<(M, FitReport)> {
    let (train, test) = train_test_split(data, config.train_fraction, data.split_seed)?;
    fit_split(model, &train, &test, config)
}

/// Fit on `train`, report on `test`.
pub fn fit_split<M: Regressor>(model: &M, train: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<(M, FitReport)> {
    let start = Instant::now();
    if train.dims != model.dims() {
        return Err(Error::DimensionMismatch { expected: model.dims(), got: train.dims });
    }
    if test.dims != model.dims() {
        return Err(Error::DimensionMismatch { expected: model.dims(), got: test.dims });
    }
    if train.is_empty() {
        return Err(invalid("empty training set"));
    }
    if !(config.learning_rate > 0.0) || !(config.l2_penalty >= 0.0) {
        return Err(invalid("learning rate must be positive and penalty non-negative"));
    }
    if config.max_epochs == 0 {
        return Err(invalid("max_epochs must be >= 1"));
    }
    let cache = BasisCache::build(model.bases(), &train.x, model.out_of_domain())?;
    let objective = Objective { cache: &cache, y: &train.y, l2: config.l2_penalty, proto: model };
    let mut params = model.params();
    let mut grad = vec![0.0; params.len()];
    let mut history = Vec::new();
    let mut epochs = 0;
    let mut lbfgs_iterations = 0;
    let mut fitted = model.clone();

    let (run_adam, run_als, run_lbfgs) = match config.optimiser {
        Optimiser::Adam => (true, false, false),
        Optimiser::Lbfgs => (false, false, true),
        Optimiser::AdamThenLbfgs => (true, false, true),
        Optimiser::Als => (false, true, false),
        Optimiser::AlsThenLbfgs => (false, true, true),
    };

    if run_als {
        let ridge = config.l2_penalty * train.len() as f64;
        let mut prev = f64::INFINITY;
        for _ in 0..config.max_epochs {
            match fitted.als_sweep(&cache, &train.y, ridge) {
                None => return Err(invalid("ALS needs an identity-activation CP model")),
                Some(r) => r?,
            }
            epochs += 1;
            params = fitted.params();
            let loss = objective.eval(&params, None, &mut grad);
            history.push(loss);
            if prev.is_finite() && (prev - loss).abs() <= config.tol_rel_loss * prev.abs() {
                break;
            }
            prev = loss;
        }
    }

    if run_adam {
        let mut adam = Adam::new(params.len(), AdamConfig { learning_rate: config.learning_rate, ..Default::default() });
        let mut rng = substream(config.seed, "batches");
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut prev = f64::INFINITY;
        for _ in 0..config.max_epochs {
            let loss = match config.batch_size {
                Some(b) if b > 0 && b < train.len() => {
                    order.shuffle(&mut rng);
                    let mut total = 0.0;
                    for batch in order.chunks(b) {
                        total += objective.eval(&params, Some(batch), &mut grad) * batch.len() as f64;
                        adam.step(&mut params, &grad);
                    }
                    total / train.len() as f64
                }
                _ => {
                    let l = objective.eval(&params, None, &mut grad);
                    adam.step(&mut params, &grad);
                    l
                }
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss".into()));
            }
            epochs += 1;
            history.push(loss);
            if prev.is_finite() && (prev - loss).abs() <= config.tol_rel_loss * prev.abs() {
                break;
            }
            prev = loss;
        }
        fitted.set_params(&params)?;
    }

    if run_lbfgs {
        let lcfg = LbfgsConfig {
            max_iters: config.lbfgs_iters,
            history: config.lbfgs_history,
            rel_tol: config.tol_rel_loss,
            ..Default::default()
        };
        let out = lbfgs(&mut params, &lcfg, |p, g| objective.eval(p, None, g));
        lbfgs_iterations = out.iterations;
        if !out.value.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        history.push(out.value);
        fitted.set_params(&params)?;
    }

    let train_pred = predict_cached(&fitted, &cache);
    let final_train_mse = mse(&train.y, &train_pred)?;
    let (test_mse, test_r2, test_mse_observed) = if test.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let tc = BasisCache::build(fitted.bases(), &test.x, fitted.out_of_domain())?;
        let pred = predict_cached(&fitted, &tc);
        let reference = test.reference_targets();
        let r2 = if test.len() >= 2 { r2_score(reference, &pred)? } else { f64::NAN };
        (mse(reference, &pred)?, r2, mse(&test.y, &pred)?)
    };
    let report = FitReport {
        final_train_mse,
        test_mse,
        test_r2,
        test_mse_observed,
        epochs_run: epochs,
        lbfgs_iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        parameter_count: fitted.parameter_count(),
        n_train: train.len(),
        n_test: test.len(),
        loss_history: history,
    };
    Ok((fitted, report))
}

/// One ALS sweep over all dimensions for an identity-activation CP model.
/// Each block solve is an exact least-squares update, so the loss never rises.
fn cp_als_sweep(model: &mut CpModel, cache: &BasisCache, y: &[f64], ridge: f64) -> Result<()> {
    let d = model.dims();
    let r = model.rank();
    let n = cache.n_points();
    for a in 0..d {
        let nf = model.bases()[a].n_funcs();
        let w = model.bases()[a].order() + 1;
        let m = r * nf;
        let snapshot = model.clone();
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut gram = vec![0.0; m * m];
                let mut rhs = vec![0.0; m];
                let mut psi = vec![0.0; r * d];
                let mut coef = vec![0.0; r];
                for pt in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    snapshot.forward_cached(cache, pt, &mut psi);
                    for j in 0..r {
                        let mut prod = snapshot.modal_weights()[j];
                        for i in (0..d).filter(|&i| i != a) {
                            prod *= psi[j * d + i];
                        }
                        coef[j] = prod;
                    }
                    let (first, vals) = cache.row(pt, a);
                    for j in 0..r {
                        for p in 0..w {
                            let row = j * nf + first + p;
                            let v = coef[j] * vals[p];
                            rhs[row] += v * y[pt];
                            for j2 in 0..r {
                                let cv = v * coef[j2];
                                let base = row * m + j2 * nf + first;
                                for q in 0..w {
                                    gram[base + q] += cv * vals[q];
                                }
                            }
                        }
                    }
                }
                (gram, rhs)
            })
            .collect();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (g, b) in &parts {
            for row in 0..m {
                rhs[row] += b[row];
                for col in 0..m {
                    gram[(row, col)] += g[row * m + col];
                }
            }
        }
        let trace = gram.trace();
        let jitter = ridge + 1e-12 * trace.max(1e-300) / m as f64;
        for k in 0..m {
            gram[(k, k)] += jitter;
        }
        let sol = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .map_err(|e| Error::Singular(e.to_string()))?,
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ALS block solution".into()));
        }
        for j in 0..r {
            model.block_mut(j, a).copy_from_slice(&sol.as_slice()[j * nf..(j + 1) * nf]);
        }
    }
    balance_modes(model);
    Ok(())
}

/// Equalise block norms within each mode without changing the function.
fn balance_modes(model: &mut CpModel) {
    let d = model.dims();
    for j in 0..model.rank() {
        let norms: Vec<f64> = (0..d)
            .map(|i| model.block(j, i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if norms.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            continue;
        }
        let geo = (norms.iter().map(|v| v.ln()).sum::<f64>() / d as f64).exp();
        for (i, nrm) in norms.iter().enumerate() {
            let s = geo / nrm;
            model.block_mut(j, i).iter_mut().for_each(|v| *v *= s);
        }
    }
}
