//! Benchmark generators: borehole, noisy Sobol-G and Latin hypercube designs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{substream, substream_seed, CounterNormal};
use crate::model::CpModel;
use crate::training::{fit_supervised, Dataset, FitReport, Optimiser, TargetScaling, TrainConfig};

/// `n × d` row-major design with one point per stratum in every column.
pub fn lhs_sample(n: usize, d: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 || d == 0 {
        return Err(invalid("lhs_sample needs n, d >= 1"));
    }
    let mut rng = substream(seed, "lhs");
    let mut out = vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    let h = 1.0 / n as f64;
    for j in 0..d {
        perm.shuffle(&mut rng);
        for (i, &cell) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            out[i * d + j] = ((cell as f64 + u) * h).min(1.0);
        }
    }
    Ok(out)
}

/// Commonly used borehole input ranges (radius of borehole, radius of
/// influence, transmissivities, potentiometric heads, borehole length,
/// hydraulic conductivity).
pub const BOREHOLE_RANGES: [(f64, f64); 8] = [
    (0.05, 0.15),
    (100.0, 50_000.0),
    (63_070.0, 115_600.0),
    (990.0, 1_110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1_120.0, 1_680.0),
    (9_855.0, 12_045.0),
];

pub const BOREHOLE_NAMES: [&str; 8] = ["rw", "r", "Tu", "Hu", "Tl", "Hl", "L", "Kw"];

/// Water flow rate through a borehole, inputs in physical units.
pub fn borehole(p: &[f64]) -> Result<f64> {
    if p.len() != 8 {
        return Err(Error::DimensionMismatch { expected: 8, got: p.len() });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("borehole input".into()));
    }
    let [rw, r, tu, hu, tl, hl, l, kw] = [p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]];
    for v in [rw, r, tl, kw] {
        if v <= 0.0 {
            return Err(Error::DomainViolation { value: v, lo: 0.0, hi: f64::INFINITY });
        }
    }
    let log_ratio = (r / rw).ln();
    if log_ratio == 0.0 {
        return Err(Error::DomainViolation { value: r, lo: rw, hi: rw });
    }
    let num = std::f64::consts::TAU * tu * (hu - hl);
    let den = log_ratio * (1.0 + 2.0 * l * tu / (log_ratio * rw * rw * kw) + tu / tl);
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoreholeSpec {
    pub physical_ranges: Vec<(f64, f64)>,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for BoreholeSpec {
    fn default() -> Self {
        Self {
            physical_ranges: BOREHOLE_RANGES.to_vec(),
            n_samples: 100_000,
            seed: 0,
        }
    }
}

impl BoreholeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.physical_ranges.len() != 8 {
            return Err(Error::DimensionMismatch { expected: 8, got: self.physical_ranges.len() });
        }
        if self.physical_ranges.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(invalid("borehole ranges must satisfy lo < hi"));
        }
        if self.n_samples == 0 {
            return Err(invalid("n_samples must be >= 1"));
        }
        Ok(())
    }
}

/// Standard Sobol-G coefficients for 20 inputs.
pub fn sobol_g_default_a() -> Vec<f64> {
    (0..20)
        .map(|i| match i {
            0..=4 => 0.0,
            5..=9 => 1.5,
            _ => 4.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SobolGSpec {
    pub a: Vec<f64>,
    pub noise_sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SobolGSpec {
    fn default() -> Self {
        Self {
            a: sobol_g_default_a(),
            noise_sigma: 0.01,
            n_samples: 100_000,
            seed: 0,
        }
    }
}

impl SobolGSpec {
    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("Sobol-G coefficients must be finite and non-negative"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma must be non-negative"));
        }
        if self.n_samples == 0 {
            return Err(invalid("n_samples must be >= 1"));
        }
        Ok(())
    }

    fn noise_stream(&self) -> CounterNormal {
        CounterNormal::new(substream_seed(self.seed, "noise"))
    }
}

pub fn sobol_g_clean(p: &[f64], a: &[f64]) -> Result<f64> {
    if p.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: p.len() });
    }
    let mut prod = 1.0;
    for (&x, &ai) in p.iter().zip(a) {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::DomainViolation { value: x, lo: 0.0, hi: 1.0 });
        }
        prod *= ((4.0 * x - 2.0).abs() + ai) / (1.0 + ai);
    }
    Ok(prod)
}

/// Clean and noisy Sobol-G values; the noise for sample `index` depends only
/// on the spec seed and `index`.
pub fn sobol_g(p: &[f64], spec: &SobolGSpec, index: u64) -> Result<(f64, f64)> {
    let clean = sobol_g_clean(p, &spec.a)?;
    let eps = if spec.noise_sigma > 0.0 {
        spec.noise_sigma * spec.noise_stream().at(index)
    } else {
        0.0
    };
    Ok((clean, clean + eps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Borehole(BoreholeSpec),
    SobolG(SobolGSpec),
}

impl Generator {
    pub fn seed(&self) -> u64 {
        match self {
            Self::Borehole(s) => s.seed,
            Self::SobolG(s) => s.seed,
        }
    }
}

const GEN_CHUNK: usize = 4096;

/// Sample the generator on an LHS design and return a scaled dataset.
/// Inputs are mapped to the unit box with the physical ranges recorded as
/// feature bounds; targets use `target_scaling`.
pub fn make_dataset_scaled(generator: &Generator, target_scaling: TargetScaling) -> Result<Dataset> {
    match generator {
        Generator::Borehole(spec) => {
            spec.validate()?;
            let n = spec.n_samples;
            let u = lhs_sample(n, 8, spec.seed)?;
            let ranges = &spec.physical_ranges;
            let x_raw: Vec<f64> = u
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let (lo, hi) = ranges[k % 8];
                    lo + v * (hi - lo)
                })
                .collect();
            let y: Vec<f64> = x_raw
                .par_chunks(8 * GEN_CHUNK)
                .map(|rows| rows.chunks(8).map(borehole).collect::<Result<Vec<f64>>>())
                .collect::<Result<Vec<_>>>()?
                .concat();
            let mut ds = Dataset::from_raw(8, &x_raw, &y, None, Some(ranges.clone()), target_scaling, spec.seed)?;
            // Scale with the exact design values to avoid round-off from the
            // physical round trip.
            ds.x = u;
            ds.columns = BOREHOLE_NAMES.iter().map(|s| s.to_string()).collect();
            Ok(ds)
        }
        Generator::SobolG(spec) => {
            spec.validate()?;
            let d = spec.a.len();
            let n = spec.n_samples;
            let x = lhs_sample(n, d, spec.seed)?;
            let pairs: Vec<(f64, f64)> = x
                .par_chunks(d * GEN_CHUNK)
                .enumerate()
                .map(|(c, rows)| {
                    let mut noise = spec.noise_stream();
                    rows.chunks(d)
                        .enumerate()
                        .map(|(k, p)| {
                            let clean = sobol_g_clean(p, &spec.a)?;
                            let idx = (c * GEN_CHUNK + k) as u64;
                            let eps = if spec.noise_sigma > 0.0 { spec.noise_sigma * noise.at(idx) } else { 0.0 };
                            Ok((clean, clean + eps))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
                .concat();
            let clean: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let noisy: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let with_noise = spec.noise_sigma > 0.0;
            Dataset::from_raw(
                d,
                &x,
                &noisy,
                with_noise.then_some(clean.as_slice()),
                Some(vec![(0.0, 1.0); d]),
                target_scaling,
                spec.seed,
            )
        }
    }
}

pub fn make_dataset(generator: &Generator) -> Result<Dataset> {
    make_dataset_scaled(generator, TargetScaling::MinMax)
}

/// A regression benchmark: data generator, CP model size and training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSuite {
    pub name: String,
    pub generator: Generator,
    pub rank: usize,
    pub cells: usize,
    pub order: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub n_samples: usize,
    pub generation_time_s: f64,
    pub fit: FitReport,
}

impl RegressionSuite {
    /// 8D borehole with `5 · 8 · (3 + 3) = 240` parameters.
    pub fn borehole(seed: u64) -> Self {
        Self {
            name: "borehole".into(),
            generator: Generator::Borehole(BoreholeSpec { seed, ..Default::default() }),
            rank: 5,
            cells: 3,
            order: 3,
            train: TrainConfig { max_epochs: 100, lbfgs_iters: 500, seed, ..Default::default() },
        }
    }

    /// 20D Sobol-G with σ = 0.01 noise and `6 · 20 · (10 + 3) = 1560` parameters.
    pub fn sobol_g(seed: u64) -> Self {
        Self {
            name: "sobol_g".into(),
            generator: Generator::SobolG(SobolGSpec { seed, ..Default::default() }),
            rank: 6,
            cells: 10,
            order: 3,
            train: TrainConfig { max_epochs: 100, lbfgs_iters: 400, seed, ..Default::default() },
        }
    }

    /// Noiseless Sobol-G fitted with a single mode: the target is one product.
    pub fn witness(seed: u64) -> Self {
        Self {
            name: "witness".into(),
            generator: Generator::SobolG(SobolGSpec { noise_sigma: 0.0, seed, ..Default::default() }),
            rank: 1,
            cells: 16,
            order: 3,
            train: TrainConfig { optimiser: Optimiser::Als, max_epochs: 20, seed, ..Default::default() },
        }
    }

    pub fn dims(&self) -> usize {
        match &self.generator {
            Generator::Borehole(_) => 8,
            Generator::SobolG(s) => s.a.len(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.rank * self.dims() * (self.cells + self.order)
    }

    pub fn set_n_samples(&mut self, n: usize) {
        match &mut self.generator {
            Generator::Borehole(s) => s.n_samples = n,
            Generator::SobolG(s) => s.n_samples = n,
        }
    }

    pub fn n_samples(&self) -> usize {
        match &self.generator {
            Generator::Borehole(s) => s.n_samples,
            Generator::SobolG(s) => s.n_samples,
        }
    }

    /// The untrained model.
    pub fn model(&self) -> Result<CpModel> {
        Ok(CpModel::uniform(self.dims(), self.rank, self.order, self.cells)?.with_init(self.train.seed))
    }

    /// Generate the data and fit.
    pub fn run(&self) -> Result<(CpModel, SuiteOutcome)> {
        let start = Instant::now();
        let data = make_dataset(&self.generator)?;
        let generation_time_s = start.elapsed().as_secs_f64();
        let (model, fit) = fit_supervised(&self.model()?, &data, &self.train)?;
        Ok((
            model,
            SuiteOutcome { name: self.name.clone(), n_samples: data.len(), generation_time_s, fit },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhs_quarters() {
        let x = lhs_sample(4, 1, 3).unwrap();
        let mut cells: Vec<usize> = x.iter().map(|v| (v * 4.0) as usize).collect();
        cells.sort();
        assert_eq!(cells, vec![0, 1, 2, 3]);
        assert!(lhs_sample(0, 2, 1).is_err());
        assert_eq!(lhs_sample(50, 3, 9).unwrap(), lhs_sample(50, 3, 9).unwrap());
    }

    #[test]
    fn borehole_zero_head_difference() {
        let mut p: Vec<f64> = BOREHOLE_RANGES.iter().map(|(a, b)| 0.5 * (a + b)).collect();
        p[5] = p[3];
        assert_eq!(borehole(&p).unwrap(), 0.0);
        p[1] = p[0];
        assert!(matches!(borehole(&p), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn sobol_g_special_points() {
        let a = sobol_g_default_a();
        assert_eq!(sobol_g_clean(&[0.5; 20], &a).unwrap(), 0.0);
        let expect = 2f64.powi(5) * 1.4f64.powi(5) * 1.2f64.powi(10);
        assert!((sobol_g_clean(&[1.0; 20], &a).unwrap() - expect).abs() < 1e-12 * expect);
        assert!(sobol_g_clean(&[1.5; 20], &a).is_err());
    }

    #[test]
    fn dataset_noise_is_index_addressed() {
        let spec = SobolGSpec { n_samples: 300, seed: 4, ..Default::default() };
        let ds = make_dataset_scaled(&Generator::SobolG(spec.clone()), TargetScaling::None).unwrap();
        for i in [0usize, 17, 299] {
            let (c, n) = sobol_g(ds.row(i), &spec, i as u64).unwrap();
            assert_eq!(ds.y[i].to_bits(), n.to_bits());
            assert_eq!(ds.y_clean.as_ref().unwrap()[i].to_bits(), c.to_bits());
        }
    }
}
