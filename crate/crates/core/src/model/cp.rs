//! Rank-`r` CP-class separable model with B-spline sub-atoms.
//!
//! ```text
//! f(x) = ρ( Σ_j c_j Π_i ψ_ji(x_i) ),   ψ_ji(t) = Σ_c α_jic B_ic(t)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::cache::BasisCache;
use crate::error::{invalid, Error, Result};
use crate::splines::{BasisDescriptor, OutOfDomain, SplineBasis1D};

/// Value of the model at a point together with its analytic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGradient {
    pub value: f64,
    /// `∂f/∂x_i`.
    pub d_input: Vec<f64>,
    /// Gradient over the trainable parameters, in [`CpModel::params`] order.
    pub d_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    bases: Vec<SplineBasis1D>,
    rank: usize,
    /// Offset of dimension `i` inside one mode's coefficient block.
    offsets: Vec<usize>,
    mode_stride: usize,
    /// Layout `[mode][dim][function]`.
    coeffs: Vec<f64>,
    modal_weights: Vec<f64>,
    trainable_weights: bool,
    activation: Activation,
    out_of_domain: OutOfDomain,
}

impl CpModel {
    /// Model with every coefficient set to one and unit modal weights.
    pub fn new(bases: Vec<SplineBasis1D>, rank: usize, activation: Activation) -> Result<Self> {
        if bases.is_empty() {
            return Err(invalid("a model needs at least one dimension"));
        }
        if rank == 0 {
            return Err(invalid("rank must be >= 1"));
        }
        let mut offsets = Vec::with_capacity(bases.len());
        let mut stride = 0;
        for b in &bases {
            offsets.push(stride);
            stride += b.n_funcs();
        }
        Ok(Self {
            rank,
            offsets,
            mode_stride: stride,
            coeffs: vec![1.0; rank * stride],
            modal_weights: vec![1.0; rank],
            trainable_weights: false,
            activation,
            out_of_domain: OutOfDomain::Error,
            bases,
        })
    }

    /// Same basis (order `p`, `cells` cells on `[0, 1]`) in every one of `dims` dimensions.
    pub fn uniform(dims: usize, rank: usize, p: usize, cells: usize) -> Result<Self> {
        let basis = SplineBasis1D::new(p, cells, (0.0, 1.0))?;
        Self::new(vec![basis; dims], rank, Activation::Identity)
    }

    /// Draw every coefficient from `U(0.9, 1.1)`, so each sub-atom starts near one.
    pub fn init_uniform(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in &mut self.coeffs {
            *a = rng.random_range(0.9..1.1);
        }
    }

    pub fn with_init(mut self, seed: u64) -> Self {
        self.init_uniform(seed);
        self
    }

    pub fn with_trainable_weights(mut self, on: bool) -> Self {
        self.trainable_weights = on;
        self
    }

    pub fn with_out_of_domain(mut self, policy: OutOfDomain) -> Self {
        self.out_of_domain = policy;
        self
    }

    pub fn set_out_of_domain(&mut self, policy: OutOfDomain) {
        self.out_of_domain = policy;
    }

    pub fn dims(&self) -> usize {
        self.bases.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn bases(&self) -> &[SplineBasis1D] {
        &self.bases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn out_of_domain(&self) -> OutOfDomain {
        self.out_of_domain
    }

    pub fn modal_weights(&self) -> &[f64] {
        &self.modal_weights
    }

    pub fn modal_weights_mut(&mut self) -> &mut [f64] {
        &mut self.modal_weights
    }

    pub fn trainable_weights(&self) -> bool {
        self.trainable_weights
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficients of sub-atom `ψ_{mode, dim}`.
    pub fn block(&self, mode: usize, dim: usize) -> &[f64] {
        let start = mode * self.mode_stride + self.offsets[dim];
        &self.coeffs[start..start + self.bases[dim].n_funcs()]
    }

    pub fn block_mut(&mut self, mode: usize, dim: usize) -> &mut [f64] {
        let start = mode * self.mode_stride + self.offsets[dim];
        let n = self.bases[dim].n_funcs();
        &mut self.coeffs[start..start + n]
    }

    /// `r · Σ_i n_i`, plus `r` when modal weights are trainable.
    pub fn parameter_count(&self) -> usize {
        self.coeffs.len() + if self.trainable_weights { self.rank } else { 0 }
    }

    /// Flat trainable parameters: coefficients, then modal weights if trainable.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.coeffs.clone();
        if self.trainable_weights {
            p.extend_from_slice(&self.modal_weights);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::LengthMismatch(params.len(), self.parameter_count()));
        }
        let n = self.coeffs.len();
        self.coeffs.copy_from_slice(&params[..n]);
        if self.trainable_weights {
            self.modal_weights.copy_from_slice(&params[n..]);
        }
        Ok(())
    }

    fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Sub-atom value `ψ_{mode, dim}(t)`.
    pub fn subatom(&self, mode: usize, dim: usize, t: f64) -> Result<f64> {
        let row = self.bases[dim].eval(t, self.out_of_domain)?;
        Ok(row.dot(self.block(mode, dim)))
    }

    /// Pre-activation sum `Σ_j c_j Π_i ψ_ji(x_i)`.
    pub fn pre_activation(&self, x: &[f64]) -> Result<f64> {
        self.check_dims(x)?;
        let mut prods = vec![1.0; self.rank];
        let width = self.bases.iter().map(|b| b.order() + 1).max().unwrap_or(1);
        let mut vals = vec![0.0; width];
        for (i, (basis, &xi)) in self.bases.iter().zip(x).enumerate() {
            let xi = basis.resolve(xi, self.out_of_domain)?;
            let w = basis.order() + 1;
            let first = basis.eval_into(xi, &mut vals[..w]);
            for (j, p) in prods.iter_mut().enumerate() {
                let blk = self.block(j, i);
                *p *= dot(&vals[..w], &blk[first..first + w]);
            }
        }
        Ok(prods.iter().zip(&self.modal_weights).map(|(p, c)| p * c).sum())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.activation.apply(self.pre_activation(x)?))
    }

    /// Evaluate `n` points given row-major as `n × d`.
    pub fn eval_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        let d = self.dims();
        if !points.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: points.len() % d,
            });
        }
        let cache = BasisCache::build(&self.bases, points, self.out_of_domain)?;
        let mut psi = vec![0.0; self.rank * d];
        Ok((0..cache.n_points())
            .map(|pt| self.activation.apply(self.forward_cached(&cache, pt, &mut psi)))
            .collect())
    }

    /// Value plus input and parameter gradients at `x`.
    pub fn gradient(&self, x: &[f64]) -> Result<EvalGradient> {
        self.check_dims(x)?;
        let d = self.dims();
        let r = self.rank;
        let mut psi = vec![0.0; r * d];
        let mut dpsi = vec![0.0; r * d];
        let mut rows = Vec::with_capacity(d);
        for (i, (basis, &xi)) in self.bases.iter().zip(x).enumerate() {
            let xi = basis.resolve(xi, self.out_of_domain)?;
            let mut ders = vec![vec![0.0; basis.order() + 1]; 2];
            let first = basis.eval_derivs_into(xi, 1, &mut ders);
            for j in 0..r {
                let blk = &self.block(j, i)[first..];
                psi[j * d + i] = dot(&ders[0], blk);
                dpsi[j * d + i] = dot(&ders[1], blk);
            }
            rows.push((first, ders.swap_remove(0)));
        }
        let mut s = 0.0;
        let mut mode_prod = vec![0.0; r];
        for j in 0..r {
            mode_prod[j] = psi[j * d..(j + 1) * d].iter().product();
            s += self.modal_weights[j] * mode_prod[j];
        }
        let ds = self.activation.derivative(s);
        let mut d_input = vec![0.0; d];
        let mut d_params = vec![0.0; self.parameter_count()];
        let mut others = vec![0.0; d];
        for j in 0..r {
            products_excluding(&psi[j * d..(j + 1) * d], &mut others);
            let cj = self.modal_weights[j] * ds;
            let base = j * self.mode_stride;
            for i in 0..d {
                d_input[i] += cj * dpsi[j * d + i] * others[i];
                let (first, ref vals) = rows[i];
                let off = base + self.offsets[i] + first;
                for (k, b) in vals.iter().enumerate() {
                    d_params[off + k] += cj * b * others[i];
                }
            }
            if self.trainable_weights {
                d_params[self.coeffs.len() + j] = ds * mode_prod[j];
            }
        }
        Ok(EvalGradient {
            value: self.activation.apply(s),
            d_input,
            d_params,
        })
    }

    /// Pre-activation at cached point `pt`; fills `psi[j * d + i]`.
    pub(crate) fn forward_cached(&self, cache: &BasisCache, pt: usize, psi: &mut [f64]) -> f64 {
        let d = self.dims();
        let mut s = 0.0;
        for j in 0..self.rank {
            let mut prod = 1.0;
            for (i, basis) in self.bases.iter().enumerate() {
                let (first, vals) = cache.row(pt, i);
                let w = basis.order() + 1;
                let blk = self.block(j, i);
                let v = dot(&vals[..w], &blk[first..first + w]);
                psi[j * d + i] = v;
                prod *= v;
            }
            s += self.modal_weights[j] * prod;
        }
        s
    }

    /// Add `scale · ∂s/∂θ` at cached point `pt` into `grad`, where `psi` comes
    /// from [`Self::forward_cached`] at the same point.
    pub(crate) fn backward_cached(
        &self,
        cache: &BasisCache,
        pt: usize,
        psi: &[f64],
        scale: f64,
        others: &mut [f64],
        grad: &mut [f64],
    ) {
        let d = self.dims();
        for j in 0..self.rank {
            let modes = &psi[j * d..(j + 1) * d];
            products_excluding(modes, others);
            let cj = scale * self.modal_weights[j];
            let base = j * self.mode_stride;
            for (i, basis) in self.bases.iter().enumerate() {
                let (first, vals) = cache.row(pt, i);
                let w = basis.order() + 1;
                let f = cj * others[i];
                let off = base + self.offsets[i] + first;
                for (g, b) in grad[off..off + w].iter_mut().zip(&vals[..w]) {
                    *g += f * b;
                }
            }
            if self.trainable_weights {
                grad[self.coeffs.len() + j] += scale * modes.iter().product::<f64>();
            }
        }
    }

    /// Replace the per-dimension bases, keeping the rank, activation and weights.
    /// Coefficients are reset to one.
    pub fn with_bases(&self, bases: Vec<SplineBasis1D>) -> Result<Self> {
        let mut m = Self::new(bases, self.rank, self.activation)?;
        m.modal_weights = self.modal_weights.clone();
        m.trainable_weights = self.trainable_weights;
        m.out_of_domain = self.out_of_domain;
        Ok(m)
    }

    /// Append `extra` modes with the given coefficients (row-major per mode).
    pub fn push_mode(&mut self, coeffs: &[f64], weight: f64) -> Result<()> {
        if coeffs.len() != self.mode_stride {
            return Err(Error::LengthMismatch(coeffs.len(), self.mode_stride));
        }
        self.coeffs.extend_from_slice(coeffs);
        self.modal_weights.push(weight);
        self.rank += 1;
        Ok(())
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            dims: self.dims(),
            rank: self.rank,
            activation: self.activation,
            modal_weights: self.modal_weights.clone(),
            trainable_modal_weights: self.trainable_weights,
            bases: self.bases.iter().map(|b| b.descriptor()).collect(),
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.bases.len() != doc.dims {
            return Err(Error::Parse(format!(
                "{} basis descriptors for {} dimensions",
                doc.bases.len(),
                doc.dims
            )));
        }
        let bases = doc
            .bases
            .iter()
            .map(SplineBasis1D::from_descriptor)
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::new(bases, doc.rank, doc.activation)?;
        if doc.coeffs.len() != m.coeffs.len() {
            return Err(Error::Parse(format!(
                "expected {} coefficients, found {}",
                m.coeffs.len(),
                doc.coeffs.len()
            )));
        }
        if doc.modal_weights.len() != doc.rank {
            return Err(Error::Parse("modal weight count differs from rank".into()));
        }
        m.coeffs.copy_from_slice(&doc.coeffs);
        m.modal_weights.copy_from_slice(&doc.modal_weights);
        m.trainable_weights = doc.trainable_modal_weights;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Serialised form of a [`CpModel`]; coefficients row-major `[mode][dim][function]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub dims: usize,
    pub rank: usize,
    pub activation: Activation,
    pub modal_weights: Vec<f64>,
    #[serde(default)]
    pub trainable_modal_weights: bool,
    pub bases: Vec<BasisDescriptor>,
    pub coeffs: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[i] = Π_{m≠i} v[m]` without division.
pub(crate) fn products_excluding(v: &[f64], out: &mut [f64]) {
    let mut acc = 1.0;
    for (o, x) in out.iter_mut().zip(v) {
        *o = acc;
        acc *= x;
    }
    acc = 1.0;
    for (o, x) in out.iter_mut().zip(v).rev() {
        *o *= acc;
        acc *= x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(dims: usize, rank: usize, seed: u64, act: Activation) -> CpModel {
        let bases = (0..dims)
            .map(|i| SplineBasis1D::new(1 + (i % 3), 2 + i % 3, (0.0, 1.0)).unwrap())
            .collect();
        let mut m = CpModel::new(bases, rank, act).unwrap().with_trainable_weights(true);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in m.coeffs_mut() {
            *a = rng.random_range(-1.0..1.0);
        }
        for w in m.modal_weights_mut() {
            *w = rng.random_range(0.5..1.5);
        }
        m
    }

    #[test]
    fn rank_one_one_dim_is_the_spline() {
        let b = SplineBasis1D::new(3, 4, (0.0, 1.0)).unwrap();
        let mut m = CpModel::new(vec![b.clone()], 1, Activation::Identity).unwrap();
        let alpha = [0.3, -1.0, 2.0, 0.5, 0.1, -0.7, 1.2];
        m.block_mut(0, 0).copy_from_slice(&alpha);
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            let want = b.eval(x, OutOfDomain::Error).unwrap().dot(&alpha);
            assert_eq!(m.eval(&[x]).unwrap(), want);
        }
    }

    #[test]
    fn unit_coefficients_collapse_to_rank() {
        let m = CpModel::uniform(4, 3, 3, 5).unwrap();
        for x in [[0.0, 0.2, 0.5, 1.0], [0.9, 0.1, 0.33, 0.7]] {
            assert!((m.eval(&x).unwrap() - 3.0).abs() < 1e-12);
        }
        let mut t = m.clone();
        t.activation = Activation::Tanh;
        assert!((t.eval(&[0.5; 4]).unwrap() - 3f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn constant_model_has_zero_input_gradient() {
        let m = CpModel::uniform(3, 2, 3, 4).unwrap();
        let g = m.gradient(&[0.1, 0.5, 0.77]).unwrap();
        assert!(g.d_input.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn parameter_count_and_layout() {
        let m = CpModel::uniform(8, 5, 3, 3).unwrap();
        assert_eq!(m.parameter_count(), 240);
        let m = m.with_trainable_weights(true);
        assert_eq!(m.parameter_count(), 245);
        assert_eq!(m.gradient(&[0.5; 8]).unwrap().d_params.len(), 245);
    }

    #[test]
    fn dimension_and_domain_errors() {
        let m = CpModel::uniform(2, 1, 3, 3).unwrap();
        assert!(matches!(m.eval(&[0.5]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.eval(&[0.5, 1.5]), Err(Error::DomainViolation { .. })));
        let c = m.clone().with_out_of_domain(OutOfDomain::Clamp);
        assert_eq!(c.eval(&[0.5, 1.5]).unwrap(), c.eval(&[0.5, 1.0]).unwrap());
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, act) in [
            (1, Activation::Identity),
            (2, Activation::Tanh),
            (3, Activation::Softplus),
        ] {
            let m = random_model(3, 2, seed, act);
            let x = [0.31, 0.62, 0.17];
            let g = m.gradient(&x).unwrap();
            let h = 1e-6;
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (m.eval(&xp).unwrap() - m.eval(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g.d_input[i]).abs() <= 1e-6 * fd.abs().max(1.0));
            }
            let p0 = m.params();
            for k in 0..p0.len() {
                let mut mp = m.clone();
                let mut pp = p0.clone();
                pp[k] += h;
                mp.set_params(&pp).unwrap();
                let up = mp.eval(&x).unwrap();
                pp[k] -= 2.0 * h;
                mp.set_params(&pp).unwrap();
                let dn = mp.eval(&x).unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g.d_params[k]).abs() <= 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cached_backward_matches_gradient() {
        let m = random_model(4, 3, 9, Activation::Identity);
        let x = [0.2, 0.4, 0.6, 0.8];
        let cache = BasisCache::build(m.bases(), &x, OutOfDomain::Error).unwrap();
        let mut psi = vec![0.0; 12];
        let s = m.forward_cached(&cache, 0, &mut psi);
        let mut grad = vec![0.0; m.parameter_count()];
        let mut others = vec![0.0; 4];
        m.backward_cached(&cache, 0, &psi, 1.0, &mut others, &mut grad);
        let g = m.gradient(&x).unwrap();
        assert!((s - g.value).abs() < 1e-14);
        for (a, b) in grad.iter().zip(&g.d_params) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn products_excluding_handles_zeros() {
        let mut out = [0.0; 4];
        products_excluding(&[2.0, 0.0, 3.0, 5.0], &mut out);
        assert_eq!(out, [0.0, 30.0, 0.0, 0.0]);
    }
}
