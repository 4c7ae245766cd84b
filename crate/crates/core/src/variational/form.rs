//! Separable quadratic functionals `J(u) = ½ a(u,u) − ℓ(u) + c` on CP fields.
//!
//! The bilinear form is a sum of terms whose per-dimension factors are 1D
//! matrices, so every quantity needed by ALS reduces to small Gram products
//! and the global operator is never formed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::profile::{Factor1D, OpTerm, SeparableFunction};
use crate::error::{Error, Result};
use crate::quadrature::Rule1D;
use crate::splines::{integral_matrix_weighted, IntegralMatrixSpec, SplineBasis1D};

/// `coef · Π_i ψ_iᵀ M_i φ_i`.
#[derive(Debug, Clone)]
pub struct BilinearTerm {
    pub coef: f64,
    pub mats: Vec<DMatrix<f64>>,
}

/// `coef · Π_i v_iᵀ φ_i`.
#[derive(Debug, Clone)]
pub struct LinearTerm {
    pub coef: f64,
    pub vecs: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub sizes: Vec<usize>,
    pub bilinear: Vec<BilinearTerm>,
    pub linear: Vec<LinearTerm>,
    pub constant: f64,
}

/// CP factors: `blocks[i]` is `n_i × R`, column `j` holds mode `j`'s
/// coefficients in dimension `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub blocks: Vec<DMatrix<f64>>,
}

impl Factors {
    pub fn rank(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn dims(&self) -> usize {
        self.blocks.len()
    }
}

/// Points per cell for products of two order-`p` splines times a weight of
/// degree `w`, exact for polynomial integrands.
fn exact_points(p: usize, w: usize) -> usize {
    (2 * p + w + 2).div_ceil(2)
}

/// Fine rule for non-polynomial integrands: at least 256 points overall.
fn load_rule(basis: &SplineBasis1D) -> Rule1D {
    let cells = basis.interior_cells();
    let ppc = 8usize.max(256usize.div_ceil(cells));
    Rule1D::composite(basis.breakpoints(), ppc.min(48))
}

fn weighted_matrix(basis: &SplineBasis1D, left: &super::profile::OpFactor, right: &super::profile::OpFactor) -> Result<DMatrix<f64>> {
    let w = left.weight.mul(&right.weight);
    let spec = IntegralMatrixSpec::new(left.deriv, right.deriv, exact_points(basis.order(), w.degree()));
    let m = integral_matrix_weighted(basis, basis, spec, |x| w.eval(x))?;
    let n = basis.n_funcs();
    Ok(DMatrix::from_fn(n, n, |r, c| m[r][c]))
}

/// `∫ f(x) · w(x) B⁽ᵏ⁾(x) dx` for every basis function.
fn weighted_load(basis: &SplineBasis1D, rule: &Rule1D, f: &Factor1D, op: &super::profile::OpFactor) -> DVector<f64> {
    let k = op.deriv;
    let mut out = DVector::zeros(basis.n_funcs());
    let mut d = vec![vec![0.0; basis.order() + 1]; k + 1];
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        let first = basis.eval_derivs_into(x, k, &mut d);
        let fw = w * f.eval(x) * op.weight.eval(x);
        for (r, &b) in d[k].iter().enumerate() {
            out[first + r] += fw * b;
        }
    }
    out
}

fn check_dims(bases: &[SplineBasis1D], dims: usize) -> Result<()> {
    if bases.len() != dims {
        return Err(Error::DimensionMismatch { expected: dims, got: bases.len() });
    }
    Ok(())
}

impl QuadraticForm {
    /// Least-squares functional `½‖Lu − f‖²` over the box.
    pub fn least_squares(bases: &[SplineBasis1D], op: &[OpTerm], source: &SeparableFunction) -> Result<Self> {
        let d = bases.len();
        for t in op {
            check_dims(bases, t.factors.len())?;
            for (f, b) in t.factors.iter().zip(bases) {
                if f.deriv > b.order().min(2) {
                    return Err(crate::error::invalid("operator derivative exceeds the spline smoothness"));
                }
            }
        }
        for s in &source.terms {
            check_dims(bases, s.factors.len())?;
        }
        let pairs: Vec<(usize, usize)> = (0..op.len()).flat_map(|s| (0..op.len()).map(move |t| (s, t))).collect();
        let bilinear = pairs
            .par_iter()
            .map(|&(s, t)| {
                let mats = (0..d)
                    .map(|i| weighted_matrix(&bases[i], &op[s].factors[i], &op[t].factors[i]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(BilinearTerm { coef: op[s].coef * op[t].coef, mats })
            })
            .collect::<Result<Vec<_>>>()?;
        let rules: Vec<Rule1D> = bases.iter().map(load_rule).collect();
        let mut linear = Vec::new();
        for m in &source.terms {
            for t in op {
                let vecs = (0..d)
                    .map(|i| weighted_load(&bases[i], &rules[i], &m.factors[i], &t.factors[i]))
                    .collect();
                linear.push(LinearTerm { coef: m.coef * t.coef, vecs });
            }
        }
        let mut constant = 0.0;
        for a in &source.terms {
            for b in &source.terms {
                let mut prod = a.coef * b.coef;
                for i in 0..d {
                    prod *= rules[i].integrate(|x| a.factors[i].eval(x) * b.factors[i].eval(x));
                }
                constant += prod;
            }
        }
        Ok(Self {
            sizes: bases.iter().map(|b| b.n_funcs()).collect(),
            bilinear,
            linear,
            constant: 0.5 * constant,
        })
    }

    /// Energy functional `½∫∇u·∇u − ∫fu` for `−Δu = f`.
    pub fn dirichlet_energy(bases: &[SplineBasis1D], source: &SeparableFunction) -> Result<Self> {
        let d = bases.len();
        for s in &source.terms {
            check_dims(bases, s.factors.len())?;
        }
        let id = super::profile::OpFactor::identity();
        let dx = super::profile::OpFactor::derivative(1);
        let mass: Vec<DMatrix<f64>> = bases.iter().map(|b| weighted_matrix(b, &id, &id)).collect::<Result<_>>()?;
        let stiff: Vec<DMatrix<f64>> = bases.iter().map(|b| weighted_matrix(b, &dx, &dx)).collect::<Result<_>>()?;
        let bilinear = (0..d)
            .map(|k| BilinearTerm {
                coef: 1.0,
                mats: (0..d).map(|i| if i == k { stiff[i].clone() } else { mass[i].clone() }).collect(),
            })
            .collect();
        let rules: Vec<Rule1D> = bases.iter().map(load_rule).collect();
        let linear = source
            .terms
            .iter()
            .map(|m| LinearTerm {
                coef: m.coef,
                vecs: (0..d).map(|i| weighted_load(&bases[i], &rules[i], &m.factors[i], &id)).collect(),
            })
            .collect();
        Ok(Self {
            sizes: bases.iter().map(|b| b.n_funcs()).collect(),
            bilinear,
            linear,
            constant: 0.0,
        })
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    /// Change of variables `θ_i = T_i θ'_i` in every dimension.
    pub fn restrict(&self, transforms: &[DMatrix<f64>]) -> Self {
        Self {
            sizes: transforms.iter().map(|t| t.ncols()).collect(),
            bilinear: self
                .bilinear
                .iter()
                .map(|b| BilinearTerm {
                    coef: b.coef,
                    mats: b.mats.iter().zip(transforms).map(|(m, t)| t.transpose() * m * t).collect(),
                })
                .collect(),
            linear: self
                .linear
                .iter()
                .map(|l| LinearTerm {
                    coef: l.coef,
                    vecs: l.vecs.iter().zip(transforms).map(|(v, t)| t.transpose() * v).collect(),
                })
                .collect(),
            constant: self.constant,
        }
    }

    /// Per-term, per-dimension contractions of `f`.
    pub fn contract(&self, f: &Factors) -> Contractions {
        let mut c = Contractions {
            grams: vec![Vec::with_capacity(self.dims()); self.bilinear.len()],
            projections: vec![Vec::with_capacity(self.dims()); self.linear.len()],
        };
        for (b, g) in self.bilinear.iter().zip(&mut c.grams) {
            for (m, psi) in b.mats.iter().zip(&f.blocks) {
                g.push(psi.transpose() * m * psi);
            }
        }
        for (l, p) in self.linear.iter().zip(&mut c.projections) {
            for (v, psi) in l.vecs.iter().zip(&f.blocks) {
                p.push(psi.transpose() * v);
            }
        }
        c
    }

    /// Recompute the contractions of dimension `dim` only.
    pub fn refresh(&self, c: &mut Contractions, f: &Factors, dim: usize) {
        let psi = &f.blocks[dim];
        for (b, g) in self.bilinear.iter().zip(&mut c.grams) {
            g[dim] = psi.transpose() * &b.mats[dim] * psi;
        }
        for (l, p) in self.linear.iter().zip(&mut c.projections) {
            p[dim] = psi.transpose() * &l.vecs[dim];
        }
    }

    /// `a(u,u)` and `ℓ(u)` from cached contractions.
    pub fn parts_from(&self, c: &Contractions) -> (f64, f64) {
        let mut a = 0.0;
        for (b, g) in self.bilinear.iter().zip(&c.grams) {
            let mut h = g[0].clone() * b.coef;
            for gi in &g[1..] {
                h.component_mul_assign(gi);
            }
            a += h.sum();
        }
        let mut l = 0.0;
        for (t, p) in self.linear.iter().zip(&c.projections) {
            let mut h = p[0].clone() * t.coef;
            for pi in &p[1..] {
                h.component_mul_assign(pi);
            }
            l += h.sum();
        }
        (a, l)
    }

    /// `a(u,u)` and `ℓ(u)`.
    pub fn parts(&self, f: &Factors) -> (f64, f64) {
        self.parts_from(&self.contract(f))
    }

    pub fn energy_from(&self, c: &Contractions) -> f64 {
        let (a, l) = self.parts_from(c);
        0.5 * a - l + self.constant
    }

    pub fn energy(&self, f: &Factors) -> f64 {
        self.energy_from(&self.contract(f))
    }

    /// Normal equations of `J` in the block of dimension `active`, others
    /// fixed: returns `(A + λI, b)` with unknowns ordered mode-major.
    pub fn local_system(&self, f: &Factors, active: usize, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
        self.local_system_from(&self.contract(f), f.rank(), active, lambda)
    }

    pub fn local_system_from(
        &self,
        c: &Contractions,
        r: usize,
        active: usize,
        lambda: f64,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.sizes[active];
        let mut a = DMatrix::zeros(r * n, r * n);
        for (b, g) in self.bilinear.iter().zip(&c.grams) {
            let mut h = DMatrix::from_element(r, r, b.coef);
            for (i, gi) in g.iter().enumerate() {
                if i != active {
                    h.component_mul_assign(gi);
                }
            }
            let m = &b.mats[active];
            for j in 0..r {
                for j2 in 0..r {
                    let s = h[(j, j2)];
                    if s == 0.0 {
                        continue;
                    }
                    let mut blk = a.view_mut((j * n, j2 * n), (n, n));
                    blk += m * s;
                }
            }
        }
        let mut rhs = DVector::zeros(r * n);
        for (t, p) in self.linear.iter().zip(&c.projections) {
            let mut h = DVector::from_element(r, t.coef);
            for (i, pi) in p.iter().enumerate() {
                if i != active {
                    h.component_mul_assign(pi);
                }
            }
            let v = &t.vecs[active];
            for j in 0..r {
                rhs.rows_mut(j * n, n).axpy(h[j], v, 1.0);
            }
        }
        for k in 0..r * n {
            a[(k, k)] += lambda;
        }
        (a, rhs)
    }
}

/// Cached `ψ_iᵀ M ψ_i` (`R × R`) and `ψ_iᵀ v` (`R`) for every term and dimension.
#[derive(Debug, Clone)]
pub struct Contractions {
    pub grams: Vec<Vec<DMatrix<f64>>>,
    pub projections: Vec<Vec<DVector<f64>>>,
}

impl Contractions {
    /// Account for column `j` of dimension `dim` being multiplied by `s[j]`.
    pub fn scale_columns(&mut self, dim: usize, s: &[f64]) {
        for g in &mut self.grams {
            let m = &mut g[dim];
            for (j, &sj) in s.iter().enumerate() {
                m.row_mut(j).scale_mut(sj);
                m.column_mut(j).scale_mut(sj);
            }
        }
        for p in &mut self.projections {
            for (j, &sj) in s.iter().enumerate() {
                p[dim][j] *= sj;
            }
        }
    }
}
