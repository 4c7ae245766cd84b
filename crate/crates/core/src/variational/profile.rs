//! Univariate building blocks for separable operators and source terms.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn one() -> Self {
        Self(vec![1.0])
    }

    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    /// `a + b x`.
    pub fn linear(a: f64, b: f64) -> Self {
        Self(vec![a, b])
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(Vec::new());
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }
}

/// Smooth univariate profile with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile1D {
    Constant {
        value: f64,
    },
    /// `exp(−(x − centre)² / 2σ²)`. With `wall_correction` the linear
    /// interpolant of its endpoint values on `domain` is subtracted, so the
    /// profile vanishes exactly at both ends.
    Gaussian {
        centre: f64,
        sigma: f64,
        wall_correction: Option<(f64, f64)>,
    },
    /// `sin(frequency · π · x)`.
    Sine {
        frequency: f64,
    },
    /// `exp(rate · x)`.
    Exp {
        rate: f64,
    },
}

impl Profile1D {
    pub fn value(&self, x: f64) -> f64 {
        self.deriv(0, x)
    }

    pub fn deriv(&self, k: usize, x: f64) -> f64 {
        match *self {
            Profile1D::Constant { value } => {
                if k == 0 {
                    value
                } else {
                    0.0
                }
            }
            Profile1D::Gaussian {
                centre,
                sigma,
                wall_correction,
            } => {
                let g = |x: f64| (-(x - centre).powi(2) / (2.0 * sigma * sigma)).exp();
                let s2 = sigma * sigma;
                let z = x - centre;
                let raw = match k {
                    0 => g(x),
                    1 => -z / s2 * g(x),
                    2 => (z * z / (s2 * s2) - 1.0 / s2) * g(x),
                    3 => (3.0 * z / (s2 * s2) - z * z * z / (s2 * s2 * s2)) * g(x),
                    _ => f64::NAN,
                };
                match wall_correction {
                    None => raw,
                    Some((a, b)) => {
                        let (ga, gb) = (g(a), g(b));
                        match k {
                            0 => raw - (ga * (b - x) + gb * (x - a)) / (b - a),
                            1 => raw - (gb - ga) / (b - a),
                            _ => raw,
                        }
                    }
                }
            }
            Profile1D::Sine { frequency } => {
                let w = frequency * std::f64::consts::PI;
                let (s, c) = (w * x).sin_cos();
                match k % 4 {
                    0 => w.powi(k as i32) * s,
                    1 => w.powi(k as i32) * c,
                    2 => -w.powi(k as i32) * s,
                    _ => -w.powi(k as i32) * c,
                }
            }
            Profile1D::Exp { rate } => rate.powi(k as i32) * (rate * x).exp(),
        }
    }

    pub fn max_derivative(&self) -> usize {
        match self {
            Profile1D::Gaussian { .. } => 3,
            _ => usize::MAX,
        }
    }
}

/// `weight(x) · profile⁽ᵏ⁾(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor1D {
    pub weight: Poly,
    pub profile: Profile1D,
    pub deriv: usize,
}

impl Factor1D {
    pub fn plain(profile: Profile1D) -> Self {
        Self {
            weight: Poly::one(),
            profile,
            deriv: 0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.weight.eval(x) * self.profile.deriv(self.deriv, x)
    }
}

/// One separable term `coef · Π_i factor_i(x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableTerm {
    pub coef: f64,
    pub factors: Vec<Factor1D>,
}

/// Finite sum of separable terms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeparableFunction {
    pub terms: Vec<SeparableTerm>,
}

impl SeparableFunction {
    pub fn rank_one(profiles: Vec<Profile1D>) -> Self {
        Self {
            terms: vec![SeparableTerm {
                coef: 1.0,
                factors: profiles.into_iter().map(Factor1D::plain).collect(),
            }],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.factors.iter().zip(x).map(|(f, &xi)| f.eval(xi)).product::<f64>())
            .sum()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.coef *= s);
        self
    }

    pub fn extend(&mut self, other: SeparableFunction) {
        self.terms.extend(other.terms);
    }
}

/// Univariate differential factor `weight(x) · ∂ᵏ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpFactor {
    pub weight: Poly,
    pub deriv: usize,
}

impl OpFactor {
    pub fn identity() -> Self {
        Self {
            weight: Poly::one(),
            deriv: 0,
        }
    }

    pub fn derivative(k: usize) -> Self {
        Self {
            weight: Poly::one(),
            deriv: k,
        }
    }

    pub fn weighted(weight: Poly) -> Self {
        Self { weight, deriv: 0 }
    }
}

/// `coef · Π_i (w_i ∂^{k_i})` acting dimension-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpTerm {
    pub coef: f64,
    pub factors: Vec<OpFactor>,
}

/// Linear operator that is a sum of separable terms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeparableOperator {
    pub dims: usize,
    pub terms: Vec<OpTerm>,
}

impl SeparableOperator {
    pub fn new(dims: usize) -> Self {
        Self { dims, terms: Vec::new() }
    }

    /// Add `coef · Π` with the given non-identity factors, identity elsewhere.
    pub fn push(&mut self, coef: f64, factors: &[(usize, OpFactor)]) -> Result<()> {
        let mut f = vec![OpFactor::identity(); self.dims];
        for (i, op) in factors {
            if *i >= self.dims {
                return Err(invalid(format!("operator factor dimension {i} out of range")));
            }
            f[*i] = op.clone();
        }
        self.terms.push(OpTerm { coef, factors: f });
        Ok(())
    }

    /// `L` applied to a separable function, itself separable.
    pub fn apply(&self, u: &SeparableFunction) -> SeparableFunction {
        let mut out = SeparableFunction::default();
        for t in &self.terms {
            for s in &u.terms {
                let factors = t
                    .factors
                    .iter()
                    .zip(&s.factors)
                    .map(|(op, f)| Factor1D {
                        weight: op.weight.mul(&f.weight),
                        profile: f.profile.clone(),
                        deriv: op.deriv + f.deriv,
                    })
                    .collect();
                out.terms.push(SeparableTerm {
                    coef: t.coef * s.coef,
                    factors,
                });
            }
        }
        out
    }

    pub fn max_deriv(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().map(|f| f.deriv))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(p: &Profile1D, k: usize, x: f64) -> f64 {
        let h = 1e-5;
        (p.deriv(k, x + h) - p.deriv(k, x - h)) / (2.0 * h)
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let profiles = [
            Profile1D::Gaussian { centre: 0.35, sigma: 0.08, wall_correction: Some((0.0, 1.0)) },
            Profile1D::Gaussian { centre: 0.5, sigma: 0.2, wall_correction: None },
            Profile1D::Sine { frequency: 2.0 },
            Profile1D::Exp { rate: -1.5 },
        ];
        for p in &profiles {
            for k in 0..3 {
                for &x in &[0.1, 0.33, 0.7] {
                    let a = p.deriv(k + 1, x);
                    let b = fd(p, k, x);
                    assert!((a - b).abs() < 1e-5 * (1.0 + a.abs()), "{p:?} k={k} x={x}: {a} {b}");
                }
            }
        }
    }

    #[test]
    fn corrected_gaussian_vanishes_on_walls() {
        let p = Profile1D::Gaussian { centre: 0.2, sigma: 0.15, wall_correction: Some((0.0, 1.0)) };
        assert_eq!(p.value(0.0), 0.0);
        assert!(p.value(1.0).abs() < 1e-17);
    }

    #[test]
    fn operator_application_matches_direct_formula() {
        // L = ∂_t − ∂_xx on sin(πx)·e^{−t}.
        let mut op = SeparableOperator::new(2);
        op.push(1.0, &[(1, OpFactor::derivative(1))]).unwrap();
        op.push(-1.0, &[(0, OpFactor::derivative(2))]).unwrap();
        let u = SeparableFunction::rank_one(vec![Profile1D::Sine { frequency: 1.0 }, Profile1D::Exp { rate: -1.0 }]);
        let lu = op.apply(&u);
        let pi2 = std::f64::consts::PI.powi(2);
        for &(x, t) in &[(0.3f64, 0.2f64), (0.8, 0.9)] {
            let expect = (pi2 - 1.0) * (std::f64::consts::PI * x).sin() * (-t).exp();
            assert!((lu.eval(&[x, t]) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn poly_product() {
        let p = Poly::linear(-0.5, 1.0).mul(&Poly::linear(0.0, 2.0));
        assert_eq!(p.0, vec![0.0, -1.0, 2.0]);
        assert_eq!(p.eval(2.0), 6.0);
    }
}
