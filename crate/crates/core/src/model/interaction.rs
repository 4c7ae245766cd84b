//! General interaction-object separable models.
//!
//! Each support subset `S` carries a coefficient `c_S` and an atom that is a
//! product of univariate spline sub-atoms over the coordinates in `S`:
//!
//! ```text
//! f(x) = ρ( Σ_{S ∈ Supp} c_S Π_{i∈S} ψ_{S,i}(x_i) )
//! ```
//!
//! `max_order = 1` gives a generalised additive model, `max_order = 2` a
//! generalised quadratic model, and a single full subset reproduces a
//! rank-one CP model.

use std::collections::{BTreeMap, BTreeSet};

use super::activation::Activation;
use super::cache::BasisCache;
use super::cp::{dot, products_excluding};
use crate::error::{invalid, Error, Result};
use crate::splines::{OutOfDomain, SplineBasis1D};

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTerm {
    /// Sorted coordinate indices.
    pub subset: Vec<usize>,
    pub coefficient: f64,
    /// One coefficient vector per coordinate of `subset`, in the same order.
    pub factors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModel {
    bases: Vec<SplineBasis1D>,
    max_order: usize,
    terms: Vec<InteractionTerm>,
    activation: Activation,
}

impl InteractionModel {
    pub fn new(
        bases: Vec<SplineBasis1D>,
        max_order: usize,
        terms: Vec<InteractionTerm>,
        activation: Activation,
    ) -> Result<Self> {
        let d = bases.len();
        if d == 0 {
            return Err(invalid("a model needs at least one dimension"));
        }
        if max_order == 0 || max_order > d {
            return Err(invalid(format!(
                "interaction order must lie in 1..={d}, got {max_order}"
            )));
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            if t.subset.is_empty() || t.subset.len() > max_order {
                return Err(invalid(format!(
                    "subset {:?} violates 1 <= |S| <= {max_order}",
                    t.subset
                )));
            }
            if t.subset.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!(
                    "subset {:?} must be strictly increasing",
                    t.subset
                )));
            }
            if let Some(&i) = t.subset.iter().find(|&&i| i >= d) {
                return Err(invalid(format!("coordinate {i} out of range for d = {d}")));
            }
            if !seen.insert(t.subset.clone()) {
                return Err(invalid(format!("duplicate subset {:?}", t.subset)));
            }
            if t.factors.len() != t.subset.len() {
                return Err(Error::LengthMismatch(t.factors.len(), t.subset.len()));
            }
            for (&i, f) in t.subset.iter().zip(&t.factors) {
                if f.len() != bases[i].n_funcs() {
                    return Err(Error::LengthMismatch(f.len(), bases[i].n_funcs()));
                }
            }
        }
        Ok(Self {
            bases,
            max_order,
            terms,
            activation,
        })
    }

    /// Support made of every subset of size `1..=max_order`, atoms set to one.
    pub fn complete(
        bases: Vec<SplineBasis1D>,
        max_order: usize,
        activation: Activation,
    ) -> Result<Self> {
        let d = bases.len();
        let mut terms = Vec::new();
        for k in 1..=max_order.min(d) {
            for subset in combinations(d, k) {
                let factors = subset.iter().map(|&i| vec![1.0; bases[i].n_funcs()]).collect();
                terms.push(InteractionTerm {
                    subset,
                    coefficient: 1.0,
                    factors,
                });
            }
        }
        Self::new(bases, max_order, terms, activation)
    }

    /// Generalised additive model: one univariate atom per coordinate.
    pub fn additive(bases: Vec<SplineBasis1D>, activation: Activation) -> Result<Self> {
        Self::complete(bases, 1, activation)
    }

    /// Generalised quadratic model: all singletons and all pairs.
    pub fn quadratic(bases: Vec<SplineBasis1D>, activation: Activation) -> Result<Self> {
        Self::complete(bases, 2, activation)
    }

    pub fn dims(&self) -> usize {
        self.bases.len()
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn bases(&self) -> &[SplineBasis1D] {
        &self.bases
    }

    pub fn terms(&self) -> &[InteractionTerm] {
        &self.terms
    }

    pub fn terms_mut(&mut self) -> &mut [InteractionTerm] {
        &mut self.terms
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Every `c_S` plus every atom coefficient.
    pub fn parameter_count(&self) -> usize {
        self.terms
            .iter()
            .map(|t| 1 + t.factors.iter().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Flat parameters, term by term: `c_S` followed by the factor coefficients.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for t in &self.terms {
            p.push(t.coefficient);
            for f in &t.factors {
                p.extend_from_slice(f);
            }
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::LengthMismatch(params.len(), self.parameter_count()));
        }
        let mut k = 0;
        for t in &mut self.terms {
            t.coefficient = params[k];
            k += 1;
            for f in &mut t.factors {
                let n = f.len();
                f.copy_from_slice(&params[k..k + n]);
                k += n;
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: x.len(),
            });
        }
        if self.terms.is_empty() {
            return Err(Error::EmptySupport);
        }
        let cache = BasisCache::build(&self.bases, x, OutOfDomain::Error)?;
        let mut scratch = Vec::new();
        Ok(self.activation.apply(self.forward_cached(&cache, 0, &mut scratch)))
    }

    pub(crate) fn forward_cached(&self, cache: &BasisCache, pt: usize, scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        let mut s = 0.0;
        for t in &self.terms {
            let mut prod = 1.0;
            for (&i, f) in t.subset.iter().zip(&t.factors) {
                let (first, vals) = cache.row(pt, i);
                let w = self.bases[i].order() + 1;
                let v = dot(&vals[..w], &f[first..first + w]);
                scratch.push(v);
                prod *= v;
            }
            s += t.coefficient * prod;
        }
        s
    }

    pub(crate) fn backward_cached(
        &self,
        cache: &BasisCache,
        pt: usize,
        scratch: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        let mut k = 0;
        let mut s_off = 0;
        let widest = self.terms.iter().map(|t| t.subset.len()).max().unwrap_or(0);
        let mut others = vec![0.0f64; widest];
        for t in &self.terms {
            let m = t.subset.len();
            let vals_s = &scratch[s_off..s_off + m];
            s_off += m;
            let others = &mut others[..m];
            products_excluding(vals_s, others);
            grad[k] += scale * vals_s.iter().product::<f64>();
            k += 1;
            for (pos, (&i, f)) in t.subset.iter().zip(&t.factors).enumerate() {
                let (first, vals) = cache.row(pt, i);
                let w = self.bases[i].order() + 1;
                let g = scale * t.coefficient * others[pos];
                for (gk, b) in grad[k + first..k + first + w].iter_mut().zip(&vals[..w]) {
                    *gk += g * b;
                }
                k += f.len();
            }
        }
    }

    /// Canonical sparse embedding of the interaction coefficients.
    pub fn embed_interaction_tensor(&self) -> InteractionEmbedding {
        let d = self.dims();
        let entries = self
            .terms
            .iter()
            .filter(|t| t.coefficient != 0.0)
            .map(|t| (embed_index(&t.subset, d), t.coefficient))
            .collect();
        InteractionEmbedding { dims: d, entries }
    }
}

/// Sparse order-`d` tensor over `{0..d}^d` holding the interaction coefficients.
///
/// Subset `S = {i_1 < … < i_k}` sits at index `(i_1, …, i_k, i_k, …, i_k)`:
/// singletons land on the diagonal, pairs on off-diagonal slots.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEmbedding {
    pub dims: usize,
    pub entries: BTreeMap<Vec<usize>, f64>,
}

impl InteractionEmbedding {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Interaction order of an entry: the number of distinct axes in its index.
    pub fn entry_order(index: &[usize]) -> usize {
        index.iter().collect::<BTreeSet<_>>().len()
    }

    /// Largest interaction order present.
    pub fn max_order(&self) -> usize {
        self.entries
            .keys()
            .map(|k| Self::entry_order(k))
            .max()
            .unwrap_or(0)
    }
}

fn embed_index(subset: &[usize], d: usize) -> Vec<usize> {
    let last = *subset.last().expect("non-empty subset");
    let mut idx = subset.to_vec();
    idx.resize(d, last);
    idx
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> SplineBasis1D {
        SplineBasis1D::new(3, 3, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn additive_is_sum_of_curves() {
        let b = basis();
        let f0: Vec<f64> = (0..6).map(|k| k as f64 * 0.1).collect();
        let f1: Vec<f64> = (0..6).map(|k| 1.0 - k as f64 * 0.2).collect();
        let terms = vec![
            InteractionTerm {
                subset: vec![0],
                coefficient: 1.0,
                factors: vec![f0.clone()],
            },
            InteractionTerm {
                subset: vec![1],
                coefficient: 1.0,
                factors: vec![f1.clone()],
            },
        ];
        let m = InteractionModel::new(vec![b.clone(), b.clone()], 1, terms, Activation::Identity)
            .unwrap();
        let x = [0.3, 0.8];
        let want = b.eval(0.3, OutOfDomain::Error).unwrap().dot(&f0)
            + b.eval(0.8, OutOfDomain::Error).unwrap().dot(&f1);
        assert!((m.eval(&x).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_support() {
        let bases = vec![basis(); 3];
        let term = |subset: Vec<usize>| InteractionTerm {
            factors: subset.iter().map(|_| vec![1.0; 6]).collect(),
            subset,
            coefficient: 1.0,
        };
        assert!(InteractionModel::new(bases.clone(), 1, vec![term(vec![0, 1])], Activation::Identity).is_err());
        assert!(InteractionModel::new(bases.clone(), 2, vec![term(vec![1, 0])], Activation::Identity).is_err());
        assert!(InteractionModel::new(bases.clone(), 2, vec![term(vec![0]), term(vec![0])], Activation::Identity).is_err());
        assert!(InteractionModel::new(bases.clone(), 2, vec![term(vec![3])], Activation::Identity).is_err());
        assert!(InteractionModel::new(bases, 4, vec![], Activation::Identity).is_err());
    }

    #[test]
    fn empty_support_errors_on_eval() {
        let m = InteractionModel::new(vec![basis(); 2], 2, vec![], Activation::Identity).unwrap();
        assert!(matches!(m.eval(&[0.1, 0.2]), Err(Error::EmptySupport)));
        assert!(m.embed_interaction_tensor().is_empty());
    }

    #[test]
    fn embedding_patterns() {
        let add = InteractionModel::additive(vec![basis(); 4], Activation::Identity).unwrap();
        let e = add.embed_interaction_tensor();
        assert_eq!(e.nnz(), 4);
        for k in e.entries.keys() {
            assert!(k.iter().all(|&i| i == k[0]), "{k:?} not on the diagonal");
        }

        let mut pairs = InteractionModel::quadratic(vec![basis(); 3], Activation::Identity).unwrap();
        for t in pairs.terms_mut() {
            if t.subset.len() == 1 {
                t.coefficient = 0.0;
            }
        }
        let e = pairs.embed_interaction_tensor();
        let keys: Vec<_> = e.entries.keys().cloned().collect();
        assert_eq!(keys, vec![vec![0, 1, 1], vec![0, 2, 2], vec![1, 2, 2]]);
        assert_eq!(e.max_order(), 2);
    }

    #[test]
    fn combinations_count() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(6, 3).len(), 20);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert!(combinations(2, 3).is_empty());
    }
}
