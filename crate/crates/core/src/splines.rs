//! Univariate B-spline bases used as sub-atoms.
//!
//! A basis of degree `P` over `C` interior cells carries `C + P` functions.
//! With the default [`KnotLayout::UniformGhost`] layout the knot vector is
//! extended by `P` equally spaced knots beyond each end of the domain, so
//! every function is a translate of the same cardinal B-spline and the
//! functions still sum to one everywhere on `[a, b]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::Rule1D;

/// Placement of the knots outside the interior cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotLayout {
    /// `P` uniformly spaced ghost knots beyond each end.
    #[default]
    UniformGhost,
    /// `P + 1` repeated knots at each end (open/clamped).
    Clamped,
}

/// What to do with evaluation points outside `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfDomain {
    #[default]
    Error,
    Clamp,
}

/// Relative slack (in units of the domain width) before a point counts as outside.
const DOMAIN_SLACK: f64 = 1e-12;

/// Nonzero basis values at one point: entries `first..first + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow {
    pub first: usize,
    pub values: Vec<f64>,
}

impl BasisRow {
    /// Expand to a dense vector of length `n`.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        out[self.first..self.first + self.values.len()].copy_from_slice(&self.values);
        out
    }

    /// `Σ_c coeffs[c] B_c(x)`.
    pub fn dot(&self, coeffs: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&coeffs[self.first..])
            .map(|(b, a)| b * a)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis1D {
    order: usize,
    interior_cells: usize,
    domain: (f64, f64),
    layout: KnotLayout,
    knots: Vec<f64>,
}

impl SplineBasis1D {
    /// Uniform-ghost basis of degree `order` over `interior_cells` cells of `domain`.
    pub fn new(order: usize, interior_cells: usize, domain: (f64, f64)) -> Result<Self> {
        Self::with_layout(order, interior_cells, domain, KnotLayout::UniformGhost)
    }

    pub fn with_layout(
        order: usize,
        interior_cells: usize,
        domain: (f64, f64),
        layout: KnotLayout,
    ) -> Result<Self> {
        if order < 1 {
            return Err(invalid(format!("spline order must be >= 1, got {order}")));
        }
        if interior_cells < 1 {
            return Err(invalid(format!(
                "interior cell count must be >= 1, got {interior_cells}"
            )));
        }
        let (a, b) = domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid(format!("empty or non-finite domain [{a}, {b}]")));
        }
        let knots = build_knots(order, interior_cells, a, b, layout);
        Ok(Self {
            order,
            interior_cells,
            domain,
            layout,
            knots,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior_cells(&self) -> usize {
        self.interior_cells
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn layout(&self) -> KnotLayout {
        self.layout
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_funcs(&self) -> usize {
        self.interior_cells + self.order
    }

    /// Cell boundaries inside the domain, `a` and `b` included.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots[self.order..=self.order + self.interior_cells]
    }

    /// Resolve `x` against the domain according to `policy`.
    pub fn resolve(&self, x: f64, policy: OutOfDomain) -> Result<f64> {
        let (a, b) = self.domain;
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("evaluation point {x}")));
        }
        if x >= a && x <= b {
            return Ok(x);
        }
        let slack = DOMAIN_SLACK * (b - a);
        if policy == OutOfDomain::Clamp || (x >= a - slack && x <= b + slack) {
            Ok(x.clamp(a, b))
        } else {
            Err(Error::DomainViolation {
                value: x,
                lo: a,
                hi: b,
            })
        }
    }

    /// Knot span index `s` with `knots[s] <= x < knots[s + 1]`, restricted to
    /// the interior spans; `x = b` maps to the last span.
    fn span(&self, x: f64) -> usize {
        let p = self.order;
        let last = p + self.interior_cells - 1;
        let interior = &self.knots[p + 1..=last];
        p + interior.partition_point(|&k| k <= x)
    }

    /// Nonzero basis values at an in-domain `x`, written into `out[..=P]`.
    /// Returns the index of the first nonzero function.
    ///
    /// `x` is not range-checked; callers resolve it first.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) -> usize {
        let p = self.order;
        let s = self.span(x);
        let k = &self.knots;
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        debug_assert!(p < 16);
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - k[s + 1 - j];
            right[j] = k[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        s - p
    }

    /// Basis values at `x`, at most `P + 1` nonzeros.
    pub fn eval(&self, x: f64, policy: OutOfDomain) -> Result<BasisRow> {
        let x = self.resolve(x, policy)?;
        let mut values = vec![0.0; self.order + 1];
        let first = self.eval_into(x, &mut values);
        Ok(BasisRow { first, values })
    }

    /// Values and derivatives up to `n_derivs` (inclusive) at an in-domain `x`.
    /// `ders[k][r]` holds the `k`-th derivative of function `first + r`.
    pub fn eval_derivs_into(&self, x: f64, n_derivs: usize, ders: &mut [Vec<f64>]) -> usize {
        let p = self.order;
        let s = self.span(x);
        let k = &self.knots;
        let mut ndu = vec![vec![0.0f64; p + 1]; p + 1];
        let mut left = vec![0.0f64; p + 1];
        let mut right = vec![0.0f64; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - k[s + 1 - j];
            right[j] = k[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let n = n_derivs.min(p);
        let mut a = [vec![0.0f64; p + 1], vec![0.0f64; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1: usize = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2: usize = if r as isize - 1 <= pk as isize { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for kk in 1..=n {
            for v in ders[kk].iter_mut() {
                *v *= factor;
            }
            factor *= (p - kk) as f64;
        }
        for row in ders.iter_mut().take(n_derivs + 1).skip(n + 1) {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        s - p
    }

    /// `deriv_order`-th derivative of every basis function at `x`.
    pub fn eval_deriv(&self, x: f64, deriv_order: usize, policy: OutOfDomain) -> Result<BasisRow> {
        if deriv_order > self.order {
            return Err(invalid(format!(
                "derivative order {deriv_order} exceeds spline order {}",
                self.order
            )));
        }
        let x = self.resolve(x, policy)?;
        if deriv_order == 0 {
            let mut values = vec![0.0; self.order + 1];
            let first = self.eval_into(x, &mut values);
            return Ok(BasisRow { first, values });
        }
        let mut ders = vec![vec![0.0; self.order + 1]; deriv_order + 1];
        let first = self.eval_derivs_into(x, deriv_order, &mut ders);
        Ok(BasisRow {
            first,
            values: ders.swap_remove(deriv_order),
        })
    }

    /// Dense value vector of length `n_funcs`.
    pub fn eval_dense(&self, x: f64, deriv_order: usize) -> Result<Vec<f64>> {
        Ok(self
            .eval_deriv(x, deriv_order, OutOfDomain::Error)?
            .to_dense(self.n_funcs()))
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            order: self.order,
            interior_cells: self.interior_cells,
            domain: [self.domain.0, self.domain.1],
            layout: self.layout,
            knots: self.knots.clone(),
        }
    }

    pub fn from_descriptor(desc: &BasisDescriptor) -> Result<Self> {
        let basis = Self::with_layout(
            desc.order,
            desc.interior_cells,
            (desc.domain[0], desc.domain[1]),
            desc.layout,
        )?;
        if basis.knots != desc.knots {
            return Err(Error::Parse(
                "knot vector does not match the declared layout".into(),
            ));
        }
        Ok(basis)
    }
}

fn build_knots(p: usize, c: usize, a: f64, b: f64, layout: KnotLayout) -> Vec<f64> {
    let h = (b - a) / c as f64;
    (0..=c + 2 * p)
        .map(|k| {
            let offset = k as isize - p as isize;
            match layout {
                _ if offset == 0 => a,
                _ if offset == c as isize => b,
                KnotLayout::UniformGhost => a + offset as f64 * h,
                KnotLayout::Clamped if offset < 0 => a,
                KnotLayout::Clamped if offset > c as isize => b,
                KnotLayout::Clamped => a + offset as f64 * h,
            }
        })
        .collect()
}

/// Serialisable basis record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub order: usize,
    pub interior_cells: usize,
    pub domain: [f64; 2],
    #[serde(default)]
    pub layout: KnotLayout,
    pub knots: Vec<f64>,
}

/// Derivative orders and quadrature density for a 1D integral matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegralMatrixSpec {
    pub derivative_order_left: usize,
    pub derivative_order_right: usize,
    pub quadrature_points_per_cell: usize,
}

impl IntegralMatrixSpec {
    pub fn new(left: usize, right: usize, points: usize) -> Self {
        Self {
            derivative_order_left: left,
            derivative_order_right: right,
            quadrature_points_per_cell: points,
        }
    }

    /// Mass matrix with the exact default `P + 1` points per cell.
    pub fn mass(order: usize) -> Self {
        Self::new(0, 0, order + 1)
    }

    fn validate(&self, left: &SplineBasis1D, right: &SplineBasis1D) -> Result<()> {
        if self.derivative_order_left > 2 || self.derivative_order_right > 2 {
            return Err(invalid("derivative orders above 2 are not supported"));
        }
        if self.derivative_order_left > left.order() || self.derivative_order_right > right.order()
        {
            return Err(invalid("derivative order exceeds the spline order"));
        }
        if self.quadrature_points_per_cell == 0 {
            return Err(invalid("quadrature needs at least one point per cell"));
        }
        let (la, lb) = left.domain();
        let (ra, rb) = right.domain();
        if la != ra || lb != rb {
            return Err(Error::DomainMismatch(la, lb, ra, rb));
        }
        Ok(())
    }
}

/// Composite Gauss rule over the union of both bases' cells.
pub fn joint_rule(left: &SplineBasis1D, right: &SplineBasis1D, points_per_cell: usize) -> Rule1D {
    let mut breaks: Vec<f64> = left
        .breakpoints()
        .iter()
        .chain(right.breakpoints())
        .copied()
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Rule1D::composite(&breaks, points_per_cell)
}

/// `M[p][q] = ∫ D^{kl} B_p · D^{kr} B_q dx`.
pub fn integral_matrix(
    left: &SplineBasis1D,
    right: &SplineBasis1D,
    spec: IntegralMatrixSpec,
) -> Result<Vec<Vec<f64>>> {
    integral_matrix_weighted(left, right, spec, |_| 1.0)
}

/// `M[p][q] = ∫ w(x) · D^{kl} B_p · D^{kr} B_q dx`.
pub fn integral_matrix_weighted(
    left: &SplineBasis1D,
    right: &SplineBasis1D,
    spec: IntegralMatrixSpec,
    weight: impl Fn(f64) -> f64,
) -> Result<Vec<Vec<f64>>> {
    spec.validate(left, right)?;
    let rule = joint_rule(left, right, spec.quadrature_points_per_cell);
    let (kl, kr) = (spec.derivative_order_left, spec.derivative_order_right);
    let mut out = vec![vec![0.0; right.n_funcs()]; left.n_funcs()];
    let mut dl = vec![vec![0.0; left.order() + 1]; kl + 1];
    let mut dr = vec![vec![0.0; right.order() + 1]; kr + 1];
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        let fl = left.eval_derivs_into(x, kl, &mut dl);
        let fr = right.eval_derivs_into(x, kr, &mut dr);
        let ww = w * weight(x);
        for (p, &bl) in dl[kl].iter().enumerate() {
            let row = &mut out[fl + p];
            for (q, &br) in dr[kr].iter().enumerate() {
                row[fr + q] += ww * bl * br;
            }
        }
    }
    Ok(out)
}

/// `g[p] = ∫ D^k B_p · f(x) dx` with `points_per_cell` Gauss points per cell.
pub fn load_vector(
    basis: &SplineBasis1D,
    deriv_order: usize,
    points_per_cell: usize,
    f: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if deriv_order > basis.order() {
        return Err(invalid("derivative order exceeds the spline order"));
    }
    let rule = Rule1D::composite(basis.breakpoints(), points_per_cell);
    let mut out = vec![0.0; basis.n_funcs()];
    let mut d = vec![vec![0.0; basis.order() + 1]; deriv_order + 1];
    for (&x, &w) in rule.points.iter().zip(&rule.weights) {
        let first = basis.eval_derivs_into(x, deriv_order, &mut d);
        let fw = w * f(x);
        for (r, &b) in d[deriv_order].iter().enumerate() {
            out[first + r] += fw * b;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook Cox–de Boor recursion with the half-open convention, closing
    /// the last nonempty interval at its right end.
    fn cox_de_boor(knots: &[f64], i: usize, p: usize, x: f64, right_end: f64) -> f64 {
        if p == 0 {
            let (lo, hi) = (knots[i], knots[i + 1]);
            let inside = if x == right_end {
                hi == right_end && lo < hi
            } else {
                lo <= x && x < hi
            };
            if inside {
                return 1.0;
            }
            return 0.0;
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, x, right_end);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - x) / d2 * cox_de_boor(knots, i + 1, p - 1, x, right_end);
        }
        v
    }

    fn oracle_dense(b: &SplineBasis1D, x: f64) -> Vec<f64> {
        (0..b.n_funcs())
            .map(|i| cox_de_boor(b.knots(), i, b.order(), x, b.domain().1))
            .collect()
    }

    #[test]
    fn function_count_is_cells_plus_order() {
        let b = SplineBasis1D::new(3, 5, (0.0, 1.0)).unwrap();
        assert_eq!(b.n_funcs(), 8);
        assert_eq!(b.knots().len(), 5 + 2 * 3 + 1);
    }

    #[test]
    fn linear_hats_at_midpoint() {
        let b = SplineBasis1D::new(1, 1, (0.0, 1.0)).unwrap();
        let row = b.eval(0.5, OutOfDomain::Error).unwrap();
        assert_eq!(row.to_dense(2), vec![0.5, 0.5]);
    }

    #[test]
    fn invalid_construction() {
        assert!(SplineBasis1D::new(0, 3, (0.0, 1.0)).is_err());
        assert!(SplineBasis1D::new(3, 0, (0.0, 1.0)).is_err());
        assert!(SplineBasis1D::new(3, 3, (1.0, 1.0)).is_err());
        assert!(SplineBasis1D::new(3, 3, (2.0, 1.0)).is_err());
    }

    #[test]
    fn single_cell_cubic_matches_recursion() {
        for layout in [KnotLayout::UniformGhost, KnotLayout::Clamped] {
            let b = SplineBasis1D::with_layout(3, 1, (0.0, 1.0), layout).unwrap();
            for k in 0..=50 {
                let x = k as f64 / 50.0;
                let got = b.eval(x, OutOfDomain::Error).unwrap().to_dense(4);
                let want = oracle_dense(&b, x);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-14, "{layout:?} x={x}: {got:?} vs {want:?}");
                }
            }
        }
    }

    #[test]
    fn clamped_single_cell_is_bernstein() {
        let b = SplineBasis1D::with_layout(3, 1, (0.0, 1.0), KnotLayout::Clamped).unwrap();
        let x: f64 = 0.3;
        let got = b.eval(x, OutOfDomain::Error).unwrap().to_dense(4);
        let want = [
            (1.0 - x).powi(3),
            3.0 * x * (1.0 - x).powi(2),
            3.0 * x * x * (1.0 - x),
            x.powi(3),
        ];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_domain_policy() {
        let b = SplineBasis1D::new(3, 4, (0.0, 1.0)).unwrap();
        assert!(matches!(
            b.eval(1.5, OutOfDomain::Error),
            Err(Error::DomainViolation { .. })
        ));
        let clamped = b.eval(1.5, OutOfDomain::Clamp).unwrap();
        assert_eq!(clamped, b.eval(1.0, OutOfDomain::Error).unwrap());
        assert!(b.eval(1.0 + 1e-15, OutOfDomain::Error).is_ok());
    }

    #[test]
    fn continuity_across_knots() {
        let b = SplineBasis1D::new(3, 8, (0.0, 1.0)).unwrap();
        for k in 1..8 {
            let x = k as f64 / 8.0;
            let lo = b.eval(x - 1e-12, OutOfDomain::Error).unwrap().to_dense(11);
            let hi = b.eval(x + 1e-12, OutOfDomain::Error).unwrap().to_dense(11);
            for (l, h) in lo.iter().zip(&hi) {
                assert!((l - h).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn derivative_order_zero_is_identity() {
        let b = SplineBasis1D::new(3, 6, (-1.0, 2.0)).unwrap();
        for k in 0..=30 {
            let x = -1.0 + 3.0 * k as f64 / 30.0;
            assert_eq!(
                b.eval_deriv(x, 0, OutOfDomain::Error).unwrap(),
                b.eval(x, OutOfDomain::Error).unwrap()
            );
        }
        assert!(b.eval_deriv(0.5, 4, OutOfDomain::Error).is_err());
    }

    #[test]
    fn derivatives_sum_to_zero() {
        let b = SplineBasis1D::new(3, 7, (0.0, 1.0)).unwrap();
        for k in 1..100 {
            let x = k as f64 / 100.0;
            for order in 1..=3 {
                let s: f64 = b.eval_deriv(x, order, OutOfDomain::Error).unwrap().values.iter().sum();
                assert!(s.abs() < 1e-9, "order {order} x={x} sum={s}");
            }
        }
    }

    #[test]
    fn hat_stiffness() {
        let b = SplineBasis1D::new(1, 1, (0.0, 1.0)).unwrap();
        let k = integral_matrix(&b, &b, IntegralMatrixSpec::new(1, 1, 2)).unwrap();
        let want = [[1.0, -1.0], [-1.0, 1.0]];
        for p in 0..2 {
            for q in 0..2 {
                assert!((k[p][q] - want[p][q]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_matrix_total_is_domain_length() {
        let b = SplineBasis1D::new(3, 5, (0.5, 3.0)).unwrap();
        let m = integral_matrix(&b, &b, IntegralMatrixSpec::mass(3)).unwrap();
        let total: f64 = m.iter().flatten().sum();
        assert!((total - 2.5).abs() < 1e-13);
        let rule = Rule1D::composite(b.breakpoints(), 4);
        for (p, row) in m.iter().enumerate() {
            let integral: f64 = rule.integrate(|x| b.eval_dense(x, 0).unwrap()[p]);
            let rs: f64 = row.iter().sum();
            assert!((rs - integral).abs() < 1e-14);
        }
    }

    #[test]
    fn integral_matrix_rejects_mismatched_domains() {
        let a = SplineBasis1D::new(3, 5, (0.0, 1.0)).unwrap();
        let b = SplineBasis1D::new(3, 5, (0.0, 2.0)).unwrap();
        assert!(matches!(
            integral_matrix(&a, &b, IntegralMatrixSpec::mass(3)),
            Err(Error::DomainMismatch(..))
        ));
        assert!(integral_matrix(&a, &a, IntegralMatrixSpec::new(3, 0, 4)).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let b = SplineBasis1D::new(3, 7, (0.1, 0.9)).unwrap();
        let json = serde_json::to_string(&b.descriptor()).unwrap();
        let back: BasisDescriptor = serde_json::from_str(&json).unwrap();
        let rebuilt = SplineBasis1D::from_descriptor(&back).unwrap();
        assert_eq!(rebuilt, b);
        for (k1, k2) in rebuilt.knots().iter().zip(b.knots()) {
            assert_eq!(k1.to_bits(), k2.to_bits());
        }
    }
}
