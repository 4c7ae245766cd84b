use crate::error::{Error, Result};
use crate::splines::{OutOfDomain, SplineBasis1D};

/// Nonzero basis values for a fixed set of points, one row per (point, dimension).
///
/// Training evaluates the same points every epoch; caching the spline rows
/// removes the knot search and recursion from the inner loop.
#[derive(Debug, Clone)]
pub struct BasisCache {
    n_points: usize,
    dims: usize,
    width: usize,
    firsts: Vec<u32>,
    values: Vec<f64>,
}

impl BasisCache {
    /// `points` is row-major `n × d`.
    pub fn build(bases: &[SplineBasis1D], points: &[f64], policy: OutOfDomain) -> Result<Self> {
        let dims = bases.len();
        if dims == 0 || !points.len().is_multiple_of(dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: points.len(),
            });
        }
        let n_points = points.len() / dims;
        let width = bases.iter().map(|b| b.order() + 1).max().unwrap_or(1);
        let mut firsts = vec![0u32; n_points * dims];
        let mut values = vec![0.0; n_points * dims * width];
        for (pt, row) in points.chunks_exact(dims).enumerate() {
            for (i, (basis, &x)) in bases.iter().zip(row).enumerate() {
                let x = basis.resolve(x, policy)?;
                let slot = pt * dims + i;
                let out = &mut values[slot * width..slot * width + basis.order() + 1];
                firsts[slot] = basis.eval_into(x, out) as u32;
            }
        }
        Ok(Self {
            n_points,
            dims,
            width,
            firsts,
            values,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// First nonzero index and the value slice (padded to the widest basis).
    #[inline]
    pub fn row(&self, pt: usize, dim: usize) -> (usize, &[f64]) {
        let slot = pt * self.dims + dim;
        (
            self.firsts[slot] as usize,
            &self.values[slot * self.width..(slot + 1) * self.width],
        )
    }
}
