//! Vector fields sampled on a uniform grid, their finite-difference
//! gradients, and midpoint-rule integrals over balls.

mod grid;
mod io;
mod truncation;

use rayon::prelude::*;

use crate::error::{invalid, mismatch, Result};

pub use grid::{unit_ball_volume, Ball, GradientMatrix, Grid, MatRef};
pub(crate) use grid::{dist, dist2};
pub use io::{read_field_csv, write_field_csv};
pub use truncation::{
    scalar_truncation, scalar_truncation_gradient, truncation_gradient_from, truncation_gradient_identity,
    vectorial_truncation,
};

/// `u : Ω → ℝᴺ` sampled at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: Grid,
    target_dim: usize,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(grid: Grid, target_dim: usize, values: Vec<f64>) -> Result<Self> {
        if target_dim == 0 {
            return Err(invalid("target dimension N must be at least 1"));
        }
        if values.len() != grid.node_count() * target_dim {
            return Err(mismatch(format!(
                "{} values do not match {} nodes × N = {}",
                values.len(),
                grid.node_count(),
                target_dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        Ok(Self {
            grid,
            target_dim,
            values,
        })
    }

    /// Samples `f(x, out)` at every node.
    pub fn from_fn<F>(grid: Grid, target_dim: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let n = grid.dim();
        let mut values = vec![0.0; grid.node_count() * target_dim];
        values
            .par_chunks_mut(target_dim)
            .enumerate()
            .for_each(|(node, out)| {
                let mut x = vec![0.0; n];
                grid.point_into(node, &mut x);
                f(&x, out);
            });
        Self::new(grid, target_dim, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.target_dim..(node + 1) * self.target_dim]
    }

    pub fn magnitude(&self, node: usize) -> f64 {
        self.value(node).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One `N × n` matrix per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    grid: Grid,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GradientField {
    pub fn new(grid: Grid, rows: usize, data: Vec<f64>) -> Result<Self> {
        let cols = grid.dim();
        if rows == 0 || data.len() != grid.node_count() * rows * cols {
            return Err(mismatch(format!(
                "{} entries do not match {} nodes × {rows}×{cols}",
                data.len(),
                grid.node_count()
            )));
        }
        Ok(Self {
            grid,
            rows,
            cols,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn stride(&self) -> usize {
        self.rows * self.cols
    }

    pub fn at(&self, node: usize) -> MatRef<'_> {
        let s = self.stride();
        MatRef::new(self.rows, self.cols, &self.data[node * s..(node + 1) * s])
    }

    /// Copies the matrices of `nodes` into a new field on `grid`.
    pub(crate) fn from_parts(grid: Grid, rows: usize, data: Vec<f64>) -> Self {
        let cols = grid.dim();
        debug_assert_eq!(data.len(), grid.node_count() * rows * cols);
        Self {
            grid,
            rows,
            cols,
            data,
        }
    }
}

/// Pointwise magnitude of a nodal field: Euclidean for vectors, Frobenius for matrices.
pub trait NodalField: Sync {
    fn grid(&self) -> &Grid;
    fn magnitude_at(&self, node: usize) -> f64;
}

impl NodalField for SampledField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn magnitude_at(&self, node: usize) -> f64 {
        self.magnitude(node)
    }
}

impl NodalField for GradientField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn magnitude_at(&self, node: usize) -> f64 {
        self.at(node).norm()
    }
}

/// Finite-difference partial derivative `∂_axis u^α` at one node.
fn partial(u: &SampledField, idx: &[usize], node: usize, axis: usize, alpha: usize) -> f64 {
    let g = u.grid();
    let stride = g.stride(axis);
    let n_axis = g.counts()[axis];
    let h = g.spacing();
    let nn = u.target_dim();
    let at = |k: usize| u.values[k * nn + alpha];
    let i = idx[axis];
    if i == 0 {
        (at(node + stride) - at(node)) / h
    } else if i == n_axis - 1 {
        (at(node) - at(node - stride)) / h
    } else {
        (at(node + stride) - at(node - stride)) / (2.0 * h)
    }
}

/// Gradient at a single node with the same stencil as [`discrete_gradient`].
pub fn gradient_at(u: &SampledField, node: usize) -> GradientMatrix {
    let g = u.grid();
    let n = g.dim();
    let mut idx = vec![0; n];
    g.multi_index(node, &mut idx);
    let mut z = GradientMatrix::zeros(u.target_dim(), n);
    for alpha in 0..u.target_dim() {
        for axis in 0..n {
            z.set(alpha, axis, partial(u, &idx, node, axis, alpha));
        }
    }
    z
}

/// Central differences at interior nodes, one-sided at the boundary.
pub fn discrete_gradient(u: &SampledField) -> Result<GradientField> {
    let g = u.grid();
    if u.values.len() != g.node_count() * u.target_dim() {
        return Err(mismatch("stored values do not match the declared N"));
    }
    let n = g.dim();
    let nn = u.target_dim();
    let mut data = vec![0.0; g.node_count() * nn * n];
    data.par_chunks_mut(nn * n).enumerate().for_each(|(node, out)| {
        let mut idx = vec![0; n];
        g.multi_index(node, &mut idx);
        for alpha in 0..nn {
            for axis in 0..n {
                out[alpha * n + axis] = partial(u, &idx, node, axis, alpha);
            }
        }
    });
    Ok(GradientField::from_parts(g.clone(), nn, data))
}

/// Midpoint rule over the nodes of `grid` inside `ball`:
/// `Σ integrand(node, x) hⁿ`. Node values are computed in parallel and summed
/// in node order, so the result does not depend on the thread count.
pub fn integrate_over_ball<F>(grid: &Grid, ball: &Ball, integrand: F) -> Result<f64>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    grid.require_ball(ball)?;
    Ok(sum_over_ball(grid, ball, integrand))
}

/// As [`integrate_over_ball`] without the containment check.
pub(crate) fn sum_over_ball<F>(grid: &Grid, ball: &Ball, integrand: F) -> f64
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    let n = grid.dim();
    let r2 = ball.radius() * ball.radius();
    let terms: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |x, node| {
                grid.point_into(node, x);
                if dist2(x, ball.center()) < r2 {
                    integrand(node, x)
                } else {
                    0.0
                }
            },
        )
        .collect();
    terms.iter().sum::<f64>() * grid.cell_volume()
}

/// `(∫_B |g|^p)^{1/p}` by the midpoint rule over cells whose centre lies in `region`.
pub fn lp_norm<G: NodalField>(g: &G, p: f64, region: &Ball) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("L^p exponent must be finite and ≥ 1, got {p}")));
    }
    let integral = integrate_over_ball(g.grid(), region, |node, _| g.magnitude_at(node).powf(p))?;
    Ok(integral.powf(1.0 / p))
}

/// `(∫_Ω |g|^p)^{1/p}` over the whole grid.
pub fn lp_norm_full<G: NodalField>(g: &G, p: f64) -> f64 {
    let terms: Vec<f64> = (0..g.grid().node_count())
        .into_par_iter()
        .map(|node| g.magnitude_at(node).powf(p))
        .collect();
    (terms.iter().sum::<f64>() * g.grid().cell_volume()).powf(1.0 / p)
}
