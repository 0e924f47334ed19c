use crate::error::{invalid, mismatch, Error, Result};

/// Open ball `B(center, radius)` in ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("ball radius must be positive, got {radius}")));
        }
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("ball center must be a finite, non-empty point"));
        }
        Ok(Self { center, radius })
    }

    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Strict membership `|x - c| < r`.
    pub fn contains(&self, x: &[f64]) -> bool {
        dist2(x, &self.center) < self.radius * self.radius
    }

    /// Closed-ball membership with a relative slack for rounding.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        dist2(x, &self.center).sqrt() <= self.radius * (1.0 + 1e-12)
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.center.clone(), radius)
    }

    /// Closed ball `B̄(self.center, self.radius)` lies in `other`'s closure.
    pub fn is_inside(&self, other: &Ball) -> bool {
        dist2(&self.center, &other.center).sqrt() + self.radius <= other.radius * (1.0 + 1e-12)
    }

    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) * self.radius.powi(self.dim() as i32)
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

/// Lebesgue measure of the unit ball in ℝⁿ.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

/// Uniform Cartesian grid with node-centred samples.
///
/// Each axis `[lower, upper]` is split into `count` cells of width `h`, and the
/// sample node of a cell sits at its centre, `lower + (i + ½) h`. The same `h`
/// is used on every axis, so every node carries the volume `hⁿ` in the
/// midpoint rule. Nodes are numbered row-major (first axis slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    counts: Vec<usize>,
    spacing: f64,
}

impl Grid {
    pub fn new(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        let n = lower.len();
        if !(2..=3).contains(&n) {
            return Err(invalid(format!("grid dimension must be 2 or 3, got {n}")));
        }
        if upper.len() != n || counts.len() != n {
            return Err(mismatch("grid bounds and counts must have the same length"));
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(invalid("every axis needs at least 2 cells"));
        }
        let mut spacing = None::<f64>;
        for axis in 0..n {
            let extent = upper[axis] - lower[axis];
            if !(extent > 0.0) || !extent.is_finite() {
                return Err(invalid(format!("axis {axis} has non-positive extent")));
            }
            let h = extent / counts[axis] as f64;
            match spacing {
                None => spacing = Some(h),
                Some(h0) if ((h - h0) / h0).abs() > 1e-12 => {
                    return Err(invalid(format!(
                        "spacing differs between axes ({h0} vs {h})"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            lower: lower.to_vec(),
            counts: counts.to_vec(),
            spacing: spacing.unwrap(),
        })
    }

    /// `[lo, hi]ⁿ` with `cells` cells per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(&vec![lo; dim], &vec![hi; dim], &vec![cells; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.lower[axis] + self.counts[axis] as f64 * self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 0.5) * self.spacing
    }

    pub fn multi_index(&self, mut node: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            out[axis] = node % self.counts[axis];
            node /= self.counts[axis];
        }
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..].iter().product()
    }

    pub fn point_into(&self, node: usize, out: &mut [f64]) {
        let mut rest = node;
        for axis in (0..self.dim()).rev() {
            let i = rest % self.counts[axis];
            rest /= self.counts[axis];
            out[axis] = self.coordinate(axis, i);
        }
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.point_into(node, &mut x);
        x
    }

    /// Closed ball fits in the grid's bounding box.
    pub fn contains_ball(&self, ball: &Ball) -> bool {
        if ball.dim() != self.dim() {
            return false;
        }
        let tol = 1e-12 * (1.0 + ball.radius());
        (0..self.dim()).all(|axis| {
            let c = ball.center()[axis];
            c - ball.radius() >= self.lower[axis] - tol && c + ball.radius() <= self.upper(axis) + tol
        })
    }

    pub fn require_ball(&self, ball: &Ball) -> Result<()> {
        if ball.dim() != self.dim() {
            return Err(mismatch(format!(
                "ball lives in ℝ^{} but the grid is {}-dimensional",
                ball.dim(),
                self.dim()
            )));
        }
        if !self.contains_ball(ball) {
            return Err(Error::OutOfDomain(format!(
                "ball centred at {:?} with radius {} exceeds the grid bounds",
                ball.center(),
                ball.radius()
            )));
        }
        Ok(())
    }

    /// Nodes whose cell centre lies inside `ball`, in increasing order.
    pub fn nodes_in_ball(&self, ball: &Ball) -> Vec<usize> {
        let mut x = vec![0.0; self.dim()];
        (0..self.node_count())
            .filter(|&node| {
                self.point_into(node, &mut x);
                ball.contains(&x)
            })
            .collect()
    }

    /// Grid obtained by dropping `margin` nodes on every side.
    pub fn shrunk(&self, margin: usize) -> Result<Self> {
        if self.counts.iter().any(|&c| c < 2 * margin + 2) {
            return Err(Error::Precondition(format!(
                "shrinking by {margin} nodes leaves fewer than 2 nodes on some axis"
            )));
        }
        let lower: Vec<f64> = self
            .lower
            .iter()
            .map(|l| l + margin as f64 * self.spacing)
            .collect();
        let counts: Vec<usize> = self.counts.iter().map(|c| c - 2 * margin).collect();
        Ok(Self {
            lower,
            counts,
            spacing: self.spacing,
        })
    }

    /// Same bounds, `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            lower: self.lower.clone(),
            counts: self.counts.iter().map(|c| c * factor).collect(),
            spacing: self.spacing / factor as f64,
        }
    }
}

/// Borrowed `N × n` matrix, row-major; row = component, column = direction.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    rows: usize,
    cols: usize,
    data: &'a [f64],
}

impl<'a> MatRef<'a> {
    pub fn new(rows: usize, cols: usize, data: &'a [f64]) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }

    #[inline]
    pub fn get(&self, alpha: usize, i: usize) -> f64 {
        self.data[alpha * self.cols + i]
    }

    /// The entry written `z_n^1`: component 1, direction n.
    #[inline]
    pub fn last_direction_first_component(&self) -> f64 {
        self.data[self.cols - 1]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_owned(&self) -> GradientMatrix {
        GradientMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.to_vec(),
        }
    }
}

/// Dense `N × n` real matrix `z`, the second argument of a density.
///
/// Indices are zero-based: the usual `z_i^α` is `get(α - 1, i - 1)`, so
/// `z_n^1` is `get(0, n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GradientMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(mismatch(format!(
                "{} entries cannot form a {rows}×{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Matrix whose only non-zero entry is `z_n^1 = t`.
    pub fn last_direction_unit(rows: usize, cols: usize, t: f64) -> Self {
        let mut z = Self::zeros(rows, cols);
        z.data[cols - 1] = t;
        z
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef::new(self.rows, self.cols, &self.data)
    }

    pub fn get(&self, alpha: usize, i: usize) -> f64 {
        self.data[alpha * self.cols + i]
    }

    pub fn set(&mut self, alpha: usize, i: usize, v: f64) {
        self.data[alpha * self.cols + i] = v;
    }

    /// Frobenius norm `|z|`.
    pub fn norm(&self) -> f64 {
        self.view().norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn midpoint(&self, other: &Self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        }
    }
}
