use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;

use super::mollifier::{DiscreteKernel, MollifierSpec};
use super::testfields::TestField;
use crate::conditions::check_convexity_sampled;
use crate::densities::DensitySpec;
use crate::error::{invalid, Error, Result};
use crate::fields::{Grid, MatRef};
use crate::sampling::SamplerConfig;

/// Descent settings shared by both classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stationarity threshold on `max |∂E/∂uᵢ| / hⁿ`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// L-BFGS memory.
    pub memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 20_000,
            memory: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LavrentievConfig {
    /// Square domain `[lo, hi]²`.
    pub lo: f64,
    pub hi: f64,
    /// Cells per side for each mesh level.
    pub meshes: Vec<usize>,
    /// Smooth-class mollifier radius in units of the mesh size.
    pub eps_factor: f64,
    pub solver: SolverConfig,
    /// Seed for the convexity pre-check.
    pub seed: u64,
}

impl LavrentievConfig {
    pub fn new(meshes: Vec<usize>, seed: u64) -> Self {
        Self {
            lo: -1.0,
            hi: 1.0,
            meshes,
            eps_factor: 2.0,
            solver: SolverConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub energy: f64,
    /// `max |∂E/∂uᵢ| / hⁿ` at this iterate.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOutcome {
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<IterRecord>,
}

/// Both discrete infima at one mesh level.
#[derive(Debug, Clone, PartialEq)]
pub struct LavrentievProbeResult {
    pub cells: usize,
    pub h: f64,
    pub eps_y: f64,
    pub full: DescentOutcome,
    pub smooth: DescentOutcome,
}

impl LavrentievProbeResult {
    pub fn inf_full(&self) -> f64 {
        self.full.energy
    }

    pub fn inf_smooth(&self) -> f64 {
        self.smooth.energy
    }

    pub fn gap(&self) -> f64 {
        self.smooth.energy - self.full.energy
    }

    pub fn relative_gap(&self) -> f64 {
        self.gap() / self.full.energy.abs().max(f64::MIN_POSITIVE)
    }

    pub fn converged(&self) -> bool {
        self.full.converged && self.smooth.converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LavrentievProbe {
    pub levels: Vec<LavrentievProbeResult>,
}

impl LavrentievProbe {
    pub const CSV_HEADER: &'static str =
        "cells,h,eps_y,inf_full,inf_smooth,gap,relative_gap,iters_full,iters_smooth,residual_full,residual_smooth,converged";

    pub fn finest(&self) -> Option<&LavrentievProbeResult> {
        self.levels.last()
    }

    /// Relative gaps strictly decrease from coarse to fine.
    pub fn gap_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].relative_gap() < w[0].relative_gap())
    }

    pub fn all_converged(&self) -> bool {
        self.levels.iter().all(|l| l.converged())
    }

    pub fn write_csv<W: Write>(&self, mut out: W, metadata: &[(String, String)]) -> std::io::Result<()> {
        for (k, v) in metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "# residual = max |dE/du_i| / h^n at the returned iterate")?;
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for l in &self.levels {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                l.cells,
                l.h,
                l.eps_y,
                l.inf_full(),
                l.inf_smooth(),
                l.gap(),
                l.relative_gap(),
                l.full.iterations,
                l.smooth.iterations,
                l.full.residual,
                l.smooth.residual,
                l.converged()
            )?;
        }
        Ok(())
    }

    /// Per-iteration log of every solve, one row per iterate.
    pub fn write_log_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cells,class,iteration,energy,residual")?;
        for l in &self.levels {
            for (class, o) in [("full", &l.full), ("smooth", &l.smooth)] {
                for r in &o.log {
                    writeln!(out, "{},{class},{},{},{}", l.cells, r.iteration, r.energy, r.residual)?;
                }
            }
        }
        Ok(())
    }
}

/// Uniform P1 triangulation of a square, every cell cut along its rising diagonal.
struct Mesh {
    cells: usize,
    lo: f64,
    h: f64,
}

impl Mesh {
    fn side(&self) -> usize {
        self.cells + 1
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * self.side() + j
    }

    fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.h
    }

    fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.cells || j == self.cells
    }

    /// Energy of nodal values `u` and its gradient with respect to every node.
    fn energy_and_grad(&self, f: &DensitySpec, u: &[f64], grad: &mut [f64]) -> f64 {
        let h = self.h;
        let area = 0.5 * h * h;
        let per_cell: Vec<(f64, [f64; 4])> = (0..self.cells * self.cells)
            .into_par_iter()
            .map(|c| {
                let (i, j) = (c / self.cells, c % self.cells);
                let u00 = u[self.node(i, j)];
                let u10 = u[self.node(i + 1, j)];
                let u01 = u[self.node(i, j + 1)];
                let u11 = u[self.node(i + 1, j + 1)];
                let (x, y) = (self.coord(i), self.coord(j));
                let mut e = 0.0;
                // contributions to u00, u10, u01, u11
                let mut g = [0.0; 4];

                let z = [(u10 - u00) / h, (u11 - u10) / h];
                let xc = [x + 2.0 * h / 3.0, y + h / 3.0];
                let zm = MatRef::new(1, 2, &z);
                e += area * f.value(&xc, zm);
                let mut d = [0.0; 2];
                f.add_grad_z(&xc, zm, &mut d);
                let (g0, g1) = (d[0] * area / h, d[1] * area / h);
                g[0] -= g0;
                g[1] += g0 - g1;
                g[3] += g1;

                let z = [(u11 - u01) / h, (u01 - u00) / h];
                let xc = [x + h / 3.0, y + 2.0 * h / 3.0];
                let zm = MatRef::new(1, 2, &z);
                e += area * f.value(&xc, zm);
                let mut d = [0.0; 2];
                f.add_grad_z(&xc, zm, &mut d);
                let (g0, g1) = (d[0] * area / h, d[1] * area / h);
                g[3] += g0;
                g[2] += g1 - g0;
                g[0] -= g1;
                (e, g)
            })
            .collect();
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (c, (e, g)) in per_cell.into_iter().enumerate() {
            let (i, j) = (c / self.cells, c % self.cells);
            total += e;
            grad[self.node(i, j)] += g[0];
            grad[self.node(i + 1, j)] += g[1];
            grad[self.node(i, j + 1)] += g[2];
            grad[self.node(i + 1, j + 1)] += g[3];
        }
        total
    }
}

/// Linear parametrisation `u = base + P w` of an admissible class.
trait Class {
    fn dim(&self) -> usize;
    fn expand(&self, w: &[f64], u: &mut [f64]);
    /// `Pᵀ g`.
    fn pull_back(&self, g: &[f64], out: &mut [f64]);
}

/// Free interior nodes.
struct FullClass {
    base: Vec<f64>,
    interior: Vec<usize>,
}

impl Class for FullClass {
    fn dim(&self) -> usize {
        self.interior.len()
    }

    fn expand(&self, w: &[f64], u: &mut [f64]) {
        u.copy_from_slice(&self.base);
        for (&node, &v) in self.interior.iter().zip(w) {
            u[node] = v;
        }
    }

    fn pull_back(&self, g: &[f64], out: &mut [f64]) {
        for (o, &node) in out.iter_mut().zip(&self.interior) {
            *o = g[node];
        }
    }
}

/// `u = G + φ_ε * w`, with `w` supported far enough from the edge that the
/// mollified part vanishes on the boundary.
struct SmoothClass {
    base: Vec<f64>,
    side: usize,
    support: Vec<(usize, usize)>,
    stencil: Vec<(isize, isize, f64)>,
}

impl SmoothClass {
    fn new(mesh: &Mesh, base: Vec<f64>, kernel: &DiscreteKernel) -> Result<Self> {
        let stencil: Vec<(isize, isize, f64)> = kernel
            .offsets
            .iter()
            .zip(&kernel.weights)
            .map(|(k, &w)| (k[0], k[1], w))
            .collect();
        let reach = stencil
            .iter()
            .map(|&(a, b, _)| a.unsigned_abs().max(b.unsigned_abs()))
            .max()
            .unwrap_or(0);
        let first = reach + 1;
        if mesh.cells < 2 * first {
            return Err(Error::Precondition(format!(
                "mesh with {} cells is too coarse for the smooth class",
                mesh.cells
            )));
        }
        let last = mesh.cells - first;
        let support = (first..=last).flat_map(|i| (first..=last).map(move |j| (i, j))).collect();
        Ok(Self {
            base,
            side: mesh.side(),
            support,
            stencil,
        })
    }
}

impl Class for SmoothClass {
    fn dim(&self) -> usize {
        self.support.len()
    }

    fn expand(&self, w: &[f64], u: &mut [f64]) {
        u.copy_from_slice(&self.base);
        for (&(i, j), &v) in self.support.iter().zip(w) {
            for &(a, b, wt) in &self.stencil {
                let ii = (i as isize + a) as usize;
                let jj = (j as isize + b) as usize;
                u[ii * self.side + jj] += wt * v;
            }
        }
    }

    fn pull_back(&self, g: &[f64], out: &mut [f64]) {
        for (o, &(i, j)) in out.iter_mut().zip(&self.support) {
            *o = self
                .stencil
                .iter()
                .map(|&(a, b, wt)| {
                    let ii = (i as isize + a) as usize;
                    let jj = (j as isize + b) as usize;
                    wt * g[ii * self.side + jj]
                })
                .sum();
        }
    }
}

/// Relative size of energy changes treated as rounding noise.
pub const ROUNDING: f64 = 1e-13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with Armijo backtracking. Accepted steps never raise the energy by
/// more than [`ROUNDING`] relative.
fn descend(f: &DensitySpec, mesh: &Mesh, class: &dyn Class, w0: Vec<f64>, cfg: &SolverConfig) -> DescentOutcome {
    let scale = mesh.h * mesh.h;
    let n_nodes = mesh.side() * mesh.side();
    let mut u = vec![0.0; n_nodes];
    let mut gu = vec![0.0; n_nodes];
    let eval = |w: &[f64], u: &mut Vec<f64>, gu: &mut Vec<f64>, gw: &mut Vec<f64>| {
        class.expand(w, u);
        let e = mesh.energy_and_grad(f, u, gu);
        class.pull_back(gu, gw);
        e
    };
    // Residual is measured on the nodal gradient restricted to the class.
    let residual = |gw: &[f64]| gw.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;

    let mut w = w0;
    let mut gw = vec![0.0; class.dim()];
    let mut e = eval(&w, &mut u, &mut gu, &mut gw);
    let mut res = residual(&gw);
    let mut log = vec![IterRecord {
        iteration: 0,
        energy: e,
        residual: res,
    }];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut w_new = vec![0.0; w.len()];
    let mut g_new = vec![0.0; w.len()];
    let mut iterations = 0;
    while res > cfg.grad_tol && iterations < cfg.max_iter {
        // two-loop recursion
        let mut d: Vec<f64> = gw.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        } else {
            // first step: unit change of the residual scale
            let gmax = gw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            d.iter_mut().for_each(|v| *v *= scale / gmax.max(f64::MIN_POSITIVE) * mesh.h);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&gw, &d);
        if !(slope < 0.0) {
            history.clear();
            d = gw.iter().map(|v| -v * scale).collect();
            slope = dot(&gw, &d);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            w_new.iter_mut().zip(&w).zip(&d).for_each(|((n, wi), di)| *n = wi + t * di);
            let e_new = eval(&w_new, &mut u, &mut gu, &mut g_new);
            if e_new <= e + 1e-4 * t * slope {
                accepted = Some(e_new);
                break;
            }
            // Near the minimum energy differences drown in rounding; fall back
            // to the curvature test so the residual can still be driven down.
            let rounding = ROUNDING * e.abs().max(1.0);
            if e_new - e <= rounding && dot(&g_new, &d).abs() <= 0.9 * slope.abs() {
                accepted = Some(e_new);
                break;
            }
            t *= 0.5;
        }
        let Some(e_new) = accepted else {
            break;
        };
        iterations += 1;
        let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gw).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut w, &mut w_new);
        std::mem::swap(&mut gw, &mut g_new);
        e = e_new;
        res = residual(&gw);
        log.push(IterRecord {
            iteration: iterations,
            energy: e,
            residual: res,
        });
    }
    DescentOutcome {
        energy: e,
        residual: res,
        iterations,
        converged: res <= cfg.grad_tol,
        log,
    }
}

/// Minimises the P1 energy of a scalar field on a square with Dirichlet datum
/// `boundary`, over all nodal fields and over the mollified subclass, for each
/// mesh in `cfg.meshes`.
pub fn lavrentiev_probe(f: &DensitySpec, boundary: &TestField, cfg: &LavrentievConfig) -> Result<LavrentievProbe> {
    f.validate()?;
    boundary.validate(2)?;
    if boundary.target_dim() != 1 {
        return Err(invalid("the boundary datum must be scalar"));
    }
    if !(cfg.hi > cfg.lo) {
        return Err(invalid("domain needs lo < hi"));
    }
    if cfg.meshes.is_empty() {
        return Err(invalid("no mesh sizes given"));
    }
    if !(cfg.eps_factor >= 2.0) {
        return Err(invalid("the smooth-class radius must be at least twice the mesh size"));
    }
    let centre = [0.5 * (cfg.lo + cfg.hi); 2];
    let convex = check_convexity_sampled(f, &centre, 1, &SamplerConfig::new(512, cfg.seed));
    if !convex.passed() {
        return Err(Error::Precondition(format!(
            "density is not convex on samples: {}",
            convex.to_text().lines().next().unwrap_or("")
        )));
    }

    let mut levels = Vec::with_capacity(cfg.meshes.len());
    for &cells in &cfg.meshes {
        if cells < 2 {
            return Err(invalid(format!("mesh needs at least 2 cells per side, got {cells}")));
        }
        let h = (cfg.hi - cfg.lo) / cells as f64;
        let mesh = Mesh { cells, lo: cfg.lo, h };
        let side = mesh.side();
        let mut datum = vec![0.0; side * side];
        let mut out = [0.0];
        for i in 0..side {
            for j in 0..side {
                boundary.eval(&[mesh.coord(i), mesh.coord(j)], &mut out);
                datum[mesh.node(i, j)] = out[0];
            }
        }

        let mut rough = datum.clone();
        let mut interior = Vec::new();
        for i in 0..side {
            for j in 0..side {
                if !mesh.is_boundary(i, j) {
                    rough[mesh.node(i, j)] = 0.0;
                    interior.push(mesh.node(i, j));
                }
            }
        }
        let full_class = FullClass { base: rough, interior };
        let w0 = vec![0.0; full_class.dim()];
        let full = descend(f, &mesh, &full_class, w0, &cfg.solver);

        let eps_y = cfg.eps_factor * h;
        let node_grid = Grid::cube(2, cfg.lo - 0.5 * h, cfg.hi + 0.5 * h, side)?;
        let kernel = MollifierSpec::new(eps_y)?.kernel(&node_grid)?;
        let smooth_class = SmoothClass::new(&mesh, datum, &kernel)?;
        let w0 = vec![0.0; smooth_class.dim()];
        let smooth = descend(f, &mesh, &smooth_class, w0, &cfg.solver);

        levels.push(LavrentievProbeResult {
            cells,
            h,
            eps_y,
            full,
            smooth,
        });
    }
    Ok(LavrentievProbe { levels })
}
