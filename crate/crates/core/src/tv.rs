//! Convex subproblem engine: minimize discrete perimeter (isotropic total
//! variation) plus a linear term over relaxed indicators `u` in `[0,1]`.
//!
//! The solver is a primal-dual iteration with extrapolation: dual ascent on a
//! per-cell 2-vector projected onto the unit disk, primal descent on `u`
//! clamped to the box. Forward differences with a Neumann (zero) far boundary;
//! the operator norm bound of the divided-difference gradient is `8/dx^2`.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use rayon::prelude::*;

/// Fraction of the convergence bound used for the step sizes:
/// `tau * sigma * (8/dx^2) = STEP_MARGIN`.
pub const STEP_MARGIN: f64 = 0.95;

/// Anisotropy factor of the forward-difference stencil on binary disks: the
/// discrete perimeter of a rasterized disk is close to
/// `PERIMETER_CALIBRATION * 2*pi*r`, measured at 128, 256 and 512 cells per
/// side (see the calibration test).
///
/// Both differences sit at the same cell, so the sqrt coupling discounts a
/// staircase corner only where the boundary descends in the sweep direction;
/// ascending staircases pay the full `|gx| + |gy|`. Averaging the two
/// orientation families gives `((8/pi)(sqrt(2)-1) + 4/pi)/2 ~ 1.1640`; the
/// measured value on rasterized disks is 1.166.
pub const PERIMETER_CALIBRATION: f64 = 1.166;

/// Parameters of the primal-dual solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    pub max_iters: usize,
    /// Stopping threshold for the normalized fixed-point residual.
    pub tol: f64,
    /// Primal step; must satisfy `tau * sigma * 8 / dx^2 <= 1`.
    pub tau: f64,
    /// Dual step.
    pub sigma: f64,
    /// Residual and energy are evaluated every `check_every` iterations.
    pub check_every: usize,
}

impl SolverParams {
    /// Default parameters for a grid of spacing `dx`: symmetric steps at 95%
    /// of the convergence bound.
    pub fn for_grid(dx: f64) -> Self {
        let step = (STEP_MARGIN / 8.0).sqrt() * dx;
        SolverParams {
            max_iters: 20_000,
            tol: 1e-6,
            tau: step,
            sigma: step,
            check_every: 25,
        }
    }

    pub fn validate(&self, dx: f64) -> Result<()> {
        let bound = self.tau * self.sigma * 8.0 / (dx * dx);
        if bound > 1.0 + 1e-12 {
            return Err(Error::InvalidParam {
                name: "tau/sigma",
                reason: format!("tau*sigma*8/dx^2 = {bound} exceeds 1"),
            });
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParam {
                name: "tol",
                reason: "stopping tolerance must be nonnegative".into(),
            });
        }
        if self.check_every == 0 || self.max_iters == 0 {
            return Err(Error::InvalidParam {
                name: "max_iters/check_every",
                reason: "iteration counts must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Converged (or truncated) subproblem state. Carries the dual variable so a
/// later solve on nearby data can warm-start.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub u: ScalarField,
    pub dual: VectorField,
    pub iterations: usize,
    pub residual: f64,
    pub relaxed_energy: f64,
    /// Set when `max_iters` was reached before the residual dropped below tol.
    pub truncated: bool,
    /// Energy at every residual check, for monotonicity diagnostics.
    pub energy_trace: Vec<f64>,
}

/// Discrete isotropic total variation:
/// `sum_cells dx * sqrt(dux^2 + duy^2)` with undivided forward differences and
/// zero one-sided differences at the far boundary. For an indicator field this
/// is the discrete perimeter estimate.
pub fn tv(u: &ScalarField) -> f64 {
    let (nx, ny) = (u.grid.nx, u.grid.ny);
    let v = &u.values;
    let mut sum = 0.0;
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let c = v[row + i];
            let gx = if i + 1 < nx { v[row + i + 1] - c } else { 0.0 };
            let gy = if j + 1 < ny { v[row + nx + i] - c } else { 0.0 };
            sum += (gx * gx + gy * gy).sqrt();
        }
    }
    sum * u.grid.dx
}

/// `tv(u) + integrate(g * u)`.
pub fn relaxed_energy(u: &ScalarField, g: &ScalarField) -> f64 {
    let dot: f64 = u.values.iter().zip(&g.values).map(|(&a, &b)| a * b).sum();
    tv(u) + dot * u.grid.cell_area()
}

struct Workspace {
    u: Vec<f64>,
    ubar: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
}

impl Workspace {
    fn cold(n: usize) -> Self {
        Workspace {
            u: vec![0.0; n],
            ubar: vec![0.0; n],
            px: vec![0.0; n],
            py: vec![0.0; n],
        }
    }

    fn warm(sol: &SubproblemSolution) -> Self {
        Workspace {
            u: sol.u.values.clone(),
            ubar: sol.u.values.clone(),
            px: sol.dual.px.clone(),
            py: sol.dual.py.clone(),
        }
    }
}

/// Minimize `tv(u) + integrate(g*u)` over `u` in `[0,1]` cellwise.
///
/// Stops when the per-cell fixed-point residual (combined primal and dual
/// update norm) drops below `params.tol` or after `max_iters` iterations; the
/// latter is flagged, not fatal. The returned `u` is the best-energy iterate
/// seen at a residual check, so the energy trace is nonincreasing.
pub fn solve_box_tv(
    g: &ScalarField,
    params: &SolverParams,
    warm: Option<&SubproblemSolution>,
) -> Result<SubproblemSolution> {
    if !g.is_finite() {
        return Err(Error::NonFinite("solve_box_tv linear term"));
    }
    let grid = g.grid;
    params.validate(grid.dx)?;
    let (nx, ny) = (grid.nx, grid.ny);
    let n = grid.len();
    let inv_dx = 1.0 / grid.dx;
    let tau = params.tau;
    let sigma = params.sigma;

    let mut w = match warm {
        Some(sol) if sol.u.grid == grid => Workspace::warm(sol),
        _ => Workspace::cold(n),
    };

    let mut best_u: Vec<f64> = w.u.clone();
    let mut best_px: Vec<f64> = w.px.clone();
    let mut best_py: Vec<f64> = w.py.clone();
    let mut best_energy = {
        let u = ScalarField::new(grid, w.u.clone())?;
        relaxed_energy(&u, g)
    };
    let mut energy_trace = vec![best_energy];

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut truncated = true;

    while iterations < params.max_iters {
        let track = (iterations + 1) % params.check_every == 0
            || iterations + 1 == params.max_iters;

        // Dual ascent: p += sigma * grad(ubar), then project onto |p| <= 1.
        let ubar = &w.ubar;
        let dp_sq: f64 = w
            .px
            .par_chunks_mut(nx)
            .zip(w.py.par_chunks_mut(nx))
            .enumerate()
            .map(|(j, (px_row, py_row))| {
                let row = j * nx;
                let up = if j + 1 < ny { &ubar[row + nx..row + 2 * nx] } else { &[] as &[f64] };
                let here = &ubar[row..row + nx];
                let mut acc = 0.0;
                for i in 0..nx {
                    let c = here[i];
                    let gx = if i + 1 < nx { (here[i + 1] - c) * inv_dx } else { 0.0 };
                    let gy = if j + 1 < ny { (up[i] - c) * inv_dx } else { 0.0 };
                    let mut qx = px_row[i] + sigma * gx;
                    let mut qy = py_row[i] + sigma * gy;
                    let norm2 = qx * qx + qy * qy;
                    if norm2 > 1.0 {
                        let inv = norm2.sqrt().recip();
                        qx *= inv;
                        qy *= inv;
                    }
                    if track {
                        let dx1 = qx - px_row[i];
                        let dy1 = qy - py_row[i];
                        acc += dx1 * dx1 + dy1 * dy1;
                    }
                    px_row[i] = qx;
                    py_row[i] = qy;
                }
                acc
            })
            .sum();

        // Primal descent with clamping, fused with the extrapolation
        // ubar = 2*u_new - u_old.
        let px = &w.px;
        let py = &w.py;
        let gv = &g.values;
        let du_sq: f64 = w
            .u
            .par_chunks_mut(nx)
            .zip(w.ubar.par_chunks_mut(nx))
            .enumerate()
            .map(|(j, (u_row, ubar_row))| {
                let row = j * nx;
                let px_here = &px[row..row + nx];
                let py_here = &py[row..row + nx];
                let py_below = if j > 0 { &py[row - nx..row] } else { &[] as &[f64] };
                let mut acc = 0.0;
                for i in 0..nx {
                    let div = (px_here[i] - if i > 0 { px_here[i - 1] } else { 0.0 }) * inv_dx
                        + (py_here[i] - if j > 0 { py_below[i] } else { 0.0 }) * inv_dx;
                    let old = u_row[i];
                    let new = (old + tau * (div - gv[row + i])).clamp(0.0, 1.0);
                    if track {
                        let d = new - old;
                        acc += d * d;
                    }
                    ubar_row[i] = 2.0 * new - old;
                    u_row[i] = new;
                }
                acc
            })
            .sum();

        iterations += 1;

        if track {
            residual = ((du_sq + dp_sq) / n as f64).sqrt();
            let u = ScalarField::new(grid, w.u.clone())?;
            let energy = relaxed_energy(&u, g);
            energy_trace.push(energy.min(best_energy));
            if energy < best_energy {
                best_energy = energy;
                best_u.copy_from_slice(&w.u);
                best_px.copy_from_slice(&w.px);
                best_py.copy_from_slice(&w.py);
            }
            if residual < params.tol {
                truncated = false;
                break;
            }
        }
    }

    Ok(SubproblemSolution {
        u: ScalarField::new(grid, best_u)?,
        dual: VectorField {
            grid,
            px: best_px,
            py: best_py,
        },
        iterations,
        residual,
        relaxed_energy: best_energy,
        truncated,
        energy_trace,
    })
}

/// Discrete perimeter of an indicator field (its total variation).
pub fn perimeter(e: &crate::grid::IndicatorField) -> f64 {
    tv(&e.to_scalar())
}

/// Rasterized disk helper used by calibration and tests.
pub fn disk_indicator(grid: GridSpec, cx: f64, cy: f64, r: f64) -> crate::grid::IndicatorField {
    let values = (0..grid.len())
        .map(|k| {
            let (x, y) = grid.center(k % grid.nx, k / grid.nx);
            (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
        })
        .collect();
    crate::grid::IndicatorField { grid, values }
}
