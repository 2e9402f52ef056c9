//! Quantitative checks on steps and traces: per-step dissipation, interface
//! displacement, time regularity, velocity square integrals, volume-violation
//! measure, interior/exterior density, and the curvature balance along the
//! boundary. All functions are pure.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::contour;
use crate::distance::signed_distance;
use crate::error::{Error, Result};
use crate::flow::FlowTrace;
use crate::grid::IndicatorField;
use crate::step::StepResult;
use crate::tv::perimeter;

/// Fixed seed so the sampled density checks are reproducible bit-for-bit.
const DENSITY_SEED: u64 = 0x5eed_d15c;

/// Left side minus right side of the per-step dissipation inequality
///
/// ```text
/// Per(E) + (1/h) int_{E delta F} |sd_F| + pen(E)  <=  Per(F) + pen(F)
/// ```
///
/// with `pen(A) = | |A| - 1 | / sqrt(h)`; the contract is a nonpositive value
/// up to solver tolerance.
pub fn dissipation_residual(f: &IndicatorField, r: &StepResult, h: f64) -> Result<f64> {
    if f.grid != r.e_new.grid {
        return Err(Error::GridMismatch(f.grid.len(), r.e_new.grid.len()));
    }
    let sd = signed_distance(f)?;
    let area = f.grid.cell_area();
    let mut sym = 0.0;
    for k in 0..f.values.len() {
        if f.values[k] != r.e_new.values[k] {
            sym += sd.values[k].abs();
        }
    }
    sym *= area / h;
    let pen_e = (r.e_new.volume() - 1.0).abs() / h.sqrt();
    let pen_f = (f.volume() - 1.0).abs() / h.sqrt();
    Ok(perimeter(&r.e_new) + sym + pen_e - perimeter(f) - pen_f)
}

/// `max |sd_F|` over the symmetric difference of the two sets; zero when they
/// coincide.
pub fn displacement_sup(e: &IndicatorField, f: &IndicatorField) -> Result<f64> {
    if e.grid != f.grid {
        return Err(Error::GridMismatch(e.grid.len(), f.grid.len()));
    }
    if e.values == f.values {
        return Ok(0.0);
    }
    let sd = signed_distance(f)?;
    let mut sup = 0.0f64;
    for k in 0..e.values.len() {
        if e.values[k] != f.values[k] {
            sup = sup.max(sd.values[k].abs());
        }
    }
    Ok(sup)
}

/// Largest `symdiff / sqrt(|t - s|)` over snapshot pairs with `|t - s| >= h`.
pub fn holder_quotient(snapshots: &[(f64, &IndicatorField)], h: f64) -> Result<f64> {
    let mut best = 0.0f64;
    let mut pairs = 0usize;
    for a in 0..snapshots.len() {
        for b in (a + 1)..snapshots.len() {
            let dt = (snapshots[b].0 - snapshots[a].0).abs();
            if dt < h - 1e-12 {
                continue;
            }
            let sym = snapshots[a].1.symdiff_measure(snapshots[b].1)?;
            best = best.max(sym / dt.sqrt());
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::InvalidParam {
            name: "snapshots",
            reason: "need at least one pair separated by h or more".into(),
        });
    }
    Ok(best)
}

/// Cumulative `sum_k h * [sum_band v^2 * dx]` over a trace.
pub fn velocity_l2_total(trace: &FlowTrace) -> f64 {
    trace.records.iter().map(|r| r.velocity_l2_increment).sum()
}

/// Count and measure `h * count` of the steps whose volume violates the
/// tolerance.
pub fn sigma_measure(trace: &FlowTrace, vol_tol: f64) -> (usize, f64) {
    let count = trace
        .records
        .iter()
        .filter(|r| (r.volume - 1.0).abs() > vol_tol)
        .count();
    (count, trace.h * count as f64)
}

/// One sampled interior/exterior density ratio.
#[derive(Debug, Clone)]
pub struct DensitySample {
    pub cell: (usize, usize),
    pub r: f64,
    /// `min(|B_r \ E|, |B_r cap E|) / r^2`.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct DensityReport {
    pub samples: Vec<DensitySample>,
    pub min_ratio: f64,
    /// All sampled ratios clear the numerical floor.
    pub pass: bool,
}

/// Conservative numerical floor standing in for the non-explicit dimensional
/// density constant.
pub const DENSITY_FLOOR: f64 = 0.05;

/// Interior and exterior density ratios at random boundary cells, for radii
/// `2dx, 4dx, ...` up to `sqrt(h)` (at least one radius).
pub fn density_check(e: &IndicatorField, h: f64, samples: usize) -> DensityReport {
    let grid = e.grid;
    let dx = grid.dx;
    let boundary = e.inner_boundary();
    let mut out = Vec::new();
    if boundary.is_empty() {
        return DensityReport {
            samples: out,
            min_ratio: f64::INFINITY,
            pass: true,
        };
    }
    let mut radii: Vec<f64> = Vec::new();
    let mut r = 2.0 * dx;
    while r <= h.sqrt() {
        radii.push(r);
        r += 2.0 * dx;
    }
    if radii.is_empty() {
        radii.push(2.0 * dx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(DENSITY_SEED);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..samples {
        let (ci, cj) = boundary[rng.random_range(0..boundary.len())];
        let center = grid.center(ci, cj);
        for &r in &radii {
            let r_cells = (r / dx).ceil() as isize + 1;
            let mut inside = 0usize;
            let mut outside = 0usize;
            for dj in -r_cells..=r_cells {
                for di in -r_cells..=r_cells {
                    let ii = ci as isize + di;
                    let jj = cj as isize + dj;
                    if ii < 0 || jj < 0 || ii >= grid.nx as isize || jj >= grid.ny as isize {
                        continue;
                    }
                    let (x, y) = grid.center(ii as usize, jj as usize);
                    let d2 = (x - center.0).powi(2) + (y - center.1).powi(2);
                    if d2 <= r * r {
                        if e.values[grid.idx(ii as usize, jj as usize)] {
                            inside += 1;
                        } else {
                            outside += 1;
                        }
                    }
                }
            }
            let area = grid.cell_area();
            let ratio = (inside.min(outside) as f64 * area) / (r * r);
            min_ratio = min_ratio.min(ratio);
            out.push(DensitySample {
                cell: (ci, cj),
                r,
                ratio,
            });
        }
    }
    DensityReport {
        min_ratio,
        pass: min_ratio >= DENSITY_FLOOR,
        samples: out,
    }
}

/// Balance of the boundary law: average over the boundary band of
/// `H + v` minus the step multiplier, normalized by `max(1, |lambda|)`.
///
/// Curvature comes from quadratic fits over 7 contour points of the
/// marching-squares boundary polyline; each band cell uses its nearest
/// contour vertex and the band measure is `dx` per cell.
pub fn curvature_residual(r: &StepResult, f: &IndicatorField, _h: f64) -> Result<f64> {
    if f.grid != r.e_new.grid {
        return Err(Error::GridMismatch(f.grid.len(), r.e_new.grid.len()));
    }
    let contours = contour::extract_contours(&r.e_new)?;
    if contours.is_empty() {
        return Err(Error::Shape("no boundary to fit".into()));
    }
    let curvatures: Vec<Vec<f64>> = contours
        .iter()
        .map(|c| contour::contour_curvatures(c, 7))
        .collect();
    let grid = r.e_new.grid;
    let band = r.e_new.inner_boundary();
    if band.is_empty() {
        return Err(Error::Shape("empty boundary band".into()));
    }
    let mut acc = 0.0;
    for &(i, j) in &band {
        let p = grid.center(i, j);
        let (ci, vi, _) = contour::nearest_vertex(&contours, p).expect("nonempty contours");
        let curv = curvatures[ci][vi];
        let v = r.velocity.values[grid.idx(i, j)];
        acc += curv + v;
    }
    let avg = acc / band.len() as f64;
    Ok((avg - r.lambda).abs() / r.lambda.abs().max(1.0))
}

/// Mean fitted curvature over all boundary contours, for reporting.
pub fn mean_boundary_curvature(e: &IndicatorField) -> Result<f64> {
    let contours = contour::extract_contours(e)?;
    if contours.is_empty() {
        return Err(Error::Shape("no boundary to fit".into()));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for c in &contours {
        for k in contour::contour_curvatures(c, 7) {
            acc += k;
            n += 1;
        }
    }
    Ok(acc / n as f64)
}
