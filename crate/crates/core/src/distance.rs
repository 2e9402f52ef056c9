//! Exact Euclidean distance transform on the cell lattice.
//!
//! Distances are measured center-to-center, computed by a two-pass separable
//! lower-envelope sweep over squared distances. Cell offsets are integers, so
//! every squared distance is an exactly representable integer and the result
//! matches the all-pairs minimum up to the final `sqrt` rounding.

use crate::error::{Error, Result};
use crate::grid::{IndicatorField, ScalarField};
use rayon::prelude::*;

const INF: f64 = f64::INFINITY;

/// Intersection abscissa of the parabolas rooted at sites `p < q`.
#[inline]
fn intersect(f: &[f64], p: usize, q: usize) -> f64 {
    ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * q - 2 * p) as f64
}

/// 1-D lower envelope of the parabolas `x -> (x - q)^2 + f[q]`.
/// `f` holds squared distances in cell units; `out` receives the envelope values.
fn envelope_1d(f: &[f64], out: &mut [f64], sites: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    let first = match f.iter().position(|&v| v.is_finite()) {
        Some(p) => p,
        None => {
            out.fill(INF);
            return;
        }
    };
    let mut k = 0usize;
    sites[0] = first;
    bounds[0] = -INF;
    bounds[1] = INF;
    for q in (first + 1)..n {
        if f[q] == INF {
            continue;
        }
        let mut s = intersect(f, sites[k], q);
        while s <= bounds[k] {
            k -= 1;
            s = intersect(f, sites[k], q);
        }
        k += 1;
        sites[k] = q;
        bounds[k] = s;
        bounds[k + 1] = INF;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while bounds[k + 1] < q as f64 {
            k += 1;
        }
        let p = sites[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared distance (in cell units) from every cell to the nearest set cell.
fn squared_transform(f: &IndicatorField) -> Vec<f64> {
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    let mut sq = vec![0.0f64; nx * ny];

    // Column pass: the 1-D distance along each column is a plain two-sweep
    // scan. Storage is row-major, so this is strided; it is cheap next to the
    // row envelopes and stays sequential.
    let mut coldist = vec![INF; nx * ny];
    for i in 0..nx {
        let mut d = INF;
        for j in 0..ny {
            if f.values[j * nx + i] {
                d = 0.0;
            } else if d.is_finite() {
                d += 1.0;
            }
            coldist[j * nx + i] = d;
        }
        d = INF;
        for j in (0..ny).rev() {
            if f.values[j * nx + i] {
                d = 0.0;
            } else if d.is_finite() {
                d += 1.0;
            }
            let idx = j * nx + i;
            if d < coldist[idx] {
                coldist[idx] = d;
            }
        }
    }

    // Row pass: lower envelope over the squared column distances.
    sq.par_chunks_mut(nx)
        .zip(coldist.par_chunks(nx))
        .for_each(|(out_row, col_row)| {
            let mut frow = vec![0.0f64; nx];
            for (dst, &c) in frow.iter_mut().zip(col_row) {
                *dst = if c.is_finite() { c * c } else { INF };
            }
            let mut sites = vec![0usize; nx];
            let mut bounds = vec![0.0f64; nx + 1];
            envelope_1d(&frow, out_row, &mut sites, &mut bounds);
        });

    sq
}

/// Distance from every cell center to the nearest cell center of `f`.
/// Exact (two-pass lower envelope); zero on `f` itself.
pub fn unsigned_distance(f: &IndicatorField) -> Result<ScalarField> {
    if f.is_empty_set() {
        return Err(Error::EmptySet("unsigned_distance"));
    }
    let dx = f.grid.dx;
    let sq = squared_transform(f);
    let values = sq.into_iter().map(|s| s.sqrt() * dx).collect();
    ScalarField::new(f.grid, values)
}

/// Signed distance with the convention that the inside of `f` is negative.
///
/// Computed as `dist(x, F) - dist(x, F^c)` between cell centers, then pulled
/// half a cell toward the interface: raw center-to-center distances put a flat
/// interface mid-edge between a 0-cell and a 1-cell, overestimating both sides
/// by `dx/2`.
pub fn signed_distance(f: &IndicatorField) -> Result<ScalarField> {
    if f.is_empty_set() {
        return Err(Error::EmptySet("signed_distance"));
    }
    if f.is_full_set() {
        return Err(Error::FullSet("signed_distance"));
    }
    let dx = f.grid.dx;
    let sq_in = squared_transform(f);
    let complement = IndicatorField {
        grid: f.grid,
        values: f.values.iter().map(|&b| !b).collect(),
    };
    let sq_out = squared_transform(&complement);
    let half = 0.5 * dx;
    let values = sq_in
        .into_iter()
        .zip(sq_out)
        .map(|(din, dout)| {
            let raw = (din.sqrt() - dout.sqrt()) * dx;
            raw - half * raw.signum()
        })
        .collect();
    ScalarField::new(f.grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(n: usize, dx: f64) -> GridSpec {
        GridSpec::new(n, n, dx, (0.0, 0.0)).unwrap()
    }

    /// All-pairs oracle, O(N^2).
    fn brute_force(f: &IndicatorField) -> Vec<f64> {
        let (nx, ny) = (f.grid.nx, f.grid.ny);
        let mut out = vec![f64::INFINITY; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut best = f64::INFINITY;
                for js in 0..ny {
                    for is in 0..nx {
                        if f.values[js * nx + is] {
                            let di = is as f64 - i as f64;
                            let dj = js as f64 - j as f64;
                            let d = (di * di + dj * dj).sqrt() * f.grid.dx;
                            if d < best {
                                best = d;
                            }
                        }
                    }
                }
                out[j * nx + i] = best;
            }
        }
        out
    }

    fn lcg_mask(g: GridSpec, seed: u64, fill_permille: u64) -> IndicatorField {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let values = (0..g.len())
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) % 1000 < fill_permille
            })
            .collect();
        IndicatorField::new(g, values).unwrap()
    }

    #[test]
    fn single_cell_pythagoras() {
        let g = grid(11, 1.0);
        let mut f = IndicatorField::empty(g);
        f.values[g.idx(5, 5)] = true;
        let d = unsigned_distance(&f).unwrap();
        assert_eq!(d.at(8, 9), 5.0); // 3-4-5 triangle
        assert_eq!(d.at(5, 5), 0.0);
    }

    #[test]
    fn full_grid_is_zero() {
        let g = grid(9, 0.5);
        let d = unsigned_distance(&IndicatorField::full(g)).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_set_is_an_error() {
        let g = grid(5, 1.0);
        assert!(unsigned_distance(&IndicatorField::empty(g)).is_err());
        assert!(signed_distance(&IndicatorField::empty(g)).is_err());
        assert!(signed_distance(&IndicatorField::full(g)).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let g = grid(64, 0.017);
        for seed in 0..20u64 {
            let f = lcg_mask(g, seed + 1, 80);
            if f.is_empty_set() {
                continue;
            }
            let fast = unsigned_distance(&f).unwrap();
            let slow = brute_force(&f);
            for (k, (&a, &b)) in fast.values.iter().zip(&slow).enumerate() {
                let tol = 1e-12 * b.max(1.0);
                assert!((a - b).abs() <= tol, "seed {seed} cell {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn half_plane_signed_distance() {
        let g = grid(32, 0.125);
        let f = IndicatorField::new(
            g,
            (0..g.len()).map(|k| (k % 32) < 16).collect(),
        )
        .unwrap();
        let sd = signed_distance(&f).unwrap();
        // k columns outside the interface: value (k - 1/2) dx.
        for k in 1..=4 {
            let i = 15 + k;
            let expect = (k as f64 - 0.5) * g.dx;
            assert!(
                (sd.at(i, 7) - expect).abs() < 1e-12,
                "column {i}: {} vs {expect}",
                sd.at(i, 7)
            );
            let inside = 16 - k;
            assert!((sd.at(inside, 7) + expect).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_convention() {
        let g = grid(24, 0.1);
        let f = lcg_mask(g, 7, 300);
        if f.is_empty_set() || f.is_full_set() {
            panic!("bad mask");
        }
        let sd = signed_distance(&f).unwrap();
        for k in 0..g.len() {
            if f.values[k] {
                assert!(sd.values[k] < 0.0, "cell {k} inside must be negative");
            } else {
                assert!(sd.values[k] > 0.0, "cell {k} outside must be positive");
            }
        }
    }

    #[test]
    fn disk_signed_distance_close_to_radial() {
        let n = 128;
        let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
        let r = 0.6;
        let f = IndicatorField::new(
            g,
            (0..g.len())
                .map(|k| {
                    let (x, y) = g.center(k % n, k / n);
                    x * x + y * y <= r * r
                })
                .collect(),
        )
        .unwrap();
        let sd = signed_distance(&f).unwrap();
        for &(i, j) in &[(64, 64), (100, 64), (64, 20), (90, 90), (10, 64)] {
            let (x, y) = g.center(i, j);
            let exact = (x * x + y * y).sqrt() - r;
            assert!(
                (sd.at(i, j) - exact).abs() <= g.dx,
                "cell ({i},{j}): {} vs {exact}",
                sd.at(i, j)
            );
        }
    }

    #[test]
    fn discrete_lipschitz_bound() {
        let g = grid(48, 0.07);
        let f = lcg_mask(g, 3, 250);
        let sd = signed_distance(&f).unwrap();
        for j in 0..48 {
            for i in 0..47 {
                let a = sd.at(i, j);
                let b = sd.at(i + 1, j);
                assert!((a - b).abs() <= g.dx + 1e-9, "({i},{j}): {a} vs {b}");
            }
        }
        for j in 0..47 {
            for i in 0..48 {
                let a = sd.at(i, j);
                let b = sd.at(i, j + 1);
                assert!((a - b).abs() <= g.dx + 1e-9);
            }
        }
    }

    #[test]
    fn transport_split_identity() {
        // integrate(chi_E * sd_F) = integrate(chi_{EdF} * |sd_F|) - integrate(chi_F * |sd_F|),
        // exact cellwise up to float summation order.
        let g = grid(40, 0.05);
        for seed in 0..5u64 {
            let e = lcg_mask(g, 100 + seed, 400);
            let f = lcg_mask(g, 200 + seed, 350);
            if f.is_empty_set() || f.is_full_set() {
                continue;
            }
            let sd = signed_distance(&f).unwrap();
            let area = g.cell_area();
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for k in 0..g.len() {
                if e.values[k] {
                    lhs += sd.values[k] * area;
                }
                if e.values[k] != f.values[k] {
                    rhs += sd.values[k].abs() * area;
                }
                if f.values[k] {
                    rhs -= sd.values[k].abs() * area;
                }
            }
            assert!((lhs - rhs).abs() < 1e-10, "seed {seed}: {lhs} vs {rhs}");
        }
    }
}
