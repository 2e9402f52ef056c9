//! Marching-squares contour extraction from indicator fields and curvature
//! estimation along the resulting polylines.
//!
//! Contours are oriented with the set on the left, so a disk's boundary is
//! traversed counterclockwise and its curvature is positive.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::IndicatorField;

/// Closed polyline in physical coordinates.
#[derive(Debug, Clone)]
pub struct Contour {
    pub points: Vec<(f64, f64)>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Total polyline length (closed).
    pub fn arc_length(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|k| {
                let (x0, y0) = self.points[k];
                let (x1, y1) = self.points[(k + 1) % n];
                ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
            })
            .sum()
    }
}

// Grid-indexed point at half-cell resolution: (2*i, 2*j) is the center of
// cell (i, j). Edge midpoints get odd coordinates.
type Key = (i64, i64);

fn segments_for_square(i: usize, j: usize, case: u8, out: &mut Vec<(Key, Key)>) {
    let (i, j) = (2 * i as i64, 2 * j as i64);
    let b = (i + 1, j);
    let r = (i + 2, j + 1);
    let t = (i + 1, j + 2);
    let l = (i, j + 1);
    // Inside-on-the-left directed segments; ambiguous saddles (5, 10) keep
    // the two inside corners disconnected.
    match case {
        0 | 15 => {}
        1 => out.push((b, l)),
        2 => out.push((r, b)),
        3 => out.push((r, l)),
        4 => out.push((t, r)),
        5 => {
            out.push((b, l));
            out.push((t, r));
        }
        6 => out.push((t, b)),
        7 => out.push((t, l)),
        8 => out.push((l, t)),
        9 => out.push((b, t)),
        10 => {
            out.push((r, b));
            out.push((l, t));
        }
        11 => out.push((r, t)),
        12 => out.push((l, r)),
        13 => out.push((b, r)),
        14 => out.push((l, b)),
        _ => unreachable!(),
    }
}

/// Extract all closed contours of the set boundary.
pub fn extract_contours(e: &IndicatorField) -> Result<Vec<Contour>> {
    let grid = e.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    let mut segments: Vec<(Key, Key)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let bl = e.values[j * nx + i] as u8;
            let br = e.values[j * nx + i + 1] as u8;
            let tr = e.values[(j + 1) * nx + i + 1] as u8;
            let tl = e.values[(j + 1) * nx + i] as u8;
            let case = bl | (br << 1) | (tr << 2) | (tl << 3);
            segments_for_square(i, j, case, &mut segments);
        }
    }
    if segments.is_empty() {
        return Ok(Vec::new());
    }

    let mut by_start: HashMap<Key, Vec<(Key, usize)>> = HashMap::new();
    for (idx, &(a, b)) in segments.iter().enumerate() {
        by_start.entry(a).or_default().push((b, idx));
    }
    // Deterministic multi-start order.
    for v in by_start.values_mut() {
        v.sort_unstable();
    }

    let mut used = vec![false; segments.len()];
    let mut starts: Vec<Key> = segments.iter().map(|s| s.0).collect();
    starts.sort_unstable();
    starts.dedup();

    let to_phys = |(px, py): Key| -> (f64, f64) {
        (
            grid.origin.0 + 0.5 * px as f64 * grid.dx,
            grid.origin.1 + 0.5 * py as f64 * grid.dx,
        )
    };

    let mut contours = Vec::new();
    for &start in &starts {
        loop {
            // Take the next unused segment leaving `start`, if any.
            let first = match by_start.get(&start).and_then(|v| {
                v.iter().find(|(_, idx)| !used[*idx]).copied()
            }) {
                Some(x) => x,
                None => break,
            };
            let mut points = vec![to_phys(start)];
            used[first.1] = true;
            let mut cursor = first.0;
            while cursor != start {
                points.push(to_phys(cursor));
                let next = by_start
                    .get(&cursor)
                    .and_then(|v| v.iter().find(|(_, idx)| !used[*idx]).copied())
                    .ok_or_else(|| {
                        Error::Shape("open contour: set touches the frame".into())
                    })?;
                used[next.1] = true;
                cursor = next.0;
            }
            contours.push(Contour { points });
        }
    }
    Ok(contours)
}

/// Curvature at every vertex of a closed contour, from least-squares
/// quadratic fits over a window of `window` points (odd, e.g. 7) in a
/// chord-length parametrization.
pub fn contour_curvatures(contour: &Contour, window: usize) -> Vec<f64> {
    let n = contour.points.len();
    if n < 5 {
        // Too short for a stable fit: treat as a point-like blob.
        return vec![0.0; n];
    }
    let half = (window / 2).min((n - 1) / 2).max(1);
    let mut curv = vec![0.0; n];
    for v in 0..n {
        // Chord-length parameter centered at vertex v.
        let mut s = vec![0.0; 2 * half + 1];
        let mut pts = vec![(0.0, 0.0); 2 * half + 1];
        for (m, offset) in (-(half as isize)..=half as isize).enumerate() {
            let idx = ((v as isize + offset).rem_euclid(n as isize)) as usize;
            pts[m] = contour.points[idx];
        }
        for m in 1..pts.len() {
            let d = ((pts[m].0 - pts[m - 1].0).powi(2) + (pts[m].1 - pts[m - 1].1).powi(2)).sqrt();
            s[m] = s[m - 1] + d;
        }
        let mid = s[half];
        for sm in s.iter_mut() {
            *sm -= mid;
        }
        let (ax, bx) = quad_fit(&s, &pts.iter().map(|p| p.0).collect::<Vec<_>>());
        let (ay, by) = quad_fit(&s, &pts.iter().map(|p| p.1).collect::<Vec<_>>());
        let denom = (ax * ax + ay * ay).powf(1.5);
        curv[v] = if denom > 1e-12 {
            (ax * 2.0 * by - ay * 2.0 * bx) / denom
        } else {
            0.0
        };
    }
    curv
}

/// Least-squares fit `f(s) ~ c0 + c1 s + c2 s^2`; returns `(c1, c2)`.
fn quad_fit(s: &[f64], f: &[f64]) -> (f64, f64) {
    let n = s.len() as f64;
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    let (mut f0, mut f1, mut f2) = (0.0, 0.0, 0.0);
    for (&si, &fi) in s.iter().zip(f) {
        let si2 = si * si;
        s1 += si;
        s2 += si2;
        s3 += si2 * si;
        s4 += si2 * si2;
        f0 += fi;
        f1 += fi * si;
        f2 += fi * si2;
    }
    // Normal equations for [c0, c1, c2].
    let m = [[n, s1, s2], [s1, s2, s3], [s2, s3, s4]];
    let rhs = [f0, f1, f2];
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-14 {
        return (0.0, 0.0);
    }
    let mut m1 = m;
    for r in 0..3 {
        m1[r][1] = rhs[r];
    }
    let mut m2 = m;
    for r in 0..3 {
        m2[r][2] = rhs[r];
    }
    (det(&m1) / d, det(&m2) / d)
}

/// Nearest contour vertex to a physical point, over a set of contours.
/// Returns `(contour index, vertex index, squared distance)`.
pub fn nearest_vertex(contours: &[Contour], p: (f64, f64)) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (ci, c) in contours.iter().enumerate() {
        for (vi, &(x, y)) in c.points.iter().enumerate() {
            let d = (x - p.0) * (x - p.0) + (y - p.1) * (y - p.1);
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((ci, vi, d));
            }
        }
    }
    best
}

/// Total boundary polyline length of a set.
pub fn boundary_length(e: &IndicatorField) -> Result<f64> {
    Ok(extract_contours(e)?.iter().map(|c| c.arc_length()).sum())
}
