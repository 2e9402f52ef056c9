//! Constructive initial shapes: disks, rectangles and bitmaps combined by
//! union/difference, rasterized by cell-center inclusion.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, IndicatorField};

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Disk { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Bitmap { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Union,
    Difference,
}

/// A list of primitives folded left-to-right with union/difference.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub terms: Vec<(Op, Primitive)>,
}

impl ShapeSpec {
    pub fn single(p: Primitive) -> Self {
        ShapeSpec {
            terms: vec![(Op::Union, p)],
        }
    }

    /// Parse e.g. `disk(0,0,0.5) + rect(-1,-1,0,0) - disk(0.2,0,0.1)`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut rest = text.trim();
        let mut op = Op::Union;
        if rest.is_empty() {
            return Err(Error::Shape("empty shape specification".into()));
        }
        loop {
            let (prim, tail) = parse_primitive(rest)?;
            terms.push((op, prim));
            rest = tail.trim_start();
            if rest.is_empty() {
                break;
            }
            op = match rest.as_bytes()[0] {
                b'+' => Op::Union,
                b'-' => Op::Difference,
                c => {
                    return Err(Error::Shape(format!(
                        "expected `+` or `-` between primitives, found `{}`",
                        c as char
                    )))
                }
            };
            rest = rest[1..].trim_start();
        }
        Ok(ShapeSpec { terms })
    }
}

fn parse_primitive(text: &str) -> Result<(Primitive, &str)> {
    let open = text
        .find('(')
        .ok_or_else(|| Error::Shape(format!("missing `(` in `{text}`")))?;
    let name = text[..open].trim();
    let close = text[open..]
        .find(')')
        .map(|k| open + k)
        .ok_or_else(|| Error::Shape(format!("missing `)` in `{text}`")))?;
    let args: Vec<&str> = text[open + 1..close].split(',').map(str::trim).collect();
    let tail = &text[close + 1..];
    let nums = |n: usize| -> Result<Vec<f64>> {
        if args.len() != n {
            return Err(Error::Shape(format!(
                "`{name}` needs {n} arguments, got {}",
                args.len()
            )));
        }
        args.iter()
            .map(|a| {
                a.parse::<f64>()
                    .map_err(|_| Error::Shape(format!("bad number `{a}` in `{name}`")))
            })
            .collect()
    };
    let prim = match name {
        "disk" => {
            let v = nums(3)?;
            if !(v[2] > 0.0) {
                return Err(Error::Shape("disk radius must be positive".into()));
            }
            Primitive::Disk {
                cx: v[0],
                cy: v[1],
                r: v[2],
            }
        }
        "rect" => {
            let v = nums(4)?;
            if v[0] >= v[2] || v[1] >= v[3] {
                return Err(Error::Shape("rect needs x0 < x1 and y0 < y1".into()));
            }
            Primitive::Rect {
                x0: v[0],
                y0: v[1],
                x1: v[2],
                y1: v[3],
            }
        }
        "bitmap" => {
            if args.len() != 1 {
                return Err(Error::Shape("bitmap takes one path argument".into()));
            }
            Primitive::Bitmap {
                path: PathBuf::from(args[0]),
            }
        }
        other => return Err(Error::Shape(format!("unknown primitive `{other}`"))),
    };
    Ok((prim, tail))
}

/// Rasterize by cell-center inclusion; warns when the achieved area is far
/// from 1 and rejects empty or frame-touching results.
pub fn rasterize(spec: &ShapeSpec, grid: &GridSpec) -> Result<IndicatorField> {
    rasterize_relative_to(spec, grid, Path::new("."))
}

/// As `rasterize`, resolving bitmap paths against `base`.
pub fn rasterize_relative_to(
    spec: &ShapeSpec,
    grid: &GridSpec,
    base: &Path,
) -> Result<IndicatorField> {
    let mut values = vec![false; grid.len()];
    for (op, prim) in &spec.terms {
        match prim {
            Primitive::Disk { cx, cy, r } => {
                apply(grid, &mut values, *op, |x, y| {
                    (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r
                });
            }
            Primitive::Rect { x0, y0, x1, y1 } => {
                apply(grid, &mut values, *op, |x, y| {
                    x >= *x0 && x <= *x1 && y >= *y0 && y <= *y1
                });
            }
            Primitive::Bitmap { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let bmp = crate::io::load_pgm(&full)?;
                if bmp.grid.nx != grid.nx || bmp.grid.ny != grid.ny {
                    return Err(Error::Shape(format!(
                        "bitmap {} is {}x{}, grid is {}x{}",
                        full.display(),
                        bmp.grid.nx,
                        bmp.grid.ny,
                        grid.nx,
                        grid.ny
                    )));
                }
                for (dst, &src) in values.iter_mut().zip(&bmp.values) {
                    match op {
                        Op::Union => *dst = *dst || src,
                        Op::Difference => *dst = *dst && !src,
                    }
                }
            }
        }
    }
    let e = IndicatorField::new(*grid, values)?;
    if e.is_empty_set() {
        return Err(Error::Shape("rasterized shape is empty".into()));
    }
    match e.frame_margin() {
        Some(m) if m >= 3 => {}
        _ => return Err(Error::Shape("shape is within 3 cells of the frame".into())),
    }
    let vol = e.volume();
    if (vol - 1.0).abs() > 0.05 {
        eprintln!("warning: rasterized area {vol:.4} deviates from 1 by more than 5%");
    }
    Ok(e)
}

fn apply<F: Fn(f64, f64) -> bool>(grid: &GridSpec, values: &mut [bool], op: Op, inside: F) {
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.center(i, j);
            if inside(x, y) {
                let k = grid.idx(i, j);
                match op {
                    Op::Union => values[k] = true,
                    Op::Difference => values[k] = false,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn parses_composite_specs() {
        let s = ShapeSpec::parse("disk(0, 0, 0.5) + rect(-0.2,-0.2, 0.2, 0.2) - disk(0.1,0,0.05)")
            .unwrap();
        assert_eq!(s.terms.len(), 3);
        assert_eq!(s.terms[1].0, Op::Union);
        assert_eq!(s.terms[2].0, Op::Difference);
        assert!(ShapeSpec::parse("blob(1,2)").is_err());
        assert!(ShapeSpec::parse("disk(0,0)").is_err());
        assert!(ShapeSpec::parse("disk(0,0,1) * disk(1,1,1)").is_err());
        assert!(ShapeSpec::parse("").is_err());
    }

    #[test]
    fn unit_disk_area_close_to_one() {
        let n = 256;
        let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
        let r = 0.564190;
        let e = rasterize(&ShapeSpec::single(Primitive::Disk { cx: 0.0, cy: 0.0, r }), &g).unwrap();
        let bound = 2.0 * g.dx * 2.0 * PI * r;
        assert!(
            (e.volume() - 1.0).abs() <= bound,
            "area {} vs midpoint bound {bound}",
            e.volume()
        );
    }

    #[test]
    fn cell_aligned_rect_is_exact() {
        let n = 64;
        let g = GridSpec::from_domain(n, n, 0.0, 1.0, 0.0, 1.0).unwrap();
        // Cover cells i in [8, 23], j in [16, 47]: 16 x 32 cells exactly.
        let x0 = 8.0 * g.dx;
        let x1 = 24.0 * g.dx;
        let y0 = 16.0 * g.dx;
        let y1 = 48.0 * g.dx;
        let e = rasterize(
            &ShapeSpec::single(Primitive::Rect { x0, y0, x1, y1 }),
            &g,
        )
        .unwrap();
        assert_eq!(e.count(), 16 * 32);
        assert!((e.volume() - 16.0 * 32.0 * g.cell_area()).abs() < 1e-15);
    }

    #[test]
    fn union_of_disjoint_disks_adds() {
        let n = 128;
        let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
        let a = rasterize(
            &ShapeSpec::single(Primitive::Disk { cx: -0.5, cy: 0.0, r: 0.3 }),
            &g,
        )
        .unwrap();
        let b = rasterize(
            &ShapeSpec::single(Primitive::Disk { cx: 0.45, cy: 0.0, r: 0.35 }),
            &g,
        )
        .unwrap();
        let both = rasterize(
            &ShapeSpec::parse("disk(-0.5,0,0.3) + disk(0.45,0,0.35)").unwrap(),
            &g,
        )
        .unwrap();
        assert_eq!(both.count(), a.count() + b.count());
    }

    #[test]
    fn rejects_empty_and_frame_contact() {
        let g = GridSpec::from_domain(64, 64, -1.0, 1.0, -1.0, 1.0).unwrap();
        let spec = ShapeSpec::parse("disk(0,0,0.2) - disk(0,0,0.5)").unwrap();
        assert!(rasterize(&spec, &g).is_err());
        let touching = ShapeSpec::single(Primitive::Disk { cx: 0.0, cy: 0.0, r: 0.99 });
        assert!(rasterize(&touching, &g).is_err());
    }
}
