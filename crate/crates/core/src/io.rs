//! Snapshot and report persistence: binary PGM masks and CSV diagnostics.
//!
//! Every writer formats floats with 17 significant digits and fixed column
//! order, so identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowTrace, StudyReport};
use crate::grid::{GridSpec, IndicatorField};

/// Binary PGM (P5), maxval 255: 255 = inside, 0 = outside, rows written
/// top-to-bottom (largest j first).
pub fn save_snapshot(e: &IndicatorField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", e.grid.nx, e.grid.ny)?;
    let (nx, ny) = (e.grid.nx, e.grid.ny);
    let mut row = vec![0u8; nx];
    for j in (0..ny).rev() {
        for i in 0..nx {
            row[i] = if e.values[j * nx + i] { 255 } else { 0 };
        }
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of `save_snapshot`; any gray value >= 128 counts as inside.
/// The grid geometry is not stored in the file, so the result uses unit
/// spacing with the origin at zero; callers with a known grid should rebuild
/// the field on it.
pub fn load_pgm(path: &Path) -> Result<IndicatorField> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |reason: &str| Error::Pgm {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };

    // Header: magic, width, height, maxval, single whitespace, then raster.
    let mut token = Vec::new();
    let mut read_token = |r: &mut BufReader<File>| -> Result<String> {
        token.clear();
        let mut byte = [0u8; 1];
        // Skip whitespace and comments.
        loop {
            if r.read(&mut byte)? == 0 {
                return Err(bad("unexpected end of header"));
            }
            match byte[0] {
                b'#' => {
                    let mut line = String::new();
                    r.read_line(&mut line)?;
                }
                c if c.is_ascii_whitespace() => {}
                c => {
                    token.push(c);
                    break;
                }
            }
        }
        loop {
            if r.read(&mut byte)? == 0 {
                break;
            }
            if byte[0].is_ascii_whitespace() {
                break;
            }
            token.push(byte[0]);
        }
        Ok(String::from_utf8_lossy(&token).into_owned())
    };

    if read_token(&mut r)? != "P5" {
        return Err(bad("not a binary PGM (expected P5)"));
    }
    let nx: usize = read_token(&mut r)?.parse().map_err(|_| bad("bad width"))?;
    let ny: usize = read_token(&mut r)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = read_token(&mut r)?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("maxval must be in 1..=255"));
    }
    if nx < 2 || ny < 2 {
        return Err(bad("image too small"));
    }
    let mut raster = vec![0u8; nx * ny];
    r.read_exact(&mut raster).map_err(|_| bad("truncated raster"))?;

    let grid = GridSpec::new(nx, ny, 1.0, (0.0, 0.0))?;
    let mut values = vec![false; nx * ny];
    for j in 0..ny {
        let src = &raster[(ny - 1 - j) * nx..(ny - j) * nx];
        for i in 0..nx {
            values[j * nx + i] = src[i] >= 128;
        }
    }
    IndicatorField::new(grid, values)
}

/// 17-significant-digit float formatting shared by all report writers.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Per-step diagnostics CSV.
///
/// The `wall_ms` column is written as zero: measured timings vary between
/// runs and the file contract is byte-for-byte reproducibility; timings go to
/// stderr instead.
pub fn write_diagnostics(trace: &FlowTrace, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "step,t,volume,perimeter,lambda,saturated,diss_residual,disp_sup,symdiff_prev,v_l2_inc,wall_ms"
    )?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},0",
            r.step,
            fmt_f64(r.t),
            fmt_f64(r.volume),
            fmt_f64(r.perimeter),
            fmt_f64(r.lambda),
            r.saturated as u8,
            fmt_f64(r.dissipation_residual),
            fmt_f64(r.displacement_sup),
            fmt_f64(r.symdiff_prev),
            fmt_f64(r.velocity_l2_increment),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Convergence study reports: one CSV of per-level scalars and one of
/// pairwise matched-time symmetric differences.
pub fn write_study_report(report: &StudyReport, dir: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join("study_levels.csv"))?);
    writeln!(
        w,
        "level,h,steps,sigma_count,sigma_measure,v_l2_total,holder_quotient,per_time_integral,final_volume,final_perimeter"
    )?;
    for l in &report.levels {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            l.level,
            fmt_f64(l.h),
            l.steps,
            l.sigma_count,
            fmt_f64(l.sigma_measure),
            fmt_f64(l.velocity_l2_total),
            fmt_f64(l.holder_quotient),
            fmt_f64(l.perimeter_time_integral),
            fmt_f64(l.final_volume),
            fmt_f64(l.final_perimeter),
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("study_pairs.csv"))?);
    writeln!(w, "level_a,level_b,t,symdiff")?;
    for p in &report.pairs {
        writeln!(
            w,
            "{},{},{},{}",
            p.level_a,
            p.level_b,
            fmt_f64(p.t),
            fmt_f64(p.symdiff)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Oracle trajectory CSV: `t,r1,...,rN`.
pub fn write_trajectory(traj: &crate::reference::Trajectory, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = traj.samples.first().map_or(0, |s| s.radii.len());
    let header: Vec<String> = (1..=n).map(|i| format!("r{i}")).collect();
    writeln!(w, "t,{}", header.join(","))?;
    for s in &traj.samples {
        let radii: Vec<String> = s.radii.iter().map(|&r| fmt_f64(r)).collect();
        writeln!(w, "{},{}", fmt_f64(s.t), radii.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::StepRecord;
    use crate::step::EnergyTerms;

    #[test]
    fn pgm_round_trip_identity() {
        let g = GridSpec::new(33, 17, 1.0, (0.0, 0.0)).unwrap();
        let mask: Vec<bool> = (0..g.len()).map(|k| (k * 2654435761) % 5 < 2).collect();
        let e = IndicatorField::new(g, mask).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        save_snapshot(&e, &path).unwrap();
        let back = load_pgm(&path).unwrap();
        assert_eq!(back.grid.nx, 33);
        assert_eq!(back.grid.ny, 17);
        assert_eq!(back.values, e.values);
    }

    #[test]
    fn pgm_header_is_exact() {
        let g = GridSpec::new(256, 256, 2.0 / 256.0, (0.0, 0.0)).unwrap();
        let e = IndicatorField::full(g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("full.pgm");
        save_snapshot(&e, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n256 256\n255\n"));
        assert_eq!(bytes.len(), b"P5\n256 256\n255\n".len() + 256 * 256);
    }

    #[test]
    fn externally_written_checkerboard_loads() {
        // Hand-rolled PGM with comment lines in the header.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checker.pgm");
        let (nx, ny) = (8usize, 6usize);
        let mut bytes = format!("P5\n# checkerboard\n{nx} {ny}\n255\n").into_bytes();
        for j in 0..ny {
            for i in 0..nx {
                bytes.push(if (i + j) % 2 == 0 { 200 } else { 10 });
            }
        }
        std::fs::write(&path, &bytes).unwrap();
        let e = load_pgm(&path).unwrap();
        assert_eq!(e.count(), nx * ny / 2);
    }

    #[test]
    fn malformed_pgm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P2\n4 4\n255\n").unwrap();
        assert!(load_pgm(&path).is_err());
        std::fs::write(&path, b"P5\n4 4\n255\n12").unwrap();
        assert!(load_pgm(&path).is_err());
    }

    fn tiny_trace(steps: usize) -> FlowTrace {
        let g = GridSpec::new(4, 4, 0.5, (0.0, 0.0)).unwrap();
        FlowTrace {
            h: 0.1,
            initial_volume: 1.0,
            initial_perimeter: 2.0,
            records: (1..=steps)
                .map(|k| StepRecord {
                    step: k,
                    t: k as f64 * 0.1,
                    volume: 1.0,
                    perimeter: 2.0,
                    lambda: 0.5,
                    saturated: false,
                    energy: EnergyTerms {
                        perimeter: 2.0,
                        transport: -0.1,
                        penalty: 0.0,
                    },
                    dissipation_residual: -1e-9,
                    displacement_sup: 0.01,
                    symdiff_prev: 0.25,
                    velocity_l2_increment: 1e-4,
                    wall_ms: 123,
                })
                .collect(),
            snapshots: vec![(0, IndicatorField::full(g))],
        }
    }

    #[test]
    fn diagnostics_csv_shape_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let empty = tiny_trace(0);
        let p0 = dir.path().join("empty.csv");
        write_diagnostics(&empty, &p0).unwrap();
        let text = std::fs::read_to_string(&p0).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("step,t,volume,perimeter,lambda,saturated,diss_residual"));

        let t3 = tiny_trace(3);
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_diagnostics(&t3, &p1).unwrap();
        write_diagnostics(&t3, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(std::fs::read_to_string(&p1).unwrap().lines().count(), 4);
    }
}
