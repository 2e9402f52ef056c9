//! Strict plain-text configuration: `key = value` lines grouped in sections
//! `[grid]`, `[flow]`, `[step]`, `[solver]`, `[init]`, `[output]`.
//!
//! Unknown keys, duplicate keys and invariant violations are hard errors;
//! silent typos in a time step or spacing would invalidate a whole run.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::grid::GridSpec;
use crate::shape::ShapeSpec;
use crate::step::StepParams;
use crate::tv::SolverParams;

#[derive(Debug, Default)]
struct Raw {
    nx: Option<usize>,
    ny: Option<usize>,
    xmin: Option<f64>,
    xmax: Option<f64>,
    ymin: Option<f64>,
    ymax: Option<f64>,
    h: Option<f64>,
    t_max: Option<f64>,
    snapshot_every: Option<usize>,
    lambda_tol: Option<f64>,
    max_bisections: Option<usize>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    check_every: Option<usize>,
    shape: Option<String>,
    out_dir: Option<PathBuf>,
}

/// Parse and validate a configuration file into a runnable `FlowConfig`.
/// Relative bitmap paths in the shape resolve against the config directory.
pub fn load_config(path: &Path) -> Result<FlowConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        line: 0,
        reason: format!("cannot read file: {e}"),
    })?;
    let err = |line: usize, reason: String| Error::Config {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut raw = Raw::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut section = String::new();

    for (lineno, line_raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match line_raw.find('#') {
            Some(k) => &line_raw[..k],
            None => line_raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(err(lineno, "unterminated section header".into()));
            }
            section = line[1..line.len() - 1].trim().to_string();
            match section.as_str() {
                "grid" | "flow" | "step" | "solver" | "init" | "output" => continue,
                other => return Err(err(lineno, format!("unknown section `[{other}]`"))),
            }
        }
        let eq = line
            .find('=')
            .ok_or_else(|| err(lineno, format!("expected `key = value`, got `{line}`")))?;
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() || value.is_empty() {
            return Err(err(lineno, "empty key or value".into()));
        }
        let qualified = format!("{section}.{key}");
        if !seen.insert(qualified.clone()) {
            return Err(err(lineno, format!("duplicate key `{key}` in [{section}]")));
        }

        let parse_usize = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| err(lineno, format!("`{key}` must be a positive integer, got `{v}`")))
        };
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| err(lineno, format!("`{key}` must be a number, got `{v}`")))
        };

        match qualified.as_str() {
            "grid.nx" => raw.nx = Some(parse_usize(value)?),
            "grid.ny" => raw.ny = Some(parse_usize(value)?),
            "grid.xmin" => raw.xmin = Some(parse_f64(value)?),
            "grid.xmax" => raw.xmax = Some(parse_f64(value)?),
            "grid.ymin" => raw.ymin = Some(parse_f64(value)?),
            "grid.ymax" => raw.ymax = Some(parse_f64(value)?),
            "flow.h" => raw.h = Some(parse_f64(value)?),
            "flow.t_max" => raw.t_max = Some(parse_f64(value)?),
            "flow.snapshot_every" => raw.snapshot_every = Some(parse_usize(value)?),
            "step.lambda_tol" => raw.lambda_tol = Some(parse_f64(value)?),
            "step.max_bisections" => raw.max_bisections = Some(parse_usize(value)?),
            "solver.max_iters" => raw.max_iters = Some(parse_usize(value)?),
            "solver.tol" => raw.tol = Some(parse_f64(value)?),
            "solver.check_every" => raw.check_every = Some(parse_usize(value)?),
            "init.shape" => raw.shape = Some(value.to_string()),
            "output.out_dir" => raw.out_dir = Some(PathBuf::from(value)),
            _ => return Err(err(lineno, format!("unknown key `{key}` in [{section}]"))),
        }
    }

    let need = |name: &str| Error::Config {
        path: path.to_path_buf(),
        line: 0,
        reason: format!("missing required key `{name}`"),
    };

    let nx = raw.nx.ok_or_else(|| need("grid.nx"))?;
    let ny = raw.ny.ok_or_else(|| need("grid.ny"))?;
    let xmin = raw.xmin.ok_or_else(|| need("grid.xmin"))?;
    let xmax = raw.xmax.ok_or_else(|| need("grid.xmax"))?;
    let ymin = raw.ymin.ok_or_else(|| need("grid.ymin"))?;
    let ymax = raw.ymax.ok_or_else(|| need("grid.ymax"))?;
    let grid = GridSpec::from_domain(nx, ny, xmin, xmax, ymin, ymax)?;

    let h = raw.h.ok_or_else(|| need("flow.h"))?;
    if !(h > 0.0) {
        return Err(Error::Config {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("`h` must be positive, got {h}"),
        });
    }
    let t_max = raw.t_max.ok_or_else(|| need("flow.t_max"))?;

    let mut step = StepParams::for_grid(h, grid.dx);
    if let Some(v) = raw.lambda_tol {
        if !(v > 0.0) {
            return Err(Error::Config {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("`lambda_tol` must be positive, got {v}"),
            });
        }
        step.lambda_tol = v;
    }
    if let Some(v) = raw.max_bisections {
        step.max_bisections = v;
    }
    let mut solver = SolverParams::for_grid(grid.dx);
    if let Some(v) = raw.max_iters {
        solver.max_iters = v;
    }
    if let Some(v) = raw.tol {
        if v < 0.0 {
            return Err(Error::Config {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("`tol` must be nonnegative, got {v}"),
            });
        }
        solver.tol = v;
    }
    if let Some(v) = raw.check_every {
        solver.check_every = v;
    }
    step.solver = solver;

    let shape_text = raw.shape.ok_or_else(|| need("init.shape"))?;
    let initial = ShapeSpec::parse(&shape_text)?;

    let config = FlowConfig {
        grid,
        h,
        t_max,
        initial,
        step,
        snapshot_every: raw.snapshot_every.unwrap_or(10),
        out_dir: raw.out_dir,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("flow.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    const MINIMAL: &str = "\
[grid]
nx = 256
ny = 256
xmin = -1
xmax = 1
ymin = -1
ymax = 1

[flow]
h = 1e-3
t_max = 0.05

[init]
shape = disk(0, 0, 0.564190)
";

    #[test]
    fn minimal_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), MINIMAL);
        let config = load_config(&path).unwrap();
        assert_eq!(config.grid.nx, 256);
        assert!((config.grid.dx - 2.0 / 256.0).abs() < 1e-15);
        assert_eq!(config.h, 1e-3);
        assert_eq!(config.t_max, 0.05);
        assert_eq!(config.snapshot_every, 10);
        // lambda_tol defaults to one cell.
        assert!((config.step.lambda_tol - config.grid.dx * config.grid.dx).abs() < 1e-18);
    }

    #[test]
    fn negative_h_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), &MINIMAL.replace("h = 1e-3", "h = -1"));
        let e = load_config(&path).unwrap_err();
        assert!(e.to_string().contains('h'), "{e}");
    }

    #[test]
    fn duplicate_key_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let body = MINIMAL.replace("t_max = 0.05", "t_max = 0.05\nt_max = 0.06");
        let path = write_config(dir.path(), &body);
        let e = load_config(&path).unwrap_err();
        assert!(e.to_string().contains("duplicate"), "{e}");
    }

    #[test]
    fn unknown_key_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let body = MINIMAL.replace("t_max = 0.05", "t_max = 0.05\nstride = 3");
        let path = write_config(dir.path(), &body);
        let e = load_config(&path).unwrap_err();
        assert!(e.to_string().contains("unknown key"), "{e}");
    }

    #[test]
    fn missing_file_and_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_config(&dir.path().join("nope.cfg")).is_err());
        let path = write_config(dir.path(), "[grid]\nnx = 16\n");
        let e = load_config(&path).unwrap_err();
        assert!(e.to_string().contains("missing required key"), "{e}");
    }

    #[test]
    fn exit_codes_by_error_class() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "[grid]\nnx = 16\n");
        assert_eq!(load_config(&path).unwrap_err().exit_code(), 2);
        assert_eq!(
            Error::FrameContact { step: 3 }.exit_code(),
            4
        );
        assert_eq!(Error::DtUnderflow.exit_code(), 3);
    }
}
