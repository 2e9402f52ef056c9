//! Command-line entry points: `run`, `study`, `oracle`, `check`.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4 frame
//! contact. Thread count is controlled by `RAYON_NUM_THREADS` only.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flatflow::config::load_config;
use flatflow::diagnostics;
use flatflow::error::{Error, Result};
use flatflow::flow::{convergence_study, run_flow};
use flatflow::grid::{GridSpec, IndicatorField};
use flatflow::io;
use flatflow::reference::{rk4_integrate, BallSystem};
use flatflow::tv::perimeter;

#[derive(Parser)]
#[command(name = "flatflow", about = "Volume-preserving mean-curvature flow on a grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single flow from a config file.
    Run { config: PathBuf },
    /// Convergence study: run at h, h/2, ..., h/2^(levels-1).
    Study {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Integrate the multi-disk reference ODE.
    Oracle {
        /// Comma-separated radii, e.g. `0.3,0.477797`.
        radii: String,
        #[arg(long)]
        tmax: f64,
        #[arg(long)]
        dt: f64,
        /// Disks are removed below this radius.
        #[arg(long, default_value_t = 1e-3)]
        r_floor: f64,
        /// Output CSV path.
        #[arg(long, default_value = "oracle.csv")]
        out: PathBuf,
    },
    /// Re-run diagnostics on the stored snapshots of a run directory.
    Check { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Study { config, levels } => cmd_study(&config, levels),
        Command::Oracle {
            radii,
            tmax,
            dt,
            r_floor,
            out,
        } => cmd_oracle(&radii, tmax, dt, r_floor, &out),
        Command::Check { run_dir } => cmd_check(&run_dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn cmd_run(config_path: &PathBuf) -> Result<()> {
    let config = load_config(config_path)?;
    let out_dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("run"));
    let mut config = config;
    config.out_dir = Some(out_dir.clone());
    std::fs::create_dir_all(&out_dir)?;
    std::fs::copy(config_path, out_dir.join("config.echo"))?;

    let trace = run_flow(&config)?;
    for r in &trace.records {
        eprintln!(
            "step {:5}  t {:.6}  V {:.6}  Per {:.5}  lambda {:+.4}{}  ({} ms)",
            r.step,
            r.t,
            r.volume,
            r.perimeter,
            r.lambda,
            if r.saturated { " sat" } else { "" },
            r.wall_ms
        );
    }
    eprintln!(
        "done: {} steps, diagnostics in {}",
        trace.records.len(),
        out_dir.join("diagnostics.csv").display()
    );
    Ok(())
}

fn cmd_study(config_path: &PathBuf, levels: usize) -> Result<()> {
    let config = load_config(config_path)?;
    let out_dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("study"));
    let mut config = config;
    config.out_dir = Some(out_dir.clone());
    let report = convergence_study(&config, levels)?;
    for l in &report.levels {
        eprintln!(
            "level {}  h {:.3e}  steps {}  sigma ({}, {:.3e})  v_l2 {:.4e}  holder {:.4}",
            l.level, l.h, l.steps, l.sigma_count, l.sigma_measure, l.velocity_l2_total, l.holder_quotient
        );
    }
    eprintln!("reports in {}", out_dir.display());
    Ok(())
}

fn cmd_oracle(radii: &str, tmax: f64, dt: f64, r_floor: f64, out: &PathBuf) -> Result<()> {
    let radii: Vec<f64> = radii
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::InvalidParam {
                name: "radii",
                reason: format!("bad radius `{s}`"),
            })
        })
        .collect::<Result<_>>()?;
    // Fixed centers on a horizontal line, spaced far apart; the ODE only
    // involves the radii.
    let mut x = 0.0;
    let centers: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            x += r + 0.5;
            let c = (x, 0.0);
            x += r + 0.5;
            c
        })
        .collect();
    let system = BallSystem::new(radii, centers)?;
    let traj = rk4_integrate(&system, tmax, dt, r_floor)?;
    io::write_trajectory(&traj, out)?;
    for (disk, t) in &traj.extinctions {
        eprintln!("disk {disk} extinct at t = {t:.6}");
    }
    eprintln!(
        "area drift {:.3e}; trajectory in {}",
        traj.max_area_drift,
        out.display()
    );
    Ok(())
}

/// Reload the stored snapshots of a run and recompute every diagnostic that
/// is well-defined on them.
fn cmd_check(run_dir: &PathBuf) -> Result<()> {
    let config = load_config(&run_dir.join("config.echo"))?;
    let grid = config.grid;
    let h = config.h;

    let mut snaps: Vec<(usize, IndicatorField)> = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(run_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map_or(false, |n| n.starts_with("snap_") && n.ends_with(".pgm"))
        })
        .collect();
    entries.sort();
    for path in &entries {
        let name = path.file_name().unwrap().to_str().unwrap();
        let step: usize = name["snap_".len()..name.len() - ".pgm".len()]
            .parse()
            .map_err(|_| Error::Pgm {
                path: path.clone(),
                reason: "snapshot name is not snap_<step>.pgm".to_string(),
            })?;
        let raw = io::load_pgm(path)?;
        let e = IndicatorField::new(grid, raw.values)?;
        snaps.push((step, e));
    }
    if snaps.len() < 2 {
        return Err(Error::InvalidParam {
            name: "run_dir",
            reason: format!("need at least 2 snapshots, found {}", snaps.len()),
        });
    }
    eprintln!("loaded {} snapshots from {}", snaps.len(), run_dir.display());

    let eps = 10.0 * config.step.solver.tol * domain_area(&grid);
    let per0 = perimeter(&snaps[0].1);
    let mut failures = 0usize;

    let mut w = std::io::BufWriter::new(std::fs::File::create(run_dir.join("check_report.csv"))?);
    use std::io::Write;
    writeln!(
        w,
        "step,t,volume,perimeter,symdiff_prev,disp_sup,diss_residual,density_min"
    )?;
    let consecutive = snaps.windows(2).all(|w| w[1].0 - w[0].0 == 1);
    for k in 0..snaps.len() {
        let (step, e) = &snaps[k];
        let vol = e.volume();
        let per = perimeter(e);
        let density = diagnostics::density_check(e, h, 10);
        if !density.pass {
            failures += 1;
            eprintln!("step {step}: density floor violated ({:.4})", density.min_ratio);
        }
        if (vol - 1.0).abs() > h.sqrt() * per0 + 1e-12 {
            failures += 1;
            eprintln!(
                "step {step}: volume drift {:.3e} exceeds sqrt(h)*Per0",
                (vol - 1.0).abs()
            );
        }
        let (symdiff, disp, resid) = if k > 0 {
            let (_, prev) = &snaps[k - 1];
            let symdiff = e.symdiff_measure(prev)?;
            let disp = diagnostics::displacement_sup(e, prev)?;
            // The dissipation inequality relates consecutive steps only.
            let resid = if consecutive {
                let r = pseudo_step(prev, e, h)?;
                let resid = diagnostics::dissipation_residual(prev, &r, h)?;
                if resid > eps {
                    failures += 1;
                    eprintln!("step {step}: dissipation residual {resid:.3e} > {eps:.3e}");
                }
                resid
            } else {
                f64::NAN
            };
            (symdiff, disp, resid)
        } else {
            (0.0, 0.0, 0.0)
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            step,
            io::fmt_f64(*step as f64 * h),
            io::fmt_f64(vol),
            io::fmt_f64(per),
            io::fmt_f64(symdiff),
            io::fmt_f64(disp),
            io::fmt_f64(resid),
            io::fmt_f64(density.min_ratio),
        )?;
    }
    w.flush()?;

    let snap_refs: Vec<(f64, &IndicatorField)> =
        snaps.iter().map(|(k, e)| (*k as f64 * h, e)).collect();
    let holder = diagnostics::holder_quotient(&snap_refs, h)?;
    eprintln!("holder quotient over snapshots: {holder:.4}");
    eprintln!("check report in {}", run_dir.join("check_report.csv").display());

    if failures > 0 {
        return Err(Error::StepFailure {
            step: 0,
            reason: format!("{failures} diagnostic check(s) failed"),
        });
    }
    eprintln!("all checks passed");
    Ok(())
}

fn domain_area(grid: &GridSpec) -> f64 {
    (grid.nx as f64 * grid.dx) * (grid.ny as f64 * grid.dx)
}

/// Wrap a stored successor set as a step result so the pure diagnostics can
/// run on snapshot pairs.
fn pseudo_step(
    prev: &IndicatorField,
    next: &IndicatorField,
    h: f64,
) -> Result<flatflow::step::StepResult> {
    let sd = flatflow::distance::signed_distance(prev)?;
    let area = prev.grid.cell_area();
    let mut transport = 0.0;
    let mut sym = 0.0;
    for k in 0..prev.values.len() {
        if next.values[k] {
            transport += sd.values[k];
        }
        if next.values[k] != prev.values[k] {
            sym += sd.values[k].abs();
        }
    }
    let volume = next.volume();
    Ok(flatflow::step::StepResult {
        e_new: next.clone(),
        lambda: 0.0,
        volume,
        perimeter: perimeter(next),
        energy: flatflow::step::EnergyTerms {
            perimeter: perimeter(next),
            transport: transport * area / h,
            penalty: (volume - 1.0).abs() / h.sqrt(),
        },
        sym_transport: sym * area / h,
        velocity: flatflow::grid::ScalarField::constant(prev.grid, 0.0),
        bisections: 0,
        saturated: false,
        warning: None,
        solver_iterations: 0,
        truncated_solves: 0,
    })
}
