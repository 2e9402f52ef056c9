//! Time loop: iterate minimizing-movement steps into a piecewise-constant
//! (in time) evolution, record per-step diagnostics, and compare runs across
//! time-step refinements.

use std::path::PathBuf;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, IndicatorField};
use crate::io;
use crate::shape::ShapeSpec;
use crate::step::{minimize_step, EnergyTerms, StepParams, StepResult, StepState};
use crate::tv::perimeter;

/// Full configuration of one flow run.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub grid: GridSpec,
    pub h: f64,
    pub t_max: f64,
    pub initial: ShapeSpec,
    pub step: StepParams,
    /// Keep a snapshot every this many steps (step 0 and the final step are
    /// always kept).
    pub snapshot_every: usize,
    pub out_dir: Option<PathBuf>,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        self.step.validate(self.grid.dx)?;
        if self.t_max < self.h {
            return Err(Error::InvalidParam {
                name: "t_max",
                reason: format!("t_max = {} is below one step h = {}", self.t_max, self.h),
            });
        }
        if self.snapshot_every == 0 {
            return Err(Error::InvalidParam {
                name: "snapshot_every",
                reason: "snapshot cadence must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Per-step record of every monitored quantity.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub lambda: f64,
    pub saturated: bool,
    pub energy: EnergyTerms,
    /// Left side minus right side of the per-step dissipation inequality;
    /// nonpositive up to solver tolerance.
    pub dissipation_residual: f64,
    /// `max |sd_F|` over the symmetric difference with the previous set.
    pub displacement_sup: f64,
    pub symdiff_prev: f64,
    /// `h * sum_band v^2 * dx`, this step's increment of the velocity square
    /// integral.
    pub velocity_l2_increment: f64,
    pub wall_ms: u64,
}

/// Time series of the whole run plus retained snapshots.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub h: f64,
    pub initial_volume: f64,
    pub initial_perimeter: f64,
    pub records: Vec<StepRecord>,
    /// `(step index, set)`, always including step 0 and the final step.
    pub snapshots: Vec<(usize, IndicatorField)>,
}

impl FlowTrace {
    /// Set at time `t` under the piecewise-constant-in-time semantics: the
    /// retained snapshot at step `floor(t/h)` or the nearest earlier one.
    pub fn snapshot_at(&self, t: f64) -> Option<&IndicatorField> {
        let k = (t / self.h).floor() as usize;
        let k = k.min(self.records.len());
        self.snapshots
            .iter()
            .rev()
            .find(|(s, _)| *s <= k)
            .map(|(_, e)| e)
    }

    pub fn final_set(&self) -> &IndicatorField {
        &self.snapshots.last().expect("trace has snapshots").1
    }

    /// Times of retained snapshots.
    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|(k, _)| *k as f64 * self.h).collect()
    }
}

fn band_velocity_l2(res: &StepResult, h: f64) -> f64 {
    let dx = res.velocity.grid.dx;
    let sum_sq: f64 = res
        .velocity
        .values
        .iter()
        .filter(|v| **v != 0.0)
        .map(|&v| v * v)
        .sum();
    h * sum_sq * dx
}

/// Run the flow from an already-rasterized initial set.
pub fn run_flow_from(e0: IndicatorField, config: &FlowConfig) -> Result<FlowTrace> {
    config.validate()?;
    let h = config.h;
    let n_steps = (config.t_max / h).ceil() as usize;

    match e0.frame_margin() {
        Some(m) if m >= 3 => {}
        _ => return Err(Error::FrameContact { step: 0 }),
    }
    let margin_len = e0.frame_margin().unwrap() as f64 * e0.grid.dx;
    if margin_len < h.sqrt() + 3.0 * e0.grid.dx {
        eprintln!(
            "warning: initial set is {margin_len:.4} from the frame; the step reward reaches sqrt(h) = {:.4}",
            h.sqrt()
        );
    }
    let v0 = e0.volume();
    if (v0 - 1.0).abs() > 0.05 {
        eprintln!("warning: initial volume {v0:.4} is far from 1");
    }

    let p0 = perimeter(&e0);
    let mut trace = FlowTrace {
        h,
        initial_volume: v0,
        initial_perimeter: p0,
        records: Vec::with_capacity(n_steps),
        snapshots: vec![(0, e0.clone())],
    };
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        io::save_snapshot(&e0, &dir.join(snapshot_name(0)))?;
    }

    let mut current = e0;
    let mut per_prev = p0;
    let mut pen_prev = (v0 - 1.0).abs() / h.sqrt();
    let mut state = StepState::new();

    for k in 1..=n_steps {
        let started = Instant::now();
        let res = minimize_step(&current, &config.step, &mut state).map_err(|e| match e {
            Error::FrameContact { .. } => Error::FrameContact { step: k },
            other => Error::StepFailure {
                step: k,
                reason: other.to_string(),
            },
        })?;
        let wall_ms = started.elapsed().as_millis() as u64;

        if res.e_new.frame_margin().map_or(true, |m| m < 3) {
            return Err(Error::FrameContact { step: k });
        }

        let dissipation_residual =
            res.perimeter + res.sym_transport + res.energy.penalty - per_prev - pen_prev;
        let symdiff_prev = res.e_new.symdiff_measure(&current)?;
        let displacement_sup = crate::diagnostics::displacement_sup(&res.e_new, &current)?;
        let velocity_l2_increment = band_velocity_l2(&res, h);

        if let Some(w) = &res.warning {
            eprintln!("step {k}: {w}");
        }

        trace.records.push(StepRecord {
            step: k,
            t: k as f64 * h,
            volume: res.volume,
            perimeter: res.perimeter,
            lambda: res.lambda,
            saturated: res.saturated,
            energy: res.energy,
            dissipation_residual,
            displacement_sup,
            symdiff_prev,
            velocity_l2_increment,
            wall_ms,
        });

        per_prev = res.perimeter;
        pen_prev = res.energy.penalty;
        current = res.e_new;

        let keep = k % config.snapshot_every == 0 || k == n_steps;
        if keep {
            trace.snapshots.push((k, current.clone()));
            if let Some(dir) = &config.out_dir {
                io::save_snapshot(&current, &dir.join(snapshot_name(k)))?;
            }
        }
    }

    if let Some(dir) = &config.out_dir {
        io::write_diagnostics(&trace, &dir.join("diagnostics.csv"))?;
    }
    Ok(trace)
}

/// Rasterize the configured initial shape and run the flow.
pub fn run_flow(config: &FlowConfig) -> Result<FlowTrace> {
    let e0 = crate::shape::rasterize(&config.initial, &config.grid)?;
    run_flow_from(e0, config)
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:06}.pgm")
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone)]
pub struct LevelReport {
    pub level: usize,
    pub h: f64,
    pub steps: usize,
    /// Count and measure of steps violating the volume tolerance.
    pub sigma_count: usize,
    pub sigma_measure: f64,
    /// Cumulative `sum_k h * integral_band v^2`.
    pub velocity_l2_total: f64,
    /// Largest symdiff/sqrt(dt) quotient over snapshot pairs.
    pub holder_quotient: f64,
    /// Time integral of the discrete perimeter (left-constant in time).
    pub perimeter_time_integral: f64,
    pub final_volume: f64,
    pub final_perimeter: f64,
}

/// Symmetric difference between two levels at one matched time.
#[derive(Debug, Clone)]
pub struct PairRow {
    pub level_a: usize,
    pub level_b: usize,
    pub t: f64,
    pub symdiff: f64,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub levels: Vec<LevelReport>,
    pub pairs: Vec<PairRow>,
}

/// Run the flow at `h, h/2, ..., h/2^(levels-1)` on the same grid and initial
/// set, and compare the evolutions at matched snapshot times.
pub fn convergence_study(base: &FlowConfig, levels: usize) -> Result<StudyReport> {
    if levels < 2 {
        return Err(Error::InvalidParam {
            name: "levels",
            reason: format!("need at least 2 levels, got {levels}"),
        });
    }
    let e0 = crate::shape::rasterize(&base.initial, &base.grid)?;
    let mut traces = Vec::with_capacity(levels);
    for level in 0..levels {
        let factor = 1usize << level;
        let mut config = base.clone();
        config.h = base.h / factor as f64;
        // Matching physical snapshot times across levels.
        config.snapshot_every = base.snapshot_every * factor;
        config.out_dir = base
            .out_dir
            .as_ref()
            .map(|d| d.join(format!("level_{level}")));
        let trace = run_flow_from(e0.clone(), &config)?;
        traces.push(trace);
    }

    let mut levels_out = Vec::new();
    for (level, trace) in traces.iter().enumerate() {
        let vol_tol = base.step.lambda_tol;
        let (sigma_count, sigma_measure) = crate::diagnostics::sigma_measure(trace, vol_tol);
        let velocity_l2_total = crate::diagnostics::velocity_l2_total(trace);
        let snaps: Vec<(f64, &IndicatorField)> = trace
            .snapshots
            .iter()
            .map(|(k, e)| (*k as f64 * trace.h, e))
            .collect();
        let holder_quotient = crate::diagnostics::holder_quotient(&snaps, trace.h)?;
        let perimeter_time_integral = trace.h
            * (trace.initial_perimeter
                + trace
                    .records
                    .iter()
                    .take(trace.records.len().saturating_sub(1))
                    .map(|r| r.perimeter)
                    .sum::<f64>());
        levels_out.push(LevelReport {
            level,
            h: trace.h,
            steps: trace.records.len(),
            sigma_count,
            sigma_measure,
            velocity_l2_total,
            holder_quotient,
            perimeter_time_integral,
            final_volume: trace.records.last().map_or(trace.initial_volume, |r| r.volume),
            final_perimeter: trace
                .records
                .last()
                .map_or(trace.initial_perimeter, |r| r.perimeter),
        });
    }

    // Pairwise symmetric differences at the matched snapshot times of the
    // coarsest level (available on every level by construction).
    let mut pairs = Vec::new();
    let times = traces[0].snapshot_times();
    for a in 0..traces.len() {
        for b in (a + 1)..traces.len() {
            for &t in &times {
                if let (Some(ea), Some(eb)) = (traces[a].snapshot_at(t), traces[b].snapshot_at(t)) {
                    pairs.push(PairRow {
                        level_a: a,
                        level_b: b,
                        t,
                        symdiff: ea.symdiff_measure(eb)?,
                    });
                }
            }
        }
    }

    let report = StudyReport {
        levels: levels_out,
        pairs,
    };
    if let Some(dir) = &base.out_dir {
        std::fs::create_dir_all(dir)?;
        io::write_study_report(&report, dir)?;
    }
    Ok(report)
}
