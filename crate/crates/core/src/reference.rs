//! Analytic oracle: volume-preserving mean-curvature flow of finitely many
//! disjoint disks reduces to an ODE on the radii,
//! `dr_i/dt = N / sum(r) - 1/r_i`, integrated here with classical RK4.
//!
//! Total area `pi * sum(r_i^2)` is conserved exactly by the ODE and checked
//! along the trajectory between disk-removal events.

use crate::error::{Error, Result};

/// Disjoint disks with fixed centers; the flow only moves the radii.
#[derive(Debug, Clone)]
pub struct BallSystem {
    pub radii: Vec<f64>,
    pub centers: Vec<(f64, f64)>,
}

impl BallSystem {
    pub fn new(radii: Vec<f64>, centers: Vec<(f64, f64)>) -> Result<Self> {
        if radii.is_empty() || radii.len() != centers.len() {
            return Err(Error::InvalidParam {
                name: "radii/centers",
                reason: "need matching, nonempty radii and centers".into(),
            });
        }
        if radii.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::NonPositiveRadius);
        }
        for a in 0..radii.len() {
            for b in (a + 1)..radii.len() {
                let dx = centers[a].0 - centers[b].0;
                let dy = centers[a].1 - centers[b].1;
                if (dx * dx + dy * dy).sqrt() <= radii[a] + radii[b] {
                    return Err(Error::InvalidParam {
                        name: "centers",
                        reason: format!("disks {a} and {b} are not disjoint"),
                    });
                }
            }
        }
        Ok(BallSystem { radii, centers })
    }

    pub fn total_area(&self) -> f64 {
        std::f64::consts::PI * self.radii.iter().map(|r| r * r).sum::<f64>()
    }
}

/// Right-hand side `dr_i/dt = N/sum(r) - 1/r_i`: the boundary-length-weighted
/// mean curvature of N circles is `N / sum(r)`.
pub fn multiball_rhs(radii: &[f64]) -> Result<Vec<f64>> {
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::NonPositiveRadius);
    }
    let n = radii.len() as f64;
    let sum: f64 = radii.iter().sum();
    let mean_curv = n / sum;
    Ok(radii.iter().map(|&r| mean_curv - 1.0 / r).collect())
}

/// One trajectory sample: time, radii of the disks still alive (dead disks
/// report radius zero), in the original disk order.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Times at which a disk dropped below the removal radius, by disk index.
    pub extinctions: Vec<(usize, f64)>,
    /// Largest area-conservation violation observed between removal events,
    /// relative to the initial area.
    pub max_area_drift: f64,
}

impl Trajectory {
    /// Radii at time `t` by linear interpolation between samples.
    pub fn radii_at(&self, t: f64) -> Vec<f64> {
        let s = &self.samples;
        if t <= s[0].t {
            return s[0].radii.clone();
        }
        if t >= s[s.len() - 1].t {
            return s[s.len() - 1].radii.clone();
        }
        let k = s.partition_point(|p| p.t < t);
        let (a, b) = (&s[k - 1], &s[k]);
        let w = (t - a.t) / (b.t - a.t);
        a.radii
            .iter()
            .zip(&b.radii)
            .map(|(&ra, &rb)| ra + w * (rb - ra))
            .collect()
    }

    pub fn extinction_time(&self, disk: usize) -> Option<f64> {
        self.extinctions
            .iter()
            .find(|(i, _)| *i == disk)
            .map(|(_, t)| *t)
    }
}

fn rk4_step(radii: &[f64], dt: f64) -> Result<Vec<f64>> {
    let k1 = multiball_rhs(radii)?;
    let mid1: Vec<f64> = radii.iter().zip(&k1).map(|(&r, &k)| r + 0.5 * dt * k).collect();
    let k2 = multiball_rhs(&mid1)?;
    let mid2: Vec<f64> = radii.iter().zip(&k2).map(|(&r, &k)| r + 0.5 * dt * k).collect();
    let k3 = multiball_rhs(&mid2)?;
    let end: Vec<f64> = radii.iter().zip(&k3).map(|(&r, &k)| r + dt * k).collect();
    let k4 = multiball_rhs(&end)?;
    Ok(radii
        .iter()
        .enumerate()
        .map(|(i, &r)| r + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrate the radii ODE up to `t_end` with nominal step `dt`.
///
/// The effective step shrinks to `1e-5 * r_min^2` near extinction so the
/// stiff `1/r` term stays resolved, and hard-fails below 1e-12. A disk whose
/// radius reaches `r_floor` is removed (its radius reports zero afterwards)
/// and the flow continues; area conservation is checked between removals.
pub fn rk4_integrate(s: &BallSystem, t_end: f64, dt: f64, r_floor: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidParam {
            name: "dt/t_end",
            reason: "time step and horizon must be positive".into(),
        });
    }
    // Indices of the live disks, in original order.
    let mut alive: Vec<usize> = (0..s.radii.len()).collect();
    let mut radii: Vec<f64> = s.radii.clone();
    let mut t = 0.0;
    let mut samples = vec![TrajectorySample {
        t,
        radii: radii.clone(),
    }];
    let mut extinctions = Vec::new();
    let mut max_area_drift = 0.0f64;
    let mut segment_area = std::f64::consts::PI * radii.iter().map(|r| r * r).sum::<f64>();
    let initial_area = segment_area;
    // Sampling cadence for the stored trajectory: frequent enough for smooth
    // interpolation without storing every micro-step.
    let sample_dt = dt.max(t_end / 100_000.0);
    let mut next_sample = sample_dt;

    while t < t_end && !alive.is_empty() {
        let remaining = t_end - t;
        if remaining <= 1e-12 {
            break;
        }
        let live: Vec<f64> = alive.iter().map(|&i| radii[i]).collect();
        let r_min = live.iter().cloned().fold(f64::INFINITY, f64::min);
        let cap = dt.min(1e-5 * r_min * r_min);
        if cap < 1e-12 {
            return Err(Error::DtUnderflow);
        }
        let mut step = cap.min(remaining);
        // If the smallest disk would go below the floor within this step,
        // keep halving until the state stays valid, then remove it.
        let mut new_live = rk4_step(&live, step)?;
        let mut halvings = 0;
        while new_live.iter().any(|&r| !(r > 0.0)) {
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::DtUnderflow);
            }
            new_live = rk4_step(&live, step)?;
            halvings += 1;
            if halvings > 80 {
                return Err(Error::DtUnderflow);
            }
        }
        t += step;
        for (slot, &idx) in alive.iter().enumerate() {
            radii[idx] = new_live[slot];
        }

        let area_now = std::f64::consts::PI
            * alive.iter().map(|&i| radii[i] * radii[i]).sum::<f64>();
        max_area_drift = max_area_drift.max((area_now - segment_area).abs() / initial_area);

        // Remove extinct disks and start a new conservation segment.
        let dying: Vec<usize> = alive
            .iter()
            .cloned()
            .filter(|&i| radii[i] <= r_floor)
            .collect();
        if !dying.is_empty() {
            for i in dying {
                extinctions.push((i, t));
                radii[i] = 0.0;
                alive.retain(|&a| a != i);
            }
            segment_area = std::f64::consts::PI
                * alive.iter().map(|&i| radii[i] * radii[i]).sum::<f64>();
        }

        if t >= next_sample || alive.is_empty() {
            samples.push(TrajectorySample {
                t,
                radii: radii.clone(),
            });
            next_sample = t + sample_dt;
        }
    }
    if samples.last().map(|s| s.t) != Some(t) {
        samples.push(TrajectorySample {
            t,
            radii: radii.clone(),
        });
    }

    Ok(Trajectory {
        samples,
        extinctions,
        max_area_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_disk_is_stationary() {
        for r in [0.2, 0.5641895835477563, 1.0] {
            let rhs = multiball_rhs(&[r]).unwrap();
            assert!(rhs[0].abs() < 1e-15);
        }
        let s = BallSystem::new(vec![0.4], vec![(0.0, 0.0)]).unwrap();
        let traj = rk4_integrate(&s, 0.05, 1e-4, 1e-3).unwrap();
        let last = traj.samples.last().unwrap();
        assert!((last.radii[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn equal_disks_are_in_equilibrium() {
        let rhs = multiball_rhs(&[1.0, 1.0]).unwrap();
        assert!(rhs[0].abs() < 1e-15 && rhs[1].abs() < 1e-15);
    }

    #[test]
    fn two_disk_rhs_matches_closed_formula() {
        let r = [0.3, 0.477797];
        let rhs = multiball_rhs(&r).unwrap();
        let mean = 2.0 / (r[0] + r[1]);
        assert!((mean - 2.5714).abs() < 1e-3);
        assert!((rhs[0] - (mean - 1.0 / 0.3)).abs() < 1e-15);
        assert!((rhs[1] - (mean - 1.0 / 0.477797)).abs() < 1e-15);
        assert!((rhs[0] + 0.7619).abs() < 1e-3, "{}", rhs[0]);
        assert!((rhs[1] - 0.4785).abs() < 1e-3, "{}", rhs[1]);
    }

    #[test]
    fn rhs_rejects_nonpositive_radius() {
        assert!(multiball_rhs(&[0.3, 0.0]).is_err());
        assert!(multiball_rhs(&[-0.1]).is_err());
    }

    #[test]
    fn area_conserved_and_small_disk_dies() {
        let s = BallSystem::new(vec![0.3, 0.477797], vec![(-0.48, 0.0), (0.4, 0.0)]).unwrap();
        let traj = rk4_integrate(&s, 0.5, 1e-4, 4.0 / 512.0).unwrap();
        assert!(traj.max_area_drift < 1e-8, "drift {}", traj.max_area_drift);
        let t_ext = traj.extinction_time(0).expect("small disk must die");
        assert!(t_ext > 0.05 && t_ext < 0.3, "t_ext = {t_ext}");
        // The survivor absorbs the area.
        let last = traj.samples.last().unwrap();
        let expect = (0.318290_f64).sqrt();
        assert!((last.radii[1] - expect).abs() < 1e-3);
    }

    #[test]
    fn extinction_time_self_converges() {
        let s = BallSystem::new(vec![0.3, 0.477797], vec![(-0.48, 0.0), (0.4, 0.0)]).unwrap();
        let t1 = rk4_integrate(&s, 0.5, 2e-4, 1e-3)
            .unwrap()
            .extinction_time(0)
            .unwrap();
        let t2 = rk4_integrate(&s, 0.5, 1e-4, 1e-3)
            .unwrap()
            .extinction_time(0)
            .unwrap();
        assert!(
            (t1 - t2).abs() / t2 < 1e-4,
            "self-convergence: {t1} vs {t2}"
        );
    }

    #[test]
    fn fourth_order_in_dt() {
        // Richardson: fixed-step integration error on a smooth window scales
        // like dt^4. Use plain fixed steps (no adaptivity) over a window where
        // the dynamics are stiff enough that the error is far above epsilon.
        let r0 = [0.12, 0.55];
        let integrate_fixed = |dt: f64, t_end: f64| -> Vec<f64> {
            let mut r = r0.to_vec();
            let n = (t_end / dt).round() as usize;
            for _ in 0..n {
                r = rk4_step(&r, dt).unwrap();
            }
            r
        };
        let t_end = 0.008;
        let fine = integrate_fixed(1e-6, t_end); // reference
        let e1 = (integrate_fixed(8e-4, t_end)[0] - fine[0]).abs();
        let e2 = (integrate_fixed(4e-4, t_end)[0] - fine[0]).abs();
        let order = (e1 / e2).log2();
        assert!(e1 > 1e-12, "error too small to measure order: {e1:.3e}");
        assert!(
            (3.5..4.6).contains(&order),
            "observed order {order} (e1={e1:.3e}, e2={e2:.3e})"
        );
    }

    #[test]
    fn rejects_overlapping_disks() {
        assert!(BallSystem::new(vec![0.5, 0.5], vec![(0.0, 0.0), (0.8, 0.0)]).is_err());
    }
}
