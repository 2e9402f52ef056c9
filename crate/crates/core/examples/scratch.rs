// Development scratchpad: numerical studies that informed constants and tests.
// Run: cargo run -p flatflow --example scratch -- <which>

use flatflow::distance::signed_distance;
use flatflow::grid::{GridSpec, IndicatorField, ScalarField};
use flatflow::step::{minimize_step, StepParams, StepState};
use flatflow::tv::{disk_indicator, perimeter, relaxed_energy, solve_box_tv, tv, SolverParams};

fn staircase_factor(slope_num: usize, slope_den: usize) {
    // Ideal staircase half-plane u=1 iff num*i + den*j <= c, on a big grid.
    let n = 512;
    let g = GridSpec::new(n, n, 1.0, (0.0, 0.0)).unwrap();
    let c = (slope_num * n / 2 + slope_den * n / 2) as isize;
    let vals: Vec<bool> = (0..g.len())
        .map(|k| {
            let (i, j) = (k % n, k / n);
            (slope_num * i + slope_den * j) as isize <= c
        })
        .collect();
    let e = IndicatorField::new(g, vals).unwrap();
    // Count TV only in interior window to avoid frame effects.
    let full = tv(&e.to_scalar());
    // Interface length inside the grid (approx): line crossing the box.
    let len = (n as f64) * ((slope_num * slope_num + slope_den * slope_den) as f64).sqrt()
        / (slope_num.max(slope_den) as f64);
    println!(
        "slope {slope_num}/{slope_den}: tv = {full:.3}, len ~ {len:.3}, factor ~ {:.4}",
        full / len
    );
}

fn disk_factors() {
    for n in [128usize, 256, 512, 1024] {
        let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
        let r = 0.3;
        let e = disk_indicator(g, 0.0, 0.0, r);
        let p = tv(&e.to_scalar());
        let factor = p / (2.0 * std::f64::consts::PI * r);
        // Count corner coincidences vs pure steps.
        let (nx, ny) = (n, n);
        let v = &e.values;
        let mut both = 0usize;
        let mut gx_only = 0usize;
        let mut gy_only = 0usize;
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let c = v[j * nx + i];
                let gx = v[j * nx + i + 1] != c;
                let gy = v[(j + 1) * nx + i] != c;
                match (gx, gy) {
                    (true, true) => both += 1,
                    (true, false) => gx_only += 1,
                    (false, true) => gy_only += 1,
                    _ => {}
                }
            }
        }
        println!(
            "n={n}: factor {factor:.4}  cells gx_only={gx_only} gy_only={gy_only} both={both}"
        );
    }
}

fn two_disk_step(h: f64, n: usize) {
    let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
    let (r1, r2) = (0.3, 0.477797);
    let mut f = disk_indicator(g, -0.48, 0.0, r1);
    let d2 = disk_indicator(g, 0.4, 0.0, r2);
    for k in 0..g.len() {
        f.values[k] = f.values[k] || d2.values[k];
    }
    println!(
        "n={n} h={h}: |F| = {:.6}, Per_d(F) = {:.4}",
        f.volume(),
        perimeter(&f)
    );
    // Probe V(lambda) directly on a grid of lambdas.
    let sd = signed_distance(&f).unwrap();
    let params = SolverParams::for_grid(g.dx);
    let mut warm = None;
    for lam in [-2.0, 0.0, 1.0, 2.0, 2.4, 2.6, 2.8, 3.0, 3.2, 3.6, 4.0, 5.0] {
        let gf = ScalarField::new(g, sd.values.iter().map(|&v| v / h - lam).collect()).unwrap();
        let sol = solve_box_tv(&gf, &params, warm.as_ref()).unwrap();
        let e = sol.u.threshold(0.5);
        let count_near = |e: &IndicatorField, cx: f64| {
            e.values
                .iter()
                .enumerate()
                .filter(|&(k, &b)| {
                    let (x, _) = g.center(k % n, k / n);
                    b && (x - cx).abs() < 0.44
                })
                .count()
        };
        println!(
            "  lam={lam:+.2}: V = {:.6} iters={} trunc={} a1={} a2={}",
            e.volume(),
            sol.iterations,
            sol.truncated,
            count_near(&e, -0.48),
            count_near(&e, 0.4),
        );
        warm = Some(sol);
    }
    // Full step with candidate dump.
    let params = StepParams::for_grid(h, g.dx);
    let res = minimize_step(&f, &params, &mut StepState::new()).unwrap();
    println!(
        "  step: lambda={:.4} sat={} V={:.6} warn={:?} bisections={} iters={}",
        res.lambda, res.saturated, res.volume, res.warning, res.bisections, res.solver_iterations
    );
}

fn stationary_drift(n: usize, h: f64, steps: usize) {
    let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
    let r = 1.0 / std::f64::consts::PI.sqrt();
    let mut e = disk_indicator(g, 0.0, 0.0, r);
    let p0 = perimeter(&e);
    let v0 = e.volume();
    println!("n={n} h={h}: Per0 = {p0:.5} V0 = {v0:.6}");
    let params = StepParams::for_grid(h, g.dx);
    let mut state = StepState::new();
    let e0 = e.clone();
    for k in 1..=steps {
        let res = minimize_step(&e, &params, &mut state).unwrap();
        e = res.e_new.clone();
        if k <= 5 || k % 10 == 0 {
            println!(
                "  k={k}: V={:.6} Per={:.5} (drift {:+.2}%) lambda={:.4} symdiff0={:.5} iters={}",
                res.volume,
                res.perimeter,
                100.0 * (res.perimeter - p0) / p0,
                res.lambda,
                e.symdiff_measure(&e0).unwrap(),
                res.solver_iterations,
            );
        }
    }
}

fn coarea_check() {
    let n = 96;
    let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
    let disk = disk_indicator(g, 0.0, 0.0, 0.45);
    let sd = signed_distance(&disk).unwrap();
    let gfield = ScalarField::new(g, sd.values.iter().map(|&v| v / 5e-3 - 1.5).collect()).unwrap();
    let mut params = SolverParams::for_grid(g.dx);
    for max_it in [20_000, 100_000, 400_000] {
        params.max_iters = max_it;
        params.tol = 1e-9;
        let sol = solve_box_tv(&gfield, &params, None).unwrap();
        let thr = sol.u.threshold(0.5).to_scalar();
        println!(
            "max_iters={max_it}: iters={} trunc={} res={:.3e} relaxed={:.8} thresh={:.8}",
            sol.iterations,
            sol.truncated,
            sol.residual,
            sol.relaxed_energy,
            relaxed_energy(&thr, &gfield)
        );
    }
}

fn subprobe() {
    let n = 128;
    let g = GridSpec::from_domain(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
    let h = 0.02;
    let (r1, r2) = (0.3, 0.477797);
    let mut f = disk_indicator(g, -0.48, 0.0, r1);
    let d2 = disk_indicator(g, 0.4, 0.0, r2);
    for k in 0..g.len() {
        f.values[k] = f.values[k] || d2.values[k];
    }
    let sd = signed_distance(&f).unwrap();
    let mut params = SolverParams::for_grid(g.dx);
    let lam = 1.0;
    let gf = ScalarField::new(g, sd.values.iter().map(|&v| v / h - lam).collect()).unwrap();

    // Cold solve, generous budget.
    params.max_iters = 2_000_000;
    params.tol = 1e-10;
    let cold = solve_box_tv(&gf, &params, None).unwrap();
    let e = cold.u.threshold(0.5);
    println!(
        "cold:  V={:.6} iters={} res={:.2e} energy={:.6}",
        e.volume(),
        cold.iterations,
        cold.residual,
        cold.relaxed_energy
    );

    // Warm solve from the lambda=0 solution.
    let gf0 = ScalarField::new(g, sd.values.iter().map(|&v| v / h).collect()).unwrap();
    let sol0 = solve_box_tv(&gf0, &params, None).unwrap();
    println!(
        "lam=0: V={:.6} iters={}",
        sol0.u.threshold(0.5).volume(),
        sol0.iterations
    );
    let warm = solve_box_tv(&gf, &params, Some(&sol0)).unwrap();
    let ew = warm.u.threshold(0.5);
    println!(
        "warm:  V={:.6} iters={} res={:.2e} energy={:.6}",
        ew.volume(),
        warm.iterations,
        warm.residual,
        warm.relaxed_energy
    );

    // Does deleting the small-disk blob lower the energy?
    let mut zapped = cold.u.clone();
    for k in 0..g.len() {
        let (x, y) = g.center(k % n, k / n);
        if (x + 0.48) * (x + 0.48) + y * y < 0.36 * 0.36 {
            zapped.values[k] = 0.0;
        }
    }
    let linear = |u: &ScalarField| -> f64 {
        u.values
            .iter()
            .zip(&gf.values)
            .map(|(&a, &b)| a * b)
            .sum::<f64>()
            * g.cell_area()
    };
    println!(
        "cold:   tv = {:.6} lin = {:.6} total = {:.6}",
        tv(&cold.u),
        linear(&cold.u),
        relaxed_energy(&cold.u, &gf)
    );
    println!(
        "zapped: tv = {:.6} lin = {:.6} total = {:.6}",
        tv(&zapped),
        linear(&zapped),
        relaxed_energy(&zapped, &gf)
    );
    // u profile along the row through the disk centers.
    let j = n / 2;
    let prof: Vec<String> = (0..n)
        .step_by(2)
        .map(|i| format!("{:.2}", cold.u.at(i, j)))
        .collect();
    println!("profile: {}", prof.join(" "));
    // Energy of the pure binary candidates for the small-disk region.
    for rho in [0.0f64, 0.2077, 0.319] {
        let mut cand = cold.u.clone();
        for k in 0..g.len() {
            let (x, y) = g.center(k % n, k / n);
            let d2c = (x + 0.48) * (x + 0.48) + y * y;
            if d2c < 0.37 * 0.37 {
                cand.values[k] = if d2c <= rho * rho { 1.0 } else { 0.0 };
            }
        }
        println!("  binary small-disk rho={rho}: energy = {:.6}", relaxed_energy(&cand, &gf));
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    match which.as_str() {
        "subprobe" => subprobe(),
        "tv" => {
            staircase_factor(1, 1);
            staircase_factor(1, 2);
            staircase_factor(1, 4);
            disk_factors();
        }
        "twodisk" => {
            let h: f64 = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(0.02);
            let n: usize = std::env::args()
                .nth(3)
                .and_then(|s| s.parse().ok())
                .unwrap_or(128);
            two_disk_step(h, n);
        }
        "drift" => stationary_drift(256, 1e-3, 50),
        "driftsmall" => stationary_drift(128, 2e-3, 20),
        "coarea" => coarea_check(),
        other => eprintln!("unknown study `{other}`"),
    }
}
