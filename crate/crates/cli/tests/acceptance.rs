//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::Command;
use std::time::Instant;

use sdde_core::analysis::{
    fit_decay_rate, fit_order, h_infinity_partial_sum, solve_delta_star, solve_gamma_star, solve_gamma_star_delta,
    strong_error,
};
use sdde_core::brownian::PathRng;
use sdde_core::builtin::{self, Example2};
use sdde_core::checks::{
    check_khasminskii_preservation, check_linear_growth, check_multiplicity_bound, scalar_grid,
};
use sdde_core::model::kappa_bar;
use sdde_core::solver::{run_ensemble, simulate, Scheme, SolverConfig};
use sdde_core::truncation::{epsilon_delta, truncate_point, truncation_radius};

const SDDE: &str = env!("CARGO_BIN_EXE_sdde");

/// Published decay-rate table: (Δ, ε_Δ, γ*_Δ).
const TABLE: [(f64, f64, f64); 6] = [
    (1e-4, 0.3220, 0.6982),
    (1e-5, 0.1014, 1.1728),
    (1e-6, 0.0320, 1.3272),
    (1e-7, 0.0101, 1.3764),
    (1e-8, 0.0032, 1.3920),
    (1e-9, 0.0010, 1.3970),
];

type Verdict = Result<String, String>;

fn check(cond: bool, msg: String) -> Verdict {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(SDDE).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "sdde {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn table_reproduction() -> Verdict {
    let start = Instant::now();
    let csv = run_cli(&["stability-table", "--problem", "example2"])?;
    let elapsed = start.elapsed().as_secs_f64();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("delta"))
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    if rows.len() != TABLE.len() {
        return Err(format!("expected {} rows, got {}", TABLE.len(), rows.len()));
    }
    // Unrounded library values as well as the printed table.
    let params = builtin::example2_stability_params(Example2::default());
    let policy = builtin::example2_policy();
    let mut worst = 0.0f64;
    for (row, &(step, eps, gamma)) in rows.iter().zip(&TABLE) {
        let e = epsilon_delta(&params, &policy, step).map_err(|e| e.to_string())?;
        let g = solve_gamma_star_delta(&params, 2, 0.1, step, e).map_err(|e| e.to_string())?.gamma;
        if row[0] != step {
            return Err(format!("row step {} != {step}", row[0]));
        }
        for d in [row[1] - eps, row[2] - gamma, e - eps, g - gamma] {
            worst = worst.max(d.abs());
        }
    }
    check(
        worst <= 1e-3 && elapsed < 1.0,
        format!("max deviation {worst:.2e} (tol 1e-3), runtime {elapsed:.3} s (limit 1 s)"),
    )
}

fn rate_and_step_thresholds() -> Verdict {
    let params = builtin::example2_stability_params(Example2::default());
    let kappa = kappa_bar(builtin::example2_delay().delta_hat()).map_err(|e| e.to_string())?;
    let g = solve_gamma_star(&params, kappa, 0.1).map_err(|e| e.to_string())?.gamma;
    let d = solve_delta_star(&params, &builtin::example2_policy(), kappa).map_err(|e| e.to_string())?.step;
    check(
        (g - 1.3992).abs() <= 1e-3 && (d - 4.2308e-4).abs() <= 1e-6,
        format!("gamma* = {g:.6} (1.3992 +- 1e-3), delta* = {d:.6e} (4.2308e-4 +- 1e-6)"),
    )
}

fn convergence_order() -> Verdict {
    let start = Instant::now();
    let csv = run_cli(&["converge", "--problem", "example1"])?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    let mut order = f64::NAN;
    for line in csv.lines().skip(1) {
        if let Some(v) = line.strip_prefix("order=") {
            order = v.parse().unwrap_or(f64::NAN);
        } else if let Some((s, e)) = line.split_once(',') {
            steps.push(s.parse::<f64>().map_err(|e| e.to_string())?);
            errors.push(e.parse::<f64>().map_err(|e| e.to_string())?);
        }
    }
    let expected: Vec<f64> = (7..=11).map(|e| 2f64.powi(-e)).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    check(
        steps == expected && decreasing && (0.40..=0.65).contains(&order),
        format!(
            "order {order:.4} (range [0.40, 0.65]), rms errors {:?} strictly decreasing: {decreasing}, {elapsed:.1} s",
            errors.iter().map(|e| format!("{e:.4e}")).collect::<Vec<_>>()
        ),
    )
}

fn deterministic_oracle() -> Verdict {
    let problem = builtin::linear_decay_problem();
    let policy = builtin::linear_policy();
    let steps = [1e-2, 1e-3, 1e-4];
    let exact = (-1.0f64).exp();
    let mut errors = Vec::new();
    let mut worst_oracle = 0.0f64;
    for &s in &steps {
        let cfg = SolverConfig::new(s, 1.0).with_stride((1.0 / s).round() as usize);
        let grid = sdde_core::brownian::generate(0, 0, s, 1.0, 1).map_err(|e| e.to_string())?;
        let traj = simulate(Scheme::Full(&problem), &policy, &cfg, &grid).map_err(|e| e.to_string())?;
        let y = traj.last_value()[0];
        let euler = (1.0 - s).powf(1.0 / s);
        worst_oracle = worst_oracle.max(((y - euler) / euler).abs());
        errors.push((y - exact).abs());
    }
    let direct = fit_order(&steps, &errors).unwrap_or(f64::NAN);
    let harness = strong_error(Scheme::Full(&problem), &policy, &steps, 1e-6, 1.0, 1, 0)
        .map_err(|e| e.to_string())?
        .fitted_order
        .unwrap_or(f64::NAN);
    check(
        (direct - 1.0).abs() <= 0.02 && (harness - 1.0).abs() <= 0.02 && worst_oracle < 1e-10,
        format!(
            "order vs closed form {direct:.4}, harness order {harness:.4} (1.00 +- 0.02), \
             max relative gap to (1-h)^(1/h) {worst_oracle:.1e}"
        ),
    )
}

fn partial_scheme_stability() -> Verdict {
    let start = Instant::now();
    let split = builtin::example2_split(Example2::default());
    let policy = builtin::example2_policy();
    // T = 20 extends the T = 10 Brownian paths, so the first half of this run
    // is exactly the T = 10 ensemble.
    let cfg = SolverConfig::new(1e-4, 20.0).with_stride(100);
    let full = run_ensemble(Scheme::Partial(&split), &policy, &cfg, 2000, 20240601).map_err(|e| e.to_string())?;
    let ten = full.truncate_to(10.0);
    let rate = fit_decay_rate(&ten, (2.0, 8.0)).map_err(|e| e.to_string())?;
    let ratio = ten.mean_sq.last().copied().unwrap_or(f64::NAN) / ten.mean_sq[0];
    let h10 = h_infinity_partial_sum(&ten);
    let h20 = h_infinity_partial_sum(&full);
    let change = (h20 - h10).abs() / h10;
    check(
        rate <= -0.5 && ratio <= 1e-2 && change < 0.01 && full.overflowed.is_empty() && ten.times.last().is_some_and(|t| (t - 10.0).abs() < 1e-9),
        format!(
            "decay rate {rate:.4} (<= -0.5), E|y(10)|^2/E|y(0)|^2 = {ratio:.3e} (<= 1e-2), \
             H change T=10->20 {:.4}% (< 1%), {} paths, {:.1} s",
            100.0 * change,
            full.count,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn property_suites() -> Verdict {
    let start = Instant::now();
    let mut rng = PathRng::new(7, 0);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    let mut failures = Vec::new();

    // Truncation: contraction, idempotence, non-expansiveness.
    let policy1 = builtin::example1_policy();
    let mut bad = 0;
    for i in 0..10_000 {
        let dim = 1 + i % 3;
        let step = 2f64.powi(-(u(0.0, 15.0) as i32));
        let r = truncation_radius(&policy1, step).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..dim).map(|_| u(-10.0, 10.0)).collect();
        let z: Vec<f64> = (0..dim).map(|_| u(-10.0, 10.0)).collect();
        let px = truncate_point(&x, r).map_err(|e| e.to_string())?;
        let pz = truncate_point(&z, r).map_err(|e| e.to_string())?;
        let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff = |a: &[f64], b: &[f64]| n(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
        let ok = n(&px) <= r.min(n(&x)) * (1.0 + 1e-15)
            && truncate_point(&px, r).map_err(|e| e.to_string())? == px
            && diff(&px, &pz) <= diff(&x, &z) * (1.0 + 1e-12) + 1e-15;
        bad += usize::from(!ok);
    }
    if bad > 0 {
        failures.push(format!("truncation: {bad} failing pairs"));
    }

    // Linear growth of the truncated coefficients, both examples.
    let split = builtin::example2_split(Example2::default());
    let policy2 = builtin::example2_policy();
    let p1 = builtin::example1_problem();
    let mut samples = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        samples.push((vec![u(-1e3, 1e3)], vec![u(-1e3, 1e3)]));
    }
    for step in [1.0, 2f64.powi(-7), 2f64.powi(-14)] {
        let n = check_linear_growth(&p1, &policy1, step, &samples).map_err(|e| e.to_string())?.len();
        if n > 0 {
            failures.push(format!("example1 linear growth at {step}: {n}"));
        }
    }
    for step in [0.1, 1e-4, 1e-9] {
        let n = check_linear_growth(&split.base, &policy2, step, &samples).map_err(|e| e.to_string())?.len();
        if n > 0 {
            failures.push(format!("example2 linear growth at {step}: {n}"));
        }
    }

    // Khasminskii constants for example1: certify the raw inequality on a
    // scan, then check the truncated version.
    let k = builtin::example1_khasminskii(&policy1);
    let raw_bad = scalar_grid(200, 50.0)
        .iter()
        .filter(|(x, y)| {
            let (x, y) = (x[0], y[0]);
            let f = p1.drift_at(&[x], &[y])[0];
            let g = p1.diffusion_at(&[x], &[y])[0];
            let rhs = k.k1 * (1.0 + x * x + y * y) - k.k2 * x.abs().powf(k.beta) + k.k3 * y.abs().powf(k.beta);
            2.0 * x * f + g * g > rhs + 1e-9 * (1.0 + rhs.abs())
        })
        .count();
    let mut trunc_bad = 0;
    for step in [1.0, 0.5, 2f64.powi(-7), 2f64.powi(-11), 2f64.powi(-14)] {
        trunc_bad += check_khasminskii_preservation(&p1, &policy1, step, &k, &samples).map_err(|e| e.to_string())?.len();
    }
    if raw_bad + trunc_bad > 0 {
        failures.push(format!("khasminskii: raw {raw_bad}, truncated {trunc_bad}"));
    }

    // Delayed-index multiplicity.
    for (delay, steps) in [
        (builtin::example1_delay(), vec![1.0, 2f64.powi(-7), 2f64.powi(-14)]),
        (builtin::example2_delay(), vec![0.1, 1e-3, 1e-4]),
    ] {
        for step in steps {
            let m = check_multiplicity_bound(&delay, step, 100_000).map_err(|e| e.to_string())?;
            if !m.holds() {
                failures.push(format!("multiplicity at {step}: {} > {}", m.max_multiplicity, m.bound));
            }
        }
    }

    // γ*_Δ increases to γ* as Δ decreases.
    let params = builtin::example2_stability_params(Example2::default());
    let star = solve_gamma_star(&params, 2, 0.1).map_err(|e| e.to_string())?.gamma;
    let mut prev = 0.0;
    let mut last = 0.0;
    for e in 4..=12 {
        let step = 10f64.powi(-e);
        let eps = epsilon_delta(&params, &policy2, step).map_err(|e| e.to_string())?;
        let g = solve_gamma_star_delta(&params, 2, 0.1, step, eps).map_err(|e| e.to_string())?.gamma;
        if !(g > prev && g < star) {
            failures.push(format!("gamma*_delta not increasing below gamma* at {step}: {g}"));
        }
        prev = g;
        last = g;
    }
    if star - last > 1e-3 {
        failures.push(format!("gamma*_delta at 1e-12 is {last}, gamma* = {star}"));
    }

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        failures.push(format!("took {elapsed:.1} s"));
    }
    check(failures.is_empty(), if failures.is_empty() {
        format!("all suites clean in {elapsed:.2} s")
    } else {
        failures.join("; ")
    })
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 6] = [
        ("decay-rate table", table_reproduction),
        ("gamma* and delta*", rate_and_step_thresholds),
        ("strong convergence order", convergence_order),
        ("deterministic Euler oracle", deterministic_oracle),
        ("partial-truncation stability", partial_scheme_stability),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(msg) => println!("PASS  {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
