use sdde_core::brownian::generate;
use sdde_core::builtin;
use sdde_core::model::{DelayFunction, InitialPath, SddeProblem};
use sdde_core::solver::{run_ensemble, simulate, Scheme, SolverConfig};

#[test]
fn geometric_brownian_second_moment() {
    let (a, b, x0, t) = (0.1, 0.3, 1.0, 1.0);
    let problem = builtin::geometric_problem(a, b, x0);
    let policy = builtin::linear_policy();
    let cfg = SolverConfig::new(1e-3, t).with_stride(1000);
    let m = run_ensemble(Scheme::Full(&problem), &policy, &cfg, 10_000, 17).unwrap();
    let exact = x0 * x0 * ((2.0 * a + b * b) * t).exp();
    let last = m.mean_sq.len() - 1;
    assert_eq!(m.times[last], t);
    assert!((m.mean_sq[last] - exact).abs() <= 3.0 * m.stderr[last], "{} vs {exact} (se {})", m.mean_sq[last], m.stderr[last]);
}

#[test]
fn pure_noise_endpoint_variance() {
    let problem = SddeProblem::scalar(
        |_, _| 0.0,
        |_, _| 1.0,
        DelayFunction::constant(1.0).unwrap(),
        InitialPath::constant(vec![0.0]).unwrap(),
    )
    .unwrap();
    let cfg = SolverConfig::new(0.01, 1.0).with_stride(100);
    let m = run_ensemble(Scheme::Full(&problem), &builtin::linear_policy(), &cfg, 10_000, 99).unwrap();
    let end = *m.mean_sq.last().unwrap();
    assert!((0.94..=1.06).contains(&end), "{end}");
}

#[test]
fn example1_paths_stay_finite_and_shrink() {
    let problem = builtin::example1_problem();
    let policy = builtin::example1_policy();
    let step = 2f64.powi(-7);
    let cfg = SolverConfig::new(step, 4.0).with_stride(128);
    for id in 0..20 {
        let grid = generate(8, id, step, 4.0, 1).unwrap();
        let traj = simulate(Scheme::Full(&problem), &policy, &cfg, &grid).unwrap();
        assert!(traj.is_completed());
        assert!(traj.last_value()[0].abs() < 2.0);
    }
}
