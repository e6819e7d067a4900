use std::io::Write;

use sdde_core::analysis::{stability_table, strong_error};
use sdde_core::brownian::generate;
use sdde_core::checks::{
    check_delay, check_initial_holder, check_khasminskii_preservation, check_linear_growth, check_multiplicity_bound,
    check_split, scalar_grid,
};
use sdde_core::solver::{simulate, PathStatus, SolverConfig};
use sdde_core::{Result, SddeError};

use crate::config::Experiment;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Violation = 1,
    ConfigError = 2,
    Overflow = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_error(err: &SddeError) -> Status {
        match err {
            SddeError::Overflow { .. } | SddeError::ReferenceOverflow { .. } => Status::Overflow,
            _ => Status::ConfigError,
        }
    }
}

/// Result of a subcommand that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    /// Messages for stderr, without a prefix.
    pub warnings: Vec<String>,
}

impl Outcome {
    fn new(status: Status) -> Self {
        Outcome { status, warnings: Vec::new() }
    }
}

/// One path (id 0) as `t,y_1..` CSV. An overflowing path is written up to its
/// last finite state and reported with [`Status::Overflow`].
pub fn run_simulate<W: Write>(exp: &Experiment, out: W) -> Result<Outcome> {
    let scheme = exp.scheme()?;
    let config = SolverConfig::new(exp.step, exp.horizon).with_stride(exp.record_stride);
    config.grid(&exp.problem)?;
    let grid = generate(exp.seed, 0, exp.step, exp.horizon, exp.problem.dim_w)?;
    let traj = simulate(scheme, &exp.policy, &config, &grid)?;
    traj.write_csv(out)?;
    let mut outcome = Outcome::new(Status::Success);
    if let PathStatus::Overflow { step } = traj.status {
        outcome.status = Status::Overflow;
        outcome.warnings.push(format!("state overflowed after step {step} (t = {})", step as f64 * exp.step));
    }
    Ok(outcome)
}

pub fn run_converge<W: Write>(exp: &Experiment, out: W) -> Result<Outcome> {
    let scheme = exp.scheme()?;
    let report = strong_error(
        scheme,
        &exp.policy,
        &exp.converge_steps,
        exp.reference_step,
        exp.horizon,
        exp.n_paths,
        exp.seed,
    )?;
    report.write_csv(out)?;
    let mut outcome = Outcome::new(Status::Success);
    if report.fitted_order.is_none() {
        outcome.warnings.push(format!(
            "no order fit: {} usable step size(s), need at least 2",
            report.rms_errors.iter().filter(|e| **e > 0.0).count()
        ));
    }
    for (s, c) in report.steps.iter().zip(&report.completed) {
        if *c < report.n_paths {
            outcome.warnings.push(format!("step {s}: {} of {} paths overflowed and were excluded", report.n_paths - c, report.n_paths));
        }
    }
    Ok(outcome)
}

pub fn run_stability_table<W: Write>(exp: &Experiment, out: W) -> Result<Outcome> {
    let params = exp.stability.ok_or_else(|| {
        SddeError::Config(format!("problem '{}' has no stability constants; add a \"stability.params\" block", exp.name))
    })?;
    let table = stability_table(&params, &exp.policy, exp.kappa, exp.problem.delay.tau(), &exp.delta_list)?;
    table.write_csv(out)?;
    let mut outcome = Outcome::new(Status::Success);
    for row in table.rows.iter().filter(|r| r.gamma.is_none()) {
        outcome.warnings.push(format!("delta {} is not below delta_star = {}", row.step, table.delta_star.step));
    }
    Ok(outcome)
}

/// Sampled hypothesis checks as `check,step,samples,violations,detail` CSV.
/// Exit status is [`Status::Violation`] if any row reports a violation.
pub fn run_check<W: Write>(exp: &Experiment, mut out: W) -> Result<Outcome> {
    let mut rows: Vec<(String, String, usize, usize, String)> = Vec::new();
    let samples = scalar_grid(exp.grid_points, exp.half_width);
    let scalar = exp.problem.dim_x == 1 && exp.problem.dim_w == 1;

    let policy_issues = exp.policy.validate();
    rows.push(("policy".into(), String::new(), 2001, policy_issues.len(), policy_issues.join("; ")));
    let delay_issues = check_delay(&exp.problem.delay);
    rows.push(("delay".into(), String::new(), 10_000, delay_issues.len(), delay_issues.join("; ")));
    let init_issues = check_initial_holder(&exp.problem.initial, exp.problem.delay.tau());
    rows.push(("initial_holder".into(), String::new(), 201, init_issues.len(), init_issues.join("; ")));
    if let (Some(split), true) = (&exp.split, scalar) {
        let issues = check_split(split, &samples);
        rows.push(("split".into(), String::new(), samples.len(), issues.len(), issues.join("; ")));
    }

    for &step in &exp.check_steps {
        let label = format!("{step}");
        let m = check_multiplicity_bound(&exp.problem.delay, step, exp.k_max)?;
        rows.push((
            "multiplicity".into(),
            label.clone(),
            exp.k_max + 1,
            usize::from(!m.holds()),
            format!("max={} bound={}", m.max_multiplicity, m.bound),
        ));
        if !scalar {
            continue;
        }
        let growth = check_linear_growth(&exp.problem, &exp.policy, step, &samples)?;
        rows.push(("linear_growth".into(), label.clone(), samples.len(), growth.len(), String::new()));
        match &exp.khasminskii {
            Some(k) => {
                let bad = check_khasminskii_preservation(&exp.problem, &exp.policy, step, k, &samples)?;
                let detail = bad
                    .first()
                    .map(|v| format!("first at x={:?} y={:?}: {} > {}", v.x, v.y, v.lhs, v.rhs))
                    .unwrap_or_default();
                rows.push(("khasminskii".into(), label, samples.len(), bad.len(), detail));
            }
            None => rows.push(("khasminskii".into(), label, 0, 0, "skipped: no constants".into())),
        }
    }

    writeln!(out, "check,step,samples,violations,detail")?;
    for (name, step, n, v, detail) in &rows {
        writeln!(out, "{name},{step},{n},{v},\"{}\"", detail.replace('"', "'"))?;
    }
    let mut outcome = Outcome::new(Status::Success);
    for (name, step, _, v, _) in &rows {
        if *v > 0 {
            outcome.status = Status::Violation;
            let at = if step.is_empty() { String::new() } else { format!(" at step {step}") };
            outcome.warnings.push(format!("{name}{at}: {v} violation(s)"));
        }
    }
    Ok(outcome)
}
