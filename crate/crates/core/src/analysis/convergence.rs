use std::io::Write;

use rayon::prelude::*;

use crate::analysis::least_squares_slope;
use crate::brownian::generate;
use crate::error::{Result, SddeError};
use crate::model::near_integer;
use crate::solver::{simulate, PathStatus, Scheme, SolverConfig};
use crate::truncation::{truncation_radius, TruncationPolicy};

/// Root-mean-square errors at the final time against a fine-step reference
/// run on the same Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// Strictly decreasing.
    pub steps: Vec<f64>,
    /// (E|y_ref(T) − y_Δ(T)|²)^{1/2}, one per step.
    pub rms_errors: Vec<f64>,
    /// Standard error of the mean-square error estimate, per step.
    pub ms_stderr: Vec<f64>,
    /// Paths contributing to each estimate (coarse-path overflows are excluded).
    pub completed: Vec<usize>,
    /// Least-squares slope of log(rms) against log(Δ); `None` with fewer than two usable steps.
    pub fitted_order: Option<f64>,
    pub n_paths: usize,
    pub reference_step: f64,
}

impl ConvergenceReport {
    /// `delta,rms_error` rows followed by a one-line `order=<slope>` summary
    /// (`order=nan` when no fit is possible).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "delta,rms_error")?;
        for (s, e) in self.steps.iter().zip(&self.rms_errors) {
            writeln!(w, "{s},{e}")?;
        }
        match self.fitted_order {
            Some(p) => writeln!(w, "order={p}")?,
            None => writeln!(w, "order=nan")?,
        }
        Ok(())
    }
}

/// Least-squares slope of log(error) against log(step). Points with
/// non-positive error are skipped.
pub fn fit_order(steps: &[f64], errors: &[f64]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = steps
        .iter()
        .zip(errors)
        .filter(|(s, e)| **s > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(s, e)| (s.ln(), e.ln()))
        .unzip();
    least_squares_slope(&xs, &ys)
}

const BATCH: usize = 64;

/// Strong error at time `horizon` for each step size.
///
/// Every path draws one Brownian grid at `reference_step`; the reference run
/// uses it directly and each coarse run uses its coarsening, so differences
/// measure discretisation error on a common path. Steps are sorted into
/// decreasing order.
pub fn strong_error(
    scheme: Scheme<'_>,
    policy: &TruncationPolicy,
    steps: &[f64],
    reference_step: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if n_paths == 0 {
        return Err(SddeError::Config("strong error needs at least one path".into()));
    }
    if steps.is_empty() {
        return Err(SddeError::Config("no step sizes given".into()));
    }
    let mut steps = steps.to_vec();
    steps.sort_by(|a, b| b.partial_cmp(a).expect("finite steps"));
    steps.dedup();
    let problem = scheme.problem();
    let reference = SolverConfig::new(reference_step, horizon);
    let ref_size = reference.grid(problem)?;
    truncation_radius(policy, reference_step)?;
    let mut configs = Vec::with_capacity(steps.len());
    for &s in &steps {
        if near_integer(s / reference_step).map_or(true, |f| f == 0) {
            return Err(SddeError::Config(format!(
                "reference step {reference_step} does not divide step {s}"
            )));
        }
        let cfg = SolverConfig::new(s, horizon);
        let size = cfg.grid(problem)?;
        truncation_radius(policy, s)?;
        configs.push(cfg.with_stride(size.steps));
    }
    let reference = reference.with_stride(ref_size.steps);

    // Per path: squared final-time error for each step, None on coarse overflow.
    let run_path = |path_id: u64| -> Result<Vec<Option<f64>>> {
        let grid = generate(seed, path_id, reference_step, horizon, problem.dim_w)?;
        let fine = simulate(scheme, policy, &reference, &grid)?;
        if let PathStatus::Overflow { step } = fine.status {
            return Err(SddeError::ReferenceOverflow { step, path_id });
        }
        let y_ref = fine.last_value().to_vec();
        configs
            .iter()
            .map(|cfg| {
                let coarse = simulate(scheme, policy, cfg, &grid)?;
                Ok(coarse.is_completed().then(|| {
                    coarse.last_value().iter().zip(&y_ref).map(|(a, b)| (a - b) * (a - b)).sum()
                }))
            })
            .collect()
    };

    let k = steps.len();
    let mut mean = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    let mut completed = vec![0usize; k];
    let ids: Vec<u64> = (0..n_paths as u64).collect();
    for batch in ids.chunks(BATCH) {
        let results: Vec<Result<Vec<Option<f64>>>> = batch.par_iter().map(|&id| run_path(id)).collect();
        for result in results {
            for (i, sq) in result?.into_iter().enumerate() {
                if let Some(x) = sq {
                    completed[i] += 1;
                    let delta = x - mean[i];
                    mean[i] += delta / completed[i] as f64;
                    m2[i] += delta * (x - mean[i]);
                }
            }
        }
    }
    let rms_errors: Vec<f64> = mean.iter().map(|m| m.sqrt()).collect();
    let ms_stderr = m2
        .iter()
        .zip(&completed)
        .map(|(s, &c)| if c > 1 { (s / (c as f64 - 1.0) / c as f64).sqrt() } else { 0.0 })
        .collect();
    let fitted_order = fit_order(&steps, &rms_errors);
    Ok(ConvergenceReport {
        steps,
        rms_errors,
        ms_stderr,
        completed,
        fitted_order,
        n_paths,
        reference_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn fit_order_exact_power_laws() {
        let steps: Vec<f64> = (7..=11).map(|i| 2f64.powi(-i)).collect();
        for p in [0.25, 0.5, 1.0] {
            let errs: Vec<f64> = steps.iter().map(|s| 3.7 * s.powf(p)).collect();
            let fitted = fit_order(&steps, &errs).unwrap();
            assert!((fitted - p).abs() < 1e-12, "{p}: {fitted}");
        }
        assert_eq!(fit_order(&[0.1], &[1.0]), None);
    }

    #[test]
    fn reference_step_alone_gives_zero_error() {
        let problem = builtin::example1_problem();
        let policy = builtin::example1_policy();
        let step = 2f64.powi(-8);
        let r = strong_error(Scheme::Full(&problem), &policy, &[step], step, 1.0, 8, 3).unwrap();
        assert_eq!(r.rms_errors, vec![0.0]);
        assert_eq!(r.fitted_order, None);
        assert_eq!(r.completed, vec![8]);
    }

    #[test]
    fn linear_decay_order_one() {
        let problem = builtin::linear_decay_problem();
        let policy = builtin::linear_policy();
        let r = strong_error(Scheme::Full(&problem), &policy, &[1e-3, 1e-2], 1e-5, 1.0, 1, 0).unwrap();
        assert_eq!(r.steps, vec![1e-2, 1e-3]);
        let p = r.fitted_order.unwrap();
        assert!((p - 1.0).abs() < 0.05, "order {p}");
    }

    #[test]
    fn rejects_non_dividing_reference() {
        let problem = builtin::linear_decay_problem();
        let policy = builtin::linear_policy();
        let err = strong_error(Scheme::Full(&problem), &policy, &[0.01], 0.003, 1.0, 1, 0);
        assert!(matches!(err, Err(SddeError::Config(_))));
        assert!(strong_error(Scheme::Full(&problem), &policy, &[], 0.001, 1.0, 1, 0).is_err());
        assert!(strong_error(Scheme::Full(&problem), &policy, &[0.01], 0.001, 1.0, 0, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = ConvergenceReport {
            steps: vec![0.5, 0.25],
            rms_errors: vec![0.2, 0.1],
            ms_stderr: vec![0.0, 0.0],
            completed: vec![1, 1],
            fitted_order: Some(1.0),
            n_paths: 1,
            reference_step: 0.125,
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "delta,rms_error\n0.5,0.2\n0.25,0.1\norder=1\n");
    }
}
