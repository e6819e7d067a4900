//! Sampled numerical predicates for the assumptions the scheme relies on.
//!
//! Coefficients are opaque closures, so none of these are proofs: each check
//! evaluates the inequality on a documented grid and reports the samples
//! that fail. Violations are data, not errors.

use std::collections::HashMap;

use crate::error::{Result, SddeError};
use crate::model::{kappa_bar, norm, DelayFunction, InitialPath, SddeProblem, SplitSddeProblem};
use crate::truncation::{truncate_into, truncation_radius, TruncationPolicy};

/// Constants of 2⟨x, f⟩ + |g|² ≤ K₁(1+|x|²+|y|²) − K₂|x|^β + K₃|y|^β,
/// together with the constant K̂₁ = 2K₁·max(1, 1/μ⁻¹(φ(1))) that the
/// truncated coefficients satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KhasminskiiConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub beta: f64,
    pub k1_hat: f64,
}

impl KhasminskiiConstants {
    pub fn new(k1: f64, k2: f64, k3: f64, beta: f64, policy: &TruncationPolicy) -> Result<Self> {
        if !(k1 > 0.0) || !(k2 >= 0.0) || !(k3 >= 0.0) {
            return Err(SddeError::Domain(format!(
                "need K1 > 0, K2 >= 0, K3 >= 0, got ({k1}, {k2}, {k3})"
            )));
        }
        if !(beta > 2.0) {
            return Err(SddeError::Domain(format!("beta must exceed 2, got {beta}")));
        }
        let r1 = truncation_radius(policy, 1.0)?;
        let k1_hat = 2.0 * k1 * (1.0_f64).max(1.0 / r1);
        Ok(Self { k1, k2, k3, beta, k1_hat })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KhasminskiiViolation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluates 2⟨x, f_Δ(x,y)⟩ + |g_Δ(x,y)|² against
/// K̂₁(1+|x|²+|y|²) − K₂|π_Δ(x)|^β + K₃|π_Δ(y)|^β on every sample and
/// returns those with LHS > RHS + 1e-9·(1 + |RHS|).
pub fn check_khasminskii_preservation(
    problem: &SddeProblem,
    policy: &TruncationPolicy,
    step: f64,
    constants: &KhasminskiiConstants,
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<KhasminskiiViolation>> {
    let radius = truncation_radius(policy, step)?;
    let d = problem.dim_x;
    let mut px = vec![0.0; d];
    let mut py = vec![0.0; d];
    let mut f = vec![0.0; d];
    let mut g = vec![0.0; d * problem.dim_w];
    let mut violations = Vec::new();
    for (x, y) in samples {
        if x.len() != d || y.len() != d {
            return Err(SddeError::Domain(format!("sample has wrong dimension (expected {d})")));
        }
        truncate_into(x, radius, &mut px);
        truncate_into(y, radius, &mut py);
        (problem.drift)(&px, &py, &mut f);
        (problem.diffusion)(&px, &py, &mut g);
        let inner: f64 = x.iter().zip(&f).map(|(a, b)| a * b).sum();
        let g_sq: f64 = g.iter().map(|v| v * v).sum();
        let lhs = 2.0 * inner + g_sq;
        let x_sq: f64 = x.iter().map(|v| v * v).sum();
        let y_sq: f64 = y.iter().map(|v| v * v).sum();
        let rhs = constants.k1_hat * (1.0 + x_sq + y_sq) - constants.k2 * norm(&px).powf(constants.beta)
            + constants.k3 * norm(&py).powf(constants.beta);
        if lhs > rhs + 1e-9 * (1.0 + rhs.abs()) {
            violations.push(KhasminskiiViolation { x: x.clone(), y: y.clone(), lhs, rhs });
        }
    }
    Ok(violations)
}

/// Uniform `n × n` grid of scalar pairs on `[-half_width, half_width]²`.
pub fn scalar_grid(n: usize, half_width: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let coord = |i: usize| -half_width + 2.0 * half_width * i as f64 / (n.max(2) - 1) as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (vec![coord(i)], vec![coord(j)])))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiplicityReport {
    pub max_multiplicity: usize,
    pub bound: usize,
}

impl MultiplicityReport {
    pub fn holds(&self) -> bool {
        self.max_multiplicity <= self.bound
    }
}

/// Counts, over k = 0..=k_max, how many k share each delayed index
/// u(k) = k − δ_k, and compares the maximum with κ̄.
pub fn check_multiplicity_bound(delay: &DelayFunction, step: f64, k_max: usize) -> Result<MultiplicityReport> {
    let m = delay.grid_intervals(step)?;
    let mut counts: HashMap<i64, usize> = HashMap::new();
    for k in 0..=k_max {
        let u = k as i64 - delay.index_on_grid(step, m, k) as i64;
        *counts.entry(u).or_insert(0) += 1;
    }
    Ok(MultiplicityReport {
        max_multiplicity: counts.values().copied().max().unwrap_or(0),
        bound: kappa_bar(delay.delta_hat())?,
    })
}

/// Range and finite-difference derivative check of a delay.
///
/// Samples t_i = 0.01·i for i < 10⁴; requires 0 ≤ δ(t_i) ≤ τ and
/// |δ(t_i + h) − δ(t_i)|/h ≤ δ̂ + 1e-4 with h = 1e-6.
pub fn check_delay(delay: &DelayFunction) -> Vec<String> {
    const H: f64 = 1e-6;
    let mut issues = Vec::new();
    let tau = delay.tau();
    for i in 0..10_000 {
        let t = 0.01 * i as f64;
        let v = delay.eval(t);
        if !(v >= -1e-12 && v <= tau + 1e-12) {
            issues.push(format!("delta({t}) = {v} outside [0, {tau}]"));
        }
        let slope = (delay.eval(t + H) - v).abs() / H;
        if slope > delay.delta_hat() + 1e-4 {
            issues.push(format!("|delta'({t})| ~ {slope} exceeds delta_hat = {}", delay.delta_hat()));
        }
        if issues.len() >= 10 {
            break;
        }
    }
    issues
}

/// Checks |ξ(t) − ξ(s)| ≤ K₄|t − s|^ϱ + 1e-9 on all pairs of a 201-point grid over [−τ, 0].
pub fn check_initial_holder(initial: &InitialPath, tau: f64) -> Vec<String> {
    let n = 201;
    let times: Vec<f64> = (0..n).map(|i| -tau + tau * i as f64 / (n - 1) as f64).collect();
    let values: Vec<Vec<f64>> = times.iter().map(|&t| initial.eval(t)).collect();
    let mut issues = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let diff: Vec<f64> = values[i].iter().zip(&values[j]).map(|(a, b)| a - b).collect();
            let lhs = norm(&diff);
            let rhs = initial.holder_k4 * (times[j] - times[i]).powf(initial.holder_rho);
            if lhs > rhs + 1e-9 {
                issues.push(format!("|xi({}) - xi({})| = {lhs} > {rhs}", times[i], times[j]));
                if issues.len() >= 10 {
                    return issues;
                }
            }
        }
    }
    issues
}

/// Checks F₁ + F = f and G₁ + G = g on the samples (relative 1e-12) and that
/// all four parts vanish at the origin.
pub fn check_split(split: &SplitSddeProblem, samples: &[(Vec<f64>, Vec<f64>)]) -> Vec<String> {
    let base = &split.base;
    let d = base.dim_x;
    let dg = d * base.dim_w;
    let mut issues = Vec::new();
    let zero = vec![0.0; d];
    let eval = |c: &crate::model::Coefficient, x: &[f64], y: &[f64], len: usize| {
        let mut out = vec![0.0; len];
        c(x, y, &mut out);
        out
    };
    for (name, c, len) in [
        ("F1", &split.drift_linear, d),
        ("F", &split.drift_super, d),
        ("G1", &split.diff_linear, dg),
        ("G", &split.diff_super, dg),
    ] {
        if eval(c, &zero, &zero, len).iter().any(|v| *v != 0.0) {
            issues.push(format!("{name}(0, 0) != 0"));
        }
    }
    for (x, y) in samples {
        let f = eval(&base.drift, x, y, d);
        let f1 = eval(&split.drift_linear, x, y, d);
        let fs = eval(&split.drift_super, x, y, d);
        let g = eval(&base.diffusion, x, y, dg);
        let g1 = eval(&split.diff_linear, x, y, dg);
        let gs = eval(&split.diff_super, x, y, dg);
        let close = |whole: &[f64], a: &[f64], b: &[f64]| {
            let sum: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + q).collect();
            let diff: Vec<f64> = sum.iter().zip(whole).map(|(p, q)| p - q).collect();
            norm(&diff) <= 1e-12 * (1.0 + norm(whole))
        };
        if !close(&f, &f1, &fs) {
            issues.push(format!("F1 + F != f at x = {x:?}, y = {y:?}"));
        }
        if !close(&g, &g1, &gs) {
            issues.push(format!("G1 + G != g at x = {x:?}, y = {y:?}"));
        }
    }
    issues
}

/// Samples where max(|f_Δ|, |g_Δ|) > φ(Δ)(1 + |x| + |y|).
pub fn check_linear_growth(
    problem: &SddeProblem,
    policy: &TruncationPolicy,
    step: f64,
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let radius = truncation_radius(policy, step)?;
    let phi = policy.phi(step);
    let d = problem.dim_x;
    let mut px = vec![0.0; d];
    let mut py = vec![0.0; d];
    let mut f = vec![0.0; d];
    let mut g = vec![0.0; d * problem.dim_w];
    let mut bad = Vec::new();
    for (x, y) in samples {
        truncate_into(x, radius, &mut px);
        truncate_into(y, radius, &mut py);
        (problem.drift)(&px, &py, &mut f);
        (problem.diffusion)(&px, &py, &mut g);
        let bound = phi * (1.0 + norm(x) + norm(y));
        if norm(&f).max(norm(&g)) > bound * (1.0 + 1e-12) {
            bad.push((x.clone(), y.clone()));
        }
    }
    Ok(bad)
}

/// Evaluates each coefficient twice per sample; reports non-finite outputs
/// and any bitwise disagreement between the two evaluations.
pub fn check_coefficients_deterministic(problem: &SddeProblem, samples: &[(Vec<f64>, Vec<f64>)]) -> Vec<String> {
    let mut issues = Vec::new();
    for (x, y) in samples {
        let (f1, f2) = (problem.drift_at(x, y), problem.drift_at(x, y));
        let (g1, g2) = (problem.diffusion_at(x, y), problem.diffusion_at(x, y));
        let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same(&f1, &f2) || !same(&g1, &g2) {
            issues.push(format!("coefficients not deterministic at x = {x:?}, y = {y:?}"));
        }
        if f1.iter().chain(&g1).any(|v| !v.is_finite()) {
            issues.push(format!("non-finite coefficient at x = {x:?}, y = {y:?}"));
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::model::{scalar_coefficient, SddeProblem};

    #[test]
    fn k1_hat_formula() {
        let policy = builtin::example1_policy();
        let c = KhasminskiiConstants::new(2.0, 16.0, 0.0, 4.0, &policy).unwrap();
        assert_eq!(c.k1_hat, 4.0);
        assert!(KhasminskiiConstants::new(0.0, 1.0, 0.0, 4.0, &policy).is_err());
        assert!(KhasminskiiConstants::new(1.0, 1.0, 0.0, 2.0, &policy).is_err());
    }

    #[test]
    fn zero_coefficients_never_violate() {
        let problem = builtin::zero_problem(vec![0.0], 1.0);
        let policy = builtin::example1_policy();
        let c = KhasminskiiConstants::new(1.0, 0.0, 0.0, 4.0, &policy).unwrap();
        let v = check_khasminskii_preservation(&problem, &policy, 0.01, &c, &scalar_grid(50, 100.0)).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn cubic_growth_violates_without_k2() {
        let problem = SddeProblem::scalar(
            |x, _| x * x.abs() * x.abs(),
            |_, _| 0.0,
            DelayFunction::constant(1.0).unwrap(),
            InitialPath::constant(vec![1.0]).unwrap(),
        )
        .unwrap();
        let policy = builtin::example1_policy();
        let c = KhasminskiiConstants::new(1.0, 0.0, 0.0, 4.0, &policy).unwrap();
        let v = check_khasminskii_preservation(&problem, &policy, 2f64.powi(-14), &c, &scalar_grid(50, 50.0)).unwrap();
        assert!(!v.is_empty());
        assert!(v.iter().all(|s| s.lhs > s.rhs));
    }

    #[test]
    fn multiplicity_constant_delay() {
        let d = DelayFunction::constant(1.0).unwrap();
        let r = check_multiplicity_bound(&d, 0.01, 1000).unwrap();
        assert_eq!(r, MultiplicityReport { max_multiplicity: 1, bound: 2 });
    }

    #[test]
    fn multiplicity_sine_delays() {
        let r = check_multiplicity_bound(&builtin::example1_delay(), 2f64.powi(-7), 100_000).unwrap();
        assert_eq!(r.bound, 3);
        assert!(r.holds(), "{r:?}");
        let r = check_multiplicity_bound(&builtin::example2_delay(), 1e-3, 100_000).unwrap();
        assert_eq!(r.bound, 2);
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn delay_checks() {
        assert!(check_delay(&builtin::example1_delay()).is_empty());
        assert!(check_delay(&builtin::example2_delay()).is_empty());
        let lying = DelayFunction::new(|t: f64| 0.5 - 0.5 * t.sin(), 1.0, 0.1).unwrap();
        assert!(!check_delay(&lying).is_empty());
        let out_of_range = DelayFunction::new(|_| 2.0, 1.0, 0.0).unwrap();
        assert!(!check_delay(&out_of_range).is_empty());
    }

    #[test]
    fn holder_checks() {
        let c = InitialPath::constant(vec![2.0]).unwrap();
        assert!(check_initial_holder(&c, 1.0).is_empty());
        let sqrt_path = InitialPath::new(1, |t, out| out[0] = (-t).sqrt(), 1.0, 0.5).unwrap();
        assert!(check_initial_holder(&sqrt_path, 1.0).is_empty());
        let liar = InitialPath::new(1, |t, out| out[0] = 10.0 * t, 1.0, 1.0).unwrap();
        assert!(!check_initial_holder(&liar, 1.0).is_empty());
    }

    #[test]
    fn split_check_detects_mismatch() {
        let split = builtin::example2_split(builtin::Example2::default());
        let samples = scalar_grid(40, 20.0);
        assert!(check_split(&split, &samples).is_empty());

        let mut broken = split.clone();
        broken.drift_super = scalar_coefficient(|x, y| x * y - x * x * x + 1.0);
        let issues = check_split(&broken, &samples);
        assert!(issues.iter().any(|s| s.contains("F(0, 0)")));
        assert!(issues.iter().any(|s| s.contains("F1 + F")));
    }

    #[test]
    fn determinism_check() {
        let problem = builtin::example1_problem();
        assert!(check_coefficients_deterministic(&problem, &scalar_grid(20, 10.0)).is_empty());
    }
}
