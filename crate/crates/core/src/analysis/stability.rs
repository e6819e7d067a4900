//! Mean-square decay rates.
//!
//! Continuous rate γ* solves
//! `λ₁ = (α₁ + λ₂/4) + κ̄(λ₂ + α₂)e^{γτ} + γ`;
//! the discrete rate γ*_Δ solves
//! `λ₁ = (α₁ + λ₂/4 + ε_Δ) + κ̄(λ₂ + α₂ + ε_Δ)e^{γτ} + (1 − e^{−γΔ})/Δ`.
//! Both right-hand sides are strictly increasing in γ, so the roots are found
//! by bracketing and bisection. Δ* is the step where ε_Δ reaches
//! `(λ₁ − α₁ − λ₂/4 − κ̄(α₂ + λ₂)) / (1 + κ̄)`.

use std::io::Write;

use crate::error::{Result, SddeError};
use crate::model::StabilityParams;
use crate::truncation::{epsilon_delta, TruncationPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSolution {
    pub gamma: f64,
    /// Value of (right-hand side − λ₁) at `gamma`.
    pub residual: f64,
    pub iterations: usize,
}

const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 400;

/// Root of a strictly increasing `h` on (0, ∞) with `h(0) < 0`, to
/// `|h(γ)| ≤ tol`.
fn bisect_increasing<F: Fn(f64) -> f64>(h: F, tol: f64) -> Result<RateSolution> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut iterations = 0;
    while h(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if iterations > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(SddeError::Infeasible("rate equation has no finite root".into()));
        }
    }
    let mut best = RateSolution { gamma: hi, residual: h(hi), iterations };
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let r = h(mid);
        iterations += 1;
        if r.abs() < best.residual.abs() {
            best = RateSolution { gamma: mid, residual: r, iterations };
        }
        if r.abs() <= tol || mid <= lo || mid >= hi {
            break;
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.iterations = iterations;
    Ok(best)
}

fn check_common(params: &StabilityParams, tau: f64) -> Result<()> {
    params.validate()?;
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(SddeError::Domain(format!("delay bound tau must be nonnegative, got {tau}")));
    }
    Ok(())
}

/// γ*: the continuous-time decay rate root.
pub fn solve_gamma_star(params: &StabilityParams, kappa: usize, tau: f64) -> Result<RateSolution> {
    check_common(params, tau)?;
    let margin = params.rate_margin(kappa);
    if !(margin > 0.0) {
        return Err(SddeError::Infeasible(format!(
            "lambda1 > alpha1 + lambda2/4 + kappa*(lambda2 + alpha2) violated (margin {margin})"
        )));
    }
    let k = kappa as f64;
    let base = params.alpha1 + 0.25 * params.lambda2;
    let delayed = k * (params.lambda2 + params.alpha2);
    let h = |g: f64| base + delayed * (g * tau).exp() + g - params.lambda1;
    bisect_increasing(h, 1e-10 * (1.0 + params.lambda1.abs()))
}

/// γ*_Δ for step `step` and perturbation `eps` (normally ε_Δ).
pub fn solve_gamma_star_delta(
    params: &StabilityParams,
    kappa: usize,
    tau: f64,
    step: f64,
    eps: f64,
) -> Result<RateSolution> {
    check_common(params, tau)?;
    if !(step > 0.0 && step <= 1.0) {
        return Err(SddeError::Domain(format!("step size must lie in (0, 1], got {step}")));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(SddeError::Domain(format!("epsilon must be nonnegative, got {eps}")));
    }
    let k = kappa as f64;
    let base = params.alpha1 + 0.25 * params.lambda2 + eps;
    let delayed = k * (params.lambda2 + params.alpha2 + eps);
    let slack = params.lambda1 - base - delayed;
    if !(slack > 0.0) {
        return Err(SddeError::Infeasible(format!(
            "lambda1 > alpha1 + lambda2/4 + eps + kappa*(lambda2 + alpha2 + eps) violated \
             (margin {slack}); the step {step} is not below delta_star"
        )));
    }
    let h = |g: f64| base + delayed * (g * tau).exp() - (-g * step).exp_m1() / step - params.lambda1;
    bisect_increasing(h, 1e-10 * (1.0 + params.lambda1.abs()))
}

/// `(λ₁ − α₁ − λ₂/4 − κ̄(α₂ + λ₂)) / (1 + κ̄)`.
pub fn delta_star_target(params: &StabilityParams, kappa: usize) -> Result<f64> {
    params.validate()?;
    let margin = params.rate_margin(kappa);
    if !(margin > 0.0) {
        return Err(SddeError::Infeasible(format!(
            "lambda1 > alpha1 + lambda2/4 + kappa*(lambda2 + alpha2) violated (margin {margin})"
        )));
    }
    Ok(margin / (1.0 + kappa as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaStar {
    pub step: f64,
    pub target: f64,
    /// ε₁ is already below the target, so every Δ ∈ (0, 1] qualifies.
    pub saturated: bool,
}

pub fn solve_delta_star(params: &StabilityParams, policy: &TruncationPolicy, kappa: usize) -> Result<DeltaStar> {
    let target = delta_star_target(params, kappa)?;
    solve_delta_star_for_target(params, policy, target)
}

/// Δ* with ε_{Δ*} = `target`.
///
/// For a power-law φ(Δ) = cΔ^{-1/4}, ε_Δ = aΔ + b√Δ with a = 4L̄ + 2L̄₁,
/// b = 8c², solved as a quadratic in √Δ. Otherwise bisection in log Δ to
/// relative tolerance 1e-12.
pub fn solve_delta_star_for_target(
    params: &StabilityParams,
    policy: &TruncationPolicy,
    target: f64,
) -> Result<DeltaStar> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(SddeError::Infeasible(format!("epsilon target must be positive, got {target}")));
    }
    let eps = |s: f64| epsilon_delta(params, policy, s);
    if eps(1.0)? < target {
        return Ok(DeltaStar { step: 1.0, target, saturated: true });
    }
    if let Some(pl) = policy.as_power_law().filter(|pl| pl.phi_power == 0.25) {
        let a = 4.0 * params.lbar + 2.0 * params.lbar1;
        let b = 8.0 * pl.phi_coeff * pl.phi_coeff;
        let root = 2.0 * target / (b + (b * b + 4.0 * a * target).sqrt());
        return Ok(DeltaStar { step: (root * root).min(1.0), target, saturated: false });
    }
    let mut hi = 1.0_f64;
    let mut lo = 0.5_f64;
    while eps(lo)? >= target {
        hi = lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(SddeError::Infeasible("epsilon_delta does not fall below the target".into()));
        }
    }
    while hi / lo - 1.0 > 1e-12 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if eps(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DeltaStar { step: (lo * hi).sqrt(), target, saturated: false })
}

/// Theoretical mean-square decay exponent: min(γ, (1/τ)·log(α₃/(κ̄α₄))).
pub fn decay_rate_bound(params: &StabilityParams, kappa: usize, tau: f64, gamma: f64) -> f64 {
    gamma.min(params.superlinear_rate_cap(kappa, tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub step: f64,
    pub epsilon: f64,
    /// `None` when Δ ≥ Δ* and no positive rate exists.
    pub gamma: Option<RateSolution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTable {
    pub kappa: usize,
    pub gamma_star: RateSolution,
    pub delta_star: DeltaStar,
    pub rows: Vec<StabilityRow>,
}

impl StabilityTable {
    /// Comment header (`# key=value` lines), then `delta,epsilon,gamma_star_delta`.
    /// Rows without a rate print `nan` and add a `# warning` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# kappa_bar={}", self.kappa)?;
        writeln!(w, "# gamma_star={}", self.gamma_star.gamma)?;
        writeln!(w, "# delta_star={}", self.delta_star.step)?;
        writeln!(w, "# epsilon_target={}", self.delta_star.target)?;
        writeln!(w, "# delta_star_saturated={}", self.delta_star.saturated)?;
        for row in self.rows.iter().filter(|r| r.gamma.is_none()) {
            writeln!(w, "# warning: delta={} is not below delta_star; no positive rate", row.step)?;
        }
        writeln!(w, "delta,epsilon,gamma_star_delta")?;
        for row in &self.rows {
            match row.gamma {
                Some(g) => writeln!(w, "{:e},{:.4},{:.4}", row.step, row.epsilon, g.gamma)?,
                None => writeln!(w, "{:e},{:.4},nan", row.step, row.epsilon)?,
            }
        }
        Ok(())
    }
}

/// γ*, Δ* and (ε_Δ, γ*_Δ) for each requested step.
pub fn stability_table(
    params: &StabilityParams,
    policy: &TruncationPolicy,
    kappa: usize,
    tau: f64,
    steps: &[f64],
) -> Result<StabilityTable> {
    params.check_rate_conditions(kappa)?;
    let gamma_star = solve_gamma_star(params, kappa, tau)?;
    let delta_star = solve_delta_star(params, policy, kappa)?;
    let mut rows = Vec::with_capacity(steps.len());
    for &step in steps {
        let epsilon = epsilon_delta(params, policy, step)?;
        let gamma = match solve_gamma_star_delta(params, kappa, tau, step, epsilon) {
            Ok(g) => Some(g),
            Err(SddeError::Infeasible(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(StabilityRow { step, epsilon, gamma });
    }
    Ok(StabilityTable { kappa, gamma_star, delta_star, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    fn example2() -> StabilityParams {
        builtin::example2_stability_params(builtin::Example2::default())
    }

    fn blank() -> StabilityParams {
        StabilityParams {
            lambda1: 0.0,
            lambda2: 0.0,
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: 1.0,
            alpha4: 0.0,
            beta: 4.0,
            theta: 0.0,
            lbar: 0.0,
            lbar1: 0.0,
        }
    }

    #[test]
    fn gamma_star_example2() {
        let r = solve_gamma_star(&example2(), 2, 0.1).unwrap();
        assert!((r.gamma - 1.3992).abs() < 1e-3 * 0.5);
        assert!(r.residual.abs() <= 1e-10 * 7.0);
        assert!(r.iterations < 60);
    }

    #[test]
    fn gamma_star_trivial_cases() {
        let p = StabilityParams { lambda1: 5.0, alpha1: 1.0, alpha2: 1.0, ..blank() };
        let r = solve_gamma_star(&p, 1, 0.0).unwrap();
        assert!((r.gamma - 3.0).abs() < 1e-9);

        let p = StabilityParams { lambda1: 4.5, ..blank() };
        let r = solve_gamma_star(&p, 3, 0.7).unwrap();
        assert!((r.gamma - 4.5).abs() < 1e-9);
    }

    #[test]
    fn gamma_star_infeasible() {
        let p = StabilityParams { lambda1: 4.0, ..example2() };
        assert!(matches!(solve_gamma_star(&p, 2, 0.1), Err(SddeError::Infeasible(_))));
    }

    #[test]
    fn gamma_star_monotonicity() {
        let base = example2();
        let g = |p: &StabilityParams, k, tau| solve_gamma_star(p, k, tau).unwrap().gamma;
        let g0 = g(&base, 2, 0.1);
        assert!(g(&StabilityParams { lambda1: 6.5, ..base }, 2, 0.1) > g0);
        assert!(g(&StabilityParams { alpha2: 2.2, ..base }, 2, 0.1) < g0);
        assert!(g(&StabilityParams { lambda1: 9.0, ..base }, 3, 0.1) < g(&StabilityParams { lambda1: 9.0, ..base }, 2, 0.1));
        assert!(g(&base, 2, 0.2) < g0);
    }

    #[test]
    fn gamma_star_delta_examples() {
        let p = example2();
        let r = solve_gamma_star_delta(&p, 2, 0.1, 1e-4, 0.3220).unwrap();
        assert!((r.gamma - 0.6982).abs() < 5e-4, "{}", r.gamma);
        let r = solve_gamma_star_delta(&p, 2, 0.1, 1e-7, 0.0101).unwrap();
        assert!((r.gamma - 1.3764).abs() < 5e-4, "{}", r.gamma);
        let limit = solve_gamma_star_delta(&p, 2, 0.1, 1e-12, 0.0).unwrap();
        let star = solve_gamma_star(&p, 2, 0.1).unwrap();
        assert!((limit.gamma - star.gamma).abs() <= 1e-3);
    }

    #[test]
    fn gamma_star_delta_infeasible_above_delta_star() {
        let p = example2();
        let policy = builtin::example2_policy();
        let eps = epsilon_delta(&p, &policy, 1e-3).unwrap();
        assert!(matches!(solve_gamma_star_delta(&p, 2, 0.1, 1e-3, eps), Err(SddeError::Infeasible(_))));
    }

    #[test]
    fn delta_star_example2() {
        let d = solve_delta_star(&example2(), &builtin::example2_policy(), 2).unwrap();
        assert!((d.target - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.step - 4.2308e-4).abs() < 1e-6 * 0.5);
        assert!(!d.saturated);
    }

    #[test]
    fn delta_star_closed_form_matches_bisection() {
        let p = example2();
        let power = builtin::example2_policy();
        let generic = TruncationPolicy::new(
            |r: f64| 2.0 * r * r,
            |v: f64| (v / 2.0).sqrt(),
            |s: f64| 2.0 * s.powf(-0.25),
            2.0,
        )
        .unwrap();
        let a = solve_delta_star(&p, &power, 2).unwrap();
        let b = solve_delta_star(&p, &generic, 2).unwrap();
        assert!((a.step - b.step).abs() <= 1e-9 * a.step);
    }

    #[test]
    fn delta_star_trivial_targets() {
        let p = blank();
        let unit = TruncationPolicy::power_law(1.0, 2.0, 1.0, 0.25, 1.0).unwrap();
        let d = solve_delta_star_for_target(&p, &unit, 8.0).unwrap();
        assert_eq!(d.step, 1.0);
        let d = solve_delta_star_for_target(&p, &unit, 4.0).unwrap();
        assert!((d.step - 0.25).abs() < 1e-15);
        let d = solve_delta_star_for_target(&p, &unit, 9.0).unwrap();
        assert!(d.saturated);
        assert_eq!(d.step, 1.0);
        assert!(solve_delta_star(&StabilityParams { lambda1: 1.0, alpha2: 1.0, ..p }, &unit, 2).is_err());
    }

    #[test]
    fn table_rows_and_layout() {
        let p = example2();
        let t = stability_table(&p, &builtin::example2_policy(), 2, 0.1, &[1e-4, 1.0]).unwrap();
        assert!(t.rows[0].gamma.is_some());
        assert!(t.rows[1].gamma.is_none());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("delta,epsilon,gamma_star_delta\n1e-4,0.3220,0.6982\n1e0,52.0000,nan\n"));
        assert!(text.contains("# warning: delta=1"));
        assert!(text.contains("# kappa_bar=2"));
    }
}
