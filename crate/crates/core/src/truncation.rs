//! Truncation machinery.
//!
//! A policy is a pair (μ, φ): μ bounds the growth of the coefficients on
//! balls of radius r ≥ 1, φ is a strictly decreasing function of the step
//! size. For a step Δ the coefficients are evaluated at arguments radially
//! projected onto the ball of radius μ⁻¹(φ(Δ)), which makes them grow at most
//! linearly with slope φ(Δ).

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SddeError};
use crate::model::{norm, SddeProblem, SplitSddeProblem, StabilityParams};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// μ(r) = mu_coeff·r^mu_power and φ(Δ) = phi_coeff·Δ^(−phi_power).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub mu_coeff: f64,
    pub mu_power: f64,
    pub phi_coeff: f64,
    pub phi_power: f64,
}

#[derive(Clone)]
pub struct TruncationPolicy {
    mu: ScalarFn,
    mu_inv: ScalarFn,
    phi: ScalarFn,
    h_hat: f64,
    power_law: Option<PowerLaw>,
}

impl fmt::Debug for TruncationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncationPolicy")
            .field("h_hat", &self.h_hat)
            .field("power_law", &self.power_law)
            .finish_non_exhaustive()
    }
}

impl TruncationPolicy {
    /// General policy. Both μ and its inverse are supplied by the caller.
    pub fn new<M, MI, P>(mu: M, mu_inv: MI, phi: P, h_hat: f64) -> Result<Self>
    where
        M: Fn(f64) -> f64 + Send + Sync + 'static,
        MI: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mu_one = mu(1.0);
        if !(h_hat.is_finite() && h_hat >= 1.0_f64.max(mu_one)) {
            return Err(SddeError::Domain(format!(
                "h_hat must be at least max(1, mu(1)) = {}, got {h_hat}",
                1.0_f64.max(mu_one)
            )));
        }
        Ok(Self { mu: Arc::new(mu), mu_inv: Arc::new(mu_inv), phi: Arc::new(phi), h_hat, power_law: None })
    }

    /// μ(r) = c·r^q with analytic inverse, φ(Δ) = a·Δ^(−p).
    pub fn power_law(mu_coeff: f64, mu_power: f64, phi_coeff: f64, phi_power: f64, h_hat: f64) -> Result<Self> {
        for (name, v) in [
            ("mu_coeff", mu_coeff),
            ("mu_power", mu_power),
            ("phi_coeff", phi_coeff),
            ("phi_power", phi_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SddeError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        let inv_power = 1.0 / mu_power;
        let mut policy = Self::new(
            move |r: f64| mu_coeff * r.powf(mu_power),
            move |v: f64| (v / mu_coeff).powf(inv_power),
            move |step: f64| phi_coeff * step.powf(-phi_power),
            h_hat,
        )?;
        policy.power_law = Some(PowerLaw { mu_coeff, mu_power, phi_coeff, phi_power });
        Ok(policy)
    }

    pub fn mu(&self, r: f64) -> f64 {
        (self.mu)(r)
    }

    pub fn mu_inv(&self, v: f64) -> f64 {
        (self.mu_inv)(v)
    }

    pub fn phi(&self, step: f64) -> f64 {
        (self.phi)(step)
    }

    pub fn h_hat(&self) -> f64 {
        self.h_hat
    }

    pub fn as_power_law(&self) -> Option<PowerLaw> {
        self.power_law
    }

    /// Sampled check of the policy constraints. Returns human-readable
    /// descriptions of every violated sample (empty when consistent).
    ///
    /// Grid: 2001 log-spaced steps in [1e-12, 1]; inverse checked on 1001
    /// log-spaced values in [μ(1), 1e6·μ(1)].
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let mu_one = self.mu(1.0);
        if self.phi(1.0) < mu_one {
            issues.push(format!("phi(1) = {} < mu(1) = {mu_one}", self.phi(1.0)));
        }
        let steps: Vec<f64> = (0..=2000).map(|i| 10f64.powf(-12.0 + 12.0 * i as f64 / 2000.0)).collect();
        for &s in &steps {
            let scaled = s.powf(0.25) * self.phi(s);
            if scaled > self.h_hat * (1.0 + 1e-12) {
                issues.push(format!("step^(1/4)*phi(step) = {scaled} exceeds h_hat = {} at step {s}", self.h_hat));
                break;
            }
        }
        for pair in steps.windows(2) {
            if self.phi(pair[0]) < self.phi(pair[1]) {
                issues.push(format!("phi not decreasing between steps {} and {}", pair[0], pair[1]));
                break;
            }
        }
        for i in 0..=1000 {
            let v = mu_one * 10f64.powf(6.0 * i as f64 / 1000.0);
            let back = self.mu(self.mu_inv(v));
            if (back - v).abs() > 1e-9 * v.abs() {
                issues.push(format!("mu(mu_inv({v})) = {back}"));
                break;
            }
        }
        issues
    }
}

/// Radial projection onto the closed ball of the given radius.
///
/// The zero vector maps to itself (x/|x| is taken as 0 at x = 0).
pub fn truncate_point(x: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(SddeError::Domain(format!("truncation radius must be positive, got {radius}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SddeError::Domain("cannot truncate a non-finite vector".into()));
    }
    let mut out = vec![0.0; x.len()];
    truncate_into(x, radius, &mut out);
    Ok(out)
}

/// Unchecked projection used by the stepper.
///
/// Guarantees |out| ≤ radius in floating point, which makes the map exactly
/// idempotent: a projected point is returned bit-for-bit on a second pass.
pub(crate) fn truncate_into(x: &[f64], radius: f64, out: &mut [f64]) {
    let n = norm(x);
    if n <= radius || n.is_nan() {
        out.copy_from_slice(x);
        return;
    }
    let mut scale = radius / n;
    loop {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v * scale;
        }
        if norm(out) <= radius {
            break;
        }
        scale *= 1.0 - f64::EPSILON;
    }
}

/// μ⁻¹(φ(Δ)).
pub fn truncation_radius(policy: &TruncationPolicy, step: f64) -> Result<f64> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(SddeError::Domain(format!("step size must lie in (0, 1], got {step}")));
    }
    let phi = policy.phi(step);
    let mu_one = policy.mu(1.0);
    if !(phi >= mu_one) {
        return Err(SddeError::PolicyInconsistency { step, phi, mu_one });
    }
    let r = policy.mu_inv(phi);
    if !(r.is_finite() && r > 0.0) {
        return Err(SddeError::Domain(format!("mu_inv(phi({step})) = {r} is not a positive radius")));
    }
    Ok(r)
}

fn check_args(x: &[f64], y: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim || y.len() != dim {
        return Err(SddeError::Domain(format!(
            "arguments must have dimension {dim}, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SddeError::Domain("coefficient arguments must be finite".into()));
    }
    Ok(())
}

fn project_pair(x: &[f64], y: &[f64], radius: f64) -> (Vec<f64>, Vec<f64>) {
    let mut px = vec![0.0; x.len()];
    let mut py = vec![0.0; y.len()];
    truncate_into(x, radius, &mut px);
    truncate_into(y, radius, &mut py);
    (px, py)
}

/// f_Δ(x, y) = f(π_Δ(x), π_Δ(y)).
pub fn truncated_drift(
    problem: &SddeProblem,
    policy: &TruncationPolicy,
    step: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    check_args(x, y, problem.dim_x)?;
    let (px, py) = project_pair(x, y, truncation_radius(policy, step)?);
    Ok(problem.drift_at(&px, &py))
}

/// g_Δ(x, y) = g(π_Δ(x), π_Δ(y)), row-major d×m.
pub fn truncated_diffusion(
    problem: &SddeProblem,
    policy: &TruncationPolicy,
    step: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    check_args(x, y, problem.dim_x)?;
    let (px, py) = project_pair(x, y, truncation_radius(policy, step)?);
    Ok(problem.diffusion_at(&px, &py))
}

/// F₁(x, y) + F(π_Δ(x), π_Δ(y)).
pub fn partially_truncated_drift(
    split: &SplitSddeProblem,
    policy: &TruncationPolicy,
    step: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let d = split.base.dim_x;
    check_args(x, y, d)?;
    let (px, py) = project_pair(x, y, truncation_radius(policy, step)?);
    let mut lin = vec![0.0; d];
    let mut sup = vec![0.0; d];
    (split.drift_linear)(x, y, &mut lin);
    (split.drift_super)(&px, &py, &mut sup);
    Ok(lin.iter().zip(&sup).map(|(a, b)| a + b).collect())
}

/// G₁(x, y) + G(π_Δ(x), π_Δ(y)).
pub fn partially_truncated_diffusion(
    split: &SplitSddeProblem,
    policy: &TruncationPolicy,
    step: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let d = split.base.dim_x;
    let len = d * split.base.dim_w;
    check_args(x, y, d)?;
    let (px, py) = project_pair(x, y, truncation_radius(policy, step)?);
    let mut lin = vec![0.0; len];
    let mut sup = vec![0.0; len];
    (split.diff_linear)(x, y, &mut lin);
    (split.diff_super)(&px, &py, &mut sup);
    Ok(lin.iter().zip(&sup).map(|(a, b)| a + b).collect())
}

/// ε_Δ = (4L̄ + 2L̄₁)Δ + 8φ(Δ)²Δ.
pub fn epsilon_delta(params: &StabilityParams, policy: &TruncationPolicy, step: f64) -> Result<f64> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(SddeError::Domain(format!("step size must lie in (0, 1], got {step}")));
    }
    let phi = policy.phi(step);
    Ok((4.0 * params.lbar + 2.0 * params.lbar1) * step + 8.0 * phi * phi * step)
}
