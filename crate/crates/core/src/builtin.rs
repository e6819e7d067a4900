//! Built-in test problems.
//!
//! * `example1`: dX = [−9X³ + |X(t−δ(t))|^{3/2}] dt + X² dB, δ(t) = 0.5 − 0.5 sin t,
//!   τ = 1, ξ ≡ 2, μ(r) = 10r², φ(Δ) = 10Δ^{-1/4}.
//! * `example2`: delayed power logistic model
//!   dX = X[a + bX(t−δ(t)) − X²] dt + cX·X(t−δ(t)) dB with δ(t) = 0.05 − 0.05 sin t,
//!   τ = 0.1, split as F₁ = ax, F = bxy − x³, G₁ = 0, G = cxy. ξ ≡ 1 by default.
//! * `zero`: f = g = 0.
//! * `linear-decay`: dX = −X dt, constant delay 1, ξ ≡ 1.

use crate::checks::KhasminskiiConstants;
use crate::model::{scalar_coefficient, DelayFunction, InitialPath, SddeProblem, SplitSddeProblem, StabilityParams};
use crate::truncation::TruncationPolicy;

pub const EXAMPLE1_INITIAL: f64 = 2.0;

pub fn example1_delay() -> DelayFunction {
    DelayFunction::sine(0.5).expect("valid delay")
}

pub fn example1_problem() -> SddeProblem {
    example1_problem_with_initial(EXAMPLE1_INITIAL)
}

pub fn example1_problem_with_initial(xi: f64) -> SddeProblem {
    SddeProblem::scalar(
        |x, y| -9.0 * x * x * x + y.abs().powf(1.5),
        |x, _| x * x,
        example1_delay(),
        InitialPath::constant(vec![xi]).expect("valid initial path"),
    )
    .expect("valid problem")
}

pub fn example1_policy() -> TruncationPolicy {
    TruncationPolicy::power_law(10.0, 2.0, 10.0, 0.25, 10.0).expect("valid policy")
}

/// 2x·f + g² = −17x⁴ + 2x|y|^{3/2} ≤ 2(1 + x² + y²) − 16x⁴.
pub fn example1_khasminskii(policy: &TruncationPolicy) -> KhasminskiiConstants {
    KhasminskiiConstants::new(2.0, 16.0, 0.0, 4.0, policy).expect("valid constants")
}

/// Coefficients of the delayed power logistic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub initial: f64,
}

impl Default for Example2 {
    fn default() -> Self {
        Self { a: -3.0, b: 1.0, c: 0.5, initial: 1.0 }
    }
}

pub fn example2_delay() -> DelayFunction {
    DelayFunction::sine(0.05).expect("valid delay")
}

pub fn example2_split(ex: Example2) -> SplitSddeProblem {
    let Example2 { a, b, c, initial } = ex;
    SplitSddeProblem::from_parts(
        1,
        1,
        scalar_coefficient(move |x, _| a * x),
        scalar_coefficient(move |x, y| b * x * y - x * x * x),
        scalar_coefficient(|_, _| 0.0),
        scalar_coefficient(move |x, y| c * x * y),
        example2_delay(),
        InitialPath::constant(vec![initial]).expect("valid initial path"),
        5.0,
        0.0,
    )
    .expect("valid split problem")
}

/// μ(r) = ((|b|+1) ∨ |c|)·r², φ(Δ) = ((|b|+1) ∨ |c|)·Δ^{-1/4}.
pub fn example2_policy_for(ex: Example2) -> TruncationPolicy {
    let k = (ex.b.abs() + 1.0).max(ex.c.abs());
    TruncationPolicy::power_law(k, 2.0, k, 0.25, k.max(1.0)).expect("valid policy")
}

pub fn example2_policy() -> TruncationPolicy {
    example2_policy_for(Example2::default())
}

/// λ₁ = −2a, λ₂ = 0, α₁ = 0, α₂ = 2b², α₃ = 1, α₄ = c⁴/2, β = 4, θ = ∞,
/// L̄ = 5, L̄₁ = 0.
pub fn example2_stability_params(ex: Example2) -> StabilityParams {
    StabilityParams {
        lambda1: -2.0 * ex.a,
        lambda2: 0.0,
        alpha1: 0.0,
        alpha2: 2.0 * ex.b * ex.b,
        alpha3: 1.0,
        alpha4: 0.5 * ex.c.powi(4),
        beta: 4.0,
        theta: f64::INFINITY,
        lbar: 5.0,
        lbar1: 0.0,
    }
}

/// For a = −3, b = 1, c = 0.5:
/// 2x·f + g² ≤ −6x² − 1.375x⁴ + 2y² + 0.125y⁴.
pub fn example2_khasminskii(policy: &TruncationPolicy) -> KhasminskiiConstants {
    KhasminskiiConstants::new(2.0, 1.375, 0.125, 4.0, policy).expect("valid constants")
}

pub fn zero_problem(value: Vec<f64>, tau: f64) -> SddeProblem {
    let d = value.len();
    SddeProblem::new(
        d,
        1,
        std::sync::Arc::new(|_: &[f64], _: &[f64], out: &mut [f64]| out.fill(0.0)),
        std::sync::Arc::new(|_: &[f64], _: &[f64], out: &mut [f64]| out.fill(0.0)),
        DelayFunction::constant(tau).expect("valid delay"),
        InitialPath::constant(value).expect("valid initial path"),
    )
    .expect("valid problem")
}

pub fn linear_decay_problem() -> SddeProblem {
    SddeProblem::scalar(
        |x, _| -x,
        |_, _| 0.0,
        DelayFunction::constant(1.0).expect("valid delay"),
        InitialPath::constant(vec![1.0]).expect("valid initial path"),
    )
    .expect("valid problem")
}

/// Wide policy for problems with linear coefficients: radius grows fast enough
/// that truncation never binds in practice.
pub fn linear_policy() -> TruncationPolicy {
    TruncationPolicy::power_law(1.0, 1.0, 1e6, 0.25, 1e6).expect("valid policy")
}

/// Geometric Brownian motion dX = aX dt + bX dB (no delay dependence).
pub fn geometric_problem(a: f64, b: f64, x0: f64) -> SddeProblem {
    SddeProblem::scalar(
        move |x, _| a * x,
        move |x, _| b * x,
        DelayFunction::constant(1.0).expect("valid delay"),
        InitialPath::constant(vec![x0]).expect("valid initial path"),
    )
    .expect("valid problem")
}
