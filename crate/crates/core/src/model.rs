//! Problem definitions for SDDEs with a time-varying delay:
//!
//! ```text
//! dX(t) = f(X(t), X(t - δ(t))) dt + g(X(t), X(t - δ(t))) dB(t),   t ≥ 0
//! X(t)  = ξ(t),                                                  t ∈ [-τ, 0]
//! ```
//!
//! Coefficients are opaque closures writing into caller-provided buffers so
//! the stepper never allocates. Diffusion matrices are stored row-major,
//! `d × m`, entry `(i, j)` at `i * m + j`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SddeError};

/// `(x, y, out)`: evaluate a coefficient at state `x` and delayed state `y`.
pub type Coefficient = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Relative slack used when deciding whether a float ratio is an integer.
pub(crate) const INTEGRALITY_TOL: f64 = 1e-9;

/// Returns `Some(n)` when `ratio` is within [`INTEGRALITY_TOL`] of the integer `n`.
pub(crate) fn near_integer(ratio: f64) -> Option<u64> {
    if !ratio.is_finite() || ratio < 0.0 {
        return None;
    }
    let n = ratio.round();
    if (ratio - n).abs() <= INTEGRALITY_TOL * n.max(1.0) {
        Some(n as u64)
    } else {
        None
    }
}

pub fn norm(v: &[f64]) -> f64 {
    match v {
        [] => 0.0,
        [x] => x.abs(),
        _ => {
            // Rescale so squares cannot overflow for states near f64::MAX.
            let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if big == 0.0 || !big.is_finite() {
                return big;
            }
            big * v.iter().map(|x| (x / big) * (x / big)).sum::<f64>().sqrt()
        }
    }
}

/// The variable delay δ(t) with range bound τ and derivative bound δ̂.
#[derive(Clone)]
pub struct DelayFunction {
    delta: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    tau: f64,
    delta_hat: f64,
}

impl fmt::Debug for DelayFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayFunction")
            .field("tau", &self.tau)
            .field("delta_hat", &self.delta_hat)
            .finish_non_exhaustive()
    }
}

impl DelayFunction {
    /// `delta_hat` is declared by the caller; see [`crate::checks::check_delay`] for
    /// the sampled verification.
    pub fn new<F>(delta: F, tau: f64, delta_hat: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(SddeError::Domain(format!("delay bound tau must be positive, got {tau}")));
        }
        if !(0.0..1.0).contains(&delta_hat) {
            return Err(SddeError::Domain(format!(
                "derivative bound delta_hat must lie in [0, 1), got {delta_hat}"
            )));
        }
        Ok(Self { delta: Arc::new(delta), tau, delta_hat })
    }

    /// δ(t) ≡ τ.
    pub fn constant(tau: f64) -> Result<Self> {
        Self::new(move |_| tau, tau, 0.0)
    }

    /// δ(t) = a − a·sin t, so τ = 2a and δ̂ = a (requires a < 1).
    pub fn sine(amplitude: f64) -> Result<Self> {
        Self::new(move |t: f64| amplitude - amplitude * t.sin(), 2.0 * amplitude, amplitude)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.delta)(t)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn delta_hat(&self) -> f64 {
        self.delta_hat
    }

    /// M = τ/Δ, which must be a positive integer.
    pub fn grid_intervals(&self, step: f64) -> Result<usize> {
        if !(step.is_finite() && step > 0.0 && step <= 1.0) {
            return Err(SddeError::Config(format!("step size must lie in (0, 1], got {step}")));
        }
        match near_integer(self.tau / step) {
            Some(m) if m >= 1 => Ok(m as usize),
            _ => Err(SddeError::Config(format!(
                "step {step} is not a fraction tau/M of the delay bound tau = {} (tau/step = {})",
                self.tau,
                self.tau / step
            ))),
        }
    }

    /// δ_k = ⌊δ(kΔ)/Δ⌋ for a step already validated to be τ/M.
    ///
    /// Ratios within 1e-9 (relative) of an integer snap to it, so exact
    /// fractions such as τ/(τ/M) are not floored to M − 1 by rounding noise.
    /// The result is clamped to `[0, m]`.
    pub(crate) fn index_on_grid(&self, step: f64, m: usize, k: usize) -> usize {
        let ratio = self.eval(k as f64 * step) / step;
        let snapped = near_integer(ratio).map(|n| n as f64).unwrap_or_else(|| ratio.floor());
        if snapped.is_nan() || snapped <= 0.0 {
            0
        } else {
            (snapped as usize).min(m)
        }
    }
}

/// δ_k = ⌊δ(kΔ)/Δ⌋, always in `[0, M]`.
pub fn delay_index(delay: &DelayFunction, step: f64, k: usize) -> Result<usize> {
    let m = delay.grid_intervals(step)?;
    Ok(delay.index_on_grid(step, m, k))
}

/// κ̄ = ⌊1/(1 − δ̂)⌋ + 1, the largest number of grid indices k sharing the
/// same delayed index k − δ_k.
pub fn kappa_bar(delta_hat: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&delta_hat) {
        return Err(SddeError::Domain(format!("delta_hat must lie in [0, 1), got {delta_hat}")));
    }
    Ok((1.0 / (1.0 - delta_hat)).floor() as usize + 1)
}

/// Initial segment ξ on [−τ, 0] with its declared Hölder constants.
#[derive(Clone)]
pub struct InitialPath {
    xi: Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>,
    dim: usize,
    pub holder_k4: f64,
    pub holder_rho: f64,
}

impl fmt::Debug for InitialPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialPath")
            .field("dim", &self.dim)
            .field("holder_k4", &self.holder_k4)
            .field("holder_rho", &self.holder_rho)
            .finish_non_exhaustive()
    }
}

impl InitialPath {
    pub fn new<F>(dim: usize, xi: F, holder_k4: f64, holder_rho: f64) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(SddeError::Domain("initial path dimension must be positive".into()));
        }
        if !(holder_k4 >= 0.0) || !(holder_rho > 0.0 && holder_rho <= 1.0) {
            return Err(SddeError::Domain(format!(
                "Hoelder constants need K4 >= 0 and rho in (0, 1], got ({holder_k4}, {holder_rho})"
            )));
        }
        Ok(Self { xi: Arc::new(xi), dim, holder_k4, holder_rho })
    }

    /// ξ ≡ c, Hölder with any constants; K₄ = 0, ϱ = 1 is declared.
    pub fn constant(value: Vec<f64>) -> Result<Self> {
        let dim = value.len();
        Self::new(dim, move |_, out| out.copy_from_slice(&value), 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.xi)(t, out)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

/// Full problem: drift f, diffusion g, delay and initial segment.
#[derive(Clone)]
pub struct SddeProblem {
    pub dim_x: usize,
    pub dim_w: usize,
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub delay: DelayFunction,
    pub initial: InitialPath,
}

impl fmt::Debug for SddeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SddeProblem")
            .field("dim_x", &self.dim_x)
            .field("dim_w", &self.dim_w)
            .field("delay", &self.delay)
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

impl SddeProblem {
    pub fn new(
        dim_x: usize,
        dim_w: usize,
        drift: Coefficient,
        diffusion: Coefficient,
        delay: DelayFunction,
        initial: InitialPath,
    ) -> Result<Self> {
        if dim_x == 0 || dim_w == 0 {
            return Err(SddeError::Domain(format!(
                "dimensions must be positive, got d = {dim_x}, m = {dim_w}"
            )));
        }
        if initial.dim() != dim_x {
            return Err(SddeError::Config(format!(
                "initial path has dimension {} but the state has dimension {dim_x}",
                initial.dim()
            )));
        }
        Ok(Self { dim_x, dim_w, drift, diffusion, delay, initial })
    }

    /// Scalar problem (d = m = 1) from plain functions of (x, y).
    pub fn scalar<F, G>(drift: F, diffusion: G, delay: DelayFunction, initial: InitialPath) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(1, 1, scalar_coefficient(drift), scalar_coefficient(diffusion), delay, initial)
    }

    pub fn drift_at(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x];
        (self.drift)(x, y, &mut out);
        out
    }

    pub fn diffusion_at(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x * self.dim_w];
        (self.diffusion)(x, y, &mut out);
        out
    }
}

/// Wraps a scalar function of (x, y) as a one-dimensional [`Coefficient`].
pub fn scalar_coefficient<F>(f: F) -> Coefficient
where
    F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(move |x: &[f64], y: &[f64], out: &mut [f64]| out[0] = f(x[0], y[0]))
}

/// Coefficients split as f = F₁ + F, g = G₁ + G, where F₁, G₁ are globally
/// Lipschitz (constant L̄) and F, G carry the super-linear growth.
#[derive(Clone)]
pub struct SplitSddeProblem {
    pub base: SddeProblem,
    pub drift_linear: Coefficient,
    pub drift_super: Coefficient,
    pub diff_linear: Coefficient,
    pub diff_super: Coefficient,
    pub lbar: f64,
    pub lbar1: f64,
}

impl fmt::Debug for SplitSddeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplitSddeProblem")
            .field("base", &self.base)
            .field("lbar", &self.lbar)
            .field("lbar1", &self.lbar1)
            .finish_non_exhaustive()
    }
}

impl SplitSddeProblem {
    /// Builds the split problem; `base.drift` and `base.diffusion` are
    /// assembled as the sums of the parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dim_x: usize,
        dim_w: usize,
        drift_linear: Coefficient,
        drift_super: Coefficient,
        diff_linear: Coefficient,
        diff_super: Coefficient,
        delay: DelayFunction,
        initial: InitialPath,
        lbar: f64,
        lbar1: f64,
    ) -> Result<Self> {
        if !(lbar >= 0.0 && lbar1 >= 0.0) {
            return Err(SddeError::Domain(format!(
                "Lipschitz constants must be nonnegative, got ({lbar}, {lbar1})"
            )));
        }
        let drift = sum_coefficient(drift_linear.clone(), drift_super.clone(), dim_x);
        let diffusion = sum_coefficient(diff_linear.clone(), diff_super.clone(), dim_x * dim_w);
        let base = SddeProblem::new(dim_x, dim_w, drift, diffusion, delay, initial)?;
        Ok(Self { base, drift_linear, drift_super, diff_linear, diff_super, lbar, lbar1 })
    }
}

fn sum_coefficient(a: Coefficient, b: Coefficient, len: usize) -> Coefficient {
    Arc::new(move |x: &[f64], y: &[f64], out: &mut [f64]| {
        let mut stack = [0.0; 16];
        let mut heap = Vec::new();
        let tmp: &mut [f64] = if len <= stack.len() {
            &mut stack[..len]
        } else {
            heap.resize(len, 0.0);
            &mut heap
        };
        a(x, y, out);
        b(x, y, tmp);
        for (o, t) in out.iter_mut().zip(tmp.iter()) {
            *o += t;
        }
    })
}

/// Constants of the stability condition on the split coefficients:
///
/// ```text
/// 2<x, F1> + (1 + θ)|G1|²   ≤ −λ1|x|² + λ2|y|²
/// 2<x, F>  + (1 + 1/θ)|G|²  ≤ α1|x|² + α2|y|² − α3|x|^β + α4|y|^β
/// ```
///
/// θ is recorded but does not enter any computed rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub beta: f64,
    pub theta: f64,
    pub lbar: f64,
    pub lbar1: f64,
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("alpha4", self.alpha4),
            ("lbar", self.lbar),
            ("lbar1", self.lbar1),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SddeError::Domain(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.beta > 2.0) {
            return Err(SddeError::Domain(format!("beta must exceed 2, got {}", self.beta)));
        }
        if !(self.theta >= 0.0) {
            return Err(SddeError::Domain(format!("theta must be nonnegative, got {}", self.theta)));
        }
        Ok(())
    }

    /// λ₁ − α₁ − λ₂/4 − κ̄(λ₂ + α₂); positive iff the first rate condition holds.
    pub fn rate_margin(&self, kappa: usize) -> f64 {
        self.lambda1 - self.alpha1 - 0.25 * self.lambda2 - kappa as f64 * (self.lambda2 + self.alpha2)
    }

    /// Both rate conditions: λ₁ > α₁ + λ₂/4 + κ̄(λ₂+α₂) and α₃ > κ̄α₄.
    pub fn check_rate_conditions(&self, kappa: usize) -> Result<()> {
        self.validate()?;
        let margin = self.rate_margin(kappa);
        if !(margin > 0.0) {
            return Err(SddeError::Infeasible(format!(
                "lambda1 > alpha1 + lambda2/4 + kappa*(lambda2 + alpha2) violated: margin = {margin}"
            )));
        }
        if !(self.alpha3 > kappa as f64 * self.alpha4) {
            return Err(SddeError::Infeasible(format!(
                "alpha3 > kappa*alpha4 violated: {} <= {}",
                self.alpha3,
                kappa as f64 * self.alpha4
            )));
        }
        Ok(())
    }

    /// Decay-rate cap from the super-linear part, (1/τ)·log(α₃/(κ̄α₄)); +∞ when α₄ = 0.
    pub fn superlinear_rate_cap(&self, kappa: usize, tau: f64) -> f64 {
        let denom = kappa as f64 * self.alpha4;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            (self.alpha3 / denom).ln() / tau
        }
    }
}
