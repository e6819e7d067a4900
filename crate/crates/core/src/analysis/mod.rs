//! Convergence-order estimation, stability-rate solvers and moment-decay fits.

mod convergence;
mod moments;
mod stability;

pub use convergence::{fit_order, strong_error, ConvergenceReport};
pub use moments::{fit_decay_rate, h_infinity_partial_sum};
pub use stability::{
    decay_rate_bound, delta_star_target, solve_delta_star, solve_delta_star_for_target, solve_gamma_star,
    solve_gamma_star_delta, stability_table, DeltaStar, RateSolution, StabilityRow, StabilityTable,
};

/// Ordinary least-squares slope of `ys` against `xs` (centered form).
///
/// `None` with fewer than two points or when all `xs` coincide.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}
