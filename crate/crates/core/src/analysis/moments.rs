use crate::analysis::least_squares_slope;
use crate::error::{Result, SddeError};
use crate::solver::EnsembleMoments;

/// Slope of log E|y(t)|² against t over recorded times in `[lo, hi]`.
pub fn fit_decay_rate(moments: &EnsembleMoments, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(SddeError::Window(format!("invalid window [{lo}, {hi}]")));
    }
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &m) in moments.times.iter().zip(&moments.mean_sq) {
        if t < lo || t > hi {
            continue;
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(SddeError::Window(format!("mean square {m} at t={t} is not positive")));
        }
        ts.push(t);
        ys.push(m.ln());
    }
    if ts.len() < 2 {
        return Err(SddeError::Window(format!(
            "window [{lo}, {hi}] holds {} recorded points, need at least 2",
            ts.len()
        )));
    }
    least_squares_slope(&ts, &ys).ok_or_else(|| SddeError::Window("degenerate window".into()))
}

/// Left Riemann sum of E|y(t)|² over the recorded times t ≥ 0.
pub fn h_infinity_partial_sum(moments: &EnsembleMoments) -> f64 {
    let pts: Vec<(f64, f64)> = moments
        .times
        .iter()
        .zip(&moments.mean_sq)
        .filter(|(t, _)| **t >= 0.0)
        .map(|(t, m)| (*t, *m))
        .collect();
    pts.windows(2).map(|w| w[0].1 * (w[1].0 - w[0].0)).sum()
}
