//! Truncated Euler–Maruyama stepping on the grid t_k = kΔ, Δ = τ/M:
//!
//! ```text
//! y_{k+1} = y_k + f_Δ(y_k, y_{k−δ_k})Δ + g_Δ(y_k, y_{k−δ_k})ΔB_k,   k ≥ 0
//! y_k     = ξ(t_k),                                                k = −M..0
//! ```
//!
//! Only grid values are produced; the step interpolant Z₁ coincides with them
//! at every t_k. Full mode truncates both arguments of f and g; partial mode
//! evaluates F₁, G₁ at the raw arguments and F, G at the truncated ones.

use std::borrow::Cow;
use std::io::Write;

use rayon::prelude::*;

use crate::brownian::{generate, BrownianGrid};
use crate::error::{Result, SddeError};
use crate::model::{near_integer, SddeProblem, SplitSddeProblem};
use crate::truncation::{truncate_into, truncation_radius, TruncationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Partial,
}

impl std::str::FromStr for Mode {
    type Err = SddeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "partial" => Ok(Mode::Partial),
            other => Err(SddeError::Config(format!("unknown mode {other:?} (expected full|partial)"))),
        }
    }
}

/// A problem together with the truncation mode used to step it.
#[derive(Debug, Clone, Copy)]
pub enum Scheme<'a> {
    Full(&'a SddeProblem),
    Partial(&'a SplitSddeProblem),
}

impl<'a> Scheme<'a> {
    /// Partial mode needs the split coefficients; asking for it without them
    /// is a configuration error.
    pub fn select(problem: &'a SddeProblem, split: Option<&'a SplitSddeProblem>, mode: Mode) -> Result<Self> {
        match (mode, split) {
            (Mode::Full, _) => Ok(Scheme::Full(problem)),
            (Mode::Partial, Some(s)) => Ok(Scheme::Partial(s)),
            (Mode::Partial, None) => Err(SddeError::Config(
                "partial truncation requires a problem split into F1 + F and G1 + G".into(),
            )),
        }
    }

    pub fn problem(&self) -> &'a SddeProblem {
        match self {
            Scheme::Full(p) => p,
            Scheme::Partial(s) => &s.base,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Scheme::Full(_) => Mode::Full,
            Scheme::Partial(_) => Mode::Partial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub step: f64,
    pub horizon: f64,
    pub record_stride: usize,
}

/// Grid sizes derived from a validated [`SolverConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    /// M = τ/Δ.
    pub delay_steps: usize,
    /// N = T/Δ.
    pub steps: usize,
}

impl SolverConfig {
    pub fn new(step: f64, horizon: f64) -> Self {
        Self { step, horizon, record_stride: 1 }
    }

    pub fn with_stride(mut self, record_stride: usize) -> Self {
        self.record_stride = record_stride;
        self
    }

    /// Checks that τ/Δ and T/Δ are positive integers and Δ ∈ (0, 1].
    pub fn grid(&self, problem: &SddeProblem) -> Result<GridSize> {
        let delay_steps = problem.delay.grid_intervals(self.step)?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SddeError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        let steps = match near_integer(self.horizon / self.step) {
            Some(n) if n >= 1 => n as usize,
            _ => {
                return Err(SddeError::Config(format!(
                    "horizon {} is not an integer multiple of step {}",
                    self.horizon, self.step
                )))
            }
        };
        if self.record_stride == 0 {
            return Err(SddeError::Config("record stride must be positive".into()));
        }
        Ok(GridSize { delay_steps, steps })
    }
}

/// Ring buffer holding y_j for the last M + 1 indices.
#[derive(Debug, Clone)]
pub struct DelayWindow {
    capacity: usize,
    dim: usize,
    data: Vec<f64>,
    newest: i64,
}

impl DelayWindow {
    /// Window holding y_{−M}..y_0 = ξ(t_{−M})..ξ(0).
    pub fn from_initial(problem: &SddeProblem, step: f64, delay_steps: usize) -> Self {
        let capacity = delay_steps + 1;
        let dim = problem.dim_x;
        let mut window = Self { capacity, dim, data: vec![0.0; capacity * dim], newest: -(delay_steps as i64) - 1 };
        let mut buf = vec![0.0; dim];
        for j in -(delay_steps as i64)..=0 {
            problem.initial.eval_into(j as f64 * step, &mut buf);
            window.push(&buf);
        }
        window
    }

    fn slot(&self, j: i64) -> usize {
        j.rem_euclid(self.capacity as i64) as usize
    }

    /// Index of the most recent state.
    pub fn newest(&self) -> i64 {
        self.newest
    }

    /// y_j; `j` must lie in `[newest − M, newest]`.
    pub fn get(&self, j: i64) -> &[f64] {
        debug_assert!(j <= self.newest && j > self.newest - self.capacity as i64);
        let s = self.slot(j) * self.dim;
        &self.data[s..s + self.dim]
    }

    /// Appends y_{newest+1}, evicting the oldest entry.
    pub fn push(&mut self, value: &[f64]) {
        self.newest += 1;
        let s = self.slot(self.newest) * self.dim;
        self.data[s..s + self.dim].copy_from_slice(value);
    }
}

/// Reusable per-path stepping state (radius and scratch buffers).
pub struct Stepper<'a> {
    scheme: Scheme<'a>,
    step: f64,
    delay_steps: usize,
    radius: f64,
    px: Vec<f64>,
    py: Vec<f64>,
    drift: Vec<f64>,
    drift_part: Vec<f64>,
    diff: Vec<f64>,
    diff_part: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(scheme: Scheme<'a>, policy: &TruncationPolicy, step: f64) -> Result<Self> {
        let problem = scheme.problem();
        let delay_steps = problem.delay.grid_intervals(step)?;
        let radius = truncation_radius(policy, step)?;
        let d = problem.dim_x;
        let dg = d * problem.dim_w;
        Ok(Self {
            scheme,
            step,
            delay_steps,
            radius,
            px: vec![0.0; d],
            py: vec![0.0; d],
            drift: vec![0.0; d],
            drift_part: vec![0.0; d],
            diff: vec![0.0; dg],
            diff_part: vec![0.0; dg],
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// Writes y_{k+1} into `out`. `window.newest()` must equal `k`.
    ///
    /// Returns `Err(k)` if the new state is not finite.
    pub fn advance(&mut self, k: usize, window: &DelayWindow, dw: &[f64], out: &mut [f64]) -> std::result::Result<(), usize> {
        let problem = self.scheme.problem();
        let delta_k = problem.delay.index_on_grid(self.step, self.delay_steps, k);
        let x = window.get(k as i64);
        let y = window.get(k as i64 - delta_k as i64);
        truncate_into(x, self.radius, &mut self.px);
        truncate_into(y, self.radius, &mut self.py);
        match self.scheme {
            Scheme::Full(p) => {
                (p.drift)(&self.px, &self.py, &mut self.drift);
                (p.diffusion)(&self.px, &self.py, &mut self.diff);
            }
            Scheme::Partial(s) => {
                (s.drift_linear)(x, y, &mut self.drift);
                (s.drift_super)(&self.px, &self.py, &mut self.drift_part);
                for (a, b) in self.drift.iter_mut().zip(&self.drift_part) {
                    *a += b;
                }
                (s.diff_linear)(x, y, &mut self.diff);
                (s.diff_super)(&self.px, &self.py, &mut self.diff_part);
                for (a, b) in self.diff.iter_mut().zip(&self.diff_part) {
                    *a += b;
                }
            }
        }
        let m = problem.dim_w;
        let mut finite = true;
        for i in 0..problem.dim_x {
            let noise: f64 = self.diff[i * m..(i + 1) * m].iter().zip(dw).map(|(g, w)| g * w).sum();
            let v = x[i] + self.drift[i] * self.step + noise;
            finite &= v.is_finite();
            out[i] = v;
        }
        if finite {
            Ok(())
        } else {
            Err(k)
        }
    }
}

/// One step of the scheme: y_k + f_Δ(y_k, y_{k−δ_k})Δ + g_Δ(y_k, y_{k−δ_k})·dW.
pub fn step_once(
    scheme: Scheme<'_>,
    policy: &TruncationPolicy,
    config: &SolverConfig,
    k: usize,
    history: &DelayWindow,
    dw: &[f64],
) -> Result<Vec<f64>> {
    let problem = scheme.problem();
    if dw.len() != problem.dim_w {
        return Err(SddeError::Config(format!(
            "Brownian increment has {} components, expected {}",
            dw.len(),
            problem.dim_w
        )));
    }
    if history.newest() != k as i64 {
        return Err(SddeError::Config(format!(
            "history ends at index {} but step {k} was requested",
            history.newest()
        )));
    }
    let mut stepper = Stepper::new(scheme, policy, config.step)?;
    let mut out = vec![0.0; problem.dim_x];
    stepper
        .advance(k, history, dw, &mut out)
        .map_err(|step| SddeError::Overflow { step })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    Completed,
    /// y_{step+1} was not finite; the trajectory stops at y_step.
    Overflow { step: usize },
}

/// Recorded grid values y_k for k ≡ 0 (mod stride) in −M..=N, plus y_N.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub indices: Vec<i64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub status: PathStatus,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_value(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    pub fn is_completed(&self) -> bool {
        self.status == PathStatus::Completed
    }

    /// CSV with header `t,y_1,...,y_d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim).map(|i| format!("y_{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            write!(w, "{}", self.times[i])?;
            for v in self.value(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Runs the scheme along one Brownian path.
///
/// The grid may be finer than `config.step`; it is coarsened to the solver
/// step so different step sizes see the same path.
pub fn simulate(
    scheme: Scheme<'_>,
    policy: &TruncationPolicy,
    config: &SolverConfig,
    grid: &BrownianGrid,
) -> Result<Trajectory> {
    let problem = scheme.problem();
    let size = config.grid(problem)?;
    if grid.dim_w() != problem.dim_w {
        return Err(SddeError::Config(format!(
            "Brownian grid has dimension {}, problem needs {}",
            grid.dim_w(),
            problem.dim_w
        )));
    }
    let noise: Cow<'_, BrownianGrid> = if grid.step() == config.step {
        Cow::Borrowed(grid)
    } else {
        Cow::Owned(grid.coarsen_to(config.step)?)
    };
    if noise.n_steps() < size.steps {
        return Err(SddeError::Config(format!(
            "Brownian grid covers {} steps of size {}, need {}",
            noise.n_steps(),
            config.step,
            size.steps
        )));
    }

    let mut stepper = Stepper::new(scheme, policy, config.step)?;
    let mut window = DelayWindow::from_initial(problem, config.step, size.delay_steps);
    let d = problem.dim_x;
    let stride = config.record_stride.min(i64::MAX as usize) as i64;
    let n = size.steps as i64;
    let mut traj = Trajectory {
        dim: d,
        indices: Vec::new(),
        times: Vec::new(),
        values: Vec::new(),
        status: PathStatus::Completed,
    };
    let record = |traj: &mut Trajectory, k: i64, v: &[f64]| {
        traj.indices.push(k);
        traj.times.push(k as f64 * config.step);
        traj.values.extend_from_slice(v);
    };
    for j in -(size.delay_steps as i64)..=0 {
        if j % stride == 0 || (j == 0 && n == 0) {
            record(&mut traj, j, window.get(j));
        }
    }
    let mut next = vec![0.0; d];
    for k in 0..size.steps {
        match stepper.advance(k, &window, noise.increment(k), &mut next) {
            Ok(()) => {
                window.push(&next);
                let kn = k as i64 + 1;
                if kn % stride == 0 || kn == n {
                    record(&mut traj, kn, &next);
                }
            }
            Err(step) => {
                traj.status = PathStatus::Overflow { step };
                if traj.indices.last() != Some(&(k as i64)) {
                    record(&mut traj, k as i64, window.get(k as i64));
                }
                break;
            }
        }
    }
    Ok(traj)
}

/// Per-time ensemble statistics of |y_k|² over completed paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub times: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub stderr: Vec<f64>,
    pub count: usize,
    /// Path ids whose run overflowed (excluded from the moments).
    pub overflowed: Vec<u64>,
}

impl EnsembleMoments {
    /// Restriction to times ≤ `t_max` (with a 1e-9 relative slack).
    pub fn truncate_to(&self, t_max: f64) -> EnsembleMoments {
        let keep = self.times.iter().take_while(|&&t| t <= t_max * (1.0 + 1e-9) + 1e-12).count();
        EnsembleMoments {
            times: self.times[..keep].to_vec(),
            mean_sq: self.mean_sq[..keep].to_vec(),
            stderr: self.stderr[..keep].to_vec(),
            count: self.count,
            overflowed: self.overflowed.clone(),
        }
    }

    /// CSV with header `t,mean_sq,stderr,n`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mean_sq,stderr,n")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{},{}", self.times[i], self.mean_sq[i], self.stderr[i], self.count)?;
        }
        Ok(())
    }
}

/// Paths per parallel batch; moments are folded batch by batch in path order.
const ENSEMBLE_BATCH: usize = 64;

/// Simulates paths `0..n_paths` (Brownian stream `(seed, path_id)`) and
/// aggregates |y_k|² at recorded times t_k ≥ 0.
///
/// Paths run on the ambient rayon pool; accumulation is sequential in path-id
/// order, so the result is bit-identical for any worker count.
pub fn run_ensemble(
    scheme: Scheme<'_>,
    policy: &TruncationPolicy,
    config: &SolverConfig,
    n_paths: usize,
    seed: u64,
) -> Result<EnsembleMoments> {
    if n_paths == 0 {
        return Err(SddeError::Config("ensemble needs at least one path".into()));
    }
    let problem = scheme.problem();
    config.grid(problem)?;
    // Fail fast on policy problems before spawning work.
    truncation_radius(policy, config.step)?;

    let run_path = |path_id: u64| -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let grid = generate(seed, path_id, config.step, config.horizon, problem.dim_w)?;
        let traj = simulate(scheme, policy, config, &grid)?;
        if !traj.is_completed() {
            return Ok(None);
        }
        let mut times = Vec::new();
        let mut sq = Vec::new();
        for i in 0..traj.len() {
            if traj.indices[i] >= 0 {
                times.push(traj.times[i]);
                sq.push(traj.value(i).iter().map(|v| v * v).sum());
            }
        }
        Ok(Some((times, sq)))
    };

    let mut times: Vec<f64> = Vec::new();
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let mut overflowed = Vec::new();
    let ids: Vec<u64> = (0..n_paths as u64).collect();
    for batch in ids.chunks(ENSEMBLE_BATCH) {
        let results: Vec<Result<Option<(Vec<f64>, Vec<f64>)>>> = batch.par_iter().map(|&id| run_path(id)).collect();
        for (&id, result) in batch.iter().zip(results) {
            match result? {
                None => overflowed.push(id),
                Some((t, sq)) => {
                    if count == 0 {
                        times = t;
                        mean = vec![0.0; sq.len()];
                        m2 = vec![0.0; sq.len()];
                    }
                    count += 1;
                    let c = count as f64;
                    for ((mu, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(&sq) {
                        let delta = x - *mu;
                        *mu += delta / c;
                        *s += delta * (x - *mu);
                    }
                }
            }
        }
    }
    let stderr = m2
        .iter()
        .map(|s| if count > 1 { (s / (count as f64 - 1.0) / count as f64).sqrt() } else { 0.0 })
        .collect();
    Ok(EnsembleMoments { times, mean_sq: mean, stderr, count, overflowed })
}
