//! Reproducible Wiener increments.
//!
//! Each path owns an independent ChaCha8 stream selected by `(seed, path_id)`:
//! the 64-bit seed fills the first eight key bytes (little-endian, remaining
//! key bytes zero) and `path_id` is the stream number. Uniforms are
//! `(u >> 11 + 0.5)·2⁻⁵³` from successive `next_u64` draws, mapped to standard
//! normals by Acklam's rational inverse-CDF (relative error < 1.2e-9).
//! Increments are drawn step-major: entry `k·m + j` is component `j` of step `k`.
//!
//! Changing any of the above changes every golden value downstream.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Result, SddeError};
use crate::model::near_integer;

const DUMP_MAGIC: &[u8; 8] = b"SDDEBG01";

/// Acklam's approximation of the standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Standard normal stream for one `(seed, path_id)` pair.
pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, path_id: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(path_id);
        Self { inner }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    step: f64,
    horizon: f64,
    dim_w: usize,
    n_steps: usize,
    increments: Vec<f64>,
    seed: u64,
    path_id: u64,
}

fn step_count(step: f64, horizon: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) || !(horizon.is_finite() && horizon > 0.0) {
        return Err(SddeError::Config(format!(
            "grid needs positive step and horizon, got step = {step}, horizon = {horizon}"
        )));
    }
    match near_integer(horizon / step) {
        Some(n) if n >= 1 => Ok(n as usize),
        _ => Err(SddeError::Config(format!(
            "horizon {horizon} is not an integer multiple of step {step}"
        ))),
    }
}

/// Draws `round(horizon/finest_step)` Gaussian increments of variance
/// `finest_step` per component.
pub fn generate(seed: u64, path_id: u64, finest_step: f64, horizon: f64, dim_w: usize) -> Result<BrownianGrid> {
    if dim_w == 0 {
        return Err(SddeError::Config("Brownian dimension must be positive".into()));
    }
    let n_steps = step_count(finest_step, horizon)?;
    let mut rng = PathRng::new(seed, path_id);
    let scale = finest_step.sqrt();
    let increments = (0..n_steps * dim_w).map(|_| scale * rng.standard_normal()).collect();
    Ok(BrownianGrid { step: finest_step, horizon, dim_w, n_steps, increments, seed, path_id })
}

/// Sums `v` by recursive halving. Nested power-of-two blocks therefore add
/// in the same order whether summed at once or level by level.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

impl BrownianGrid {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// ΔB_k, one entry per Brownian component.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim_w..(k + 1) * self.dim_w]
    }

    /// Same Brownian path on a grid `factor` times coarser: coarse increment
    /// `j` is the (pairwise) sum of fine increments `j·factor .. (j+1)·factor`.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianGrid> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(SddeError::Config(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let n = self.n_steps / factor;
        let m = self.dim_w;
        let mut increments = Vec::with_capacity(n * m);
        let mut column = vec![0.0; factor];
        for j in 0..n {
            for c in 0..m {
                for (i, slot) in column.iter_mut().enumerate() {
                    *slot = self.increments[(j * factor + i) * m + c];
                }
                increments.push(pairwise_sum(&column));
            }
        }
        Ok(BrownianGrid {
            step: self.step * factor as f64,
            horizon: self.horizon,
            dim_w: m,
            n_steps: n,
            increments,
            seed: self.seed,
            path_id: self.path_id,
        })
    }

    /// Coarsens to `target_step`, which must be an integer multiple of this grid's step.
    pub fn coarsen_to(&self, target_step: f64) -> Result<BrownianGrid> {
        match near_integer(target_step / self.step) {
            Some(f) if f >= 1 => self.coarsen(f as usize),
            _ => Err(SddeError::Config(format!(
                "step {target_step} is not a multiple of the grid step {}",
                self.step
            ))),
        }
    }

    /// Binary dump: magic `SDDEBG01`, then seed (u64), path_id (u64),
    /// finest_step (f64), horizon (f64), dim_w (u64), then the increments as
    /// f64. All little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.path_id.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&(self.dim_w as u64).to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<BrownianGrid> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(SddeError::Io("not a Brownian grid dump".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let path_id = u64::from_le_bytes(next(&mut r)?);
        let step = f64::from_le_bytes(next(&mut r)?);
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let dim_w = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_steps = step_count(step, horizon)?;
        if dim_w == 0 {
            return Err(SddeError::Io("dump has zero Brownian dimension".into()));
        }
        let increments = (0..n_steps * dim_w)
            .map(|_| next(&mut r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        Ok(BrownianGrid { step, horizon, dim_w, n_steps, increments, seed, path_id })
    }
}
