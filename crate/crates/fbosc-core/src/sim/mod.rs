//! Independent Monte Carlo oracle for the closed-form results.
//!
//! Two separate simulations, mirroring the model's own separation:
//!
//! - classical startup: the noiseless round-trip magnitude map
//!   `alpha -> sqrt(eta) * |A(alpha)|` iterated from a tiny seed, verifying
//!   the zero-state instability and the saturated fixed point;
//! - linearized fluctuations: the saturated loop (gain pinned by gain = loss)
//!   driven by Gaussian white quadrature noise, integrated step by step
//!   through an explicit delay line.
//!
//! The fluctuation simulation works in a baseband (co-rotating) frame: the
//! carrier accumulates exactly `-1` per round trip, and that sign is folded
//! into the delay-line read, so the marginal oscillator pole sits at offset
//! frequency 0 and closed-form comparisons evaluate at `Omega0 + omega`.
//! With an `N = tau/dt` sample ring buffer the discrete loop's transfer
//! functions equal the continuous ones exactly at every baseband frequency
//! (the delay is represented without approximation), so the only systematic
//! differences against closed forms are statistical.
//!
//! Vacuum inputs are white Gaussian with variance `(1/2)/dt` per quadrature
//! per sample; squeezed/EPR inputs shape i.i.d. normals with the Cholesky
//! factor of the input covariance matrix. All randomness derives from
//! (seed, stream, draw index) so independent trajectories are reproducible
//! and parallelizable with bit-identical per-trajectory output.

mod delay_loop;
mod linewidth;
mod lorentz;
mod psd;

pub use delay_loop::{
    averaged_output_psd, simulate_fluctuations, simulate_fluctuations_stream,
};
pub use linewidth::{estimate_linewidth, LinewidthRun};
pub use lorentz::{fit_lorentzian, LorentzFit};
pub use psd::{
    average_psd, estimate_psd, estimate_psd_complex, estimate_psd_pair, PsdEstimate, Quadrature,
    Window,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

use crate::model::AmplifierModel;
use crate::saturation::{SaturationError, SaturatingResponse, TanhResponse};

/// Magic header of the binary time-series dump format.
pub const BINARY_MAGIC: &[u8; 8] = b"FBOSCTS1";
const BINARY_VERSION: u32 = 1;

/// Relative successive-change threshold declaring the startup map converged.
const STARTUP_RTOL: f64 = 1e-12;
/// Magnitude beyond which the fluctuation loop is declared unstable.
const OVERFLOW_GUARD: f64 = 1e12;

/// What a simulation run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    ClassicalStartup,
    LinearFluctuations,
}

/// Discretization and run-length plan for a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    /// Step size, seconds; `tau/dt` must be an integer >= 8.
    pub dt: f64,
    /// Total steps (round trips for startup runs).
    pub duration: usize,
    /// Base RNG seed; trajectories use (seed, stream) pairs.
    pub seed: u64,
    /// Steps discarded before recording; must be >= 10 * (tau/dt).
    pub warmup: usize,
    pub mode: SimMode,
}

impl SimPlan {
    /// Validates the plan against a loop delay and returns `N = tau/dt`.
    pub fn delay_samples(&self, tau: f64) -> Result<usize, SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0 && tau.is_finite() && tau > 0.0) {
            return Err(SimError::NonIntegerDelay { tau, dt: self.dt });
        }
        let ratio = tau / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(SimError::NonIntegerDelay { tau, dt: self.dt });
        }
        let n = n as usize;
        if n < 8 {
            return Err(SimError::DelayTooCoarse { n });
        }
        if self.warmup < 10 * n {
            return Err(SimError::WarmupTooShort {
                warmup: self.warmup,
                required: 10 * n,
            });
        }
        if self.duration <= self.warmup {
            return Err(SimError::DurationTooShort {
                duration: self.duration,
                warmup: self.warmup,
            });
        }
        Ok(n)
    }
}

/// Recorded output quadratures of a fluctuation run, vacuum units.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTimeSeries {
    pub q_out: Vec<f64>,
    pub p_out: Vec<f64>,
    /// Sample period, seconds.
    pub dt: f64,
    /// SHA-256 digest of the generating configuration.
    pub config_digest: String,
}

/// Result of a classical startup run.
#[derive(Debug, Clone, PartialEq)]
pub struct StartupRun {
    /// Amplitude after each round trip, `trajectory[0]` = seed amplitude.
    pub trajectory: Vec<f64>,
    /// First index at which the relative successive change dropped below
    /// 1e-12 (the map has converged to its fixed point).
    pub converged_at: usize,
    pub final_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Saturation(#[from] SaturationError),
    #[error("NonIntegerDelay: tau = {tau} is not an integer multiple of dt = {dt}")]
    NonIntegerDelay { tau: f64, dt: f64 },
    #[error("DelayTooCoarse: tau/dt = {n} delay samples, need >= 8")]
    DelayTooCoarse { n: usize },
    #[error("WarmupTooShort: warmup {warmup} steps, need >= {required} (10 round trips)")]
    WarmupTooShort { warmup: usize, required: usize },
    #[error("DurationTooShort: duration {duration} steps does not exceed warmup {warmup}")]
    DurationTooShort { duration: usize, warmup: usize },
    #[error("NotConverged: startup map still moving after {steps} round trips (last amplitude {last})")]
    NotConverged { steps: usize, last: f64 },
    #[error("UnstableLoop: |quadrature| = {magnitude:.3e} exceeded the overflow guard at step {step}; loop gain is mis-set")]
    UnstableLoop { step: usize, magnitude: f64 },
    #[error("CovarianceNotFactorizable: input covariance has no Cholesky factor")]
    CovarianceNotFactorizable,
    #[error("TooShort: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("InvalidOverlap: overlap fraction must lie in [0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error("MismatchedEstimates: PSD estimates have different grids and cannot be averaged")]
    MismatchedEstimates,
    #[error("BandTooNarrow: fit band contains {bins} bins, need >= 10")]
    BandTooNarrow { bins: usize },
    #[error("FlatSpectrum: no discernible peak in the fit band (max/median = {ratio:.2})")]
    FlatSpectrum { ratio: f64 },
    #[error("NonPositivePsd: PSD must be strictly positive in the fit band")]
    NonPositivePsd,
    #[error("FitDiverged: {0}")]
    FitDiverged(String),
    #[error("ZeroCarrier: alpha_sq must be > 0 for phase reconstruction, got {0}")]
    ZeroCarrier(f64),
}

/// Iterates the classical round-trip magnitude map from a small seed
/// amplitude until successive changes fall below 1e-12 relative.
///
/// `seed_amplitude` fixes the initial amplitude explicitly; `None` draws
/// `|N(0,1)| * 1e-6 * a_inf` from `plan.seed`. `plan.duration` caps the
/// number of round trips; `plan.dt` and `plan.warmup` are not used (the map
/// steps in whole round trips).
pub fn simulate_classical_startup(
    model: &AmplifierModel,
    eta: f64,
    tau: f64,
    plan: &SimPlan,
    seed_amplitude: Option<f64>,
) -> Result<StartupRun, SimError> {
    let _ = tau; // the magnitude map depends only on per-trip quantities
    let response: TanhResponse = match model {
        AmplifierModel::SaturatingTanh { g0, a_inf } => TanhResponse {
            g0: *g0,
            a_inf: *a_inf,
        },
        other => {
            return Err(SaturationError::WrongVariant {
                op: "simulate_classical_startup",
                got: match other {
                    AmplifierModel::LinearInsensitive { .. } => "linear_insensitive",
                    _ => "phase_sensitive",
                },
            }
            .into())
        }
    };
    let alpha0 = seed_amplitude.unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(u64::MAX); // keep startup draws off the trajectory streams
        let draw: f64 = rng.sample(StandardNormal);
        draw.abs() * 1e-6 * response.saturated_level()
    });

    let sqrt_eta = eta.sqrt();
    let mut trajectory = Vec::with_capacity(plan.duration.min(1 << 16) + 1);
    trajectory.push(alpha0);
    let mut alpha = alpha0;
    for step in 1..=plan.duration {
        let next = sqrt_eta * response.respond(alpha).abs();
        trajectory.push(next);
        let change = (next - alpha).abs();
        alpha = next;
        if change <= STARTUP_RTOL * alpha.abs().max(f64::MIN_POSITIVE) || (alpha == 0.0) {
            return Ok(StartupRun {
                trajectory,
                converged_at: step,
                final_amplitude: alpha,
            });
        }
    }
    Err(SimError::NotConverged {
        steps: plan.duration,
        last: alpha,
    })
}

/// Writes a time series in the binary dump format (`FBOSCTS1` magic,
/// version, lengths, then `q_out` and `p_out` as little-endian f64).
pub fn write_binary<W: Write>(series: &QuadTimeSeries, mut w: W) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(series.q_out.len() as u64).to_le_bytes())?;
    w.write_all(&series.dt.to_le_bytes())?;
    let digest = series.config_digest.as_bytes();
    w.write_all(&(digest.len() as u32).to_le_bytes())?;
    w.write_all(digest)?;
    for v in &series.q_out {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &series.p_out {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a time series written by [`write_binary`].
pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<QuadTimeSeries> {
    use std::io::{Error, ErrorKind};
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::new(ErrorKind::InvalidData, "bad magic header"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != BINARY_VERSION {
        return Err(Error::new(ErrorKind::InvalidData, "unsupported version"));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let n = u64::from_le_bytes(u64buf) as usize;
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf)?;
    let dt = f64::from_le_bytes(f64buf);
    r.read_exact(&mut u32buf)?;
    let digest_len = u32::from_le_bytes(u32buf) as usize;
    if digest_len > 1 << 10 {
        return Err(Error::new(ErrorKind::InvalidData, "digest too long"));
    }
    let mut digest = vec![0u8; digest_len];
    r.read_exact(&mut digest)?;
    let config_digest = String::from_utf8(digest)
        .map_err(|_| Error::new(ErrorKind::InvalidData, "digest not UTF-8"))?;
    let mut read_vec = |n: usize| -> std::io::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut f64buf)?;
            out.push(f64::from_le_bytes(f64buf));
        }
        Ok(out)
    };
    let q_out = read_vec(n)?;
    let p_out = read_vec(n)?;
    Ok(QuadTimeSeries {
        q_out,
        p_out,
        dt,
        config_digest,
    })
}
