//! Step-by-step integration of the saturated loop in the baseband frame.
//!
//! Per sample of duration `dt`, in loop order:
//!
//! 1. read the retained field from `tau` ago and flip its sign (the carrier
//!    round-trip phase of -1 folded into the feedback);
//! 2. amplify: a phase-insensitive gain `G` with its ancilla noise, followed
//!    by the amplifier's squeezer `diag(e^{r_s}, e^{-r_s})`; saturation pins
//!    `G e^{r_s} sqrt(eta) = 1`, so `G = e^{-r_s}/sqrt(eta)`;
//! 3. out-couple: `q_out = sqrt(1-eta) q_b + sqrt(eta) q_0`, retained field
//!    `q_ret = -sqrt(eta) q_b + sqrt(1-eta) q_0` (unitary, and the retention
//!    sign places the loop resonances at the carrier comb).
//!
//! Folding the squeezer into the gain stage gives per-quadrature constants
//!
//! ```text
//! q_b = (1/sqrt(eta)) q_in + sqrt(1/eta - e^{2 r_s})            qG
//! p_b = (e^{-2 r_s}/sqrt(eta)) p_in - e^{-2 r_s} sqrt(1/eta - e^{2 r_s}) pG
//! ```
//!
//! whose discrete-time transfer functions match the continuous closed forms
//! exactly at baseband frequency offsets (the delay line is exact). The
//! squeeze headroom `1/eta - e^{2 r_s}` is evaluated in expm1 form so it
//! vanishes exactly at the maximum squeeze, keeping the simulated ancilla
//! route silent precisely when the closed forms say it is.
//!
//! Input noise per sample is the Cholesky-shaped quadruple
//! `(q0, p0, qG, pG) = L xi / sqrt(dt)` with `xi` i.i.d. standard normal and
//! `L L^T` the input covariance, i.e. white noise of spectral density equal
//! to that covariance (vacuum: 1/2 per quadrature).

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{QuadTimeSeries, SimError, SimPlan, OVERFLOW_GUARD};
use crate::gaussian::input_covariance;
use crate::model::{config_digest, ValidatedConfig};
use crate::transfer::squeeze_headroom;

/// Deterministic saturated-loop update; all randomness enters via the noise
/// quadruple handed to [`LoopStepper::step`].
pub(crate) struct LoopStepper {
    gq_in: f64,
    gq_noise: f64,
    gp_in: f64,
    gp_noise: f64,
    /// Out-coupler transmission sqrt(1-eta) toward the output port.
    t_out: f64,
    /// Out-coupler reflection sqrt(eta).
    r_out: f64,
    q_ret: Vec<f64>,
    p_ret: Vec<f64>,
    pos: usize,
}

impl LoopStepper {
    pub(crate) fn new(eta: f64, r_s: f64, n_delay: usize) -> Self {
        let sqrt_eta = eta.sqrt();
        let headroom = squeeze_headroom(eta, r_s).max(0.0);
        let e2 = (-2.0 * r_s).exp();
        Self {
            gq_in: 1.0 / sqrt_eta,
            gq_noise: headroom.sqrt(),
            gp_in: e2 / sqrt_eta,
            gp_noise: e2 * headroom.sqrt(),
            t_out: (1.0 - eta).max(0.0).sqrt(),
            r_out: sqrt_eta,
            q_ret: vec![0.0; n_delay],
            p_ret: vec![0.0; n_delay],
            pos: 0,
        }
    }

    /// Advances one sample; `noise = (q0, p0, qG, pG)` already scaled to
    /// per-sample units. Returns the output-port quadratures.
    #[inline]
    pub(crate) fn step(&mut self, noise: [f64; 4]) -> (f64, f64) {
        let q_in = -self.q_ret[self.pos];
        let p_in = -self.p_ret[self.pos];
        let q_b = self.gq_in * q_in + self.gq_noise * noise[2];
        let p_b = self.gp_in * p_in - self.gp_noise * noise[3];
        let q_out = self.t_out * q_b + self.r_out * noise[0];
        let p_out = self.t_out * p_b + self.r_out * noise[1];
        self.q_ret[self.pos] = -self.r_out * q_b + self.t_out * noise[0];
        self.p_ret[self.pos] = -self.r_out * p_b + self.t_out * noise[1];
        self.pos += 1;
        if self.pos == self.q_ret.len() {
            self.pos = 0;
        }
        (q_out, p_out)
    }
}

/// Streams Cholesky-shaped white quadrature noise, `(seed, stream)`-seeded.
pub(crate) struct NoiseSampler {
    l: [[f64; 4]; 4],
    scale: f64,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub(crate) fn new(l: &Matrix4<f64>, dt: f64, seed: u64, stream: u64) -> Self {
        let mut rows = [[0.0; 4]; 4];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate().take(i + 1) {
                *v = l[(i, j)];
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            l: rows,
            scale: 1.0 / dt.sqrt(),
            rng,
        }
    }

    #[inline]
    pub(crate) fn draw(&mut self) -> [f64; 4] {
        let x0: f64 = self.rng.sample(StandardNormal);
        let x1: f64 = self.rng.sample(StandardNormal);
        let x2: f64 = self.rng.sample(StandardNormal);
        let x3: f64 = self.rng.sample(StandardNormal);
        let l = &self.l;
        [
            self.scale * (l[0][0] * x0),
            self.scale * (l[1][0] * x0 + l[1][1] * x1),
            self.scale * (l[2][0] * x0 + l[2][1] * x1 + l[2][2] * x2),
            self.scale * (l[3][0] * x0 + l[3][1] * x1 + l[3][2] * x2 + l[3][3] * x3),
        ]
    }
}

/// Simulates the linearized fluctuation loop for one noise stream.
///
/// The trajectory is a deterministic function of `(plan.seed, stream)`:
/// distinct streams are statistically independent, identical pairs reproduce
/// bit-identical output regardless of how many trajectories run in parallel.
/// Records `plan.duration - plan.warmup` samples of both output quadratures.
pub fn simulate_fluctuations_stream(
    cfg: &ValidatedConfig,
    plan: &SimPlan,
    stream: u64,
) -> Result<QuadTimeSeries, SimError> {
    let n_delay = plan.delay_samples(cfg.tau)?;
    let v = input_covariance(&cfg.input);
    let l = v
        .cholesky_factor()
        .ok_or(SimError::CovarianceNotFactorizable)?;
    let mut sampler = NoiseSampler::new(&l, plan.dt, plan.seed, stream);
    let mut stepper = LoopStepper::new(cfg.eta, cfg.amplifier.squeeze(), n_delay);

    let recorded = plan.duration - plan.warmup;
    let mut q_out = Vec::with_capacity(recorded);
    let mut p_out = Vec::with_capacity(recorded);
    for step in 0..plan.duration {
        let (qo, po) = stepper.step(sampler.draw());
        let magnitude = qo.abs().max(po.abs());
        if magnitude > OVERFLOW_GUARD || magnitude.is_nan() {
            return Err(SimError::UnstableLoop { step, magnitude });
        }
        if step >= plan.warmup {
            q_out.push(qo);
            p_out.push(po);
        }
    }
    Ok(QuadTimeSeries {
        q_out,
        p_out,
        dt: plan.dt,
        config_digest: config_digest(cfg.config()),
    })
}

/// [`simulate_fluctuations_stream`] on the default stream 0.
pub fn simulate_fluctuations(
    cfg: &ValidatedConfig,
    plan: &SimPlan,
) -> Result<QuadTimeSeries, SimError> {
    simulate_fluctuations_stream(cfg, plan, 0)
}

/// Simulates `trajectories` streams (0..n) and returns the pooled Welch
/// estimates of both output quadratures.
///
/// Trajectories are processed in fixed chunks: each chunk simulates in
/// parallel, then folds into the running average in stream order, so the
/// result is independent of worker count and memory stays bounded by the
/// chunk size rather than the trajectory count.
pub fn averaged_output_psd(
    cfg: &ValidatedConfig,
    plan: &SimPlan,
    trajectories: usize,
    segment_len: usize,
    overlap_fraction: f64,
    window: super::Window,
) -> Result<(super::PsdEstimate, super::PsdEstimate), SimError> {
    use rayon::prelude::*;
    const CHUNK: usize = 8;
    if trajectories == 0 {
        return Err(SimError::MismatchedEstimates);
    }
    let mut acc: Option<(super::PsdEstimate, super::PsdEstimate)> = None;
    for start in (0..trajectories).step_by(CHUNK) {
        let end = (start + CHUNK).min(trajectories);
        let parts: Vec<(super::PsdEstimate, super::PsdEstimate)> = (start..end)
            .into_par_iter()
            .map(|stream| {
                let series = simulate_fluctuations_stream(cfg, plan, stream as u64)?;
                super::estimate_psd_pair(&series, segment_len, overlap_fraction, window)
            })
            .collect::<Result<_, _>>()?;
        for (part_q, part_p) in parts {
            acc = Some(match acc.take() {
                None => (part_q, part_p),
                Some((q, p)) => (
                    super::average_psd(&[q, part_q])?,
                    super::average_psd(&[p, part_p])?,
                ),
            });
        }
    }
    Ok(acc.expect("trajectories >= 1"))
}
