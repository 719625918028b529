//! Closed-form output spectra, frequency noise, and uncertainty bounds.
//!
//! The output quadratures are linear in the input quadratures,
//!
//! ```text
//! q_out = h0q * q0 + hgq * qG
//! p_out = h0p * p0 - hgp * pG
//! ```
//!
//! so every symmetrized output spectrum is a quadratic form of the transfer
//! functions over the input covariance matrix (which doubles as the input
//! spectral matrix for the frequency-independent states used here):
//!
//! ```text
//! sqq = |h0q|^2 V[q0,q0] + |hgq|^2 V[qG,qG] + 2 Re(h0q hgq*) V[q0,qG]
//! spp = |h0p|^2 V[p0,p0] + |hgp|^2 V[pG,pG] - 2 Re(h0p hgp*) V[p0,pG]
//! ```
//!
//! That general composition is one computational path. The closed forms the
//! model predicts (vacuum Lorentzian-shaped noise, exact EPR-fed spectra,
//! phase-sensitive vacuum spectra, near-carrier scalings) are implemented
//! independently from their printed expressions, so tests can require the
//! two paths to agree to near machine precision rather than trusting either.
//!
//! Frequency noise: near the carrier the output phase is
//! `phi ~ p_out / (sqrt(2) |alpha|)`, so the frequency-noise spectrum is
//! `S_phidot = (omega^2 / (2 alpha_sq)) * spp`, flat (Schawlow-Townes
//! plateau) where `spp ~ 1/omega^2`. A flat `S_phidot` is white frequency
//! noise, giving a Lorentzian field spectrum of FWHM `S_phidot` in rad/s,
//! i.e. `S_phidot / (2 pi)` in Hz.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::gaussian::{input_covariance, InputCovariance, IDX_P0, IDX_PG, IDX_Q0, IDX_QG};
use crate::model::{FrequencyGrid, ValidatedConfig};
use crate::transfer::{
    self, squeeze_headroom, InsensitiveTransfer, QuadTransfer, TransferError, POLE_GUARD,
};

/// Offset used when evaluating the near-carrier plateau of the
/// frequency-noise spectrum: `omega * tau = PLATEAU_OMEGA_TAU`.
pub const PLATEAU_OMEGA_TAU: f64 = 1e-4;

/// Symmetrized output quadrature spectra at one frequency, vacuum units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpectra {
    /// Evaluation frequency, rad/s (absolute or carrier offset, matching the
    /// operation that produced it).
    pub omega: f64,
    /// Amplitude-quadrature spectrum, >= 0.
    pub sqq: f64,
    /// Phase-quadrature spectrum, >= 0.
    pub spp: f64,
    /// Symmetrized q-p cross spectrum when a full covariance composition was
    /// performed; `None` for scalar closed forms.
    pub sqp_cross: Option<Complex64>,
    /// `sqq * spp`, the uncertainty product.
    pub product: f64,
    pub bounds: SpectralBounds,
}

/// Lower bounds on the uncertainty product `sqq * spp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    /// Heisenberg floor, 1/4.
    pub heisenberg: f64,
    /// State-independent loop bound `|h0q hgq| * |h0p hgp|`; reduces to
    /// `|h0|^2 (|h0|^2 - 1)` for a phase-insensitive loop.
    pub insensitive: f64,
    /// State-dependent bound
    /// `4 |h0q hgq| |h0p hgp| (sqrt(Vq0 VqG) - |Vq0qG|)(sqrt(Vp0 VpG) - |Vp0pG|)`;
    /// `None` when no input covariance was supplied.
    pub general: Option<f64>,
}

/// One point of the frequency-noise spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyNoisePoint {
    /// Carrier offset, rad/s.
    pub omega: f64,
    /// Double-sided frequency-noise spectrum `(omega^2 / (2 alpha_sq)) spp`,
    /// rad^2/s.
    pub s_phidot: f64,
}

/// Schawlow-Townes plateau and the implied Lorentzian linewidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchawlowTownes {
    /// Flat frequency-noise level, rad^2/s (double-sided).
    pub s_phidot: f64,
    /// Full width at half maximum of the Lorentzian field spectrum,
    /// `s_phidot / (2 pi)`, in Hz.
    pub linewidth_fwhm: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("ZeroCarrier: alpha_sq must be > 0 to define phase fluctuations, got {0}")]
    ZeroCarrier(f64),
    #[error("frequency grid is empty")]
    EmptyGrid,
}

fn pole_error(channel: &'static str, clearance: f64, omega: f64) -> SpectraError {
    SpectraError::Transfer(TransferError::PoleFrequency {
        channel,
        clearance,
        omega,
    })
}

/// `(1/sqrt(eta) - sqrt(eta))^2 = (1 - eta)^2 / eta`, the loop noise
/// strength appearing in every near-carrier closed form.
fn loop_noise_strength(eta: f64) -> f64 {
    let k = 1.0 / eta.sqrt() - eta.sqrt();
    k * k
}

fn clamp_nonneg(x: f64) -> f64 {
    x.max(0.0)
}

/// Bounds record for a transfer evaluated with (optionally) an input
/// covariance. The `general` factors are clamped at zero: physicality makes
/// them nonnegative analytically, but rounding may leave -1e-17 residues.
pub fn uncertainty_bounds(tf: &QuadTransfer, v: Option<&InputCovariance>) -> SpectralBounds {
    let q_pair = (tf.h0q * tf.hgq.conj()).norm();
    let p_pair = (tf.h0p * tf.hgp.conj()).norm();
    let insensitive = q_pair * p_pair;
    let general = v.map(|v| {
        let q_factor = clamp_nonneg(
            (v.get(IDX_Q0, IDX_Q0) * v.get(IDX_QG, IDX_QG)).sqrt() - v.get(IDX_Q0, IDX_QG).abs(),
        );
        let p_factor = clamp_nonneg(
            (v.get(IDX_P0, IDX_P0) * v.get(IDX_PG, IDX_PG)).sqrt() - v.get(IDX_P0, IDX_PG).abs(),
        );
        4.0 * q_pair * p_pair * q_factor * p_factor
    });
    SpectralBounds {
        heisenberg: 0.25,
        insensitive,
        general,
    }
}

fn finalize(
    omega: f64,
    sqq: f64,
    spp: f64,
    sqp_cross: Option<Complex64>,
    bounds: SpectralBounds,
) -> QuadratureSpectra {
    // Composition can round to -1e-18 when squeezing drives a quadrature to
    // near-perfect cancellation; the spectra are nonnegative analytically.
    let sqq = clamp_nonneg(sqq);
    let spp = clamp_nonneg(spp);
    QuadratureSpectra {
        omega,
        sqq,
        spp,
        sqp_cross,
        product: sqq * spp,
        bounds,
    }
}

/// General-composition path: output spectra of an arbitrary Gaussian input
/// state through the quadrature transfer functions. The input covariance
/// must be physical (see [`crate::gaussian::covariance_validity`]); spectra
/// of unphysical matrices are numerically well-defined but meaningless.
pub fn output_spectra_general(tf: &QuadTransfer, v: &InputCovariance) -> QuadratureSpectra {
    let sqq = tf.h0q.norm_sqr() * v.get(IDX_Q0, IDX_Q0)
        + tf.hgq.norm_sqr() * v.get(IDX_QG, IDX_QG)
        + 2.0 * (tf.h0q * tf.hgq.conj()).re * v.get(IDX_Q0, IDX_QG);
    let spp = tf.h0p.norm_sqr() * v.get(IDX_P0, IDX_P0)
        + tf.hgp.norm_sqr() * v.get(IDX_PG, IDX_PG)
        - 2.0 * (tf.h0p * tf.hgp.conj()).re * v.get(IDX_P0, IDX_PG);
    // Cross spectrum S_qp with coefficient vectors a = (h0q, 0, hgq, 0),
    // b = (0, h0p, 0, -hgp): a V b^H. Zero for the block-diagonal states
    // built by `input_covariance`, nonzero only for hand-built matrices with
    // q-p correlations.
    let sqp = tf.h0q * tf.h0p.conj() * v.get(IDX_Q0, IDX_P0)
        - tf.h0q * tf.hgp.conj() * v.get(IDX_Q0, IDX_PG)
        + tf.hgq * tf.h0p.conj() * v.get(IDX_QG, IDX_P0)
        - tf.hgq * tf.hgp.conj() * v.get(IDX_QG, IDX_PG);
    let bounds = uncertainty_bounds(tf, Some(v));
    finalize(tf.omega, sqq, spp, Some(sqp), bounds)
}

/// [`output_spectra_general`] for a phase-insensitive transfer.
pub fn output_spectra_insensitive(
    tf: &InsensitiveTransfer,
    v: &InputCovariance,
) -> QuadratureSpectra {
    output_spectra_general(&QuadTransfer::from_insensitive(tf), v)
}

/// Closed-form vacuum-input spectra at absolute frequency:
/// `sqq = spp = (sqrt(eta) - 1/sqrt(eta))^2 / (4 cos^2(Omega tau / 2)) + 1/2`.
pub fn output_spectra_vacuum_closed_form(
    eta: f64,
    tau: f64,
    omega: f64,
) -> Result<QuadratureSpectra, SpectraError> {
    let tf = transfer::transfer_insensitive(eta, tau, omega)?;
    let c = (0.5 * omega * tau).cos();
    vacuum_closed_form_from(eta, omega, 4.0 * c * c, &tf)
}

/// Closed-form vacuum-input spectra at carrier offset `omega`; exact, with
/// `cos^2(Omega tau / 2)` reduced to `sin^2(omega tau / 2)` through the
/// carrier condition.
pub fn output_spectra_vacuum_closed_form_offset(
    eta: f64,
    tau: f64,
    omega: f64,
) -> Result<QuadratureSpectra, SpectraError> {
    let tf = transfer::transfer_insensitive_offset(eta, tau, omega)?;
    let s = (0.5 * omega * tau).sin();
    vacuum_closed_form_from(eta, omega, 4.0 * s * s, &tf)
}

fn vacuum_closed_form_from(
    eta: f64,
    omega: f64,
    denom_sq: f64,
    tf: &InsensitiveTransfer,
) -> Result<QuadratureSpectra, SpectraError> {
    let s = if eta == 1.0 {
        0.5
    } else {
        loop_noise_strength(eta) / denom_sq + 0.5
    };
    let quad = QuadTransfer::from_insensitive(tf);
    let bounds = uncertainty_bounds(&quad, Some(&input_covariance(&Default::default())));
    Ok(finalize(omega, s, s, None, bounds))
}

/// Near-carrier spectra for combined single-mode squeezing and EPR
/// correlations at the inputs:
///
/// ```text
/// sqq ~ (1/2) e^{-rE} (e^{ 2 r0} + e^{ 2 rG}) |h0|^2
/// spp ~ (1/2) e^{-rE} (e^{-2 r0} + e^{-2 rG}) |h0|^2
/// ```
///
/// The quadrature weights use the near-carrier identification
/// `|hg| ~ |h0|` (relative error `O((omega tau)^2)`), while `|h0|^2` itself
/// is kept exact: `(1-eta)^2/eta / (4 sin^2(omega tau / 2)) + 1`.
pub fn output_spectra_sqz_epr_near_carrier(
    eta: f64,
    tau: f64,
    omega: f64,
    params: &crate::model::InputStateParams,
) -> Result<QuadratureSpectra, SpectraError> {
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(TransferError::EtaOutOfRange(eta).into());
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(TransferError::NonPositiveTau(tau).into());
    }
    let clearance = 2.0 * (0.5 * omega * tau).sin().abs();
    if clearance < POLE_GUARD {
        return Err(pole_error("loop resonance", clearance, omega));
    }
    let h0_sq = loop_noise_strength(eta) / (clearance * clearance) + 1.0;
    let e = (-params.r_e).exp();
    let sqq = 0.5 * e * ((2.0 * params.r0).exp() + (2.0 * params.r_g).exp()) * h0_sq;
    let spp = 0.5 * e * ((-2.0 * params.r0).exp() + (-2.0 * params.r_g).exp()) * h0_sq;
    let tf = transfer::transfer_insensitive_offset(eta, tau, omega)?;
    let bounds = uncertainty_bounds(
        &QuadTransfer::from_insensitive(&tf),
        Some(&input_covariance(params)),
    );
    Ok(finalize(omega, sqq, spp, None, bounds))
}

/// Exact closed-form spectra for a pure EPR input (`r0 = rG = 0`,
/// two-mode squeeze `rE`) at absolute frequency:
///
/// ```text
/// sqq = spp = e^{rE}/(4 eta)
///           + (e^{-rE}/4) [ (1/eta - 2) tan^2(Omega tau / 2)
///                           + eta sec^2(Omega tau / 2) ]
/// ```
///
/// At `rE = 0` this equals the vacuum closed form identically; its minimum
/// over `Omega` sits at the loop anti-resonances `Omega tau = 2 pi n`, and
/// minimizing over `rE` as well reaches the Heisenberg floor at
/// `rE = ln(eta)`.
pub fn output_spectra_epr_exact(
    eta: f64,
    tau: f64,
    omega: f64,
    r_e: f64,
) -> Result<QuadratureSpectra, SpectraError> {
    let tf = transfer::transfer_insensitive(eta, tau, omega)?;
    let half = 0.5 * omega * tau;
    let (sin, cos) = half.sin_cos();
    let clearance = 2.0 * cos.abs();
    if clearance < POLE_GUARD {
        return Err(pole_error("loop resonance", clearance, omega));
    }
    let tan_sq = (sin / cos).powi(2);
    let sec_sq = 1.0 / (cos * cos);
    let s = r_e.exp() / (4.0 * eta)
        + 0.25 * (-r_e).exp() * ((1.0 / eta - 2.0) * tan_sq + eta * sec_sq);
    let params = crate::model::InputStateParams {
        r0: 0.0,
        r_g: 0.0,
        r_e,
    };
    let bounds = uncertainty_bounds(
        &QuadTransfer::from_insensitive(&tf),
        Some(&input_covariance(&params)),
    );
    Ok(finalize(omega, s, s, None, bounds))
}

/// General-composition spectra of the phase-sensitive loop at absolute
/// frequency, for an arbitrary physical input covariance.
pub fn output_spectra_phase_sensitive(
    eta: f64,
    tau: f64,
    r_s: f64,
    omega: f64,
    v: &InputCovariance,
) -> Result<QuadratureSpectra, SpectraError> {
    let tf = transfer::transfer_phase_sensitive(eta, tau, r_s, omega)?;
    Ok(output_spectra_general(&tf, v))
}

/// Closed-form vacuum-input spectra of the phase-sensitive loop:
///
/// ```text
/// sqq = |h0q|^2 / 2 + (1 - eta e^{2 r_s})(1 - eta) / (2 eta |1 + z|^2)
/// spp = (|h0p|^2 + |hgp|^2) / 2
/// ```
///
/// The q-channel ancilla term is evaluated in product form; its printed
/// `(1 - eta e^{2 r_s})/(1 - eta) * |hg|^2` form is 0/0 at `eta = 1`, where
/// the product form correctly vanishes.
pub fn output_spectra_phase_sensitive_vacuum(
    eta: f64,
    tau: f64,
    r_s: f64,
    omega: f64,
) -> Result<QuadratureSpectra, SpectraError> {
    let tf = transfer::transfer_phase_sensitive(eta, tau, r_s, omega)?;
    let z = Complex64::cis(omega * tau);
    let one_plus_z_sq = (Complex64::new(1.0, 0.0) + z).norm_sqr();
    let sqq = if eta == 1.0 {
        0.5
    } else {
        0.5 * tf.h0q.norm_sqr() + 0.5 * squeeze_headroom(eta, r_s) * (1.0 - eta) / one_plus_z_sq
    };
    let spp = 0.5 * (tf.h0p.norm_sqr() + tf.hgp.norm_sqr());
    let bounds = uncertainty_bounds(&tf, Some(&input_covariance(&Default::default())));
    Ok(finalize(omega, sqq, spp, None, bounds))
}

/// Leading-order near-carrier spectra of the phase-sensitive loop with
/// vacuum inputs, in terms of `A = 1 - eta e^{2 r_s}` and `B = 1 - eta`:
///
/// ```text
/// sqq ~ (B^2 + A B) / (2 eta tau^2 omega^2)
/// spp ~ (A^2 + tau^2 omega^2 + A B) / (2 eta [(e^{2 r_s} - 1)^2 + tau^2 omega^2])
/// ```
///
/// At `r_s = 0` the leading `1/omega^2` coefficient of both quadratures is
/// `(1 - eta)^2 / (eta tau^2 omega^2)`.
pub fn output_spectra_phase_sensitive_near_resonance(
    eta: f64,
    tau: f64,
    r_s: f64,
    omega: f64,
) -> Result<QuadratureSpectra, SpectraError> {
    let near = transfer::transfer_near_resonance(eta, tau, r_s, omega)?;
    let wt_sq = (omega * tau).powi(2);
    let a = eta * squeeze_headroom(eta, r_s); // 1 - eta e^{2 r_s}
    let b = 1.0 - eta;
    let sqq = (b * b + a * b) / (2.0 * eta * wt_sq);
    let gain_sq = ((2.0 * r_s).exp() - 1.0).powi(2);
    let spp = (a * a + wt_sq + a * b) / (2.0 * eta * (gain_sq + wt_sq));
    let bounds = uncertainty_bounds(&near.transfer, Some(&input_covariance(&Default::default())));
    Ok(finalize(omega, sqq, spp, None, bounds))
}

/// Near-carrier spectra of the loop at maximum sustainable squeeze
/// (`r_s = r_max`), where the output is a pure rescaling of the in-coupled
/// input spectra `s0_qq`, `s0_pp` (vacuum: 1/2 each):
///
/// ```text
/// sqq = ((sqrt(eta) - 1/sqrt(eta))^2 / (omega^2 tau^2)) * s0_qq
/// spp = ((omega^2 tau^2) / (sqrt(eta) - 1/sqrt(eta))^2) * s0_pp
/// ```
///
/// The uncertainty product `s0_qq * s0_pp` is carried to the output
/// unchanged.
pub fn output_spectra_pure_phase_sensitive_near_carrier(
    eta: f64,
    tau: f64,
    omega: f64,
    s0_qq: f64,
    s0_pp: f64,
) -> Result<QuadratureSpectra, SpectraError> {
    if !(eta.is_finite() && eta > 0.0 && eta < 1.0) {
        return Err(TransferError::EtaOutOfRange(eta).into());
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(TransferError::NonPositiveTau(tau).into());
    }
    let wt_sq = (omega * tau).powi(2);
    if wt_sq == 0.0 {
        return Err(pole_error("loop resonance", 0.0, omega));
    }
    let scale = loop_noise_strength(eta) / wt_sq;
    let r_max = -0.5 * eta.ln();
    let near = transfer::transfer_near_resonance(eta, tau, r_max, omega)?;
    let bounds = uncertainty_bounds(&near.transfer, Some(&input_covariance(&Default::default())));
    Ok(finalize(omega, scale * s0_qq, s0_pp / scale, None, bounds))
}

/// Frequency-noise spectrum point from a phase-quadrature spectrum at
/// carrier offset `omega`: `S_phidot = (omega^2 / (2 alpha_sq)) * spp`.
pub fn frequency_noise_spectrum(
    spp: f64,
    omega: f64,
    alpha_sq: f64,
) -> Result<FrequencyNoisePoint, SpectraError> {
    if !(alpha_sq.is_finite() && alpha_sq > 0.0) {
        return Err(SpectraError::ZeroCarrier(alpha_sq));
    }
    Ok(FrequencyNoisePoint {
        omega,
        s_phidot: omega * omega / (2.0 * alpha_sq) * spp,
    })
}

/// Schawlow-Townes plateau in its `(1 - eta)^2` form, with the thermal
/// occupation factor:
///
/// ```text
/// s_phidot = ((1 - eta)^2 / (2 tau^2 alpha_sq)) * (1 + 2 n_th)
/// ```
///
/// and the implied Lorentzian FWHM `s_phidot / (2 pi)` in Hz.
pub fn schawlow_townes(
    eta: f64,
    tau: f64,
    alpha_sq: f64,
    n_th: f64,
) -> Result<SchawlowTownes, SpectraError> {
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(TransferError::EtaOutOfRange(eta).into());
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(TransferError::NonPositiveTau(tau).into());
    }
    if !(alpha_sq.is_finite() && alpha_sq > 0.0) {
        return Err(SpectraError::ZeroCarrier(alpha_sq));
    }
    let s_phidot = (1.0 - eta).powi(2) / (2.0 * tau * tau * alpha_sq) * (1.0 + 2.0 * n_th);
    Ok(SchawlowTownes {
        s_phidot,
        linewidth_fwhm: s_phidot / std::f64::consts::TAU,
    })
}

/// Schawlow-Townes plateau in its `(ln eta)^2` form (the decay-rate
/// parameterization `kappa = -ln(eta)/tau`):
///
/// ```text
/// s_phidot = ((ln eta)^2 / (2 tau^2 alpha_sq)) * (1 + 2 n_th)
/// ```
///
/// Agrees with [`schawlow_townes`] to relative `O(1 - eta)` as `eta -> 1`.
pub fn schawlow_townes_log_form(
    eta: f64,
    tau: f64,
    alpha_sq: f64,
    n_th: f64,
) -> Result<SchawlowTownes, SpectraError> {
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(TransferError::EtaOutOfRange(eta).into());
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(TransferError::NonPositiveTau(tau).into());
    }
    if !(alpha_sq.is_finite() && alpha_sq > 0.0) {
        return Err(SpectraError::ZeroCarrier(alpha_sq));
    }
    let s_phidot = eta.ln().powi(2) / (2.0 * tau * tau * alpha_sq) * (1.0 + 2.0 * n_th);
    Ok(SchawlowTownes {
        s_phidot,
        linewidth_fwhm: s_phidot / std::f64::consts::TAU,
    })
}

/// Evaluates the general-composition spectra of a validated configuration
/// over a frequency grid (parallel, output ordered as the grid). Grid values
/// are taken as absolute frequencies or carrier offsets per the grid's flag.
pub fn spectra_for_config(
    cfg: &ValidatedConfig,
    grid: &FrequencyGrid,
) -> Result<Vec<QuadratureSpectra>, SpectraError> {
    if grid.values().is_empty() {
        return Err(SpectraError::EmptyGrid);
    }
    let v = input_covariance(&cfg.input);
    let (eta, tau) = (cfg.eta, cfg.tau);
    let r_s = cfg.amplifier.squeeze();
    let absolute = grid.is_absolute();
    grid.values()
        .par_iter()
        .map(|&omega| {
            let tf = if absolute {
                transfer::transfer_phase_sensitive(eta, tau, r_s, omega)?
            } else {
                transfer::transfer_phase_sensitive_offset(eta, tau, r_s, omega)?
            };
            Ok(output_spectra_general(&tf, &v))
        })
        .collect()
}
