//! Closed-form loop transfer functions from the noise ports to the output.
//!
//! With the Fourier kernel `e^{+i*omega*t}`, one round trip of delay `tau`
//! contributes `z = e^{i*Omega*tau}` and the saturated loop (gain pinned to
//! loss) has output transfer functions
//!
//! ```text
//! h0 = (sqrt(eta) + z/sqrt(eta)) / (1 + z)      (out-coupler port)
//! hg = (1/sqrt(eta) - sqrt(eta)) / (1 + z)      (amplifier ancilla port)
//! ```
//!
//! with poles at `Omega*tau = (2k+1)*pi`, the loop resonances. Output
//! commutator preservation forces `|h0|^2 - |hg|^2 = 1` identically;
//! [`commutator_residual`] exposes the deviation for verification.
//!
//! A phase-sensitive amplifier (phase-insensitive gain followed by an ideal
//! squeezer `r_s`, saturating at `G e^{r_s} sqrt(eta) = 1`) splits the
//! transfer by quadrature: the amplified quadrature keeps the insensitive
//! forms while the squeezed one has its resonance denominator displaced to
//! `e^{2 r_s} + z`, which detunes the p-channel pole off the carrier.
//!
//! Numerical care: the ancilla numerators carry the factor
//! `sqrt(1/eta - e^{2 r_s})`, which must vanish exactly when `r_s` sits at
//! the sustainable maximum `r_max = -ln(eta)/2`. It is evaluated as
//! `e^{2 r_s} * expm1(-ln(eta) - 2 r_s)` so that a caller-computed
//! `r_s = -0.5 * ln(eta)` yields an argument of exactly zero instead of an
//! ulp-level residue that would survive the square root.

use num_complex::Complex64;
use thiserror::Error;

/// Minimum distance of a transfer denominator from zero; closer evaluations
/// error rather than return huge finite values that would poison downstream
/// fits.
pub const POLE_GUARD: f64 = 1e-9;

/// Warn threshold for the leading-order near-resonance forms.
const NEAR_RESONANCE_VALIDITY: f64 = 0.1;

/// Phase-insensitive transfer functions at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsensitiveTransfer {
    /// Frequency this was evaluated at, rad/s (absolute or carrier offset,
    /// matching the constructor used).
    pub omega: f64,
    /// Out-coupler (in-coupled vacuum) port to output.
    pub h0: Complex64,
    /// Amplifier ancilla port to output.
    pub hg: Complex64,
}

/// Per-quadrature transfer functions of the phase-sensitive loop at one
/// frequency. `q` is the amplified (anti-squeezed) quadrature, `p` the
/// de-amplified (squeezed) one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTransfer {
    /// Frequency this was evaluated at, rad/s (absolute or carrier offset,
    /// matching the constructor used).
    pub omega: f64,
    /// Amplifier squeeze parameter used in the evaluation.
    pub r_s: f64,
    pub h0q: Complex64,
    pub hgq: Complex64,
    pub h0p: Complex64,
    pub hgp: Complex64,
}

impl QuadTransfer {
    /// Embeds a phase-insensitive transfer as the `r_s = 0` quadrature
    /// transfer (both quadratures identical).
    pub fn from_insensitive(t: &InsensitiveTransfer) -> Self {
        Self {
            omega: t.omega,
            r_s: 0.0,
            h0q: t.h0,
            hgq: t.hg,
            h0p: t.h0,
            hgp: t.hg,
        }
    }
}

/// Leading-order near-carrier transfer, with the validity of the expansion
/// made explicit rather than silently degraded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearResonanceTransfer {
    pub transfer: QuadTransfer,
    /// False when `|omega*tau| >= 0.1`, where the leading-order forms are no
    /// longer trustworthy; the values are still returned.
    pub within_validity: bool,
}

/// Result of splitting a phase-sensitive amplifier map
/// `b = G*a + g*a^dag + noise` into phase-insensitive gain followed by an
/// ideal squeezer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSensitiveDecomposition {
    /// Phase-insensitive gain of the cascade, `sqrt(G^2 - g^2)`.
    pub g_cal: f64,
    /// Squeeze parameter of the trailing squeezer, `atanh(g/G)`.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransferError {
    #[error("EtaOutOfRange: eta must lie in (0, 1], got {0}")]
    EtaOutOfRange(f64),
    #[error("NonPositiveTau: tau must be positive and finite, got {0}")]
    NonPositiveTau(f64),
    #[error("PoleFrequency: {channel} denominator has magnitude {clearance:.3e} < pole guard at omega = {omega} rad/s")]
    PoleFrequency {
        channel: &'static str,
        clearance: f64,
        omega: f64,
    },
    #[error("NegativeSqueeze: r_s must be >= 0, got {0}")]
    NegativeSqueeze(f64),
    #[error("SqueezeExceedsRmax: r_s = {r_s} exceeds r_max = {r_max}")]
    SqueezeExceedsRmax { r_s: f64, r_max: f64 },
    #[error("NonAmplifier: need G > g >= 0 for a bosonic decomposition, got G = {big_g}, g = {small_g}")]
    NonAmplifier { big_g: f64, small_g: f64 },
}

fn check_eta_tau(eta: f64, tau: f64) -> Result<(), TransferError> {
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(TransferError::EtaOutOfRange(eta));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(TransferError::NonPositiveTau(tau));
    }
    Ok(())
}

fn check_squeeze(eta: f64, r_s: f64) -> Result<(), TransferError> {
    if !(r_s.is_finite() && r_s >= 0.0) {
        return Err(TransferError::NegativeSqueeze(r_s));
    }
    let r_max = -0.5 * eta.ln();
    if r_s > r_max {
        return Err(TransferError::SqueezeExceedsRmax { r_s, r_max });
    }
    Ok(())
}

/// `1/eta - e^{2 r_s}`, the squeeze headroom below `r_max`, evaluated so it
/// is exactly zero (not an ulp residue) when `r_s = -0.5 * ln(eta)`.
pub(crate) fn squeeze_headroom(eta: f64, r_s: f64) -> f64 {
    (2.0 * r_s).exp() * (-eta.ln() - 2.0 * r_s).exp_m1()
}

/// Loop phase factor `z = e^{i*Omega*tau}` at absolute frequency.
fn loop_phase_absolute(omega: f64, tau: f64) -> Complex64 {
    Complex64::cis(omega * tau)
}

/// Loop phase factor at carrier offset `omega`: the carrier contributes
/// exactly -1 per round trip, so `z = -e^{i*omega*tau}` without ever forming
/// the huge absolute phase.
fn loop_phase_offset(omega: f64, tau: f64) -> Complex64 {
    -Complex64::cis(omega * tau)
}

fn eval_insensitive(
    eta: f64,
    z: Complex64,
    omega: f64,
) -> Result<InsensitiveTransfer, TransferError> {
    if eta == 1.0 {
        // Lossless out-coupler: h0 = (1 + z)/(1 + z) is removable, the loop
        // passes the in-coupled field straight through at every frequency.
        return Ok(InsensitiveTransfer {
            omega,
            h0: Complex64::new(1.0, 0.0),
            hg: Complex64::new(0.0, 0.0),
        });
    }
    let denom = Complex64::new(1.0, 0.0) + z;
    let clearance = denom.norm();
    if clearance < POLE_GUARD {
        return Err(TransferError::PoleFrequency {
            channel: "loop resonance",
            clearance,
            omega,
        });
    }
    let sqrt_eta = eta.sqrt();
    Ok(InsensitiveTransfer {
        omega,
        h0: (sqrt_eta + z / sqrt_eta) / denom,
        hg: Complex64::new(1.0 / sqrt_eta - sqrt_eta, 0.0) / denom,
    })
}

/// Transfer functions of the phase-insensitive loop at absolute frequency
/// `omega` (rad/s).
pub fn transfer_insensitive(
    eta: f64,
    tau: f64,
    omega: f64,
) -> Result<InsensitiveTransfer, TransferError> {
    check_eta_tau(eta, tau)?;
    eval_insensitive(eta, loop_phase_absolute(omega, tau), omega)
}

/// Transfer functions of the phase-insensitive loop at offset `omega` from
/// the carrier. Exact (not an expansion): the carrier's `-1` loop phase is
/// folded in symbolically, which also keeps precision for large carrier
/// indices.
pub fn transfer_insensitive_offset(
    eta: f64,
    tau: f64,
    omega: f64,
) -> Result<InsensitiveTransfer, TransferError> {
    check_eta_tau(eta, tau)?;
    eval_insensitive(eta, loop_phase_offset(omega, tau), omega)
}

/// Deviation from the output commutator identity, `|h0|^2 - |hg|^2 - 1`.
/// Vanishes identically for a commutator-preserving loop.
pub fn commutator_residual(eta: f64, tau: f64, omega: f64) -> Result<f64, TransferError> {
    let t = transfer_insensitive(eta, tau, omega)?;
    Ok(t.h0.norm_sqr() - t.hg.norm_sqr() - 1.0)
}

fn eval_quad(
    eta: f64,
    r_s: f64,
    z: Complex64,
    omega: f64,
) -> Result<QuadTransfer, TransferError> {
    if eta == 1.0 {
        // r_max = 0 forces r_s = 0 here; the lossless loop is the identity.
        return Ok(QuadTransfer {
            omega,
            r_s,
            h0q: Complex64::new(1.0, 0.0),
            hgq: Complex64::new(0.0, 0.0),
            h0p: Complex64::new(1.0, 0.0),
            hgp: Complex64::new(0.0, 0.0),
        });
    }
    let q_denom = Complex64::new(1.0, 0.0) + z;
    let q_clearance = q_denom.norm();
    if q_clearance < POLE_GUARD {
        return Err(TransferError::PoleFrequency {
            channel: "q-channel loop resonance",
            clearance: q_clearance,
            omega,
        });
    }
    let e2rs = (2.0 * r_s).exp();
    let p_denom = Complex64::new(e2rs, 0.0) + z;
    let p_clearance = p_denom.norm();
    if p_clearance < POLE_GUARD {
        return Err(TransferError::PoleFrequency {
            channel: "p-channel displaced resonance",
            clearance: p_clearance,
            omega,
        });
    }
    let sqrt_eta = eta.sqrt();
    // Common ancilla numerator sqrt(1/eta - e^{2 r_s}) * sqrt(1 - eta);
    // exactly zero at r_s = r_max, where the squeezer absorbs all the
    // ancilla noise the gain admits.
    let ancilla = (squeeze_headroom(eta, r_s) * (1.0 - eta)).sqrt();
    Ok(QuadTransfer {
        omega,
        r_s,
        h0q: (sqrt_eta + z / sqrt_eta) / q_denom,
        hgq: Complex64::new(ancilla, 0.0) / q_denom,
        h0p: (z / sqrt_eta + e2rs * sqrt_eta) / p_denom,
        hgp: Complex64::new(ancilla, 0.0) / p_denom,
    })
}

/// Quadrature transfer functions of the phase-sensitive loop at absolute
/// frequency `omega` (rad/s), with the operating gain eliminated through the
/// saturation condition `G e^{r_s} sqrt(eta) = 1`.
pub fn transfer_phase_sensitive(
    eta: f64,
    tau: f64,
    r_s: f64,
    omega: f64,
) -> Result<QuadTransfer, TransferError> {
    check_eta_tau(eta, tau)?;
    check_squeeze(eta, r_s)?;
    eval_quad(eta, r_s, loop_phase_absolute(omega, tau), omega)
}

/// Quadrature transfer functions at offset `omega` from the carrier; exact,
/// see [`transfer_insensitive_offset`].
pub fn transfer_phase_sensitive_offset(
    eta: f64,
    tau: f64,
    r_s: f64,
    omega: f64,
) -> Result<QuadTransfer, TransferError> {
    check_eta_tau(eta, tau)?;
    check_squeeze(eta, r_s)?;
    eval_quad(eta, r_s, loop_phase_offset(omega, tau), omega)
}

/// Leading-order quadrature transfer functions at carrier offset `omega`,
/// valid for `|omega*tau| << 1`:
///
/// ```text
/// h0q ~  (1/sqrt(eta) - sqrt(eta)) / (i*omega*tau)
/// hgq ~ -sqrt(1/eta - e^{2 r_s}) * sqrt(1 - eta) / (i*omega*tau)
/// h0p ~ (-sqrt(eta)*(1/eta - e^{2 r_s}) - i*omega*tau/sqrt(eta)) / (e^{2 r_s} - 1 - i*omega*tau)
/// hgp ~  sqrt(1/eta - e^{2 r_s}) * sqrt(1 - eta) / (e^{2 r_s} - 1 - i*omega*tau)
/// ```
///
/// `omega = 0` sits on the loop resonance itself and yields non-finite
/// values; offsets with `|omega*tau| >= 0.1` are flagged via
/// `within_validity` but still evaluated.
pub fn transfer_near_resonance(
    eta: f64,
    tau: f64,
    r_s: f64,
    omega: f64,
) -> Result<NearResonanceTransfer, TransferError> {
    check_eta_tau(eta, tau)?;
    check_squeeze(eta, r_s)?;
    let wt = omega * tau;
    let i_wt = Complex64::new(0.0, wt);
    let sqrt_eta = eta.sqrt();
    let headroom = squeeze_headroom(eta, r_s);
    let ancilla = (headroom * (1.0 - eta)).sqrt();
    let e2rs = (2.0 * r_s).exp();
    let p_denom = Complex64::new(e2rs - 1.0, -wt);
    let transfer = QuadTransfer {
        omega,
        r_s,
        h0q: Complex64::new(1.0 / sqrt_eta - sqrt_eta, 0.0) / i_wt,
        hgq: -Complex64::new(ancilla, 0.0) / i_wt,
        h0p: Complex64::new(-sqrt_eta * headroom, -wt / sqrt_eta) / p_denom,
        hgp: Complex64::new(ancilla, 0.0) / p_denom,
    };
    Ok(NearResonanceTransfer {
        transfer,
        within_validity: wt.abs() < NEAR_RESONANCE_VALIDITY,
    })
}

/// Splits a phase-sensitive bosonic map `b = G*a + g*a^dag + noise` into a
/// phase-insensitive amplifier of gain `Gcal = sqrt(G^2 - g^2)` followed by
/// an ideal squeezer of parameter `r = atanh(g/G)`; requires `G > g >= 0`
/// (else the map is not an amplifier and has no such decomposition).
pub fn decompose_phase_sensitive(
    big_g: f64,
    small_g: f64,
) -> Result<PhaseSensitiveDecomposition, TransferError> {
    if !(big_g.is_finite() && small_g.is_finite() && small_g >= 0.0 && big_g > small_g) {
        return Err(TransferError::NonAmplifier { big_g, small_g });
    }
    Ok(PhaseSensitiveDecomposition {
        g_cal: (big_g * big_g - small_g * small_g).sqrt(),
        r: (small_g / big_g).atanh(),
    })
}
