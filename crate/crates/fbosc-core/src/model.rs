//! Configuration and shared domain types for the feedback-oscillator model.
//!
//! A feedback oscillator is an amplifier embedded in a positive-feedback loop
//! of round-trip delay `tau`, closed by an out-coupling beam splitter of power
//! reflectivity `eta`. Steady oscillation sits on a carrier `omega0 =
//! (2n + 1) * pi / tau` where the loop phase is `exp(i*omega0*tau) = -1`;
//! all spectra are analyzed either at absolute frequencies or at offsets from
//! that carrier.
//!
//! Conventions fixed here and shared by every module:
//! - Fourier kernel `e^{+i*omega*t}`, so a delay by `tau` multiplies a
//!   frequency-domain amplitude by `e^{+i*omega*tau}`.
//! - Spectra are symmetrized and double-sided, in vacuum units where the
//!   vacuum contributes 1/2 per quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Human-readable statement of the spectral conventions, embedded in CSV
/// headers so downstream consumers can detect convention mismatches.
pub const SPECTRAL_CONVENTION: &str = "double-sided symmetrized spectra, vacuum = 0.5 per quadrature, e^{+i*omega*t} Fourier kernel, angular frequencies in rad/s";

/// Amplifier placed inside the feedback loop.
///
/// Serialized form is externally tagged, e.g.
/// `{"saturating_tanh": {"g0": 4.0, "a_inf": 1.0}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AmplifierModel {
    /// Saturating nonlinearity `A(x) = a_inf * tanh(g0 * x / a_inf)`:
    /// odd, strictly increasing, small-signal slope `g0`, asymptote
    /// `+/- a_inf`.
    SaturatingTanh { g0: f64, a_inf: f64 },
    /// Linearized phase-insensitive gain. In a saturated loop the operating
    /// gain is pinned to `1/sqrt(eta)` by gain-loss balance; the configured
    /// value is range-checked (`g >= 1`) but not otherwise used by the
    /// linear-response machinery.
    LinearInsensitive { g: f64 },
    /// Phase-insensitive gain `g` followed by an ideal single-mode squeezer
    /// of parameter `r_s` at angle `phi_s`. Only `phi_s = 0` is supported;
    /// gain-loss balance additionally requires `r_s <= r_max = -ln(eta)/2`.
    PhaseSensitive { g: f64, r_s: f64, phi_s: f64 },
}

impl AmplifierModel {
    /// Squeeze parameter of the amplifier (0 for phase-insensitive variants).
    pub fn squeeze(&self) -> f64 {
        match self {
            AmplifierModel::PhaseSensitive { r_s, .. } => *r_s,
            _ => 0.0,
        }
    }
}

/// Gaussian input state of the (in-coupled, ancillary) mode pair.
///
/// `r0` and `r_g` are single-mode squeeze parameters of the in-coupled and
/// ancillary modes; `r_e` is the two-mode squeeze parameter correlating them.
/// `(0, 0, 0)` is the joint vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputStateParams {
    #[serde(default)]
    pub r0: f64,
    #[serde(default, rename = "rG")]
    pub r_g: f64,
    #[serde(default, rename = "rE")]
    pub r_e: f64,
}

impl InputStateParams {
    pub fn vacuum() -> Self {
        Self::default()
    }

    pub fn is_vacuum(&self) -> bool {
        self.r0 == 0.0 && self.r_g == 0.0 && self.r_e == 0.0
    }
}

/// Full description of one oscillator: loop parameters, amplifier variant,
/// input state, and the carrier selector.
///
/// Units are SI: `tau` in seconds, `alpha_sq` (mean output photon flux
/// `|alpha|^2`) in 1/s, frequencies in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorConfig {
    /// Out-coupler power reflectivity, in (0, 1]. `eta = 1` is the degenerate
    /// no-out-coupling case (used by tests).
    pub eta: f64,
    /// Loop round-trip delay in seconds, > 0.
    pub tau: f64,
    /// Mean output photon flux `|alpha|^2` in 1/s, >= 0.
    pub alpha_sq: f64,
    pub amplifier: AmplifierModel,
    #[serde(default)]
    pub input: InputStateParams,
    /// Selects the carrier `omega0 = (2 * carrier_index + 1) * pi / tau`.
    #[serde(default)]
    pub carrier_index: u32,
}

/// One violated configuration invariant. `validate_config` reports every
/// violation, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("EtaOutOfRange: eta must lie in (0, 1], got {0}")]
    EtaOutOfRange(f64),
    #[error("NonPositiveTau: tau must be positive and finite, got {0}")]
    NonPositiveTau(f64),
    #[error("InvalidAlphaSq: alpha_sq must be nonnegative and finite, got {0}")]
    InvalidAlphaSq(f64),
    #[error("NonPositiveAmplifierParam: {name} must be positive and finite, got {value}")]
    NonPositiveAmplifierParam { name: &'static str, value: f64 },
    #[error("GainBelowLoss: gain {gain} does not exceed the loop loss threshold {loss}")]
    GainBelowLoss { gain: f64, loss: f64 },
    #[error("NegativeSqueeze: amplifier squeeze parameter must be >= 0, got {0}")]
    NegativeSqueeze(f64),
    #[error("SqueezeExceedsRmax: r_s = {r_s} exceeds the loop-sustainable maximum r_max = {r_max}")]
    SqueezeExceedsRmax { r_s: f64, r_max: f64 },
    #[error("UnsupportedSqueezeAngle: phi_s must be 0, got {0}")]
    UnsupportedSqueezeAngle(f64),
    #[error("NonFiniteInput: input squeeze parameters must be finite, got (r0={0}, rG={1}, rE={2})")]
    NonFiniteInput(f64, f64, f64),
}

/// A configuration that passed `validate_config`, with derived scalars
/// populated. The wrapped config is immutable through this type, so the
/// derived fields cannot go stale.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    cfg: OscillatorConfig,
    /// Out-coupler decay rate `|ln(eta)| / tau`, in 1/s.
    pub kappa: f64,
    /// Carrier angular frequency `(2 * carrier_index + 1) * pi / tau`.
    pub omega0: f64,
    /// Maximum loop-sustainable amplifier squeeze, `-ln(eta) / 2`.
    pub r_max: f64,
}

impl ValidatedConfig {
    pub fn config(&self) -> &OscillatorConfig {
        &self.cfg
    }

    pub fn into_config(self) -> OscillatorConfig {
        self.cfg
    }

    /// Loop phase accumulated by the carrier over one round trip. By the
    /// carrier definition this is exactly -1; it is returned in reduced form
    /// rather than via `cos`/`sin` of the (possibly huge) phase
    /// `omega0 * tau`, so the identity holds to the last bit for any
    /// `carrier_index`.
    pub fn carrier_loop_phase(&self) -> Complex64 {
        Complex64::new(-1.0, 0.0)
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = OscillatorConfig;

    fn deref(&self) -> &OscillatorConfig {
        &self.cfg
    }
}

/// Validates a configuration and derives `kappa`, `omega0`, and `r_max`.
///
/// Every violated invariant is reported. Checks that depend on a valid `eta`
/// (loss threshold, `r_max`) are skipped when `eta` itself is out of range.
pub fn validate_config(cfg: OscillatorConfig) -> Result<ValidatedConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();

    let eta_ok = cfg.eta.is_finite() && cfg.eta > 0.0 && cfg.eta <= 1.0;
    if !eta_ok {
        errors.push(ConfigError::EtaOutOfRange(cfg.eta));
    }
    if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
        errors.push(ConfigError::NonPositiveTau(cfg.tau));
    }
    if !(cfg.alpha_sq.is_finite() && cfg.alpha_sq >= 0.0) {
        errors.push(ConfigError::InvalidAlphaSq(cfg.alpha_sq));
    }

    match cfg.amplifier {
        AmplifierModel::SaturatingTanh { g0, a_inf } => {
            if !(g0.is_finite() && g0 > 0.0) {
                errors.push(ConfigError::NonPositiveAmplifierParam {
                    name: "g0",
                    value: g0,
                });
            }
            if !(a_inf.is_finite() && a_inf > 0.0) {
                errors.push(ConfigError::NonPositiveAmplifierParam {
                    name: "a_inf",
                    value: a_inf,
                });
            }
            // Small-signal regime requires round-trip growth: g0 > 1/sqrt(eta).
            if eta_ok && g0.is_finite() && g0 > 0.0 {
                let loss = 1.0 / cfg.eta.sqrt();
                if g0 <= loss {
                    errors.push(ConfigError::GainBelowLoss { gain: g0, loss });
                }
            }
        }
        AmplifierModel::LinearInsensitive { g } => {
            if !(g.is_finite() && g >= 1.0) {
                errors.push(ConfigError::GainBelowLoss { gain: g, loss: 1.0 });
            }
        }
        AmplifierModel::PhaseSensitive { g, r_s, phi_s } => {
            if !(g.is_finite() && g >= 1.0) {
                errors.push(ConfigError::GainBelowLoss { gain: g, loss: 1.0 });
            }
            if !(r_s.is_finite() && r_s >= 0.0) {
                errors.push(ConfigError::NegativeSqueeze(r_s));
            } else if eta_ok {
                let r_max = -0.5 * cfg.eta.ln();
                if r_s > r_max {
                    errors.push(ConfigError::SqueezeExceedsRmax { r_s, r_max });
                }
            }
            if phi_s != 0.0 {
                errors.push(ConfigError::UnsupportedSqueezeAngle(phi_s));
            }
        }
    }

    let p = cfg.input;
    if !(p.r0.is_finite() && p.r_g.is_finite() && p.r_e.is_finite()) {
        errors.push(ConfigError::NonFiniteInput(p.r0, p.r_g, p.r_e));
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    let kappa = -cfg.eta.ln() / cfg.tau;
    let omega0 = (2.0 * f64::from(cfg.carrier_index) + 1.0) * std::f64::consts::PI / cfg.tau;
    let r_max = -0.5 * cfg.eta.ln();
    Ok(ValidatedConfig {
        cfg,
        kappa,
        omega0,
        r_max,
    })
}

/// Hex SHA-256 digest of the canonical (serde_json) encoding of a config.
/// Embedded in CSV headers and time-series dumps to tie outputs to inputs.
pub fn config_digest(cfg: &OscillatorConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serialization is infallible");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Ordered evaluation grid of angular frequencies, either absolute or as
/// offsets from the carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    values: Vec<f64>,
    absolute: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("frequency grid must not be empty")]
    Empty,
    #[error("frequency grid entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("frequency grid must be strictly increasing (violated at index {index})")]
    NotStrictlyIncreasing { index: usize },
    #[error("invalid grid range: need min < max and points >= 2, got [{min}, {max}] with {points}")]
    InvalidRange { min: f64, max: f64, points: usize },
}

impl FrequencyGrid {
    /// Builds a grid from explicit values; they must be finite and strictly
    /// increasing.
    pub fn new(values: Vec<f64>, absolute: bool) -> Result<Self, GridError> {
        if values.is_empty() {
            return Err(GridError::Empty);
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(GridError::NonFinite { index: i });
            }
            if i > 0 && values[i - 1] >= *v {
                return Err(GridError::NotStrictlyIncreasing { index: i });
            }
        }
        Ok(Self { values, absolute })
    }

    /// Logarithmically spaced grid; requires `0 < min < max`.
    pub fn log_spaced(min: f64, max: f64, points: usize, absolute: bool) -> Result<Self, GridError> {
        if !(min.is_finite() && max.is_finite() && min > 0.0 && min < max && points >= 2) {
            return Err(GridError::InvalidRange { min, max, points });
        }
        let (lmin, lmax) = (min.ln(), max.ln());
        let step = (lmax - lmin) / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|i| (lmin + step * i as f64).exp()).collect();
        // Guard against rounding at the endpoints breaking monotonic bounds.
        values[0] = min;
        *values.last_mut().expect("points >= 2") = max;
        Self::new(values, absolute)
    }

    /// Linearly spaced grid; requires `min < max`.
    pub fn linear_spaced(
        min: f64,
        max: f64,
        points: usize,
        absolute: bool,
    ) -> Result<Self, GridError> {
        if !(min.is_finite() && max.is_finite() && min < max && points >= 2) {
            return Err(GridError::InvalidRange { min, max, points });
        }
        let step = (max - min) / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|i| min + step * i as f64).collect();
        values[0] = min;
        *values.last_mut().expect("points >= 2") = max;
        Self::new(values, absolute)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_absolute(&self) -> bool {
        self.absolute
    }

    /// Grid entries converted to offsets from the carrier `omega0`.
    pub fn offsets_from(&self, omega0: f64) -> Vec<f64> {
        if self.absolute {
            self.values.iter().map(|v| v - omega0).collect()
        } else {
            self.values.clone()
        }
    }

    /// Smallest distance `|1 + e^{i*Omega*tau}|` to a loop transfer pole over
    /// the grid. Absolute entries are poles at `Omega*tau = (2k+1)*pi`;
    /// offset entries at `omega*tau = 2*pi*k` (the carrier itself included).
    pub fn min_pole_clearance(&self, tau: f64) -> f64 {
        self.values
            .iter()
            .map(|&v| {
                let z = if self.absolute {
                    Complex64::cis(v * tau)
                } else {
                    -Complex64::cis(v * tau)
                };
                (Complex64::new(1.0, 0.0) + z).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tanh_config(eta: f64, g0: f64) -> OscillatorConfig {
        OscillatorConfig {
            eta,
            tau: 1e-8,
            alpha_sq: 1.0,
            amplifier: AmplifierModel::SaturatingTanh { g0, a_inf: 1.0 },
            input: InputStateParams::vacuum(),
            carrier_index: 0,
        }
    }

    #[test]
    fn valid_config_derives_r_max_and_kappa() {
        let v = validate_config(tanh_config(0.25, 4.0)).expect("valid");
        assert_relative_eq!(v.r_max, (2.0f64).ln(), max_relative = 1e-15);
        assert_relative_eq!(v.kappa, -(0.25f64).ln() / 1e-8, max_relative = 1e-15);
        assert!(v.kappa > 0.0);
    }

    #[test]
    fn eta_one_is_valid_with_zero_kappa() {
        let mut cfg = tanh_config(1.0, 4.0);
        cfg.amplifier = AmplifierModel::LinearInsensitive { g: 1.0 };
        cfg.tau = 1.0;
        let v = validate_config(cfg).expect("valid");
        assert_eq!(v.kappa, 0.0);
        assert_eq!(v.r_max, 0.0);
    }

    #[test]
    fn gain_below_loss_is_rejected() {
        let errs = validate_config(tanh_config(0.25, 1.5)).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ConfigError::GainBelowLoss { gain, loss }
                if *gain == 1.5 && (*loss - 2.0).abs() < 1e-12)));
    }

    #[test]
    fn every_violation_is_reported() {
        let cfg = OscillatorConfig {
            eta: 1.5,
            tau: -1.0,
            alpha_sq: -2.0,
            amplifier: AmplifierModel::PhaseSensitive {
                g: 0.5,
                r_s: -1.0,
                phi_s: 0.3,
            },
            input: InputStateParams {
                r0: f64::NAN,
                r_g: 0.0,
                r_e: 0.0,
            },
            carrier_index: 0,
        };
        let errs = validate_config(cfg).unwrap_err();
        assert!(errs.len() >= 6, "expected all violations, got {errs:?}");
    }

    #[test]
    fn squeeze_above_r_max_is_rejected_and_equality_allowed() {
        let mk = |r_s: f64| OscillatorConfig {
            amplifier: AmplifierModel::PhaseSensitive {
                g: 1.0,
                r_s,
                phi_s: 0.0,
            },
            ..tanh_config(0.25, 4.0)
        };
        let r_max = -0.5 * (0.25f64).ln();
        assert!(validate_config(mk(r_max)).is_ok());
        let errs = validate_config(mk(r_max + 1e-9)).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, ConfigError::SqueezeExceedsRmax { .. })));
    }

    #[test]
    fn validation_is_idempotent() {
        let v = validate_config(tanh_config(0.25, 4.0)).expect("valid");
        let again = validate_config(v.config().clone()).expect("still valid");
        assert_eq!(v, again);
    }

    #[test]
    fn carrier_phase_is_minus_one_for_moderate_indices() {
        for n in [0u32, 1, 5, 37, 256] {
            let mut cfg = tanh_config(0.25, 4.0);
            cfg.carrier_index = n;
            let v = validate_config(cfg).expect("valid");
            let direct = Complex64::cis(v.omega0 * v.tau);
            assert!(
                (direct - Complex64::new(-1.0, 0.0)).norm() < 1e-12,
                "carrier phase drifted at n = {n}"
            );
            assert_eq!(v.carrier_loop_phase(), Complex64::new(-1.0, 0.0));
        }
    }

    #[test]
    fn json_round_trip_and_unknown_key_rejection() {
        let cfg = tanh_config(0.25, 4.0);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: OscillatorConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);

        let with_unknown = r#"{
            "eta": 0.25, "tau": 1e-8, "alpha_sq": 1.0,
            "amplifier": {"saturating_tanh": {"g0": 4.0, "a_inf": 1.0}},
            "mystery": 3
        }"#;
        assert!(serde_json::from_str::<OscillatorConfig>(with_unknown).is_err());

        let bad_variant = r#"{
            "eta": 0.25, "tau": 1e-8, "alpha_sq": 1.0,
            "amplifier": {"saturating_tanh": {"g0": 4.0, "a_inf": 1.0, "extra": 1}}
        }"#;
        assert!(serde_json::from_str::<OscillatorConfig>(bad_variant).is_err());
    }

    #[test]
    fn digest_is_stable_and_input_sensitive() {
        let a = config_digest(&tanh_config(0.25, 4.0));
        let b = config_digest(&tanh_config(0.25, 4.0));
        let c = config_digest(&tanh_config(0.5, 4.0));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn grid_construction_and_pole_clearance() {
        assert!(FrequencyGrid::new(vec![], false).is_err());
        assert!(FrequencyGrid::new(vec![1.0, 1.0], false).is_err());
        assert!(FrequencyGrid::new(vec![1.0, f64::NAN], false).is_err());

        let g = FrequencyGrid::log_spaced(1e-3, 1.0, 64, false).unwrap();
        assert_eq!(g.values().len(), 64);
        assert_eq!(g.values()[0], 1e-3);
        assert_eq!(*g.values().last().unwrap(), 1.0);

        // Offset grid containing the carrier itself sits on a pole.
        let on_pole = FrequencyGrid::new(vec![0.0, 1.0], false).unwrap();
        assert!(on_pole.min_pole_clearance(1.0) < 1e-15);
        // Absolute grid at Omega*tau = pi sits on a pole.
        let abs_pole = FrequencyGrid::new(vec![std::f64::consts::PI], true).unwrap();
        assert!(abs_pole.min_pole_clearance(1.0) < 1e-12);
        let clear = FrequencyGrid::new(vec![0.5, 1.0], false).unwrap();
        assert!(clear.min_pole_clearance(1.0) > 0.4);
    }
}
