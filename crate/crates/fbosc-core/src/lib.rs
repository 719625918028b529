//! Quantum-noise analysis of delay-line feedback oscillators.
//!
//! An oscillator is modeled as a linear amplifier inside a feedback loop of
//! round-trip delay `tau`, closed by an out-coupling beam splitter of power
//! reflectivity `eta`. Saturation pins the round-trip gain to unity, and the
//! quantum noise admitted by the amplifier and the out-coupler then fixes the
//! output field fluctuations completely. This crate computes, in closed form:
//!
//! - loop transfer functions from each noise port to the output, for
//!   phase-insensitive and phase-sensitive (squeezing) amplifiers;
//! - symmetrized output quadrature spectra for vacuum, squeezed, and
//!   two-mode-squeezed (EPR) inputs;
//! - the frequency-noise spectrum and Schawlow-Townes linewidth;
//! - quantum uncertainty-product bounds on the spectra;
//!
//! and verifies all of them against an independent stochastic time-domain
//! simulation of the delay loop ([`sim`]).
//!
//! Conventions (see [`model::SPECTRAL_CONVENTION`]): Fourier kernel
//! `e^{+i*omega*t}` so a delay contributes `e^{+i*omega*tau}`; spectra are
//! double-sided and symmetrized with vacuum = 1/2 per quadrature; quadrature
//! vectors are ordered `(q0, p0, qG, pG)` (out-coupler port first, amplifier
//! port second).

pub mod gaussian;
pub mod model;
pub mod saturation;
pub mod sim;
pub mod spectra;
pub mod transfer;
pub mod verify;

pub use gaussian::{
    covariance_validity, input_covariance, CovarianceValidity, GaussianError, InputCovariance,
    IDX_P0, IDX_PG, IDX_Q0, IDX_QG, QUADRATURE_ORDER,
};
pub use model::{
    config_digest, validate_config, AmplifierModel, ConfigError, FrequencyGrid, GridError,
    InputStateParams, OscillatorConfig, ValidatedConfig, SPECTRAL_CONVENTION,
};
pub use saturation::{
    evaluate_gain, iterate_loop_map, stability_margin, steady_state_amplitude,
    zero_point_growth, SaturatingResponse, SaturationError, SteadyState, TanhResponse,
};
pub use sim::{
    average_psd, estimate_linewidth, estimate_psd, estimate_psd_complex, estimate_psd_pair,
    fit_lorentzian, read_binary, simulate_classical_startup, simulate_fluctuations,
    simulate_fluctuations_stream, write_binary, LinewidthRun, LorentzFit, PsdEstimate,
    Quadrature, QuadTimeSeries, SimError, SimMode, SimPlan, StartupRun, Window,
};
pub use spectra::{
    frequency_noise_spectrum, output_spectra_epr_exact, output_spectra_general,
    output_spectra_insensitive, output_spectra_phase_sensitive,
    output_spectra_phase_sensitive_near_resonance, output_spectra_phase_sensitive_vacuum,
    output_spectra_pure_phase_sensitive_near_carrier, output_spectra_sqz_epr_near_carrier,
    output_spectra_vacuum_closed_form, output_spectra_vacuum_closed_form_offset,
    schawlow_townes, schawlow_townes_log_form, spectra_for_config, uncertainty_bounds,
    FrequencyNoisePoint, QuadratureSpectra, SchawlowTownes, SpectraError, SpectralBounds,
    PLATEAU_OMEGA_TAU,
};
pub use transfer::{
    commutator_residual, decompose_phase_sensitive, transfer_insensitive,
    transfer_insensitive_offset, transfer_near_resonance, transfer_phase_sensitive,
    transfer_phase_sensitive_offset, InsensitiveTransfer, NearResonanceTransfer,
    PhaseSensitiveDecomposition, QuadTransfer, TransferError, POLE_GUARD,
};
pub use verify::{run_builtin_checks, run_config_checks, CheckOutcome};
