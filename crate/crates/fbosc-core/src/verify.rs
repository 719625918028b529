//! Built-in invariant suites: seeded, deterministic sweeps over random
//! operating points checking the identities the closed forms must satisfy.
//!
//! Each sweep returns a [`CheckOutcome`] with a pass flag and a one-line
//! detail (worst observed margin), so callers can render a pass/fail table.
//! The sweep sizes are parameters: the command-line `verify` runs quick
//! defaults, the acceptance tests run the full advertised counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gaussian::{
    covariance_validity, input_covariance, InputCovariance, IDX_P0, IDX_PG, IDX_Q0, IDX_QG,
};
use crate::model::{validate_config, InputStateParams, OscillatorConfig};
use crate::spectra::{
    output_spectra_epr_exact, output_spectra_general, output_spectra_phase_sensitive_vacuum,
    output_spectra_vacuum_closed_form, QuadratureSpectra,
};
use crate::transfer::{
    commutator_residual, decompose_phase_sensitive, transfer_phase_sensitive, QuadTransfer,
};

/// Result of one named invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Draws an offset in a comfortably pole-free part of a period.
fn sample_phase(rng: &mut ChaCha8Rng) -> f64 {
    let period: i32 = rng.gen_range(-4..4);
    let inner: f64 = rng.gen_range(-std::f64::consts::PI * 0.95..=std::f64::consts::PI * 0.95);
    2.0 * std::f64::consts::PI * period as f64 + inner
}

/// Keeps drawing until the phase-sensitive transfer evaluates off-pole.
fn sample_quad_transfer(rng: &mut ChaCha8Rng, eta: f64, r_s: f64) -> QuadTransfer {
    loop {
        let omega = sample_phase(rng);
        if let Ok(t) = transfer_phase_sensitive(eta, 1.0, r_s, omega) {
            return t;
        }
    }
}

/// Commutator identity |h0|^2 - |hg|^2 = 1 over random (eta, loop phase).
pub fn commutator_sweep(seed: u64, samples: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let eta: f64 = rng.gen_range(0.02..=1.0);
        let residual = loop {
            let omega = sample_phase(&mut rng);
            if let Ok(r) = commutator_residual(eta, 1.0, omega) {
                break r;
            }
        };
        worst = worst.max(residual.abs());
    }
    CheckOutcome::new(
        "commutator_identity",
        worst < 1e-12,
        format!("max ||h0|^2-|hg|^2-1| = {worst:.3e} over {samples} samples"),
    )
}

/// One random physical operating point: spectra plus operating data.
fn random_spectra(rng: &mut ChaCha8Rng) -> (QuadratureSpectra, f64) {
    let eta: f64 = rng.gen_range(0.05..=1.0);
    let input = if rng.gen_bool(0.25) {
        InputStateParams::vacuum()
    } else {
        InputStateParams {
            r0: rng.gen_range(-3.0..=3.0),
            r_g: rng.gen_range(-3.0..=3.0),
            r_e: rng.gen_range(-3.0..=3.0),
        }
    };
    let r_max = -0.5 * eta.ln();
    let r_s = if rng.gen_bool(0.5) {
        0.0
    } else {
        rng.gen_range(0.0..=r_max)
    };
    let transfer = sample_quad_transfer(rng, eta, r_s);
    let v = input_covariance(&input);
    (output_spectra_general(&transfer, &v), eta)
}

/// Uncertainty product >= 1/4 over random physical configurations
/// (both amplifier variants, squeeze parameters in [-3, 3], r_s in
/// [0, r_max], loop phases outside the pole guard).
pub fn heisenberg_floor_sweep(seed: u64, samples: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_product = f64::INFINITY;
    for _ in 0..samples {
        let (s, _) = random_spectra(&mut rng);
        min_product = min_product.min(s.product);
    }
    CheckOutcome::new(
        "heisenberg_floor",
        min_product >= 0.25 - 1e-9,
        format!("min product = {min_product:.12} over {samples} samples"),
    )
}

/// Product >= general bound >= insensitive bound for diagonal (zero
/// cross-spectrum) inputs. Violation = dipping below by more than a 1e-12
/// relative rounding allowance.
pub fn bound_ordering_sweep(seed: u64, samples: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let eta: f64 = rng.gen_range(0.05..=1.0);
        let input = InputStateParams {
            r0: rng.gen_range(-3.0..=3.0),
            r_g: rng.gen_range(-3.0..=3.0),
            r_e: 0.0,
        };
        let r_max = -0.5 * eta.ln();
        let r_s = if rng.gen_bool(0.5) {
            0.0
        } else {
            rng.gen_range(0.0..=r_max)
        };
        let transfer = sample_quad_transfer(&mut rng, eta, r_s);
        let s = output_spectra_general(&transfer, &input_covariance(&input));
        let general = s.bounds.general.unwrap_or(s.bounds.insensitive);
        let slack = |x: f64| 1e-12 * x.abs() + 1e-15;
        if s.product < general - slack(general)
            || general < s.bounds.insensitive - slack(s.bounds.insensitive)
        {
            violations += 1;
        }
        worst = worst.min((s.product - general).min(general - s.bounds.insensitive));
    }
    CheckOutcome::new(
        "bound_ordering",
        violations == 0,
        format!("{violations} violations over {samples} samples (worst margin {worst:.3e})"),
    )
}

/// Closed-form spectra equal the general composition route: vacuum,
/// entangled-input, and phase-sensitive-vacuum cases.
pub fn cross_path_sweep(seed: u64, samples: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut record = |a: f64, b: f64| {
        worst = worst.max((a - b).abs() / b.abs().max(1.0));
    };
    for _ in 0..samples {
        let eta: f64 = rng.gen_range(0.05..=1.0);
        let vacuum = input_covariance(&InputStateParams::vacuum());

        let t = sample_quad_transfer(&mut rng, eta, 0.0);
        let composed = output_spectra_general(&t, &vacuum);
        let closed = output_spectra_vacuum_closed_form(eta, 1.0, t.omega).unwrap();
        record(composed.sqq, closed.sqq);
        record(composed.spp, closed.spp);

        let r_e: f64 = rng.gen_range(-3.0..=3.0);
        let epr = input_covariance(&InputStateParams { r0: 0.0, r_g: 0.0, r_e });
        let composed = output_spectra_general(&t, &epr);
        let closed = output_spectra_epr_exact(eta, 1.0, t.omega, r_e).unwrap();
        record(composed.sqq, closed.sqq);
        record(composed.spp, closed.spp);

        let r_max = -0.5 * eta.ln();
        let r_s: f64 = rng.gen_range(0.0..=r_max);
        let tq = sample_quad_transfer(&mut rng, eta, r_s);
        let composed = output_spectra_general(&tq, &vacuum);
        let closed = output_spectra_phase_sensitive_vacuum(eta, 1.0, r_s, tq.omega).unwrap();
        record(composed.sqq, closed.sqq);
        record(composed.spp, closed.spp);
    }
    CheckOutcome::new(
        "cross_path_equality",
        worst < 1e-12,
        format!("max closed-vs-composed deviation = {worst:.3e} over {samples} samples"),
    )
}

/// Entangled-input minimum: eta = 1/2, rE = ln(1/2) reaches product 1/4 at
/// the inter-resonance phases.
pub fn epr_minimum_check() -> CheckOutcome {
    let eta = 0.5;
    let r_e = 0.5f64.ln();
    let mut min_product = f64::INFINITY;
    for n in -2i32..=2 {
        let omega = 2.0 * std::f64::consts::PI * n as f64;
        let s = output_spectra_epr_exact(eta, 1.0, omega, r_e).unwrap();
        min_product = min_product.min(s.product);
    }
    CheckOutcome::new(
        "epr_minimum",
        (min_product - 0.25).abs() < 1e-9,
        format!("min product {min_product:.4} at entangled-input optimum"),
    )
}

/// Amplifier decomposition (G, g) -> (calibrated gain, squeeze) -> (G, g)
/// is the identity to 1e-12 relative.
pub fn decomposition_sweep(seed: u64, samples: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let g: f64 = rng.gen_range(0.0..=10.0);
        let big_g: f64 = g + rng.gen_range(1e-3..=10.0);
        let d = decompose_phase_sensitive(big_g, g).unwrap();
        let back_big = d.g_cal * d.r.cosh();
        let back_small = d.g_cal * d.r.sinh();
        worst = worst.max((back_big - big_g).abs() / big_g.max(1.0));
        worst = worst.max((back_small - g).abs() / g.max(1.0));
    }
    CheckOutcome::new(
        "decomposition_round_trip",
        worst < 1e-12,
        format!("max round-trip deviation = {worst:.3e} over {samples} samples"),
    )
}

/// The full built-in suite at command-line-friendly sizes.
pub fn run_builtin_checks(seed: u64) -> Vec<CheckOutcome> {
    vec![
        commutator_sweep(seed, 10_000),
        heisenberg_floor_sweep(seed.wrapping_add(1), 10_000),
        bound_ordering_sweep(seed.wrapping_add(2), 10_000),
        cross_path_sweep(seed.wrapping_add(3), 2_000),
        epr_minimum_check(),
        decomposition_sweep(seed.wrapping_add(4), 10_000),
    ]
}

/// Checks one user configuration: validation, physicality of the input
/// covariance (or an explicit override), and the uncertainty invariants on
/// a default frequency sweep.
pub fn run_config_checks(
    cfg: &OscillatorConfig,
    covariance: Option<&InputCovariance>,
) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let validated = match validate_config(cfg.clone()) {
        Ok(v) => {
            out.push(CheckOutcome::new(
                "config_validation",
                true,
                "all parameter constraints satisfied".into(),
            ));
            v
        }
        Err(errors) => {
            let joined = errors
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            out.push(CheckOutcome::new("config_validation", false, joined));
            return out;
        }
    };

    let built = input_covariance(&cfg.input);
    let v = covariance.unwrap_or(&built);
    match covariance_validity(v) {
        Ok(validity) => out.push(CheckOutcome::new(
            "covariance_validity",
            validity.valid,
            format!(
                "min symplectic eigenvalue residual = {:.3e}{}",
                validity.min_symplectic_eigenvalue,
                if validity.borderline { " (borderline)" } else { "" }
            ),
        )),
        Err(e) => out.push(CheckOutcome::new("covariance_validity", false, e.to_string())),
    }

    // Uncertainty invariants along one period of loop phase. The
    // input-dependent bound (product >= general) holds for every physical
    // input; the further chain general >= insensitive is a theorem only for
    // uncorrelated inputs. Correlated (entangled) inputs evade the
    // phase-insensitive bound, down to the Heisenberg floor, so for them
    // only the first inequality is asserted.
    let uncorrelated =
        v.get(IDX_Q0, IDX_QG).abs() <= 1e-12 && v.get(IDX_P0, IDX_PG).abs() <= 1e-12;
    let r_s = validated.amplifier.squeeze();
    let mut min_product = f64::INFINITY;
    let mut ordering_ok = true;
    let mut evaluated = 0usize;
    for k in 0..512 {
        let omega_tau = -3.0 + 6.0 * (k as f64 + 0.5) / 512.0;
        let Ok(t) = transfer_phase_sensitive(validated.eta, validated.tau, r_s, omega_tau / validated.tau) else {
            continue;
        };
        let s = output_spectra_general(&t, v);
        min_product = min_product.min(s.product);
        let general = s.bounds.general.unwrap_or(s.bounds.insensitive);
        let slack = |x: f64| 1e-12 * x.abs() + 1e-15;
        if s.product < general - slack(general) {
            ordering_ok = false;
        }
        if uncorrelated && general < s.bounds.insensitive - slack(s.bounds.insensitive) {
            ordering_ok = false;
        }
        evaluated += 1;
    }
    out.push(CheckOutcome::new(
        "uncertainty_floor",
        min_product >= 0.25 - 1e-9,
        format!("min product = {min_product:.6} over {evaluated} grid points"),
    ));
    out.push(CheckOutcome::new(
        "bound_ordering",
        ordering_ok,
        if uncorrelated {
            format!("product >= general >= insensitive at {evaluated} grid points")
        } else {
            format!(
                "product >= general at {evaluated} grid points \
                 (correlated input: insensitive bound not applicable)"
            )
        },
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;

    #[test]
    fn builtin_suite_passes_and_is_deterministic() {
        let a = run_builtin_checks(7);
        let b = run_builtin_checks(7);
        assert_eq!(a, b);
        for check in &a {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn epr_minimum_reports_quarter() {
        let check = epr_minimum_check();
        assert!(check.passed);
        assert!(check.detail.contains("0.2500"));
    }

    #[test]
    fn config_checks_flag_corrupted_covariance() {
        let cfg = OscillatorConfig {
            eta: 0.25,
            tau: 1.0,
            alpha_sq: 1e4,
            amplifier: crate::model::AmplifierModel::SaturatingTanh { g0: 4.0, a_inf: 1.0 },
            input: InputStateParams::vacuum(),
            carrier_index: 0,
        };
        let good = run_config_checks(&cfg, None);
        assert!(good.iter().all(|c| c.passed), "{good:?}");

        // Sub-Heisenberg override: q and p variances both an order of
        // magnitude below vacuum in the main mode.
        let bad = InputCovariance::from_matrix(Matrix4::from_diagonal(
            &nalgebra::Vector4::new(0.05, 0.05, 0.5, 0.5),
        ))
        .unwrap();
        let checks = run_config_checks(&cfg, Some(&bad));
        let cov = checks.iter().find(|c| c.name == "covariance_validity").unwrap();
        assert!(!cov.passed);
    }
}
