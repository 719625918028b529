//! Property tests: structural identities that must hold at every valid
//! operating point, checked over randomized inputs.

use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

use fbosc_core::gaussian::{covariance_validity, input_covariance};
use fbosc_core::model::{
    validate_config, AmplifierModel, InputStateParams, OscillatorConfig,
};
use fbosc_core::saturation::{
    iterate_loop_map, stability_margin, steady_state_amplitude,
};
use fbosc_core::spectra::{
    output_spectra_epr_exact, output_spectra_general, output_spectra_vacuum_closed_form,
};
use fbosc_core::transfer::{
    commutator_residual, decompose_phase_sensitive, transfer_insensitive,
    transfer_phase_sensitive,
};

/// Loop phases kept 2% of a half-period away from the odd-pi poles.
fn pole_free_phase() -> impl Strategy<Value = f64> {
    (-6i32..6, -0.98f64..0.98).prop_map(|(k, frac)| (2.0 * k as f64 + frac) * PI)
}

fn eta_range() -> impl Strategy<Value = f64> {
    0.02f64..=1.0
}

proptest! {
    #[test]
    fn commutator_identity_everywhere(eta in eta_range(), omega in pole_free_phase()) {
        let residual = commutator_residual(eta, 1.0, omega).unwrap();
        prop_assert!(residual.abs() < 1e-11, "residual {residual:.3e}");
    }

    #[test]
    fn transfer_is_periodic_and_conjugate_symmetric(
        eta in 0.02f64..0.999,
        omega in pole_free_phase(),
    ) {
        let t = transfer_insensitive(eta, 1.0, omega).unwrap();
        let shifted = transfer_insensitive(eta, 1.0, omega + 2.0 * PI).unwrap();
        prop_assert!((t.h0 - shifted.h0).norm() < 1e-9 * t.h0.norm().max(1.0));
        prop_assert!((t.hg - shifted.hg).norm() < 1e-9 * t.hg.norm().max(1.0));

        let mirrored = transfer_insensitive(eta, 1.0, -omega).unwrap();
        prop_assert!((t.h0.conj() - mirrored.h0).norm() < 1e-12 * t.h0.norm().max(1.0));
        prop_assert!((t.hg.conj() - mirrored.hg).norm() < 1e-12 * t.hg.norm().max(1.0));
    }

    /// The phase-sensitive loop is symplectic: h0q conj(h0p) - hgq conj(hgp) = 1.
    #[test]
    fn quadrature_symplectic_identity(
        eta in 0.02f64..=1.0,
        omega in pole_free_phase(),
        r_frac in 0.0f64..=1.0,
    ) {
        let r_s = r_frac * (-0.5 * eta.ln());
        if let Ok(t) = transfer_phase_sensitive(eta, 1.0, r_s, omega) {
            let lhs = t.h0q * t.h0p.conj() - t.hgq * t.hgp.conj();
            prop_assert!((lhs - Complex64::new(1.0, 0.0)).norm() < 1e-10,
                "identity off by {:.3e}", (lhs - Complex64::new(1.0, 0.0)).norm());
        }
    }

    #[test]
    fn decomposition_round_trips(g in 0.0f64..10.0, excess in 1e-6f64..10.0) {
        let big_g = g + excess;
        let d = decompose_phase_sensitive(big_g, g).unwrap();
        prop_assert!(d.g_cal >= 0.0 && d.r >= 0.0);
        prop_assert!((d.g_cal * d.r.cosh() - big_g).abs() < 1e-9 * big_g.max(1.0));
        prop_assert!((d.g_cal * d.r.sinh() - g).abs() < 1e-9 * big_g.max(1.0));
    }

    #[test]
    fn input_states_are_physical_and_spectra_respect_the_floor(
        eta in 0.05f64..=1.0,
        omega in pole_free_phase(),
        r0 in -3.0f64..3.0,
        r_g in -3.0f64..3.0,
        r_e in -3.0f64..3.0,
        r_frac in 0.0f64..=1.0,
    ) {
        let input = InputStateParams { r0, r_g, r_e };
        let v = input_covariance(&input);
        let validity = covariance_validity(&v).unwrap();
        prop_assert!(validity.valid, "min symplectic residual {:.3e}",
            validity.min_symplectic_eigenvalue);

        let r_s = r_frac * (-0.5 * eta.ln());
        if let Ok(t) = transfer_phase_sensitive(eta, 1.0, r_s, omega) {
            let s = output_spectra_general(&t, &v);
            prop_assert!(s.sqq >= 0.0 && s.spp >= 0.0);
            prop_assert!(s.product >= 0.25 - 1e-9, "product {}", s.product);
            let general = s.bounds.general.unwrap_or(s.bounds.insensitive);
            let slack = 1e-9 * general.abs() + 1e-12;
            prop_assert!(s.product >= general - slack);
        }
    }

    /// Zero two-mode squeezing reduces the entangled closed form to vacuum.
    #[test]
    fn epr_closed_form_degenerates_to_vacuum(
        eta in 0.05f64..=1.0,
        omega in pole_free_phase(),
    ) {
        let epr = output_spectra_epr_exact(eta, 1.0, omega, 0.0).unwrap();
        let vac = output_spectra_vacuum_closed_form(eta, 1.0, omega).unwrap();
        prop_assert!((epr.sqq - vac.sqq).abs() <= 1e-12 * vac.sqq.max(1.0));
        prop_assert!((epr.spp - vac.spp).abs() <= 1e-12 * vac.spp.max(1.0));
    }

    #[test]
    fn saturated_fixed_point_properties(
        g0_excess in 0.01f64..10.0,
        a_inf in 0.1f64..10.0,
        eta in 0.05f64..0.999,
    ) {
        let g0 = 1.0 / eta.sqrt() + g0_excess;
        let model = AmplifierModel::SaturatingTanh { g0, a_inf };
        let ss = steady_state_amplitude(&model, eta, 1e-10).unwrap();
        prop_assert!(ss.alpha_ss > 0.0);
        prop_assert!((ss.g_linear * eta.sqrt() - 1.0).abs() <= 1e-10);
        prop_assert!(ss.contraction < 1.0);
        let margin = stability_margin(&model, eta, ss.alpha_ss).unwrap();
        prop_assert!((margin - ss.contraction).abs() < 1e-12);

        // Trajectories approach the fixed point monotonically from both sides.
        let up = iterate_loop_map(&model, eta, 0.3 * ss.alpha_ss, 50).unwrap();
        prop_assert!(up.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert!(up.iter().all(|a| *a <= ss.alpha_ss * (1.0 + 1e-9)));
        let down = iterate_loop_map(&model, eta, 3.0 * ss.alpha_ss, 50).unwrap();
        prop_assert!(down.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(down.iter().all(|a| *a >= ss.alpha_ss * (1.0 - 1e-9)));
    }

    #[test]
    fn config_serde_round_trip(
        eta in 0.05f64..=1.0,
        tau in 1e-9f64..10.0,
        alpha_sq in 0.1f64..1e6,
        g0_excess in 0.01f64..5.0,
        r0 in -2.0f64..2.0,
        carrier_index in 0u32..1000,
    ) {
        let cfg = OscillatorConfig {
            eta,
            tau,
            alpha_sq,
            amplifier: AmplifierModel::SaturatingTanh {
                g0: 1.0 / eta.sqrt() + g0_excess,
                a_inf: 1.0,
            },
            input: InputStateParams { r0, r_g: 0.0, r_e: 0.0 },
            carrier_index,
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: OscillatorConfig = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&cfg, &back);
        prop_assert!(validate_config(cfg).is_ok());
    }
}
