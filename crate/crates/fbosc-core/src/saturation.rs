//! Classical nonlinear steady state of the saturated loop.
//!
//! One round trip maps the in-loop amplitude through the amplifier response
//! `A` and the out-coupler transmission: `alpha_{k+1} = sqrt(eta) * A(alpha_k)`.
//! A response with small-signal gain above the loop loss
//! (`sqrt(eta) * A'(0) > 1`) makes the zero state unstable, and saturation produces a nonzero
//! fixed point `alpha_ss` with `sqrt(eta) * A(alpha_ss) = alpha_ss`; there the
//! operating gain is pinned to `A(alpha_ss)/alpha_ss = 1/sqrt(eta)` (gain =
//! loss) and the local contraction factor `alpha * A'(alpha) / A(alpha) < 1`
//! certifies stability.
//!
//! The solver is generic over any [`SaturatingResponse`]: odd, strictly
//! increasing, finite asymptote. Those postulates do not by themselves force
//! a unique positive fixed point, so the bracket `(0, sqrt(eta) * a_sat]` is
//! scanned for sign changes first and every root is surfaced if more than one
//! exists; each bracketed root is then polished by bisection plus Newton
//! steps.

use crate::model::AmplifierModel;
use thiserror::Error;

/// Subintervals used when scanning the root bracket for sign changes.
const ROOT_SCAN_INTERVALS: usize = 1024;
/// Hard cap on refinement iterations per root.
const MAX_REFINE_ITERS: usize = 240;

/// Contract for an amplifier amplitude response `A(x)`: odd in `x`, strictly
/// increasing, slope `small_signal_gain()` at the origin, and saturating at
/// `+/- saturated_level()`.
pub trait SaturatingResponse {
    /// Amplitude response `A(x)`.
    fn respond(&self, x: f64) -> f64;
    /// Derivative `A'(x)`.
    fn slope(&self, x: f64) -> f64;
    /// `A'(0)`.
    fn small_signal_gain(&self) -> f64;
    /// `sup |A|`.
    fn saturated_level(&self) -> f64;
}

/// The concrete response family shipped with the model:
/// `A(x) = a_inf * tanh(g0 * x / a_inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhResponse {
    pub g0: f64,
    pub a_inf: f64,
}

impl SaturatingResponse for TanhResponse {
    fn respond(&self, x: f64) -> f64 {
        self.a_inf * (self.g0 * x / self.a_inf).tanh()
    }

    fn slope(&self, x: f64) -> f64 {
        let t = (self.g0 * x / self.a_inf).tanh();
        self.g0 * (1.0 - t * t)
    }

    fn small_signal_gain(&self) -> f64 {
        self.g0
    }

    fn saturated_level(&self) -> f64 {
        self.a_inf
    }
}

/// Saturated operating point of the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// Positive root of `sqrt(eta) * A(alpha) = alpha`.
    pub alpha_ss: f64,
    /// Operating gain `A(alpha_ss) / alpha_ss`; equals `1/sqrt(eta)` at the
    /// root (gain = loss).
    pub g_linear: f64,
    /// Local contraction `alpha_ss * A'(alpha_ss) / A(alpha_ss)` of the
    /// round-trip magnitude map; `< 1` for a stable fixed point.
    pub contraction: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SaturationError {
    #[error("WrongVariant: {op} requires a saturating amplifier, got {got}")]
    WrongVariant { op: &'static str, got: &'static str },
    #[error("NoPositiveRoot: per-round-trip zero-point growth {growth} <= 1, only the zero fixed point exists")]
    NoPositiveRoot { growth: f64 },
    #[error("MultipleRoots: round-trip map has {} positive fixed points {roots:?}; refusing to pick one", roots.len())]
    MultipleRoots { roots: Vec<f64> },
    #[error("ToleranceNotMet: root refinement stalled at alpha = {alpha} with residual {residual}")]
    ToleranceNotMet { alpha: f64, residual: f64 },
    #[error("InvalidEta: eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("InvalidTolerance: tol must be positive and finite, got {0}")]
    InvalidTolerance(f64),
}

fn variant_name(model: &AmplifierModel) -> &'static str {
    match model {
        AmplifierModel::SaturatingTanh { .. } => "saturating_tanh",
        AmplifierModel::LinearInsensitive { .. } => "linear_insensitive",
        AmplifierModel::PhaseSensitive { .. } => "phase_sensitive",
    }
}

fn tanh_response(model: &AmplifierModel, op: &'static str) -> Result<TanhResponse, SaturationError> {
    match model {
        AmplifierModel::SaturatingTanh { g0, a_inf } => Ok(TanhResponse {
            g0: *g0,
            a_inf: *a_inf,
        }),
        other => Err(SaturationError::WrongVariant {
            op,
            got: variant_name(other),
        }),
    }
}

fn check_eta(eta: f64) -> Result<(), SaturationError> {
    if eta.is_finite() && eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(SaturationError::InvalidEta(eta))
    }
}

/// Evaluates the saturating amplitude response `A(x)` of the model.
pub fn evaluate_gain(model: &AmplifierModel, x: f64) -> Result<f64, SaturationError> {
    Ok(tanh_response(model, "evaluate_gain")?.respond(x))
}

/// Per-round-trip growth factor of an infinitesimal seed amplitude,
/// `sqrt(eta) * A'(0)`. The zero state is unstable iff this exceeds 1. For a
/// phase-sensitive amplifier the growth of the amplified quadrature is
/// reported, `sqrt(eta) * g * e^{r_s}`.
pub fn zero_point_growth(model: &AmplifierModel, eta: f64) -> Result<f64, SaturationError> {
    check_eta(eta)?;
    let small_signal = match model {
        AmplifierModel::SaturatingTanh { g0, .. } => *g0,
        AmplifierModel::LinearInsensitive { g } => *g,
        AmplifierModel::PhaseSensitive { g, r_s, .. } => g * r_s.exp(),
    };
    Ok(eta.sqrt() * small_signal)
}

/// Local contraction factor `alpha * A'(alpha) / A(alpha)` of the round-trip
/// magnitude map. At the saturated fixed point this equals the map slope
/// `sqrt(eta) * A'(alpha_ss)`, so a value `< 1` certifies local stability;
/// as `alpha -> 0` it tends to 1 (linear regime).
pub fn stability_margin(
    model: &AmplifierModel,
    eta: f64,
    alpha: f64,
) -> Result<f64, SaturationError> {
    check_eta(eta)?;
    let response = tanh_response(model, "stability_margin")?;
    Ok(stability_margin_of(&response, alpha))
}

/// Trait-generic form of [`stability_margin`].
pub fn stability_margin_of<R: SaturatingResponse + ?Sized>(response: &R, alpha: f64) -> f64 {
    if alpha == 0.0 {
        // Limit of alpha * A'(alpha) / A(alpha) in the linear regime.
        return 1.0;
    }
    alpha * response.slope(alpha) / response.respond(alpha)
}

/// Finds the saturated operating point of a model-described loop. See
/// [`steady_state_of`] for the solver contract.
pub fn steady_state_amplitude(
    model: &AmplifierModel,
    eta: f64,
    tol: f64,
) -> Result<SteadyState, SaturationError> {
    let response = tanh_response(model, "steady_state_amplitude")?;
    steady_state_of(&response, eta, tol)
}

/// Solves `sqrt(eta) * A(alpha) = alpha` for the positive steady amplitude of
/// any saturating response.
///
/// All roots lie in `(0, sqrt(eta) * saturated_level]` since
/// `A < saturated_level`. That bracket is scanned for sign changes of
/// `f(alpha) = sqrt(eta) * A(alpha) - alpha`; zero sign changes means only
/// the zero fixed point exists (`NoPositiveRoot`), more than one means the
/// response violates the implicit uniqueness assumption and every root is
/// reported (`MultipleRoots`). The unique root is refined by bisection to a
/// width near `tol`, then polished with Newton steps using the response
/// slope.
pub fn steady_state_of<R: SaturatingResponse + ?Sized>(
    response: &R,
    eta: f64,
    tol: f64,
) -> Result<SteadyState, SaturationError> {
    check_eta(eta)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SaturationError::InvalidTolerance(tol));
    }

    let sqrt_eta = eta.sqrt();
    // Gain at or below loss: the zero state is the only fixed point. The
    // check must precede the scan because at the marginal point the map is
    // numerically indistinguishable from the identity near zero.
    let growth = sqrt_eta * response.small_signal_gain();
    if growth <= 1.0 {
        return Err(SaturationError::NoPositiveRoot { growth });
    }
    let f = |alpha: f64| sqrt_eta * response.respond(alpha) - alpha;
    let hi = sqrt_eta * response.saturated_level() * (1.0 + 1e-9);
    // Small enough that f's sign reflects the small-signal regime, without
    // picking up the trivial root at zero.
    let lo = hi * 1e-9;

    let mut brackets = Vec::new();
    let step = (hi - lo) / ROOT_SCAN_INTERVALS as f64;
    let mut prev_x = lo;
    let mut prev_f = f(lo);
    for i in 1..=ROOT_SCAN_INTERVALS {
        let x = lo + step * i as f64;
        let fx = f(x);
        if prev_f == 0.0 {
            brackets.push((prev_x, prev_x));
        } else if prev_f * fx < 0.0 {
            brackets.push((prev_x, x));
        }
        prev_x = x;
        prev_f = fx;
    }

    match brackets.len() {
        0 => Err(SaturationError::NoPositiveRoot {
            growth: sqrt_eta * response.small_signal_gain(),
        }),
        1 => {
            let (a, b) = brackets[0];
            let alpha_ss = refine_root(response, sqrt_eta, a, b, tol)?;
            let a_val = response.respond(alpha_ss);
            Ok(SteadyState {
                alpha_ss,
                g_linear: a_val / alpha_ss,
                contraction: alpha_ss * response.slope(alpha_ss) / a_val,
            })
        }
        _ => {
            let roots = brackets
                .into_iter()
                .map(|(a, b)| refine_root(response, sqrt_eta, a, b, tol))
                .collect::<Result<Vec<_>, _>>()?;
            Err(SaturationError::MultipleRoots { roots })
        }
    }
}

/// Bisection to roughly `tol`, then Newton polish towards machine precision.
/// The Newton steps matter: downstream checks divide by the root, so its
/// error must be well below `tol` for derived quantities to hold at `tol`.
fn refine_root<R: SaturatingResponse + ?Sized>(
    response: &R,
    sqrt_eta: f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<f64, SaturationError> {
    let f = |alpha: f64| sqrt_eta * response.respond(alpha) - alpha;
    if a == b {
        return Ok(a);
    }
    let mut fa = f(a);
    if fa == 0.0 {
        return Ok(a);
    }

    let mut iters = 0usize;
    while (b - a) > 0.25 * tol * b.abs().max(1.0) && iters < MAX_REFINE_ITERS {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
        iters += 1;
    }

    let mut alpha = 0.5 * (a + b);
    for _ in 0..4 {
        let fx = f(alpha);
        let dfx = sqrt_eta * response.slope(alpha) - 1.0;
        if dfx == 0.0 {
            break;
        }
        let next = alpha - fx / dfx;
        // Reject Newton steps that leave the bracket; bisected midpoint is
        // already within tol, so this is polish only.
        if next.is_finite() && next > a && next < b {
            alpha = next;
        } else {
            break;
        }
    }

    let residual = f(alpha).abs();
    if residual <= tol * alpha.abs().max(1.0) {
        Ok(alpha)
    } else {
        Err(SaturationError::ToleranceNotMet { alpha, residual })
    }
}

/// Iterates the classical round-trip magnitude map
/// `alpha_{k+1} = sqrt(eta) * |A(alpha_k)|`, returning the trajectory
/// `alpha_0 ..= alpha_n` (length `n + 1`).
pub fn iterate_loop_map(
    model: &AmplifierModel,
    eta: f64,
    alpha0: f64,
    n: usize,
) -> Result<Vec<f64>, SaturationError> {
    let response = tanh_response(model, "iterate_loop_map")?;
    check_eta(eta)?;
    Ok(iterate_loop_map_of(&response, eta, alpha0, n))
}

/// Trait-generic form of [`iterate_loop_map`].
pub fn iterate_loop_map_of<R: SaturatingResponse + ?Sized>(
    response: &R,
    eta: f64,
    alpha0: f64,
    n: usize,
) -> Vec<f64> {
    let sqrt_eta = eta.sqrt();
    let mut trajectory = Vec::with_capacity(n + 1);
    trajectory.push(alpha0);
    let mut alpha = alpha0;
    for _ in 0..n {
        alpha = sqrt_eta * response.respond(alpha).abs();
        trajectory.push(alpha);
    }
    trajectory
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const TANH_4: AmplifierModel = AmplifierModel::SaturatingTanh { g0: 4.0, a_inf: 1.0 };

    #[test]
    fn gain_evaluation_matches_direct_tanh() {
        assert_eq!(evaluate_gain(&TANH_4, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            evaluate_gain(&TANH_4, 0.25).unwrap(),
            1.0f64.tanh(),
            max_relative = 1e-15
        );
        assert_relative_eq!(evaluate_gain(&TANH_4, 1e3).unwrap(), 1.0, max_relative = 1e-12);
        // Odd in x.
        assert_eq!(
            evaluate_gain(&TANH_4, 0.3).unwrap(),
            -evaluate_gain(&TANH_4, -0.3).unwrap()
        );
        assert!(matches!(
            evaluate_gain(&AmplifierModel::LinearInsensitive { g: 2.0 }, 1.0),
            Err(SaturationError::WrongVariant { .. })
        ));
    }

    #[test]
    fn steady_state_pins_gain_to_loss() {
        let ss = steady_state_amplitude(&TANH_4, 0.25, 1e-10).unwrap();
        assert_abs_diff_eq!(ss.alpha_ss, 0.4788, epsilon = 1e-3);
        // Root equation residual and the gain = loss identity.
        assert_abs_diff_eq!(
            0.5 * (4.0f64 * ss.alpha_ss).tanh(),
            ss.alpha_ss,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(ss.g_linear * 0.25f64.sqrt(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ss.contraction, 0.166, epsilon = 1e-3);
        assert!(ss.contraction < 1.0);
    }

    #[test]
    fn gain_below_loss_has_no_positive_root() {
        let low = AmplifierModel::SaturatingTanh { g0: 1.5, a_inf: 1.0 };
        match steady_state_amplitude(&low, 0.25, 1e-10) {
            Err(SaturationError::NoPositiveRoot { growth }) => {
                assert_abs_diff_eq!(growth, 0.75, epsilon = 1e-15)
            }
            other => panic!("expected NoPositiveRoot, got {other:?}"),
        }
        // Marginal case g0 = 1/sqrt(eta): zero is the only fixed point.
        let marginal = AmplifierModel::SaturatingTanh { g0: 2.0, a_inf: 1.0 };
        assert!(matches!(
            steady_state_amplitude(&marginal, 0.25, 1e-10),
            Err(SaturationError::NoPositiveRoot { .. })
        ));
    }

    #[test]
    fn zero_point_growth_is_loss_weighted_small_signal_gain() {
        assert_abs_diff_eq!(zero_point_growth(&TANH_4, 0.25).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(zero_point_growth(&TANH_4, 1.0).unwrap(), 4.0, epsilon = 1e-15);
        let marginal = AmplifierModel::SaturatingTanh { g0: 2.0, a_inf: 1.0 };
        assert_abs_diff_eq!(zero_point_growth(&marginal, 0.25).unwrap(), 1.0, epsilon = 1e-15);
        let ps = AmplifierModel::PhaseSensitive { g: 1.0, r_s: (2.0f64).ln(), phi_s: 0.0 };
        assert_abs_diff_eq!(zero_point_growth(&ps, 0.25).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn contraction_decreases_deeper_into_saturation() {
        let ss = steady_state_amplitude(&TANH_4, 0.25, 1e-10).unwrap();
        let at_root = stability_margin(&TANH_4, 0.25, ss.alpha_ss).unwrap();
        let deeper = stability_margin(&TANH_4, 0.25, 2.0 * ss.alpha_ss).unwrap();
        assert!(deeper < at_root);
        // Boundary behavior: contraction -> 1 in the linear regime.
        assert_abs_diff_eq!(stability_margin(&TANH_4, 0.25, 1e-9).unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(stability_margin(&TANH_4, 0.25, 0.0).unwrap(), 1.0);
        // At the fixed point the contraction equals the map slope.
        assert_relative_eq!(
            at_root,
            0.25f64.sqrt() * 4.0 * (1.0 - (4.0 * ss.alpha_ss).tanh().powi(2)),
            max_relative = 1e-9
        );
    }

    #[test]
    fn loop_map_iteration_converges_to_steady_state() {
        let ss = steady_state_amplitude(&TANH_4, 0.25, 1e-12).unwrap();
        let traj = iterate_loop_map(&TANH_4, 0.25, 1e-6, 100).unwrap();
        assert_eq!(traj.len(), 101);
        assert_abs_diff_eq!(*traj.last().unwrap(), ss.alpha_ss, epsilon = 1e-9);
        // Early-phase growth factor per round trip matches zero-point growth.
        assert_relative_eq!(traj[5] / traj[4], 2.0, max_relative = 1e-3);

        let fixed = iterate_loop_map(&TANH_4, 0.25, ss.alpha_ss, 10).unwrap();
        for v in &fixed {
            assert_abs_diff_eq!(*v, ss.alpha_ss, epsilon = 1e-10);
        }
        let zero = iterate_loop_map(&TANH_4, 0.25, 0.0, 10).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    /// Odd, monotone, saturating, but with an S-shaped second rise: the loop
    /// map has three positive fixed points and the solver must refuse to
    /// guess.
    struct TwoPlateau;

    impl SaturatingResponse for TwoPlateau {
        fn respond(&self, x: f64) -> f64 {
            (5.0 * x).tanh() + 2.5 * ((3.0 * (x - 2.0)).tanh() + (3.0 * (x + 2.0)).tanh())
        }

        fn slope(&self, x: f64) -> f64 {
            let s = |y: f64| 1.0 - y.tanh().powi(2);
            5.0 * s(5.0 * x) + 7.5 * (s(3.0 * (x - 2.0)) + s(3.0 * (x + 2.0)))
        }

        fn small_signal_gain(&self) -> f64 {
            self.slope(0.0)
        }

        fn saturated_level(&self) -> f64 {
            6.0
        }
    }

    #[test]
    fn multiple_fixed_points_are_surfaced_not_guessed() {
        match steady_state_of(&TwoPlateau, 0.64, 1e-10) {
            Err(SaturationError::MultipleRoots { roots }) => {
                assert_eq!(roots.len(), 3, "expected three fixed points, got {roots:?}");
                // Each reported root satisfies the fixed-point equation.
                for r in roots {
                    assert_abs_diff_eq!(0.8 * TwoPlateau.respond(r), r, epsilon = 1e-8);
                }
            }
            other => panic!("expected MultipleRoots, got {other:?}"),
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(matches!(
            steady_state_amplitude(&TANH_4, 0.0, 1e-10),
            Err(SaturationError::InvalidEta(_))
        ));
        assert!(matches!(
            steady_state_amplitude(&TANH_4, 0.25, 0.0),
            Err(SaturationError::InvalidTolerance(_))
        ));
    }
}
