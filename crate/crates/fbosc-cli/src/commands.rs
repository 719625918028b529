//! Implementations of the six subcommands.

use std::f64::consts::LN_10;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fbosc_core::gaussian::{covariance_validity, input_covariance, InputCovariance, Matrix4};
use fbosc_core::model::{
    config_digest, validate_config, AmplifierModel, FrequencyGrid, OscillatorConfig,
    ValidatedConfig,
};
use fbosc_core::saturation::steady_state_amplitude;
use fbosc_core::sim::{
    averaged_output_psd, estimate_linewidth, simulate_classical_startup, simulate_fluctuations,
    write_binary, PsdEstimate, SimMode, SimPlan,
};
use fbosc_core::spectra::{
    frequency_noise_spectrum, output_spectra_general, schawlow_townes, spectra_for_config,
    QuadratureSpectra,
};
use fbosc_core::transfer::{
    decompose_phase_sensitive, transfer_phase_sensitive, transfer_phase_sensitive_offset,
    POLE_GUARD,
};
use fbosc_core::verify::{run_builtin_checks, run_config_checks, CheckOutcome};

use crate::output::{fmt_float, CsvWriter, Manifest};
use crate::{
    effective_seed, map_sim_error, CliError, DecomposeArgs, InspectArgs, SimulateArgs, Spacing,
    SpectrumArgs, SweepArgs, SweepParam, VerifyArgs,
};

/// Configurations shipped with the binary, exercised by `verify --all-builtin`.
const FIXTURES: &[(&str, &str)] = &[
    ("vacuum", include_str!("../../../fixtures/vacuum.json")),
    ("squeezed_12db", include_str!("../../../fixtures/squeezed_12db.json")),
    ("epr_12db", include_str!("../../../fixtures/epr_12db.json")),
    (
        "phase_sensitive_pure",
        include_str!("../../../fixtures/phase_sensitive_pure.json"),
    ),
    ("linewidth", include_str!("../../../fixtures/linewidth.json")),
    ("epr_heisenberg", include_str!("../../../fixtures/epr_heisenberg.json")),
];

const SPECTRUM_COLUMNS: &str =
    "sqq,spp,product,bound_heisenberg,bound_insensitive,bound_general,s_phidot_rad2_s";
const SPECTRUM_UNITS: &str = "spectra and bounds in quanta (dimensionless, vacuum = 1/2); \
     s_phidot_rad2_s in rad^2/s";

/// Parses a config JSON that may carry a top-level `"covariance"` key (4x4
/// row-major array) overriding the covariance derived from the input params.
fn parse_config_str(
    raw: &str,
) -> Result<(OscillatorConfig, Option<InputCovariance>), CliError> {
    let mut value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| CliError::Config(format!("not valid JSON: {e}")))?;
    let covariance = match value.as_object_mut().and_then(|m| m.remove("covariance")) {
        None => None,
        Some(cov_value) => {
            let rows: [[f64; 4]; 4] = serde_json::from_value(cov_value).map_err(|e| {
                CliError::Config(format!("covariance must be a 4x4 array of numbers: {e}"))
            })?;
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let m = Matrix4::from_row_slice(&flat);
            Some(
                InputCovariance::from_matrix(m)
                    .map_err(|e| CliError::Config(format!("covariance override: {e}")))?,
            )
        }
    };
    let cfg: OscillatorConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("not a valid configuration: {e}")))?;
    Ok((cfg, covariance))
}

fn load_config(path: &Path) -> Result<(OscillatorConfig, Option<InputCovariance>), CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config_str(&raw)
        .map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
}

fn validate(cfg: OscillatorConfig) -> Result<ValidatedConfig, CliError> {
    validate_config(cfg).map_err(|errs| {
        let joined = errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        CliError::Config(joined)
    })
}

fn amplifier_summary(model: &AmplifierModel) -> String {
    match model {
        AmplifierModel::SaturatingTanh { g0, a_inf } => {
            format!("saturating_tanh (g0 = {}, a_inf = {})", fmt_float(*g0), fmt_float(*a_inf))
        }
        AmplifierModel::LinearInsensitive { g } => {
            format!("linear_insensitive (g = {})", fmt_float(*g))
        }
        AmplifierModel::PhaseSensitive { g, r_s, phi_s } => format!(
            "phase_sensitive (g = {}, r_s = {}, phi_s = {})",
            fmt_float(*g),
            fmt_float(*r_s),
            fmt_float(*phi_s)
        ),
    }
}

pub fn inspect(args: InspectArgs) -> Result<(), CliError> {
    let (cfg, covariance) = load_config(&args.config)?;
    let digest = config_digest(&cfg);
    let v = validate(cfg)?;

    println!("configuration {}", args.config.display());
    println!("  digest          {digest}");
    println!("  eta             {}", fmt_float(v.eta));
    println!("  tau             {} s", fmt_float(v.tau));
    println!("  alpha_sq        {} 1/s", fmt_float(v.alpha_sq));
    println!("  carrier_index   {}", v.carrier_index);
    println!("  omega0          {} rad/s", fmt_float(v.omega0));
    println!("  kappa           {} 1/s", fmt_float(v.kappa));
    println!("  r_max           {}", fmt_float(v.r_max));
    println!("  amplifier       {}", amplifier_summary(&v.amplifier));
    println!(
        "  input state     r0 = {}, rG = {}, rE = {}{}",
        fmt_float(v.input.r0),
        fmt_float(v.input.r_g),
        fmt_float(v.input.r_e),
        if v.input.is_vacuum() { " (vacuum)" } else { "" }
    );
    if covariance.is_some() {
        println!("  covariance      explicit override present (checked by `fbosc verify`)");
    }

    match &v.amplifier {
        AmplifierModel::SaturatingTanh { .. } => {
            let ss = steady_state_amplitude(&v.amplifier, v.eta, 1e-12)
                .map_err(|e| CliError::Config(e.to_string()))?;
            println!("operating point (saturated)");
            println!("  alpha_ss        {}", fmt_float(ss.alpha_ss));
            println!("  g_linear        {}", fmt_float(ss.g_linear));
            println!("  contraction     {}", fmt_float(ss.contraction));
        }
        _ => {
            println!("operating point (linearized)");
            println!(
                "  g_linear        {} (pinned to 1/sqrt(eta) by gain-loss balance)",
                fmt_float(1.0 / v.eta.sqrt())
            );
        }
    }

    if v.alpha_sq > 0.0 {
        let st = schawlow_townes(v.eta, v.tau, v.alpha_sq, 0.0)
            .map_err(|e| CliError::Config(e.to_string()))?;
        println!("schawlow-townes");
        println!("  s_phidot        {} rad^2/s", fmt_float(st.s_phidot));
        println!("  linewidth_fwhm  {} Hz", fmt_float(st.linewidth_fwhm));
    } else {
        println!("schawlow-townes");
        println!("  not defined: alpha_sq = 0 (no carrier)");
    }

    if args.covariance {
        // Explicit override wins, matching what verify/spectrum consume.
        let cov = covariance.unwrap_or_else(|| input_covariance(&v.input));
        println!("input covariance (rows q0, p0, qG, pG; vacuum = 0.5)");
        for row in 0..4 {
            let cells: Vec<String> =
                (0..4).map(|col| fmt_float(cov.get(row, col))).collect();
            println!("{}", cells.join(","));
        }
    }
    Ok(())
}

/// Evaluates per-point spectra for a validated config over a grid, honoring
/// an explicit covariance override when present.
fn grid_spectra(
    v: &ValidatedConfig,
    grid: &FrequencyGrid,
    covariance: Option<&InputCovariance>,
) -> Result<Vec<QuadratureSpectra>, CliError> {
    match covariance {
        None => spectra_for_config(v, grid).map_err(|e| CliError::Grid(e.to_string())),
        Some(cov) => {
            let validity =
                covariance_validity(cov).map_err(|e| CliError::Config(e.to_string()))?;
            if !validity.valid {
                return Err(CliError::Config(
                    "covariance override is unphysical; run `fbosc verify` for details".into(),
                ));
            }
            let r_s = v.amplifier.squeeze();
            grid.values()
                .iter()
                .map(|&omega| {
                    let tf = if grid.is_absolute() {
                        transfer_phase_sensitive(v.eta, v.tau, r_s, omega)
                    } else {
                        transfer_phase_sensitive_offset(v.eta, v.tau, r_s, omega)
                    }
                    .map_err(|e| CliError::Grid(e.to_string()))?;
                    Ok(output_spectra_general(&tf, cov))
                })
                .collect()
        }
    }
}

/// Frequency-noise value for one grid point; `nan` when no carrier is set.
fn s_phidot_cell(spp: f64, offset: f64, alpha_sq: f64) -> f64 {
    if alpha_sq > 0.0 {
        frequency_noise_spectrum(spp, offset, alpha_sq)
            .map(|p| p.s_phidot)
            .unwrap_or(f64::NAN)
    } else {
        f64::NAN
    }
}

fn spectra_row(omega: f64, s: &QuadratureSpectra, s_phidot: f64) -> [f64; 8] {
    [
        omega,
        s.sqq,
        s.spp,
        s.product,
        s.bounds.heisenberg,
        s.bounds.insensitive,
        s.bounds.general.unwrap_or(f64::NAN),
        s_phidot,
    ]
}

pub fn spectrum(args: SpectrumArgs) -> Result<(), CliError> {
    let (cfg, covariance) = load_config(&args.config)?;
    let digest = config_digest(&cfg);
    let v = validate(cfg)?;

    let grid = match args.spacing {
        Spacing::Log => FrequencyGrid::log_spaced(args.omega_min, args.omega_max, args.points, args.absolute),
        Spacing::Linear => {
            FrequencyGrid::linear_spaced(args.omega_min, args.omega_max, args.points, args.absolute)
        }
    }
    .map_err(|e| CliError::Grid(e.to_string()))?;
    let clearance = grid.min_pole_clearance(v.tau);
    if clearance <= POLE_GUARD {
        return Err(CliError::Grid(format!(
            "grid intersects a loop resonance (pole clearance {clearance:.3e} <= {POLE_GUARD:.0e})"
        )));
    }

    let spectra = grid_spectra(&v, &grid, covariance.as_ref())?;
    let offsets = grid.offsets_from(v.omega0);

    let mut manifest = Manifest::new("spectrum", Some(digest), None, &args)?;
    let freq_note = if args.absolute {
        "frequency column: absolute angular frequency (rad/s)"
    } else {
        "frequency column: offset from the carrier (rad/s)"
    };
    let mut csv = CsvWriter::create(
        &args.out,
        &manifest,
        SPECTRUM_UNITS,
        &[freq_note.to_string()],
        &format!("omega_rad_s,{SPECTRUM_COLUMNS}"),
    )?;
    for ((omega, offset), s) in grid.values().iter().zip(&offsets).zip(&spectra) {
        csv.row(&spectra_row(*omega, s, s_phidot_cell(s.spp, *offset, v.alpha_sq)))?;
    }
    csv.finish(&mut manifest)?;
    let manifest_path = manifest.write(&args.out)?;
    println!(
        "wrote {} ({} points) and {}",
        args.out.display(),
        grid.values().len(),
        manifest_path.display()
    );
    Ok(())
}

/// Suffixes the output prefix: `prefix` + `_name.ext`.
fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn run_startup(
    args: &SimulateArgs,
    v: &ValidatedConfig,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let plan = SimPlan {
        dt: v.tau,
        duration: args.steps,
        seed: args.seed,
        warmup: 0,
        mode: SimMode::ClassicalStartup,
    };
    let run = simulate_classical_startup(&v.amplifier, v.eta, v.tau, &plan, args.seed_amplitude)
        .map_err(map_sim_error)?;
    let ss = steady_state_amplitude(&v.amplifier, v.eta, 1e-12)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let path = suffixed(&args.out, "_startup.csv");
    let mut csv = CsvWriter::create(
        &path,
        manifest,
        "t_s in s; alpha in the amplifier's amplitude units",
        &[
            format!("converged_at_trip: {}", run.converged_at),
            format!("final_amplitude: {}", fmt_float(run.final_amplitude)),
            format!("closed_form_alpha_ss: {}", fmt_float(ss.alpha_ss)),
        ],
        "trip,t_s,alpha",
    )?;
    for (k, alpha) in run.trajectory.iter().enumerate() {
        csv.row(&[k as f64, k as f64 * v.tau, *alpha])?;
    }
    csv.finish(manifest)?;
    println!(
        "startup converged after {} trips: alpha = {} (closed form {})",
        run.converged_at,
        fmt_float(run.final_amplitude),
        fmt_float(ss.alpha_ss)
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn write_psd_csv(
    path: &Path,
    manifest: &mut Manifest,
    est: &PsdEstimate,
    quadrature: &str,
    window: &str,
) -> Result<(), CliError> {
    let mut csv = CsvWriter::create(
        path,
        manifest,
        "omega_rad_s in rad/s (offset from the carrier); psd, stderr in quanta (dimensionless)",
        &[
            format!("quadrature: {quadrature}"),
            format!("window: {window}"),
            format!("n_segments: {}", est.n_segments),
            format!("rel_stderr: {}", fmt_float(est.rel_stderr)),
            format!("parseval_ratio: {}", fmt_float(est.parseval_ratio)),
        ],
        "omega_rad_s,psd,stderr",
    )?;
    for (omega, psd) in est.freqs.iter().zip(&est.psd) {
        csv.row(&[*omega, *psd, *psd * est.rel_stderr])?;
    }
    csv.finish(manifest)
}

fn run_fluctuations(
    args: &SimulateArgs,
    v: &ValidatedConfig,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let dt = v.tau / args.dt_div as f64;
    let warmup = args.warmup_trips * args.dt_div;
    let plan = SimPlan {
        dt,
        duration: args.steps,
        seed: args.seed,
        warmup,
        mode: SimMode::LinearFluctuations,
    };
    let window_name = match args.window {
        crate::WindowArg::Hann => "hann",
        crate::WindowArg::Rectangular => "rectangular",
    };
    let series_csv = args.series || !(args.psd || args.linewidth);

    if series_csv || args.binary {
        let series = simulate_fluctuations(v, &plan).map_err(map_sim_error)?;
        if series_csv {
            let path = suffixed(&args.out, "_series.csv");
            let mut csv = CsvWriter::create(
                &path,
                manifest,
                "t_s in s; q_out, p_out in vacuum-normalized quadrature units",
                &[
                    format!("dt_s: {}", fmt_float(dt)),
                    format!("warmup_steps: {warmup}"),
                    "trajectory_stream: 0".to_string(),
                ],
                "t_s,q_out,p_out",
            )?;
            for (i, (q, p)) in series.q_out.iter().zip(&series.p_out).enumerate() {
                csv.row(&[(warmup + i) as f64 * dt, *q, *p])?;
            }
            csv.finish(manifest)?;
            println!("wrote {} ({} samples)", path.display(), series.q_out.len());
        }
        if args.binary {
            let path = suffixed(&args.out, "_series.bin");
            let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            write_binary(&series, BufWriter::new(file))
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            manifest.record_output(&path);
            println!("wrote {}", path.display());
        }
    }

    if args.psd {
        let recorded = args.steps.saturating_sub(warmup);
        let segment = if args.segment_len == 0 { recorded } else { args.segment_len };
        let (q_est, p_est) = averaged_output_psd(
            v,
            &plan,
            args.trajectories,
            segment,
            args.overlap,
            args.window.to_window(),
        )
        .map_err(map_sim_error)?;
        let q_path = suffixed(&args.out, "_psd_q.csv");
        let p_path = suffixed(&args.out, "_psd_p.csv");
        write_psd_csv(&q_path, manifest, &q_est, "q (amplitude)", window_name)?;
        write_psd_csv(&p_path, manifest, &p_est, "p (phase)", window_name)?;
        println!(
            "wrote {} and {} ({} Welch segments from {} trajectories)",
            q_path.display(),
            p_path.display(),
            q_est.n_segments,
            args.trajectories
        );
    }

    if args.linewidth {
        let band = match (args.fit_min, args.fit_max) {
            (None, None) => None,
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => {
                return Err(CliError::Config(
                    "--fit-min and --fit-max must be given together".into(),
                ))
            }
        };
        let run = estimate_linewidth(v, &plan, args.trajectories, band).map_err(map_sim_error)?;
        let path = suffixed(&args.out, "_linewidth_psd.csv");
        let mut csv = CsvWriter::create(
            &path,
            manifest,
            "omega_rad_s in rad/s (offset from the line center); psd, stderr in s (power per rad/s of a unit-power line)",
            &[
                format!("fitted_fwhm_rad_s: {}", fmt_float(run.fitted_fwhm)),
                format!("expected_fwhm_rad_s: {}", fmt_float(run.expected_fwhm)),
                format!("fit_amplitude: {}", fmt_float(run.fit.amplitude)),
                format!("fit_floor: {}", fmt_float(run.fit.floor)),
                format!("fit_residual: {}", fmt_float(run.fit.residual)),
                format!("fit_bins: {}", run.fit.n_bins),
                format!("trajectories: {}", run.n_trajectories),
            ],
            "omega_rad_s,psd,stderr",
        )?;
        for (omega, psd) in run.psd.freqs.iter().zip(&run.psd.psd) {
            csv.row(&[*omega, *psd, *psd * run.psd.rel_stderr])?;
        }
        csv.finish(manifest)?;
        println!("linewidth (phase-envelope fit vs closed form)");
        println!("  fitted_fwhm          {:.6e} rad/s", run.fitted_fwhm);
        println!("  expected_fwhm        {:.6e} rad/s", run.expected_fwhm);
        println!("  ratio                {:.4}", run.fitted_fwhm / run.expected_fwhm);
        println!("  gamma_t_product      {:.2}", run.gamma_t_product);
        println!("  diffusion_step       {:.4} rad", run.diffusion_step);
        println!("  rms_phase_increment  {:.4} rad", run.rms_phase_increment);
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn simulate(mut args: SimulateArgs) -> Result<(), CliError> {
    args.seed = effective_seed(args.seed)?;
    let (cfg, covariance) = load_config(&args.config)?;
    if covariance.is_some() {
        return Err(CliError::Config(
            "explicit covariance overrides are only honored by `fbosc verify`".into(),
        ));
    }
    let digest = config_digest(&cfg);
    let v = validate(cfg)?;
    let mut manifest = Manifest::new("simulate", Some(digest), Some(args.seed), &args)?;
    if args.startup {
        run_startup(&args, &v, &mut manifest)?;
    } else {
        run_fluctuations(&args, &v, &mut manifest)?;
    }
    let manifest_path = manifest.write(&args.out)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

pub fn verify(mut args: VerifyArgs) -> Result<(), CliError> {
    args.seed = effective_seed(args.seed)?;
    if args.configs.is_empty() && !args.all_builtin {
        return Err(CliError::Config(
            "give at least one configuration file or --all-builtin".into(),
        ));
    }

    let mut rows: Vec<(String, CheckOutcome)> = run_builtin_checks(args.seed)
        .into_iter()
        .map(|c| ("builtin".to_string(), c))
        .collect();

    if args.all_builtin {
        for (name, raw) in FIXTURES {
            let (cfg, covariance) = parse_config_str(raw)
                .map_err(|e| CliError::Config(format!("shipped fixture {name}: {e}")))?;
            rows.extend(
                run_config_checks(&cfg, covariance.as_ref())
                    .into_iter()
                    .map(|c| (format!("fixture:{name}"), c)),
            );
        }
    }
    for path in &args.configs {
        let (cfg, covariance) = load_config(path)?;
        let label = path.display().to_string();
        rows.extend(
            run_config_checks(&cfg, covariance.as_ref())
                .into_iter()
                .map(|c| (label.clone(), c)),
        );
    }

    let source_width = rows.iter().map(|(s, _)| s.len()).max().unwrap_or(6).max(6);
    let name_width = rows.iter().map(|(_, c)| c.name.len()).max().unwrap_or(5).max(5);
    println!("{:<6} {:<source_width$} {:<name_width$} detail", "result", "source", "check");
    let mut failed = 0usize;
    for (source, check) in &rows {
        if !check.passed {
            failed += 1;
        }
        println!(
            "{:<6} {:<source_width$} {:<name_width$} {}",
            if check.passed { "PASS" } else { "FAIL" },
            source,
            check.name,
            check.detail
        );
    }
    println!(
        "summary: {}/{} checks passed (seed {})",
        rows.len() - failed,
        rows.len(),
        args.seed
    );
    if failed > 0 {
        Err(CliError::VerifyFailed { failed, total: rows.len() })
    } else {
        Ok(())
    }
}

pub fn decompose(args: DecomposeArgs) -> Result<(), CliError> {
    let d = decompose_phase_sensitive(args.big_g, args.small_g)
        .map_err(|e| CliError::Config(e.to_string()))?;
    println!("g_cal = {}", fmt_float(d.g_cal));
    println!("r     = {}", fmt_float(d.r));
    println!("r_db  = {}", fmt_float(d.r * 20.0 / LN_10));
    Ok(())
}

fn apply_sweep_param(
    cfg: &mut OscillatorConfig,
    param: SweepParam,
    value: f64,
) -> Result<(), CliError> {
    match param {
        SweepParam::Eta => cfg.eta = value,
        SweepParam::R0 => cfg.input.r0 = value,
        SweepParam::Rg => cfg.input.r_g = value,
        SweepParam::Re => cfg.input.r_e = value,
        SweepParam::Rs => match &mut cfg.amplifier {
            AmplifierModel::PhaseSensitive { r_s, .. } => *r_s = value,
            _ => {
                return Err(CliError::Config(
                    "sweeping r_s requires a phase_sensitive amplifier".into(),
                ))
            }
        },
        SweepParam::G => match &mut cfg.amplifier {
            AmplifierModel::SaturatingTanh { g0, .. } => *g0 = value,
            AmplifierModel::LinearInsensitive { g } => *g = value,
            AmplifierModel::PhaseSensitive { g, .. } => *g = value,
        },
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let (base, covariance) = load_config(&args.config)?;
    if covariance.is_some() {
        return Err(CliError::Config(
            "sweep varies input-state parameters; explicit covariance overrides are not supported"
                .into(),
        ));
    }
    if args.db && !args.param.is_squeeze() {
        return Err(CliError::Config(
            "--db applies only to squeeze parameters (r0, rg, re, rs)".into(),
        ));
    }
    let digest = config_digest(&base);
    let mut manifest = Manifest::new("sweep", Some(digest), None, &args)?;

    // tau is never swept, so the pole clearance of the fixed grid is checked once.
    let tau = base.tau;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CliError::Config(format!("tau must be positive, got {tau}")));
    }
    let grid = FrequencyGrid::linear_spaced(
        args.omega_tau_min / tau,
        args.omega_tau_max / tau,
        args.points,
        true,
    )
    .map_err(|e| CliError::Grid(e.to_string()))?;
    let clearance = grid.min_pole_clearance(tau);
    if clearance <= POLE_GUARD {
        return Err(CliError::Grid(format!(
            "grid intersects a loop resonance (pole clearance {clearance:.3e} <= {POLE_GUARD:.0e})"
        )));
    }

    for &raw in &args.values {
        let value = if args.db { raw * LN_10 / 20.0 } else { raw };
        let mut cfg = base.clone();
        apply_sweep_param(&mut cfg, args.param, value)?;
        let v = validate(cfg).map_err(|e| match e {
            CliError::Config(m) => {
                CliError::Config(format!("{} = {}: {m}", args.param.name(), fmt_float(raw)))
            }
            other => other,
        })?;
        let spectra = spectra_for_config(&v, &grid).map_err(|e| CliError::Grid(e.to_string()))?;
        let offsets = grid.offsets_from(v.omega0);

        let path = suffixed(
            &args.out,
            &format!("_{}_{}.csv", args.param.name(), fmt_float(raw)),
        );
        let mut note = format!("swept parameter: {} = {}", args.param.name(), fmt_float(value));
        if args.db {
            note.push_str(&format!(" ({} dB, r = ln(10^(dB/20)))", fmt_float(raw)));
        }
        let mut csv = CsvWriter::create(
            &path,
            &manifest,
            SPECTRUM_UNITS,
            &[
                note,
                "frequency column: absolute loop phase omega_tau = Omega * tau (dimensionless)"
                    .to_string(),
            ],
            &format!("omega_tau,{SPECTRUM_COLUMNS}"),
        )?;
        for ((omega, offset), s) in grid.values().iter().zip(&offsets).zip(&spectra) {
            csv.row(&spectra_row(
                omega * tau,
                s,
                s_phidot_cell(s.spp, *offset, v.alpha_sq),
            ))?;
        }
        csv.finish(&mut manifest)?;
        println!("wrote {}", path.display());
    }
    let manifest_path = manifest.write(&args.out)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}
