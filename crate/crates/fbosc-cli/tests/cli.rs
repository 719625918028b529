//! End-to-end tests of the `fbosc` binary: exit codes, CSV format,
//! determinism, seed handling, and agreement between the simulator's PSDs
//! and the closed-form spectra.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fbosc")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Runs the binary with a scrubbed environment so ambient FBOSC_SEED cannot
/// leak into the tests.
fn run_with<I, K, V>(args: &[&str], envs: I) -> Output
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<std::ffi::OsStr>,
    V: AsRef<std::ffi::OsStr>,
{
    Command::new(bin())
        .env_remove("FBOSC_SEED")
        .envs(envs)
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn run(args: &[&str]) -> Output {
    run_with(args, std::iter::empty::<(&str, &str)>())
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code (killed by signal?)")
}

/// Parses one of our CSVs: '#' comment lines, one column-name line, rows.
fn read_csv(path: &Path) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let raw = std::fs::read_to_string(path).expect("CSV should exist");
    let mut comments = Vec::new();
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for line in raw.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            comments.push(comment.trim().to_string());
        } else if columns.is_empty() {
            columns = line.split(',').map(str::to_string).collect();
        } else {
            rows.push(
                line.split(',')
                    .map(|cell| cell.parse::<f64>().expect("numeric cell"))
                    .collect(),
            );
        }
    }
    (comments, columns, rows)
}

fn column(columns: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let idx = columns.iter().position(|c| c == name).unwrap_or_else(|| {
        panic!("column {name} not found in {columns:?}");
    });
    rows.iter().map(|r| r[idx]).collect()
}

#[test]
fn inspect_prints_operating_point() {
    let out = run(&["inspect", fixture("vacuum.json").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("alpha_ss        0.47875"), "{text}");
    assert!(text.contains("g_linear        2"), "{text}");
    assert!(text.contains("r_max           0.6931471805599453"), "{text}");
    assert!(text.contains("s_phidot"), "{text}");
}

#[test]
fn inspect_covariance_flag_prints_4x4_csv() {
    let out = run(&[
        "inspect",
        fixture("squeezed_12db.json").to_str().unwrap(),
        "--covariance",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rows q0, p0, qG, pG"), "{text}");
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| l.contains(',') && !l.contains(' '))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4, "{text}");
    assert!(rows.iter().all(|r| r.len() == 4), "{text}");
    // 12 dB phase squeezing on both inputs: Vqq = e^{2r}/2, Vpp = e^{-2r}/2.
    let r = 12.0f64 / 20.0 * std::f64::consts::LN_10;
    assert!((rows[0][0] - 0.5 * (2.0 * r).exp()).abs() < 1e-12, "{text}");
    assert!((rows[1][1] - 0.5 * (-2.0 * r).exp()).abs() < 1e-12, "{text}");
    assert_eq!(rows[0][1], 0.0);
    // Symmetric matrix.
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            assert_eq!(*cell, rows[j][i], "{text}");
        }
    }
}

#[test]
fn inspect_rejects_gain_below_loss() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("below.json");
    std::fs::write(
        &path,
        r#"{"eta": 0.25, "tau": 1.0, "alpha_sq": 1.0,
           "amplifier": {"saturating_tanh": {"g0": 1.5, "a_inf": 1.0}}}"#,
    )
    .unwrap();
    let out = run(&["inspect", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("GainBelowLoss"), "{}", stderr(&out));
}

#[test]
fn spectrum_csv_reruns_byte_identical_with_required_header() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let mut captures: Vec<Vec<u8>> = Vec::new();
    for _ in 0..2 {
        let out = run(&[
            "spectrum",
            fixture("squeezed_12db.json").to_str().unwrap(),
            "--omega-min",
            "1e-3",
            "--omega-max",
            "3.0",
            "--points",
            "64",
            "--out",
            a.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
        captures.push(std::fs::read(&a).unwrap());
    }
    assert_eq!(captures[0], captures[1], "rerun of the same command must be byte-identical");

    let (comments, columns, rows) = read_csv(&a);
    assert!(comments.iter().any(|c| c.starts_with("tool: fbosc")));
    assert!(comments.iter().any(|c| c.starts_with("manifest: ")));
    assert!(comments.iter().any(|c| c.starts_with("config: ")));
    assert!(comments.iter().any(|c| c.starts_with("convention: ")));
    assert!(comments.iter().any(|c| c.starts_with("units: ")));
    assert_eq!(columns[0], "omega_rad_s");
    assert_eq!(rows.len(), 64);
    // The product respects the Heisenberg floor everywhere on the grid.
    let product = column(&columns, &rows, "product");
    assert!(product.iter().all(|p| *p >= 0.25 - 1e-9));

    // The manifest records the hash embedded in the CSV.
    let manifest = std::fs::read_to_string(dir.path().join("a.manifest.json")).unwrap();
    let hash_line = comments.iter().find(|c| c.starts_with("manifest: ")).unwrap();
    let hash = hash_line.trim_start_matches("manifest: ");
    assert!(manifest.contains(hash));
}

#[test]
fn spectrum_grid_through_pole_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "spectrum",
        fixture("vacuum.json").to_str().unwrap(),
        "--absolute",
        "--spacing",
        "linear",
        "--omega-min",
        "3.141592653589793",
        "--omega-max",
        "6.283185307179586",
        "--points",
        "2",
        "--out",
        dir.path().join("pole.csv").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3);
    assert!(stderr(&out).contains("pole"), "{}", stderr(&out));
}

/// Monte Carlo PSDs agree with the closed-form spectra: the same comparison
/// the library acceptance suite performs, exercised end to end through CSVs.
#[test]
fn simulate_psd_matches_spectrum_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("mc");
    let out = run(&[
        "simulate",
        fixture("vacuum.json").to_str().unwrap(),
        "--psd",
        "--steps",
        "131072",
        "--warmup-trips",
        "160",
        "--trajectories",
        "16",
        "--segment-len",
        "8192",
        "--seed",
        "11",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));

    let (_, qcols, qrows) = read_csv(&dir.path().join("mc_psd_q.csv"));
    let (_, pcols, prows) = read_csv(&dir.path().join("mc_psd_p.csv"));
    let freqs = column(&qcols, &qrows, "omega_rad_s");
    let q_psd = column(&qcols, &qrows, "psd");
    let p_psd = column(&pcols, &prows, "psd");

    // Comparison band away from both the carrier pole and the Nyquist edge.
    let band: Vec<usize> = (0..freqs.len())
        .filter(|&i| freqs[i] >= 0.2 && freqs[i] <= 1.0)
        .collect();
    assert!(band.len() >= 50, "only {} bins in band", band.len());

    let spec_path = dir.path().join("closed.csv");
    let first = format!("{}", freqs[band[0]]);
    let last = format!("{}", freqs[*band.last().unwrap()]);
    let out = run(&[
        "spectrum",
        fixture("vacuum.json").to_str().unwrap(),
        "--spacing",
        "linear",
        "--omega-min",
        &first,
        "--omega-max",
        &last,
        "--points",
        &band.len().to_string(),
        "--out",
        spec_path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let (_, scols, srows) = read_csv(&spec_path);
    let sqq = column(&scols, &srows, "sqq");
    let spp = column(&scols, &srows, "spp");
    assert_eq!(srows.len(), band.len());

    for (sim, exact, label) in [(&q_psd, &sqq, "q"), (&p_psd, &spp, "p")] {
        let mut sum_sq = 0.0;
        for (k, &i) in band.iter().enumerate() {
            let rel = (sim[i] - exact[k]) / exact[k];
            sum_sq += rel * rel;
        }
        let rms = (sum_sq / band.len() as f64).sqrt();
        assert!(rms < 0.10, "quadrature {label}: RMS rel deviation {rms:.3}");
    }
}

#[test]
fn simulate_run_shorter_than_warmup_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        fixture("vacuum.json").to_str().unwrap(),
        "--steps",
        "1000",
        "--warmup-trips",
        "160",
        "--out",
        dir.path().join("short").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 4);
    assert!(stderr(&out).contains("simulation failed"), "{}", stderr(&out));
}

#[test]
fn startup_trajectory_converges_to_closed_form_root() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("st");
    let out = run(&[
        "simulate",
        fixture("vacuum.json").to_str().unwrap(),
        "--startup",
        "--steps",
        "500",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let (comments, columns, rows) = read_csv(&dir.path().join("st_startup.csv"));
    let closed: f64 = comments
        .iter()
        .find_map(|c| c.strip_prefix("closed_form_alpha_ss: "))
        .expect("closed-form comment")
        .parse()
        .unwrap();
    let alpha = column(&columns, &rows, "alpha");
    assert!((alpha.last().unwrap() - closed).abs() <= 1e-9 * closed);
}

#[test]
fn verify_all_builtin_passes() {
    let out = run(&["verify", "--all-builtin"]);
    assert_eq!(exit_code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    for check in [
        "commutator_identity",
        "heisenberg_floor",
        "bound_ordering",
        "cross_path_equality",
        "epr_minimum",
        "decomposition_round_trip",
        "config_validation",
        "covariance_validity",
        "uncertainty_floor",
    ] {
        assert!(text.contains(check), "missing {check} in:\n{text}");
    }
    assert!(text.contains("0.2500"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn verify_corrupted_covariance_exits_1_naming_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corrupt.json");
    // Sub-Heisenberg in-coupled mode: Vq0*Vp0 = 0.0025 < 1/4.
    std::fs::write(
        &path,
        r#"{"eta": 0.25, "tau": 1.0, "alpha_sq": 1.0,
           "amplifier": {"linear_insensitive": {"g": 2.0}},
           "covariance": [[0.05, 0, 0, 0], [0, 0.05, 0, 0],
                          [0, 0, 0.5, 0], [0, 0, 0, 0.5]]}"#,
    )
    .unwrap();
    let out = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let text = stdout(&out);
    let line = text
        .lines()
        .find(|l| l.contains("covariance_validity"))
        .expect("check line present");
    assert!(line.starts_with("FAIL"), "{line}");
}

#[test]
fn verify_output_is_deterministic() {
    let a = run(&["verify", "--all-builtin", "--seed", "5"]);
    let b = run(&["verify", "--all-builtin", "--seed", "5"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn decompose_factors_and_rejects() {
    let out = run(&["decompose", "--big-g", "5", "--small-g", "3"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("g_cal = 4"), "{text}");
    assert!(text.contains("r     = 0.6931471805599453"), "{text}");

    let out = run(&["decompose", "--big-g", "2", "--small-g", "0"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("g_cal = 2"), "{text}");
    assert!(text.contains("r     = 0"), "{text}");

    let out = run(&["decompose", "--big-g", "1", "--small-g", "2"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn env_seed_overrides_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("vacuum.json");
    // Data rows only: the header's manifest hash covers the output path,
    // which differs between the runs by construction.
    let series_data = |name: &str, seed_flag: &str, env_seed: Option<&str>| -> Vec<Vec<f64>> {
        let prefix = dir.path().join(name);
        let args = [
            "simulate",
            config.to_str().unwrap(),
            "--steps",
            "4096",
            "--warmup-trips",
            "20",
            "--seed",
            seed_flag,
            "--out",
            prefix.to_str().unwrap(),
        ];
        let out = match env_seed {
            Some(v) => run_with(&args, [("FBOSC_SEED", v)]),
            None => run(&args),
        };
        assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
        let (_, _, rows) = read_csv(&dir.path().join(format!("{name}_series.csv")));
        rows
    };
    let flag7 = series_data("flag7", "7", None);
    let env7 = series_data("env7", "9", Some("7"));
    let flag9 = series_data("flag9", "9", None);
    assert_eq!(flag7, env7, "FBOSC_SEED must override --seed");
    assert_ne!(flag7, flag9, "different seeds must give different series");
}

#[test]
fn simulate_rejects_covariance_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cov.json");
    std::fs::write(
        &path,
        r#"{"eta": 0.25, "tau": 1.0, "alpha_sq": 1.0,
           "amplifier": {"linear_insensitive": {"g": 2.0}},
           "covariance": [[0.5, 0, 0, 0], [0, 0.5, 0, 0],
                          [0, 0, 0.5, 0], [0, 0, 0, 0.5]]}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        path.to_str().unwrap(),
        "--steps",
        "4096",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn linewidth_fit_runs_and_band_errors_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("lw");
    let config = fixture("linewidth.json");
    let base = [
        "simulate",
        config.to_str().unwrap(),
        "--linewidth",
        "--steps",
        "65536",
        "--trajectories",
        "4",
    ];
    let mut args: Vec<&str> = base.to_vec();
    let prefix_str = prefix.to_str().unwrap().to_string();
    args.extend_from_slice(&["--out", &prefix_str]);
    let out = run(&args);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("expected_fwhm"), "{}", stdout(&out));
    let (comments, _, _) = read_csv(&dir.path().join("lw_linewidth_psd.csv"));
    assert!(comments.iter().any(|c| c.starts_with("fitted_fwhm_rad_s: ")));

    let mut args: Vec<&str> = base.to_vec();
    args.extend_from_slice(&["--fit-min", "0", "--fit-max", "1e-6", "--out", &prefix_str]);
    let out = run(&args);
    assert_eq!(exit_code(&out), 5, "{}", stderr(&out));
}

#[test]
fn sweep_writes_one_csv_per_value_with_shared_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sw");
    let out = run(&[
        "sweep",
        fixture("vacuum.json").to_str().unwrap(),
        "--param",
        "eta",
        "--values",
        "0.5,0.9",
        "--points",
        "32",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let (ca, cols_a, rows_a) = read_csv(&dir.path().join("sw_eta_0.5.csv"));
    let (cb, _, rows_b) = read_csv(&dir.path().join("sw_eta_0.9.csv"));
    assert_eq!(cols_a[0], "omega_tau");
    assert_eq!(rows_a.len(), 32);
    assert_eq!(rows_b.len(), 32);
    let hash = |c: &[String]| {
        c.iter()
            .find(|line| line.starts_with("manifest: "))
            .unwrap()
            .clone()
    };
    assert_eq!(hash(&ca), hash(&cb), "one run, one manifest hash");
    assert!(dir.path().join("sw.manifest.json").exists());
}

#[test]
fn help_documents_db_convention_and_exit_codes() {
    let out = run(&["--help"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("ln(10^(dB/20))"), "{text}");
    assert!(text.contains("FBOSC_SEED"), "{text}");
    assert!(text.contains("Exit codes"), "{text}");
}
