//! Subcommand behaviour, exit codes and the determinism contract.

use std::path::PathBuf;
use std::process::Command;

use proptest::prelude::*;

use qhall_cli::commands::{compute, CsvRow, RowOutcome};
use qhall_cli::{fit_csv, read_csv, selftest, verify, write_csv, CliError, RunConfig, SelftestOptions, VerifyHooks};
use qhall_core::geometry::ScenarioConfig;
use qhall_core::graded_det::SignMode;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qhall"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("qhall-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d.join(name)
}

fn sphere(p_min: u32, p_max: u32) -> RunConfig {
    let mut c = RunConfig::sphere_default();
    c.run.p_min = p_min;
    c.run.p_max = p_max;
    c
}

fn quick_selftest() -> SelftestOptions {
    SelftestOptions { point_sets: 2, complexes: 20, ..SelftestOptions::default() }
}

/// `Σ_j log(j!(p-j)!/(2π(p+1)!))` for the round sphere in the monomial basis.
fn beta_log_z(p: u32) -> f64 {
    let lf = |n: u32| (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
    let two_pi = 2.0 * std::f64::consts::PI;
    (0..=p).map(|j| lf(j) + lf(p - j) - lf(p + 1) - two_pi.ln()).sum()
}

#[test]
fn selftest_passes_by_default() {
    let r = selftest(&quick_selftest()).unwrap();
    assert!(r.pass, "{:?}", r.first_failure());
}

#[test]
fn selftest_catches_flipped_koszul_rule() {
    let r = selftest(&SelftestOptions { sign_mode: SignMode::FlippedSwap, ..quick_selftest() }).unwrap();
    assert!(!r.pass);
    assert_eq!(r.first_failure().unwrap().name, "graded determinant laws");
}

#[test]
fn selftest_rejects_insufficient_precision() {
    let e = selftest(&SelftestOptions { digits: 16, tolerance: 1e-30, ..quick_selftest() }).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("precision insufficient"));
    let out = bin().args(["selftest", "--precision-digits", "16", "--tolerance", "1e-30"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precision insufficient"));
}

#[test]
fn sphere_rows_match_beta_formula() {
    let rows = compute(&sphere(1, 4)).unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let row = r.row();
        assert_eq!(row.method, "closed-form");
        assert_eq!(row.n_p, row.p as usize + 1);
        assert!((row.log_z - beta_log_z(row.p)).abs() < 1e-12, "p={}", row.p);
    }
}

#[test]
fn torus_rows_use_the_transition_route() {
    let mut c = RunConfig::torus_default(0.0, 1.0);
    c.run.p_min = 1;
    c.run.p_max = 4;
    for r in compute(&c).unwrap() {
        let row = r.row();
        assert_eq!(row.method, "transition");
        assert_eq!(row.n_p, row.p as usize);
    }
}

#[test]
fn invalid_modulus_is_a_config_error() {
    let mut c = RunConfig::torus_default(0.0, 1.0);
    c.scenario.tau_im = -1.0;
    let e = compute(&c).unwrap_err();
    assert!(matches!(e, CliError::Config(_)), "{e}");
    assert_eq!(e.exit_code(), 2);
    let path = scratch("bad.toml");
    std::fs::write(&path, "[scenario]\ngenus = 1\ntau_im = 0.0\n").unwrap();
    let out = bin().args(["compute", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wrong_predictor_frame_flags_a2() {
    let c = sphere(8, 32);
    assert!(verify(&c, &VerifyHooks::default()).unwrap().pass);
    let r = verify(&c, &VerifyHooks { predictor_s_d_l: Some([2.0, 0.0]) }).unwrap();
    assert!(!r.pass);
    assert!(r.flagged.contains(&"a2"), "{:?}", r.flagged);
    let a2 = r.comparison("a2").unwrap();
    assert!((a2.delta + 2f64.ln()).abs() < 1e-6, "{}", a2.delta);
}

#[test]
fn verify_exit_codes_through_the_binary() {
    let path = scratch("sphere.toml");
    let out = bin().args(["init", "--out"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("natural logarithms") && text.contains("dv = omega / 2pi"));
    let out = bin().args(["verify", "--p-max", "32", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["pass"], true);
    assert!(rep["free"]["coefficients"]["b1"].is_number());
    assert!(rep["pinned"]["coefficients"]["a0"].is_number());
    let out = bin().args(["verify", "--p-min", "8", "--p-max", "10", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_are_reproducible() {
    let path = scratch("repro.toml");
    std::fs::write(&path, qhall_cli::config::template(1)).unwrap();
    let run = |args: &[&str]| {
        let out = bin().args(args).arg("--config").arg(&path).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run(&["compute", "--p-min", "1", "--p-max", "5"]);
    let b = run(&["compute", "--p-min", "1", "--p-max", "5"]);
    assert_eq!(a, b);
    let a = run(&["predict"]);
    let b = run(&["predict"]);
    assert_eq!(a, b);
}

#[test]
fn fit_reads_computed_csv() {
    let c = sphere(8, 40);
    let rows: Vec<CsvRow> = compute(&c).unwrap().iter().map(RowOutcome::row).collect();
    let path = scratch("series.csv");
    write_csv(std::fs::File::create(&path).unwrap(), &rows).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back, rows);
    let (prot, samples) = fit_csv(&c, &back).unwrap();
    assert_eq!(samples.len(), 33);
    assert!((prot.free.coefficients.b1 + 0.5).abs() < 1e-3);
    assert!((prot.free.coefficients.b0 + 2.0 / 3.0).abs() < 5e-2);
    let mut res = Vec::new();
    qhall_cli::write_residuals(&mut res, &samples, &prot).unwrap();
    let text = String::from_utf8(res).unwrap();
    assert!(text.starts_with("p,log_Z,remainder_free,remainder_pinned"));
    // the remainder after the fitted expansion is the fitted nuisance tail
    let nuis = |rep: &qhall_core::asymptotics::FitReport, p: f64| -> f64 {
        rep.nuisance
            .iter()
            .map(|(n, c)| match n.as_str() {
                "log_p_over_p" => c * p.ln() / p,
                "inv_p" => c / p,
                other => panic!("unexpected nuisance term {other}"),
            })
            .sum()
    };
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let slack = |rep: &qhall_core::asymptotics::FitReport| rep.max_abs_residual + 1e-9;
        assert!((v[2] - nuis(&prot.free, v[0])).abs() <= slack(&prot.free), "{v:?}");
        assert!((v[3] - nuis(&prot.pinned, v[0])).abs() <= slack(&prot.pinned), "{v:?}");
    }
}

#[test]
fn unresolved_rows_block_fitting() {
    let c = sphere(8, 16);
    let mut rows: Vec<CsvRow> = compute(&c).unwrap().iter().map(RowOutcome::row).collect();
    rows[3] = RowOutcome::Unresolved { p: rows[3].p, n_p: rows[3].n_p, message: String::new() }.row();
    let e = fit_csv(&c, &rows).unwrap_err();
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn torsion_report_on_flat_torus() {
    let mut c = RunConfig::torus_default(0.0, 1.0);
    c.run.p_min = 4;
    c.run.p_max = 12;
    let r = qhall_cli::torsion(&c).unwrap();
    assert!(r.pass);
    for row in &r.landau {
        assert!((row.two_tau_p - row.leading).abs() < 1e-10);
    }
    let fit = r.fit.unwrap();
    assert!((fit.c1 - 0.5).abs() < 1e-8);
    let mut s = c.clone();
    s.scenario = ScenarioConfig::sphere();
    let r = qhall_cli::torsion(&s).unwrap();
    assert!(r.landau.is_empty() && r.pass);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn csv_rows_round_trip_bit_for_bit(p in 1u32..500, log_z in -1e6f64..1e6, err in 0.0f64..1.0, bits in 64u32..4000, nodes in 0usize..100000) {
        let row = CsvRow { p, n_p: p as usize, log_z, method: "quadrature".into(), precision_bits: bits, quad_nodes: nodes, est_error: err };
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&row)).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let back: CsvRow = rd.deserialize().next().unwrap().unwrap();
        prop_assert_eq!(back.log_z.to_bits(), row.log_z.to_bits());
        prop_assert_eq!(back, row);
    }

    #[test]
    fn config_rejects_nonpositive_tolerances(t in -1.0f64..=0.0) {
        let text = format!("[scenario]\ngenus = 0\n[verify]\na2 = {{ tol = {t:?} }}\n");
        prop_assert!(RunConfig::from_toml(&text).is_err());
    }
}
