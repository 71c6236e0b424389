//! End-to-end command-line runs: every scenario, every documented exit
//! code, byte-identical replay, and worker-count invariance.

use std::fs;
use std::path::Path;

use pldc::cli::{
    main_entry, EXIT_CONFIG_INVALID, EXIT_INSTANCE_TOO_LARGE, EXIT_NEGATIVE_MASS, EXIT_OK,
};

fn run(args: &[&str]) -> i32 {
    main_entry(std::iter::once("pldc").chain(args.iter().copied()))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const CHAIN_PARAMS: &str = r#""params": { "instance": "parity-chain", "n": 3, "p": 0.25, "epsilon": 0.25, "seed": 7 }"#;

#[test]
fn help_succeeds_and_missing_args_are_config_errors() {
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["audit"]), EXIT_CONFIG_INVALID);
    assert_eq!(run(&["no-such-subcommand"]), EXIT_CONFIG_INVALID);
}

#[test]
fn missing_config_file_is_a_config_error() {
    assert_eq!(
        run(&["audit", "--config", "/nonexistent/config.json"]),
        EXIT_CONFIG_INVALID
    );
}

#[test]
fn config_missing_p_exits_config_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "scenario": "privacy-audit", "params": { "n": 3, "seed": 1 } }"#,
    );
    assert_eq!(run(&["audit", "--config", &cfg]), EXIT_CONFIG_INVALID);
}

#[test]
fn scenario_subcommand_mismatch_exits_config_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{ "scenario": "privacy-audit", {CHAIN_PARAMS} }}"#),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["match", "--config", &cfg, "--out", out.to_str().unwrap()]),
        EXIT_CONFIG_INVALID
    );
}

#[test]
fn missing_output_dir_exits_config_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{ "scenario": "privacy-audit", {CHAIN_PARAMS} }}"#),
    );
    assert_eq!(run(&["audit", "--config", &cfg]), EXIT_CONFIG_INVALID);
}

#[test]
fn incoherent_fixed_instance_params_exit_config_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "scenario": "privacy-audit",
             "params": { "instance": "parity-chain", "n": 5, "p": 0.25, "epsilon": 0.25, "seed": 7 } }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["audit", "--config", &cfg, "--out", out.to_str().unwrap()]),
        EXIT_CONFIG_INVALID
    );
}

#[test]
fn oversized_roundtrip_exits_instance_too_large() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "scenario": "codec-roundtrip",
             "params": { "n": 4, "p": 0.3, "epsilon": 0.1, "seed": 1,
                         "window": { "b": 3, "b_prime": 1, "code_len": 30 } } }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["roundtrip", "--config", &cfg, "--out", out.to_str().unwrap()]),
        EXIT_INSTANCE_TOO_LARGE
    );
}

#[test]
fn oversized_audit_scope_exits_instance_too_large() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "scenario": "privacy-audit",
             "params": { "n": 20, "p": 0.3, "epsilon": 0.1, "seed": 1,
                         "window": { "b": 8, "b_prime": 4, "code_len": 20 } } }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["audit", "--config", &cfg, "--out", out.to_str().unwrap()]),
        EXIT_INSTANCE_TOO_LARGE
    );
}

#[test]
fn parity_targets_exit_negative_mass() {
    // Odd-parity window targets are realizable yet sit outside the additive
    // family's neighborhood of uniform, so the matcher reports negative mass.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{ "scenario": "match-demo", {CHAIN_PARAMS},
                 "knobs": {{ "targets": "parity" }} }}"#
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["match", "--config", &cfg, "--out", out.to_str().unwrap()]),
        EXIT_NEGATIVE_MASS
    );
}

#[test]
fn chain_audit_scoped_to_the_ball_reports_zero_leakage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{ "scenario": "privacy-audit", {CHAIN_PARAMS},
                 "knobs": {{ "scope": "weight-bounded", "weight_bound": 1 }} }}"#
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["audit", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let audit = read_json(&out.join("audit.json"));
    assert!(audit["max_leakage"].as_f64().unwrap() <= 1e-9);
    assert_eq!(audit["scope_size"].as_u64().unwrap(), 4);
    assert!(out.join("leakage.csv").exists());
    assert!(out.join("summary.txt").exists());
    assert!(out.join("resolved_config.json").exists());
}

#[test]
fn chain_audit_over_all_words_shows_only_fallback_leakage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{ "scenario": "privacy-audit", {CHAIN_PARAMS} }}"#),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["audit", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let audit = read_json(&out.join("audit.json"));
    assert!((audit["max_leakage"].as_f64().unwrap() - 0.375).abs() < 1e-12);
    assert!(audit["non_fallback_leakage"].as_f64().unwrap() <= 1e-9);
    assert_eq!(audit["fallback_users"].as_array().unwrap().len(), 4);
}

#[test]
fn chain_roundtrip_matches_the_exact_block_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{ "scenario": "codec-roundtrip", {CHAIN_PARAMS},
                 "knobs": {{ "x": "000", "trials": 4000 }} }}"#
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["roundtrip", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let report = read_json(&out.join("roundtrip.json"));
    assert_eq!(report["branch"].as_str().unwrap(), "two-branch");
    let exact = report["exact_block_error"].as_f64().unwrap();
    assert!((exact - 7.0 / 32.0).abs() < 1e-12);
    let mc = report["mc"]["block_error"].as_f64().unwrap();
    assert!((mc - exact).abs() < 0.05, "mc {mc} vs exact {exact}");
    for e in report["exact_per_bit"].as_array().unwrap() {
        assert!((e.as_f64().unwrap() - 0.125).abs() < 1e-12);
    }
    assert!(out.join("histogram.csv").exists());
    assert!(out.join("codebook.json").exists());
}

#[test]
fn chain_match_demo_agrees_with_the_lp_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{ "scenario": "match-demo", {CHAIN_PARAMS}, "knobs": {{ "x": "010" }} }}"#
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["match", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let report = read_json(&out.join("match.json"));
    assert_eq!(report["x"].as_str().unwrap(), "010");
    assert_eq!(report["targets"].as_str().unwrap(), "expurgated");
    assert_eq!(report["eta_max_abs"].as_f64().unwrap(), 0.0);
    assert_eq!(report["lp_cross_check"], serde_json::Value::Bool(true));
    assert!(report["nonnegative_lower_bound"].as_f64().unwrap() >= -1e-12);
    assert!(out.join("distribution.json").exists());
    assert!(out.join("targets.csv").exists());
}

#[test]
fn chain_coupling_demo_reports_the_known_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{ "scenario": "coupling-demo", {CHAIN_PARAMS},
                 "knobs": {{ "k": 5, "delta": 0.6666666666666666 }} }}"#
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["couple", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let report = read_json(&out.join("coupling.json"));
    assert_eq!(report["typicality"]["typical"], serde_json::Value::Bool(true));
    for m in report["typicality"]["red_masses"].as_array().unwrap() {
        assert!((m.as_f64().unwrap() - 0.125).abs() < 1e-12);
    }
    assert_eq!(report["sweep"]["holds"], serde_json::Value::Bool(true));
    assert_eq!(report["marginals"]["max_gap"].as_f64().unwrap(), 0.0);
    let csv = fs::read_to_string(out.join("schedule.csv")).unwrap();
    assert!(csv.starts_with("block,rank,distortion,probability,shifted_start\n"));
}

#[test]
fn appendix_check_sweep_has_zero_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "scenario": "appendix-check",
             "params": { "n": 3, "p": 0.25, "epsilon": 0.25, "seed": 11 },
             "knobs": { "trials": 2000, "max_alphabet": 48 } }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["appendix", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let report = read_json(&out.join("appendix.json"));
    assert_eq!(report["violations"].as_u64().unwrap(), 0);
    assert_eq!(report["worked_example"]["conclusion_holds"], serde_json::Value::Bool(true));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    // Header plus one row per sweep.
    assert_eq!(csv.lines().count(), 2001);
    assert!(csv.starts_with("d,alpha,eps,hypothesis_lhs,hypothesis_rhs,lhs,rhs,conclusion_holds\n"));
}

#[test]
fn ensemble_study_writes_overlap_and_concentration_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "scenario": "ensemble-study",
             "params": { "n": 5, "p": 0.3, "epsilon": 0.1, "seed": 5,
                         "window": { "b": 3, "b_prime": 1, "code_len": 10 } },
             "knobs": { "trials": 40, "overlap_threshold": 3 } }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["ensemble", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let overlap = read_json(&out.join("overlap.json"));
    assert_eq!(overlap["draws"].as_u64().unwrap(), 40);
    let conc = read_json(&out.join("concentration.json"));
    assert!(conc["expected_count"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(out.join("ratios.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn replaying_the_resolved_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{ "scenario": "privacy-audit", {CHAIN_PARAMS},
                 "knobs": {{ "scope": "weight-bounded", "weight_bound": 1 }} }}"#
        ),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["audit", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let names = ["audit.json", "leakage.csv", "summary.txt", "resolved_config.json"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(out.join(n)).unwrap()).collect();
    // The resolved config pins the same output directory, so replaying it
    // without --out rewrites the artifacts in place.
    let resolved = out.join("resolved_config.json");
    assert_eq!(
        run(&["audit", "--config", resolved.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    for (name, before) in names.iter().zip(&first) {
        let after = fs::read(out.join(name)).unwrap();
        assert_eq!(&after, before, "{name} changed across replay");
    }
}

#[test]
fn worker_count_never_changes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "scenario": "ensemble-study",
             "params": { "n": 5, "p": 0.3, "epsilon": 0.1, "seed": 9,
                         "window": { "b": 3, "b_prime": 1, "code_len": 10 } },
             "knobs": { "trials": 30 } }"#,
    );
    let out1 = dir.path().join("w1");
    let out3 = dir.path().join("w3");
    assert_eq!(
        run(&["ensemble", "--config", &cfg, "--out", out1.to_str().unwrap(), "--no-timestamp", "--workers", "1"]),
        EXIT_OK
    );
    assert_eq!(
        run(&["ensemble", "--config", &cfg, "--out", out3.to_str().unwrap(), "--no-timestamp", "--workers", "3"]),
        EXIT_OK
    );
    for name in ["overlap.json", "concentration.json", "ratios.csv", "summary.txt"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out3.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across worker counts");
    }
}

#[test]
fn timestamps_appear_unless_suppressed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{ "scenario": "privacy-audit", {CHAIN_PARAMS},
                 "knobs": {{ "scope": "weight-bounded", "weight_bound": 0 }} }}"#
        ),
    );
    let with_ts = dir.path().join("ts");
    let without_ts = dir.path().join("nots");
    assert_eq!(
        run(&["audit", "--config", &cfg, "--out", with_ts.to_str().unwrap()]),
        EXIT_OK
    );
    assert_eq!(
        run(&["audit", "--config", &cfg, "--out", without_ts.to_str().unwrap(), "--no-timestamp"]),
        EXIT_OK
    );
    let summary_ts = fs::read_to_string(with_ts.join("summary.txt")).unwrap();
    let summary_no = fs::read_to_string(without_ts.join("summary.txt")).unwrap();
    assert!(summary_ts.contains("timestamp_unix_seconds:"));
    assert!(!summary_no.contains("timestamp_unix_seconds:"));
}
