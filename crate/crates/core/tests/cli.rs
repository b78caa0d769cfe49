mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use xcorr::cli::ingest::{self, Ingested};
use xcorr::synth::{self, MarketModel};

fn xcorr(args: &[&str]) -> Output {
    xcorr_env(args, None)
}

fn xcorr_env(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_xcorr"));
    cmd.args(args).env_remove("XCORR_SEED").env("RUST_LOG", "error");
    if let Some(s) = seed_env {
        cmd.env("XCORR_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small model file derived from a built-in preset.
fn model_file(dir: &Path, preset: &str, n: usize, t: usize) -> PathBuf {
    let m = MarketModel {
        n_assets: n,
        t_length: t,
        ..MarketModel::preset(preset).unwrap()
    };
    let path = dir.join(format!("{preset}_{n}x{t}.toml"));
    std::fs::write(&path, m.to_toml()).unwrap();
    path
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let out = xcorr(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(xcorr(&[]).status.code(), Some(2));
    assert_eq!(xcorr(&["spectrum", "--seed", "minus-one"]).status.code(), Some(2));
    assert_eq!(xcorr(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_source_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = xcorr(&["spectrum", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "usage");
}

#[test]
fn synth_export_reingests_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), "intraday", 12, 780);
    let out_dir = dir.path().join("synth");
    ok(&xcorr(&["synth", "--preset", s(&model), "--seed", "77", "--out", s(&out_dir)]));

    let m = MarketModel::from_toml(&std::fs::read_to_string(&model).unwrap())
        .unwrap()
        .with_seed(77);
    let expected = synth::generate(&m).unwrap();
    let (got, _) = ingest::ingest(&out_dir.join("panel.csv"), None, None).unwrap();
    assert_eq!(got, Ingested::Returns(expected));

    let meta = json(out_dir.join("synth.json"));
    assert_eq!(meta["model"]["seed"], 77);
    assert_eq!(meta["command"], "synth");
}

fn write_uncorrelated_prices(path: &Path, n: usize, t: usize) {
    let r = common::gaussian_panel(n, t, 61);
    let mut csv = String::from("t");
    for k in 0..n {
        write!(csv, ",P{k}").unwrap();
    }
    csv.push('\n');
    let mut logp = vec![4.0; n];
    for j in 0..=t {
        write!(csv, "{}", 34_200 + 300 * j as i64).unwrap();
        for k in 0..n {
            if j > 0 {
                logp[k] += 1e-3 * r.series(k)[j - 1];
            }
            write!(csv, ",{:e}", logp[k].exp()).unwrap();
        }
        csv.push('\n');
    }
    std::fs::write(path, csv).unwrap();
}

#[test]
fn uncorrelated_prices_report_full_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("prices.csv");
    write_uncorrelated_prices(&input, 100, 10_000);
    let out_dir = dir.path().join("spectrum");
    ok(&xcorr(&["spectrum", "--input", s(&input), "--format", "wide", "--out", s(&out_dir)]));
    let report = json(out_dir.join("spectrum.json"));
    assert!(report["overlap_fraction"].as_f64().unwrap() >= 0.99, "{}", report["overlap_fraction"]);
    assert_eq!(report["panel"]["n_assets"], 100);
    assert_eq!(report["panel"]["t_length"], 10_000);
    assert!((report["trace"].as_f64().unwrap() - 100.0).abs() < 1e-8);
}

#[test]
fn rotated_surrogate_respectrum_matches_random_matrix_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), "one_factor", 50, 20_300);
    let sur = dir.path().join("sur");
    ok(&xcorr(&["surrogate", "--preset", s(&model), "--surrogate-kind", "rotate_free", "--seed", "3", "--out", s(&sur)]));
    let spec = dir.path().join("spec");
    ok(&xcorr(&["spectrum", "--input", s(&sur.join("surrogate.csv")), "--out", s(&spec)]));
    let report = json(spec.join("spectrum.json"));
    let (lo, hi) = (
        report["bounds"]["lambda_min"].as_f64().unwrap(),
        report["bounds"]["lambda_max"].as_f64().unwrap(),
    );
    for l in report["eigenvalues"].as_array().unwrap() {
        let l = l.as_f64().unwrap();
        assert!(l >= lo - 0.05 && l <= hi + 0.05, "{l}");
    }
    let sj = json(sur.join("surrogate.json"));
    assert!(sj["original"]["eigenvalues"][0].as_f64().unwrap() > 5.0);
}

#[test]
fn flags_override_config_file_and_env_seeds_fill_in() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), "one_factor", 10, 780);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("preset = \"{}\"\nbins = 30\nseed = 5\n", s(&model))).unwrap();

    let a = dir.path().join("a");
    ok(&xcorr_env(&["elements", "--config", s(&cfg), "--bins", "40", "--out", s(&a)], Some("99")));
    let c = json(a.join("config.json"));
    assert_eq!(c["config"]["bins"], 40);
    assert_eq!(c["config"]["seed"], 5);

    let b = dir.path().join("b");
    std::fs::write(&cfg, format!("preset = \"{}\"\n", s(&model))).unwrap();
    ok(&xcorr_env(&["elements", "--config", s(&cfg), "--out", s(&b)], Some("99")));
    let c = json(b.join("config.json"));
    assert_eq!(c["config"]["seed"], 99);
    assert_eq!(c["config"]["bins"], 50);
    assert_eq!(json(b.join("elements.json"))["config_hash"], c["config_hash"]);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(xcorr(&["spectrum", "--config", s(&bad), "--out", s(&b)]).status.code(), Some(2));
}

#[test]
fn analysis_errors_exit_1_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "t,A,B\n0,1.0,2.0\n300,1.1,-2.0\n600,1.2,2.1\n").unwrap();
    let out = xcorr(&["spectrum", "--input", s(&input), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains(":3:"), "{}", err["message"]);

    let dup = dir.path().join("dup.csv");
    std::fs::write(&dup, "timestamp,asset,price\n0,A,1\n0,A,2\n").unwrap();
    let out = xcorr(&["spectrum", "--input", s(&dup), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "duplicate");
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".lock"), "").unwrap();
    let out = xcorr(&["synth", "--preset", "one_factor", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "locked");
}

#[test]
fn pipeline_stages_compose_and_label_their_plots() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), "sectors", 60, 3_900);
    let synth_dir = dir.path().join("synth");
    ok(&xcorr(&["synth", "--preset", s(&model), "--out", s(&synth_dir)]));
    let panel = synth_dir.join("panel.csv");

    let rm = dir.path().join("remove");
    ok(&xcorr(&["remove", "--input", s(&panel), "--remove-count", "3", "--out", s(&rm)]));
    let removal = json(rm.join("remove.json"));
    assert_eq!(removal["passes"].as_array().unwrap().len(), 3);
    assert_eq!(removal["stages"].as_array().unwrap().len(), 3);

    let again = dir.path().join("again");
    ok(&xcorr(&["spectrum", "--input", s(&rm.join("residuals.csv")), "--out", s(&again)]));
    let mf = dir.path().join("mfdfa");
    ok(&xcorr(&["mfdfa", "--input", s(&panel), "--eigensignals", "1,2", "--q-grid=-3:3:0.5", "--out", s(&mf)]));
    let m = json(mf.join("mfdfa.json"));
    for sig in m["signals"].as_array().unwrap() {
        let (v, l) = (sig["variance"].as_f64().unwrap(), sig["eigenvalue"].as_f64().unwrap());
        assert!((v - l).abs() / l < 1e-8);
    }
    assert_eq!(m["average"]["over"], serde_json::json!([2]));

    for d in [&rm, &again, &mf] {
        for entry in std::fs::read_dir(d).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "txt") {
                let text = std::fs::read_to_string(&path).unwrap();
                let first = text.lines().next().unwrap();
                assert!(first.starts_with("# fig") && first.contains("-analogue"), "{}", path.display());
                for line in text.lines().filter(|l| !l.starts_with('#')) {
                    assert_eq!(line.split(' ').count(), 2, "{}: {line}", path.display());
                }
            }
        }
    }
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), "one_factor", 20, 1_560);
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&xcorr(&["surrogate", "--preset", s(&model), "--surrogate-kind", "shuffle_signs", "--seed", "4", "--out", s(&out)]));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4);
    for name in names {
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    assert!(!a.join(".lock").exists());
}
