use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use noma_v2x_ffi::*;

const SHORT_RUN: &str = "stationary_duration_s = 0.032\ntravel_duration_s = 0.032\ntotal_duration_s = 0.064\n";

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { nv_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, nv_last_error_length().min(511));
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn parse(toml: &str) -> *mut NvConfig {
    let text = CString::new(toml).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { nv_config_parse(text.as_ptr(), &mut cfg) }, NvStatus::Ok, "{}", last_error());
    cfg
}

#[test]
fn version_and_doppler() {
    let v = unsafe { CStr::from_ptr(nv_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    assert!((nv_doppler_shift(0.876, 2.34e9) - 6.84).abs() <= 0.01);
}

#[test]
fn default_config_has_three_users() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { nv_config_new(&mut cfg) }, NvStatus::Ok);
    let mut n = 0usize;
    assert_eq!(unsafe { nv_config_user_count(cfg, &mut n) }, NvStatus::Ok);
    assert_eq!(n, 3);
    unsafe { nv_config_free(cfg) };
}

#[test]
fn bad_config_reports_field() {
    let text = CString::new("[allocation]\npolicy = \"fixed\"\ncoefficients = [0.5, 0.3, 0.1]").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { nv_config_parse(text.as_ptr(), &mut cfg) }, NvStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("allocation.coefficients"), "{}", last_error());

    let missing = CString::new("/nonexistent/config.toml").unwrap();
    assert_eq!(unsafe { nv_config_load(missing.as_ptr(), &mut cfg) }, NvStatus::Io);
}

#[test]
fn null_pointers_are_rejected() {
    assert_eq!(unsafe { nv_config_new(ptr::null_mut()) }, NvStatus::NullPointer);
    assert_eq!(unsafe { nv_scenario_run(ptr::null(), ptr::null_mut()) }, NvStatus::NullPointer);
    assert!(last_error().contains("config"));
    unsafe {
        nv_config_free(ptr::null_mut());
        nv_scenario_free(ptr::null_mut());
        nv_curve_free(ptr::null_mut());
        assert_eq!(nv_last_error_message(ptr::null_mut(), 0), 0);
    }
}

#[test]
fn scenario_rows_and_totals() {
    let cfg = parse(SHORT_RUN);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { nv_scenario_run(cfg, &mut run) }, NvStatus::Ok, "{}", last_error());
    let mut rows = 0usize;
    assert_eq!(unsafe { nv_scenario_row_count(run, &mut rows) }, NvStatus::Ok);
    assert_eq!(rows, 20 * 5 * 3);
    let mut row = NvSymbolMetrics {
        time_s: -1.0,
        user: 0,
        est_snr_db: 0.0,
        est_cfo_hz: 0.0,
        ber: -1.0,
        outage: true,
        detected: false,
    };
    assert_eq!(unsafe { nv_scenario_row(run, 0, &mut row) }, NvStatus::Ok);
    assert_eq!((row.time_s, row.user), (0.0, 1));
    assert!(row.detected && (0.0..=1.0).contains(&row.ber));
    assert_eq!(unsafe { nv_scenario_row(run, rows, &mut row) }, NvStatus::OutOfRange);

    let mut totals = NvStageTotals {
        bits: 0,
        errors: 0,
        frames: 0,
        lost_frames: 0,
    };
    assert_eq!(unsafe { nv_scenario_stage_totals(run, 2, false, &mut totals) }, NvStatus::Ok);
    assert_eq!(totals.frames, 10);
    assert_eq!(totals.bits + 250 * 5 * totals.lost_frames, 10 * 1250);
    assert_eq!(unsafe { nv_scenario_stage_totals(run, 0, false, &mut totals) }, NvStatus::OutOfRange);
    assert_eq!(unsafe { nv_scenario_stage_totals(run, 4, true, &mut totals) }, NvStatus::OutOfRange);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("ts.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { nv_scenario_write_timeseries(run, NvFormat::Csv, path.as_ptr()) }, NvStatus::Ok);
    let text = std::fs::read_to_string(dir.path().join("ts.csv")).unwrap();
    assert_eq!(text.lines().count(), rows + 1);
    unsafe {
        nv_scenario_free(run);
        nv_config_free(cfg);
    }
}

#[test]
fn sweep_points_sorted() {
    let cfg = parse("");
    let grid = [30.0, 20.0];
    let mut curve = ptr::null_mut();
    let status = unsafe { nv_sweep_ber(cfg, grid.as_ptr(), grid.len(), 100_000, 5, &mut curve) };
    assert_eq!(status, NvStatus::Ok, "{}", last_error());
    let mut n = 0usize;
    assert_eq!(unsafe { nv_curve_point_count(curve, &mut n) }, NvStatus::Ok);
    assert_eq!(n, 6);
    let mut p = NvBerPoint {
        snr_db: 0.0,
        user: 0,
        ber: 0.0,
        ci_low: 0.0,
        ci_high: 0.0,
        bits: 0,
        lost_frames: 0,
    };
    let mut keys = Vec::new();
    for i in 0..n {
        assert_eq!(unsafe { nv_curve_point(curve, i, &mut p) }, NvStatus::Ok);
        assert!(p.bits >= 100_000 && p.ci_low <= p.ber && p.ber <= p.ci_high);
        keys.push((p.snr_db, p.user));
    }
    assert_eq!(keys, vec![(20.0, 1), (20.0, 2), (20.0, 3), (30.0, 1), (30.0, 2), (30.0, 3)]);
    let small = unsafe { nv_sweep_ber(cfg, grid.as_ptr(), grid.len(), 10, 5, &mut curve) };
    assert_eq!(small, NvStatus::InvalidInput);
    unsafe { nv_config_free(cfg) };
}

#[test]
fn k_factor_fit() {
    let mut out = NvKFactor {
        k: 0.0,
        non_centrality: 0.0,
        scale: 0.0,
    };
    let flat = vec![1.0; 5000];
    assert_eq!(unsafe { nv_estimate_k_factor(flat.as_ptr(), flat.len(), &mut out) }, NvStatus::EstimationFailed);
    // Deterministic Rician-like sample: a strong constant plus a rotating term.
    let env: Vec<f64> = (0..20_000)
        .map(|i| {
            let a = i as f64 * 0.618_033_988_7 * std::f64::consts::TAU;
            let r = 0.3 * ((i * 7919 % 1000) as f64 / 1000.0 + 0.05).sqrt();
            (1.0 + r * a.cos()).hypot(r * a.sin())
        })
        .collect();
    assert_eq!(unsafe { nv_estimate_k_factor(env.as_ptr(), env.len(), &mut out) }, NvStatus::Ok);
    assert!(out.k > 1.0 && out.non_centrality > 0.9 && out.scale > 0.0, "{out:?}");
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libnoma_v2x_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <math.h>
#include "noma_v2x.h"
int main(void) {
    NvConfig *cfg = NULL;
    if (nv_config_parse("total_duration_s = 0.064\nstationary_duration_s = 0.032\ntravel_duration_s = 0.032\n", &cfg) != NV_STATUS_OK) return 1;
    NvScenarioRun *run = NULL;
    if (nv_scenario_run(cfg, &run) != NV_STATUS_OK) return 2;
    size_t rows = 0;
    nv_scenario_row_count(run, &rows);
    NvSymbolMetrics m;
    if (nv_scenario_row(run, rows, &m) != NV_STATUS_OUT_OF_RANGE) return 3;
    char msg[128];
    nv_last_error_message(msg, sizeof msg);
    printf("%zu %.2f %s\n", rows, nv_doppler_shift(0.876, 2.34e9), msg);
    nv_scenario_free(run);
    nv_config_free(cfg);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("demo");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("300 6.84 row 300 of 300"), "{text}");
}
