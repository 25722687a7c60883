//! Whole-scenario behaviour of the simulator.

use noma_v2x::scenario::{run_v2x_scenario, summarize, sweep_ber_vs_snr, ScenarioConfig};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn mobile_stage_has_larger_cfo_spread_and_rising_snr() {
    let cfg = ScenarioConfig::default();
    let run = run_v2x_scenario(&cfg).unwrap();
    let reports = summarize(&run, cfg.outage_threshold_db).unwrap();
    for r in &reports {
        assert!(
            r.mobile_cfo_hz.variance > r.stationary_cfo_hz.variance,
            "user {}: {:?} vs {:?}",
            r.user,
            r.mobile_cfo_hz,
            r.stationary_cfo_hz
        );
    }
    // Mean SNR over consecutive thirds of the approach does not fall.
    for u in 1..=3 {
        let mobile: Vec<f64> = run
            .series
            .snr_series(u)
            .into_iter()
            .filter(|&(t, _)| t >= run.series.stage_split_s)
            .map(|(_, s)| s)
            .collect();
        let third = mobile.len() / 3;
        let m: Vec<f64> = (0..3).map(|i| mean(&mobile[i * third..(i + 1) * third])).collect();
        assert!(m[0] <= m[1] + 0.5 && m[1] <= m[2] + 0.5, "user {u}: {m:?}");
        assert!(m[2] > m[0], "user {u}: {m:?}");
    }
}

#[test]
fn noise_only_sweep_gives_coin_flip_ber() {
    let mut cfg = ScenarioConfig::default();
    cfg.receiver.sync_threshold = 0.0;
    let curve = sweep_ber_vs_snr(&cfg, &[f64::NEG_INFINITY], 100_000, 3).unwrap();
    for p in &curve.points {
        let ber = p.ber.unwrap();
        assert!((ber - 0.5).abs() < 0.01, "user {}: {ber}", p.user);
        let (lo, hi) = (p.ci_low.unwrap(), p.ci_high.unwrap());
        assert!(lo <= ber && ber <= hi);
    }
}

#[test]
fn ber_falls_with_snr() {
    let cfg = ScenarioConfig::default();
    let curve = sweep_ber_vs_snr(&cfg, &[0.0, 15.0, 30.0], 100_000, 4).unwrap();
    for u in 1..=3 {
        let b: Vec<f64> = curve.user(u).iter().map(|p| p.ber.unwrap()).collect();
        assert!(b[0] > b[1] && b[1] > b[2], "user {u}: {b:?}");
    }
}

#[test]
fn ideal_config_is_error_free_for_every_symbol() {
    let run = run_v2x_scenario(&ScenarioConfig::ideal()).unwrap();
    assert!(run.series.rows.iter().all(|r| r.ber == 0.0 && r.detected));
}
