use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::doppler_shift;
use crate::frame::{qam_demodulate, qam_modulate, BitBlock, ComplexWaveform, FrameConfig, OfdmModem};
use crate::noma::{superpose, PowerAllocation};
use crate::scenario::{compute_ber, count_outages, run_v2x_scenario, snr_histogram, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<String, String>) -> SelfCheck {
    match run() {
        Ok(detail) => SelfCheck {
            name,
            passed: true,
            detail,
        },
        Err(detail) => SelfCheck {
            name,
            passed: false,
            detail,
        },
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s(e: crate::Error) -> String {
    e.to_string()
}

/// Runs the invariant checks that need no statistics.
pub fn run_selftest() -> Vec<SelfCheck> {
    let cfg = FrameConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let payload = BitBlock::random(cfg.payload_bits(), &mut rng);
    vec![
        check("qam corners", || {
            let s = qam_modulate(&BitBlock(vec![0, 0, 1, 1]), 4).map_err(e2s)?;
            let c = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
            ensure((s[0] - c).norm() < 1e-12 && (s[1] + c).norm() < 1e-12, format!("{s:?}"))?;
            Ok("[0,0] and [1,1] map to opposite unit corners".into())
        }),
        check("qam nearest neighbour", || {
            let b = qam_demodulate(&[Complex64::new(0.9, 1.1) * FRAC_1_SQRT_2], 4).map_err(e2s)?;
            ensure(b.0 == [0, 0], format!("{:?}", b.0))?;
            Ok("(0.9+1.1j)/sqrt2 -> [0,0]".into())
        }),
        check("qam roundtrip", || {
            let s = qam_modulate(&payload, 4).map_err(e2s)?;
            ensure(s.len() == 625, format!("{} symbols", s.len()))?;
            ensure(qam_demodulate(&s, 4).map_err(e2s)? == payload, "bits differ")?;
            Ok("1250 bits -> 625 symbols -> 1250 bits".into())
        }),
        check("frame layout and cyclic prefix", || {
            let modem = OfdmModem::new(&cfg).map_err(e2s)?;
            let (wave, _) = modem.assemble(&payload, 1).map_err(e2s)?;
            ensure(wave.len() == 1600, format!("{} samples", wave.len()))?;
            for m in 0..cfg.symbols_per_frame {
                let s = m * cfg.symbol_len();
                for i in 0..cfg.cp_length {
                    let d = (wave.samples[s + i] - wave.samples[s + i + cfg.fft_size]).norm();
                    ensure(d < 1e-12, format!("symbol {m} sample {i} differs by {d}"))?;
                }
            }
            Ok("1600 samples, prefix equals body tail".into())
        }),
        check("occupied subcarrier energy", || {
            let modem = OfdmModem::new(&cfg).map_err(e2s)?;
            let (_, grid) = modem.assemble(&payload, 1).map_err(e2s)?;
            let n: usize = grid.rows.iter().map(Vec::len).sum();
            let p = grid.rows.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>() / n as f64;
            ensure((p - 1.0).abs() < 1e-9, format!("mean power {p}"))?;
            Ok(format!("mean power {p:.12}"))
        }),
        check("frame roundtrip", || {
            let modem = OfdmModem::new(&cfg).map_err(e2s)?;
            let (wave, grid) = modem.assemble(&payload, 1).map_err(e2s)?;
            for (m, row) in grid.rows.iter().enumerate() {
                let got = modem
                    .demodulate_symbol(&wave.samples, m * cfg.symbol_len() + cfg.cp_length)
                    .map_err(e2s)?;
                let err = got.iter().zip(row).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                ensure(err < 1e-9, format!("symbol {m} error {err}"))?;
            }
            Ok("grid recovered within 1e-9".into())
        }),
        check("superposition power", || {
            let alloc = PowerAllocation::testbed();
            let mut r = ChaCha8Rng::seed_from_u64(3);
            let users = (0..3)
                .map(|_| {
                    let s = qam_modulate(&BitBlock::random(20_000, &mut r), 4)?;
                    ComplexWaveform::new(s, 1.0)
                })
                .collect::<crate::Result<Vec<_>>>()
                .map_err(e2s)?;
            let p = superpose(&users, &alloc).map_err(e2s)?.mean_power();
            ensure((p - 1.0).abs() < 0.01, format!("power {p}"))?;
            Ok(format!("power {p:.4} over 1e4 symbols"))
        }),
        check("perfect SIC over an ideal channel", || {
            for coefficients in [vec![1.0], vec![0.8, 0.2], PowerAllocation::testbed().coefficients().to_vec()] {
                let mut c = ScenarioConfig::ideal();
                c.stationary_duration_s = 0.016;
                c.travel_duration_s = 0.016;
                c.total_duration_s = 0.032;
                let k = coefficients.len();
                c.users.truncate(k);
                c.allocation.policy = crate::scenario::AllocationPolicy::Fixed;
                c.allocation.coefficients = Some(coefficients);
                c.noise.anchor_user = 1;
                let run = run_v2x_scenario(&c).map_err(e2s)?;
                let errors: u64 = run.users.iter().map(|u| u.stationary.errors + u.mobile.errors).sum();
                ensure(errors == 0, format!("{k} users: {errors} bit errors"))?;
            }
            Ok("1, 2 and 3 users decode without error".into())
        }),
        check("BER conventions", || {
            let a = BitBlock::zeros(1250);
            let mut b = a.clone();
            b.0[0] = 1;
            ensure(compute_ber(&a, &a, true).map_err(e2s)? == 0.0, "identical blocks")?;
            ensure(compute_ber(&a, &a, false).map_err(e2s)? == 1.0, "lost frame")?;
            ensure((compute_ber(&a, &b, true).map_err(e2s)? - 8e-4).abs() < 1e-15, "one flip")?;
            Ok("0, 1 and 8e-4".into())
        }),
        check("outage counting", || {
            ensure(count_outages(&[20.0; 8], 10.0).map_err(e2s)?.count == 0, "all above")?;
            ensure(count_outages(&[5.0; 8], 10.0).map_err(e2s)?.ratio == 1.0, "all below")?;
            Ok("all-above and all-below series".into())
        }),
        check("histogram of a constant series", || {
            let s: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 1e-3, 23.0)).collect();
            let (st, mo) = snr_histogram(&s, 1.0, 1.0).map_err(e2s)?;
            ensure(st.counts.len() == 1 && mo.samples == 0, "more than one bin")?;
            Ok("single bin".into())
        }),
        check("doppler shift", || {
            let f = doppler_shift(0.876, 2.34e9);
            ensure((f - 6.84).abs() <= 0.01, format!("{f} Hz"))?;
            Ok(format!("{f:.4} Hz"))
        }),
    ]
}
