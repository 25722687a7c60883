//! Two-stage vehicle experiment replay and BER-vs-SNR Monte Carlo sweeps.

mod config;
mod metrics;

pub use config::{
    AllocationConfig, AllocationPolicy, NoiseConfig, NoiseMode, ScenarioConfig, UserTrack, DEFAULT_ANCHOR_SNR_DB,
    DEFAULT_MOBILE_JITTER_HZ, TESTBED_END_DISTANCES_M, TESTBED_START_DISTANCES_M,
};
pub use metrics::{compute_ber, count_outages, snr_histogram, BerCounter, OutageStats, SnrHistogram};

use metrics::mean_and_variance;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, MobileChannel, MobilityState};
use crate::error::{Error, Result};
use crate::frame::{BitBlock, ComplexWaveform, OfdmModem};
use crate::noma::{superpose, PowerAllocation, UserIndex};
use crate::receiver::Receiver;

/// Smallest bit budget accepted by [`sweep_ber_vs_snr`].
pub const MIN_SWEEP_BITS: u64 = 100_000;
/// Frames per independent sweep trial.
const TRIAL_FRAMES: usize = 32;
/// A sweep point gives up once this many times the budget was transmitted.
const MAX_BUDGET_FACTOR: u64 = 4;

/// SplitMix64 finalizer over `base` and `tags`.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    tags.iter()
        .fold(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)), |acc, &t| {
            mix(acc ^ t.wrapping_add(0x9e37_79b9_7f4a_7c15))
        })
}

/// Metrics of one OFDM symbol as seen by one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolMetrics {
    pub time_s: f64,
    /// 1-based, far to near.
    pub user: usize,
    pub est_snr_db: Option<f64>,
    pub est_cfo_hz: Option<f64>,
    pub ber: f64,
    pub outage: bool,
    pub detected: bool,
}

/// Rows are ordered by time, then user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTimeSeries {
    pub rows: Vec<SymbolMetrics>,
    pub num_users: usize,
    pub stage_split_s: f64,
}

impl MetricsTimeSeries {
    pub fn user_rows(&self, user: usize) -> impl Iterator<Item = &SymbolMetrics> + '_ {
        self.rows.iter().filter(move |r| r.user == user)
    }

    /// `(time, estimated SNR)` of one user, skipping symbols without an estimate.
    pub fn snr_series(&self, user: usize) -> Vec<(f64, f64)> {
        self.user_rows(user)
            .filter_map(|r| r.est_snr_db.map(|s| (r.time_s, s)))
            .collect()
    }

    /// Estimated SNR of one user with lost symbols as `-inf`.
    pub fn snr_with_losses(&self, user: usize) -> Vec<f64> {
        self.user_rows(user)
            .map(|r| r.est_snr_db.unwrap_or(f64::NEG_INFINITY))
            .collect()
    }

    pub fn is_stationary(&self, row: &SymbolMetrics) -> bool {
        row.time_s < self.stage_split_s
    }
}

/// Per-user totals of a scenario run, split by stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user: usize,
    pub stationary: BerCounter,
    pub mobile: BerCounter,
    /// Bit errors of each SIC stage, weakest cancelled user first.
    pub sic_stage_errors: Vec<u64>,
    pub erased_bits: u64,
}

impl UserSummary {
    fn stage_counter(&mut self, t: f64, split: f64) -> &mut BerCounter {
        if t < split {
            &mut self.stationary
        } else {
            &mut self.mobile
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub series: MetricsTimeSeries,
    pub users: Vec<UserSummary>,
}

/// Replays the stationary and mobile stages with back-to-back frames. Every
/// user receives the same broadcast superposition through its own channel.
pub fn run_v2x_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let alloc = cfg.power_allocation()?;
    let params = cfg.user_channels()?;
    let k = cfg.users.len();
    let modem = OfdmModem::new(&cfg.frame)?;
    let receiver = Receiver::new(&cfg.frame, &alloc, cfg.pilot_seed, &cfg.receiver)?;
    let mut channels = (0..k)
        .map(|u| MobileChannel::new(&params[u], &cfg.mobility(u), cfg.channel_seed(u)))
        .collect::<Result<Vec<_>>>()?;
    let mut payload_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0]));

    let frames = cfg.frame_count();
    let symbols = cfg.frame.symbols_per_frame;
    let bits_per_symbol = cfg.frame.bits_per_ofdm_symbol();
    let frame_s = cfg.frame.frame_duration_s();
    let symbol_s = cfg.frame.symbol_duration_s();
    let split = cfg.stationary_duration_s;

    let mut rows = Vec::with_capacity(frames * symbols * k);
    let mut summaries: Vec<UserSummary> = (1..=k)
        .map(|u| UserSummary {
            user: u,
            stationary: BerCounter::default(),
            mobile: BerCounter::default(),
            sic_stage_errors: vec![0; u - 1],
            erased_bits: 0,
        })
        .collect();
    let mut frame_rows = vec![Vec::with_capacity(symbols); k];

    for f in 0..frames {
        let t0 = f as f64 * frame_s;
        let payloads: Vec<BitBlock> = (0..k)
            .map(|_| BitBlock::random(cfg.frame.payload_bits(), &mut payload_rng))
            .collect();
        let tx = broadcast(&modem, &payloads, &alloc, cfg.pilot_seed)?;
        for u in 0..k {
            let (rx, _) = channels[u].transmit(&tx, t0)?;
            let report = receiver.receive(&rx, UserIndex::new(u + 1)?)?;
            let summary = &mut summaries[u];
            frame_rows[u].clear();
            if report.detected {
                summary.stage_counter(t0, split).frames += 1;
                for (e, t) in summary.sic_stage_errors.iter_mut().zip(report.sic_stage_errors(&payloads)) {
                    *e += t as u64;
                }
                summary.erased_bits += report.erased_bits.len() as u64;
            } else {
                summary.stage_counter(t0, split).record_lost();
            }
            for m in 0..symbols {
                let t = t0 + m as f64 * symbol_s;
                let ber = if report.detected {
                    let range = m * bits_per_symbol..(m + 1) * bits_per_symbol;
                    let tx_bits = BitBlock(payloads[u].0[range.clone()].to_vec());
                    let rx_bits = BitBlock(report.bits.0[range].to_vec());
                    let errors = tx_bits.hamming_distance(&rx_bits);
                    let c = summary.stage_counter(t, split);
                    c.bits += bits_per_symbol as u64;
                    c.errors += errors as u64;
                    compute_ber(&tx_bits, &rx_bits, true)?
                } else {
                    1.0
                };
                let snr = report.estimated_snr_db[m];
                frame_rows[u].push(SymbolMetrics {
                    time_s: t,
                    user: u + 1,
                    est_snr_db: snr,
                    est_cfo_hz: report.detected.then_some(report.estimated_cfo_hz),
                    ber,
                    outage: snr.is_none_or(|s| s < cfg.outage_threshold_db),
                    detected: report.detected,
                });
            }
        }
        for m in 0..symbols {
            rows.extend(frame_rows.iter().map(|r| r[m]));
        }
    }

    Ok(ScenarioRun {
        series: MetricsTimeSeries {
            rows,
            num_users: k,
            stage_split_s: split,
        },
        users: summaries,
    })
}

/// Mean and variance of a per-stage quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
}

impl StageStats {
    fn of(values: Vec<f64>) -> Self {
        let samples = values.len();
        let (mean, variance) = mean_and_variance(values);
        StageStats { mean, variance, samples }
    }
}

/// Per-user statistics of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub user: usize,
    pub stationary_ber: Option<f64>,
    pub mobile_ber: Option<f64>,
    pub stationary: BerCounter,
    pub mobile: BerCounter,
    pub outage: OutageStats,
    pub stationary_snr_db: StageStats,
    pub mobile_snr_db: StageStats,
    pub stationary_cfo_hz: StageStats,
    pub mobile_cfo_hz: StageStats,
    /// Share of mobile-stage symbols with BER of at least 1e-2.
    pub mobile_excursion_ratio: f64,
    /// Modal 1 dB bin of the stationary estimated SNR.
    pub stationary_modal_snr_db: Option<f64>,
}

/// Summarizes each user of `run`; `threshold_db` sets the outage level.
pub fn summarize(run: &ScenarioRun, threshold_db: f64) -> Result<Vec<UserReport>> {
    let series = &run.series;
    run.users
        .iter()
        .map(|s| {
            let u = s.user;
            let stage = |stationary: bool, f: fn(&SymbolMetrics) -> Option<f64>| {
                StageStats::of(
                    series
                        .user_rows(u)
                        .filter(|r| series.is_stationary(r) == stationary)
                        .filter_map(f)
                        .collect(),
                )
            };
            let mobile: Vec<&SymbolMetrics> = series.user_rows(u).filter(|r| !series.is_stationary(r)).collect();
            let excursions = mobile.iter().filter(|r| r.ber >= 1e-2).count();
            let (hist, _) = snr_histogram(&series.snr_series(u), 1.0, series.stage_split_s)?;
            Ok(UserReport {
                user: u,
                stationary_ber: s.stationary.ber(),
                mobile_ber: s.mobile.ber(),
                stationary: s.stationary,
                mobile: s.mobile,
                outage: count_outages(&series.snr_with_losses(u), threshold_db)?,
                stationary_snr_db: stage(true, |r| r.est_snr_db),
                mobile_snr_db: stage(false, |r| r.est_snr_db),
                stationary_cfo_hz: stage(true, |r| r.est_cfo_hz),
                mobile_cfo_hz: stage(false, |r| r.est_cfo_hz),
                mobile_excursion_ratio: if mobile.is_empty() {
                    0.0
                } else {
                    excursions as f64 / mobile.len() as f64
                },
                stationary_modal_snr_db: hist.bins().into_iter().max_by_key(|b| b.1).map(|b| b.0),
            })
        })
        .collect()
}

fn broadcast(modem: &OfdmModem, payloads: &[BitBlock], alloc: &PowerAllocation, pilot_seed: u64) -> Result<ComplexWaveform> {
    let waves = payloads
        .iter()
        .map(|p| modem.assemble(p, pilot_seed).map(|(w, _)| w))
        .collect::<Result<Vec<_>>>()?;
    superpose(&waves, alloc)
}

/// Aggregated BER of one user at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    /// Data-subcarrier SNR at unit channel gain.
    pub snr_db: f64,
    pub user: usize,
    /// `None` when no frame was detected.
    pub ber: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub bits: u64,
    pub bit_errors: u64,
    pub frames: u64,
    pub lost_frames: u64,
}

/// Sweep results sorted by SNR, then user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn user(&self, user: usize) -> Vec<BerPoint> {
        self.points.iter().filter(|p| p.user == user).copied().collect()
    }
}

/// Monte Carlo BER at each SNR of `snr_grid_db` under mobile-stage conditions:
/// every vehicle moves at the configured speed at the reference distance, with
/// the configured fading, offsets and frequency jitter. Trials of
/// independently seeded frames run in parallel until every user has
/// `min_bits` bits from detected frames, or four times that many were sent.
pub fn sweep_ber_vs_snr(cfg: &ScenarioConfig, snr_grid_db: &[f64], min_bits: u64, seed: u64) -> Result<BerCurve> {
    cfg.validate()?;
    if min_bits < MIN_SWEEP_BITS {
        return Err(Error::invalid(format!("min_bits must be at least {MIN_SWEEP_BITS}")));
    }
    if snr_grid_db.is_empty() {
        return Err(Error::invalid("empty SNR grid"));
    }
    if let Some(s) = snr_grid_db.iter().find(|s| s.is_nan() || **s == f64::INFINITY) {
        return Err(Error::invalid(format!("SNR grid value {s} is not finite or -inf")));
    }
    let mut grid = snr_grid_db.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let alloc = cfg.power_allocation()?;
    let k = cfg.users.len();
    let payload = cfg.frame.payload_bits() as u64;
    let trials_per_batch = min_bits.div_ceil(payload).div_ceil(TRIAL_FRAMES as u64) as usize;
    let mut totals = vec![vec![BerCounter::default(); k]; grid.len()];
    let mut next_trial = vec![0usize; grid.len()];

    loop {
        let pending: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                let sent = totals[i][0].frames * payload;
                sent < MAX_BUDGET_FACTOR * min_bits && totals[i].iter().any(|c| c.bits < min_bits)
            })
            .collect();
        if pending.is_empty() {
            break;
        }
        let tasks: Vec<(usize, usize)> = pending
            .iter()
            .flat_map(|&i| (next_trial[i]..next_trial[i] + trials_per_batch).map(move |t| (i, t)))
            .collect();
        let results = tasks
            .par_iter()
            .map(|&(i, t)| {
                let trial_seed = derive_seed(seed, &[grid[i].to_bits(), t as u64]);
                run_trial(cfg, &alloc, grid[i], trial_seed).map(|c| (i, c))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, counters) in results {
            for (total, c) in totals[i].iter_mut().zip(&counters) {
                total.merge(c);
            }
        }
        for &i in &pending {
            next_trial[i] += trials_per_batch;
        }
    }

    let points = grid
        .iter()
        .zip(&totals)
        .flat_map(|(&snr, counters)| {
            counters.iter().enumerate().map(move |(u, c)| {
                let ci = c.wilson_interval();
                BerPoint {
                    snr_db: snr,
                    user: u + 1,
                    ber: c.ber(),
                    ci_low: ci.map(|x| x.0),
                    ci_high: ci.map(|x| x.1),
                    bits: c.bits,
                    bit_errors: c.errors,
                    frames: c.frames,
                    lost_frames: c.lost_frames,
                }
            })
        })
        .collect();
    Ok(BerCurve { points })
}

fn run_trial(cfg: &ScenarioConfig, alloc: &PowerAllocation, snr_db: f64, seed: u64) -> Result<Vec<BerCounter>> {
    let k = alloc.num_users();
    let params = ChannelParams {
        target_snr_db: Some(cfg.reference_snr_db(snr_db)?),
        ..cfg.channel.clone()
    };
    let mobility = MobilityState::moving(params.reference_distance_m, cfg.speed_mps);
    let modem = OfdmModem::new(&cfg.frame)?;
    let receiver = Receiver::new(&cfg.frame, alloc, cfg.pilot_seed, &cfg.receiver)?;
    let mut channels = (0..k)
        .map(|u| MobileChannel::new(&params, &mobility, derive_seed(seed, &[1, u as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut payload_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
    let mut counters = vec![BerCounter::default(); k];
    let frame_s = cfg.frame.frame_duration_s();
    for f in 0..TRIAL_FRAMES {
        let payloads: Vec<BitBlock> = (0..k)
            .map(|_| BitBlock::random(cfg.frame.payload_bits(), &mut payload_rng))
            .collect();
        let tx = broadcast(&modem, &payloads, alloc, cfg.pilot_seed)?;
        for u in 0..k {
            let (rx, _) = channels[u].transmit(&tx, f as f64 * frame_s)?;
            let report = receiver.receive(&rx, UserIndex::new(u + 1)?)?;
            if report.detected {
                counters[u].record(payloads[u].len(), payloads[u].hamming_distance(&report.bits));
            } else {
                counters[u].record_lost();
            }
        }
    }
    Ok(counters)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(cfg: &mut ScenarioConfig) {
        cfg.stationary_duration_s = 0.064;
        cfg.travel_duration_s = 0.064;
        cfg.total_duration_s = 0.128;
    }

    #[test]
    fn ideal_run_is_error_free() {
        let mut cfg = ScenarioConfig::ideal();
        short(&mut cfg);
        let run = run_v2x_scenario(&cfg).unwrap();
        assert_eq!(run.series.rows.len(), 40 * 5 * 3);
        assert!(run.series.rows.iter().all(|r| r.ber == 0.0 && r.detected));
        for s in &run.users {
            assert_eq!(s.stationary.errors + s.mobile.errors, 0);
        }
    }

    #[test]
    fn timestamps_increase_per_user() {
        let mut cfg = ScenarioConfig::default();
        short(&mut cfg);
        let run = run_v2x_scenario(&cfg).unwrap();
        for u in 1..=3 {
            let t: Vec<f64> = run.series.user_rows(u).map(|r| r.time_s).collect();
            assert!(t.windows(2).all(|w| w[1] > w[0]));
        }
        assert!(run.series.rows.iter().all(|r| (0.0..=1.0).contains(&r.ber)));
    }

    #[test]
    fn scenario_is_reproducible() {
        let mut cfg = ScenarioConfig::default();
        short(&mut cfg);
        assert_eq!(run_v2x_scenario(&cfg).unwrap(), run_v2x_scenario(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(run_v2x_scenario(&cfg).unwrap(), run_v2x_scenario(&other).unwrap());
    }

    #[test]
    fn sweep_rejects_small_budget() {
        let cfg = ScenarioConfig::default();
        assert!(sweep_ber_vs_snr(&cfg, &[10.0], 1000, 1).is_err());
        assert!(sweep_ber_vs_snr(&cfg, &[], MIN_SWEEP_BITS, 1).is_err());
    }

    #[test]
    fn sweep_is_sorted_and_meets_budget() {
        let cfg = ScenarioConfig::default();
        let curve = sweep_ber_vs_snr(&cfg, &[30.0, 10.0], MIN_SWEEP_BITS, 3).unwrap();
        let keys: Vec<(f64, usize)> = curve.points.iter().map(|p| (p.snr_db, p.user)).collect();
        assert_eq!(keys, vec![(10.0, 1), (10.0, 2), (10.0, 3), (30.0, 1), (30.0, 2), (30.0, 3)]);
        for p in &curve.points {
            assert!(p.bits >= MIN_SWEEP_BITS);
        }
    }

    #[test]
    fn seeds_are_distinct() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(7, &[3]), derive_seed(7, &[3]));
    }
}
