use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::channel::{ChannelParams, FadingProcess, MobilityState};
use crate::error::{Error, Result};
use crate::frame::FrameConfig;
use crate::noma::{allocate_power_by_distance, PowerAllocation, TESTBED_COEFFICIENTS};
use crate::receiver::ReceiverConfig;

/// Start and end distances of the testbed vehicles, far to near.
pub const TESTBED_START_DISTANCES_M: [f64; 3] = [4.27, 4.02, 3.90];
pub const TESTBED_END_DISTANCES_M: [f64; 3] = [1.25, 1.12, 0.57];

/// Default estimated SNR of the anchor user at its start distance.
pub const DEFAULT_ANCHOR_SNR_DB: f64 = 23.5;
/// Default RMS of the per-block frequency jitter while moving.
pub const DEFAULT_MOBILE_JITTER_HZ: f64 = 50.0;

/// Floor on the parked channel power used for noise calibration.
const MIN_CALIBRATION_GAIN: f64 = 1e-6;

/// Allowed mismatch between stationary + travel time and the total duration.
const DURATION_SLACK_S: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserTrack {
    pub start_distance_m: f64,
    pub end_distance_m: f64,
}

fn testbed_users() -> Vec<UserTrack> {
    TESTBED_START_DISTANCES_M
        .iter()
        .zip(TESTBED_END_DISTANCES_M)
        .map(|(&s, e)| UserTrack {
            start_distance_m: s,
            end_distance_m: e,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationPolicy {
    /// The fixed testbed coefficients.
    Testbed,
    /// `alpha_k` proportional to the squared start distance.
    DistanceSquared,
    /// The coefficients listed in the config.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationConfig {
    pub policy: AllocationPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        AllocationConfig {
            policy: AllocationPolicy::Testbed,
            coefficients: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// `snr_db` is the anchor user's estimated SNR while parked. Every
    /// receiver's noise level is calibrated against its own parked channel,
    /// so the other users sit above or below the anchor by their path-loss
    /// difference only.
    Anchor,
    /// `snr_db` is the data-subcarrier SNR at the reference distance.
    Reference,
    /// Noiseless channel.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    pub snr_db: f64,
    /// 1-based user that `Anchor` mode refers to.
    pub anchor_user: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            mode: NoiseMode::Anchor,
            snr_db: DEFAULT_ANCHOR_SNR_DB,
            anchor_user: 2,
        }
    }
}

/// The two-stage experiment: all vehicles park for `stationary_duration_s`,
/// then approach the base station for `travel_duration_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub pilot_seed: u64,
    pub stationary_duration_s: f64,
    pub travel_duration_s: f64,
    pub total_duration_s: f64,
    pub speed_mps: f64,
    pub outage_threshold_db: f64,
    pub users: Vec<UserTrack>,
    pub allocation: AllocationConfig,
    pub noise: NoiseConfig,
    pub frame: FrameConfig,
    pub channel: ChannelParams,
    pub receiver: ReceiverConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            pilot_seed: 0x5eed,
            stationary_duration_s: 2.165,
            travel_duration_s: 3.58,
            total_duration_s: 5.74,
            speed_mps: 0.876,
            outage_threshold_db: 10.0,
            users: testbed_users(),
            allocation: AllocationConfig::default(),
            noise: NoiseConfig::default(),
            frame: FrameConfig::default(),
            channel: ChannelParams {
                mobile_cfo_jitter_hz: DEFAULT_MOBILE_JITTER_HZ,
                ..ChannelParams::default()
            },
            receiver: ReceiverConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Noiseless, fading-free, offset-free variant of the defaults.
    pub fn ideal() -> Self {
        let mut cfg = ScenarioConfig::default();
        cfg.noise.mode = NoiseMode::None;
        cfg.channel = ChannelParams::transparent();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.channel.validate()?;
        self.receiver.validate(&self.frame)?;
        if self.channel.target_snr_db.is_some() {
            return Err(Error::config("channel.target_snr_db", "set the [noise] section instead"));
        }
        if self.channel.carrier_frequency_hz != self.frame.carrier_frequency_hz {
            return Err(Error::config(
                "channel.carrier_frequency_hz",
                "must equal frame.carrier_frequency_hz",
            ));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.stationary_duration_s >= 0.0 && self.stationary_duration_s.is_finite()) {
            return Err(Error::config("stationary_duration_s", "must be finite and non-negative"));
        }
        if !(self.travel_duration_s >= 0.0 && self.travel_duration_s.is_finite()) {
            return Err(Error::config("travel_duration_s", "must be finite and non-negative"));
        }
        if !positive(self.total_duration_s) {
            return Err(Error::config("total_duration_s", "must be positive"));
        }
        if (self.stationary_duration_s + self.travel_duration_s - self.total_duration_s).abs() > DURATION_SLACK_S {
            return Err(Error::config(
                "total_duration_s",
                format!(
                    "must equal stationary_duration_s + travel_duration_s within {DURATION_SLACK_S} s"
                ),
            ));
        }
        if self.total_duration_s < self.frame.frame_duration_s() {
            return Err(Error::config("total_duration_s", "shorter than one frame"));
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(Error::config("speed_mps", "must be finite and non-negative"));
        }
        if self.outage_threshold_db.is_nan() {
            return Err(Error::config("outage_threshold_db", "must be a number"));
        }
        if self.users.is_empty() {
            return Err(Error::config("users", "at least one user is required"));
        }
        for (i, u) in self.users.iter().enumerate() {
            let field = |n: &str| format!("users[{i}].{n}");
            if !positive(u.start_distance_m) {
                return Err(Error::config(field("start_distance_m"), "must be positive"));
            }
            if !positive(u.end_distance_m) {
                return Err(Error::config(field("end_distance_m"), "must be positive"));
            }
            if u.end_distance_m >= u.start_distance_m {
                return Err(Error::config(field("end_distance_m"), "vehicles must approach the base station"));
            }
        }
        for (i, w) in self.users.windows(2).enumerate() {
            if !(w[1].start_distance_m < w[0].start_distance_m && w[1].end_distance_m < w[0].end_distance_m) {
                return Err(Error::config(
                    format!("users[{}]", i + 1),
                    "users must be listed far to near at both start and end",
                ));
            }
        }
        let alloc = self.power_allocation()?;
        if alloc.num_users() != self.users.len() {
            return Err(Error::config(
                "allocation.coefficients",
                format!("{} coefficients for {} users", alloc.num_users(), self.users.len()),
            ));
        }
        match self.noise.mode {
            NoiseMode::None => {}
            NoiseMode::Anchor => {
                if !self.noise.snr_db.is_finite() {
                    return Err(Error::config("noise.snr_db", "must be finite"));
                }
                if !(1..=self.users.len()).contains(&self.noise.anchor_user) {
                    return Err(Error::config("noise.anchor_user", "must name a configured user"));
                }
            }
            NoiseMode::Reference => {
                if self.noise.snr_db.is_nan() || self.noise.snr_db == f64::INFINITY {
                    return Err(Error::config("noise.snr_db", "must be finite or -inf"));
                }
            }
        }
        Ok(())
    }

    pub fn power_allocation(&self) -> Result<PowerAllocation> {
        let field_err = |e: Error| match e {
            Error::InvalidInput(m) => Error::config("allocation.coefficients", m),
            other => other,
        };
        match (self.allocation.policy, &self.allocation.coefficients) {
            (AllocationPolicy::Fixed, Some(c)) => PowerAllocation::new(c.clone()).map_err(field_err),
            (AllocationPolicy::Fixed, None) => Err(Error::config(
                "allocation.coefficients",
                "required by the fixed policy",
            )),
            (_, Some(_)) => Err(Error::config(
                "allocation.coefficients",
                "only allowed with policy = \"fixed\"",
            )),
            (AllocationPolicy::Testbed, None) => {
                if self.users.len() == TESTBED_COEFFICIENTS.len() {
                    Ok(PowerAllocation::testbed())
                } else {
                    Err(Error::config(
                        "allocation.policy",
                        "the testbed allocation is defined for three users",
                    ))
                }
            }
            (AllocationPolicy::DistanceSquared, None) => {
                let d: Vec<f64> = self.users.iter().map(|u| u.start_distance_m).collect();
                allocate_power_by_distance(&d).map_err(field_err)
            }
        }
    }

    /// Data-subcarrier SNR minus the time-domain SNR, both at unit channel
    /// gain. Positive because pilots, guards and the CP share the power.
    pub fn subcarrier_gain_db(&self) -> Result<f64> {
        let g = self.power_allocation()?.amplitude_sum();
        let f = &self.frame;
        let occupied_power = f.data_subcarriers as f64 + f.pilot_subcarriers as f64 * g * g;
        Ok(10.0 * (f.fft_size as f64 / occupied_power).log10())
    }

    /// Channel SNR at the reference distance for a data-subcarrier SNR.
    pub fn reference_snr_db(&self, data_snr_db: f64) -> Result<f64> {
        Ok(data_snr_db - self.subcarrier_gain_db()?)
    }

    /// Seed of the 0-based `user`'s channel.
    pub fn channel_seed(&self, user: usize) -> u64 {
        derive_seed(self.seed, &[1, user as u64])
    }

    /// Per-user channel parameters with the noise level resolved.
    pub fn user_channels(&self) -> Result<Vec<ChannelParams>> {
        let reference = match self.noise.mode {
            NoiseMode::None => None,
            NoiseMode::Reference => Some(self.reference_snr_db(self.noise.snr_db)?),
            NoiseMode::Anchor => {
                let d = self.users[self.noise.anchor_user - 1].start_distance_m;
                let loss_db = -20.0 * self.channel.path_amplitude(d).log10();
                Some(self.reference_snr_db(self.noise.snr_db)? + loss_db)
            }
        };
        (0..self.users.len())
            .map(|u| {
                let mut p = self.channel.clone();
                p.target_snr_db = match (self.noise.mode, reference) {
                    (NoiseMode::Anchor, Some(r)) => {
                        let h = FadingProcess::new(p.rician_k, self.channel_seed(u)).gain_at(0.0);
                        Some(r - 10.0 * h.norm_sqr().max(MIN_CALIBRATION_GAIN).log10())
                    }
                    (_, r) => r,
                };
                Ok(p)
            })
            .collect()
    }

    pub fn mobility(&self, user: usize) -> MobilityState {
        let u = &self.users[user];
        MobilityState {
            start_distance_m: u.start_distance_m,
            end_distance_m: u.end_distance_m,
            speed_mps: self.speed_mps,
            stationary_end_s: self.stationary_duration_s,
            mobile_end_s: self.stationary_duration_s + self.travel_duration_s,
        }
    }

    /// Back-to-back frames that fit in the total duration.
    pub fn frame_count(&self) -> usize {
        (self.total_duration_s / self.frame.frame_duration_s() + 1e-9).floor() as usize
    }
}
