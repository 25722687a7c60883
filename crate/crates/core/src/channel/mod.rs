//! Mobile flat Rician channel: path loss, fading, Doppler, carrier frequency
//! offset, integer delay and AWGN.

mod fading;
mod kfactor;

pub use fading::{generate_fading, FadingProcess, DIFFUSE_TONES};
pub use kfactor::{estimate_k_factor, ln_bessel_i0, rician_envelopes, KFactorEstimate, MIN_ENVELOPE_SAMPLES};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::ComplexWaveform;

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Doppler shift `v * f_c / c` in Hz.
pub fn doppler_shift(speed_mps: f64, carrier_frequency_hz: f64) -> f64 {
    speed_mps * carrier_frequency_hz / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Line-of-sight to diffuse power ratio (linear).
    pub rician_k: f64,
    /// Maximum Doppler used by [`generate_fading`]. [`MobileChannel`] derives
    /// its Doppler from the mobility speed instead.
    pub doppler_hz: f64,
    /// Static oscillator offset between transmitter and receiver.
    pub cfo_hz: f64,
    /// SNR at `reference_distance_m` under unit fading, relative to the mean
    /// transmit power. `None` disables noise; `-inf` leaves noise only, at
    /// the transmit power.
    pub target_snr_db: Option<f64>,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub carrier_frequency_hz: f64,
    /// Integer propagation delay in samples.
    pub delay_samples: usize,
    /// RMS of the extra frequency error drawn independently for every
    /// `jitter_block_samples` while the vehicle moves.
    pub mobile_cfo_jitter_hz: f64,
    pub jitter_block_samples: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            rician_k: 10.92,
            doppler_hz: 0.0,
            cfo_hz: 0.0,
            target_snr_db: None,
            path_loss_exponent: 2.0,
            reference_distance_m: 1.0,
            carrier_frequency_hz: 2.34e9,
            delay_samples: 0,
            mobile_cfo_jitter_hz: 0.0,
            jitter_block_samples: 320,
        }
    }
}

impl ChannelParams {
    /// An ideal channel: no fading, noise, offsets or delay.
    pub fn transparent() -> Self {
        ChannelParams {
            rician_k: f64::INFINITY,
            ..ChannelParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |n: &str| format!("channel.{n}");
        if !(self.rician_k >= 0.0) {
            return Err(Error::config(field("rician_k"), "must be non-negative"));
        }
        if !(self.doppler_hz >= 0.0 && self.doppler_hz.is_finite()) {
            return Err(Error::config(field("doppler_hz"), "must be finite and non-negative"));
        }
        if !self.cfo_hz.is_finite() {
            return Err(Error::config(field("cfo_hz"), "must be finite"));
        }
        if let Some(s) = self.target_snr_db {
            if s.is_nan() {
                return Err(Error::config(field("target_snr_db"), "must be a number"));
            }
        }
        if !(self.path_loss_exponent >= 0.0 && self.path_loss_exponent.is_finite()) {
            return Err(Error::config(field("path_loss_exponent"), "must be finite and non-negative"));
        }
        if !(self.reference_distance_m > 0.0 && self.reference_distance_m.is_finite()) {
            return Err(Error::config(field("reference_distance_m"), "must be positive"));
        }
        if !(self.carrier_frequency_hz > 0.0 && self.carrier_frequency_hz.is_finite()) {
            return Err(Error::config(field("carrier_frequency_hz"), "must be positive"));
        }
        if !(self.mobile_cfo_jitter_hz >= 0.0 && self.mobile_cfo_jitter_hz.is_finite()) {
            return Err(Error::config(field("mobile_cfo_jitter_hz"), "must be finite and non-negative"));
        }
        if self.jitter_block_samples == 0 {
            return Err(Error::config(field("jitter_block_samples"), "must be positive"));
        }
        Ok(())
    }

    /// Amplitude path gain `(d_ref / d)^(n/2)`.
    pub fn path_amplitude(&self, distance_m: f64) -> f64 {
        (self.reference_distance_m / distance_m).powf(self.path_loss_exponent / 2.0)
    }
}

/// Trajectory of one vehicle: parked at `start_distance_m` until
/// `stationary_end_s`, then moving at `speed_mps` with the distance to the
/// base station shrinking linearly to `end_distance_m` at `mobile_end_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub start_distance_m: f64,
    pub end_distance_m: f64,
    pub speed_mps: f64,
    pub stationary_end_s: f64,
    pub mobile_end_s: f64,
}

impl MobilityState {
    /// Parked forever at `distance_m`.
    pub fn fixed(distance_m: f64) -> Self {
        MobilityState {
            start_distance_m: distance_m,
            end_distance_m: distance_m,
            speed_mps: 0.0,
            stationary_end_s: f64::INFINITY,
            mobile_end_s: f64::INFINITY,
        }
    }

    /// Moving from t = 0 at `speed_mps` with a constant distance, as seen by a
    /// vehicle circling the base station.
    pub fn moving(distance_m: f64, speed_mps: f64) -> Self {
        MobilityState {
            start_distance_m: distance_m,
            end_distance_m: distance_m,
            speed_mps,
            stationary_end_s: 0.0,
            mobile_end_s: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_distance_m > 0.0 && self.end_distance_m > 0.0) {
            return Err(Error::invalid("distances must be positive"));
        }
        if !(self.speed_mps >= 0.0 && self.speed_mps.is_finite()) {
            return Err(Error::invalid("speed must be finite and non-negative"));
        }
        if !(self.stationary_end_s >= 0.0 && self.mobile_end_s >= self.stationary_end_s) {
            return Err(Error::invalid("stage boundaries must satisfy 0 <= stationary end <= mobile end"));
        }
        Ok(())
    }

    pub fn is_moving(&self, t: f64) -> bool {
        t >= self.stationary_end_s && t < self.mobile_end_s && self.speed_mps > 0.0
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        if self.is_moving(t) {
            self.speed_mps
        } else {
            0.0
        }
    }

    pub fn distance_at(&self, t: f64) -> f64 {
        if t <= self.stationary_end_s {
            return self.start_distance_m;
        }
        if !self.mobile_end_s.is_finite() || t >= self.mobile_end_s {
            return if self.mobile_end_s.is_finite() {
                self.end_distance_m
            } else {
                self.start_distance_m
            };
        }
        let frac = (t - self.stationary_end_s) / (self.mobile_end_s - self.stationary_end_s);
        self.start_distance_m + frac * (self.end_distance_m - self.start_distance_m)
    }

    /// Path length covered by time `t`, which drives the fading phase.
    pub fn traveled_at(&self, t: f64) -> f64 {
        let moving = t.min(self.mobile_end_s) - self.stationary_end_s;
        self.speed_mps * moving.max(0.0)
    }
}

/// Exact impairments applied by one [`MobileChannel::transmit`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Unit-mean-power fading gain per output sample, path loss excluded.
    pub tap_gain: Vec<Complex64>,
    /// Amplitude path gain per output sample.
    pub path_amplitude: Vec<f64>,
    /// Mean frequency offset over the call (oscillator + Doppler + jitter).
    pub applied_cfo_hz: f64,
    /// Frequency offset of each jitter block.
    pub block_cfo_hz: Vec<f64>,
    pub applied_delay: usize,
    /// Per-sample complex noise variance (0 when noiseless).
    pub noise_variance: f64,
}

/// A seeded channel from the base station to one vehicle. Fading is a
/// function of the vehicle's position, so consecutive calls see a continuous
/// channel; noise and jitter draws advance with every call.
#[derive(Debug, Clone)]
pub struct MobileChannel {
    params: ChannelParams,
    mobility: MobilityState,
    fading: FadingProcess,
    rng: ChaCha8Rng,
}

impl MobileChannel {
    pub fn new(params: &ChannelParams, mobility: &MobilityState, seed: u64) -> Result<Self> {
        params.validate()?;
        mobility.validate()?;
        Ok(MobileChannel {
            params: params.clone(),
            mobility: *mobility,
            fading: FadingProcess::new(params.rician_k, seed),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Passes `tx`, whose first sample leaves the transmitter at `start_time_s`,
    /// through the channel:
    /// `rx[n] = a(d) * h[n] * tx[n - D] * exp(j*theta[n]) + w[n]`, where
    /// `theta` integrates the oscillator offset, Doppler and jitter.
    /// The output is `D` samples longer than the input.
    pub fn transmit(&mut self, tx: &ComplexWaveform, start_time_s: f64) -> Result<(ComplexWaveform, ChannelRealization)> {
        if tx.is_empty() {
            return Err(Error::invalid("empty transmit waveform"));
        }
        let fs = tx.sample_rate;
        let p = &self.params;
        let delay = p.delay_samples;
        let len = tx.len() + delay;
        let time = |n: usize| start_time_s + n as f64 / fs;
        let phase_per_meter = 2.0 * PI * p.carrier_frequency_hz / SPEED_OF_LIGHT;

        // Fading, piecewise linear in Doppler phase over short chunks.
        let mut tap_gain = vec![Complex64::new(0.0, 0.0); len];
        const CHUNK: usize = 320;
        for (c, chunk) in tap_gain.chunks_mut(CHUNK).enumerate() {
            let n0 = c * CHUNK;
            let phi0 = phase_per_meter * self.mobility.traveled_at(time(n0));
            let phi1 = phase_per_meter * self.mobility.traveled_at(time(n0 + chunk.len()));
            self.fading.fill(phi0, (phi1 - phi0) / chunk.len() as f64, chunk);
        }

        let path_amplitude: Vec<f64> = (0..len)
            .map(|n| p.path_amplitude(self.mobility.distance_at(time(n))))
            .collect();

        // Frequency offset, constant within each jitter block.
        let block = p.jitter_block_samples;
        let block_cfo_hz: Vec<f64> = (0..len.div_ceil(block))
            .map(|b| {
                let t = time(b * block);
                let mut f = p.cfo_hz + doppler_shift(self.mobility.speed_at(t), p.carrier_frequency_hz);
                if self.mobility.is_moving(t) && p.mobile_cfo_jitter_hz > 0.0 {
                    let z: f64 = self.rng.sample(StandardNormal);
                    f += p.mobile_cfo_jitter_hz * z;
                }
                f
            })
            .collect();

        let noise_only = p.target_snr_db == Some(f64::NEG_INFINITY);
        let noise_variance = match p.target_snr_db {
            _ if noise_only => tx.mean_power(),
            Some(snr_db) => tx.mean_power() / 10f64.powf(snr_db / 10.0),
            None => 0.0,
        };
        let noise_std = (noise_variance / 2.0).sqrt();

        let mut samples = Vec::with_capacity(len);
        let mut theta = 0.0f64;
        let mut cfo_sum = 0.0;
        for n in 0..len {
            let f = block_cfo_hz[n / block];
            cfo_sum += f;
            let x = if n >= delay && !noise_only { tx.samples[n - delay] } else { Complex64::new(0.0, 0.0) };
            let mut y = x * tap_gain[n] * path_amplitude[n] * Complex64::from_polar(1.0, theta);
            if noise_variance > 0.0 {
                let re: f64 = self.rng.sample(StandardNormal);
                let im: f64 = self.rng.sample(StandardNormal);
                y += Complex64::new(re, im) * noise_std;
            }
            samples.push(y);
            theta = (theta + 2.0 * PI * f / fs) % (2.0 * PI);
        }

        Ok((
            ComplexWaveform {
                samples,
                sample_rate: fs,
            },
            ChannelRealization {
                tap_gain,
                path_amplitude,
                applied_cfo_hz: cfo_sum / len as f64,
                block_cfo_hz,
                applied_delay: delay,
                noise_variance,
            },
        ))
    }
}

/// One-shot channel application starting at t = 0.
pub fn apply_channel(
    tx: &ComplexWaveform,
    params: &ChannelParams,
    mobility: &MobilityState,
    seed: u64,
) -> Result<(ComplexWaveform, ChannelRealization)> {
    MobileChannel::new(params, mobility, seed)?.transmit(tx, 0.0)
}
