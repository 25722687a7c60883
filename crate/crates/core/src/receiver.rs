//! Per-vehicle receiver: CP-based ML time/frequency synchronization, CFO
//! correction, pilot LS channel estimation, zero-forcing equalization,
//! pilot EVM SNR estimation and SIC decoding.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BitBlock, ComplexWaveform, FrameConfig, OfdmModem};
use crate::noma::{sic_decode, PowerAllocation, UserIndex};

/// Upper bound reported by [`evm_snr`] when the error vector vanishes.
pub const SNR_CAP_DB: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    /// Frames whose normalized CP correlation peak falls below this are lost.
    pub sync_threshold: f64,
    /// SNR assumed by the ML timing metric's energy weighting.
    pub assumed_snr_db: f64,
    /// The FFT window starts this many samples before the estimated end of
    /// the cyclic prefix; the resulting phase ramp is absorbed by the channel estimate.
    pub fft_backoff: usize,
    /// Channel estimates with smaller magnitude are treated as erasures.
    pub zf_threshold: f64,
    /// Apply the estimated frequency offset before demodulating.
    pub correct_cfo: bool,
    /// Added to the CFO estimate before correction, for error-injection studies.
    pub cfo_bias_hz: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            sync_threshold: 0.5,
            assumed_snr_db: 20.0,
            fft_backoff: 4,
            zf_threshold: 1e-8,
            correct_cfo: true,
            cfo_bias_hz: 0.0,
        }
    }
}

impl ReceiverConfig {
    pub fn validate(&self, frame: &FrameConfig) -> Result<()> {
        let field = |n: &str| format!("receiver.{n}");
        if !(0.0..=1.0).contains(&self.sync_threshold) {
            return Err(Error::config(field("sync_threshold"), "must be in [0, 1]"));
        }
        if !self.assumed_snr_db.is_finite() {
            return Err(Error::config(field("assumed_snr_db"), "must be finite"));
        }
        if self.fft_backoff > frame.cp_length {
            return Err(Error::config(field("fft_backoff"), "must not exceed the cyclic prefix"));
        }
        if !(self.zf_threshold >= 0.0) {
            return Err(Error::config(field("zf_threshold"), "must be non-negative"));
        }
        if !self.cfo_bias_hz.is_finite() {
            return Err(Error::config(field("cfo_bias_hz"), "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncEstimate {
    /// Index of the first cyclic-prefix sample of the frame.
    pub timing_offset: usize,
    pub fractional_cfo_hz: f64,
    /// `|gamma| / Phi` at the chosen offset, in [0, 1].
    pub metric_peak: f64,
}

/// Joint ML estimate of symbol timing and fractional CFO from the
/// correlation between each cyclic prefix and the symbol tail it copies.
///
/// For candidate offset `t`, every symbol `m` that fits in the buffer
/// contributes `gamma_m(t) = sum r[n] conj(r[n+N])` and
/// `Phi_m(t) = 1/2 sum |r[n]|^2 + |r[n+N]|^2` over its `L` prefix samples.
/// The offset maximizing `|sum gamma| - rho * sum Phi` wins, with
/// `rho = SNR/(SNR+1)`; the CFO is `-fs/(2 pi N) * arg(sum gamma)`.
pub fn cp_ml_sync_with(rx: &ComplexWaveform, cfg: &FrameConfig, rcfg: &ReceiverConfig) -> Result<SyncEstimate> {
    let n = cfg.fft_size;
    let l = cfg.cp_length;
    let sym = cfg.symbol_len();
    let r = &rx.samples;
    if r.len() < 2 * sym {
        return Err(Error::invalid(format!(
            "{} samples cannot hold two OFDM symbols of {sym}",
            r.len()
        )));
    }
    // Prefix sums of the lag-N products and energies.
    let span = r.len() - n;
    let mut prod = Vec::with_capacity(span + 1);
    let mut energy = Vec::with_capacity(span + 1);
    prod.push(Complex64::new(0.0, 0.0));
    energy.push(0.0);
    for i in 0..span {
        prod.push(prod[i] + r[i] * r[i + n].conj());
        energy.push(energy[i] + 0.5 * (r[i].norm_sqr() + r[i + n].norm_sqr()));
    }
    let snr = 10f64.powf(rcfg.assumed_snr_db / 10.0);
    let rho = snr / (snr + 1.0);

    let mut best: Option<(f64, usize, Complex64, f64)> = None;
    for t in 0..sym {
        let mut gamma = Complex64::new(0.0, 0.0);
        let mut phi = 0.0;
        let mut used = 0;
        for m in 0..cfg.symbols_per_frame {
            let s = t + m * sym;
            if s + l > span {
                break;
            }
            gamma += prod[s + l] - prod[s];
            phi += energy[s + l] - energy[s];
            used += 1;
        }
        if used == 0 {
            continue;
        }
        let metric = gamma.norm() - rho * phi;
        if best.is_none_or(|b| metric > b.0) {
            best = Some((metric, t, gamma, phi));
        }
    }
    let (_, timing_offset, gamma, phi) = best.ok_or_else(|| Error::FrameLost("no complete symbol".into()))?;
    let metric_peak = if phi > 0.0 { (gamma.norm() / phi).min(1.0) } else { 0.0 };
    let fractional_cfo_hz = -rx.sample_rate / (2.0 * PI * n as f64) * gamma.arg();
    let est = SyncEstimate {
        timing_offset,
        fractional_cfo_hz,
        metric_peak,
    };
    if metric_peak < rcfg.sync_threshold {
        return Err(Error::FrameLost(format!(
            "correlation peak {metric_peak:.3} below threshold {}",
            rcfg.sync_threshold
        )));
    }
    Ok(est)
}

pub fn cp_ml_sync(rx: &ComplexWaveform, cfg: &FrameConfig) -> Result<SyncEstimate> {
    cp_ml_sync_with(rx, cfg, &ReceiverConfig::default())
}

/// `rx[n] * exp(-j 2 pi cfo n / fs)`.
pub fn correct_cfo(rx: &ComplexWaveform, cfo_hz: f64) -> ComplexWaveform {
    let step = -2.0 * PI * cfo_hz / rx.sample_rate;
    let samples = rx
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| s * Complex64::from_polar(1.0, step * i as f64))
        .collect();
    ComplexWaveform {
        samples,
        sample_rate: rx.sample_rate,
    }
}

/// Pilot-based least-squares estimate of one OFDM symbol's channel over all
/// occupied positions.
///
/// Raw estimates `Y/X` at the pilots are first stripped of their common
/// linear phase (the signature of a residual timing offset), then a straight
/// line in subcarrier index is fitted by least squares to their real and
/// imaginary parts. The fitted line, with the phase ramp restored, gives the
/// coefficient of every subcarrier.
///
/// `bins` holds the signed frequency bin of each occupied position.
pub fn ls_estimate_channel(
    row: &[Complex64],
    bins: &[i64],
    pilot_positions: &[usize],
    pilot_reference: &[Complex64],
) -> Result<Vec<Complex64>> {
    if pilot_positions.len() < 2 || pilot_reference.len() != pilot_positions.len() {
        return Err(Error::invalid(format!(
            "need at least 2 pilots with matching references, got {} positions and {} values",
            pilot_positions.len(),
            pilot_reference.len()
        )));
    }
    if row.len() != bins.len() || pilot_positions.iter().any(|&p| p >= row.len()) {
        return Err(Error::invalid("pilot positions outside the row"));
    }
    if pilot_reference.iter().any(|x| x.norm_sqr() == 0.0) {
        return Err(Error::invalid("pilot reference contains a zero"));
    }
    let k: Vec<f64> = pilot_positions.iter().map(|&p| bins[p] as f64).collect();
    let raw: Vec<Complex64> = pilot_positions
        .iter()
        .zip(pilot_reference)
        .map(|(&p, x)| row[p] / x)
        .collect();

    // Phase slope per bin, from neighbouring pilots at the most common spacing.
    let gaps: Vec<f64> = k.windows(2).map(|w| w[1] - w[0]).collect();
    let spacing = modal(&gaps);
    let lag: Complex64 = raw
        .windows(2)
        .zip(&gaps)
        .filter(|(_, &g)| g == spacing)
        .map(|(w, _)| w[1] * w[0].conj())
        .sum();
    let slope = if lag.norm() > 0.0 { lag.arg() / spacing } else { 0.0 };

    let flat: Vec<Complex64> = raw
        .iter()
        .zip(&k)
        .map(|(h, &b)| h * Complex64::from_polar(1.0, -slope * b))
        .collect();
    let np = k.len() as f64;
    let k_mean = k.iter().sum::<f64>() / np;
    let h_mean = flat.iter().sum::<Complex64>() / np;
    let sxx: f64 = k.iter().map(|b| (b - k_mean).powi(2)).sum();
    let sxy: Complex64 = k.iter().zip(&flat).map(|(b, h)| (h - h_mean) * (b - k_mean)).sum();
    let tilt = if sxx > 0.0 { sxy / sxx } else { Complex64::new(0.0, 0.0) };

    Ok(bins
        .iter()
        .map(|&b| {
            let b = b as f64;
            (h_mean + tilt * (b - k_mean)) * Complex64::from_polar(1.0, slope * b)
        })
        .collect())
}

fn modal(values: &[f64]) -> f64 {
    let mut best = (values[0], 0usize);
    for v in values {
        let count = values.iter().filter(|w| *w == v).count();
        if count > best.1 {
            best = (*v, count);
        }
    }
    best.0
}

/// Zero-forced row plus the positions treated as erasures.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub values: Vec<Complex64>,
    pub erased: Vec<bool>,
}

/// `Y / H` per subcarrier. Subcarriers with `|H| < threshold` are left at
/// zero and flagged.
pub fn zf_equalize(row: &[Complex64], estimate: &[Complex64], threshold: f64) -> Result<Equalized> {
    if row.len() != estimate.len() {
        return Err(Error::invalid("row and channel estimate differ in length"));
    }
    if estimate.iter().any(|h| !(h.re.is_finite() && h.im.is_finite())) {
        return Err(Error::invalid("channel estimate is not finite"));
    }
    let erased: Vec<bool> = estimate.iter().map(|h| h.norm() < threshold).collect();
    if erased.iter().all(|&e| e) {
        return Err(Error::SymbolLost);
    }
    let values = row
        .iter()
        .zip(estimate)
        .zip(&erased)
        .map(|((y, h), &e)| if e { Complex64::new(0.0, 0.0) } else { y / h })
        .collect();
    Ok(Equalized { values, erased })
}

/// `-20 log10(EVM_rms)` with `EVM_rms = sqrt(mean|y-x|^2 / mean|x|^2)`, capped at [`SNR_CAP_DB`].
pub fn evm_snr(received: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if received.is_empty() || received.len() != reference.len() {
        return Err(Error::invalid("need at least one pilot and matching lengths"));
    }
    let ref_power: f64 = reference.iter().map(|x| x.norm_sqr()).sum();
    if ref_power == 0.0 {
        return Err(Error::invalid("reference has zero power"));
    }
    let err_power: f64 = received.iter().zip(reference).map(|(y, x)| (y - x).norm_sqr()).sum();
    let evm = (err_power / ref_power).sqrt();
    Ok((-20.0 * evm.log10()).min(SNR_CAP_DB))
}

/// Outcome of decoding one user's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRxReport {
    pub user: UserIndex,
    /// Decoded payload; empty when the frame was not detected.
    pub bits: BitBlock,
    /// Pilot EVM SNR per OFDM symbol, referred to the unit-power superposed
    /// signal. `None` for a symbol whose subcarriers were all erased.
    pub estimated_snr_db: Vec<Option<f64>>,
    pub estimated_cfo_hz: f64,
    pub detected: bool,
    pub sync: Option<SyncEstimate>,
    /// Hard decisions of each cancelled layer, weakest user first.
    pub stage_bits: Vec<BitBlock>,
    /// Bit positions that came from erased subcarriers.
    pub erased_bits: Vec<usize>,
}

impl UserRxReport {
    fn lost(user: UserIndex, symbols: usize) -> Self {
        UserRxReport {
            user,
            bits: BitBlock::default(),
            estimated_snr_db: vec![None; symbols],
            estimated_cfo_hz: f64::NAN,
            detected: false,
            sync: None,
            stage_bits: Vec::new(),
            erased_bits: Vec::new(),
        }
    }

    /// Bit errors of each SIC stage against the true payloads of the weaker users.
    pub fn sic_stage_errors(&self, payloads: &[BitBlock]) -> Vec<usize> {
        self.stage_bits
            .iter()
            .zip(payloads)
            .map(|(d, t)| d.hamming_distance(t))
            .collect()
    }
}

/// Receiver for one frame layout, pilot sequence and power allocation.
#[derive(Debug, Clone)]
pub struct Receiver {
    modem: OfdmModem,
    alloc: PowerAllocation,
    config: ReceiverConfig,
    /// Composite pilot per symbol: every user sends the same pilots.
    composite_pilots: Vec<Vec<Complex64>>,
    pilot_boost_db: f64,
}

impl Receiver {
    pub fn new(cfg: &FrameConfig, alloc: &PowerAllocation, pilot_seed: u64, config: &ReceiverConfig) -> Result<Self> {
        config.validate(cfg)?;
        let modem = OfdmModem::new(cfg)?;
        let gain = alloc.amplitude_sum();
        let composite_pilots = modem
            .pilot_values(pilot_seed)
            .into_iter()
            .map(|row| row.into_iter().map(|p| p * gain).collect())
            .collect();
        Ok(Receiver {
            modem,
            alloc: alloc.clone(),
            config: config.clone(),
            composite_pilots,
            pilot_boost_db: 20.0 * gain.log10(),
        })
    }

    pub fn modem(&self) -> &OfdmModem {
        &self.modem
    }

    /// Start of the first FFT window. The timing metric is periodic in the
    /// symbol length, so an estimate just below it may mean a boundary just
    /// before the buffer; it is taken one symbol earlier when the frame
    /// would otherwise overrun the buffer.
    fn first_body_start(&self, sync: &SyncEstimate, buffer_len: usize) -> usize {
        let cfg = self.modem.config();
        let lead = cfg.cp_length - self.config.fft_backoff;
        let start = sync.timing_offset + lead;
        let end = start + (cfg.symbols_per_frame - 1) * cfg.symbol_len() + cfg.fft_size;
        if end > buffer_len && start >= cfg.symbol_len() {
            start - cfg.symbol_len()
        } else {
            start
        }
    }

    /// sync -> CFO correction -> FFT -> LS -> ZF -> EVM SNR -> SIC -> demap.
    pub fn receive(&self, rx: &ComplexWaveform, user: UserIndex) -> Result<UserRxReport> {
        let cfg = self.modem.config();
        if user.get() > self.alloc.num_users() {
            return Err(Error::invalid(format!("user {user} is not in the allocation")));
        }
        let sync = match cp_ml_sync_with(rx, cfg, &self.config) {
            Ok(s) => s,
            Err(Error::FrameLost(_)) | Err(Error::InvalidInput(_)) => {
                return Ok(UserRxReport::lost(user, cfg.symbols_per_frame))
            }
            Err(e) => return Err(e),
        };
        let cfo = sync.fractional_cfo_hz + self.config.cfo_bias_hz;
        let corrected;
        let samples = if self.config.correct_cfo {
            corrected = correct_cfo(rx, cfo);
            &corrected.samples
        } else {
            &rx.samples
        };

        let data_pos = self.modem.data_positions();
        let pilot_pos = self.modem.pilot_positions();
        let bps = self.modem.mapper().bits_per_symbol();
        let mut data = Vec::with_capacity(cfg.data_subcarriers * cfg.symbols_per_frame);
        let mut erased_symbols = Vec::new();
        let mut snr = Vec::with_capacity(cfg.symbols_per_frame);
        let first_body = self.first_body_start(&sync, samples.len());
        for m in 0..cfg.symbols_per_frame {
            let body = first_body + m * cfg.symbol_len();
            let row = match self.modem.demodulate_symbol(samples, body) {
                Ok(r) => r,
                Err(Error::FrameLost(_)) => return Ok(UserRxReport::lost(user, cfg.symbols_per_frame)),
                Err(e) => return Err(e),
            };
            let reference = &self.composite_pilots[m];
            let estimate = ls_estimate_channel(&row, self.modem.bins(), pilot_pos, reference)?;
            match zf_equalize(&row, &estimate, self.config.zf_threshold) {
                Ok(eq) => {
                    let pilots: Vec<Complex64> = pilot_pos.iter().map(|&p| eq.values[p]).collect();
                    let usable: Vec<usize> = (0..pilots.len()).filter(|&i| !eq.erased[pilot_pos[i]]).collect();
                    snr.push(if usable.is_empty() {
                        None
                    } else {
                        let y: Vec<Complex64> = usable.iter().map(|&i| pilots[i]).collect();
                        let x: Vec<Complex64> = usable.iter().map(|&i| reference[i]).collect();
                        Some(evm_snr(&y, &x)? - self.pilot_boost_db)
                    });
                    for &p in data_pos {
                        if eq.erased[p] {
                            erased_symbols.push(data.len());
                        }
                        data.push(eq.values[p]);
                    }
                }
                Err(Error::SymbolLost) => {
                    snr.push(None);
                    erased_symbols.extend(data.len()..data.len() + data_pos.len());
                    data.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), data_pos.len()));
                }
                Err(e) => return Err(e),
            }
        }

        let sic = sic_decode(&data, &self.alloc, user, self.modem.mapper())?;
        let mut bits = sic.own_bits;
        let mut erased_bits = Vec::with_capacity(erased_symbols.len() * bps);
        for s in erased_symbols {
            for b in s * bps..(s + 1) * bps {
                bits.0[b] = 0;
                erased_bits.push(b);
            }
        }
        Ok(UserRxReport {
            user,
            bits,
            estimated_snr_db: snr,
            estimated_cfo_hz: cfo,
            detected: true,
            sync: Some(sync),
            stage_bits: sic.stage_bits,
            erased_bits,
        })
    }
}

/// Decodes `user`'s payload from one received frame with default receiver settings.
pub fn receive_user(
    rx: &ComplexWaveform,
    cfg: &FrameConfig,
    alloc: &PowerAllocation,
    user: UserIndex,
    pilot_seed: u64,
) -> Result<UserRxReport> {
    Receiver::new(cfg, alloc, pilot_seed, &ReceiverConfig::default())?.receive(rx, user)
}
