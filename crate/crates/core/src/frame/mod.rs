//! Bit/symbol mapping and OFDM frame assembly for a single user's payload.
//!
//! A frame is `symbols_per_frame` OFDM symbols. Each symbol carries
//! `total_subcarriers` occupied bins centred on DC (the DC bin itself stays
//! empty); every `total/pilots`-th occupied position holds a BPSK pilot and
//! the rest carry Gray-mapped QAM data.

mod ofdm;
mod qam;

pub use ofdm::{assemble_frame, disassemble_symbol, pilot_values, OfdmModem};
pub use qam::{qam_demodulate, qam_modulate, QamMapper};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Waveform dimensioning shared by the transmitter and every receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    pub data_subcarriers: usize,
    pub pilot_subcarriers: usize,
    pub total_subcarriers: usize,
    pub symbols_per_frame: usize,
    pub fft_size: usize,
    pub cp_length: usize,
    pub modulation_order: usize,
    pub sample_rate_hz: f64,
    pub carrier_frequency_hz: f64,
    /// Carried as metadata only; `sample_rate_hz` sets the waveform numerology.
    pub bandwidth_hz: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            data_subcarriers: 125,
            pilot_subcarriers: 25,
            total_subcarriers: 150,
            symbols_per_frame: 5,
            fft_size: 256,
            cp_length: 64,
            modulation_order: 4,
            sample_rate_hz: 5.0e5,
            carrier_frequency_hz: 2.34e9,
            bandwidth_hz: 8.0e5,
        }
    }
}

impl FrameConfig {
    /// Checks every structural invariant. Field names in errors are prefixed with `frame.`.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("frame.{name}");
        if self.data_subcarriers + self.pilot_subcarriers != self.total_subcarriers {
            return Err(Error::config(
                field("total_subcarriers"),
                format!(
                    "data ({}) + pilot ({}) subcarriers must equal total ({})",
                    self.data_subcarriers, self.pilot_subcarriers, self.total_subcarriers
                ),
            ));
        }
        if self.data_subcarriers == 0 {
            return Err(Error::config(field("data_subcarriers"), "must be positive"));
        }
        if self.pilot_subcarriers < 2 {
            return Err(Error::config(
                field("pilot_subcarriers"),
                "at least 2 pilots are needed for channel estimation",
            ));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::config(field("fft_size"), "must be a power of two"));
        }
        // One extra bin for the empty DC carrier.
        if self.total_subcarriers + 1 > self.fft_size {
            return Err(Error::config(
                field("fft_size"),
                format!(
                    "{} occupied subcarriers plus DC do not fit in {} bins",
                    self.total_subcarriers, self.fft_size
                ),
            ));
        }
        if self.cp_length == 0 || self.cp_length > self.fft_size {
            return Err(Error::config(field("cp_length"), "must be in 1..=fft_size"));
        }
        if self.symbols_per_frame == 0 {
            return Err(Error::config(field("symbols_per_frame"), "must be positive"));
        }
        if !is_power_of_four(self.modulation_order) {
            return Err(Error::config(
                field("modulation_order"),
                "must be a power of 4 (square QAM), at least 4",
            ));
        }
        for (name, v) in [
            ("sample_rate_hz", self.sample_rate_hz),
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("bandwidth_hz", self.bandwidth_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field(name), "must be finite and positive"));
            }
        }
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation_order.trailing_zeros() as usize
    }

    /// Payload bits carried by one frame (1250 with the defaults).
    pub fn payload_bits(&self) -> usize {
        self.data_subcarriers * self.symbols_per_frame * self.bits_per_symbol()
    }

    pub fn bits_per_ofdm_symbol(&self) -> usize {
        self.data_subcarriers * self.bits_per_symbol()
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_length
    }

    pub fn frame_len(&self) -> usize {
        self.symbols_per_frame * self.symbol_len()
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.fft_size as f64
    }

    pub fn symbol_duration_s(&self) -> f64 {
        self.symbol_len() as f64 / self.sample_rate_hz
    }

    pub fn frame_duration_s(&self) -> f64 {
        self.frame_len() as f64 / self.sample_rate_hz
    }

    /// Signed frequency bin of each occupied position, ascending, DC skipped.
    pub fn occupied_bins(&self) -> Vec<i64> {
        let neg = (self.total_subcarriers / 2) as i64;
        let pos = self.total_subcarriers as i64 - neg;
        (-neg..0).chain(1..=pos).collect()
    }

    /// Indices into the occupied positions that carry pilots.
    pub fn pilot_positions(&self) -> Vec<usize> {
        (0..self.pilot_subcarriers)
            .map(|i| i * self.total_subcarriers / self.pilot_subcarriers)
            .collect()
    }

    pub fn pilot_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total_subcarriers];
        for p in self.pilot_positions() {
            mask[p] = true;
        }
        mask
    }

    pub fn data_positions(&self) -> Vec<usize> {
        let mask = self.pilot_mask();
        (0..self.total_subcarriers).filter(|&i| !mask[i]).collect()
    }
}

fn is_power_of_four(n: usize) -> bool {
    n >= 4 && n.is_power_of_two() && n.trailing_zeros().is_multiple_of(2)
}

/// An ordered sequence of bits, one `u8` (0 or 1) per bit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitBlock(pub Vec<u8>);

impl BitBlock {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::invalid(format!("bit {pos} is {}, not 0 or 1", bits[pos])));
        }
        Ok(BitBlock(bits))
    }

    pub fn zeros(len: usize) -> Self {
        BitBlock(vec![0; len])
    }

    pub fn random<R: rand::Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        BitBlock((0..len).map(|_| rng.gen_range(0..=1u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// Number of positions where `self` and `other` differ, over the common prefix.
    pub fn hamming_distance(&self, other: &BitBlock) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl From<Vec<u8>> for BitBlock {
    fn from(v: Vec<u8>) -> Self {
        BitBlock(v.into_iter().map(|b| b & 1).collect())
    }
}

/// Complex baseband samples tagged with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexWaveform {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl ComplexWaveform {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample rate must be finite and positive"));
        }
        Ok(ComplexWaveform {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        ComplexWaveform {
            samples: vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Frequency-domain content of a frame: one row of occupied subcarriers per OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierGrid {
    pub rows: Vec<Vec<Complex64>>,
    pub pilot_mask: Vec<bool>,
}

impl SubcarrierGrid {
    /// Data subcarriers of every row, concatenated row-major.
    pub fn data_symbols(&self) -> Vec<Complex64> {
        self.rows
            .iter()
            .flat_map(|row| {
                row.iter()
                    .zip(&self.pilot_mask)
                    .filter(|(_, &p)| !p)
                    .map(|(v, _)| *v)
            })
            .collect()
    }

    pub fn pilot_symbols(&self, row: usize) -> Vec<Complex64> {
        self.rows[row]
            .iter()
            .zip(&self.pilot_mask)
            .filter(|(_, &p)| p)
            .map(|(v, _)| *v)
            .collect()
    }
}
