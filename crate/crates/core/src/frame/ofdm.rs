use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};

use super::{BitBlock, ComplexWaveform, FrameConfig, QamMapper, SubcarrierGrid};
use crate::error::{Error, Result};

/// OFDM modulator/demodulator with cached FFT plans for one [`FrameConfig`].
#[derive(Clone)]
pub struct OfdmModem {
    cfg: FrameConfig,
    mapper: QamMapper,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// FFT bin index of every occupied position.
    fft_index: Vec<usize>,
    bins: Vec<i64>,
    pilot_mask: Vec<bool>,
    data_positions: Vec<usize>,
    pilot_positions: Vec<usize>,
    scale: f64,
}

impl std::fmt::Debug for OfdmModem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OfdmModem").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl OfdmModem {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        let n = cfg.fft_size;
        let bins = cfg.occupied_bins();
        Ok(OfdmModem {
            cfg: cfg.clone(),
            mapper: QamMapper::new(cfg.modulation_order)?,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            fft_index: bins.iter().map(|&b| b.rem_euclid(n as i64) as usize).collect(),
            bins,
            pilot_mask: cfg.pilot_mask(),
            data_positions: cfg.data_positions(),
            pilot_positions: cfg.pilot_positions(),
            scale: 1.0 / (n as f64).sqrt(),
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.cfg
    }

    pub fn mapper(&self) -> &QamMapper {
        &self.mapper
    }

    pub fn bins(&self) -> &[i64] {
        &self.bins
    }

    pub fn pilot_mask(&self) -> &[bool] {
        &self.pilot_mask
    }

    pub fn pilot_positions(&self) -> &[usize] {
        &self.pilot_positions
    }

    pub fn data_positions(&self) -> &[usize] {
        &self.data_positions
    }

    /// BPSK pilot values, one row per OFDM symbol, regenerated from `pilot_seed`.
    pub fn pilot_values(&self, pilot_seed: u64) -> Vec<Vec<Complex64>> {
        pilot_values(&self.cfg, pilot_seed)
    }

    /// Maps a payload to a frame waveform. The returned grid holds exactly the
    /// transmitted pilots and data so tests can use it as ground truth.
    pub fn assemble(&self, payload: &BitBlock, pilot_seed: u64) -> Result<(ComplexWaveform, SubcarrierGrid)> {
        let expected = self.cfg.payload_bits();
        if payload.len() != expected {
            return Err(Error::invalid(format!(
                "payload has {} bits, frame carries {expected}",
                payload.len()
            )));
        }
        let symbols = self.mapper.modulate(payload.as_slice())?;
        let pilots = self.pilot_values(pilot_seed);
        let zero = Complex64::new(0.0, 0.0);
        let rows: Vec<Vec<Complex64>> = symbols
            .chunks_exact(self.cfg.data_subcarriers)
            .zip(&pilots)
            .map(|(data, pilot_row)| {
                let mut row = vec![zero; self.cfg.total_subcarriers];
                for (&pos, &p) in self.pilot_positions.iter().zip(pilot_row) {
                    row[pos] = p;
                }
                for (&pos, &d) in self.data_positions.iter().zip(data) {
                    row[pos] = d;
                }
                row
            })
            .collect();
        let grid = SubcarrierGrid {
            rows,
            pilot_mask: self.pilot_mask.clone(),
        };
        Ok((self.modulate_grid(&grid), grid))
    }

    /// IFFT plus cyclic prefix for every row of `grid`.
    pub fn modulate_grid(&self, grid: &SubcarrierGrid) -> ComplexWaveform {
        let n = self.cfg.fft_size;
        let cp = self.cfg.cp_length;
        let mut out = Vec::with_capacity(grid.rows.len() * (n + cp));
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for row in &grid.rows {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (&idx, &v) in self.fft_index.iter().zip(row) {
                buf[idx] = v;
            }
            self.ifft.process(&mut buf);
            buf.iter_mut().for_each(|v| *v *= self.scale);
            out.extend_from_slice(&buf[n - cp..]);
            out.extend_from_slice(&buf);
        }
        ComplexWaveform {
            samples: out,
            sample_rate: self.cfg.sample_rate_hz,
        }
    }

    /// FFT of the `fft_size` samples starting at `body_start` (the CP already
    /// skipped), returning the occupied subcarriers.
    pub fn demodulate_symbol(&self, samples: &[Complex64], body_start: usize) -> Result<Vec<Complex64>> {
        let n = self.cfg.fft_size;
        let end = body_start
            .checked_add(n)
            .filter(|&e| e <= samples.len())
            .ok_or_else(|| {
                Error::FrameLost(format!(
                    "symbol at {body_start} needs {n} samples, buffer has {}",
                    samples.len()
                ))
            })?;
        let mut buf = samples[body_start..end].to_vec();
        self.fft.process(&mut buf);
        Ok(self.fft_index.iter().map(|&i| buf[i] * self.scale).collect())
    }
}

/// BPSK pilot values, one row per OFDM symbol.
pub fn pilot_values(cfg: &FrameConfig, pilot_seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(pilot_seed);
    (0..cfg.symbols_per_frame)
        .map(|_| {
            (0..cfg.pilot_subcarriers)
                .map(|_| Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0))
                .collect()
        })
        .collect()
}

pub fn assemble_frame(
    payload: &BitBlock,
    cfg: &FrameConfig,
    pilot_seed: u64,
) -> Result<(ComplexWaveform, SubcarrierGrid)> {
    OfdmModem::new(cfg)?.assemble(payload, pilot_seed)
}

pub fn disassemble_symbol(
    samples: &ComplexWaveform,
    cfg: &FrameConfig,
    symbol_start: usize,
) -> Result<Vec<Complex64>> {
    OfdmModem::new(cfg)?.demodulate_symbol(&samples.samples, symbol_start)
}
