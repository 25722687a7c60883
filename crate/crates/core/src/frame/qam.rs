use num_complex::Complex64;

use super::BitBlock;
use crate::error::{Error, Result};

/// Square Gray-mapped QAM with unit average symbol energy.
///
/// The first half of each symbol's bits selects the in-phase level, the second
/// half the quadrature level. Bit value 0 maps to the positive outer level, so
/// for 4-QAM `(b1, b0) -> ((1 - 2*b1) + j(1 - 2*b0)) / sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QamMapper {
    order: usize,
    bits_per_axis: usize,
    levels: usize,
    /// Divides integer levels down to unit average energy.
    norm: f64,
}

impl QamMapper {
    pub fn new(order: usize) -> Result<Self> {
        if order < 4 || !order.is_power_of_two() || !order.trailing_zeros().is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "modulation order {order} is not a square QAM order"
            )));
        }
        let bits_per_axis = order.trailing_zeros() as usize / 2;
        let levels = 1usize << bits_per_axis;
        Ok(QamMapper {
            order,
            bits_per_axis,
            levels,
            norm: (2.0 * (order as f64 - 1.0) / 3.0).sqrt(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    fn level(&self, axis_bits: &[u8]) -> f64 {
        let gray = axis_bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
        let mut index = gray;
        let mut shift = gray >> 1;
        while shift != 0 {
            index ^= shift;
            shift >>= 1;
        }
        (self.levels as f64 - 1.0 - 2.0 * index as f64) / self.norm
    }

    fn decide_axis(&self, v: f64, out: &mut Vec<u8>) {
        let top = (self.levels - 1) as f64;
        let index = ((top - v * self.norm) / 2.0).round().clamp(0.0, top) as usize;
        let gray = index ^ (index >> 1);
        for k in (0..self.bits_per_axis).rev() {
            out.push(((gray >> k) & 1) as u8);
        }
    }

    pub fn map(&self, bits: &[u8]) -> Complex64 {
        let (i, q) = bits.split_at(self.bits_per_axis);
        Complex64::new(self.level(i), self.level(q))
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol();
        if !bits.len().is_multiple_of(bps) {
            return Err(Error::invalid(format!(
                "{} bits is not a multiple of {bps} bits per symbol",
                bits.len()
            )));
        }
        Ok(bits.chunks_exact(bps).map(|c| self.map(c)).collect())
    }

    /// Hard decision of one symbol, appending its bits to `out`.
    pub fn demap_into(&self, symbol: Complex64, out: &mut Vec<u8>) {
        self.decide_axis(symbol.re, out);
        self.decide_axis(symbol.im, out);
    }

    /// Nearest constellation point.
    pub fn slice(&self, symbol: Complex64) -> Complex64 {
        let mut bits = Vec::with_capacity(self.bits_per_symbol());
        self.demap_into(symbol, &mut bits);
        self.map(&bits)
    }

    pub fn demodulate(&self, symbols: &[Complex64]) -> Result<BitBlock> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for (i, s) in symbols.iter().enumerate() {
            if !(s.re.is_finite() && s.im.is_finite()) {
                return Err(Error::invalid(format!("symbol {i} is not finite")));
            }
            self.demap_into(*s, &mut out);
        }
        Ok(BitBlock(out))
    }
}

pub fn qam_modulate(bits: &BitBlock, order: usize) -> Result<Vec<Complex64>> {
    QamMapper::new(order)?.modulate(bits.as_slice())
}

pub fn qam_demodulate(symbols: &[Complex64], order: usize) -> Result<BitBlock> {
    QamMapper::new(order)?.demodulate(symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn qpsk_corners() {
        let s = qam_modulate(&BitBlock(vec![0, 0, 1, 1, 1, 0, 0, 1]), 4).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!(close(s[0], Complex64::new(h, h)));
        assert!(close(s[1], Complex64::new(-h, -h)));
        assert!(close(s[2], Complex64::new(-h, h)));
        assert!(close(s[3], Complex64::new(h, -h)));
    }

    #[test]
    fn nearest_neighbour_decision() {
        let s = Complex64::new(0.9, 1.1) * FRAC_1_SQRT_2;
        assert_eq!(qam_demodulate(&[s], 4).unwrap().0, vec![0, 0]);
    }

    #[test]
    fn rejects_ragged_bits_and_nan() {
        assert!(qam_modulate(&BitBlock(vec![0, 1, 1]), 4).is_err());
        assert!(qam_demodulate(&[Complex64::new(f64::NAN, 0.0)], 4).is_err());
        assert!(QamMapper::new(8).is_err());
        assert!(QamMapper::new(2).is_err());
    }

    #[test]
    fn payload_of_1250_bits_gives_625_symbols() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let bits = BitBlock::random(1250, &mut rng);
        let syms = qam_modulate(&bits, 4).unwrap();
        assert_eq!(syms.len(), 625);
        assert_eq!(qam_demodulate(&syms, 4).unwrap(), bits);
    }

    #[test]
    fn unit_energy_and_gray_neighbours() {
        for order in [4usize, 16, 64, 256] {
            let m = QamMapper::new(order).unwrap();
            let bps = m.bits_per_symbol();
            let points: Vec<(usize, Complex64)> = (0..order)
                .map(|v| {
                    let bits: Vec<u8> = (0..bps).rev().map(|k| ((v >> k) & 1) as u8).collect();
                    (v, m.map(&bits))
                })
                .collect();
            let energy: f64 = points.iter().map(|(_, p)| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((energy - 1.0).abs() < 1e-12, "order {order}");
            // Nearest neighbours differ in exactly one bit.
            let dmin = points
                .iter()
                .flat_map(|a| points.iter().map(move |b| (a.1 - b.1).norm()))
                .filter(|d| *d > 1e-9)
                .fold(f64::INFINITY, f64::min);
            for (va, a) in &points {
                for (vb, b) in &points {
                    if ((a - b).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((va ^ vb).count_ones(), 1, "order {order}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn roundtrip(bits in proptest::collection::vec(0u8..=1, 0..64).prop_map(|mut v| { v.truncate(v.len() / 4 * 4); v }),
                     order in prop_oneof![Just(4usize), Just(16usize)]) {
            let block = BitBlock(bits);
            let syms = qam_modulate(&block, order).unwrap();
            prop_assert_eq!(qam_demodulate(&syms, order).unwrap(), block);
        }
    }
}
