use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ChannelParams;

/// Number of diffuse tones in the sum-of-sinusoids generator.
pub const DIFFUSE_TONES: usize = 64;

/// Flat Rician fading as a fixed-phase line-of-sight term plus a
/// sum-of-sinusoids diffuse term.
///
/// Each diffuse tone arrives from angle `theta_i`, so its Doppler frequency is
/// `f_d * cos(theta_i)`. The process is driven by an accumulated Doppler phase
/// `phi = 2*pi * integral(f_d dt)` rather than by time, which lets a vehicle
/// that stops and starts again see a spatially consistent channel.
///
/// Tone amplitudes are equal, so the diffuse power of every realization is
/// exactly `1/(K+1)`; arrival angles are stratified over `(0, pi)` which
/// keeps all tone frequencies distinct.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    los: Complex64,
    tone_amplitude: f64,
    tone_phase: Vec<f64>,
    tone_cos: Vec<f64>,
}

impl FadingProcess {
    pub fn new(rician_k: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (los_power, diffuse_power) = if rician_k.is_infinite() {
            (1.0, 0.0)
        } else {
            (rician_k / (rician_k + 1.0), 1.0 / (rician_k + 1.0))
        };
        let los = Complex64::from_polar(los_power.sqrt(), rng.gen_range(0.0..2.0 * PI));
        let tone_phase = (0..DIFFUSE_TONES).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let tone_cos = (0..DIFFUSE_TONES)
            .map(|i| (PI * (i as f64 + rng.gen::<f64>()) / DIFFUSE_TONES as f64).cos())
            .collect();
        FadingProcess {
            los,
            tone_amplitude: (diffuse_power / DIFFUSE_TONES as f64).sqrt(),
            tone_phase,
            tone_cos,
        }
    }

    pub fn line_of_sight(&self) -> Complex64 {
        self.los
    }

    /// Gain at accumulated Doppler phase `phi` (radians).
    pub fn gain_at(&self, phi: f64) -> Complex64 {
        let diffuse: Complex64 = self
            .tone_phase
            .iter()
            .zip(&self.tone_cos)
            .map(|(&p, &c)| Complex64::from_polar(1.0, p + c * phi))
            .sum();
        self.los + diffuse * self.tone_amplitude
    }

    /// Fills `out` with gains at phases `phi0 + n * dphi`.
    pub fn fill(&self, phi0: f64, dphi: f64, out: &mut [Complex64]) {
        if dphi == 0.0 || self.tone_amplitude == 0.0 {
            let g = self.gain_at(phi0);
            out.iter_mut().for_each(|o| *o = g);
            return;
        }
        // Restart the phasor recursion from exact values every block.
        const BLOCK: usize = 256;
        let steps: Vec<Complex64> = self
            .tone_cos
            .iter()
            .map(|&c| Complex64::from_polar(1.0, c * dphi))
            .collect();
        let mut tones = vec![Complex64::new(0.0, 0.0); DIFFUSE_TONES];
        for (b, chunk) in out.chunks_mut(BLOCK).enumerate() {
            let phi = phi0 + (b * BLOCK) as f64 * dphi;
            for ((t, &p), &c) in tones.iter_mut().zip(&self.tone_phase).zip(&self.tone_cos) {
                *t = Complex64::from_polar(self.tone_amplitude, p + c * phi);
            }
            for o in chunk.iter_mut() {
                *o = self.los + tones.iter().sum::<Complex64>();
                for (t, s) in tones.iter_mut().zip(&steps) {
                    *t *= s;
                }
            }
        }
    }
}

/// `n_samples` of fading at a constant maximum Doppler of `params.doppler_hz`.
pub fn generate_fading(params: &ChannelParams, n_samples: usize, sample_rate: f64, seed: u64) -> Vec<Complex64> {
    let process = FadingProcess::new(params.rician_k, seed);
    let mut out = vec![Complex64::new(0.0, 0.0); n_samples];
    process.fill(0.0, 2.0 * PI * params.doppler_hz / sample_rate, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: f64, doppler: f64) -> ChannelParams {
        ChannelParams {
            rician_k: k,
            doppler_hz: doppler,
            ..ChannelParams::default()
        }
    }

    #[test]
    fn pure_los_limit() {
        let g = generate_fading(&params(1e9, 50.0), 10_000, 5e5, 3);
        assert!(g.iter().all(|h| (h.norm() - 1.0).abs() < 1e-3));
    }

    #[test]
    fn recursion_matches_direct_evaluation() {
        let p = FadingProcess::new(2.0, 9);
        let dphi = 2.0 * PI * 300.0 / 5e5;
        let mut out = vec![Complex64::new(0.0, 0.0); 2000];
        p.fill(0.7, dphi, &mut out);
        for (n, g) in out.iter().enumerate() {
            assert!((g - p.gain_at(0.7 + n as f64 * dphi)).norm() < 1e-10);
        }
    }

    #[test]
    fn rayleigh_mean_power() {
        // 1e6 samples spanning ~400 Doppler periods.
        let g = generate_fading(&params(0.0, 200.0), 1_000_000, 5e5, 4);
        let p = g.iter().map(|h| h.norm_sqr()).sum::<f64>() / g.len() as f64;
        assert!((p - 1.0).abs() < 0.02, "mean power {p}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_fading(&params(10.92, 6.84), 500, 5e5, 11);
        let b = generate_fading(&params(10.92, 6.84), 500, 5e5, 11);
        let c = generate_fading(&params(10.92, 6.84), 500, 5e5, 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
