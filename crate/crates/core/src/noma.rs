//! Power-domain superposition and successive interference cancellation.
//!
//! Users are indexed 1..=K from the farthest (weakest channel, largest power
//! share) to the nearest. User `k` cancels users `1..k` in order, then
//! decodes its own layer; user 1 decodes directly and sees the others as noise.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BitBlock, ComplexWaveform, QamMapper};

/// Power coefficients of the testbed allocation, far to near.
pub const TESTBED_COEFFICIENTS: [f64; 3] = [0.761, 0.191, 0.048];

const SUM_TOLERANCE: f64 = 1e-9;

/// Per-user power fractions, ordered far (index 0) to near.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PowerAllocation {
    coefficients: Vec<f64>,
}

impl PowerAllocation {
    /// Requires positive, non-increasing coefficients summing to 1 within 1e-9.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("allocation needs at least one user"));
        }
        if let Some(i) = coefficients.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::invalid(format!(
                "coefficient {} is {}, must be positive",
                i + 1,
                coefficients[i]
            )));
        }
        let sum: f64 = coefficients.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "coefficients sum to {sum}, must sum to 1 (normalize them)"
            )));
        }
        if let Some(w) = coefficients.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::invalid(format!(
                "coefficient {} exceeds coefficient {}; order users far to near",
                w + 2,
                w + 1
            )));
        }
        Ok(PowerAllocation { coefficients })
    }

    pub fn testbed() -> Self {
        PowerAllocation {
            coefficients: TESTBED_COEFFICIENTS.to_vec(),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn num_users(&self) -> usize {
        self.coefficients.len()
    }

    /// Amplitude scale `sqrt(alpha_k)` of 1-based user `k`.
    pub fn amplitude(&self, k: usize) -> f64 {
        self.coefficients[k - 1].sqrt()
    }

    /// Sum of all amplitude scales: the gain seen by a pilot that every user
    /// transmits identically.
    pub fn amplitude_sum(&self) -> f64 {
        self.coefficients.iter().map(|a| a.sqrt()).sum()
    }

    /// True when, for square QAM, each layer's amplitude exceeds the summed
    /// amplitudes of all weaker layers, so noiseless SIC decisions are exact.
    /// Only checked for 4-QAM, where it is also necessary.
    pub fn is_sic_separable(&self) -> bool {
        let amps: Vec<f64> = self.coefficients.iter().map(|a| a.sqrt()).collect();
        (0..amps.len()).all(|j| amps[j] > amps[j + 1..].iter().sum::<f64>())
    }
}

impl TryFrom<Vec<f64>> for PowerAllocation {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        PowerAllocation::new(v)
    }
}

impl From<PowerAllocation> for Vec<f64> {
    fn from(a: PowerAllocation) -> Self {
        a.coefficients
    }
}

/// A 1-based user position in the far-to-near ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserIndex(usize);

impl UserIndex {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("user indices start at 1"));
        }
        Ok(UserIndex(k))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Number of cancellation stages this user runs before decoding itself.
    pub fn sic_depth(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for UserIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `alpha_k = d_k^2 / sum d_j^2`, returned sorted far to near.
pub fn allocate_power_by_distance(distances: &[f64]) -> Result<PowerAllocation> {
    if distances.is_empty() {
        return Err(Error::invalid("no distances given"));
    }
    if let Some(i) = distances.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::invalid(format!(
            "distance {} is {}, must be positive",
            i + 1,
            distances[i]
        )));
    }
    let total: f64 = distances.iter().map(|d| d * d).sum();
    let mut coefficients: Vec<f64> = distances.iter().map(|d| d * d / total).collect();
    coefficients.sort_by(|a, b| b.total_cmp(a));
    PowerAllocation::new(coefficients)
}

/// `out[n] = sum_k sqrt(alpha_k) * x_k[n]`.
pub fn superpose(users: &[ComplexWaveform], alloc: &PowerAllocation) -> Result<ComplexWaveform> {
    if users.len() != alloc.num_users() {
        return Err(Error::invalid(format!(
            "{} waveforms for {} power coefficients",
            users.len(),
            alloc.num_users()
        )));
    }
    let len = users[0].len();
    if users.iter().any(|u| u.len() != len) {
        return Err(Error::invalid("user waveforms differ in length"));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (k, user) in users.iter().enumerate() {
        let a = alloc.amplitude(k + 1);
        for (o, x) in out.iter_mut().zip(&user.samples) {
            *o += x * a;
        }
    }
    Ok(ComplexWaveform {
        samples: out,
        sample_rate: users[0].sample_rate,
    })
}

/// Result of decoding one user's layer from an equalized superposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SicOutput {
    /// Residual after cancellation, rescaled by `1/sqrt(alpha_k)`.
    pub own_symbols: Vec<Complex64>,
    pub own_bits: BitBlock,
    /// Hard decisions of the cancelled layers, weakest user first.
    pub stage_bits: Vec<BitBlock>,
}

/// Hard-decision SIC: for each weaker user `j < k`, slice `residual/sqrt(alpha_j)`,
/// remodulate, and subtract `sqrt(alpha_j)` times the decision; then slice the
/// remaining signal for user `k`. Wrong stage decisions propagate.
pub fn sic_decode(
    equalized: &[Complex64],
    alloc: &PowerAllocation,
    user: UserIndex,
    mapper: &QamMapper,
) -> Result<SicOutput> {
    if user.get() > alloc.num_users() {
        return Err(Error::invalid(format!(
            "user {user} outside a {}-user allocation",
            alloc.num_users()
        )));
    }
    let mut residual = equalized.to_vec();
    let mut stage_bits = Vec::with_capacity(user.sic_depth());
    let mut bits = Vec::with_capacity(residual.len() * mapper.bits_per_symbol());
    for j in 1..user.get() {
        let a = alloc.amplitude(j);
        bits.clear();
        for r in residual.iter_mut() {
            let start = bits.len();
            mapper.demap_into(*r / a, &mut bits);
            *r -= mapper.map(&bits[start..]) * a;
        }
        stage_bits.push(BitBlock(bits.clone()));
    }
    let a = alloc.amplitude(user.get());
    let own_symbols: Vec<Complex64> = residual.iter().map(|r| r / a).collect();
    let own_bits = mapper.demodulate(&own_symbols)?;
    Ok(SicOutput {
        own_symbols,
        own_bits,
        stage_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::qam_modulate;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distance_squared_policy() {
        let a = allocate_power_by_distance(&[4.27, 4.02, 3.90]).unwrap();
        for (got, want) in a.coefficients().iter().zip([0.368, 0.326, 0.307]) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        let eq = allocate_power_by_distance(&[1.0, 1.0, 1.0]).unwrap();
        assert!(eq.coefficients().iter().all(|c| (c - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(allocate_power_by_distance(&[5.0]).unwrap().coefficients(), &[1.0]);
        // Unsorted input still puts the farthest user first.
        let b = allocate_power_by_distance(&[1.0, 2.0]).unwrap();
        assert!((b.coefficients()[0] - 0.8).abs() < 1e-12);
        assert!(allocate_power_by_distance(&[1.0, 0.0]).is_err());
        assert!(allocate_power_by_distance(&[-1.0]).is_err());
    }

    #[test]
    fn allocation_invariants() {
        assert!(PowerAllocation::new(vec![0.5, 0.4]).is_err());
        assert!(PowerAllocation::new(vec![0.2, 0.8]).is_err());
        assert!(PowerAllocation::new(vec![1.0, 0.0]).is_err());
        assert!(PowerAllocation::new(vec![]).is_err());
        let t = PowerAllocation::testbed();
        assert!(t.is_sic_separable());
        assert!(!allocate_power_by_distance(&[4.27, 4.02, 3.90]).unwrap().is_sic_separable());
    }

    #[test]
    fn superpose_identity_and_zero() {
        let x = ComplexWaveform::new(vec![Complex64::new(0.3, -0.2), Complex64::new(1.0, 2.0)], 1.0).unwrap();
        let one = PowerAllocation::new(vec![1.0]).unwrap();
        assert_eq!(superpose(std::slice::from_ref(&x), &one).unwrap(), x);
        let z = ComplexWaveform::zeros(4, 1.0);
        let out = superpose(&[z.clone(), z.clone(), z], &PowerAllocation::testbed()).unwrap();
        assert!(out.samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn superpose_same_symbol() {
        let s = Complex64::new(1.0, 1.0) / 2f64.sqrt();
        let w = ComplexWaveform::new(vec![s], 1.0).unwrap();
        let out = superpose(&[w.clone(), w.clone(), w], &PowerAllocation::testbed()).unwrap();
        let want = (0.761f64.sqrt() + 0.191f64.sqrt() + 0.048f64.sqrt()) * s;
        assert!((out.samples[0] - want).norm() < 1e-15);
    }

    #[test]
    fn superpose_rejects_mismatch() {
        let a = ComplexWaveform::zeros(3, 1.0);
        let b = ComplexWaveform::zeros(4, 1.0);
        let alloc = PowerAllocation::new(vec![0.8, 0.2]).unwrap();
        assert!(superpose(&[a.clone(), b], &alloc).is_err());
        assert!(superpose(&[a], &alloc).is_err());
    }

    fn layers(n_users: usize, n: usize, seed: u64) -> Vec<(BitBlock, Vec<Complex64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_users)
            .map(|_| {
                let b = BitBlock::random(2 * n, &mut rng);
                let s = qam_modulate(&b, 4).unwrap();
                (b, s)
            })
            .collect()
    }

    fn combine(l: &[(BitBlock, Vec<Complex64>)], alloc: &PowerAllocation) -> Vec<Complex64> {
        (0..l[0].1.len())
            .map(|n| l.iter().enumerate().map(|(k, (_, s))| s[n] * alloc.amplitude(k + 1)).sum())
            .collect()
    }

    #[test]
    fn weak_user_has_no_stages() {
        let alloc = PowerAllocation::testbed();
        let l = layers(3, 200, 1);
        let out = sic_decode(&combine(&l, &alloc), &alloc, UserIndex::new(1).unwrap(), &QamMapper::new(4).unwrap()).unwrap();
        assert!(out.stage_bits.is_empty());
        assert_eq!(out.own_bits, l[0].0);
    }

    #[test]
    fn two_user_noiseless_sic() {
        let alloc = PowerAllocation::new(vec![0.8, 0.2]).unwrap();
        let l = layers(2, 200, 2);
        let out = sic_decode(&combine(&l, &alloc), &alloc, UserIndex::new(2).unwrap(), &QamMapper::new(4).unwrap()).unwrap();
        assert_eq!(out.stage_bits, vec![l[0].0.clone()]);
        assert_eq!(out.own_bits, l[1].0);
    }

    // After cancelling users 1 and 2 from a noiseless 3-user mix, what is left
    // is exactly sqrt(alpha_3) * x_3, i.e. own_symbols == x_3.
    #[test]
    fn three_user_residual_is_own_layer() {
        let alloc = PowerAllocation::testbed();
        let l = layers(3, 500, 3);
        let out = sic_decode(&combine(&l, &alloc), &alloc, UserIndex::new(3).unwrap(), &QamMapper::new(4).unwrap()).unwrap();
        assert_eq!(out.stage_bits.len(), 2);
        for (got, want) in out.own_symbols.iter().zip(&l[2].1) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn user_outside_allocation_rejected() {
        let alloc = PowerAllocation::new(vec![0.8, 0.2]).unwrap();
        let r = sic_decode(&[], &alloc, UserIndex::new(3).unwrap(), &QamMapper::new(4).unwrap());
        assert!(r.is_err());
        assert!(UserIndex::new(0).is_err());
    }

    fn separable_allocation() -> impl Strategy<Value = PowerAllocation> {
        // Amplitude ratios below 1/2 at every step guarantee separability.
        (1usize..=4, proptest::collection::vec(0.05f64..0.45, 3)).prop_map(|(k, ratios)| {
            let mut amps = vec![1.0f64];
            for r in ratios.iter().take(k - 1) {
                amps.push(amps.last().unwrap() * r);
            }
            let total: f64 = amps.iter().map(|a| a * a).sum();
            PowerAllocation::new(amps.iter().map(|a| a * a / total).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn perfect_sic_at_zero_noise(alloc in separable_allocation(), seed in any::<u64>()) {
            let l = layers(alloc.num_users(), 64, seed);
            let mix = combine(&l, &alloc);
            let mapper = QamMapper::new(4).unwrap();
            for k in 1..=alloc.num_users() {
                let out = sic_decode(&mix, &alloc, UserIndex::new(k).unwrap(), &mapper).unwrap();
                prop_assert_eq!(&out.own_bits, &l[k - 1].0);
            }
        }

        #[test]
        fn superposition_is_linear(a in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
                                   b in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8)) {
            let alloc = PowerAllocation::new(vec![0.7, 0.3]).unwrap();
            let wa = ComplexWaveform::new(a.iter().map(|&(r, i)| Complex64::new(r, i)).collect(), 1.0).unwrap();
            let wb = ComplexWaveform::new(b.iter().map(|&(r, i)| Complex64::new(r, i)).collect(), 1.0).unwrap();
            let sum = ComplexWaveform::new(wa.samples.iter().zip(&wb.samples).map(|(x, y)| x + y).collect(), 1.0).unwrap();
            let lhs = superpose(&[sum.clone(), sum], &alloc).unwrap();
            let ra = superpose(&[wa.clone(), wa], &alloc).unwrap();
            let rb = superpose(&[wb.clone(), wb], &alloc).unwrap();
            for ((l, x), y) in lhs.samples.iter().zip(&ra.samples).zip(&rb.samples) {
                prop_assert!((l - (x + y)).norm() < 1e-12);
            }
        }
    }
}
