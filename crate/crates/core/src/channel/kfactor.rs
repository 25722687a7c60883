//! Maximum-likelihood Rician fit of envelope samples.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_ENVELOPE_SAMPLES: usize = 1000;

/// Fitted Rician parameters. `k = non_centrality^2 / (2 * scale^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KFactorEstimate {
    pub k: f64,
    pub non_centrality: f64,
    pub scale: f64,
    pub log_likelihood: f64,
}

/// `ln I0(x)` for `x >= 0` (Abramowitz & Stegun 9.8.1 / 9.8.2, ~2e-7 relative).
pub fn ln_bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 3.75 {
        let t = (ax / 3.75).powi(2);
        (1.0 + t
            * (3.5156229
                + t * (3.0899424 + t * (1.2067492 + t * (0.2659732 + t * (0.0360768 + t * 0.0045813))))))
            .ln()
    } else {
        let t = 3.75 / ax;
        let poly = 0.39894228
            + t * (0.01328592
                + t * (0.00225319
                    + t * (-0.00157565
                        + t * (0.00916281
                            + t * (-0.02057706 + t * (0.02635537 + t * (-0.01647633 + t * 0.00392377)))))));
        ax - 0.5 * ax.ln() + poly.ln()
    }
}

/// Profile log-likelihood with the scale eliminated: for a given
/// non-centrality `nu`, the likelihood equations give `2 sigma^2 = E[r^2] - nu^2`.
fn profile_log_likelihood(samples: &[f64], second_moment: f64, nu: f64) -> (f64, f64) {
    let sigma2 = 0.5 * (second_moment - nu * nu);
    let n = samples.len() as f64;
    let sum: f64 = samples
        .iter()
        .map(|&r| {
            let log_r = if r > 0.0 { r.ln() } else { -745.0 };
            log_r + ln_bessel_i0(r * nu / sigma2)
        })
        .sum();
    let ll = sum - n * sigma2.ln() - n * (second_moment + nu * nu) / (2.0 * sigma2);
    (ll, sigma2)
}

/// Fits a Rician distribution to envelope magnitudes by maximizing the
/// likelihood over the non-centrality with golden-section search.
pub fn estimate_k_factor(envelope: &[f64]) -> Result<KFactorEstimate> {
    if envelope.len() < MIN_ENVELOPE_SAMPLES {
        return Err(Error::invalid(format!(
            "{} envelope samples, need at least {MIN_ENVELOPE_SAMPLES}",
            envelope.len()
        )));
    }
    if let Some(i) = envelope.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::invalid(format!(
            "envelope sample {i} is {}, must be finite and non-negative",
            envelope[i]
        )));
    }
    let n = envelope.len() as f64;
    let mean = envelope.iter().sum::<f64>() / n;
    let second_moment = envelope.iter().map(|r| r * r).sum::<f64>() / n;
    let variance = second_moment - mean * mean;
    if !(variance > 1e-12 * second_moment) || second_moment <= 0.0 {
        return Err(Error::EstimationFailed(
            "envelope samples have no spread".into(),
        ));
    }

    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut lo = 0.0f64;
    let mut hi = second_moment.sqrt() * (1.0 - 1e-9);
    let ll = |nu: f64| profile_log_likelihood(envelope, second_moment, nu).0;
    let mut x1 = hi - invphi * (hi - lo);
    let mut x2 = lo + invphi * (hi - lo);
    let mut f1 = ll(x1);
    let mut f2 = ll(x2);
    while hi - lo > 1e-10 * second_moment.sqrt() {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = ll(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = ll(x1);
        }
    }
    let mut nu = 0.5 * (lo + hi);
    let (mut best, mut sigma2) = profile_log_likelihood(envelope, second_moment, nu);
    // The maximum may sit on the Rayleigh boundary.
    let (at_zero, sigma2_zero) = profile_log_likelihood(envelope, second_moment, 0.0);
    if at_zero >= best {
        nu = 0.0;
        best = at_zero;
        sigma2 = sigma2_zero;
    }
    Ok(KFactorEstimate {
        k: nu * nu / (2.0 * sigma2),
        non_centrality: nu,
        scale: sigma2.sqrt(),
        log_likelihood: best,
    })
}

/// Independent envelopes `|nu + sigma*(x + jy)|` with unit mean power and
/// line-of-sight to diffuse ratio `rician_k`.
pub fn rician_envelopes<R: Rng + ?Sized>(rician_k: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(rician_k >= 0.0 && rician_k.is_finite()) {
        return Err(Error::invalid("K must be finite and non-negative"));
    }
    let nu = (rician_k / (rician_k + 1.0)).sqrt();
    let sigma = (0.5 / (rician_k + 1.0)).sqrt();
    Ok((0..n)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            (nu + sigma * x).hypot(sigma * y)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        // I0(0)=1, I0(1)=1.2660658778, I0(5)=27.2398718236, I0(20)=4.355828256e7
        for (x, want) in [(0.0, 1.0f64), (1.0, 1.2660658778), (5.0, 27.2398718236), (20.0, 4.355828256e7)] {
            let got = ln_bessel_i0(x).exp();
            assert!((got / want - 1.0).abs() < 1e-6, "I0({x}) = {got}");
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(estimate_k_factor(&vec![0.7; 5000]), Err(Error::EstimationFailed(_))));
        assert!(matches!(estimate_k_factor(&[1.0; 10]), Err(Error::InvalidInput(_))));
        let mut bad = vec![1.0; 2000];
        bad[5] = -1.0;
        assert!(estimate_k_factor(&bad).is_err());
    }
}
