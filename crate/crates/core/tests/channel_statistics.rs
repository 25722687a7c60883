//! Distributional checks of the fading process against independently
//! computed references.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use noma_v2x::channel::{estimate_k_factor, rician_envelopes, FadingProcess};

const K: f64 = 10.92;

/// Modified Bessel I0 by its power series.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..400 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Bessel J0 from its integral form, composite Simpson.
fn bessel_j0(x: f64) -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0 / PI
}

/// Unit-power Rician CDF tabulated by trapezoidal integration of the pdf.
struct RicianCdf {
    step: f64,
    table: Vec<f64>,
}

impl RicianCdf {
    fn new(k: f64) -> Self {
        let step = 1e-4;
        let n = 40_000;
        let pdf = |r: f64| {
            2.0 * (k + 1.0) * r * (-k - (k + 1.0) * r * r).exp() * bessel_i0(2.0 * r * (k * (k + 1.0)).sqrt())
        };
        let mut table = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        let mut prev = pdf(0.0);
        table.push(0.0);
        for i in 1..=n {
            let cur = pdf(i as f64 * step);
            acc += 0.5 * (prev + cur) * step;
            table.push(acc);
            prev = cur;
        }
        RicianCdf { step, table }
    }

    fn at(&self, r: f64) -> f64 {
        let x = r / self.step;
        let i = x.floor() as usize;
        if i + 1 >= self.table.len() {
            return 1.0;
        }
        let f = x - i as f64;
        self.table[i] * (1.0 - f) + self.table[i + 1] * f
    }
}

/// Asymptotic Kolmogorov p-value of statistic `d` over `n` samples.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * 2.0 * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

#[test]
fn reference_cdf_is_normalized() {
    let cdf = RicianCdf::new(K);
    assert!((cdf.at(4.0) - 1.0).abs() < 1e-6);
    let rayleigh = RicianCdf::new(0.0);
    for r in [0.3, 0.8, 1.5] {
        assert!((rayleigh.at(r) - (1.0 - (-r * r).exp())).abs() < 1e-6);
    }
}

#[test]
fn fading_envelopes_across_seeds_follow_rician_law() {
    let n = 100_000;
    let env: Vec<f64> = (0..n as u64).map(|s| FadingProcess::new(K, s).gain_at(0.0).norm()).collect();
    let cdf = RicianCdf::new(K);
    let d = ks_statistic(env, |r| cdf.at(r));
    let p = ks_p_value(d, n);
    assert!(p > 0.01, "KS D = {d}, p = {p}");
}

#[test]
fn synthetic_envelopes_follow_rician_law() {
    let n = 100_000;
    let env = rician_envelopes(K, n, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let cdf = RicianCdf::new(K);
    let p = ks_p_value(ks_statistic(env, |r| cdf.at(r)), n);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn rayleigh_envelopes_give_small_k() {
    let env = rician_envelopes(0.0, 100_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let est = estimate_k_factor(&env).unwrap();
    assert!(est.k < 0.1, "K = {}", est.k);
}

#[test]
fn diffuse_autocorrelation_follows_j0() {
    let seeds = 4000u64;
    let fd_tau = [0.0, 0.1, 0.25, 0.4, 0.6, 1.0];
    let procs: Vec<FadingProcess> = (0..seeds).map(|s| FadingProcess::new(0.0, 1000 + s)).collect();
    for &x in &fd_tau {
        let phi = 2.0 * PI * x;
        let r: f64 = procs
            .iter()
            .map(|p| (p.gain_at(0.0) * p.gain_at(phi).conj()).re)
            .sum::<f64>()
            / seeds as f64;
        let j = bessel_j0(2.0 * PI * x);
        assert!((r - j).abs() < 0.05, "fd*tau = {x}: {r} vs J0 {j}");
    }
}
