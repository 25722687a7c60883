use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::BitBlock;

/// Bit error rate of one block. Undetected frames count as BER 1.
pub fn compute_ber(tx: &BitBlock, rx: &BitBlock, detected: bool) -> Result<f64> {
    if !detected {
        return Ok(1.0);
    }
    if tx.len() != rx.len() {
        return Err(Error::invalid(format!(
            "transmitted {} bits but decoded {}",
            tx.len(),
            rx.len()
        )));
    }
    if tx.is_empty() {
        return Ok(0.0);
    }
    Ok(tx.hamming_distance(rx) as f64 / tx.len() as f64)
}

/// Running bit/error totals. Lost frames are counted on their own and never
/// enter the averaged BER.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BerCounter {
    pub bits: u64,
    pub errors: u64,
    pub frames: u64,
    pub lost_frames: u64,
}

impl BerCounter {
    pub fn record(&mut self, bits: usize, errors: usize) {
        self.bits += bits as u64;
        self.errors += errors as u64;
        self.frames += 1;
    }

    pub fn record_lost(&mut self) {
        self.frames += 1;
        self.lost_frames += 1;
    }

    pub fn merge(&mut self, other: &BerCounter) {
        self.bits += other.bits;
        self.errors += other.errors;
        self.frames += other.frames;
        self.lost_frames += other.lost_frames;
    }

    /// `None` before any bit of a detected frame was counted.
    pub fn ber(&self) -> Option<f64> {
        (self.bits > 0).then(|| self.errors as f64 / self.bits as f64)
    }

    /// 95% Wilson score interval on the BER.
    pub fn wilson_interval(&self) -> Option<(f64, f64)> {
        if self.bits == 0 {
            return None;
        }
        let z = 1.959_963_984_540_054;
        let n = self.bits as f64;
        let p = self.errors as f64 / n;
        let denom = 1.0 + z * z / n;
        let centre = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        Some(((centre - half).max(0.0), (centre + half).min(1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageStats {
    pub count: usize,
    pub ratio: f64,
}

/// Symbols whose estimated SNR falls below `threshold_db`. Pass lost symbols
/// as `-inf` so they count as outages.
pub fn count_outages(snr_db: &[f64], threshold_db: f64) -> Result<OutageStats> {
    if snr_db.is_empty() {
        return Err(Error::invalid("empty SNR series"));
    }
    let count = snr_db.iter().filter(|&&s| s < threshold_db).count();
    Ok(OutageStats {
        count,
        ratio: count as f64 / snr_db.len() as f64,
    })
}

/// Occurrence counts of estimated SNR in bins of `bin_width_db` centred on
/// multiples of the width (the 23 dB bin spans [22.5, 23.5) for 1 dB bins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrHistogram {
    pub bin_width_db: f64,
    pub counts: BTreeMap<i64, usize>,
    pub samples: usize,
    pub duration_s: f64,
}

impl SnrHistogram {
    fn new(bin_width_db: f64, duration_s: f64) -> Self {
        SnrHistogram {
            bin_width_db,
            counts: BTreeMap::new(),
            samples: 0,
            duration_s,
        }
    }

    pub fn bin_of(&self, snr_db: f64) -> i64 {
        (snr_db / self.bin_width_db).round() as i64
    }

    fn add(&mut self, snr_db: f64) {
        let b = self.bin_of(snr_db);
        *self.counts.entry(b).or_default() += 1;
        self.samples += 1;
    }

    pub fn count_at(&self, snr_db: f64) -> usize {
        self.counts.get(&self.bin_of(snr_db)).copied().unwrap_or(0)
    }

    /// Occurrences per second of the bin containing `snr_db`.
    pub fn rate_per_second(&self, snr_db: f64) -> f64 {
        if self.duration_s > 0.0 {
            self.count_at(snr_db) as f64 / self.duration_s
        } else {
            0.0
        }
    }

    /// `(bin centre dB, count)` pairs in ascending order.
    pub fn bins(&self) -> Vec<(f64, usize)> {
        self.counts
            .iter()
            .map(|(&b, &c)| (b as f64 * self.bin_width_db, c))
            .collect()
    }
}

/// Splits one user's `(time, snr)` series at `stage_split_s` and histograms
/// each stage. Stage durations run from the first sample to the split and
/// from the split to one sample period past the last sample.
pub fn snr_histogram(series: &[(f64, f64)], bin_width_db: f64, stage_split_s: f64) -> Result<(SnrHistogram, SnrHistogram)> {
    if !(bin_width_db > 0.0 && bin_width_db.is_finite()) {
        return Err(Error::invalid("bin width must be positive"));
    }
    let (t0, t_end) = match series {
        [] => (0.0, 0.0),
        [only] => (only.0, only.0),
        [first, .., prev, last] => (first.0, last.0 + (last.0 - prev.0)),
        [first, last] => (first.0, last.0 + (last.0 - first.0)),
    };
    let stationary_duration = (stage_split_s.min(t_end) - t0).max(0.0);
    let mobile_duration = (t_end - stage_split_s.max(t0)).max(0.0);
    let mut stationary = SnrHistogram::new(bin_width_db, stationary_duration);
    let mut mobile = SnrHistogram::new(bin_width_db, mobile_duration);
    for &(t, snr) in series {
        if !snr.is_finite() {
            continue;
        }
        if t < stage_split_s {
            stationary.add(snr);
        } else {
            mobile.add(snr);
        }
    }
    Ok((stationary, mobile))
}

pub(crate) fn mean_and_variance(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ber_conventions() {
        let a = BitBlock(vec![0; 1250]);
        let mut b = a.clone();
        assert_eq!(compute_ber(&a, &b, true).unwrap(), 0.0);
        assert_eq!(compute_ber(&a, &BitBlock::default(), false).unwrap(), 1.0);
        b.0[17] = 1;
        assert!((compute_ber(&a, &b, true).unwrap() - 8.0e-4).abs() < 1e-15);
        assert!(compute_ber(&a, &BitBlock(vec![0; 10]), true).is_err());
    }

    #[test]
    fn counter_excludes_lost_frames() {
        let mut c = BerCounter::default();
        c.record(1000, 10);
        c.record_lost();
        assert_eq!(c.ber(), Some(0.01));
        assert_eq!(c.lost_frames, 1);
        let (lo, hi) = c.wilson_interval().unwrap();
        assert!(lo < 0.01 && 0.01 < hi);
        assert_eq!(BerCounter::default().ber(), None);
    }

    #[test]
    fn outage_edges() {
        assert_eq!(count_outages(&[12.0, 15.0], 10.0).unwrap(), OutageStats { count: 0, ratio: 0.0 });
        assert_eq!(count_outages(&[1.0, f64::NEG_INFINITY], 10.0).unwrap().count, 2);
        assert!(count_outages(&[], 10.0).is_err());
    }

    // Order-statistics oracle: with the threshold at the sample median,
    // exactly floor(N/2) values of a distinct series lie below it.
    #[test]
    fn outage_at_median() {
        for n in [9usize, 10, 101, 1000] {
            let s: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 * 0.37).collect();
            let mut sorted = s.clone();
            sorted.sort_by(f64::total_cmp);
            let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
            let r = count_outages(&s, median).unwrap().ratio;
            assert!((r - 0.5).abs() <= 1.0 / n as f64, "n={n}: {r}");
        }
    }

    #[test]
    fn constant_series_fills_one_bin() {
        let series: Vec<(f64, f64)> = (0..100).map(|i| (i as f64 * 0.01, 23.0)).collect();
        let (st, mo) = snr_histogram(&series, 1.0, 5.0).unwrap();
        assert_eq!(st.counts.len(), 1);
        assert_eq!(st.count_at(23.2), 100);
        assert_eq!(mo.samples, 0);
        assert!((st.rate_per_second(23.0) - 100.0).abs() < 1e-9);
        assert!(snr_histogram(&series, 0.0, 1.0).is_err());
    }
}
