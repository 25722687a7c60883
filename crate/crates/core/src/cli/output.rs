use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scenario::{BerCurve, MetricsTimeSeries, SymbolMetrics};

/// Output schema version recorded in every manifest.
pub const SCHEMA_VERSION: u32 = 1;

pub const TIMESERIES_COLUMNS: [&str; 7] = ["time_s", "user", "est_snr_db", "est_cfo_hz", "ber", "outage", "detected"];
pub const SWEEP_COLUMNS: [&str; 7] = ["snr_db", "user", "ber", "ci_low", "ci_high", "bits", "lost_frames"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Comma-separated values with a header row.
    #[default]
    Text,
    /// One JSON object per line.
    Records,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Text => "csv",
            OutputFormat::Records => "jsonl",
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(serialize_with = "number_or_text")]
    snr_db: f64,
    user: usize,
    ber: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    bits: u64,
    lost_frames: u64,
}

/// JSON has no infinities, so non-finite values are written as text.
fn number_or_text<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

fn write_rows<T: Serialize>(rows: impl IntoIterator<Item = T>, format: OutputFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        OutputFormat::Text => {
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            for row in rows {
                w.serialize(row).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        OutputFormat::Records => {
            let mut w = BufWriter::new(file);
            for row in rows {
                serde_json::to_writer(&mut w, &row).map_err(|e| Error::io(path, e))?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Writes one row per symbol and user with [`TIMESERIES_COLUMNS`].
pub fn write_timeseries(series: &MetricsTimeSeries, format: OutputFormat, path: &Path) -> Result<()> {
    write_rows::<&SymbolMetrics>(&series.rows, format, path)
}

/// Writes one row per SNR and user with [`SWEEP_COLUMNS`], sorted by SNR then user.
pub fn write_sweep(curve: &BerCurve, format: OutputFormat, path: &Path) -> Result<()> {
    let mut points = curve.points.clone();
    points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db).then(a.user.cmp(&b.user)));
    write_rows(
        points.iter().map(|p| SweepRow {
            snr_db: p.snr_db,
            user: p.user,
            ber: p.ber,
            ci_low: p.ci_low,
            ci_high: p.ci_high,
            bits: p.bits,
            lost_frames: p.lost_frames,
        }),
        format,
        path,
    )
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes one record in either format; used for single-row results.
pub fn write_record<T: Serialize>(value: &T, format: OutputFormat, path: &Path) -> Result<()> {
    write_rows(std::iter::once(value), format, path)
}
