//! C ABI over the simulator. Handles are opaque pointers created by the
//! `*_new`/`*_load`/`*_run` functions and released with the matching
//! `*_free`. Every fallible call returns an [`NvStatus`]; on failure the
//! message is kept per thread and read with [`nv_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use noma_v2x::channel::{doppler_shift, estimate_k_factor};
use noma_v2x::cli::{load_config, parse_config, write_timeseries, OutputFormat};
use noma_v2x::scenario::{run_v2x_scenario, sweep_ber_vs_snr, BerCurve, ScenarioConfig, ScenarioRun};
use noma_v2x::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Io = 4,
    FrameLost = 5,
    EstimationFailed = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Output file format for [`nv_scenario_write_timeseries`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvFormat {
    Csv = 0,
    JsonLines = 1,
}

/// Scenario configuration.
pub struct NvConfig(ScenarioConfig);

/// Result of [`nv_scenario_run`].
pub struct NvScenarioRun(ScenarioRun);

/// Result of [`nv_sweep_ber`].
pub struct NvBerCurve(BerCurve);

/// One OFDM symbol of one user. Missing estimates are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvSymbolMetrics {
    pub time_s: f64,
    pub user: u32,
    pub est_snr_db: f64,
    pub est_cfo_hz: f64,
    pub ber: f64,
    pub outage: bool,
    pub detected: bool,
}

/// One point of a BER curve. `ber`, `ci_low` and `ci_high` are NaN when no
/// frame was detected.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvBerPoint {
    pub snr_db: f64,
    pub user: u32,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bits: u64,
    pub lost_frames: u64,
}

/// Maximum-likelihood Rician fit.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvKFactor {
    pub k: f64,
    pub non_centrality: f64,
    pub scale: f64,
}

/// Per-user bit totals of one stage of a scenario run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NvStageTotals {
    pub bits: u64,
    pub errors: u64,
    pub frames: u64,
    pub lost_frames: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.as_bytes().to_vec());
}

fn fail(status: NvStatus, msg: &str) -> NvStatus {
    set_last_error(msg);
    status
}

fn from_error(err: Error) -> NvStatus {
    let status = match &err {
        Error::InvalidInput(_) => NvStatus::InvalidInput,
        Error::FrameLost(_) | Error::SymbolLost => NvStatus::FrameLost,
        Error::EstimationFailed(_) => NvStatus::EstimationFailed,
        Error::Config { .. } => NvStatus::Config,
        Error::Io { .. } => NvStatus::Io,
    };
    fail(status, &err.to_string())
}

/// Runs `f`, turning panics into [`NvStatus::Panic`] and clearing the last
/// error on success.
fn guard(f: impl FnOnce() -> Result<(), NvStatus>) -> NvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            NvStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(NvStatus::Panic, "internal panic"),
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), NvStatus> {
    if p.is_null() {
        Err(fail(NvStatus::NullPointer, &format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, NvStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(NvStatus::InvalidInput, &format!("`{name}` is not UTF-8")))
}

fn boxed<T>(value: T, out: *mut *mut T) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Length in bytes of the calling thread's last error message.
#[no_mangle]
pub extern "C" fn nv_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message, NUL-terminated and truncated to fit,
/// into `buf`. Returns the number of bytes written without the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null when `len` is 0.
#[no_mangle]
pub unsafe extern "C" fn nv_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let n = msg.len().min(len - 1);
        ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Maximum Doppler shift in Hz.
#[no_mangle]
pub extern "C" fn nv_doppler_shift(speed_mps: f64, carrier_frequency_hz: f64) -> f64 {
    doppler_shift(speed_mps, carrier_frequency_hz)
}

/// Creates a config with the testbed defaults.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn nv_config_new(out: *mut *mut NvConfig) -> NvStatus {
    guard(|| {
        non_null(out, "out")?;
        boxed(NvConfig(ScenarioConfig::default()), out);
        Ok(())
    })
}

/// Parses a TOML config string.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_config_parse(toml: *const c_char, out: *mut *mut NvConfig) -> NvStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = c_str(toml, "toml")?;
        boxed(NvConfig(parse_config(text).map_err(from_error)?), out);
        Ok(())
    })
}

/// Reads a TOML config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_config_load(path: *const c_char, out: *mut *mut NvConfig) -> NvStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = c_str(path, "path")?;
        boxed(NvConfig(load_config(Path::new(path)).map_err(from_error)?), out);
        Ok(())
    })
}

/// Replaces the run seed.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nv_config_set_seed(config: *mut NvConfig, seed: u64) -> NvStatus {
    guard(|| {
        non_null(config, "config")?;
        (*config).0.seed = seed;
        Ok(())
    })
}

/// Number of users in the config.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_config_user_count(config: *const NvConfig, out: *mut usize) -> NvStatus {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        *out = (*config).0.users.len();
        Ok(())
    })
}

/// Releases a config; null is ignored.
///
/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nv_config_free(config: *mut NvConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Replays the two-stage scenario.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_scenario_run(config: *const NvConfig, out: *mut *mut NvScenarioRun) -> NvStatus {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        let run = run_v2x_scenario(&(*config).0).map_err(from_error)?;
        boxed(NvScenarioRun(run), out);
        Ok(())
    })
}

/// Number of rows (symbols times users) in the time series.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_scenario_row_count(run: *const NvScenarioRun, out: *mut usize) -> NvStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(out, "out")?;
        *out = (*run).0.series.rows.len();
        Ok(())
    })
}

/// Copies row `index` of the time series.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_scenario_row(run: *const NvScenarioRun, index: usize, out: *mut NvSymbolMetrics) -> NvStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(out, "out")?;
        let rows = &(*run).0.series.rows;
        let r = rows
            .get(index)
            .ok_or_else(|| fail(NvStatus::OutOfRange, &format!("row {index} of {}", rows.len())))?;
        *out = NvSymbolMetrics {
            time_s: r.time_s,
            user: r.user as u32,
            est_snr_db: r.est_snr_db.unwrap_or(f64::NAN),
            est_cfo_hz: r.est_cfo_hz.unwrap_or(f64::NAN),
            ber: r.ber,
            outage: r.outage,
            detected: r.detected,
        };
        Ok(())
    })
}

/// Bit totals of 1-based `user` in the stationary (`mobile` false) or
/// mobile stage.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_scenario_stage_totals(
    run: *const NvScenarioRun,
    user: u32,
    mobile: bool,
    out: *mut NvStageTotals,
) -> NvStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(out, "out")?;
        let users = &(*run).0.users;
        let s = (user as usize)
            .checked_sub(1)
            .and_then(|i| users.get(i))
            .ok_or_else(|| fail(NvStatus::OutOfRange, &format!("user {user} of {}", users.len())))?;
        let c = if mobile { s.mobile } else { s.stationary };
        *out = NvStageTotals {
            bits: c.bits,
            errors: c.errors,
            frames: c.frames,
            lost_frames: c.lost_frames,
        };
        Ok(())
    })
}

/// Writes the time series to `path`.
///
/// # Safety
/// `run` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nv_scenario_write_timeseries(
    run: *const NvScenarioRun,
    format: NvFormat,
    path: *const c_char,
) -> NvStatus {
    guard(|| {
        non_null(run, "run")?;
        let path = c_str(path, "path")?;
        let format = match format {
            NvFormat::Csv => OutputFormat::Text,
            NvFormat::JsonLines => OutputFormat::Records,
        };
        write_timeseries(&(*run).0.series, format, Path::new(path)).map_err(from_error)
    })
}

/// Releases a scenario run; null is ignored.
///
/// # Safety
/// `run` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nv_scenario_free(run: *mut NvScenarioRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Monte Carlo BER at each of the `count` SNR values (dB, `-INFINITY` for
/// noise only) with at least `min_bits` bits per user and point.
///
/// # Safety
/// `config` must be a live handle, `snr_db` must point to `count` doubles
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_sweep_ber(
    config: *const NvConfig,
    snr_db: *const f64,
    count: usize,
    min_bits: u64,
    seed: u64,
    out: *mut *mut NvBerCurve,
) -> NvStatus {
    guard(|| {
        non_null(config, "config")?;
        non_null(snr_db, "snr_db")?;
        non_null(out, "out")?;
        let grid = std::slice::from_raw_parts(snr_db, count);
        let curve = sweep_ber_vs_snr(&(*config).0, grid, min_bits, seed).map_err(from_error)?;
        boxed(NvBerCurve(curve), out);
        Ok(())
    })
}

/// Number of points (SNR values times users), sorted by SNR then user.
///
/// # Safety
/// `curve` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_curve_point_count(curve: *const NvBerCurve, out: *mut usize) -> NvStatus {
    guard(|| {
        non_null(curve, "curve")?;
        non_null(out, "out")?;
        *out = (*curve).0.points.len();
        Ok(())
    })
}

/// Copies point `index` of the curve.
///
/// # Safety
/// `curve` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nv_curve_point(curve: *const NvBerCurve, index: usize, out: *mut NvBerPoint) -> NvStatus {
    guard(|| {
        non_null(curve, "curve")?;
        non_null(out, "out")?;
        let points = &(*curve).0.points;
        let p = points
            .get(index)
            .ok_or_else(|| fail(NvStatus::OutOfRange, &format!("point {index} of {}", points.len())))?;
        *out = NvBerPoint {
            snr_db: p.snr_db,
            user: p.user as u32,
            ber: p.ber.unwrap_or(f64::NAN),
            ci_low: p.ci_low.unwrap_or(f64::NAN),
            ci_high: p.ci_high.unwrap_or(f64::NAN),
            bits: p.bits,
            lost_frames: p.lost_frames,
        };
        Ok(())
    })
}

/// Releases a curve; null is ignored.
///
/// # Safety
/// `curve` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nv_curve_free(curve: *mut NvBerCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Fits a Rician distribution to `count` envelope magnitudes.
///
/// # Safety
/// `envelope` must point to `count` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nv_estimate_k_factor(envelope: *const f64, count: usize, out: *mut NvKFactor) -> NvStatus {
    guard(|| {
        non_null(envelope, "envelope")?;
        non_null(out, "out")?;
        let samples = std::slice::from_raw_parts(envelope, count);
        let est = estimate_k_factor(samples).map_err(from_error)?;
        *out = NvKFactor {
            k: est.k,
            non_centrality: est.non_centrality,
            scale: est.scale,
        };
        Ok(())
    })
}
