//! C ABI for `fdident`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` style
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`FdiStatus`]; on failure [`fdi_last_error`] describes the
//! problem for the calling thread. Panics are caught and reported as
//! [`FdiStatus::Panic`].
//!
//! Complex data is passed as separate real and imaginary arrays. Matrices
//! are row-major; signals are channel-major (`values[c * n_samples + j]`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fdident::identify::{identify, EstimateReport, IdentifyConfig, Method, ModelStructure};
use fdident::metrics::param_error;
use fdident::simulate::{Experiment, ExperimentSpec};
use fdident::spectral::Signal;
use fdident::windows::{f_err, window_value, WindowSpec};
use fdident::Error;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Window function with its record length.
pub struct FdiWindow(WindowSpec);

/// Sampled multichannel record.
pub struct FdiSignal(Signal);

/// Seeded synthetic experiment with its ground-truth system.
pub struct FdiExperiment(Experiment);

/// Outcome of one estimation.
pub struct FdiReport(EstimateReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FdiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => FdiStatus::Config,
            Error::InvalidWindow(_)
            | Error::InvalidArgument(_)
            | Error::UnsupportedDerivative { .. }
            | Error::GridMismatch(_)
            | Error::MissingDerivatives { .. } => FdiStatus::InvalidArgument,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format { .. } => FdiStatus::Io,
            _ => FdiStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FdiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdiStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {what}"));
            FdiStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FdiStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(FdiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fdi_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fdi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a window such as `"cinf:4"`, `"sin:2"` or `"rect"` over `length` seconds.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdi_window_new(spec: *const c_char, length: f64, out_window: *mut *mut FdiWindow) -> FdiStatus {
    guard(|| {
        let slot = out(out_window, "out_window")?;
        let w = WindowSpec::parse(text(spec, "spec")?, length)?;
        *slot = Box::into_raw(Box::new(FdiWindow(w)));
        Ok(())
    })
}

/// # Safety
/// `window` must be null or a handle from [`fdi_window_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fdi_window_free(window: *mut FdiWindow) {
    free(window)
}

/// `k`-th derivative of the window at `t`.
///
/// # Safety
/// `window` must be a live handle and `out_value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdi_window_value(window: *const FdiWindow, k: usize, t: f64, out_value: *mut f64) -> FdiStatus {
    guard(|| {
        let w = handle(window, "window")?;
        *out(out_value, "out_value")? = window_value(&w.0, k, t)?;
        Ok(())
    })
}

/// Leakage frequency `f_err` of the `k`-th derivative at threshold `p`, in
/// units of `1/T`. Writes `+inf` when it lies beyond the search range.
///
/// # Safety
/// `window` must be a live handle and `out_value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdi_window_f_err(window: *const FdiWindow, k: usize, p: f64, out_value: *mut f64) -> FdiStatus {
    guard(|| {
        let w = handle(window, "window")?;
        *out(out_value, "out_value")? = f_err(&w.0, k, p)?.value().unwrap_or(f64::INFINITY);
        Ok(())
    })
}

/// Builds a record from channel-major real and imaginary parts, each of
/// length `n_channels * n_samples`. `im` may be null for real data. The
/// terminal sample `s(T)` is optional (`terminal_re` null for none).
///
/// # Safety
/// Non-null arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn fdi_signal_new(
    t_len: f64,
    n_channels: usize,
    n_samples: usize,
    re: *const f64,
    im: *const f64,
    terminal_re: *const f64,
    terminal_im: *const f64,
    out_signal: *mut *mut FdiSignal,
) -> FdiStatus {
    guard(|| {
        let slot = out(out_signal, "out_signal")?;
        let len = n_channels.checked_mul(n_samples).ok_or_else(|| Failure(FdiStatus::InvalidArgument, "size overflow".into()))?;
        if len == 0 {
            return Err(Failure(FdiStatus::InvalidArgument, "signal needs at least one channel and sample".into()));
        }
        let re = slice(re, len, "re")?;
        let im = if im.is_null() { None } else { Some(slice(im, len, "im")?) };
        let values = DMatrix::from_fn(n_channels, n_samples, |c, j| {
            let i = c * n_samples + j;
            Complex64::new(re[i], im.map_or(0.0, |v| v[i]))
        });
        let mut signal = Signal::new(t_len, values)?;
        if !terminal_re.is_null() {
            let tre = slice(terminal_re, n_channels, "terminal_re")?;
            let tim = if terminal_im.is_null() { None } else { Some(slice(terminal_im, n_channels, "terminal_im")?) };
            signal = signal.with_terminal(DVector::from_fn(n_channels, |c, _| Complex64::new(tre[c], tim.map_or(0.0, |v| v[c]))));
        }
        *slot = Box::into_raw(Box::new(FdiSignal(signal)));
        Ok(())
    })
}

/// # Safety
/// `signal` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdi_signal_free(signal: *mut FdiSignal) {
    free(signal)
}

/// Channel count, sample count and record length.
///
/// # Safety
/// `signal` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn fdi_signal_shape(
    signal: *const FdiSignal,
    n_channels: *mut usize,
    n_samples: *mut usize,
    t_len: *mut f64,
) -> FdiStatus {
    guard(|| {
        let s = &handle(signal, "signal")?.0;
        if let Some(v) = n_channels.as_mut() {
            *v = s.n_channels();
        }
        if let Some(v) = n_samples.as_mut() {
            *v = s.n_samples();
        }
        if let Some(v) = t_len.as_mut() {
            *v = s.t_len;
        }
        Ok(())
    })
}

/// Copies the samples out in the layout accepted by [`fdi_signal_new`].
/// Either array may be null to skip it.
///
/// # Safety
/// Non-null arrays must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn fdi_signal_values(signal: *const FdiSignal, re: *mut f64, im: *mut f64, capacity: usize) -> FdiStatus {
    guard(|| {
        let s = &handle(signal, "signal")?.0;
        let n = s.n_samples();
        let len = s.n_channels() * n;
        if capacity < len {
            return Err(Failure(FdiStatus::BufferTooSmall, format!("need {len} elements, got {capacity}")));
        }
        for c in 0..s.n_channels() {
            for j in 0..n {
                let v = s.values[(c, j)];
                if !re.is_null() {
                    *re.add(c * n + j) = v.re;
                }
                if !im.is_null() {
                    *im.add(c * n + j) = v.im;
                }
            }
        }
        Ok(())
    })
}

/// Model orders of `sum_j A_j x^(j) = sum_k B_k u^(k)`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FdiStructure {
    pub n_x: usize,
    pub n_u: usize,
    pub n_a: usize,
    pub n_b: usize,
}

impl FdiStructure {
    fn model(self) -> Result<ModelStructure, Failure> {
        Ok(ModelStructure::new(self.n_x, self.n_u, self.n_a, self.n_b)?)
    }
}

/// Seeded experiment; `dt_max` bounds the integration step.
///
/// # Safety
/// `out_experiment` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdi_experiment_new(
    structure: FdiStructure,
    n_tones: usize,
    tone_min: f64,
    tone_max: f64,
    t_len: f64,
    dt_max: f64,
    seed: u64,
    out_experiment: *mut *mut FdiExperiment,
) -> FdiStatus {
    guard(|| {
        let slot = out(out_experiment, "out_experiment")?;
        let spec = ExperimentSpec { structure: structure.model()?, n_f: n_tones, f_min: tone_min, f_max: tone_max, t_len, dt_max };
        *slot = Box::into_raw(Box::new(FdiExperiment(Experiment::new(&spec, seed)?)));
        Ok(())
    })
}

/// Five states and inputs, first order, 85 tones on `[1, 20√2]` Hz, `T = 1`.
///
/// # Safety
/// `out_experiment` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdi_experiment_default(seed: u64, out_experiment: *mut *mut FdiExperiment) -> FdiStatus {
    guard(|| {
        let slot = out(out_experiment, "out_experiment")?;
        *slot = Box::into_raw(Box::new(FdiExperiment(Experiment::new(&ExperimentSpec::paper(), seed)?)));
        Ok(())
    })
}

/// # Safety
/// `experiment` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdi_experiment_free(experiment: *mut FdiExperiment) {
    free(experiment)
}

/// Simulates noiseless state and input records with `n_samples` samples each
/// (plus the terminal sample). Both outputs must be freed by the caller.
///
/// # Safety
/// `experiment` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fdi_experiment_record(
    experiment: *const FdiExperiment,
    n_samples: usize,
    out_x: *mut *mut FdiSignal,
    out_u: *mut *mut FdiSignal,
) -> FdiStatus {
    guard(|| {
        let e = &handle(experiment, "experiment")?.0;
        let (sx, su) = (out(out_x, "out_x")?, out(out_u, "out_u")?);
        let (x, u) = e.record(n_samples)?;
        *sx = Box::into_raw(Box::new(FdiSignal(x)));
        *su = Box::into_raw(Box::new(FdiSignal(u)));
        Ok(())
    })
}

unsafe fn write_matrix(m: &DMatrix<f64>, buf: *mut f64, capacity: usize, rows: *mut usize, cols: *mut usize) -> Result<(), Failure> {
    if let Some(r) = rows.as_mut() {
        *r = m.nrows();
    }
    if let Some(c) = cols.as_mut() {
        *c = m.ncols();
    }
    if buf.is_null() {
        return Ok(());
    }
    if capacity < m.len() {
        return Err(Failure(FdiStatus::BufferTooSmall, format!("need {} elements, got {capacity}", m.len())));
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            *buf.add(i * m.ncols() + j) = m[(i, j)];
        }
    }
    Ok(())
}

/// True parameters `θ = [A_0 .. A_{n_a-1} | B_0 .. B_{n_b}]`, row-major.
/// Pass a null `buf` to query the shape only.
///
/// # Safety
/// `experiment` must be a live handle; a non-null `buf` must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn fdi_experiment_theta(
    experiment: *const FdiExperiment,
    buf: *mut f64,
    capacity: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> FdiStatus {
    guard(|| write_matrix(&handle(experiment, "experiment")?.0.truth.theta(), buf, capacity, rows, cols))
}

/// Estimates a model from `x` and `u`.
///
/// `method` is one of `corrected`, `ps`, `mixed`, `naive`; `window` (for
/// corrected and mixed) is parsed like [`fdi_window_new`] and may be null
/// for the rectangular methods. `n_p` sets the polynomial terms of ps and mixed.
///
/// # Safety
/// Handles must be live, strings NUL-terminated, `out_report` valid.
#[no_mangle]
pub unsafe extern "C" fn fdi_identify(
    x: *const FdiSignal,
    u: *const FdiSignal,
    structure: FdiStructure,
    method: *const c_char,
    window: *const c_char,
    n_p: usize,
    out_report: *mut *mut FdiReport,
) -> FdiStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        let (x, u) = (&handle(x, "x")?.0, &handle(u, "u")?.0);
        let method: Method = text(method, "method")?.parse()?;
        let window = if method.rectangular() && window.is_null() {
            WindowSpec::rectangular(x.t_len)?
        } else {
            WindowSpec::parse(text(window, "window")?, x.t_len)?
        };
        let n_p = if matches!(method, Method::Ps | Method::Mixed) { n_p } else { 0 };
        let cfg = IdentifyConfig { method, window, n_p, ..IdentifyConfig::corrected(window) };
        *slot = Box::into_raw(Box::new(FdiReport(identify(x, u, structure.model()?, &cfg)?)));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fdi_report_free(report: *mut FdiReport) {
    free(report)
}

/// Estimated parameters in the layout of [`fdi_experiment_theta`].
///
/// # Safety
/// `report` must be a live handle; a non-null `buf` must hold `capacity` elements.
#[no_mangle]
pub unsafe extern "C" fn fdi_report_theta(
    report: *const FdiReport,
    buf: *mut f64,
    capacity: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> FdiStatus {
    guard(|| write_matrix(&handle(report, "report")?.0.theta_hat.theta(), buf, capacity, rows, cols))
}

/// Summary numbers of an estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FdiReportSummary {
    pub rank: usize,
    pub inverse_condition: f64,
    pub imag_norm: f64,
    pub residual_l2: f64,
    pub band_bins: usize,
    pub wall_time: f64,
}

/// # Safety
/// `report` must be a live handle and `out_summary` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdi_report_summary(report: *const FdiReport, out_summary: *mut FdiReportSummary) -> FdiStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        *out(out_summary, "out_summary")? = FdiReportSummary {
            rank: r.rank,
            inverse_condition: r.inverse_condition,
            imag_norm: r.imag_norm,
            residual_l2: r.residual_l2,
            band_bins: r.band_bins,
            wall_time: r.wall_time,
        };
        Ok(())
    })
}

/// `‖θ - θ̃‖` against an experiment's ground truth.
///
/// # Safety
/// Handles must be live and `out_error` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fdi_report_param_error(
    report: *const FdiReport,
    experiment: *const FdiExperiment,
    out_error: *mut f64,
) -> FdiStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        let e = &handle(experiment, "experiment")?.0;
        *out(out_error, "out_error")? = param_error(&e.truth, &r.theta_hat)?;
        Ok(())
    })
}
