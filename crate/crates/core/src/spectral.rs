//! Sampled signals, Fourier coefficients and frequency-domain operators.
//!
//! Coefficients follow the integral convention
//! `coeff_k = (T/N) Σ_j s(t_j) e^{-2πi k j / N} ≈ ∫_0^T s(t) e^{-2πi f_k t} dt`
//! with `f_k = k/T`, and time derivatives map to multiplication by
//! `D(f) = 2πi f`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::windows::WindowTable;

/// Uniformly sampled multichannel record on `[0, T)`, `t_j = j T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub t_len: f64,
    /// `(channel, time index)`.
    pub values: DMatrix<Complex64>,
    /// Optional extra sample at `t = T`.
    pub terminal: Option<DVector<Complex64>>,
}

impl Signal {
    pub fn new(t_len: f64, values: DMatrix<Complex64>) -> Result<Self> {
        if !(t_len > 0.0) || !t_len.is_finite() {
            return Err(Error::InvalidArgument(format!("record length must be positive, got {t_len}")));
        }
        if values.ncols() < 2 {
            return Err(Error::InvalidArgument(format!("signal needs N >= 2 samples, got {}", values.ncols())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("signal contains non-finite values".into()));
        }
        Ok(Self { t_len, values, terminal: None })
    }

    /// Samples `f(channel, t)` on the grid, including the terminal sample at `T`.
    pub fn from_fn<F: Fn(usize, f64) -> Complex64>(t_len: f64, n: usize, channels: usize, f: F) -> Result<Self> {
        let values = DMatrix::from_fn(channels, n, |c, j| f(c, j as f64 * t_len / n as f64));
        let terminal = DVector::from_fn(channels, |c, _| f(c, t_len));
        Ok(Self::new(t_len, values)?.with_terminal(terminal))
    }

    pub fn with_terminal(mut self, terminal: DVector<Complex64>) -> Self {
        debug_assert_eq!(terminal.len(), self.values.nrows());
        self.terminal = Some(terminal);
        self
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn sample_rate(&self) -> f64 {
        self.n_samples() as f64 / self.t_len
    }

    pub fn nyquist(&self) -> f64 {
        0.5 * self.sample_rate()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.t_len / self.n_samples() as f64
    }

    pub fn scaled(&self, factor: Complex64) -> Signal {
        Signal {
            t_len: self.t_len,
            values: self.values.map(|v| v * factor),
            terminal: self.terminal.as_ref().map(|t| t.map(|v| v * factor)),
        }
    }
}

/// Per-channel complex coefficients on the grid `f = bin / (resolution T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub t_len: f64,
    /// Frequency-grid refinement; 1 for signal spectra.
    pub resolution: usize,
    /// Signed bin numbers, one per column of `coeffs`.
    pub bins: Vec<i64>,
    /// `(channel, bin column)`.
    pub coeffs: DMatrix<Complex64>,
}

impl Spectrum {
    pub fn from_rows(t_len: f64, resolution: usize, bins: Vec<i64>, rows: Vec<Vec<Complex64>>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != bins.len()) {
            return Err(Error::GridMismatch("spectrum rows do not match the bin list".into()));
        }
        let coeffs = DMatrix::from_fn(rows.len(), bins.len(), |c, k| rows[c][k]);
        Ok(Self { t_len, resolution, bins, coeffs })
    }

    pub fn zeros(t_len: f64, bins: Vec<i64>, channels: usize) -> Self {
        let n = bins.len();
        Self { t_len, resolution: 1, bins, coeffs: DMatrix::zeros(channels, n) }
    }

    pub fn n_channels(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn frequency(&self, bin: i64) -> f64 {
        bin as f64 / (self.resolution as f64 * self.t_len)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.bins.iter().map(|&b| self.frequency(b)).collect()
    }

    pub fn channel(&self, c: usize) -> Vec<Complex64> {
        self.coeffs.row(c).iter().copied().collect()
    }

    /// Column holding `bin`, if present.
    pub fn column_of(&self, bin: i64) -> Option<usize> {
        let n = self.bins.len() as i64;
        if n == 0 {
            return None;
        }
        let guess = bin.rem_euclid(n) as usize;
        if self.bins[guess] == bin {
            return Some(guess);
        }
        self.bins.iter().position(|&b| b == bin)
    }

    /// Restriction to the given bins, in that order.
    pub fn select(&self, bins: &[i64]) -> Result<Spectrum> {
        let cols = bins
            .iter()
            .map(|&b| self.column_of(b).ok_or_else(|| Error::GridMismatch(format!("bin {b} not in spectrum"))))
            .collect::<Result<Vec<_>>>()?;
        let coeffs = DMatrix::from_fn(self.n_channels(), cols.len(), |c, k| self.coeffs[(c, cols[k])]);
        Ok(Spectrum { t_len: self.t_len, resolution: self.resolution, bins: bins.to_vec(), coeffs })
    }

    fn same_grid(&self, other: &Spectrum) -> bool {
        self.bins == other.bins && self.resolution == other.resolution && (self.t_len - other.t_len).abs() <= 1e-12 * self.t_len
    }

    pub fn add_scaled(&mut self, other: &Spectrum, factor: Complex64) -> Result<()> {
        if !self.same_grid(other) || self.n_channels() != other.n_channels() {
            return Err(Error::GridMismatch("spectra live on different grids".into()));
        }
        self.coeffs += other.coeffs.map(|c| c * factor);
        Ok(())
    }
}

/// Signed bin number of FFT output index `k` for an `n`-point transform.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// `D(f) = 2πi f`, the frequency-domain image of `d/dt`.
pub fn derivative_multiplier(f: f64) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * f)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FourierOptions {
    /// Replace sample 0 by `(s(0) + s(T)) / 2` when the terminal sample is known.
    pub endpoint_average: bool,
}

fn fft_rows(values: &DMatrix<Complex64>, inverse: bool) -> Vec<Vec<Complex64>> {
    let n = values.ncols();
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    (0..values.nrows())
        .map(|c| {
            let mut row: Vec<Complex64> = values.row(c).iter().copied().collect();
            fft.process(&mut row);
            row
        })
        .collect()
}

/// Coefficients on every DFT bin, in FFT order with signed bin numbers.
pub fn fourier_coeffs_with(signal: &Signal, opts: FourierOptions) -> Spectrum {
    let n = signal.n_samples();
    let mut values = signal.values.clone();
    if opts.endpoint_average {
        if let Some(term) = &signal.terminal {
            for c in 0..signal.n_channels() {
                values[(c, 0)] = 0.5 * (values[(c, 0)] + term[c]);
            }
        }
    }
    let scale = signal.t_len / n as f64;
    let rows = fft_rows(&values, false);
    let coeffs = DMatrix::from_fn(signal.n_channels(), n, |c, k| rows[c][k] * scale);
    let bins = (0..n).map(|k| signed_bin(k, n)).collect();
    Spectrum { t_len: signal.t_len, resolution: 1, bins, coeffs }
}

pub fn fourier_coeffs_full(signal: &Signal) -> Spectrum {
    fourier_coeffs_with(signal, FourierOptions::default())
}

/// Coefficients for the non-negative bins `0..=k_max`.
pub fn fourier_coeffs(signal: &Signal, k_max: usize) -> Result<Spectrum> {
    let n = signal.n_samples();
    if k_max > n / 2 {
        return Err(Error::InvalidArgument(format!("k_max = {k_max} exceeds N/2 = {}", n / 2)));
    }
    let full = fourier_coeffs_full(signal);
    let bins: Vec<i64> = (0..=k_max as i64).collect();
    full.select(&bins)
}

/// Inverse of [`fourier_coeffs_full`]; the spectrum must hold all `N` bins in FFT order.
pub fn inverse_fourier(spectrum: &Spectrum) -> Result<Signal> {
    let n = spectrum.bins.len();
    if spectrum.bins.iter().enumerate().any(|(k, &b)| b != signed_bin(k, n)) {
        return Err(Error::GridMismatch("inverse transform needs a full FFT-ordered spectrum".into()));
    }
    let rows = fft_rows(&spectrum.coeffs, true);
    let scale = 1.0 / spectrum.t_len;
    let values = DMatrix::from_fn(spectrum.n_channels(), n, |c, j| rows[c][j] * scale);
    Signal::new(spectrum.t_len, values)
}

/// Multiplies every coefficient by `D(f)^m`.
pub fn spectral_derivative(spectrum: &Spectrum, m: u32) -> Spectrum {
    let mut out = spectrum.clone();
    if m == 0 {
        return out;
    }
    for (k, &bin) in spectrum.bins.iter().enumerate() {
        let d = derivative_multiplier(spectrum.frequency(bin)).powu(m);
        for c in 0..spectrum.n_channels() {
            out.coeffs[(c, k)] *= d;
        }
    }
    out
}

/// Pointwise product of every channel with derivative row `k` of the window table.
pub fn apply_window(signal: &Signal, table: &WindowTable, k: usize) -> Result<Signal> {
    if table.n_samples != signal.n_samples() {
        return Err(Error::GridMismatch(format!("window table has {} samples, signal has {}", table.n_samples, signal.n_samples())));
    }
    if (table.spec.length - signal.t_len).abs() > 1e-12 * signal.t_len {
        return Err(Error::GridMismatch(format!("window length {} differs from record length {}", table.spec.length, signal.t_len)));
    }
    let row = table.row(k)?;
    let values = DMatrix::from_fn(signal.n_channels(), signal.n_samples(), |c, j| signal.values[(c, j)] * row[j]);
    let terminal = signal.terminal.as_ref().map(|t| t.map(|v| v * table.terminal[k]));
    Ok(Signal { t_len: signal.t_len, values, terminal })
}

/// Zero-phase low-pass: zero every bin with `|f| > cutoff`.
pub fn lowpass_filter(signal: &Signal, cutoff: f64) -> Result<Signal> {
    if !(cutoff >= 0.0 && cutoff < signal.nyquist()) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} must lie in [0, f_nyq = {})", signal.nyquist())));
    }
    let mut spectrum = fourier_coeffs_full(signal);
    for (k, &bin) in spectrum.bins.clone().iter().enumerate() {
        if spectrum.frequency(bin).abs() > cutoff {
            spectrum.coeffs.column_mut(k).fill(Complex64::new(0.0, 0.0));
        }
    }
    inverse_fourier(&spectrum)
}
