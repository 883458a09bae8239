//! Window families, their analytic time derivatives and spectral diagnostics.
//!
//! Every window is supported on the open interval `(0, T)`. The two smooth
//! families are
//!
//! * `sin:n`  — `sin^n(pi t / T)`, whose first `n - 1` derivatives vanish at
//!   both ends;
//! * `cinf:n` — `exp(-n T^2 / (t (T - t))) / exp(-4 n)`, infinitely smooth
//!   with every derivative vanishing at both ends.
//!
//! `rect` has no pointwise derivatives and only feeds the polynomial-transient
//! baseline; `poly:n` (`1 - (2t/T - 1)^n`) is kept for overlap-variance
//! comparisons.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

/// Highest derivative order that every smooth family is guaranteed to support.
pub const MAX_SUPPORTED_DERIVATIVE: usize = 12;

/// Minimum number of samples per window length used for window spectra.
pub const MIN_SPECTRUM_SAMPLES: usize = 1 << 14;

/// Search bound (in units of `1/T`) for the leakage threshold frequency.
pub const F_ERR_SEARCH_MAX: f64 = 10_000.0;

/// Zero-padding factor of the spectrum used by [`f_err`].
pub const F_ERR_OVERSAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFamily {
    Rectangular,
    Sin,
    CInf,
    PolyRef,
}

impl WindowFamily {
    pub fn name(self) -> &'static str {
        match self {
            WindowFamily::Rectangular => "rect",
            WindowFamily::Sin => "sin",
            WindowFamily::CInf => "cinf",
            WindowFamily::PolyRef => "poly",
        }
    }
}

/// A window family together with its smoothness order and length in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub family: WindowFamily,
    pub order: f64,
    pub length: f64,
}

impl WindowSpec {
    pub fn new(family: WindowFamily, order: f64, length: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidWindow(format!("length must be positive, got {length}")));
        }
        match family {
            WindowFamily::Rectangular => {}
            WindowFamily::Sin | WindowFamily::PolyRef => {
                if order < 1.0 || order.fract() != 0.0 || order > 64.0 {
                    return Err(Error::InvalidWindow(format!("{} order must be an integer in 1..=64, got {order}", family.name())));
                }
            }
            WindowFamily::CInf => {
                if !(order > 0.0) || !order.is_finite() {
                    return Err(Error::InvalidWindow(format!("cinf order must be positive, got {order}")));
                }
            }
        }
        let order = if family == WindowFamily::Rectangular { 0.0 } else { order };
        Ok(Self { family, order, length })
    }

    pub fn rectangular(length: f64) -> Result<Self> {
        Self::new(WindowFamily::Rectangular, 0.0, length)
    }

    pub fn sin(n: u32, length: f64) -> Result<Self> {
        Self::new(WindowFamily::Sin, n as f64, length)
    }

    pub fn cinf(n: f64, length: f64) -> Result<Self> {
        Self::new(WindowFamily::CInf, n, length)
    }

    pub fn poly_ref(n: u32, length: f64) -> Result<Self> {
        Self::new(WindowFamily::PolyRef, n as f64, length)
    }

    /// Parses `rect`, `sin:n`, `cinf:n` or `poly:n` for a window of the given length.
    pub fn parse(text: &str, length: f64) -> Result<Self> {
        let text = text.trim();
        let (name, order) = match text.split_once(':') {
            Some((name, order)) => {
                let order: f64 = order.trim().parse().map_err(|_| Error::InvalidWindow(format!("bad window order in '{text}'")))?;
                (name.trim(), order)
            }
            None => (text, 1.0),
        };
        let family = match name.to_ascii_lowercase().as_str() {
            "rect" | "rectangular" => WindowFamily::Rectangular,
            "sin" => WindowFamily::Sin,
            "cinf" => WindowFamily::CInf,
            "poly" | "poly_ref" => WindowFamily::PolyRef,
            other => return Err(Error::InvalidWindow(format!("unknown window family '{other}'"))),
        };
        Self::new(family, order, length)
    }

    pub fn with_length(self, length: f64) -> Result<Self> {
        Self::new(self.family, self.order, length)
    }

    fn int_order(&self) -> usize {
        self.order as usize
    }
}

impl fmt::Display for WindowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            WindowFamily::Rectangular => write!(f, "rect"),
            family => write!(f, "{}:{}", family.name(), self.order),
        }
    }
}

impl FromStr for WindowSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 1.0)
    }
}

/// Ascending-coefficient polynomial used by the smooth-window derivative recurrence.
#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect())
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len().max(other.0.len())];
        for (i, c) in self.0.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.0.iter().enumerate() {
            out[i] += c;
        }
        Poly(out)
    }

    fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Numerators `P_k(u)` of `d^k/du^k exp(-n / q(u)) = P_k(u) q(u)^{-2k} exp(-n / q(u))`
/// with `q(u) = u (1 - u)`.
///
/// Built by the exact recurrence `P_{k+1} = q^2 P_k' - 2k q q' P_k + n q' P_k`.
fn cinf_numerators(n: f64, max_k: usize) -> Vec<Poly> {
    let q = Poly(vec![0.0, 1.0, -1.0]);
    let dq = Poly(vec![1.0, -2.0]);
    let q2 = q.mul(&q);
    let qdq = q.mul(&dq);
    let mut out = vec![Poly(vec![1.0])];
    for k in 0..max_k {
        let p = &out[k];
        let next = q2.mul(&p.derivative()).add(&qdq.mul(p).scale(-2.0 * k as f64)).add(&dq.mul(p).scale(n));
        out.push(next);
    }
    out
}

/// Coefficients `c_m` and angular rates `p_m` with
/// `sin^n(pi u) = Re sum_m c_m exp(i p_m u)`.
fn sin_expansion(n: usize) -> Vec<(Complex64, f64)> {
    let norm = Complex64::new(0.0, 2.0).powu(n as u32).inv();
    (0..=n)
        .map(|m| {
            let sign = if (n - m).is_multiple_of(2) { 1.0 } else { -1.0 };
            let c = norm * (binomial(n, m) * sign);
            (c, (2.0 * m as f64 - n as f64) * PI)
        })
        .collect()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Pre-computed evaluator for one window and a range of derivative orders.
#[derive(Debug, Clone)]
struct Evaluator {
    spec: WindowSpec,
    cinf: Vec<Poly>,
    sin: Vec<(Complex64, f64)>,
}

impl Evaluator {
    fn new(spec: WindowSpec, max_k: usize) -> Result<Self> {
        if spec.family == WindowFamily::Rectangular && max_k > 0 {
            return Err(Error::UnsupportedDerivative { family: "rect", order: max_k });
        }
        if max_k > MAX_SUPPORTED_DERIVATIVE {
            return Err(Error::InvalidArgument(format!(
                "derivative order {max_k} exceeds the supported maximum {MAX_SUPPORTED_DERIVATIVE}"
            )));
        }
        let cinf = match spec.family {
            WindowFamily::CInf => cinf_numerators(spec.order, max_k),
            _ => Vec::new(),
        };
        let sin = match spec.family {
            WindowFamily::Sin => sin_expansion(spec.int_order()),
            _ => Vec::new(),
        };
        Ok(Self { spec, cinf, sin })
    }

    /// Analytic formula in normalised time `u = t/T`, valid on the closed
    /// interval (one-sided limits at the ends).
    fn formula(&self, k: usize, u: f64) -> f64 {
        let t_len = self.spec.length;
        let scale = t_len.powi(-(k as i32));
        match self.spec.family {
            WindowFamily::Rectangular => 1.0,
            WindowFamily::Sin => {
                let n = self.spec.int_order();
                if k < n && (u <= 0.0 || u >= 1.0) {
                    return 0.0;
                }
                let v: f64 = self
                    .sin
                    .iter()
                    .map(|(c, p)| {
                        let phase = Complex64::from_polar(1.0, p * u);
                        (c * Complex64::new(0.0, *p).powu(k as u32) * phase).re
                    })
                    .sum();
                v * scale
            }
            WindowFamily::CInf => {
                if u <= 0.0 || u >= 1.0 {
                    return 0.0;
                }
                let n = self.spec.order;
                let q = u * (1.0 - u);
                let exponent = 4.0 * n - n / q - 2.0 * k as f64 * q.ln();
                if exponent < -745.0 {
                    return 0.0;
                }
                self.cinf[k].eval(u) * exponent.exp() * scale
            }
            WindowFamily::PolyRef => {
                let n = self.spec.int_order();
                let x = 2.0 * u - 1.0;
                if k == 0 {
                    1.0 - x.powi(n as i32)
                } else if k > n {
                    0.0
                } else {
                    let falling: f64 = (0..k).map(|i| (n - i) as f64).product();
                    -falling * 2f64.powi(k as i32) * x.powi((n - k) as i32) * scale
                }
            }
        }
    }

    fn value(&self, k: usize, t: f64) -> f64 {
        let t_len = self.spec.length;
        if !(t > 0.0 && t < t_len) {
            return 0.0;
        }
        self.formula(k, t / t_len)
    }
}

/// `d^k w / dt^k (t)`; zero outside the open support `(0, T)`.
pub fn window_value(spec: &WindowSpec, k: usize, t: f64) -> Result<f64> {
    Ok(Evaluator::new(*spec, k)?.value(k, t))
}

/// Window derivatives sampled on `t_j = j T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTable {
    pub spec: WindowSpec,
    pub n_samples: usize,
    pub max_deriv: usize,
    /// `samples[k][j] = d^k w/dt^k (j T / N)`, with `j = 0` holding the right limit.
    pub samples: Vec<Vec<f64>>,
    /// Left limits at `t = T` for each derivative order.
    pub terminal: Vec<f64>,
}

impl WindowTable {
    pub fn row(&self, k: usize) -> Result<&[f64]> {
        self.samples.get(k).map(Vec::as_slice).ok_or(Error::MissingDerivatives { requested: k, available: self.max_deriv })
    }
}

pub fn window_table(spec: &WindowSpec, n_samples: usize, max_deriv: usize) -> Result<WindowTable> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("window table needs N >= 2, got {n_samples}")));
    }
    let eval = Evaluator::new(*spec, max_deriv)?;
    let mut samples = Vec::with_capacity(max_deriv + 1);
    let mut terminal = Vec::with_capacity(max_deriv + 1);
    for k in 0..=max_deriv {
        let mut row: Vec<f64> = (0..n_samples).map(|j| eval.formula(k, j as f64 / n_samples as f64)).collect();
        row[0] = eval.formula(k, 0.0);
        samples.push(row);
        terminal.push(eval.formula(k, 1.0));
    }
    Ok(WindowTable { spec: *spec, n_samples, max_deriv, samples, terminal })
}

/// Fourier transform `ŵ_k(f) = ∫ d^k w/dt^k e^{-2πift} dt` on the grid
/// `f = m / (oversample T)`, `0 <= f <= f_max`.
///
/// Computed as a zero-padded trapezoid-rule DFT of at least
/// [`MIN_SPECTRUM_SAMPLES`] samples, with the sampling rate kept at four times
/// `f_max` or more so the transform's own aliasing stays far below the values
/// of interest.
pub fn window_spectrum(spec: &WindowSpec, k: usize, oversample: usize, f_max: f64) -> Result<Spectrum> {
    if oversample == 0 {
        return Err(Error::InvalidArgument("oversample must be at least 1".into()));
    }
    if !(f_max >= 0.0) {
        return Err(Error::InvalidArgument(format!("f_max must be non-negative, got {f_max}")));
    }
    let t_len = spec.length;
    let eval = Evaluator::new(*spec, k)?;
    let needed = (4.0 * f_max * t_len).ceil() as usize;
    let n_s = needed.max(MIN_SPECTRUM_SAMPLES).next_power_of_two();
    let len = n_s * oversample;

    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (j, slot) in buf.iter_mut().enumerate().take(n_s).skip(1) {
        *slot = Complex64::new(eval.formula(k, j as f64 / n_s as f64), 0.0);
    }
    buf[0] += 0.5 * eval.formula(k, 0.0);
    buf[n_s % len] += 0.5 * eval.formula(k, 1.0);

    let fft = FftPlanner::new().plan_fft_forward(len);
    fft.process(&mut buf);

    let m_max = ((f_max * t_len * oversample as f64).round() as usize).min(len / 2);
    let scale = t_len / n_s as f64;
    let coeffs: Vec<Complex64> = buf[..=m_max].iter().map(|c| c * scale).collect();
    let bins: Vec<i64> = (0..=m_max as i64).collect();
    Spectrum::from_rows(t_len, oversample, bins, vec![coeffs])
}

/// Result of a leakage-threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FErr {
    /// Threshold frequency in units of `1/T`.
    Found(f64),
    /// Not reached below the search bound (also in units of `1/T`).
    Beyond(f64),
}

impl FErr {
    pub fn value(&self) -> Option<f64> {
        match self {
            FErr::Found(f) => Some(*f),
            FErr::Beyond(_) => None,
        }
    }
}

impl fmt::Display for FErr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FErr::Found(v) => write!(f, "{}", v.ceil()),
            FErr::Beyond(b) => write!(f, ">{b}"),
        }
    }
}

/// Window area `S = ŵ_0(0)`, by composite Gauss–Legendre quadrature.
pub fn window_area(spec: &WindowSpec) -> Result<f64> {
    let eval = Evaluator::new(*spec, 0)?;
    let rule = gauss_legendre(16);
    Ok(integrate(|t| eval.value(0, t), 0.0, spec.length, 64, &rule))
}

/// Smallest frequency `f` such that `sup_{|f'| >= f} |ŵ_k(f')| / S < p`,
/// where `S` is the area of the base window.
pub fn f_err(spec: &WindowSpec, k: usize, p: f64) -> Result<FErr> {
    let spectrum = window_spectrum(spec, k, F_ERR_OVERSAMPLE, F_ERR_SEARCH_MAX / spec.length)?;
    f_err_from_spectrum(&spectrum, window_area(spec)?, p)
}

/// Threshold search on an already computed window spectrum.
pub fn f_err_from_spectrum(spectrum: &Spectrum, area: f64, p: f64) -> Result<FErr> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold p must lie in (0, 1), got {p}")));
    }
    let row = spectrum.channel(0);
    let mut envelope = vec![0.0; row.len()];
    let mut running = 0.0f64;
    for (i, c) in row.iter().enumerate().rev() {
        running = running.max(c.norm() / area);
        envelope[i] = running;
    }
    let bound = spectrum.frequency(*spectrum.bins.last().unwrap_or(&0)) * spectrum.t_len;
    Ok(envelope
        .iter()
        .position(|&e| e < p)
        .map(|i| FErr::Found(spectrum.frequency(spectrum.bins[i]) * spectrum.t_len))
        .unwrap_or(FErr::Beyond(bound)))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre quadrature of `f` on `[a, b]`.
pub(crate) fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let (nodes, weights) = rule;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            nodes.iter().zip(weights).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

const OVERLAP_PANELS: usize = 64;
const OVERLAP_NODES: usize = 16;

/// Overlap correlation factors `ρ_j` for window shifts `j T (1 - tau)`.
#[derive(Debug, Clone)]
pub struct OverlapCorrelation {
    eval: Arc<Evaluator>,
    rule: (Vec<f64>, Vec<f64>),
    energy: f64,
}

impl OverlapCorrelation {
    pub fn new(spec: &WindowSpec) -> Result<Self> {
        let eval = Evaluator::new(*spec, 0)?;
        let rule = gauss_legendre(OVERLAP_NODES);
        let t_len = spec.length;
        let energy = integrate(|t| eval.value(0, t).powi(2), 0.0, t_len, OVERLAP_PANELS, &rule);
        Ok(Self { eval: Arc::new(eval), rule, energy })
    }

    /// `(∫ w(t) w(t - shift) dt / ∫ w² dt)²`.
    pub fn rho(&self, shift: f64) -> f64 {
        let t_len = self.eval.spec.length;
        let shift = shift.abs();
        if shift >= t_len {
            return 0.0;
        }
        let cross = integrate(|t| self.eval.value(0, t) * self.eval.value(0, t - shift), shift, t_len, OVERLAP_PANELS, &self.rule);
        (cross / self.energy).powi(2)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("overlap fraction must lie in [0, 1), got {tau}")));
    }
    Ok(())
}

/// Normalised power-spectrum variance `(1 + 2 Σ_{j<K} (K-j)/K ρ_j) / K`
/// for `K` windows overlapping by the fraction `tau`.
pub fn overlap_variance(spec: &WindowSpec, tau: f64, windows: usize) -> Result<f64> {
    check_tau(tau)?;
    if windows == 0 {
        return Err(Error::InvalidArgument("number of windows must be at least 1".into()));
    }
    let corr = OverlapCorrelation::new(spec)?;
    Ok(variance_with(&corr, spec.length, tau, windows))
}

fn variance_with(corr: &OverlapCorrelation, t_len: f64, tau: f64, windows: usize) -> f64 {
    let k = windows as f64;
    let step = t_len * (1.0 - tau);
    let mut sum = 0.0;
    for j in 1..windows {
        let shift = j as f64 * step;
        if shift >= t_len {
            break;
        }
        sum += (k - j as f64) / k * corr.rho(shift);
    }
    (1.0 + 2.0 * sum) / k
}

/// Variance for a fixed record of `record_windows` window lengths, normalised by
/// its zero-overlap value. The window count grows as `1 + (R - 1)/(1 - tau)`.
pub fn normalized_overlap_variance(spec: &WindowSpec, tau: f64, record_windows: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(record_windows >= 1.0) {
        return Err(Error::InvalidArgument(format!("record must hold at least one window, got {record_windows}")));
    }
    let corr = OverlapCorrelation::new(spec)?;
    let k0 = (record_windows + 1e-9).floor() as usize;
    let k = ((record_windows - 1.0) / (1.0 - tau) + 1e-9).floor() as usize + 1;
    Ok(variance_with(&corr, spec.length, tau, k) / variance_with(&corr, spec.length, 0.0, k0))
}

/// Infinite-record limit of [`normalized_overlap_variance`]: `(1 - tau)(1 + 2 Σ_j ρ_j)`.
pub fn asymptotic_overlap_variance(spec: &WindowSpec, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let corr = OverlapCorrelation::new(spec)?;
    let step = spec.length * (1.0 - tau);
    let mut sum = 0.0;
    let mut j = 1usize;
    while (j as f64) * step < spec.length {
        sum += corr.rho(j as f64 * step);
        j += 1;
    }
    Ok((1.0 - tau) * (1.0 + 2.0 * sum))
}

/// Width of the region where `w(t) >= max(w) / 2`, in seconds.
pub fn half_power_width(spec: &WindowSpec) -> Result<f64> {
    let eval = Evaluator::new(*spec, 0)?;
    let t_len = spec.length;
    let grid = 4096;
    let values: Vec<f64> = (1..grid).map(|i| eval.value(0, t_len * i as f64 / grid as f64)).collect();
    let peak = values.iter().cloned().fold(f64::MIN, f64::max);
    let level = 0.5 * peak;
    let first = values.iter().position(|&v| v >= level).unwrap_or(0);
    let last = values.iter().rposition(|&v| v >= level).unwrap_or(values.len() - 1);
    let at = |i: usize| t_len * (i + 1) as f64 / grid as f64;
    let refine = |mut lo: f64, mut hi: f64, rising: bool| {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let above = eval.value(0, mid) >= level;
            if above == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let left = if first == 0 { 0.0 } else { refine(at(first - 1), at(first), true) };
    let right = if last + 1 >= values.len() { t_len } else { refine(at(last), at(last + 1), false) };
    Ok(right - left)
}
