//! Windowing correction spectra.
//!
//! For a window `w` and signal `x` the order-`j` correction is
//! `x^{j} = d^j(wx)/dt^j - w d^j x/dt^j`. It is assembled from
//! `F(w^{(j)} x)` and spectral derivatives of lower-order corrections,
//!
//! ```text
//! x^{j} = a_0 w^{(j)} x + Σ_{m=1}^{j-1} a_m d^m x^{j-m}/dt^m,
//! ```
//!
//! so no time derivative of `x` is ever taken.

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{apply_window, derivative_multiplier, fourier_coeffs_with, FourierOptions, Signal, Spectrum};
use crate::windows::{binomial, window_table, WindowSpec, WindowTable};

/// Highest order accepted by [`recurrence_coeffs`].
pub const MAX_DEFAULT_ORDER: usize = 4;
/// Highest order accepted by [`recurrence_coeffs_extended`].
pub const MAX_EXTENDED_ORDER: usize = 12;

type Q = Ratio<i128>;

/// Orders 1..=3, written out.
const KNOWN: [&[i64]; 3] = [&[1], &[-1, 2], &[1, 3, -3]];

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceCoeffs {
    pub order: usize,
    /// `a_0 .. a_{order-1}`; `a_0` carries the sign of the `w^{(order)} x` term.
    pub coeffs: Vec<f64>,
    exact: Vec<Q>,
}

impl RecurrenceCoeffs {
    pub fn exact(&self) -> Vec<(i128, i128)> {
        self.exact.iter().map(|q| (*q.numer(), *q.denom())).collect()
    }
}

fn binom_i(n: usize, k: usize) -> i128 {
    if k > n {
        0
    } else {
        binomial(n, k).round() as i128
    }
}

/// Solves for the recurrence coefficients of order `n` (1..=4).
pub fn recurrence_coeffs(n: usize) -> Result<RecurrenceCoeffs> {
    if !(1..=MAX_DEFAULT_ORDER).contains(&n) {
        return Err(Error::Recurrence {
            order: n,
            reason: format!("supported orders are 1..={MAX_DEFAULT_ORDER}; use recurrence_coeffs_extended"),
        });
    }
    solve_recurrence(n)
}

/// Same as [`recurrence_coeffs`] for orders up to [`MAX_EXTENDED_ORDER`].
pub fn recurrence_coeffs_extended(n: usize) -> Result<RecurrenceCoeffs> {
    if !(1..=MAX_EXTENDED_ORDER).contains(&n) {
        return Err(Error::Recurrence { order: n, reason: format!("order must lie in 1..={MAX_EXTENDED_ORDER}") });
    }
    solve_recurrence(n)
}

fn solve_recurrence(n: usize) -> Result<RecurrenceCoeffs> {
    // Expand every candidate term on the Leibniz basis B_r = w^{(r)} x^{(n-r)}, r = 1..n.
    // d^m x^{n-m} contributes Σ_k C(n-m, k) C(m, r-k) to B_r; w^{(n)} x is B_n.
    let mut a = vec![vec![Q::from_integer(0); n]; n];
    let mut rhs = vec![Q::from_integer(0); n];
    for r in 1..=n {
        let row = r - 1;
        a[row][0] = Q::from_integer(if r == n { 1 } else { 0 });
        for m in 1..n {
            let mut e = 0i128;
            for k in 1..=r.min(n - m) {
                if r - k <= m {
                    e += binom_i(n - m, k) * binom_i(m, r - k);
                }
            }
            a[row][m] = Q::from_integer(e);
        }
        rhs[row] = Q::from_integer(binom_i(n, r));
    }
    let exact = gauss_solve(a, rhs).ok_or_else(|| Error::Recurrence { order: n, reason: "singular linear system".into() })?;

    if let Some(known) = KNOWN.get(n - 1) {
        if exact.iter().zip(known.iter()).any(|(q, &k)| *q != Q::from_integer(k as i128)) {
            return Err(Error::Recurrence { order: n, reason: "solution disagrees with the tabulated low-order case".into() });
        }
    }
    validate_against_definition(n, &exact)?;

    let coeffs = exact.iter().map(|q| *q.numer() as f64 / *q.denom() as f64).collect();
    Ok(RecurrenceCoeffs { order: n, coeffs, exact })
}

fn gauss_solve(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = b.len();
    let zero = Q::from_integer(0);
    for col in 0..n {
        let pivot = (col..n).find(|&r| a[r][col] != zero)?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in 0..n {
            if r != col && a[r][col] != zero {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    let v = a[col][c];
                    a[r][c] -= f * v;
                }
                let v = b[col];
                b[r] -= f * v;
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Exact integer polynomials for the symbolic check.
mod ipoly {
    pub type P = Vec<i128>;

    pub fn deriv(p: &P, times: usize) -> P {
        let mut out = p.clone();
        for _ in 0..times {
            if out.len() <= 1 {
                return vec![0];
            }
            out = out.iter().enumerate().skip(1).map(|(i, c)| c * i as i128).collect();
        }
        out
    }

    pub fn mul(a: &P, b: &P) -> P {
        let mut out = vec![0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    pub fn sub(a: &P, b: &P) -> P {
        let mut out = vec![0; a.len().max(b.len())];
        for (i, x) in a.iter().enumerate() {
            out[i] += x;
        }
        for (i, y) in b.iter().enumerate() {
            out[i] -= y;
        }
        out
    }

    /// Correction straight from its definition: d^j(wx) - w x^{(j)}.
    pub fn correction(w: &P, x: &P, j: usize) -> P {
        sub(&deriv(&mul(w, x), j), &mul(w, &deriv(x, j)))
    }
}

/// Checks `a_0 w^{(n)} x + Σ a_m d^m x^{n-m} == d^n(wx) - w x^{(n)}` exactly on
/// generic integer polynomials.
fn validate_against_definition(n: usize, a: &[Q]) -> Result<()> {
    let pairs: [(ipoly::P, ipoly::P); 2] = [
        ((0..(n + 4)).map(|i| (i as i128 * 7 + 3) % 11 - 5).collect(), (0..(n + 3)).map(|i| (i as i128 * 5 + 2) % 9 - 4).collect()),
        ((0..(n + 3)).map(|i| (i as i128 * 3 + 1) % 7 - 2).collect(), (0..(n + 5)).map(|i| (i as i128 * 4 + 6) % 13 - 6).collect()),
    ];
    for (w, x) in pairs.iter() {
        let target = ipoly::correction(w, x, n);
        let len = target.len() + 2;
        let mut assembled = vec![Q::from_integer(0); len];
        let lead = ipoly::mul(&ipoly::deriv(w, n), x);
        for (i, c) in lead.iter().enumerate() {
            assembled[i] += a[0] * Q::from_integer(*c);
        }
        for m in 1..n {
            let term = ipoly::deriv(&ipoly::correction(w, x, n - m), m);
            for (i, c) in term.iter().enumerate() {
                assembled[i] += a[m] * Q::from_integer(*c);
            }
        }
        let ok = (0..len).all(|i| assembled[i] == Q::from_integer(target.get(i).copied().unwrap_or(0)));
        if !ok {
            return Err(Error::Recurrence { order: n, reason: "coefficients fail the symbolic Leibniz check".into() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRole {
    State,
    Input,
}

/// Correction spectra `x̂^{1} .. x̂^{j_max}` of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionSet {
    pub role: SignalRole,
    /// Entry `j - 1` holds order `j`.
    pub spectra: Vec<Spectrum>,
}

impl CorrectionSet {
    pub fn empty(role: SignalRole) -> Self {
        Self { role, spectra: Vec::new() }
    }

    pub fn max_order(&self) -> usize {
        self.spectra.len()
    }

    /// Order-`j` correction; `None` for order 0, which is identically zero.
    pub fn order(&self, j: usize) -> Option<&Spectrum> {
        if j == 0 {
            None
        } else {
            self.spectra.get(j - 1)
        }
    }
}

/// Frequency-domain corrections for orders `1..=j_max` on every DFT bin.
pub fn correction_spectra(
    signal: &Signal,
    table: &WindowTable,
    j_max: usize,
    role: SignalRole,
    opts: FourierOptions,
) -> Result<CorrectionSet> {
    if j_max > table.max_deriv {
        return Err(Error::MissingDerivatives { requested: j_max, available: table.max_deriv });
    }
    let mut spectra: Vec<Spectrum> = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let rc = if j <= MAX_DEFAULT_ORDER { recurrence_coeffs(j)? } else { recurrence_coeffs_extended(j)? };
        let mut current = fourier_coeffs_with(&apply_window(signal, table, j)?, opts);
        current.coeffs *= Complex64::new(rc.coeffs[0], 0.0);
        for m in 1..j {
            let lower = &spectra[j - m - 1];
            for (k, &bin) in lower.bins.iter().enumerate() {
                let factor = derivative_multiplier(lower.frequency(bin)).powu(m as u32) * rc.coeffs[m];
                for c in 0..lower.n_channels() {
                    current.coeffs[(c, k)] += factor * lower.coeffs[(c, k)];
                }
            }
        }
        spectra.push(current);
    }
    Ok(CorrectionSet { role, spectra })
}

const ORACLE_STENCIL: usize = 13;
const ORACLE_SPACINGS_PER_RECORD: usize = 1024;

/// Fornberg finite-difference weights at `z` for nodes `x`, derivative orders `0..=m`.
pub(crate) fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Time-domain reference for the order-`j` correction,
/// `Σ_{k=1}^{j} C(j,k) w^{(k)} x^{(j-k)}`, on the `target_n`-point grid.
///
/// `fine` must sample the same record at an integer multiple (at least 4×)
/// of the target rate; derivatives of `x` come from 13-point finite-difference
/// stencils on that record.
pub fn correction_time_oracle(fine: &Signal, spec: &WindowSpec, target_n: usize, j: usize) -> Result<Signal> {
    let fine_n = fine.n_samples();
    if target_n == 0 || !fine_n.is_multiple_of(target_n) || fine_n / target_n < 4 {
        return Err(Error::InvalidArgument(format!(
            "oracle needs an integer oversampling of at least 4x (fine N = {fine_n}, target N = {target_n})"
        )));
    }
    if (spec.length - fine.t_len).abs() > 1e-12 * fine.t_len {
        return Err(Error::GridMismatch("window length differs from record length".into()));
    }
    let ratio = fine_n / target_n;
    let h = fine.t_len / fine_n as f64;
    let stride = (fine_n / ORACLE_SPACINGS_PER_RECORD).max(1);
    let table = window_table(spec, target_n, j)?;
    let last_index = if fine.terminal.is_some() { fine_n } else { fine_n - 1 };
    let sample = |c: usize, idx: usize| -> Complex64 {
        if idx == fine_n {
            fine.terminal.as_ref().map(|t| t[c]).unwrap_or_default()
        } else {
            fine.values[(c, idx)]
        }
    };

    let channels = fine.n_channels();
    let mut out = nalgebra::DMatrix::zeros(channels, target_n);
    let half = ORACLE_STENCIL / 2;
    let span = (ORACLE_STENCIL - 1) * stride;
    for i in 0..target_n {
        let centre = i * ratio;
        let start = centre.saturating_sub(half * stride).min(last_index.saturating_sub(span));
        let nodes: Vec<usize> = (0..ORACLE_STENCIL).map(|s| start + s * stride).collect();
        let offsets: Vec<f64> = nodes.iter().map(|&n| (n as f64 - centre as f64) * h).collect();
        let weights = fornberg_weights(0.0, &offsets, j.saturating_sub(1));
        for c in 0..channels {
            let mut derivs = vec![Complex64::new(0.0, 0.0); j.max(1)];
            derivs[0] = sample(c, centre);
            for (d, slot) in derivs.iter_mut().enumerate().skip(1) {
                *slot = nodes.iter().zip(&weights[d]).map(|(&n, &w)| sample(c, n) * w).sum();
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 1..=j {
                acc += derivs[j - k] * (binomial(j, k) * table.samples[k][i]);
            }
            out[(c, i)] = acc;
        }
    }
    Signal::new(fine.t_len, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fourier_coeffs_full;
    use crate::windows::{window_table, WindowSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn low_orders_match_table() {
        assert_eq!(recurrence_coeffs(1).unwrap().coeffs, vec![1.0]);
        assert_eq!(recurrence_coeffs(2).unwrap().coeffs, vec![-1.0, 2.0]);
        assert_eq!(recurrence_coeffs(3).unwrap().coeffs, vec![1.0, 3.0, -3.0]);
    }

    #[test]
    fn order_four_passes_symbolic_check() {
        let rc = recurrence_coeffs(4).unwrap();
        assert_eq!(rc.coeffs, vec![-1.0, 4.0, -6.0, 4.0]);
        assert!(rc.exact().iter().all(|&(_, d)| d == 1));
    }

    #[test]
    fn extended_orders() {
        for n in 5..=MAX_EXTENDED_ORDER {
            let rc = recurrence_coeffs_extended(n).unwrap();
            assert_eq!(rc.order, n);
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            assert_eq!(rc.coeffs[0], sign);
        }
        assert!(recurrence_coeffs(5).is_err());
        assert!(recurrence_coeffs(0).is_err());
        assert!(recurrence_coeffs_extended(13).is_err());
    }

    #[test]
    fn wrong_coefficients_fail_validation() {
        let bad = vec![Q::from_integer(-1), Q::from_integer(3)];
        assert!(validate_against_definition(2, &bad).is_err());
    }

    #[test]
    fn fornberg_matches_textbook_stencil() {
        let x = [-1.0, 0.0, 1.0];
        let w = fornberg_weights(0.0, &x, 2);
        assert_relative_eq!(w[1][0], -0.5);
        assert_relative_eq!(w[1][2], 0.5);
        assert_relative_eq!(w[2][0], 1.0);
        assert_relative_eq!(w[2][1], -2.0);
    }

    #[test]
    fn zero_signal_zero_corrections() {
        let spec = WindowSpec::cinf(1.0, 1.0).unwrap();
        let table = window_table(&spec, 64, 3).unwrap();
        let zero = Signal::new(1.0, nalgebra::DMatrix::zeros(2, 64)).unwrap();
        let set = correction_spectra(&zero, &table, 3, SignalRole::State, FourierOptions::default()).unwrap();
        assert_eq!(set.max_order(), 3);
        assert!(set.spectra.iter().all(|s| s.coeffs.norm() == 0.0));
        assert!(set.order(0).is_none());
    }

    #[test]
    fn zero_order_request_is_empty() {
        let spec = WindowSpec::cinf(1.0, 1.0).unwrap();
        let table = window_table(&spec, 64, 2).unwrap();
        let s = Signal::new(1.0, nalgebra::DMatrix::zeros(1, 64)).unwrap();
        let set = correction_spectra(&s, &table, 0, SignalRole::Input, FourierOptions::default()).unwrap();
        assert_eq!(set.max_order(), 0);
    }

    #[test]
    fn missing_derivative_rows() {
        let spec = WindowSpec::cinf(1.0, 1.0).unwrap();
        let table = window_table(&spec, 64, 1).unwrap();
        let s = Signal::new(1.0, nalgebra::DMatrix::zeros(1, 64)).unwrap();
        let err = correction_spectra(&s, &table, 2, SignalRole::State, FourierOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingDerivatives { requested: 2, available: 1 }));
    }

    #[test]
    fn first_order_constant_signal_sin1() {
        // x ≡ 1, w = sin(πt): x̂^{1}(k) = ∫ π cos(πt) e^{-2πikt} dt = -4ik/(4k² - 1)
        let n = 4096;
        let spec = WindowSpec::sin(1, 1.0).unwrap();
        let table = window_table(&spec, n, 1).unwrap();
        let ones = Signal::from_fn(1.0, n, 1, |_, _| Complex64::new(1.0, 0.0)).unwrap();
        let opts = FourierOptions { endpoint_average: true };
        let set = correction_spectra(&ones, &table, 1, SignalRole::State, opts).unwrap();
        let s = set.order(1).unwrap();
        for k in [0i64, 1, 2, 5, -3] {
            let kf = k as f64;
            let expected = Complex64::new(0.0, -4.0 * kf / (4.0 * kf * kf - 1.0));
            let got = s.coeffs[(0, s.column_of(k).unwrap())];
            assert!((got - expected).norm() < 1e-6, "k = {k}: {got} vs {expected}");
        }
    }

    #[test]
    fn oracle_polynomial_exact_for_first_order() {
        let spec = WindowSpec::sin(2, 1.0).unwrap();
        let fine = Signal::from_fn(1.0, 256, 1, |_, t| Complex64::new(t * t, 0.0)).unwrap();
        let out = correction_time_oracle(&fine, &spec, 64, 1).unwrap();
        let table = window_table(&spec, 64, 1).unwrap();
        for i in 0..64 {
            let t = i as f64 / 64.0;
            assert_relative_eq!(out.values[(0, i)].re, table.samples[1][i] * t * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_polynomial_third_order() {
        // x = t²: x' = 2t, x'' = 2; x^{3} = 3 w' x'' + 3 w'' x' + w''' x
        let spec = WindowSpec::cinf(1.0, 1.0).unwrap();
        let fine = Signal::from_fn(1.0, 512, 1, |_, t| Complex64::new(t * t, 0.0)).unwrap();
        let out = correction_time_oracle(&fine, &spec, 128, 3).unwrap();
        let table = window_table(&spec, 128, 3).unwrap();
        for i in 0..128 {
            let t = i as f64 / 128.0;
            let expected = 3.0 * table.samples[1][i] * 2.0 + 3.0 * table.samples[2][i] * 2.0 * t + table.samples[3][i] * t * t;
            let tol = 1e-8 * (1.0 + expected.abs());
            assert!((out.values[(0, i)].re - expected).abs() < tol, "i = {i}");
        }
    }

    #[test]
    fn oracle_refuses_low_oversampling() {
        let spec = WindowSpec::cinf(1.0, 1.0).unwrap();
        let fine = Signal::from_fn(1.0, 192, 1, |_, t| Complex64::new(t, 0.0)).unwrap();
        assert!(correction_time_oracle(&fine, &spec, 64, 2).is_err());
    }

    #[test]
    fn second_order_tone_matches_oracle() {
        let n = 4096;
        let spec = WindowSpec::cinf(1.0, 1.0).unwrap();
        let f = |_: usize, t: f64| Complex64::from_polar(1.0, 2.0 * PI * 3.0 * t);
        let x = Signal::from_fn(1.0, n, 1, f).unwrap();
        let fine = Signal::from_fn(1.0, 16 * n, 1, f).unwrap();
        let table = window_table(&spec, n, 2).unwrap();
        let set = correction_spectra(&x, &table, 2, SignalRole::State, FourierOptions::default()).unwrap();
        let oracle = fourier_coeffs_full(&correction_time_oracle(&fine, &spec, n, 2).unwrap());
        let rel = (&set.spectra[1].coeffs - &oracle.coeffs).norm() / oracle.coeffs.norm();
        assert!(rel < 1e-8, "{rel}");
    }
}
