//! Frequency-domain least-squares identification of
//! `Σ_i A_i d^i x/dt^i = Σ_j B_j d^j u/dt^j` with `A_{n_a} = I`.
//!
//! With `L_i = D^i x̂_w - x̂^{i}` and `R_j = D^j û_w - û^{j}` the model reads
//! `L_{n_a} + Σ_{i<n_a} A_i L_i - Σ_j B_j R_j = 0` on every bin, i.e.
//! `θ M2 = -M1` with `θ = [A_0 .. A_{n_a-1} | B_0 .. B_{n_b}]`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::corrections::{correction_spectra, CorrectionSet, SignalRole};
use crate::error::{Error, Result};
use crate::spectral::{apply_window, derivative_multiplier, fourier_coeffs_with, FourierOptions, Signal, Spectrum};
use crate::windows::{window_table, WindowFamily, WindowSpec};

/// Relative singular-value cutoff of the least-squares solve.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub n_x: usize,
    pub n_u: usize,
    pub n_a: usize,
    pub n_b: usize,
}

impl ModelStructure {
    pub fn new(n_x: usize, n_u: usize, n_a: usize, n_b: usize) -> Result<Self> {
        let s = Self { n_x, n_u, n_a, n_b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_u == 0 {
            return Err(Error::InvalidArgument("n_x and n_u must be positive".into()));
        }
        if self.n_u > self.n_x {
            return Err(Error::InvalidArgument(format!("n_u = {} exceeds n_x = {}", self.n_u, self.n_x)));
        }
        if self.n_a == 0 {
            return Err(Error::InvalidArgument("n_a must be at least 1".into()));
        }
        Ok(())
    }

    /// Unknowns per output row of `θ`.
    pub fn regressors(&self) -> usize {
        self.n_a * self.n_x + (self.n_b + 1) * self.n_u
    }

    /// Total number of free model parameters.
    pub fn parameter_count(&self) -> usize {
        self.n_x * self.regressors()
    }
}

/// `A_0 .. A_{n_a}` (each `n_x × n_x`) and `B_0 .. B_{n_b}` (each `n_x × n_u`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsJson", try_from = "ParamsJson")]
pub struct ModelParams {
    pub structure: ModelStructure,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

impl ModelParams {
    pub fn new(structure: ModelStructure, a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        structure.validate()?;
        let (nx, nu) = (structure.n_x, structure.n_u);
        if a.len() != structure.n_a + 1 || b.len() != structure.n_b + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} A and {} B matrices, got {} and {}",
                structure.n_a + 1,
                structure.n_b + 1,
                a.len(),
                b.len()
            )));
        }
        if a.iter().any(|m| m.shape() != (nx, nx)) || b.iter().any(|m| m.shape() != (nx, nu)) {
            return Err(Error::InvalidArgument("coefficient matrix has the wrong shape".into()));
        }
        if a.iter().chain(b.iter()).any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite model coefficient".into()));
        }
        Ok(Self { structure, a, b })
    }

    /// Rebuilds parameters from a `θ` row block, inserting `A_{n_a} = I`.
    pub fn from_theta(structure: ModelStructure, theta: &DMatrix<f64>) -> Result<Self> {
        let (nx, nu) = (structure.n_x, structure.n_u);
        if theta.nrows() != nx || theta.ncols() < structure.regressors() {
            return Err(Error::InvalidArgument("θ has the wrong shape".into()));
        }
        let mut a: Vec<DMatrix<f64>> = (0..structure.n_a).map(|i| theta.columns(i * nx, nx).into_owned()).collect();
        a.push(DMatrix::identity(nx, nx));
        let off = structure.n_a * nx;
        let b = (0..=structure.n_b).map(|j| theta.columns(off + j * nu, nu).into_owned()).collect();
        Self::new(structure, a, b)
    }

    /// `[A_0 .. A_{n_a-1} | B_0 .. B_{n_b}]`.
    pub fn theta(&self) -> DMatrix<f64> {
        let s = self.structure;
        let mut out = DMatrix::zeros(s.n_x, s.regressors());
        for i in 0..s.n_a {
            out.columns_mut(i * s.n_x, s.n_x).copy_from(&self.a[i]);
        }
        let off = s.n_a * s.n_x;
        for (j, b) in self.b.iter().enumerate() {
            out.columns_mut(off + j * s.n_u, s.n_u).copy_from(b);
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl TryFrom<MatrixJson> for DMatrix<f64> {
    type Error = String;

    fn try_from(m: MatrixJson) -> std::result::Result<Self, String> {
        if m.data.len() != m.rows * m.cols {
            return Err(format!("matrix data has {} entries, expected {}x{}", m.data.len(), m.rows, m.cols));
        }
        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    structure: ModelStructure,
    a: Vec<MatrixJson>,
    b: Vec<MatrixJson>,
}

impl From<ModelParams> for ParamsJson {
    fn from(p: ModelParams) -> Self {
        Self { structure: p.structure, a: p.a.iter().map(Into::into).collect(), b: p.b.iter().map(Into::into).collect() }
    }
}

impl TryFrom<ParamsJson> for ModelParams {
    type Error = String;

    fn try_from(p: ParamsJson) -> std::result::Result<Self, String> {
        let a = p.a.into_iter().map(DMatrix::try_from).collect::<std::result::Result<Vec<_>, _>>()?;
        let b = p.b.into_iter().map(DMatrix::try_from).collect::<std::result::Result<Vec<_>, _>>()?;
        ModelParams::new(p.structure, a, b).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Corrected,
    Ps,
    Mixed,
    Naive,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Corrected => "corrected",
            Method::Ps => "ps",
            Method::Mixed => "mixed",
            Method::Naive => "naive",
        }
    }

    /// Whether the method works on rectangular-window spectra.
    pub fn rectangular(self) -> bool {
        matches!(self, Method::Ps | Method::Naive)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corrected" => Ok(Method::Corrected),
            "ps" => Ok(Method::Ps),
            "mixed" => Ok(Method::Mixed),
            "naive" => Ok(Method::Naive),
            other => Err(Error::Config(format!("unknown method '{other}' (corrected, ps, mixed, naive)"))),
        }
    }
}

/// `θ M2 = -M1` over the bins of `band`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    pub structure: ModelStructure,
    pub method: Method,
    pub t_len: f64,
    pub band: Vec<i64>,
    /// `L_{n_a}`, `n_x × |band|`.
    pub m1: DMatrix<Complex64>,
    /// Model rows followed by `poly_terms` transient rows.
    pub m2: DMatrix<Complex64>,
    pub poly_terms: usize,
}

impl RegressionSystem {
    pub fn frequencies(&self) -> Vec<f64> {
        self.band.iter().map(|&b| b as f64 / self.t_len).collect()
    }

    /// Appends `n_p` transient basis rows (polynomials of degree `0..n_p` in
    /// the band's scaled frequency, orthonormalised over the band).
    pub fn with_polynomial(mut self, n_p: usize) -> Result<Self> {
        if n_p == 0 {
            return Ok(self);
        }
        let m = self.band.len();
        if n_p > m {
            return Err(Error::RankDeficient { rank: m, needed: n_p + self.structure.regressors() });
        }
        let fmax = self.band.iter().map(|b| b.unsigned_abs()).max().unwrap_or(0).max(1) as f64;
        let basis = legendre_basis(&self.band.iter().map(|&b| b as f64 / fmax).collect::<Vec<_>>(), n_p);
        let q = basis.qr().q();
        let rows = self.m2.nrows();
        let mut m2 = self.m2.clone().resize_vertically(rows + n_p, Complex64::new(0.0, 0.0));
        for r in 0..n_p {
            for k in 0..m {
                m2[(rows + r, k)] = Complex64::new(q[(k, r)], 0.0);
            }
        }
        self.m2 = m2;
        self.poly_terms += n_p;
        self.method = match self.method {
            Method::Naive => Method::Ps,
            Method::Corrected => Method::Mixed,
            other => other,
        };
        Ok(self)
    }

    /// Model rows of `M2` without transient terms.
    pub fn model_rows(&self) -> DMatrix<Complex64> {
        self.m2.rows(0, self.structure.regressors()).into_owned()
    }
}

/// Legendre polynomials `P_0 .. P_{n-1}` evaluated at `s`, one column per degree.
fn legendre_basis(s: &[f64], n: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(s.len(), n);
    for (i, &x) in s.iter().enumerate() {
        let (mut p0, mut p1) = (1.0, x);
        for d in 0..n {
            v[(i, d)] = match d {
                0 => 1.0,
                1 => x,
                _ => {
                    let p2 = ((2 * d - 1) as f64 * x * p1 - (d - 1) as f64 * p0) / d as f64;
                    p0 = p1;
                    p1 = p2;
                    p2
                }
            };
        }
    }
    v
}

/// Frequency-band restriction in Hz. Bins with `f_min ≤ |f| ≤ f_max` are kept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
}

impl Band {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn below(f_max: f64) -> Self {
        Self { f_min: None, f_max: Some(f_max) }
    }

    pub fn contains(&self, f: f64) -> bool {
        let a = f.abs();
        self.f_min.is_none_or(|lo| a >= lo) && self.f_max.is_none_or(|hi| a <= hi + 1e-9 * hi.abs())
    }

    /// Signed bins of `spectrum` inside the band, in the spectrum's order.
    pub fn select(&self, spectrum: &Spectrum) -> Vec<i64> {
        spectrum.bins.iter().copied().filter(|&b| self.contains(spectrum.frequency(b))).collect()
    }
}

/// Windowed spectrum of `signal` and its correction spectra up to `orders`.
/// A rectangular window yields no corrections.
pub fn windowed_spectra(
    signal: &Signal,
    window: &WindowSpec,
    orders: usize,
    role: SignalRole,
    opts: FourierOptions,
) -> Result<(Spectrum, Option<CorrectionSet>)> {
    let window = window.with_length(signal.t_len)?;
    if window.family == WindowFamily::Rectangular {
        return Ok((fourier_coeffs_with(signal, opts), None));
    }
    let table = window_table(&window, signal.n_samples(), orders)?;
    let spectrum = fourier_coeffs_with(&apply_window(signal, &table, 0)?, opts);
    let corr = correction_spectra(signal, &table, orders, role, opts)?;
    Ok((spectrum, Some(corr)))
}

fn block(spec: &Spectrum, corr: Option<&CorrectionSet>, order: usize, band: &[i64]) -> Result<DMatrix<Complex64>> {
    let mut out = DMatrix::zeros(spec.n_channels(), band.len());
    let cspec = match (order, corr) {
        (0, _) | (_, None) => None,
        (j, Some(c)) => Some(c.order(j).ok_or(Error::MissingDerivatives { requested: j, available: c.max_order() })?),
    };
    for (k, &bin) in band.iter().enumerate() {
        let col = spec.column_of(bin).ok_or_else(|| Error::GridMismatch(format!("bin {bin} missing from spectrum")))?;
        let d = derivative_multiplier(spec.frequency(bin)).powu(order as u32);
        for c in 0..spec.n_channels() {
            let mut v = d * spec.coeffs[(c, col)];
            if let Some(cs) = cspec {
                let ccol = cs.column_of(bin).ok_or_else(|| Error::GridMismatch(format!("bin {bin} missing from corrections")))?;
                v -= cs.coeffs[(c, ccol)];
            }
            out[(c, k)] = v;
        }
    }
    Ok(out)
}

/// Builds `M1 = L_{n_a}` and `M2 = [L_0; ..; L_{n_a-1}; -R_0; ..; -R_{n_b}]`.
/// Passing `None` for the corrections treats them as zero (rectangular window).
pub fn assemble_regression(
    x_spec: &Spectrum,
    u_spec: &Spectrum,
    x_corr: Option<&CorrectionSet>,
    u_corr: Option<&CorrectionSet>,
    structure: ModelStructure,
    band: &[i64],
) -> Result<RegressionSystem> {
    structure.validate()?;
    if band.is_empty() {
        return Err(Error::InvalidArgument("empty frequency band".into()));
    }
    if x_spec.n_channels() != structure.n_x || u_spec.n_channels() != structure.n_u {
        return Err(Error::InvalidArgument(format!(
            "spectra have {}/{} channels, structure expects {}/{}",
            x_spec.n_channels(),
            u_spec.n_channels(),
            structure.n_x,
            structure.n_u
        )));
    }
    if (x_spec.t_len - u_spec.t_len).abs() > 1e-12 * x_spec.t_len {
        return Err(Error::GridMismatch("state and input records differ in length".into()));
    }
    let (nx, nu) = (structure.n_x, structure.n_u);
    let m1 = block(x_spec, x_corr, structure.n_a, band)?;
    let mut m2 = DMatrix::zeros(structure.regressors(), band.len());
    for i in 0..structure.n_a {
        m2.rows_mut(i * nx, nx).copy_from(&block(x_spec, x_corr, i, band)?);
    }
    let off = structure.n_a * nx;
    for j in 0..=structure.n_b {
        m2.rows_mut(off + j * nu, nu).copy_from(&(-block(u_spec, u_corr, j, band)?));
    }
    let method = if x_corr.is_some() { Method::Corrected } else { Method::Naive };
    Ok(RegressionSystem { structure, method, t_len: x_spec.t_len, band: band.to_vec(), m1, m2, poly_terms: 0 })
}

/// Result of one estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub window: Option<String>,
    pub n_p: usize,
    pub theta_hat: ModelParams,
    /// Norm of the discarded imaginary part of `θ̃`.
    pub imag_norm: f64,
    pub rank: usize,
    /// Smallest over largest singular value of the scaled regressor.
    pub inverse_condition: f64,
    /// `‖Ê‖`, over the estimation band.
    pub residual_l2: f64,
    pub frequencies: Vec<f64>,
    /// `‖ê(f)‖` on `frequencies`.
    pub residual_norms: Vec<f64>,
    pub band_bins: usize,
    pub wall_time: f64,
}

struct LsSolution {
    theta: DMatrix<Complex64>,
    rank: usize,
    inverse_condition: f64,
}

fn least_squares(reg: &RegressionSystem) -> Result<LsSolution> {
    let p = reg.m2.nrows();
    let m = reg.m2.ncols();
    if m < p {
        return Err(Error::RankDeficient { rank: m, needed: p });
    }
    // Unit-norm regressor rows; the scaling is undone on θ afterwards.
    let scales: Vec<f64> = (0..p)
        .map(|r| {
            let n = reg.m2.row(r).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let g = DMatrix::from_fn(m, p, |k, r| reg.m2[(r, k)] / scales[r]);
    let rhs = -reg.m1.transpose();
    let svd = g.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = RANK_TOLERANCE * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if smax == 0.0 || rank < p {
        return Err(Error::RankDeficient { rank, needed: p });
    }
    let inverse_condition = svd.singular_values.min() / smax;
    let sol = svd.solve(&rhs, tol).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let theta = DMatrix::from_fn(reg.structure.n_x, p, |i, r| sol[(r, i)] / scales[r]);
    Ok(LsSolution { theta, rank, inverse_condition })
}

/// `θ̃ = -M1 M2⁺`, projected onto real parameters.
pub fn solve_ls(reg: &RegressionSystem) -> Result<EstimateReport> {
    let start = Instant::now();
    let sol = least_squares(reg)?;
    let nreg = reg.structure.regressors();
    let model = sol.theta.columns(0, nreg);
    let real = model.map(|c| c.re);
    let imag_norm = model.map(|c| c.im).norm();
    let theta_hat = ModelParams::from_theta(reg.structure, &real)?;
    let residual = residual_spectrum(&theta_hat, reg)?;
    let (residual_norms, residual_l2) = crate::metrics::error_norms(&residual);
    Ok(EstimateReport {
        method: reg.method,
        window: None,
        n_p: reg.poly_terms,
        theta_hat,
        imag_norm,
        rank: sol.rank,
        inverse_condition: sol.inverse_condition,
        residual_l2,
        frequencies: reg.frequencies(),
        residual_norms,
        band_bins: reg.band.len(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// `ê(f) = L_{n_a} + Σ A_i L_i - Σ B_j R_j` on the regression band.
pub fn residual_spectrum(theta: &ModelParams, reg: &RegressionSystem) -> Result<Spectrum> {
    if theta.structure != reg.structure {
        return Err(Error::InvalidArgument("parameter structure differs from the regression".into()));
    }
    let th = theta.theta().map(|v| Complex64::new(v, 0.0));
    let e = &reg.m1 + th * reg.model_rows();
    Ok(Spectrum { t_len: reg.t_len, resolution: 1, bins: reg.band.clone(), coeffs: e })
}

/// P&S baseline on rectangular-window spectra; `n_p = 0` is the naive method.
pub fn ps_baseline(
    x_spec_rect: &Spectrum,
    u_spec_rect: &Spectrum,
    structure: ModelStructure,
    n_p: usize,
    band: &[i64],
) -> Result<EstimateReport> {
    let reg = assemble_regression(x_spec_rect, u_spec_rect, None, None, structure, band)?.with_polynomial(n_p)?;
    solve_ls(&reg)
}

/// Corrected regression with additional transient polynomial rows.
pub fn mixed_identify(
    x_spec: &Spectrum,
    u_spec: &Spectrum,
    x_corr: &CorrectionSet,
    u_corr: &CorrectionSet,
    structure: ModelStructure,
    n_p: usize,
    band: &[i64],
) -> Result<EstimateReport> {
    let reg = assemble_regression(x_spec, u_spec, Some(x_corr), Some(u_corr), structure, band)?.with_polynomial(n_p)?;
    solve_ls(&reg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    pub method: Method,
    /// Ignored by the rectangular-window methods; the length is taken from the record.
    pub window: WindowSpec,
    pub n_p: usize,
    pub band: Band,
    pub endpoint_average: bool,
}

impl IdentifyConfig {
    pub fn corrected(window: WindowSpec) -> Self {
        Self { method: Method::Corrected, window, n_p: 0, band: Band::all(), endpoint_average: false }
    }

    pub fn ps(n_p: usize) -> Self {
        Self {
            method: if n_p == 0 { Method::Naive } else { Method::Ps },
            window: WindowSpec::rectangular(1.0).expect("unit rectangular window"),
            n_p,
            band: Band::all(),
            endpoint_average: false,
        }
    }

    pub fn effective_window(&self, t_len: f64) -> Result<WindowSpec> {
        if self.method.rectangular() {
            WindowSpec::rectangular(t_len)
        } else {
            self.window.with_length(t_len)
        }
    }
}

/// Builds the regression for `cfg` from time records.
pub fn build_regression(x: &Signal, u: &Signal, structure: ModelStructure, cfg: &IdentifyConfig) -> Result<RegressionSystem> {
    if x.n_samples() != u.n_samples() || (x.t_len - u.t_len).abs() > 1e-12 * x.t_len {
        return Err(Error::GridMismatch("state and input records are on different grids".into()));
    }
    let window = cfg.effective_window(x.t_len)?;
    if !cfg.method.rectangular() && window.family == WindowFamily::Rectangular {
        return Err(Error::Config(format!("method {} needs a smooth window", cfg.method)));
    }
    let opts = FourierOptions { endpoint_average: cfg.endpoint_average };
    let (xs, xc) = windowed_spectra(x, &window, structure.n_a, SignalRole::State, opts)?;
    let (us, uc) = windowed_spectra(u, &window, structure.n_b, SignalRole::Input, opts)?;
    let band = cfg.band.select(&xs);
    let reg = assemble_regression(&xs, &us, xc.as_ref(), uc.as_ref(), structure, &band)?;
    match cfg.method {
        Method::Ps | Method::Mixed => reg.with_polynomial(cfg.n_p),
        Method::Naive | Method::Corrected => Ok(reg),
    }
}

/// Full pipeline from time records to a report; `wall_time` covers spectra,
/// corrections and the solve.
pub fn identify(x: &Signal, u: &Signal, structure: ModelStructure, cfg: &IdentifyConfig) -> Result<EstimateReport> {
    let start = Instant::now();
    let reg = build_regression(x, u, structure, cfg)?;
    let mut report = solve_ls(&reg)?;
    report.method = cfg.method;
    report.window = Some(cfg.effective_window(x.t_len)?.to_string());
    report.wall_time = start.elapsed().as_secs_f64();
    log::debug!(
        "{} estimate: rank {}, 1/cond {:.3e}, |imag| {:.3e}, {:.3e}s",
        report.method,
        report.rank,
        report.inverse_condition,
        report.imag_norm,
        report.wall_time
    );
    Ok(report)
}
