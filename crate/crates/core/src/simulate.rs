//! Seeded synthetic experiments: random systems, multisine forcing,
//! fixed-step RK4 and measurement noise.
//!
//! Every random quantity comes from a ChaCha20 stream
//! (`rand_chacha::ChaCha20Rng::seed_from_u64`). Uniforms are
//! `rng.random::<f64>()` (53-bit, `[0, 1)`), and normals use the polar-free
//! Box–Muller transform `r = sqrt(-2 ln(1 - u1))`, returning `r cos(2π u2)`
//! and then `r sin(2π u2)` from the same pair. Component streams are keyed by
//! [`sub_seed`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::{ModelParams, ModelStructure};
use crate::spectral::Signal;

/// Stream keys for [`sub_seed`].
pub mod stream {
    pub const SYSTEM: u64 = 1;
    pub const FORCING: u64 = 2;
    pub const INITIAL_STATE: u64 = 3;
    pub const STATE_NOISE: u64 = 4;
    pub const INPUT_NOISE: u64 = 5;
}

/// Eigenvalue real parts of the free response outside this range are redrawn.
pub const STABILITY_WINDOW: (f64, f64) = (-25.0, 5.0);
const MAX_REDRAWS: usize = 10_000;

/// Integration step used by the paper preset.
pub const PAPER_DT: f64 = 3.5e-5;

/// Derives an independent seed for component `key` of a run seeded with `root`
/// (splitmix64 finaliser over `root ^ key·φ`).
pub fn sub_seed(root: u64, key: u64) -> u64 {
    let mut z = root ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal variates from a seeded ChaCha20 stream.
pub struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1: f64 = self.rng.random();
        let u2: f64 = self.rng.random();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn complex(&mut self) -> Complex64 {
        let re = self.next();
        Complex64::new(re, self.next())
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        // row-major fill so the stream order reads naturally
        let data: Vec<f64> = (0..rows * cols).map(|_| self.next()).collect();
        DMatrix::from_row_slice(rows, cols, &data)
    }
}

/// First-order companion matrix `F` of `Σ A_i x^{(i)} = ...` with `A_{n_a} = I`,
/// so that `z' = F z + ...` for `z = [x, x', .., x^{(n_a-1)}]`.
pub fn companion(params: &ModelParams) -> DMatrix<f64> {
    let s = params.structure;
    let (nx, na) = (s.n_x, s.n_a);
    let mut f = DMatrix::zeros(nx * na, nx * na);
    for i in 0..na.saturating_sub(1) {
        f.view_mut((i * nx, (i + 1) * nx), (nx, nx)).fill_with_identity();
    }
    for i in 0..na {
        f.view_mut(((na - 1) * nx, i * nx), (nx, nx)).copy_from(&(-&params.a[i]));
    }
    f
}

/// Random system with standard-normal free coefficients and `A_{n_a} = I`,
/// redrawn until every eigenvalue of the free response lies in
/// [`STABILITY_WINDOW`].
pub fn random_system(structure: ModelStructure, seed: u64) -> Result<ModelParams> {
    structure.validate()?;
    let mut normals = NormalStream::new(seed);
    for draw in 0..MAX_REDRAWS {
        let mut a: Vec<DMatrix<f64>> = (0..structure.n_a).map(|_| normals.matrix(structure.n_x, structure.n_x)).collect();
        a.push(DMatrix::identity(structure.n_x, structure.n_x));
        let b = (0..=structure.n_b).map(|_| normals.matrix(structure.n_x, structure.n_u)).collect();
        let params = ModelParams::new(structure, a, b)?;
        let eig = companion(&params).complex_eigenvalues();
        if eig.iter().all(|l| l.re >= STABILITY_WINDOW.0 && l.re <= STABILITY_WINDOW.1) {
            if draw > 0 {
                log::info!("random system accepted after {draw} redraws (seed {seed})");
            }
            return Ok(params);
        }
    }
    Err(Error::InvalidArgument(format!("no admissible system after {MAX_REDRAWS} draws")))
}

/// `u(t) = Σ_j a_j e^{2πi f_j t}` with one complex amplitude vector per tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub frequencies: Vec<f64>,
    /// `amplitudes[j][c]` is the amplitude of tone `j` on input channel `c`.
    pub amplitudes: Vec<Vec<Complex64>>,
    pub seed: u64,
}

impl ForcingSpec {
    pub fn new(frequencies: Vec<f64>, amplitudes: Vec<Vec<Complex64>>, seed: u64) -> Result<Self> {
        if frequencies.is_empty() || frequencies.len() != amplitudes.len() {
            return Err(Error::InvalidArgument("forcing needs one amplitude vector per tone and at least one tone".into()));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("tone frequencies must be strictly increasing".into()));
        }
        let n_u = amplitudes[0].len();
        if n_u == 0 || amplitudes.iter().any(|a| a.len() != n_u) {
            return Err(Error::InvalidArgument("every tone needs the same number of input channels".into()));
        }
        Ok(Self { frequencies, amplitudes, seed })
    }

    pub fn n_u(&self) -> usize {
        self.amplitudes[0].len()
    }

    pub fn n_f(&self) -> usize {
        self.frequencies.len()
    }

    pub fn f_max(&self) -> f64 {
        *self.frequencies.last().unwrap_or(&0.0)
    }

    /// `d^k u/dt^k` at `t`.
    pub fn derivative(&self, k: u32, t: f64) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.n_u());
        for (f, amp) in self.frequencies.iter().zip(&self.amplitudes) {
            let w = Complex64::new(0.0, 2.0 * PI * f);
            let e = w.powu(k) * (w * t).exp();
            for (o, a) in out.iter_mut().zip(amp) {
                *o += a * e;
            }
        }
        out
    }

    pub fn value(&self, t: f64) -> DVector<Complex64> {
        self.derivative(0, t)
    }

    /// `u` sampled on `t_j = j T / N`, with the terminal sample `u(T)`.
    pub fn sample(&self, t_len: f64, n: usize) -> Result<Signal> {
        let mut values = DMatrix::zeros(self.n_u(), n);
        for j in 0..n {
            values.set_column(j, &self.value(j as f64 * t_len / n as f64));
        }
        Ok(Signal::new(t_len, values)?.with_terminal(self.value(t_len)))
    }
}

/// `n_f` tones uniformly spaced on `[f_min, f_max]` (inclusive) with complex
/// standard-normal amplitudes per input channel.
pub fn multisine(n_u: usize, n_f: usize, f_min: f64, f_max: f64, seed: u64) -> Result<ForcingSpec> {
    if n_f == 0 || n_u == 0 {
        return Err(Error::InvalidArgument("multisine needs n_f >= 1 and n_u >= 1".into()));
    }
    if !(f_min.is_finite() && f_max.is_finite()) || f_max < f_min || (n_f > 1 && f_max == f_min) {
        return Err(Error::InvalidArgument(format!("bad multisine range [{f_min}, {f_max}] for {n_f} tones")));
    }
    let frequencies =
        if n_f == 1 { vec![f_min] } else { (0..n_f).map(|j| f_min + (f_max - f_min) * j as f64 / (n_f - 1) as f64).collect() };
    let mut normals = NormalStream::new(seed);
    let amplitudes = (0..n_f).map(|_| (0..n_u).map(|_| normals.complex()).collect()).collect();
    ForcingSpec::new(frequencies, amplitudes, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_len: f64,
    /// Output samples on `[0, T)`; `x(T)` is returned as the terminal sample.
    pub n_samples: usize,
    /// Integration step; must divide `T / N`.
    pub dt: f64,
    /// Initial companion state `[x, x', ..]`, length `n_x n_a`.
    pub x0: Vec<Complex64>,
}

/// Largest step not above `dt_max` that divides `T / N`.
pub fn commensurate_step(t_len: f64, n: usize, dt_max: f64) -> Result<f64> {
    if !(dt_max > 0.0) || n == 0 || !(t_len > 0.0) {
        return Err(Error::InvalidArgument("step, record length and sample count must be positive".into()));
    }
    let spacing = t_len / n as f64;
    let sub = (spacing / dt_max * (1.0 - 1e-12)).ceil().max(1.0);
    Ok(spacing / sub)
}

/// Classical fixed-step RK4 of the companion system driven by
/// `Σ_k B_k d^k u/dt^k`, evaluated analytically per tone.
pub fn integrate_rk4(params: &ModelParams, forcing: &ForcingSpec, config: &SimConfig) -> Result<Signal> {
    let s = params.structure;
    if forcing.n_u() != s.n_u {
        return Err(Error::InvalidArgument(format!("forcing has {} channels, system expects {}", forcing.n_u(), s.n_u)));
    }
    let dim = s.n_x * s.n_a;
    if config.x0.len() != dim {
        return Err(Error::InvalidArgument(format!("initial state has length {}, expected {dim}", config.x0.len())));
    }
    if config.n_samples == 0 || !(config.t_len > 0.0) {
        return Err(Error::InvalidArgument("record needs positive length and sample count".into()));
    }
    let spacing = config.t_len / config.n_samples as f64;
    let ratio = spacing / config.dt;
    let sub = ratio.round();
    if !(config.dt > 0.0) || sub < 1.0 || (ratio - sub).abs() > 1e-9 * ratio {
        return Err(Error::NotCommensurate { dt: config.dt, spacing });
    }
    let sub = sub as usize;
    let dt = spacing / sub as f64;

    // Per-tone forcing vectors b_j = Σ_k B_k (2πi f_j)^k a_j on the last companion block.
    let bc: Vec<DMatrix<Complex64>> = params.b.iter().map(|m| m.map(|v| Complex64::new(v, 0.0))).collect();
    let tones: Vec<(Complex64, DVector<Complex64>)> = forcing
        .frequencies
        .iter()
        .zip(&forcing.amplitudes)
        .map(|(f, amp)| {
            let w = Complex64::new(0.0, 2.0 * PI * f);
            let a = DVector::from_column_slice(amp);
            let mut b = DVector::zeros(s.n_x);
            for (k, bk) in bc.iter().enumerate() {
                b += bk * &a * w.powu(k as u32);
            }
            (w, b)
        })
        .collect();
    let drive = |t: f64| -> DVector<Complex64> {
        let mut g = DVector::zeros(s.n_x);
        for (w, b) in &tones {
            g.axpy((w * t).exp(), b, Complex64::new(1.0, 0.0));
        }
        g
    };
    let f = companion(params).map(|v| Complex64::new(v, 0.0));
    let off = (s.n_a - 1) * s.n_x;
    let rhs = |z: &DVector<Complex64>, g: &DVector<Complex64>| -> DVector<Complex64> {
        let mut dz = &f * z;
        let mut tail = dz.rows_mut(off, s.n_x);
        tail += g;
        dz
    };

    let mut out = DMatrix::zeros(s.n_x, config.n_samples);
    let mut z = DVector::from_column_slice(&config.x0);
    out.set_column(0, &z.rows(0, s.n_x));
    let mut g0 = drive(0.0);
    let total = config.n_samples * sub;
    for step in 0..total {
        let t = step as f64 * dt;
        let gh = drive(t + 0.5 * dt);
        let g1 = drive(t + dt);
        let k1 = rhs(&z, &g0);
        let k2 = rhs(&(&z + &k1 * Complex64::new(0.5 * dt, 0.0)), &gh);
        let k3 = rhs(&(&z + &k2 * Complex64::new(0.5 * dt, 0.0)), &gh);
        let k4 = rhs(&(&z + &k3 * Complex64::new(dt, 0.0)), &g1);
        let two = Complex64::new(2.0, 0.0);
        z += (k1 + k2 * two + k3 * two + k4) * Complex64::new(dt / 6.0, 0.0);
        g0 = g1;
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::BlowUp { time: t + dt });
        }
        let done = step + 1;
        if done % sub == 0 && done < total {
            out.set_column(done / sub, &z.rows(0, s.n_x));
        }
    }
    let terminal = z.rows(0, s.n_x).into_owned();
    Ok(Signal::new(config.t_len, out)?.with_terminal(terminal))
}

/// Adds i.i.d. `N(0, σ²)` noise to the real and imaginary part of every sample,
/// the terminal sample included.
pub fn add_noise(signal: &Signal, sigma: f64, seed: u64) -> Result<Signal> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(signal.clone());
    }
    let mut normals = NormalStream::new(seed);
    let mut out = signal.clone();
    // time-major so a record's noise does not depend on how channels are stored
    for j in 0..out.n_samples() {
        for c in 0..out.n_channels() {
            out.values[(c, j)] += normals.complex() * sigma;
        }
    }
    if let Some(term) = out.terminal.as_mut() {
        for v in term.iter_mut() {
            *v += normals.complex() * sigma;
        }
    }
    Ok(out)
}

/// Keeps every `N / target_n`-th sample.
pub fn resample(signal: &Signal, target_n: usize) -> Result<Signal> {
    let n = signal.n_samples();
    if target_n == 0 || !n.is_multiple_of(target_n) {
        return Err(Error::InvalidArgument(format!("cannot decimate {n} samples to {target_n}")));
    }
    let stride = n / target_n;
    let values = DMatrix::from_fn(signal.n_channels(), target_n, |c, j| signal.values[(c, j * stride)]);
    let mut out = Signal::new(signal.t_len, values)?;
    out.terminal = signal.terminal.clone();
    Ok(out)
}

/// Ground truth plus forcing for one synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub seed: u64,
    pub truth: ModelParams,
    pub forcing: ForcingSpec,
    pub x0: Vec<Complex64>,
    pub t_len: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub structure: ModelStructure,
    pub n_f: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub t_len: f64,
    pub dt_max: f64,
}

impl ExperimentSpec {
    /// Five states and inputs, first order, 85 tones on `[1, 20√2]` Hz, `T = 1`.
    pub fn paper() -> Self {
        Self {
            structure: ModelStructure { n_x: 5, n_u: 5, n_a: 1, n_b: 0 },
            n_f: 85,
            f_min: 1.0,
            f_max: 20.0 * std::f64::consts::SQRT_2,
            t_len: 1.0,
            dt_max: PAPER_DT,
        }
    }
}

impl Experiment {
    pub fn new(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let truth = random_system(spec.structure, sub_seed(seed, stream::SYSTEM))?;
        let forcing = multisine(spec.structure.n_u, spec.n_f, spec.f_min, spec.f_max, sub_seed(seed, stream::FORCING))?;
        let mut normals = NormalStream::new(sub_seed(seed, stream::INITIAL_STATE));
        let x0 = (0..spec.structure.n_x * spec.structure.n_a).map(|_| normals.complex()).collect();
        Ok(Self { seed, truth, forcing, x0, t_len: spec.t_len, dt_max: spec.dt_max })
    }

    pub fn sim_config(&self, n: usize) -> Result<SimConfig> {
        Ok(SimConfig { t_len: self.t_len, n_samples: n, dt: commensurate_step(self.t_len, n, self.dt_max)?, x0: self.x0.clone() })
    }

    /// Noiseless `(x, u)` records with `N = n` samples.
    pub fn record(&self, n: usize) -> Result<(Signal, Signal)> {
        let x = integrate_rk4(&self.truth, &self.forcing, &self.sim_config(n)?)?;
        let u = self.forcing.sample(self.t_len, n)?;
        Ok((x, u))
    }

    /// Noisy copy of a record; trial `i` of a run uses root seed `seed + i`.
    pub fn corrupt(x: &Signal, u: &Signal, sigma: f64, trial_seed: u64) -> Result<(Signal, Signal)> {
        Ok((
            add_noise(x, sigma, sub_seed(trial_seed, stream::STATE_NOISE))?,
            add_noise(u, sigma, sub_seed(trial_seed, stream::INPUT_NOISE))?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fourier_coeffs_full;
    use approx::assert_relative_eq;

    fn scalar(a: f64) -> ModelParams {
        let s = ModelStructure::new(1, 1, 1, 0).unwrap();
        ModelParams::new(s, vec![DMatrix::from_element(1, 1, a), DMatrix::identity(1, 1)], vec![DMatrix::from_element(1, 1, 1.0)]).unwrap()
    }

    fn silent() -> ForcingSpec {
        ForcingSpec::new(vec![1.0], vec![vec![Complex64::default()]], 0).unwrap()
    }

    #[test]
    fn exponential_decay() {
        let cfg = SimConfig { t_len: 1.0, n_samples: 10, dt: 1e-4, x0: vec![Complex64::new(1.0, 0.0)] };
        let x = integrate_rk4(&scalar(1.0), &silent(), &cfg).unwrap();
        assert_relative_eq!(x.terminal.unwrap()[0].re, (-1.0f64).exp(), epsilon = 1e-10);
        assert_relative_eq!(x.values[(0, 5)].re, (-0.5f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn steady_state_transfer_function() {
        let a = 3.0;
        let f0 = 2.0;
        let forcing = ForcingSpec::new(vec![f0], vec![vec![Complex64::new(1.0, 0.0)]], 0).unwrap();
        let cfg = SimConfig { t_len: 10.0, n_samples: 100, dt: 1e-3, x0: vec![Complex64::default()] };
        let x = integrate_rk4(&scalar(a), &forcing, &cfg).unwrap();
        let h = 1.0 / Complex64::new(a, 2.0 * PI * f0);
        let expected = h * Complex64::new(0.0, 2.0 * PI * f0 * 10.0).exp();
        assert!((x.terminal.unwrap()[0] - expected).norm() < 1e-9);
    }

    #[test]
    fn incommensurate_step_rejected() {
        let cfg = SimConfig { t_len: 1.0, n_samples: 10, dt: 0.03, x0: vec![Complex64::new(1.0, 0.0)] };
        assert!(matches!(integrate_rk4(&scalar(1.0), &silent(), &cfg), Err(Error::NotCommensurate { .. })));
        assert_relative_eq!(commensurate_step(1.0, 80, PAPER_DT).unwrap(), 1.0 / (80.0 * 358.0));
        assert_relative_eq!(commensurate_step(1.0, 4, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn blow_up_reported() {
        let cfg = SimConfig { t_len: 1.0, n_samples: 1, dt: 0.5, x0: vec![Complex64::new(1.0, 0.0)] };
        assert!(matches!(integrate_rk4(&scalar(-1e300), &silent(), &cfg), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn second_order_companion_matches_first_order_split() {
        // x'' + 3x' + 2x = 0, x(0) = 1, x'(0) = 0  =>  x = 2e^{-t} - e^{-2t}
        let s = ModelStructure::new(1, 1, 2, 0).unwrap();
        let p = ModelParams::new(
            s,
            vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 3.0), DMatrix::identity(1, 1)],
            vec![DMatrix::from_element(1, 1, 0.0)],
        )
        .unwrap();
        let cfg = SimConfig { t_len: 1.0, n_samples: 4, dt: 1e-3, x0: vec![Complex64::new(1.0, 0.0), Complex64::default()] };
        let x = integrate_rk4(&p, &silent(), &cfg).unwrap();
        let exact = 2.0 * (-1.0f64).exp() - (-2.0f64).exp();
        assert_relative_eq!(x.terminal.unwrap()[0].re, exact, epsilon = 1e-11);
    }

    #[test]
    fn input_derivative_terms() {
        // x' + x = u' with u = e^{2πift}: steady state (2πif)/(1 + 2πif) u
        let s = ModelStructure::new(1, 1, 1, 1).unwrap();
        let p = ModelParams::new(
            s,
            vec![DMatrix::from_element(1, 1, 1.0), DMatrix::identity(1, 1)],
            vec![DMatrix::from_element(1, 1, 0.0), DMatrix::from_element(1, 1, 1.0)],
        )
        .unwrap();
        let forcing = ForcingSpec::new(vec![0.5], vec![vec![Complex64::new(1.0, 0.0)]], 0).unwrap();
        let w = Complex64::new(0.0, PI);
        let x0 = w / (1.0 + w);
        let cfg = SimConfig { t_len: 2.0, n_samples: 8, dt: 1e-3, x0: vec![x0] };
        let x = integrate_rk4(&p, &forcing, &cfg).unwrap();
        assert!((x.terminal.unwrap()[0] - x0 * (w * 2.0).exp()).norm() < 1e-10);
    }

    #[test]
    fn random_system_deterministic_and_admissible() {
        let s = ModelStructure::new(5, 5, 1, 0).unwrap();
        let a = random_system(s, 42).unwrap();
        assert_eq!(a, random_system(s, 42).unwrap());
        assert_ne!(a, random_system(s, 43).unwrap());
        assert_eq!(a.a[1], DMatrix::identity(5, 5));
        for l in companion(&a).complex_eigenvalues().iter() {
            assert!(l.re >= STABILITY_WINDOW.0 && l.re <= STABILITY_WINDOW.1);
        }
    }

    #[test]
    fn normal_stream_statistics() {
        let mut n = NormalStream::new(9);
        let v: Vec<f64> = (0..10_000).map(|_| n.next()).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn multisine_grid() {
        let f = multisine(5, 85, 1.0, 20.0 * 2f64.sqrt(), 1).unwrap();
        assert_eq!(f.frequencies[0], 1.0);
        assert_relative_eq!(f.frequencies[84], 20.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(f.frequencies[1] - f.frequencies[0], (20.0 * 2f64.sqrt() - 1.0) / 84.0, epsilon = 1e-12);
        let single = multisine(1, 1, 5.0, 5.0, 1).unwrap();
        assert_eq!(single.frequencies, vec![5.0]);
        assert!(multisine(1, 3, 5.0, 5.0, 1).is_err());
    }

    #[test]
    fn forcing_matches_direct_synthesis() {
        let f = multisine(2, 4, 1.0, 4.0, 3).unwrap();
        let t = 0.377;
        let mut direct = Complex64::default();
        for j in 0..4 {
            direct += f.amplitudes[j][1] * Complex64::new(0.0, 2.0 * PI * f.frequencies[j] * t).exp();
        }
        assert!((f.value(t)[1] - direct).norm() < 1e-13);
    }

    #[test]
    fn noise_properties() {
        let s = Signal::from_fn(1.0, 1000, 2, |_, _| Complex64::default()).unwrap();
        assert_eq!(add_noise(&s, 0.0, 1).unwrap(), s);
        let a = add_noise(&s, 0.5, 1).unwrap();
        let b = add_noise(&s, 0.5, 2).unwrap();
        assert_ne!(a, b);
        let var = a.values.iter().map(|v| v.re * v.re).sum::<f64>() / 2000.0;
        assert!((var - 0.25).abs() < 0.03, "{var}");
        assert!(add_noise(&s, -1.0, 1).is_err());
    }

    #[test]
    fn decimation() {
        let tone = |n| Signal::from_fn(1.0, n, 1, |_, t| Complex64::new(0.0, 2.0 * PI * 3.0 * t).exp()).unwrap();
        let fine = tone(64);
        assert_eq!(resample(&fine, 64).unwrap(), fine);
        let coarse = resample(&fine, 32).unwrap();
        assert_eq!(coarse.values, tone(32).values);
        let c = fourier_coeffs_full(&coarse);
        assert_relative_eq!(c.coeffs[(0, 3)].re, 1.0, epsilon = 1e-12);
        assert!(resample(&fine, 24).is_err());
    }

    #[test]
    fn experiment_record_shapes() {
        let mut spec = ExperimentSpec::paper();
        spec.dt_max = 1e-3;
        let e = Experiment::new(&spec, 7).unwrap();
        assert_eq!(e.truth.structure.parameter_count(), 50);
        let (x, u) = e.record(80).unwrap();
        assert_eq!((x.n_channels(), x.n_samples()), (5, 80));
        assert_eq!((u.n_channels(), u.n_samples()), (5, 80));
        assert!(x.terminal.is_some() && u.terminal.is_some());
        assert_eq!(e, Experiment::new(&spec, 7).unwrap());
    }
}
