//! Flat key-value run configuration.
//!
//! Values are resolved in three layers: built-in defaults (the paper preset),
//! then the TOML file given by `--config`, then command-line flags. The
//! resolved [`Settings`] are written next to every output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::{Band, IdentifyConfig, Method, ModelStructure};
use crate::simulate::{ExperimentSpec, PAPER_DT};
use crate::windows::WindowSpec;

macro_rules! settings {
    ($( $(#[$attr:meta])* $name:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Fully resolved run configuration.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct Settings {
            $( pub $name: $ty, )*
        }

        impl Default for Settings {
            fn default() -> Self {
                Self { $( $name: $default, )* }
            }
        }

        /// One configuration layer; unset keys fall through to the layer below.
        #[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
        #[serde(deny_unknown_fields)]
        pub struct RunConfig {
            $(
                $(#[$attr])*
                #[arg(long, value_delimiter = ',')]
                pub $name: Option<$ty>,
            )*
        }

        impl Settings {
            pub fn apply(&mut self, layer: &RunConfig) {
                $( if let Some(v) = &layer.$name { self.$name = v.clone(); } )*
            }
        }
    };
}

settings! {
    /// Named preset providing the defaults (only `paper`).
    preset: String = "paper".to_string(),
    /// Root seed; every random stream is derived from it.
    seed: u64 = 20240601,
    /// State dimension.
    n_x: usize = 5,
    /// Input dimension.
    n_u: usize = 5,
    /// Highest state derivative.
    n_a: usize = 1,
    /// Highest input derivative.
    n_b: usize = 0,
    /// Number of forcing tones.
    n_f: usize = 85,
    /// Lowest forcing frequency in Hz.
    tone_min: f64 = 1.0,
    /// Highest forcing frequency in Hz.
    tone_max: f64 = 20.0 * std::f64::consts::SQRT_2,
    /// Record length in seconds.
    t_len: f64 = 1.0,
    /// Largest integration step; the step actually used divides the sample spacing.
    dt: f64 = PAPER_DT,
    /// Sampling rate in Hz.
    fs: f64 = 80.0,
    /// Measurement noise standard deviation (per real and imaginary part).
    sigma: f64 = 0.0,
    /// Window used by corrected and mixed estimation, e.g. `cinf:4` or `sin:2`.
    window: String = "cinf:4".to_string(),
    /// Estimation method: corrected, ps, mixed or naive.
    method: String = "corrected".to_string(),
    /// Transient polynomial terms for ps and mixed.
    #[arg(alias = "np")]
    n_p: usize = 0,
    /// Lower edge of the estimation band in Hz (applied to |f|).
    f_min: f64 = 0.0,
    /// Upper edge of the estimation band in Hz (applied to |f|).
    f_max: f64 = f64::INFINITY,
    /// Average the first sample with the terminal one before transforming.
    endpoint_average: bool = false,
    /// Signal CSVs hold the closed grid, the last row being the sample at t = T.
    closed_grid: bool = true,
    /// Also write windowed and correction spectra from `identify` into `spectra/`.
    dump_spectra: bool = false,
    /// State record for `identify`.
    x_path: String = "x.csv".to_string(),
    /// Input record for `identify`.
    u_path: String = "u.csv".to_string(),
    /// Optional ground truth for `identify` (empty for none).
    truth_path: String = String::new(),
    /// Output directory.
    out: String = "out".to_string(),
    /// Sampling rates of a sweep.
    fs_list: Vec<f64> = default_fs_list(),
    /// Windows compared in sweeps and Monte Carlo runs.
    windows: Vec<String> = ["sin:1", "sin:2", "sin:3", "sin:4", "cinf:4"].map(String::from).to_vec(),
    /// Methods compared in sweeps.
    methods: Vec<String> = vec!["corrected".to_string()],
    /// Frequency of the single-bin residual reported by sweeps.
    probe_freq: f64 = 2.0,
    /// Upper |f| of the residual norm in sweeps; 0 uses the highest forcing tone.
    norm_f_max: f64 = 0.0,
    /// Monte Carlo trials per noise level and window.
    trials: usize = 100,
    /// Noise levels of a Monte Carlo run.
    sigmas: Vec<f64> = vec![1e-2, 1e-8],
    /// Samples per window in `window` output.
    samples: usize = 1024,
    /// Highest window derivative in `window` output.
    max_deriv: usize = 3,
    /// Highest frequency in `window` spectra, in units of 1/T.
    spectrum_f_max: f64 = 200.0,
    /// Thresholds of the f_err table.
    p_values: Vec<f64> = vec![1e-3, 1e-6, 1e-12],
    /// Windows of the overlap table.
    overlap_windows: Vec<String> = ["rect", "sin:1", "sin:2", "sin:3", "sin:4", "cinf:1", "poly:2", "poly:4"].map(String::from).to_vec(),
    /// Overlap fractions of the overlap table.
    taus: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect(),
    /// Window count K of the fixed-K overlap variance.
    overlap_k: usize = 10,
    /// Record length, in windows, of the fixed-record overlap variance.
    record_windows: f64 = 10.0,
}

/// `4·20√2 · 2^{i/2}` for `i = 0..=6`: four to thirty-two times the highest tone.
fn default_fs_list() -> Vec<f64> {
    (0..=6).map(|i| 4.0 * 20.0 * std::f64::consts::SQRT_2 * 2f64.powf(i as f64 / 2.0)).collect()
}

impl Settings {
    /// Defaults, then the file layer (if any), then the flag layer.
    pub fn resolve(file: Option<&Path>, flags: &RunConfig) -> Result<Self> {
        let file_layer = match file {
            Some(path) => load_layer(path)?,
            None => RunConfig::default(),
        };
        let preset = flags.preset.clone().or(file_layer.preset.clone()).unwrap_or_else(|| "paper".into());
        let mut s = Self::preset(&preset)?;
        s.apply(&file_layer);
        s.apply(flags);
        s.validate()?;
        Ok(s)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::default()),
            other => Err(Error::Config(format!("unknown preset '{other}' (available: paper)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.structure()?;
        self.method()?;
        WindowSpec::parse(&self.window, self.t_len)?;
        for w in self.windows.iter().chain(&self.overlap_windows) {
            WindowSpec::parse(w, self.t_len)?;
        }
        for m in &self.methods {
            m.parse::<Method>()?;
        }
        if !(self.fs > 0.0) || self.fs_list.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Config("sampling rates must be positive".into()));
        }
        if !(self.sigma >= 0.0) || self.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if !(self.f_min <= self.f_max) {
            return Err(Error::Config(format!("empty band [{}, {}]", self.f_min, self.f_max)));
        }
        Ok(())
    }

    pub fn structure(&self) -> Result<ModelStructure> {
        ModelStructure::new(self.n_x, self.n_u, self.n_a, self.n_b).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn method(&self) -> Result<Method> {
        self.method.parse()
    }

    pub fn experiment(&self) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            structure: self.structure()?,
            n_f: self.n_f,
            f_min: self.tone_min,
            f_max: self.tone_max,
            t_len: self.t_len,
            dt_max: self.dt,
        })
    }

    /// Samples per record at sampling rate `fs`.
    pub fn samples_at(&self, fs: f64) -> Result<usize> {
        let n = (fs * self.t_len).round();
        if n < 2.0 {
            return Err(Error::Config(format!("sampling rate {fs} gives fewer than two samples")));
        }
        Ok(n as usize)
    }

    pub fn band(&self) -> Band {
        Band { f_min: (self.f_min > 0.0).then_some(self.f_min), f_max: self.f_max.is_finite().then_some(self.f_max) }
    }

    pub fn identify_config(&self, method: Method, window: &str) -> Result<IdentifyConfig> {
        let window = if method.rectangular() { WindowSpec::rectangular(self.t_len)? } else { WindowSpec::parse(window, self.t_len)? };
        let n_p = match method {
            Method::Naive | Method::Corrected => 0,
            Method::Ps | Method::Mixed => self.n_p,
        };
        Ok(IdentifyConfig { method, window, n_p, band: self.band(), endpoint_average: self.endpoint_average })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn load_layer(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
