//! Error norms, slope fits and ensemble statistics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::identify::{build_regression, identify, residual_spectrum, Band, IdentifyConfig, Method, ModelParams, ModelStructure};
use crate::simulate::Experiment;
use crate::spectral::{Signal, Spectrum};

/// Per-bin Euclidean norms over channels and `‖Ê‖ = sqrt(Σ_f ‖ê(f)‖² / T)`.
pub fn error_norms(residual: &Spectrum) -> (Vec<f64>, f64) {
    let per: Vec<f64> = residual.coeffs.column_iter().map(|c| c.norm()).collect();
    let total = (per.iter().map(|v| v * v).sum::<f64>() / residual.t_len).sqrt();
    (per, total)
}

/// Frobenius norm of the difference over all free matrices (`A_{n_a}` excluded).
pub fn param_error(truth: &ModelParams, estimate: &ModelParams) -> Result<f64> {
    if truth.structure != estimate.structure {
        return Err(Error::InvalidArgument("parameter structures differ".into()));
    }
    Ok((truth.theta() - estimate.theta()).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval on the slope; infinite with two points.
    pub half_width: f64,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("slope fit needs at least two (x, y) pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let half_width = if lx.len() > 2 {
        let dof = n - 2.0;
        let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let se = (sse / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        t.inverse_cdf(0.975) * se
    } else {
        f64::INFINITY
    };
    Ok(SlopeFit { slope, intercept, half_width })
}

/// Cumulative-mean statistics over an ordered ensemble of estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    /// `‖mean(θ̃_1..θ̃_K) - θ‖` for `K = 1..len`.
    pub mean_error: Vec<f64>,
    /// Root mean square over parameters of the elementwise sample standard deviation (0 for `K = 1`).
    pub std: Vec<f64>,
    /// Mean per-trial error `mean_k ‖θ̃_k - θ‖` for `K = 1..len`.
    pub trial_error: Vec<f64>,
}

pub fn ensemble_stats(estimates: &[ModelParams], truth: &ModelParams) -> Result<EnsembleStats> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let t = truth.theta();
    let mut sum = DMatrix::zeros(t.nrows(), t.ncols());
    let mut sum_sq = DMatrix::zeros(t.nrows(), t.ncols());
    let mut err_sum = 0.0;
    let mut out = EnsembleStats { mean_error: Vec::new(), std: Vec::new(), trial_error: Vec::new() };
    for (i, est) in estimates.iter().enumerate() {
        if est.structure != truth.structure {
            return Err(Error::InvalidArgument(format!("ensemble member {i} has a different structure")));
        }
        let th = est.theta();
        err_sum += (&th - &t).norm();
        sum += &th;
        sum_sq += th.component_mul(&th);
        let k = (i + 1) as f64;
        let mean = &sum / k;
        out.mean_error.push((&mean - &t).norm());
        out.trial_error.push(err_sum / k);
        let std = if i == 0 {
            0.0
        } else {
            let var = (&sum_sq - mean.component_mul(&mean) * k) / (k - 1.0);
            (var.iter().map(|v| v.max(0.0)).sum::<f64>() / var.len() as f64).sqrt()
        };
        out.std.push(std);
    }
    Ok(out)
}

/// One row of a sampling-rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub window: String,
    pub n_p: usize,
    pub fs: f64,
    /// `‖ê(f*)‖` at the probe frequency under the true parameters.
    pub residual_at_probe: f64,
    /// `‖Ê‖` under the true parameters.
    pub residual_l2: f64,
    pub param_error: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Rows for one method/window combination, in sweep order.
    pub fn series(&self, method: &str, window: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.method == method && r.window == window).collect()
    }
}

/// Residual under the true parameters on the corrected (or rectangular) regression
/// over all bins, reduced to `‖ê(probe)‖` and `‖Ê‖` over `|f| <= norm_f_max`.
pub fn true_residual(x: &Signal, u: &Signal, truth: &ModelParams, cfg: &IdentifyConfig, probe: f64, norm_f_max: f64) -> Result<(f64, f64)> {
    let plain = IdentifyConfig {
        method: if cfg.method.rectangular() { Method::Naive } else { Method::Corrected },
        n_p: 0,
        band: Band::all(),
        ..*cfg
    };
    let reg = build_regression(x, u, truth.structure, &plain)?;
    let e = residual_spectrum(truth, &reg)?;
    let (per, _) = error_norms(&e);
    let probe_bin = (probe * e.t_len).round() as i64;
    let at_probe = e.column_of(probe_bin).map(|k| per[k]).unwrap_or(f64::NAN);
    let mut sum = 0.0;
    for (k, &bin) in e.bins.iter().enumerate() {
        if e.frequency(bin).abs() <= norm_f_max * (1.0 + 1e-12) {
            sum += per[k] * per[k];
        }
    }
    Ok((at_probe, (sum / e.t_len).sqrt()))
}

/// One sweep row: simulate at `n` samples, estimate, and evaluate the true residual.
pub fn sweep_point(experiment: &Experiment, n: usize, cfg: &IdentifyConfig, probe: f64, norm_f_max: f64) -> Result<SweepRow> {
    let (x, u) = experiment.record(n)?;
    sweep_point_on(experiment, &x, &u, cfg, probe, norm_f_max)
}

/// [`sweep_point`] on already simulated records.
pub fn sweep_point_on(
    experiment: &Experiment,
    x: &Signal,
    u: &Signal,
    cfg: &IdentifyConfig,
    probe: f64,
    norm_f_max: f64,
) -> Result<SweepRow> {
    let report = identify(x, u, experiment.truth.structure, cfg)?;
    let (residual_at_probe, residual_l2) = true_residual(x, u, &experiment.truth, cfg, probe, norm_f_max)?;
    Ok(SweepRow {
        method: cfg.method.name().to_string(),
        window: cfg.effective_window(x.t_len)?.to_string(),
        n_p: cfg.n_p,
        fs: x.sample_rate(),
        residual_at_probe,
        residual_l2,
        param_error: param_error(&experiment.truth, &report.theta_hat)?,
        wall_time: report.wall_time,
    })
}

/// Estimates from `trials` noisy copies of `(x, u)`; trial `i` is seeded with `seed + i`.
/// Runs on the current rayon pool; the output is in trial order.
pub fn noisy_estimates(
    x: &Signal,
    u: &Signal,
    structure: ModelStructure,
    cfg: &IdentifyConfig,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<ModelParams>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let (xn, un) = Experiment::corrupt(x, u, sigma, seed.wrapping_add(i as u64))?;
            Ok(identify(&xn, &un, structure, cfg)?.theta_hat)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::ModelStructure;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn norms_of_zero_and_unit_bin() {
        let mut s = Spectrum::zeros(2.0, vec![0, 1, 2], 2);
        let (per, total) = error_norms(&s);
        assert_eq!(per, vec![0.0; 3]);
        assert_eq!(total, 0.0);
        s.coeffs[(1, 1)] = Complex64::new(0.0, 1.0);
        let (per, total) = error_norms(&s);
        assert_eq!(per[1], 1.0);
        assert_relative_eq!(total, (0.5f64).sqrt());
    }

    fn params(v: f64) -> ModelParams {
        let s = ModelStructure::new(2, 1, 1, 0).unwrap();
        ModelParams::new(s, vec![DMatrix::from_element(2, 2, v), DMatrix::identity(2, 2)], vec![DMatrix::from_element(2, 1, -v)]).unwrap()
    }

    #[test]
    fn param_error_single_entry() {
        let a = params(1.0);
        let mut b = a.clone();
        assert_eq!(param_error(&a, &b).unwrap(), 0.0);
        b.b[0][(1, 0)] += 1e-3;
        assert_relative_eq!(param_error(&a, &b).unwrap(), 1e-3, max_relative = 1e-9);
    }

    #[test]
    fn slopes() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let fit = loglog_slope(&xs, &xs.map(|x| x * x)).unwrap();
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert!(fit.half_width < 1e-10);
        let flat = loglog_slope(&xs, &[3.0; 4]).unwrap();
        assert_relative_eq!(flat.slope, 0.0, epsilon = 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[1.0, -1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[1.0, 3.0]).unwrap().half_width.is_infinite());
    }

    #[test]
    fn ensemble_identical_members() {
        let truth = params(1.0);
        let est = vec![params(1.5); 4];
        let s = ensemble_stats(&est, &truth).unwrap();
        assert!(s.std.iter().all(|&v| v < 1e-12));
        assert_relative_eq!(s.mean_error[0], param_error(&truth, &est[0]).unwrap());
        assert_eq!(s.mean_error.len(), 4);
    }

    #[test]
    fn ensemble_matches_direct_computation() {
        let truth = params(0.0);
        let est: Vec<ModelParams> = (0..10).map(|i| params(((i * 7) % 5) as f64 - 2.0)).collect();
        let s = ensemble_stats(&est, &truth).unwrap();
        let vals: Vec<f64> = (0..10).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mean = vals.iter().sum::<f64>() / 10.0;
        // six entries equal to v, each contributes v²
        assert_relative_eq!(s.mean_error[9], (6.0 * mean * mean).sqrt(), epsilon = 1e-12);
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        assert_relative_eq!(s.std[9], var.sqrt(), max_relative = 1e-12);
        assert!(ensemble_stats(&[], &truth).is_err());
    }
}
