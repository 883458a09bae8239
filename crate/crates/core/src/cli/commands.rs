use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Settings;
use super::io::{num, read_json, read_signal, write_json, write_signal, write_spectrum, write_table};
use crate::corrections::SignalRole;
use crate::error::{Error, Result};
use crate::identify::{identify, windowed_spectra, EstimateReport, IdentifyConfig, Method, ModelParams};
use crate::metrics::{ensemble_stats, noisy_estimates, param_error, sweep_point, SweepRow};
use crate::simulate::{Experiment, PAPER_DT};
use crate::spectral::{FourierOptions, Signal, Spectrum};
use crate::windows::{
    asymptotic_overlap_variance, f_err, half_power_width, normalized_overlap_variance, overlap_variance, window_spectrum, window_table,
    WindowFamily, WindowSpec,
};

/// Ground truth written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub experiment: Experiment,
    pub n_samples: usize,
    pub fs: f64,
    pub dt: f64,
    pub sigma: f64,
    /// Root seed of the measurement noise (the run seed).
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifyOutput {
    pub seed: u64,
    pub report: EstimateReport,
    pub param_error: Option<f64>,
    pub truth_seed: Option<u64>,
}

fn prepare(settings: &Settings, command: &str) -> Result<PathBuf> {
    let out = PathBuf::from(&settings.out);
    fs::create_dir_all(&out)?;
    let text = format!("# resolved configuration of `fdident {command}`\n{}", settings.to_toml()?);
    fs::write(out.join("config.toml"), text)?;
    Ok(out)
}

fn experiment(settings: &Settings) -> Result<Experiment> {
    Experiment::new(&settings.experiment()?, settings.seed)
}

pub fn simulate(settings: &Settings) -> Result<()> {
    let out = prepare(settings, "simulate")?;
    let e = experiment(settings)?;
    let n = settings.samples_at(settings.fs)?;
    let (x, u) = e.record(n)?;
    let (x, u) = Experiment::corrupt(&x, &u, settings.sigma, settings.seed)?;
    write_signal(&out.join("x.csv"), &x)?;
    write_signal(&out.join("u.csv"), &u)?;
    let dt = e.sim_config(n)?.dt;
    let truth = TruthFile { experiment: e, n_samples: n, fs: x.sample_rate(), dt, sigma: settings.sigma, noise_seed: settings.seed };
    write_json(&out.join("truth.json"), &truth)?;
    log::info!("simulated {n} samples at dt = {dt:.3e} (paper step {PAPER_DT:e}) into {}", out.display());
    Ok(())
}

pub fn identify_cmd(settings: &Settings) -> Result<()> {
    let out = prepare(settings, "identify")?;
    let x = read_signal(Path::new(&settings.x_path), settings.closed_grid)?;
    let u = read_signal(Path::new(&settings.u_path), settings.closed_grid)?;
    if x.n_channels() != settings.n_x || u.n_channels() != settings.n_u {
        return Err(Error::Config(format!(
            "records have {}/{} channels but n_x = {}, n_u = {}",
            x.n_channels(),
            u.n_channels(),
            settings.n_x,
            settings.n_u
        )));
    }
    let structure = settings.structure()?;
    let cfg = settings.identify_config(settings.method()?, &settings.window)?;
    let report = identify(&x, &u, structure, &cfg)?;
    if settings.dump_spectra {
        dump_spectra(&out.join("spectra"), &x, &u, &cfg, settings.n_a, settings.n_b)?;
    }
    let truth: Option<TruthFile> = if settings.truth_path.is_empty() { None } else { Some(read_json(Path::new(&settings.truth_path))?) };
    let param_error = match &truth {
        Some(t) => Some(param_error(&t.experiment.truth, &report.theta_hat)?),
        None => None,
    };
    let rows: Vec<Vec<String>> = report.frequencies.iter().zip(&report.residual_norms).map(|(f, e)| vec![num(*f), num(*e)]).collect();
    write_table(&out.join("residual.csv"), &["f", "norm"], &rows)?;
    if let Some(err) = param_error {
        log::info!("parameter error {err:.3e}");
    }
    let output = IdentifyOutput { seed: settings.seed, report, param_error, truth_seed: truth.map(|t| t.experiment.seed) };
    write_json(&out.join("report.json"), &output)?;
    Ok(())
}

fn dump_spectra(dir: &Path, x: &Signal, u: &Signal, cfg: &IdentifyConfig, n_a: usize, n_b: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let window = cfg.effective_window(x.t_len)?;
    let opts = FourierOptions { endpoint_average: cfg.endpoint_average };
    for (name, signal, orders, role) in [("x", x, n_a, SignalRole::State), ("u", u, n_b, SignalRole::Input)] {
        let (spectrum, corr) = windowed_spectra(signal, &window, orders, role, opts)?;
        write_spectrum(&dir.join(format!("{name}_w.csv")), &spectrum)?;
        for (j, s) in corr.iter().flat_map(|c| c.spectra.iter()).enumerate() {
            write_spectrum(&dir.join(format!("{name}_corr{}.csv", j + 1)), s)?;
        }
    }
    Ok(())
}

pub fn window(settings: &Settings) -> Result<()> {
    let spec = WindowSpec::parse(&settings.window, settings.t_len)?;
    if spec.family == WindowFamily::Rectangular && settings.max_deriv > 0 {
        return Err(Error::UnsupportedDerivative { family: "rect", order: settings.max_deriv });
    }
    let out = prepare(settings, "window")?;
    let table = window_table(&spec, settings.samples, settings.max_deriv)?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..=settings.max_deriv).map(|k| format!("d{k}")));
    let mut rows: Vec<Vec<String>> = (0..settings.samples)
        .map(|j| {
            let mut row = vec![num(j as f64 * spec.length / settings.samples as f64)];
            row.extend(table.samples.iter().map(|r| num(r[j])));
            row
        })
        .collect();
    let mut last = vec![num(spec.length)];
    last.extend(table.terminal.iter().map(|v| num(*v)));
    rows.push(last);
    write_table(&out.join("window.csv"), &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;

    let f_max = settings.spectrum_f_max / spec.length;
    let spectra: Vec<Spectrum> = (0..=settings.max_deriv).map(|k| window_spectrum(&spec, k, 1, f_max)).collect::<Result<_>>()?;
    let mut header: Vec<String> = vec!["f".into()];
    for k in 0..=settings.max_deriv {
        header.push(format!("d{k}_re"));
        header.push(format!("d{k}_im"));
    }
    let rows: Vec<Vec<String>> = (0..spectra[0].bins.len())
        .map(|i| {
            let mut row = vec![num(spectra[0].frequency(spectra[0].bins[i]))];
            for s in &spectra {
                row.push(num(s.coeffs[(0, i)].re));
                row.push(num(s.coeffs[(0, i)].im));
            }
            row
        })
        .collect();
    write_table(&out.join("spectrum.csv"), &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;

    // f_err in units of 1/T; "-" where the derivative is a distribution (sin_n, k > n).
    let mut header: Vec<String> = vec!["window".into(), "derivative".into()];
    header.extend(settings.p_values.iter().map(|p| format!("p={p:e}")));
    let mut rows = Vec::new();
    for k in 0..=settings.max_deriv.min(3) {
        let mut row = vec![spec.to_string(), k.to_string()];
        let defined = !(spec.family == WindowFamily::Sin && k as f64 > spec.order);
        for &p in &settings.p_values {
            row.push(if defined { f_err(&spec, k, p)?.to_string() } else { "-".into() });
        }
        rows.push(row);
    }
    write_table(&out.join("ferr.csv"), &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    Ok(())
}

fn method_window_pairs(settings: &Settings) -> Result<Vec<(Method, String)>> {
    let mut pairs = Vec::new();
    for m in &settings.methods {
        let method: Method = m.parse()?;
        if method.rectangular() {
            pairs.push((method, "rect".to_string()));
        } else {
            pairs.extend(settings.windows.iter().map(|w| (method, w.clone())));
        }
    }
    Ok(pairs)
}

pub fn sweep(settings: &Settings) -> Result<()> {
    let out = prepare(settings, "sweep")?;
    let e = experiment(settings)?;
    let pairs = method_window_pairs(settings)?;
    let norm_f_max = if settings.norm_f_max > 0.0 { settings.norm_f_max } else { e.forcing.f_max() };
    let per_rate: Vec<Vec<SweepRow>> = settings
        .fs_list
        .par_iter()
        .map(|&fs| {
            let n = settings.samples_at(fs)?;
            let (x, u) = e.record(n)?;
            pairs
                .iter()
                .map(|(method, w)| {
                    let cfg = settings.identify_config(*method, w)?;
                    crate::metrics::sweep_point_on(&e, &x, &u, &cfg, settings.probe_freq, norm_f_max)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = per_rate
        .iter()
        .flatten()
        .map(|r| {
            vec![
                r.method.clone(),
                r.window.clone(),
                r.n_p.to_string(),
                num(r.fs),
                num(r.residual_at_probe),
                num(r.residual_l2),
                num(r.param_error),
                num(r.wall_time),
            ]
        })
        .collect();
    write_table(
        &out.join("sweep.csv"),
        &["method", "window", "n_p", "fs", "residual_at_probe", "residual_l2", "param_error", "wall_time"],
        &rows,
    )?;
    Ok(())
}

/// Single-rate sweep row, shared with tests.
pub fn sweep_row(settings: &Settings, method: Method, window: &str) -> Result<SweepRow> {
    let e = experiment(settings)?;
    let cfg = settings.identify_config(method, window)?;
    let norm_f_max = if settings.norm_f_max > 0.0 { settings.norm_f_max } else { e.forcing.f_max() };
    sweep_point(&e, settings.samples_at(settings.fs)?, &cfg, settings.probe_freq, norm_f_max)
}

pub fn montecarlo(settings: &Settings) -> Result<()> {
    let out = prepare(settings, "montecarlo")?;
    let e = experiment(settings)?;
    let (x, u) = e.record(settings.samples_at(settings.fs)?)?;
    let method = settings.method()?;
    let windows: Vec<String> = if method.rectangular() { vec!["rect".into()] } else { settings.windows.clone() };
    let mut rows = Vec::new();
    for &sigma in &settings.sigmas {
        for w in &windows {
            let cfg = settings.identify_config(method, w)?;
            let estimates: Vec<ModelParams> = noisy_estimates(&x, &u, e.truth.structure, &cfg, sigma, settings.trials, settings.seed)?;
            let stats = ensemble_stats(&estimates, &e.truth)?;
            let label = cfg.effective_window(x.t_len)?.to_string();
            for k in 0..estimates.len() {
                rows.push(vec![
                    method.name().to_string(),
                    label.clone(),
                    num(sigma),
                    (k + 1).to_string(),
                    num(stats.mean_error[k]),
                    num(stats.std[k]),
                    num(stats.trial_error[k]),
                ]);
            }
            log::info!("sigma {sigma:e} {label}: mean-estimate error {:.3e}", stats.mean_error.last().unwrap_or(&f64::NAN));
        }
    }
    write_table(&out.join("ensemble.csv"), &["method", "window", "sigma", "trials", "mean_error", "std", "trial_error"], &rows)?;
    Ok(())
}

pub fn overlap(settings: &Settings) -> Result<()> {
    let out = prepare(settings, "overlap")?;
    let specs: Vec<WindowSpec> = settings.overlap_windows.iter().map(|w| WindowSpec::parse(w, settings.t_len)).collect::<Result<_>>()?;
    let rows: Vec<Vec<Vec<String>>> = specs
        .par_iter()
        .map(|spec| {
            let width = half_power_width(spec)?;
            settings
                .taus
                .iter()
                .map(|&tau| {
                    Ok(vec![
                        spec.to_string(),
                        num(tau),
                        num(overlap_variance(spec, tau, settings.overlap_k)?),
                        num(normalized_overlap_variance(spec, tau, settings.record_windows)?),
                        num(asymptotic_overlap_variance(spec, tau)?),
                        num(width),
                    ])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = rows.into_iter().flatten().collect();
    write_table(
        &out.join("overlap.csv"),
        &["window", "tau", "variance_k", "variance_record", "variance_asymptotic", "half_power_width"],
        &rows,
    )?;
    Ok(())
}
