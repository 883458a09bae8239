//! CSV and JSON files.
//!
//! Signals: `t,ch0_re,ch0_im,ch1_re,..`, one row per sample. On a closed grid
//! the last row is the sample at `t = T`. Spectra: `f,ch0_re,ch0_im,..`.
//! Numbers are written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{Signal, Spectrum};

pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn channel_header(first: &str, channels: usize) -> Vec<String> {
    let mut h = vec![first.to_string()];
    for c in 0..channels {
        h.push(format!("ch{c}_re"));
        h.push(format!("ch{c}_im"));
    }
    h
}

fn push_complex(row: &mut Vec<String>, v: Complex64) {
    row.push(num(v.re));
    row.push(num(v.im));
}

pub fn write_signal(path: &Path, signal: &Signal) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(channel_header("t", signal.n_channels()))?;
    for j in 0..signal.n_samples() {
        let mut row = vec![num(signal.time(j))];
        for c in 0..signal.n_channels() {
            push_complex(&mut row, signal.values[(c, j)]);
        }
        w.write_record(&row)?;
    }
    if let Some(term) = &signal.terminal {
        let mut row = vec![num(signal.t_len)];
        for v in term.iter() {
            push_complex(&mut row, *v);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), reason: reason.into() }
}

/// Reads a signal CSV; with `closed_grid` the last row becomes the terminal sample.
pub fn read_signal(path: &Path, closed_grid: bool) -> Result<Signal> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let header = r.headers()?.clone();
    if header.len() < 3 || header.len() % 2 == 0 || &header[0] != "t" {
        return Err(format_err(path, "expected header t,ch0_re,ch0_im,..."));
    }
    let channels = (header.len() - 1) / 2;
    let mut times = Vec::new();
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("row {}: {e}", i + 2)))?;
        if vals.len() != header.len() {
            return Err(format_err(path, format!("row {} has {} fields, expected {}", i + 2, vals.len(), header.len())));
        }
        times.push(vals[0]);
        cols.push(DVector::from_fn(channels, |c, _| Complex64::new(vals[1 + 2 * c], vals[2 + 2 * c])));
    }
    let needed = if closed_grid { 3 } else { 2 };
    if times.len() < needed {
        return Err(format_err(path, "too few samples"));
    }
    let h = times[1] - times[0];
    if !(h > 0.0) || times.iter().enumerate().any(|(j, t)| (t - times[0] - j as f64 * h).abs() > 1e-9 * h * (j as f64 + 1.0)) {
        return Err(format_err(path, "sample times are not uniformly spaced"));
    }
    if times[0].abs() > 1e-9 * h {
        return Err(format_err(path, "records must start at t = 0"));
    }
    let terminal = if closed_grid { cols.pop() } else { None };
    let n = cols.len();
    let values = DMatrix::from_fn(channels, n, |c, j| cols[j][c]);
    let signal = Signal::new(n as f64 * h, values)?;
    Ok(match terminal {
        Some(t) => signal.with_terminal(t),
        None => signal,
    })
}

pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(channel_header("f", spectrum.n_channels()))?;
    for (k, &bin) in spectrum.bins.iter().enumerate() {
        let mut row = vec![num(spectrum.frequency(bin))];
        for c in 0..spectrum.n_channels() {
            push_complex(&mut row, spectrum.coeffs[(c, k)]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a header and rows of already formatted fields.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn signal_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = Signal::from_fn(0.7, 33, 2, |c, t| Complex64::new((2.0 * PI * t).sin() / 3.0, c as f64 * t.exp())).unwrap();
        write_signal(&path, &s).unwrap();
        let back = read_signal(&path, true).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.terminal, s.terminal);
        assert!((back.t_len - 0.7).abs() < 1e-14);
        let open = read_signal(&path, false).unwrap();
        assert_eq!(open.n_samples(), 34);
    }

    #[test]
    fn malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,a_re\n0,1\n").unwrap();
        assert_eq!(read_signal(&path, false).unwrap_err().exit_code(), 4);
        std::fs::write(&path, "t,ch0_re,ch0_im\n0,1,0\n0.1,1,0\n0.3,1,0\n").unwrap();
        assert!(matches!(read_signal(&path, false), Err(Error::Format { .. })));
        std::fs::write(&path, "t,ch0_re,ch0_im\n0,1,0\n0.1,x,0\n").unwrap();
        assert!(matches!(read_signal(&path, false), Err(Error::Format { .. })));
        assert_eq!(read_signal(&dir.path().join("missing.csv"), true).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn full_precision() {
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(num(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
