//! CSV serialization of traces and histograms.
//!
//! Floating-point columns are written with 17 significant digits so files
//! round-trip doubles exactly and identical runs produce identical bytes.

use crate::correlation::CoincidenceHistogram;
use crate::dynamics::{PopulationTrace, TimeTrace};
use crate::error::{Error, Result};
use crate::interferometry::{InterferogramMapRow, InterferogramTrace};
use crate::spectral::SpectrumTrace;
use std::fmt::Write as _;
use std::path::Path;

/// Full-precision float formatting (17 significant digits).
#[inline]
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_spectrum(trace: &SpectrumTrace, path: &Path) -> Result<()> {
    let mut s = String::from("energy_ev,intensity\n");
    for (e, i) in trace.energies.iter().zip(&trace.intensities) {
        let _ = writeln!(s, "{},{}", fmt_f64(*e), fmt_f64(*i));
    }
    write_file(path, &s)
}

/// Read a two-column CSV with a header into (x, y) vectors.
pub fn read_xy(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let parse = |field: Option<&str>| -> Result<f64> {
            field
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::domain(format!("{}: malformed line {}", path.display(), lineno + 1))
                })
        };
        xs.push(parse(cols.next())?);
        ys.push(parse(cols.next())?);
    }
    if xs.is_empty() {
        return Err(Error::domain(format!("{}: no data rows", path.display())));
    }
    Ok((xs, ys))
}

pub fn write_histogram(hist: &CoincidenceHistogram, path: &Path) -> Result<()> {
    let mut s = String::from("delay_ps,counts,g2_normalized\n");
    for (d, c) in hist.delays_ps.iter().zip(&hist.counts) {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_f64(*d),
            c,
            fmt_f64(*c as f64 / hist.normalization)
        );
    }
    write_file(path, &s)
}

/// Read a histogram CSV written by [`write_histogram`] back into a
/// `CoincidenceHistogram`.
pub fn read_histogram(path: &Path) -> Result<CoincidenceHistogram> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut delays = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut norm = None;
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::domain(format!(
                "{}: expected 3 columns on line {}",
                path.display(),
                lineno + 1
            )));
        }
        let bad = || Error::domain(format!("{}: malformed line {}", path.display(), lineno + 1));
        let d: f64 = cols[0].trim().parse().map_err(|_| bad())?;
        let c: u64 = cols[1].trim().parse().map_err(|_| bad())?;
        let g: f64 = cols[2].trim().parse().map_err(|_| bad())?;
        if norm.is_none() && c > 0 && g > 0.0 {
            norm = Some(c as f64 / g);
        }
        delays.push(d);
        counts.push(c);
    }
    if delays.len() < 2 {
        return Err(Error::domain(format!(
            "{}: not enough histogram rows",
            path.display()
        )));
    }
    let bin = delays[1] - delays[0];
    Ok(CoincidenceHistogram {
        bin_width_ps: bin,
        delays_ps: delays,
        counts,
        normalization: norm
            .ok_or_else(|| Error::domain(format!("{}: no normalization row", path.display())))?,
    })
}

pub fn write_populations(trace: &PopulationTrace, path: &Path) -> Result<()> {
    let mut s = String::from("time_s,pop_g,pop_x,pop_d,rf_intensity\n");
    for i in 0..trace.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(trace.times[i]),
            fmt_f64(trace.ground[i]),
            fmt_f64(trace.excited[i]),
            fmt_f64(trace.ionized[i]),
            fmt_f64(trace.rf_intensity[i])
        );
    }
    write_file(path, &s)
}

pub fn write_trace(trace: &TimeTrace, x_name: &str, y_name: &str, path: &Path) -> Result<()> {
    let mut s = format!("{x_name},{y_name}\n");
    for (t, v) in trace.times.iter().zip(&trace.values) {
        let _ = writeln!(s, "{},{}", fmt_f64(*t), fmt_f64(*v));
    }
    write_file(path, &s)
}

pub fn write_interferogram(trace: &InterferogramTrace, path: &Path) -> Result<()> {
    let mut s = String::from("detuning_ev,i_tot,i_lo,visibility\n");
    for i in 0..trace.detunings_ev.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(trace.detunings_ev[i]),
            fmt_f64(trace.i_tot[i]),
            fmt_f64(trace.i_lo),
            fmt_f64(trace.visibility[i])
        );
    }
    write_file(path, &s)
}

/// Angle-resolved map in long format, matching the sweep axes.
pub fn write_interferogram_map(rows: &[InterferogramMapRow], path: &Path) -> Result<()> {
    let mut s = String::from("dtheta_deg,detuning_ev,i_diff\n");
    for row in rows {
        let deg = row.dtheta_rad.to_degrees();
        for (i, d) in row.trace.detunings_ev.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt_f64(deg),
                fmt_f64(*d),
                fmt_f64(row.trace.i_tot[i] - row.trace.i_lo)
            );
        }
    }
    write_file(path, &s)
}
