//! Configuration, file formats and run orchestration.

pub mod config;
pub mod csv;
pub mod svg;
pub mod ttag;

pub use config::{Experiment, RunConfig};
pub use ttag::{read_ttag, write_ttag};

use crate::dynamics::{evolve, recovery_trace, Integrator, TimeTrace};
use crate::error::{Error, Result};
use crate::fitting::{fit_figure, fit_g2_histogram, FigureData, FigureId};
use crate::interferometry::{interferogram, interferogram_map, Extinction, OpticalChain};
use crate::montecarlo::{simulate_g2_experiment, simulate_g2_stream};
use crate::preset::{preset_anchor_lines, PaperPreset};
use crate::spectral::synth_spectrum;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// One quantitative check attached to a run summary.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ToleranceCheck {
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ToleranceCheck {
    pub fn new(measured: f64, expected: f64, tolerance: f64) -> Self {
        ToleranceCheck {
            measured,
            expected,
            tolerance,
            pass: (measured - expected).abs() <= tolerance,
        }
    }
}

/// Machine-readable result of a run; serialized as `results.json`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSummary {
    pub experiment: String,
    pub preset_anchors: Vec<String>,
    pub fitted_params: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, ToleranceCheck>,
    pub pass: bool,
}

impl RunSummary {
    fn new(experiment: Experiment) -> Self {
        RunSummary {
            experiment: experiment.name().to_string(),
            preset_anchors: preset_anchor_lines(),
            fitted_params: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            pass: true,
        }
    }

    fn check(&mut self, name: &str, measured: f64, expected: f64, tolerance: f64) {
        let c = ToleranceCheck::new(measured, expected, tolerance);
        self.pass &= c.pass;
        self.tolerances.insert(name.to_string(), c);
    }
}

/// Files written by a run, plus its summary.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
}

/// Execute the experiment described by `config`, writing CSV artifacts
/// and `results.json` under `out_dir`. Identical `(config, seed)` inputs
/// produce byte-identical outputs; SVG plots (`emit_svg`) are best-effort
/// extras outside that guarantee.
pub fn run_config(
    config: &RunConfig,
    preset_backed: bool,
    out_dir: &Path,
    emit_svg: bool,
) -> Result<RunOutcome> {
    config.validate(preset_backed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let preset = PaperPreset::default();

    let mut outcome = match config.experiment {
        Experiment::Spectrum => run_spectrum(config, &preset, out_dir, emit_svg)?,
        Experiment::G2 => run_g2(config, &preset, out_dir, emit_svg)?,
        Experiment::Interferogram => run_interferogram(config, &preset, out_dir, emit_svg)?,
        Experiment::Dynamics => run_dynamics(config, &preset, out_dir, emit_svg)?,
        Experiment::Recovery => run_recovery(config, &preset, out_dir, emit_svg)?,
    };

    let summary_path = out_dir.join("results.json");
    write_json(&outcome.summary, &summary_path)?;
    outcome.files.push(summary_path);
    Ok(outcome)
}

/// Load a config file and run it.
pub fn run(
    config_path: &Path,
    preset_backed: bool,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
    emit_svg: bool,
) -> Result<RunOutcome> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let out_dir = out_override
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("rfsim-out"));
    run_config(&config, preset_backed, &out_dir, emit_svg)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::domain(format!("json serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_spectrum(
    config: &RunConfig,
    preset: &PaperPreset,
    out_dir: &Path,
    emit_svg: bool,
) -> Result<RunOutcome> {
    let (zpl, psb, grid, noise) = match &config.spectrum {
        Some(s) => {
            let zpl =
                crate::spectral::LineshapeParams::new(s.zpl_center_ev, s.zpl_fwhm_ev, 0.0, s.zpl_area)?;
            let psb =
                crate::spectral::LineshapeParams::new(s.psb_center_ev, 0.0, s.psb_fwhm_ev, s.psb_area)?;
            if s.grid_points < 2 || s.grid_max_ev <= s.grid_min_ev {
                return Err(Error::config("spectrum", "grid must have at least 2 rising points"));
            }
            let step = (s.grid_max_ev - s.grid_min_ev) / (s.grid_points - 1) as f64;
            let grid = (0..s.grid_points)
                .map(|i| s.grid_min_ev + i as f64 * step)
                .collect();
            (zpl, psb, grid, s.noise_rms)
        }
        None => {
            let psb = preset.psb()?;
            // 2% of the sideband peak: visible noise without drowning the
            // weaker component.
            let noise = 0.02 * crate::spectral::gaussian(psb.center, &psb)?;
            (preset.zpl()?, psb, preset.spectrum_grid(), noise)
        }
    };
    let trace = synth_spectrum(&zpl, &psb, &grid, noise, config.seed)?;
    let csv_path = out_dir.join("spectrum.csv");
    csv::write_spectrum(&trace, &csv_path)?;
    let mut files = vec![csv_path];

    let fit = fit_figure(FigureId::Fig2b, FigureData::Spectrum(&trace))?;
    let mut summary = RunSummary::new(Experiment::Spectrum);
    for (k, v) in &fit.headlines {
        summary.fitted_params.insert(k.clone(), *v);
    }
    summary.check("f_dw", fit.headline("f_dw")?, preset.f_dw, 0.01);
    summary.pass &= fit.converged;

    if emit_svg {
        let svg_path = out_dir.join("spectrum.svg");
        svg::line_plot(
            &svg_path,
            "synthetic emission spectrum",
            "energy (eV)",
            "intensity",
            &trace.energies,
            &trace.intensities,
        )?;
        files.push(svg_path);
    }
    Ok(RunOutcome { summary, files })
}

fn run_g2(
    config: &RunConfig,
    preset: &PaperPreset,
    out_dir: &Path,
    emit_svg: bool,
) -> Result<RunOutcome> {
    let emitter = match &config.emitter {
        Some(m) => m.clone(),
        None => preset.emitter_g2()?,
    };
    let detector = match &config.detector {
        Some(d) => *d,
        None => preset.detector_g2()?,
    };
    let g2cfg = config.g2.unwrap_or(config::G2Config {
        p_resonant_nw: preset.g2_pump_nw,
        p_aboveband_nw: preset.stabilize_nw,
        duration_s: 60.0,
        bin_width_ps: preset.g2_bin_s * 1e12,
        max_delay_ns: 20.0,
        save_ttag: false,
    });

    let experiment = simulate_g2_experiment(
        &emitter,
        &detector,
        g2cfg.p_resonant_nw,
        g2cfg.p_aboveband_nw,
        g2cfg.duration_s,
        g2cfg.bin_width_ps * 1e-12,
        g2cfg.max_delay_ns * 1e-9,
        config.seed,
    )?;
    let hist_path = out_dir.join("g2_histogram.csv");
    csv::write_histogram(&experiment.histogram, &hist_path)?;
    let mut files = vec![hist_path];

    if g2cfg.save_ttag {
        let stream = simulate_g2_stream(
            &emitter,
            &detector,
            g2cfg.p_resonant_nw,
            g2cfg.p_aboveband_nw,
            g2cfg.duration_s,
            config.seed,
        )?;
        let ttag_path = out_dir.join("stream.ttag");
        ttag::write_ttag(&stream, &ttag_path)?;
        files.push(ttag_path);
    }

    let fit = fit_g2_histogram(&experiment.histogram)?;
    let mut summary = RunSummary::new(Experiment::G2);
    for (k, v) in &fit.headlines {
        summary.fitted_params.insert(k.clone(), *v);
    }
    summary
        .fitted_params
        .insert("rate_ch0_cps".into(), experiment.rate_ch0);
    summary
        .fitted_params
        .insert("rate_ch1_cps".into(), experiment.rate_ch1);
    summary.check("q0", fit.headline("q0")?, preset.q0_raw, 0.08);
    summary.check(
        "bunch_ratio",
        fit.headline("bunch_ratio")?,
        preset.bunch_ratio,
        0.05,
    );
    summary.check(
        "tau1_ns",
        fit.headline("tau1_ns")?,
        preset.tau1_ns,
        0.15 * preset.tau1_ns,
    );
    summary.pass &= fit.converged;

    if emit_svg {
        let svg_path = out_dir.join("g2.svg");
        svg::line_plot(
            &svg_path,
            "coincidence histogram",
            "delay (ns)",
            "g2",
            &experiment.histogram.delays_ns(),
            &experiment.histogram.g2_values(),
        )?;
        files.push(svg_path);
    }
    Ok(RunOutcome { summary, files })
}

fn run_interferogram(
    config: &RunConfig,
    preset: &PaperPreset,
    out_dir: &Path,
    emit_svg: bool,
) -> Result<RunOutcome> {
    let optics = config.optics.clone().unwrap_or(config::OpticsConfig {
        scatterer: preset.scatterer(),
        dtheta_deg: vec![-0.5, -0.3, -0.1, 0.1, 0.3, 0.5],
        power_nw: 0.0,
        extinction: Extinction::default(),
        window_linewidths: 20.0,
        points: 1001,
        chain: None,
    });
    let chain = optics.chain.clone().unwrap_or_else(OpticalChain::cross_polarized);
    let p = optics.scatterer;
    p.validate()?;
    if optics.points < 2 {
        return Err(Error::config("optics", "sweep needs at least 2 points"));
    }
    let half = optics.window_linewidths * p.gamma_ev;
    let grid: Vec<f64> = (0..optics.points)
        .map(|i| -half + 2.0 * half * i as f64 / (optics.points - 1) as f64)
        .collect();
    let dthetas_rad: Vec<f64> = optics.dtheta_deg.iter().map(|d| d.to_radians()).collect();
    let rows = interferogram_map(&dthetas_rad, &grid, optics.power_nw, &p, &chain, optics.extinction)?;

    let mut files = Vec::new();
    let mut summary = RunSummary::new(Experiment::Interferogram);
    for (row, deg) in rows.iter().zip(&optics.dtheta_deg) {
        let tag = format!("{deg:+.3}");
        let path = out_dir.join(format!("interferogram_dtheta_{tag}deg.csv"));
        csv::write_interferogram(&row.trace, &path)?;
        files.push(path);
        let scale = row.trace.i_diff().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        summary.fitted_params.insert(
            format!("sign_changes_{tag}deg"),
            row.trace.sign_changes(1e-12 * scale) as f64,
        );
    }
    let map_path = out_dir.join("interference_map.csv");
    csv::write_interferogram_map(&rows, &map_path)?;
    files.push(map_path);

    // Saturation ordering of the visibility peaks at the two scan powers.
    let dtheta = 0.5f64.to_radians();
    let peak = |power: f64| -> Result<f64> {
        let tr = interferogram(&grid, dtheta, power, &p, &chain, optics.extinction)?;
        Ok(tr.visibility.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    };
    let low = peak(preset.interferometry_low_nw)?;
    let high = peak(preset.interferometry_high_nw)?;
    summary.fitted_params.insert("peak_visibility_low_power".into(), low);
    summary.fitted_params.insert("peak_visibility_high_power".into(), high);
    summary.pass &= high < low;

    if emit_svg {
        if let Some(row) = rows.first() {
            let svg_path = out_dir.join("interferogram.svg");
            svg::line_plot(
                &svg_path,
                "interference sweep",
                "detuning (eV)",
                "i_tot - i_lo",
                &row.trace.detunings_ev,
                &row.trace.i_diff(),
            )?;
            files.push(svg_path);
        }
    }
    Ok(RunOutcome { summary, files })
}

fn run_dynamics(
    config: &RunConfig,
    preset: &PaperPreset,
    out_dir: &Path,
    emit_svg: bool,
) -> Result<RunOutcome> {
    let emitter = match &config.emitter {
        Some(m) => m.clone(),
        None => preset.emitter_dynamics()?,
    };
    let sequence = match &config.sequence {
        Some(s) => s.to_sequence()?,
        None => preset.ionization_sequence(1.2e-6)?,
    };
    let dt = 5e-9;
    let trace = evolve(&sequence, &emitter, dt, Integrator::MatrixExp)?;
    let csv_path = out_dir.join("dynamics.csv");
    csv::write_populations(&trace, &csv_path)?;
    let mut files = vec![csv_path];

    let mut summary = RunSummary::new(Experiment::Dynamics);
    // Fit the fluorescence decay of the resonant-probe segment, if any.
    let mut t0 = 0.0;
    let mut probe: Option<(f64, f64)> = None;
    for seg in &sequence.segments {
        if seg.p_resonant_nw > 0.0 && seg.p_aboveband_nw == 0.0 {
            probe = Some((t0, t0 + seg.duration_s));
        }
        t0 += seg.duration_s;
    }
    if let Some((start, end)) = probe {
        let window = trace.window(start + 20.0 * dt, end);
        let rf = window.rf_trace();
        let fit = fit_figure(FigureId::Fig4a, FigureData::Trace(&rf))?;
        for (k, v) in &fit.headlines {
            summary.fitted_params.insert(k.clone(), *v);
        }
        summary.check(
            "decay_rate_per_s",
            fit.headline("decay_rate_per_s")?,
            preset.auger_decay_rate,
            0.05 * preset.auger_decay_rate,
        );
        summary.pass &= fit.converged;
    }

    if emit_svg {
        let svg_path = out_dir.join("dynamics.svg");
        svg::line_plot(
            &svg_path,
            "drive protocol fluorescence",
            "time (s)",
            "RF intensity (1/s)",
            &trace.times,
            &trace.rf_intensity,
        )?;
        files.push(svg_path);
    }
    Ok(RunOutcome { summary, files })
}

fn run_recovery(
    config: &RunConfig,
    preset: &PaperPreset,
    out_dir: &Path,
    emit_svg: bool,
) -> Result<RunOutcome> {
    let emitter = match &config.emitter {
        Some(m) => m.clone(),
        None => preset.emitter_dynamics()?,
    };
    let rec = config.recovery.unwrap_or(config::RecoveryConfig {
        p_aboveband_nw: preset.recovery_fast_nw,
        p_resonant_nw: preset.auger_probe_nw,
    });
    let (trace, tau) = recovery_trace(rec.p_aboveband_nw, rec.p_resonant_nw, &emitter)?;
    let csv_path = out_dir.join("recovery.csv");
    csv::write_trace(&trace, "time_s", "rf_intensity", &csv_path)?;
    let mut files = vec![csv_path];

    let mut summary = RunSummary::new(Experiment::Recovery);
    summary.fitted_params.insert("tau_s".into(), tau);
    summary.fitted_params.insert("tau_ns".into(), tau * 1e9);
    if (rec.p_aboveband_nw - preset.recovery_fast_nw).abs() < 1e-9 {
        summary.check("tau_s", tau, preset.recovery_fast_s, 0.05 * preset.recovery_fast_s);
    } else if (rec.p_aboveband_nw - preset.recovery_slow_nw).abs() < 1e-9 {
        summary.check("tau_s", tau, preset.recovery_slow_s, 0.10 * preset.recovery_slow_s);
    }

    if emit_svg {
        let svg_path = out_dir.join("recovery.svg");
        svg::line_plot(
            &svg_path,
            "charge recovery",
            "time (s)",
            "RF intensity (1/s)",
            &trace.times,
            &trace.values,
        )?;
        files.push(svg_path);
    }
    Ok(RunOutcome { summary, files })
}

/// Fit an on-disk trace or histogram as one of the named figures and
/// return the fit result (the `fit` subcommand).
pub fn fit_file(figure: FigureId, path: &Path) -> Result<crate::fitting::FitResult> {
    match figure {
        FigureId::Fig2b | FigureId::Fig2c => {
            let (xs, ys) = csv::read_xy(path)?;
            let trace = crate::spectral::SpectrumTrace::new(xs, ys)?;
            fit_figure(figure, FigureData::Spectrum(&trace))
        }
        FigureId::Fig2d | FigureId::Fig2e => {
            let hist = csv::read_histogram(path)?;
            fit_figure(figure, FigureData::Histogram(&hist))
        }
        FigureId::Fig4a | FigureId::Fig4c | FigureId::Fig4d => {
            let (xs, ys) = csv::read_xy(path)?;
            let trace = TimeTrace::new(xs, ys)?;
            fit_figure(figure, FigureData::Trace(&trace))
        }
    }
}
