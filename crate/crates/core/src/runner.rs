//! Executes a [`RunConfig`] and writes its output bundle.
//!
//! Every run writes `config.toml` (the config with all defaults filled in) and
//! `manifest.json`. Engine outputs:
//!
//! * chart: `chart_grid.txt` (net power over detuning × amplitude), `chart_branches.csv`
//! * classical: `series.csv`, `strobe.csv`, `section.csv`, `attractor.json`
//! * master: `master.csv`, `rho_tau<τ>.bin`, `wigner_tau<τ>.txt`, `autocorr.csv`, `strobe.csv`
//! * qsd: `ensemble.csv`, `trajectory_<k>.csv`, `strobe_<k>.csv`,
//!   `rho_mech_tau<τ>.bin`, `wigner_tau<τ>.txt`, `autocorr.csv`
//!
//! Apart from the timing fields of the manifest, outputs are byte-identical
//! for identical configs on the same build.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde_json::{json, Value};

use crate::classical::{
    amplitude_chart, classify_attractor, integrate_classical, largest_lyapunov, stroboscopic_samples,
    LyapunovOptions,
};
use crate::config::{Engine, RunConfig, WignerSpec};
use crate::error::{Error, Result};
use crate::io::{self, GridFile};
use crate::master::{integrate_master, partial_trace_mech, DensityMatrix};
use crate::model::{FockConfig, OperatorSet};
use crate::observables::{
    autocorrelation_regression, autocorrelation_trajectories, covering_axes, stroboscopic_quantum, strobe_radius,
    uncertainty_floor, wigner, TrajectorySamples,
};
use crate::qsd::QsdEngine;

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    /// File names relative to `output_dir`, in write order.
    pub files: Vec<String>,
    /// Engine-specific results, also stored in the manifest.
    pub summary: Value,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn path(&mut self, name: String) -> PathBuf {
        let p = self.dir.join(&name);
        self.files.push(name);
        p
    }
}

fn tau_label(t: f64) -> String {
    format!("{t:.4}")
}

/// Runs `cfg` and writes everything into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let dir = cfg.output_path();
    std::fs::create_dir_all(&dir)?;
    let mut out = Outputs { dir, files: Vec::new() };
    std::fs::write(out.path("config.toml".into()), cfg.to_toml()?)?;

    log::info!("running {} engine into {}", cfg.engine.name(), out.dir.display());
    let summary = match cfg.engine {
        Engine::Chart => run_chart(cfg, &mut out)?,
        Engine::Classical => run_classical(cfg, &mut out)?,
        Engine::Master => run_master(cfg, &mut out)?,
        Engine::Qsd => run_qsd(cfg, &mut out)?,
    };

    let manifest_path = out.path("manifest.json".into());
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "engine": cfg.engine.name(),
        "seed": cfg.ensemble.seed,
        "files": out.files,
        "summary": summary,
        "started_unix": started_unix,
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?)?;
    Ok(RunReport {
        output_dir: out.dir,
        files: out.files,
        summary,
    })
}

fn run_chart(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let (deltas, amps) = cfg.chart.axes();
    let chart = amplitude_chart(&deltas, &amps, &cfg.params, &cfg.chart.balance_options())?;
    let comment = format!(
        "net power P_rad - P_fric, P = {}, kappa = {}, gamma = {}\nrows: detuning, columns: amplitude",
        cfg.params.pump, cfg.params.kappa, cfg.params.gamma
    );
    GridFile::from_chart(&chart, &comment).write(&out.path("chart_grid.txt".into()))?;
    io::write_chart_branches(&out.path("chart_branches.csv".into()), &chart)?;
    let branches: Vec<Value> = chart
        .detunings
        .iter()
        .zip(&chart.branches)
        .map(|(d, b)| json!({ "detuning": d, "amplitudes": b }))
        .collect();
    Ok(json!({ "branches": branches }))
}

fn run_classical(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let c = &cfg.classical;
    let state0 = cfg.initial.classical();
    let series = integrate_classical(state0, &cfg.params, c.t_end, c.sample_dt, c.tolerances())?;
    let lyapunov = if c.lyapunov {
        let opts = LyapunovOptions {
            transient: c.transient_fraction * c.t_end,
            ..LyapunovOptions::default()
        };
        Some(largest_lyapunov(&cfg.params, state0, (1.0 - c.transient_fraction) * c.t_end, c.tolerances(), &opts)?)
    } else {
        None
    };
    let lambda = lyapunov.as_ref().map_or(f64::NEG_INFINITY, |l| l.exponent);
    io::write_classical_series(&out.path("series.csv".into()), &series)?;

    // Short runs (fewer than ten periods after the transient) keep only the series.
    let report = match classify_attractor(&series, &cfg.params, lambda, &c.classify_options()) {
        Ok(r) => r,
        Err(Error::SeriesTooShort(why)) => {
            log::warn!("no attractor report: {why}");
            return Ok(json!({ "attractor": Value::Null }));
        }
        Err(e) => return Err(e),
    };
    let strobe = match &cfg.stroboscope {
        Some(s) => stroboscopic_samples(&series, s.period, s.offset)?,
        None => report.strobe.clone(),
    };
    io::write_strobe(&out.path("strobe.csv".into()), &strobe)?;
    io::write_strobe(&out.path("section.csv".into()), &report.section)?;
    let attractor = json!({
        "kind": report.kind,
        "amplitude": report.amplitude,
        "offset": report.offset,
        "lyapunov": lyapunov.as_ref().map(|l| l.exponent),
        "lyapunov_converged": lyapunov.as_ref().map(|l| l.converged),
    });
    std::fs::write(
        out.path("attractor.json".into()),
        serde_json::to_string_pretty(&attractor).map_err(std::io::Error::other)?,
    )?;
    Ok(json!({ "attractor": attractor }))
}

fn quantum_setup(cfg: &RunConfig) -> Result<(FockConfig, OperatorSet, Vec<C64>)> {
    let fock = cfg.fock_config()?;
    let ops = OperatorSet::from_params(&cfg.params, fock)?;
    let psi0 = cfg.initial_state(&fock)?;
    log::info!("truncation {} x {} (dim {})", fock.cavity, fock.mech, fock.dim());
    Ok((fock, ops, psi0))
}

fn write_wigner(spec: &WignerSpec, rho_m: &DMatrix<C64>, g: f64, tau: f64, out: &mut Outputs) -> Result<Value> {
    let (xa, pa) = match spec.axes()? {
        Some(axes) => axes,
        None => {
            let (mut xa, mut pa) = covering_axes(rho_m, g, spec.extent, spec.x_points)?;
            xa.points = spec.x_points;
            pa.points = spec.p_points;
            (xa, pa)
        }
    };
    let w = wigner(rho_m, g, &xa, &pa)?;
    let comment = format!("Wigner function of the cantilever at tau = {tau}\nrows: x, columns: p (scaled units)");
    GridFile::from_wigner(&w, &comment).write(&out.path(format!("wigner_tau{}.txt", tau_label(tau))))?;
    Ok(json!({ "tau": tau, "integral": w.integral(), "min": w.min(), "max": w.max() }))
}

fn record_and_snapshot_times(cfg: &RunConfig) -> Vec<f64> {
    let mut times = cfg.schedule.record_times();
    times.extend(cfg.schedule.snapshot_times.iter().copied());
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    times
}

fn run_master(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let (fock, ops, psi0) = quantum_setup(cfg)?;
    let g = ops.coupling;
    let floor = uncertainty_floor(&cfg.params)?;
    let opts = cfg.master_options();
    let rho0 = DensityMatrix::pure(&psi0);
    let times = record_and_snapshot_times(cfg);
    let run = integrate_master(&rho0, &ops, &cfg.params, &times, &cfg.schedule.snapshot_times, &opts)?;
    io::write_master(&out.path("master.csv".into()), &run, floor)?;

    let mut wigners = Vec::new();
    for (tau, rho) in &run.snapshots {
        io::write_snapshot(&out.path(format!("rho_tau{}.bin", tau_label(*tau))), rho.matrix())?;
        if let Some(spec) = &cfg.wigner {
            let rho_m = partial_trace_mech(rho.matrix(), &fock);
            wigners.push(write_wigner(spec, &rho_m, g, *tau, out)?);
        }
    }
    if let Some(a) = &cfg.autocorrelation {
        let lags = a.lags();
        let series = a
            .taus
            .iter()
            .map(|&tau| autocorrelation_regression(&rho0, &ops, &cfg.params, tau, &lags, a.samples_per_period, &opts))
            .collect::<Result<Vec<_>>>()?;
        io::write_autocorrelation(&out.path("autocorr.csv".into()), &series)?;
    }
    if let Some(s) = &cfg.stroboscope {
        let pts = stroboscopic_quantum(&run.times, &run.moments, s.period, s.offset)?;
        io::write_strobe(&out.path("strobe.csv".into()), &pts)?;
    }
    let max_trace_error = run.traces.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
    let max_hermiticity = run.hermiticity.iter().copied().fold(0.0, f64::max);
    Ok(json!({
        "fock": { "cavity": fock.cavity, "mech": fock.mech },
        "max_trace_error": max_trace_error,
        "max_hermiticity_error": max_hermiticity,
        "min_eigenvalues": run.min_eigenvalues,
        "wigner": wigners,
    }))
}

fn run_qsd(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let (fock, ops, psi0) = quantum_setup(cfg)?;
    let g = ops.coupling;
    let floor = uncertainty_floor(&cfg.params)?;
    let engine = QsdEngine::new(ops, &cfg.params);
    let ens = engine.run_ensemble(&psi0, cfg.ensemble.seed, cfg.ensemble.trajectories, &cfg.schedule)?;
    io::write_ensemble(&out.path("ensemble.csv".into()), &ens, floor)?;

    let mut strobe_radii = Vec::new();
    for rec in ens.records.iter().take(cfg.ensemble.trajectory_files) {
        io::write_trajectory(&out.path(format!("trajectory_{}.csv", rec.stream)), rec, floor)?;
        if let Some(s) = &cfg.stroboscope {
            let pts = stroboscopic_quantum(&rec.times, &rec.moments, s.period, s.offset)?;
            io::write_strobe(&out.path(format!("strobe_{}.csv", rec.stream)), &pts)?;
            strobe_radii.push(json!({ "trajectory": rec.stream, "mean_radius": strobe_radius(&pts) }));
        }
    }
    let mut wigners = Vec::new();
    for (tau, rho_m) in &ens.mean_reduced {
        io::write_snapshot(&out.path(format!("rho_mech_tau{}.bin", tau_label(*tau))), rho_m)?;
        if let Some(spec) = &cfg.wigner {
            wigners.push(write_wigner(spec, rho_m, g, *tau, out)?);
        }
    }
    if let Some(a) = &cfg.autocorrelation {
        let lags = a.lags();
        let xs: Vec<Vec<f64>> = ens.records.iter().map(|r| r.xs()).collect();
        let sx: Vec<Vec<f64>> = ens.records.iter().map(|r| r.sigma_xs()).collect();
        let samples: Vec<TrajectorySamples<'_>> = xs
            .iter()
            .zip(&sx)
            .map(|(x, s)| TrajectorySamples { x, sigma_x: s })
            .collect();
        let series = a
            .taus
            .iter()
            .map(|&tau| autocorrelation_trajectories(&ens.times, &samples, tau, &lags))
            .collect::<Result<Vec<_>>>()?;
        io::write_autocorrelation(&out.path("autocorr.csv".into()), &series)?;
    }
    let min_product = ens
        .records
        .iter()
        .flat_map(|r| r.moments.iter().map(|m| m.uncertainty_product()))
        .fold(f64::INFINITY, f64::min);
    let failures: Vec<Value> = ens
        .failures
        .iter()
        .map(|(k, msg)| json!({ "trajectory": k, "error": msg }))
        .collect();
    Ok(json!({
        "fock": { "cavity": fock.cavity, "mech": fock.mech },
        "trajectories": ens.records.len(),
        "requested": ens.requested,
        "failures": failures,
        "uncertainty_floor": floor,
        "min_uncertainty_product": min_product,
        "strobe": strobe_radii,
        "wigner": wigners,
    }))
}

/// Reads a manifest back, e.g. to compare runs.
pub fn read_manifest(dir: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest.json: {e}")))
}
