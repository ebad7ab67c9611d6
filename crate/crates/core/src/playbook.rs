//! Preset run configurations that regenerate the data behind each figure.
//!
//! Every figure id yields a `full` set (paper scale: long horizons, ≈3000
//! trajectories, large truncations) and a `desk` set with reduced horizons
//! and ensemble sizes that finishes on a workstation.
//!
//! The four parameter cases share `P = 1.5` and differ in detuning:
//! (a) `Δ = −0.4`, (b) `Δ = −1.1`, (c) `Δ = −0.85`, (d) `Δ = −0.7`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;

use crate::config::{AutocorrelationSpec, Engine, InitialKind, RunConfig, StroboscopeSpec, WignerSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::qsd::Schedule;

pub const FIGURE_IDS: [&str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

/// The four detuning cases.
pub const CASES: [(char, f64); 4] = [('a', -0.4), ('b', -1.1), ('c', -0.85), ('d', -0.7)];

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    /// File stem, e.g. `fig5-case-b`.
    pub name: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Playbook {
    pub figure: String,
    pub full: Vec<Preset>,
    pub desk: Vec<Preset>,
}

/// Presets for one figure id.
pub fn figure_playbook(id: &str) -> Result<Playbook> {
    let build = |desk: bool| -> Vec<Preset> {
        match id {
            "fig1" => fig1(desk),
            "fig2" => fig2(desk),
            "fig3" => fig3(desk),
            "fig4" => fig4(desk),
            "fig5" => fig5(desk),
            "fig6" => wigner_case_d(desk),
            "fig7" => fig7(desk),
            _ => unreachable!(),
        }
    };
    if !FIGURE_IDS.contains(&id) {
        return Err(Error::Config(format!(
            "unknown figure id {id:?}; available: {}",
            FIGURE_IDS.join(", ")
        )));
    }
    let tag = |mut v: Vec<Preset>, variant: &str| {
        for p in &mut v {
            p.config.output_dir = format!("out/{variant}/{}", p.name);
        }
        v
    };
    Ok(Playbook {
        figure: id.to_owned(),
        full: tag(build(false), "full"),
        desk: tag(build(true), "desk"),
    })
}

fn preset(name: String, config: RunConfig) -> Preset {
    Preset { name, config }
}

fn params(detuning: f64, sigma: f64) -> ModelParams {
    ModelParams::new(detuning, 1.5, sigma)
}

/// Quantum config starting from coherent states at the origin.
fn qsd(detuning: f64, sigma: f64, t_end: f64, dt: f64, record_every: f64, k: usize) -> RunConfig {
    let mut c = RunConfig::new(Engine::Qsd);
    c.params = params(detuning, sigma);
    c.schedule = Schedule::new(t_end, dt, (record_every / dt).round() as usize);
    c.ensemble.trajectories = k;
    c
}

fn classical(detuning: f64, t_end: f64, lyapunov: bool) -> RunConfig {
    let mut c = RunConfig::new(Engine::Classical);
    c.params = params(detuning, 0.0);
    c.classical.t_end = t_end;
    c.classical.lyapunov = lyapunov;
    c
}

fn fig1(desk: bool) -> Vec<Preset> {
    let mut chart = RunConfig::new(Engine::Chart);
    if desk {
        chart.chart.delta_points = 12;
        chart.chart.amp_points = 41;
    }
    let mut out = vec![preset("fig1-chart".into(), chart)];
    for (case, delta) in CASES {
        let mut c = classical(delta, if desk { 2000.0 } else { 4000.0 }, true);
        c.stroboscope = Some(StroboscopeSpec::default());
        out.push(preset(format!("fig1-case-{case}"), c));
    }
    out
}

fn fig2(desk: bool) -> Vec<Preset> {
    let (t_end, k) = if desk { (20.0, 100) } else { (300.0, 3000) };
    let mut cl = classical(-0.4, t_end, false);
    cl.classical.sample_dt = 0.05;
    let mut q = qsd(-0.4, 0.1, t_end, 1e-3, 0.05, k);
    q.fock.radius = Some(if desk { 2.2 } else { 3.4 });
    q.ensemble.trajectory_files = 4;
    vec![preset("fig2-classical".into(), cl), preset("fig2-qsd".into(), q)]
}

/// Ensemble with Wigner snapshots and autocorrelations, as for case (a).
fn wigner_ensemble(detuning: f64, sigma: f64, desk: bool) -> RunConfig {
    let (t_end, k, snaps, taus, lag_max) = if desk {
        (40.0, 16, vec![0.0, 10.0, 20.0, 30.0], vec![10.0, 20.0, 30.0], TAU)
    } else {
        (
            300.0,
            3000,
            vec![0.0, 20.0, 50.0, 100.0, 150.0, 200.0, 270.0],
            vec![20.0, 50.0, 100.0, 150.0, 200.0, 270.0],
            4.0 * TAU,
        )
    };
    let mut c = qsd(detuning, sigma, t_end, 1e-3, 0.1, k);
    c.schedule.snapshot_times = snaps;
    c.fock.radius = Some(if desk { 2.2 } else { 3.4 });
    c.wigner = Some(WignerSpec {
        x_min: Some(-4.0),
        x_max: Some(4.0),
        p_min: Some(-4.0),
        p_max: Some(4.0),
        x_points: 201,
        p_points: 201,
        ..WignerSpec::default()
    });
    c.autocorrelation = Some(AutocorrelationSpec {
        taus,
        lag_max,
        ..AutocorrelationSpec::default()
    });
    debug_assert!(t_end >= c.autocorrelation.as_ref().unwrap().taus.last().unwrap() + PI + lag_max);
    c
}

fn fig3(desk: bool) -> Vec<Preset> {
    vec![preset("fig3-case-a".into(), wigner_ensemble(-0.4, 0.1, desk))]
}

fn fig4(desk: bool) -> Vec<Preset> {
    let p = params(-0.4, 0.1);
    // cavity at its fixed point for a resting cantilever
    let alpha = C64::new(0.0, 0.5) / C64::new(-p.kappa, p.detuning);
    let t_end = if desk { 0.4 } else { 10.0 };
    let mut c = qsd(-0.4, 0.1, t_end, 1e-4, 1e-3, 1);
    c.initial.kind = InitialKind::Cat;
    c.initial.alpha = [alpha.re, alpha.im];
    c.initial.beta = [1.0, 0.0];
    c.fock.alpha_max = Some(alpha.norm());
    c.schedule.snapshot_times = vec![0.0, 0.001, 0.008, 0.4];
    c.wigner = Some(WignerSpec::default());
    vec![preset("fig4-cat".into(), c)]
}

fn fig5(desk: bool) -> Vec<Preset> {
    CASES
        .iter()
        .map(|&(case, delta)| {
            let (t_end, k) = if desk { (40.0, 1) } else { (300.0, 10) };
            let mut c = qsd(delta, 0.1, t_end, 1e-3, 0.01, k);
            c.fock.radius = Some(if desk { 2.2 } else { 3.4 });
            c.ensemble.trajectory_files = k;
            c.stroboscope = Some(StroboscopeSpec::default());
            preset(format!("fig5-case-{case}"), c)
        })
        .collect()
}

fn big(mut c: RunConfig, sigma: f64) -> RunConfig {
    if sigma < 0.1 {
        c.fock.max_dim = 4_000_000;
    }
    c
}

fn wigner_case_d(desk: bool) -> Vec<Preset> {
    [0.05, 0.1]
        .iter()
        .map(|&s| preset(format!("fig6-case-d-sigma{s}"), big(wigner_ensemble(-0.7, s, desk), s)))
        .collect()
}

fn fig7(desk: bool) -> Vec<Preset> {
    let mut out = wigner_case_d(desk);
    for p in &mut out {
        p.name = p.name.replace("fig6", "fig7");
        p.config.wigner = None;
        p.config.ensemble.trajectory_files = 4;
    }
    let mut cl = classical(-0.7, if desk { 40.0 } else { 300.0 }, false);
    cl.classical.sample_dt = 0.05;
    out.push(preset("fig7-classical".into(), cl));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for id in FIGURE_IDS {
            let pb = figure_playbook(id).unwrap();
            assert!(!pb.full.is_empty() && pb.full.len() == pb.desk.len(), "{id}");
            for p in pb.full.iter().chain(&pb.desk) {
                p.config.validate().unwrap_or_else(|e| panic!("{}: {e}", p.name));
                assert!(p.config.output_dir.ends_with(&p.name));
            }
        }
    }

    #[test]
    fn unknown_id_lists_available() {
        let msg = figure_playbook("fig9").unwrap_err().to_string();
        for id in FIGURE_IDS {
            assert!(msg.contains(id), "{msg}");
        }
    }

    #[test]
    fn documented_presets() {
        let f1 = figure_playbook("fig1").unwrap();
        let chart = &f1.full[0].config;
        assert_eq!(chart.engine, Engine::Chart);
        assert_eq!(chart.params.pump, 1.5);
        assert_eq!((chart.chart.delta_min, chart.chart.delta_max), (-1.3, -0.2));

        let f4 = figure_playbook("fig4").unwrap();
        let cat = &f4.desk[0].config;
        assert_eq!(cat.initial.kind, InitialKind::Cat);
        assert_eq!(cat.params.sigma, 0.1);
        assert_eq!(cat.params.detuning, -0.4);
        assert_eq!(cat.ensemble.trajectories, 1);

        let f5 = figure_playbook("fig5").unwrap();
        let deltas: Vec<f64> = f5.full.iter().map(|p| p.config.params.detuning).collect();
        assert_eq!(deltas, [-0.4, -1.1, -0.85, -0.7]);
        assert!(f5.full.iter().all(|p| p.config.params.sigma == 0.1));
    }

    #[test]
    fn desk_is_smaller() {
        for id in FIGURE_IDS {
            let pb = figure_playbook(id).unwrap();
            for (f, d) in pb.full.iter().zip(&pb.desk) {
                assert!(d.config.ensemble.trajectories <= f.config.ensemble.trajectories);
                assert!(d.config.schedule.t_end <= f.config.schedule.t_end);
            }
        }
    }
}
