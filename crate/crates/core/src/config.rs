//! TOML run configurations.
//!
//! A config names an engine and carries flat sections; every key is optional
//! except `engine`, and unknown keys are rejected.
//!
//! ```toml
//! engine = "qsd"            # classical | master | qsd | chart
//! output_dir = "out/fig4"
//!
//! [params]                  # detuning, pump, sigma, kappa, gamma
//! sigma = 0.1
//!
//! [fock]                    # cavity, mech, alpha_max, radius, margin, tail, max_dim, dense_threshold
//! [initial]                 # kind = "coherent" | "cat", alpha, beta, beta2 as [re, im]
//! [schedule]                # t_end, dt, record_stride, snapshot_times, scheme, max_dt, leak_threshold, norm_floor
//! [ensemble]                # trajectories, seed, trajectory_files
//! [master]                  # atol, rtol, hermiticity_tol
//! [wigner]                  # x_min, x_max, x_points, p_min, p_max, p_points, extent
//! [autocorrelation]         # taus, lag_max, lag_step, samples_per_period
//! [stroboscope]             # period, offset
//! [chart]                   # delta_min, delta_max, delta_points, amp_min, amp_max, amp_points, steps_per_period
//! [classical]               # t_end, sample_dt, atol, rtol, transient_fraction, cluster_tol, lyapunov_threshold, lyapunov
//! ```
//!
//! Initial amplitudes are given in classical scaling: the quantum engines
//! start from coherent states at `⟨a⟩ = 2εα` and `⟨b⟩ = β/g`.

use std::f64::consts::{SQRT_2, TAU};
use std::path::PathBuf;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::classical::{BalanceOptions, ClassicalState, ClassifyOptions};
use crate::error::{Error, Result};
use crate::master::MasterOptions;
use crate::model::{cat_state, coherent_state, product_state, FockConfig, ModelParams};
use crate::observables::{GridAxis, MIN_SAMPLES_PER_PERIOD};
use crate::ode::Tolerances;
use crate::qsd::Schedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Classical,
    Master,
    Qsd,
    Chart,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Classical => "classical",
            Engine::Master => "master",
            Engine::Qsd => "qsd",
            Engine::Chart => "chart",
        }
    }
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub engine: Engine,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub fock: FockSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub master: MasterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wigner: Option<WignerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub autocorrelation: Option<AutocorrelationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stroboscope: Option<StroboscopeSpec>,
    #[serde(default)]
    pub chart: ChartSpec,
    #[serde(default)]
    pub classical: ClassicalSpec,
}

/// Truncation: explicit level counts, or automatic from expected amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mech: Option<usize>,
    /// Largest expected `|α|`; defaults to the larger of the initial `|α|` and
    /// the cavity bound `1/(2κ̄)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
    /// Largest expected phase-space radius `√(x² + p²)`; defaults to the
    /// initial radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Extra amplitude (in `⟨a⟩`, `⟨b⟩` units) added before sizing.
    pub margin: f64,
    /// Poisson tail mass allowed beyond the top level.
    pub tail: f64,
    pub max_dim: usize,
    pub dense_threshold: usize,
}

impl Default for FockSpec {
    fn default() -> Self {
        let f = FockConfig::default();
        Self {
            cavity: None,
            mech: None,
            alpha_max: None,
            radius: None,
            margin: 3.0,
            tail: 1e-6,
            max_dim: f.max_dim,
            dense_threshold: f.dense_threshold,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    Coherent,
    /// Cavity coherent at `alpha`, cantilever in `|β⟩ + |β₂⟩` (normalized).
    Cat,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    /// Second cat component; defaults to `−β`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<[f64; 2]>,
}

impl InitialSpec {
    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha[0], self.alpha[1])
    }

    pub fn beta(&self) -> C64 {
        C64::new(self.beta[0], self.beta[1])
    }

    pub fn beta2(&self) -> C64 {
        self.beta2.map_or(-self.beta(), |b| C64::new(b[0], b[1]))
    }

    pub fn classical(&self) -> ClassicalState {
        ClassicalState::new(self.alpha(), self.beta())
    }

    /// Largest phase-space radius among the mechanical components.
    fn radius(&self) -> f64 {
        let r = SQRT_2 * self.beta().norm();
        match self.kind {
            InitialKind::Coherent => r,
            InitialKind::Cat => r.max(SQRT_2 * self.beta2().norm()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    pub trajectories: usize,
    /// Base seed; trajectory `k` draws from stream `k` of this seed.
    pub seed: u64,
    /// Number of per-trajectory CSV files written (the first ones).
    pub trajectory_files: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            trajectories: 1,
            seed: 2014,
            trajectory_files: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MasterSpec {
    pub atol: f64,
    pub rtol: f64,
    pub hermiticity_tol: f64,
}

impl Default for MasterSpec {
    fn default() -> Self {
        let m = MasterOptions::default();
        Self {
            atol: m.tolerances.atol,
            rtol: m.tolerances.rtol,
            hermiticity_tol: m.hermiticity_tol,
        }
    }
}

/// Wigner grid in scaled units. Without explicit bounds the grid is centred
/// on the state and spans `extent` standard deviations plus one vacuum width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WignerSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    pub x_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    pub p_points: usize,
    pub extent: f64,
}

impl Default for WignerSpec {
    fn default() -> Self {
        Self {
            x_min: None,
            x_max: None,
            x_points: 121,
            p_min: None,
            p_max: None,
            p_points: 121,
            extent: 5.0,
        }
    }
}

impl WignerSpec {
    /// Explicit axes, or `None` for automatic covering.
    pub fn axes(&self) -> Result<Option<(GridAxis, GridAxis)>> {
        match (self.x_min, self.x_max, self.p_min, self.p_max) {
            (None, None, None, None) => Ok(None),
            (Some(x0), Some(x1), Some(p0), Some(p1)) => Ok(Some((
                GridAxis::new(x0, x1, self.x_points),
                GridAxis::new(p0, p1, self.p_points),
            ))),
            _ => Err(Error::Config(
                "wigner: give all of x_min, x_max, p_min, p_max or none of them".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutocorrelationSpec {
    /// Window centres `τ`.
    pub taus: Vec<f64>,
    pub lag_max: f64,
    pub lag_step: f64,
    /// Window quadrature nodes per period for the master regression estimator.
    pub samples_per_period: usize,
}

impl Default for AutocorrelationSpec {
    fn default() -> Self {
        Self {
            taus: Vec::new(),
            lag_max: 4.0 * TAU,
            lag_step: TAU / 32.0,
            samples_per_period: 64,
        }
    }
}

impl AutocorrelationSpec {
    pub fn lags(&self) -> Vec<f64> {
        let n = (self.lag_max / self.lag_step + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.lag_step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StroboscopeSpec {
    pub period: f64,
    pub offset: f64,
}

impl Default for StroboscopeSpec {
    fn default() -> Self {
        Self { period: TAU, offset: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartSpec {
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_points: usize,
    pub amp_min: f64,
    pub amp_max: f64,
    pub amp_points: usize,
    /// RK4 steps per period for the periodic cavity response.
    pub steps_per_period: usize,
}

impl Default for ChartSpec {
    fn default() -> Self {
        Self {
            delta_min: -1.3,
            delta_max: -0.2,
            delta_points: 45,
            amp_min: 0.0,
            amp_max: 4.0,
            amp_points: 81,
            steps_per_period: BalanceOptions::default().steps_per_period,
        }
    }
}

impl ChartSpec {
    pub fn axes(&self) -> (Vec<f64>, Vec<f64>) {
        (
            GridAxis::new(self.delta_min, self.delta_max, self.delta_points).values(),
            GridAxis::new(self.amp_min, self.amp_max, self.amp_points).values(),
        )
    }

    pub fn balance_options(&self) -> BalanceOptions {
        BalanceOptions {
            steps_per_period: self.steps_per_period,
            ..BalanceOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalSpec {
    pub t_end: f64,
    pub sample_dt: f64,
    pub atol: f64,
    pub rtol: f64,
    pub transient_fraction: f64,
    pub cluster_tol: f64,
    pub lyapunov_threshold: f64,
    /// Estimate the largest Lyapunov exponent (needed to flag chaos).
    pub lyapunov: bool,
}

impl Default for ClassicalSpec {
    fn default() -> Self {
        let c = ClassifyOptions::default();
        Self {
            t_end: 4000.0,
            sample_dt: TAU / 32.0,
            atol: 1e-10,
            rtol: 1e-9,
            transient_fraction: c.transient_fraction,
            cluster_tol: c.cluster_tol,
            lyapunov_threshold: c.lyapunov_threshold,
            lyapunov: true,
        }
    }
}

impl ClassicalSpec {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.atol, self.rtol)
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            transient_fraction: self.transient_fraction,
            cluster_tol: self.cluster_tol,
            lyapunov_threshold: self.lyapunov_threshold,
            ..ClassifyOptions::default()
        }
    }
}

fn config_err(what: impl std::fmt::Display) -> Error {
    Error::Config(what.to_string())
}

impl RunConfig {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            output_dir: default_output_dir(),
            params: ModelParams::default(),
            fock: FockSpec::default(),
            initial: InitialSpec::default(),
            schedule: Schedule::default(),
            ensemble: EnsembleSpec::default(),
            master: MasterSpec::default(),
            wigner: None,
            autocorrelation: None,
            stroboscope: None,
            chart: ChartSpec::default(),
            classical: ClassicalSpec::default(),
        }
    }

    /// Parses and validates a TOML document. Syntax and type errors carry
    /// line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML with all defaults written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn output_path(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.ensemble.seed > i64::MAX as u64 {
            return Err(config_err("ensemble.seed must fit in a signed 64-bit integer"));
        }
        if let Some(w) = &self.wigner {
            w.axes()?;
            if w.x_points < 2 || w.p_points < 2 || !(w.extent > 0.0) {
                return Err(config_err("wigner: need at least 2 points per axis and extent > 0"));
            }
        }
        if let Some(s) = &self.stroboscope {
            if !(s.period > 0.0) {
                return Err(config_err("stroboscope.period must be > 0"));
            }
        }
        match self.engine {
            Engine::Chart => {
                let c = &self.chart;
                if c.delta_points < 2 || c.amp_points < 2 || c.delta_min >= c.delta_max || c.amp_min >= c.amp_max {
                    return Err(config_err("chart: need increasing bounds and at least 2 points per axis"));
                }
                if c.amp_min < 0.0 {
                    return Err(config_err("chart.amp_min must be >= 0"));
                }
            }
            Engine::Classical => {
                let c = &self.classical;
                if !(c.t_end > 0.0 && c.sample_dt > 0.0 && c.atol > 0.0 && c.rtol > 0.0) {
                    return Err(config_err("classical: t_end, sample_dt, atol, rtol must be > 0"));
                }
                if !(0.0..1.0).contains(&c.transient_fraction) {
                    return Err(config_err("classical.transient_fraction must lie in [0, 1)"));
                }
                if self.initial.kind == InitialKind::Cat {
                    return Err(config_err("the classical engine has no cat initial state"));
                }
            }
            Engine::Master | Engine::Qsd => {
                if !(self.params.sigma > 0.0) {
                    return Err(config_err(format!(
                        "the {} engine needs sigma > 0",
                        self.engine.name()
                    )));
                }
                self.schedule.validate()?;
                self.fock_config()?.validate()?;
                if self.engine == Engine::Qsd && self.ensemble.trajectories == 0 {
                    return Err(config_err("ensemble.trajectories must be >= 1"));
                }
                if self.initial.kind == InitialKind::Cat && self.initial.beta() == self.initial.beta2() {
                    return Err(config_err("cat components beta and beta2 coincide"));
                }
                if let Some(a) = &self.autocorrelation {
                    if !(a.lag_step > 0.0 && a.lag_max >= 0.0) {
                        return Err(config_err("autocorrelation: lag_step must be > 0 and lag_max >= 0"));
                    }
                    if (a.samples_per_period as f64) < MIN_SAMPLES_PER_PERIOD {
                        return Err(config_err(format!(
                            "autocorrelation.samples_per_period must be >= {MIN_SAMPLES_PER_PERIOD}"
                        )));
                    }
                    for &tau in &a.taus {
                        if tau < std::f64::consts::PI || tau + std::f64::consts::PI + a.lag_max > self.schedule.t_end + 1e-9 {
                            return Err(config_err(format!(
                                "autocorrelation window around tau = {tau} with lag_max = {} leaves [0, t_end]",
                                a.lag_max
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolved truncation for the quantum engines.
    pub fn fock_config(&self) -> Result<FockConfig> {
        let spec = &self.fock;
        let couplings = self.params.couplings()?;
        let g = couplings.coupling;
        let two_eps = 2.0 * couplings.drive()?;
        let alpha_max = spec
            .alpha_max
            .unwrap_or_else(|| self.initial.alpha().norm().max(0.5 / self.params.kappa));
        let radius = spec.radius.unwrap_or_else(|| self.initial.radius());
        let auto = FockConfig::for_amplitudes(
            two_eps * alpha_max + spec.margin,
            radius / (SQRT_2 * g) + spec.margin,
            spec.tail,
        );
        Ok(FockConfig {
            cavity: spec.cavity.unwrap_or(auto.cavity),
            mech: spec.mech.unwrap_or(auto.mech),
            max_dim: spec.max_dim,
            dense_threshold: spec.dense_threshold,
        })
    }

    /// Initial product-space state for the quantum engines.
    pub fn initial_state(&self, fock: &FockConfig) -> Result<Vec<num_complex::Complex64>> {
        let c = self.params.couplings()?;
        let cav = coherent_state(c.cavity_amplitude(self.initial.alpha())?, fock.cavity)?;
        let mech = match self.initial.kind {
            InitialKind::Coherent => coherent_state(c.mech_amplitude(self.initial.beta())?, fock.mech)?,
            InitialKind::Cat => cat_state(
                c.mech_amplitude(self.initial.beta())?,
                c.mech_amplitude(self.initial.beta2())?,
                fock.mech,
            )?,
        };
        Ok(product_state(&cav, &mech))
    }

    pub fn master_options(&self) -> MasterOptions {
        MasterOptions {
            tolerances: Tolerances::new(self.master.atol, self.master.rtol),
            leak_threshold: self.schedule.leak_threshold,
            hermiticity_tol: self.master.hermiticity_tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsd::QsdScheme;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse("engine = \"classical\"\n[params]\ndetuning = -0.4\n").unwrap();
        assert_eq!(cfg.engine, Engine::Classical);
        assert_eq!(cfg.params.pump, 1.5);
        assert_eq!(cfg.params.kappa, 0.5);
        assert_eq!(cfg.params.gamma, 5e-4);
        assert_eq!(cfg.output_dir, "out");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("engine = \"classical\"\n[params]\nsigmaa = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigmaa"), "{msg}");
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::parse("engine = \"qsd\"\nthreads = 4\n").unwrap_err();
        assert!(err.to_string().contains("threads"));
    }

    #[test]
    fn type_errors_carry_line_numbers() {
        let err = RunConfig::parse("engine = \"qsd\"\n\n[params]\nsigma = \"big\"\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn physics_ranges_rejected() {
        for text in [
            "engine = \"chart\"\n[params]\nkappa = 0.0\n",
            "engine = \"chart\"\n[params]\npump = -1.0\n",
            "engine = \"qsd\"\n[params]\nsigma = 0.0\n",
            "engine = \"qsd\"\n[params]\nsigma = 1.0\n[schedule]\ndt = 0.1\n",
            "engine = \"classical\"\n[initial]\nkind = \"cat\"\n",
            "engine = \"tachyon\"\n",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn automatic_truncation_covers_initial_cat() {
        let mut cfg = RunConfig::new(Engine::Qsd);
        cfg.params.sigma = 0.1;
        cfg.initial.kind = InitialKind::Cat;
        cfg.initial.beta = [1.0, 0.0];
        cfg.fock.alpha_max = Some(0.0);
        let f = cfg.fock_config().unwrap();
        // |⟨b⟩| = 10 plus the margin.
        assert_eq!(f.mech, crate::model::levels_for_tail(13.0, 1e-6));
        assert_eq!(f.cavity, crate::model::levels_for_tail(3.0, 1e-6));
        cfg.fock.mech = Some(40);
        assert_eq!(cfg.fock_config().unwrap().mech, 40);
    }

    #[test]
    fn partial_wigner_bounds_rejected() {
        let mut cfg = RunConfig::new(Engine::Chart);
        cfg.wigner = Some(WignerSpec {
            x_min: Some(-1.0),
            ..WignerSpec::default()
        });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn autocorrelation_window_must_fit() {
        let mut cfg = RunConfig::new(Engine::Qsd);
        cfg.params.sigma = 1.0;
        cfg.fock.cavity = Some(4);
        cfg.fock.mech = Some(4);
        cfg.schedule = Schedule::new(20.0, 0.005, 10);
        cfg.autocorrelation = Some(AutocorrelationSpec {
            taus: vec![10.0],
            lag_max: 6.0,
            ..AutocorrelationSpec::default()
        });
        cfg.validate().unwrap();
        cfg.autocorrelation.as_mut().unwrap().lag_max = 8.0;
        assert!(cfg.validate().is_err());
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop_oneof![Just(Engine::Classical), Just(Engine::Chart), Just(Engine::Qsd), Just(Engine::Master)],
            -1.3f64..-0.2,
            0.0f64..3.0,
            0.05f64..1.0,
            0u64..(i64::MAX as u64),
            1usize..5000,
            prop::collection::vec(0.0f64..1.0, 0..4),
            any::<bool>(),
            prop::option::of((-5.0f64..0.0, 0.1f64..5.0)),
        )
            .prop_map(|(engine, detuning, pump, sigma, seed, k, snaps, rk, grid)| {
                let mut c = RunConfig::new(engine);
                c.output_dir = format!("out/{}", engine.name());
                c.params = ModelParams::new(detuning, pump, sigma);
                c.fock.cavity = Some(4);
                c.fock.mech = Some(5);
                c.schedule = Schedule::new(1.0, 0.005, 10);
                c.schedule.snapshot_times = snaps;
                c.schedule.scheme = if rk { QsdScheme::Rk4Drift } else { QsdScheme::EulerMaruyama };
                c.ensemble.seed = seed;
                c.ensemble.trajectories = k;
                c.initial.beta = [detuning, pump];
                if let Some((lo, hi)) = grid {
                    c.wigner = Some(WignerSpec {
                        x_min: Some(lo),
                        x_max: Some(hi),
                        p_min: Some(lo),
                        p_max: Some(hi),
                        ..WignerSpec::default()
                    });
                    c.stroboscope = Some(StroboscopeSpec::default());
                }
                c
            })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(cfg in arb_config()) {
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
