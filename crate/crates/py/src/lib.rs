//! Python bindings. Results come back as dicts of plain lists so the module
//! has no numpy dependency; `numpy.asarray` on any field is cheap.

#![allow(clippy::too_many_arguments)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use optomech_core::classical::{self, BalanceOptions, ClassicalState, ClassifyOptions, LyapunovOptions};
use optomech_core::config::RunConfig;
use optomech_core::master::{self, DensityMatrix, MasterOptions};
use optomech_core::model::{self, FockConfig, OperatorSet};
use optomech_core::observables::{self, GridAxis, Moments};
use optomech_core::ode::Tolerances;
use optomech_core::qsd::{QsdEngine, QsdScheme, Schedule};
use optomech_core::{runner, Error, ErrorKind};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Config => PyValueError::new_err(msg),
        ErrorKind::Physics => PyRuntimeError::new_err(msg),
        ErrorKind::Numerical => PyArithmeticError::new_err(msg),
        ErrorKind::Io => PyOSError::new_err(msg),
    }
}

/// Dimensionless model parameters.
#[pyclass(name = "ModelParams", from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (detuning=-0.4, pump=1.5, sigma=0.1, kappa=0.5, gamma=5e-4))]
    fn new(detuning: f64, pump: f64, sigma: f64, kappa: f64, gamma: f64) -> PyResult<Self> {
        let inner = model::ModelParams {
            detuning,
            pump,
            sigma,
            kappa,
            gamma,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn detuning(&self) -> f64 {
        self.inner.detuning
    }
    #[getter]
    fn pump(&self) -> f64 {
        self.inner.pump
    }
    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    /// `g = 2σκ`.
    #[getter]
    fn coupling(&self) -> PyResult<f64> {
        Ok(self.inner.couplings().map_err(err)?.coupling)
    }

    /// `ε = √(P/8)/g`; fails for σ = 0.
    #[getter]
    fn drive(&self) -> PyResult<f64> {
        self.inner.couplings().and_then(|c| c.drive()).map_err(err)
    }

    /// Heisenberg floor `g²/2` of `σ_x σ_p`.
    #[getter]
    fn uncertainty_floor(&self) -> PyResult<f64> {
        observables::uncertainty_floor(&self.inner).map_err(err)
    }

    fn with_detuning(&self, detuning: f64) -> Self {
        Self {
            inner: self.inner.with_detuning(detuning),
        }
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(detuning={}, pump={}, sigma={}, kappa={}, gamma={})",
            p.detuning, p.pump, p.sigma, p.kappa, p.gamma
        )
    }
}

fn moments_dict<'py>(py: Python<'py>, times: &[f64], moments: &[Moments]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let col = |f: fn(&Moments) -> f64| moments.iter().map(f).collect::<Vec<f64>>();
    d.set_item("tau", times.to_vec())?;
    d.set_item("x", col(|m| m.x))?;
    d.set_item("p", col(|m| m.p))?;
    d.set_item("sigma_x", col(Moments::sigma_x))?;
    d.set_item("sigma_p", col(Moments::sigma_p))?;
    d.set_item("product", col(Moments::uncertainty_product))?;
    d.set_item("n_cav", col(|m| m.n_cav))?;
    d.set_item("n_mech", col(|m| m.n_mech))?;
    d.set_item("a", moments.iter().map(|m| m.a).collect::<Vec<C64>>())?;
    d.set_item("b", moments.iter().map(|m| m.b).collect::<Vec<C64>>())?;
    Ok(d)
}

fn matrix_rows(m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn operators(params: &PyModelParams, fock: (usize, usize)) -> PyResult<OperatorSet> {
    OperatorSet::from_params(&params.inner, FockConfig::new(fock.0, fock.1)).map_err(err)
}

/// Product coherent state with `⟨a⟩ = 2εα` and `⟨b⟩ = β/g` in classical units.
fn initial_state(ops: &OperatorSet, params: &PyModelParams, alpha: C64, beta: C64) -> PyResult<Vec<C64>> {
    let c = params.inner.couplings().map_err(err)?;
    let za = c.cavity_amplitude(alpha).map_err(err)?;
    let zb = c.mech_amplitude(beta).map_err(err)?;
    ops.coherent_product(za, zb).map_err(err)
}

fn parse_scheme(name: &str) -> PyResult<QsdScheme> {
    match name {
        "rk4-drift" => Ok(QsdScheme::Rk4Drift),
        "euler-maruyama" => Ok(QsdScheme::EulerMaruyama),
        other => Err(PyValueError::new_err(format!(
            "unknown scheme {other:?} (expected rk4-drift or euler-maruyama)"
        ))),
    }
}

/// Integrates the classical equations and samples every `sample_dt`.
#[pyfunction]
#[pyo3(signature = (params, t_end, sample_dt=0.05, alpha=C64::new(0.0, 0.0), beta=C64::new(0.0, 0.0), atol=1e-10, rtol=1e-9))]
fn integrate_classical<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    t_end: f64,
    sample_dt: f64,
    alpha: C64,
    beta: C64,
    atol: f64,
    rtol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = py
        .detach(|| {
            classical::integrate_classical(
                ClassicalState::new(alpha, beta),
                &params.inner,
                t_end,
                sample_dt,
                Tolerances::new(atol, rtol),
            )
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("tau", s.times.clone())?;
    d.set_item("alpha", s.states.iter().map(|z| z.alpha).collect::<Vec<C64>>())?;
    d.set_item("beta", s.states.iter().map(|z| z.beta).collect::<Vec<C64>>())?;
    d.set_item("x", s.xs())?;
    d.set_item("p", s.states.iter().map(ClassicalState::p).collect::<Vec<f64>>())?;
    Ok(d)
}

/// Classifies the attractor reached from the origin: fixed point, period-n or chaotic.
#[pyfunction]
#[pyo3(signature = (params, t_end=4000.0, transient_fraction=0.5))]
fn classify_attractor<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    t_end: f64,
    transient_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner;
    let (report, lyap) = py
        .detach(|| -> optomech_core::Result<_> {
            let tol = Tolerances::new(1e-10, 1e-9);
            let series =
                classical::integrate_classical(ClassicalState::origin(), &p, t_end, std::f64::consts::TAU / 32.0, tol)?;
            let transient = transient_fraction * t_end;
            let lopts = LyapunovOptions {
                transient,
                ..LyapunovOptions::default()
            };
            let lyap = classical::largest_lyapunov(&p, ClassicalState::origin(), t_end - transient, tol, &lopts)?;
            let copts = ClassifyOptions {
                transient_fraction,
                ..ClassifyOptions::default()
            };
            Ok((classical::classify_attractor(&series, &p, lyap.exponent, &copts)?, lyap))
        })
        .map_err(err)?;
    let (kind, period) = match report.kind {
        classical::AttractorKind::FixedPoint => ("fixed-point", None),
        classical::AttractorKind::Periodic(n) => ("periodic", Some(n)),
        classical::AttractorKind::Chaotic => ("chaotic", None),
        classical::AttractorKind::Unclassified => ("unclassified", None),
    };
    let d = PyDict::new(py);
    d.set_item("kind", kind)?;
    d.set_item("period", period)?;
    d.set_item("amplitude", report.amplitude)?;
    d.set_item("offset", report.offset)?;
    d.set_item("lyapunov", lyap.exponent)?;
    d.set_item("lyapunov_converged", lyap.converged)?;
    Ok(d)
}

/// Radiation power minus friction loss on the orbit of amplitude `amplitude`.
#[pyfunction]
fn power_balance<'py>(py: Python<'py>, amplitude: f64, params: &PyModelParams) -> PyResult<Bound<'py, PyDict>> {
    let b = py
        .detach(|| classical::power_balance(amplitude, &params.inner, &BalanceOptions::default()))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("amplitude", b.amplitude)?;
    d.set_item("radiation", b.radiation)?;
    d.set_item("friction", b.friction)?;
    d.set_item("offset", b.offset)?;
    d.set_item("net", b.net())?;
    Ok(d)
}

/// Net power on a detuning × amplitude grid and the stable amplitudes per detuning.
#[pyfunction]
fn amplitude_chart<'py>(
    py: Python<'py>,
    detunings: Vec<f64>,
    amplitudes: Vec<f64>,
    params: &PyModelParams,
) -> PyResult<Bound<'py, PyDict>> {
    let c = py
        .detach(|| classical::amplitude_chart(&detunings, &amplitudes, &params.inner, &BalanceOptions::default()))
        .map_err(err)?;
    let net: Vec<Vec<f64>> = (0..c.detunings.len())
        .map(|i| (0..c.amplitudes.len()).map(|j| c.net(i, j)).collect())
        .collect();
    let d = PyDict::new(py);
    d.set_item("detunings", c.detunings)?;
    d.set_item("amplitudes", c.amplitudes)?;
    d.set_item("net", net)?;
    d.set_item("branches", c.branches)?;
    Ok(d)
}

/// One quantum state diffusion trajectory from a coherent product state.
/// `snapshot_times` add reduced mechanical density matrices under `"snapshots"`.
#[pyfunction]
#[pyo3(signature = (params, fock, t_end, dt, record_stride=10, alpha=C64::new(0.0, 0.0), beta=C64::new(0.0, 0.0), seed=2014, stream=0, snapshot_times=vec![], scheme="rk4-drift", leak_threshold=1e-4))]
fn qsd_trajectory<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    fock: (usize, usize),
    t_end: f64,
    dt: f64,
    record_stride: usize,
    alpha: C64,
    beta: C64,
    seed: u64,
    stream: u64,
    snapshot_times: Vec<f64>,
    scheme: &str,
    leak_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let ops = operators(params, fock)?;
    let psi0 = initial_state(&ops, params, alpha, beta)?;
    let mut sched = Schedule::new(t_end, dt, record_stride);
    sched.scheme = parse_scheme(scheme)?;
    sched.leak_threshold = leak_threshold;
    sched.snapshot_times = snapshot_times;
    let engine = QsdEngine::new(ops, &params.inner);
    let rec = py
        .detach(|| engine.run_trajectory(&psi0, seed, stream, &sched))
        .map_err(err)?;
    let d = moments_dict(py, &rec.times, &rec.moments)?;
    let snaps: Vec<(f64, Vec<Vec<C64>>)> = rec.snapshots.iter().map(|(t, m)| (*t, matrix_rows(m))).collect();
    d.set_item("snapshots", snaps)?;
    Ok(d)
}

/// Ensemble of `trajectories` QSD runs; streams `0..trajectories` off one seed.
#[pyfunction]
#[pyo3(signature = (params, fock, t_end, dt, trajectories, record_stride=10, alpha=C64::new(0.0, 0.0), beta=C64::new(0.0, 0.0), seed=2014, scheme="rk4-drift", leak_threshold=1e-4))]
fn qsd_ensemble<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    fock: (usize, usize),
    t_end: f64,
    dt: f64,
    trajectories: usize,
    record_stride: usize,
    alpha: C64,
    beta: C64,
    seed: u64,
    scheme: &str,
    leak_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let ops = operators(params, fock)?;
    let psi0 = initial_state(&ops, params, alpha, beta)?;
    let mut sched = Schedule::new(t_end, dt, record_stride);
    sched.scheme = parse_scheme(scheme)?;
    sched.leak_threshold = leak_threshold;
    let engine = QsdEngine::new(ops, &params.inner);
    let ens = py
        .detach(|| engine.run_ensemble(&psi0, seed, trajectories, &sched))
        .map_err(err)?;
    let d = moments_dict(py, &ens.times, &ens.mean)?;
    d.set_item("x_stderr", ens.stderr.iter().map(|e| e.x).collect::<Vec<f64>>())?;
    d.set_item("p_stderr", ens.stderr.iter().map(|e| e.p).collect::<Vec<f64>>())?;
    d.set_item("n_cav_stderr", ens.stderr.iter().map(|e| e.n_cav).collect::<Vec<f64>>())?;
    d.set_item("completed", ens.records.len())?;
    d.set_item("failures", ens.failures.len())?;
    Ok(d)
}

/// Lindblad master equation from a coherent product state, recorded at `times`.
#[pyfunction]
#[pyo3(signature = (params, fock, times, alpha=C64::new(0.0, 0.0), beta=C64::new(0.0, 0.0), snapshot_times=vec![], leak_threshold=1e-4))]
fn master_equation<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    fock: (usize, usize),
    times: Vec<f64>,
    alpha: C64,
    beta: C64,
    snapshot_times: Vec<f64>,
    leak_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let ops = operators(params, fock)?;
    let psi0 = initial_state(&ops, params, alpha, beta)?;
    let opts = MasterOptions {
        leak_threshold,
        ..MasterOptions::default()
    };
    let run = py
        .detach(|| {
            master::integrate_master(&DensityMatrix::pure(&psi0), &ops, &params.inner, &times, &snapshot_times, &opts)
        })
        .map_err(err)?;
    let d = moments_dict(py, &run.times, &run.moments)?;
    d.set_item("trace", run.traces.clone())?;
    d.set_item("hermiticity", run.hermiticity.clone())?;
    let fock = ops.fock;
    let snaps: Vec<(f64, Vec<Vec<C64>>)> = run
        .snapshots
        .iter()
        .map(|(t, rho)| (*t, matrix_rows(&master::partial_trace_mech(rho.matrix(), &fock))))
        .collect();
    d.set_item("snapshots", snaps)?;
    Ok(d)
}

/// Wigner function of a mechanical density matrix (nested rows) on an
/// `x_points × p_points` grid. Bounds default to ±`extent` standard deviations
/// around the mean.
#[pyfunction]
#[pyo3(signature = (rho, coupling, x_range=None, p_range=None, points=121, extent=5.0))]
fn wigner<'py>(
    py: Python<'py>,
    rho: Vec<Vec<C64>>,
    coupling: f64,
    x_range: Option<(f64, f64)>,
    p_range: Option<(f64, f64)>,
    points: usize,
    extent: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let n = rho.len();
    if rho.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("rho must be square"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| rho[i][j]);
    let (mut xa, mut pa) = observables::covering_axes(&m, coupling, extent, points).map_err(err)?;
    if let Some((lo, hi)) = x_range {
        xa = GridAxis::new(lo, hi, points);
    }
    if let Some((lo, hi)) = p_range {
        pa = GridAxis::new(lo, hi, points);
    }
    let w = py.detach(|| observables::wigner(&m, coupling, &xa, &pa)).map_err(err)?;
    let rows: Vec<Vec<f64>> = (0..w.x.len()).map(|i| (0..w.p.len()).map(|j| w.at(i, j)).collect()).collect();
    let d = PyDict::new(py);
    d.set_item("integral", w.integral())?;
    d.set_item("x", w.x)?;
    d.set_item("p", w.p)?;
    d.set_item("values", rows)?;
    Ok(d)
}

/// Runs a TOML run configuration (same format as the command line tool) and
/// returns the run summary with the list of files written.
#[pyfunction]
#[pyo3(signature = (toml_text, output_dir=None))]
fn run_config<'py>(py: Python<'py>, toml_text: &str, output_dir: Option<String>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = RunConfig::parse(toml_text).map_err(err)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    cfg.validate().map_err(err)?;
    let report = py.detach(|| runner::run(&cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("output_dir", report.output_dir.to_string_lossy().into_owned())?;
    d.set_item("files", report.files)?;
    d.set_item("summary", report.summary.to_string())?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "optomech")]
fn optomech(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_function(wrap_pyfunction!(integrate_classical, m)?)?;
    m.add_function(wrap_pyfunction!(classify_attractor, m)?)?;
    m.add_function(wrap_pyfunction!(power_balance, m)?)?;
    m.add_function(wrap_pyfunction!(amplitude_chart, m)?)?;
    m.add_function(wrap_pyfunction!(qsd_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(qsd_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(master_equation, m)?)?;
    m.add_function(wrap_pyfunction!(wigner, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
