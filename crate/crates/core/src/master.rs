//! Lindblad master equation on the truncated two-mode space.
//!
//! Evolves `∂τρ = −i[H, ρ] + 2Γ̄ D[b]ρ + 2κ̄ D[a]ρ` with
//! `D[L]ρ = LρL† − ½(L†Lρ + ρL†L)`. The engine is meant as an exact
//! reference for small truncations; memory grows as `(N_cav·N_mech)²`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FockConfig, ModelParams, OperatorSet};
use crate::observables::Moments;
use crate::ode::{Dopri5, Tolerances};
use crate::sparse::{max_abs, CsrMatrix, Operator};

/// Hermitian, unit-trace operator on the product space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(DMatrix<C64>);

impl DensityMatrix {
    /// Wraps a matrix, checking shape, Hermiticity and trace.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!("density matrix is {}x{}", m.nrows(), m.ncols())));
        }
        let rho = Self(m);
        if rho.hermiticity_error() > 1e-10 {
            return Err(Error::NonHermitian);
        }
        if (rho.trace() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!("density matrix trace {} != 1", rho.trace())));
        }
        Ok(rho)
    }

    /// `|ψ⟩⟨ψ|` for a normalized state.
    pub fn pure(psi: &[C64]) -> Self {
        let n = psi.len();
        Self(DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()))
    }

    pub fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.0 - self.0.adjoint()))
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Top-level populations `(cavity, mechanical)`.
    pub fn top_populations(&self, fock: &FockConfig) -> (f64, f64) {
        let diag = |i: usize| self.0[(i, i)].re;
        let cav = (0..fock.mech).map(|m| diag(fock.index(fock.cavity - 1, m))).sum();
        let mech = (0..fock.cavity).map(|c| diag(fock.index(c, fock.mech - 1))).sum();
        (cav, mech)
    }
}

/// `tr(ρO)` for any operator.
pub fn expectation(rho: &DMatrix<C64>, op: &Operator) -> C64 {
    trace_product(rho, &op.as_csr())
}

fn trace_product(rho: &DMatrix<C64>, op: &CsrMatrix) -> C64 {
    // tr(ρO) = Σ_r Σ_c O_rc ρ_cr
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..op.rows() {
        for (c, v) in op.row(r) {
            acc += v * rho[(c, r)];
        }
    }
    acc
}

/// Standard deviation `(⟨O²⟩ − ⟨O⟩²)^{1/2}` of a Hermitian operator.
pub fn uncertainty(rho: &DMatrix<C64>, op: &Operator) -> Result<f64> {
    if !op.is_hermitian(1e-12) {
        return Err(Error::NonHermitian);
    }
    let csr = op.to_csr();
    let mean = trace_product(rho, &csr).re;
    let second = trace_product(rho, &csr.matmul(&csr)).re;
    clip_variance(second - mean * mean).map(f64::sqrt)
}

/// Clips round-off negative variances; larger negative values are an error.
pub(crate) fn clip_variance(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -1e-12 {
        Ok(0.0)
    } else {
        Err(Error::NoConvergence {
            what: "variance (negative beyond round-off)",
            iterations: 0,
        })
    }
}

/// Moments of the mechanical quadratures and mode populations.
pub fn density_moments(rho: &DMatrix<C64>, ops: &OperatorSet) -> Moments {
    Moments {
        x: expectation(rho, &ops.x).re,
        p: expectation(rho, &ops.p).re,
        x2: expectation(rho, &ops.x2).re,
        p2: expectation(rho, &ops.p2).re,
        n_cav: expectation(rho, &ops.n_cav).re,
        n_mech: expectation(rho, &ops.n_mech).re,
        a: expectation(rho, &ops.a),
        b: expectation(rho, &ops.b),
    }
}

/// Reduced mechanical state `Tr_cav ρ`.
pub fn partial_trace_mech(rho: &DMatrix<C64>, fock: &FockConfig) -> DMatrix<C64> {
    let nm = fock.mech;
    DMatrix::from_fn(nm, nm, |i, j| {
        (0..fock.cavity).map(|c| rho[(fock.index(c, i), fock.index(c, j))]).sum()
    })
}

/// Reduced mechanical state of a pure product-space vector.
pub fn reduced_mech_pure(psi: &[C64], fock: &FockConfig) -> DMatrix<C64> {
    let nm = fock.mech;
    let mut out = DMatrix::zeros(nm, nm);
    for c in 0..fock.cavity {
        let block = &psi[c * nm..(c + 1) * nm];
        for j in 0..nm {
            let bj = block[j].conj();
            if bj == C64::new(0.0, 0.0) {
                continue;
            }
            let mut col = out.column_mut(j);
            for (o, bi) in col.iter_mut().zip(block) {
                *o += bi * bj;
            }
        }
    }
    out
}

/// The Lindblad generator with precomputed effective operators.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    /// `K = −iH − ½ Σ L†L`
    effective: Operator,
    effective_adj: Operator,
    jumps: Vec<(Operator, Operator)>,
}

impl Liouvillian {
    pub fn new(ops: &OperatorSet, params: &ModelParams) -> Self {
        let rates = [(2.0 * params.kappa, &ops.a), (2.0 * params.gamma, &ops.b)];
        Self::with_channels(ops, &rates)
    }

    /// Generator with an explicit list of `(rate, L)` channels.
    pub fn with_channels(ops: &OperatorSet, channels: &[(f64, &Operator)]) -> Self {
        let t = ops.fock.dense_threshold;
        let minus_i = C64::new(0.0, -1.0);
        let mut k = ops.hamiltonian.to_csr().scale(minus_i);
        let mut jumps = Vec::new();
        for &(rate, l) in channels {
            let l = l.to_csr().scale(C64::new(rate.sqrt(), 0.0));
            let ld = l.adjoint();
            k = k.add(&ld.matmul(&l), C64::new(1.0, 0.0), C64::new(-0.5, 0.0));
            jumps.push((Operator::with_threshold(l, t), Operator::with_threshold(ld, t)));
        }
        let kd = k.adjoint();
        Self {
            effective: Operator::with_threshold(k, t),
            effective_adj: Operator::with_threshold(kd, t),
            jumps,
        }
    }

    /// `L(ρ) = Kρ + ρK† + Σ LρL†`; linear, so it also propagates non-Hermitian seeds.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = self.effective.left_mul(rho);
        out += self.effective_adj.right_mul(rho);
        for (l, ld) in &self.jumps {
            out += l.left_mul(&ld.right_mul(rho));
        }
        out
    }
}

/// Right-hand side of the dimensionless master equation.
pub fn lindblad_rhs(rho: &DMatrix<C64>, ops: &OperatorSet, params: &ModelParams) -> DMatrix<C64> {
    Liouvillian::new(ops, params).apply(rho)
}

/// `D[L]ρ = LρL† − ½(L†Lρ + ρL†L)`.
pub fn dissipator(l: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let ld = l.adjoint();
    let ldl = &ld * l;
    l * rho * &ld - (&ldl * rho + rho * &ldl) * C64::new(0.5, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MasterOptions {
    pub tolerances: Tolerances,
    /// Abort when a top Fock level holds more than this population.
    pub leak_threshold: f64,
    /// Abort when Hermiticity drifts beyond this.
    pub hermiticity_tol: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::new(1e-12, 1e-9),
            leak_threshold: 1e-4,
            hermiticity_tol: 1e-10,
        }
    }
}

/// Output of [`integrate_master`].
#[derive(Clone, Debug)]
pub struct MasterRun {
    pub times: Vec<f64>,
    pub moments: Vec<Moments>,
    pub traces: Vec<f64>,
    pub hermiticity: Vec<f64>,
    /// Full states at the requested snapshot times (those present in `times`).
    pub snapshots: Vec<(f64, DensityMatrix)>,
    /// Smallest eigenvalue at each snapshot.
    pub min_eigenvalues: Vec<f64>,
}

impl MasterRun {
    pub fn snapshot(&self, tau: f64) -> Option<&DensityMatrix> {
        self.snapshots
            .iter()
            .find(|(t, _)| (t - tau).abs() <= 1e-9 * tau.abs().max(1.0))
            .map(|(_, r)| r)
    }
}

fn check_leak(rho: &DensityMatrix, fock: &FockConfig, tau: f64, threshold: f64) -> Result<()> {
    let (cav, mech) = rho.top_populations(fock);
    if cav > threshold {
        return Err(Error::TruncationLeak {
            tau,
            mode: "cavity",
            population: cav,
        });
    }
    if mech > threshold {
        return Err(Error::TruncationLeak {
            tau,
            mode: "mechanical",
            population: mech,
        });
    }
    Ok(())
}

/// Integrates the master equation, recording moments at `times` (ascending,
/// starting at or after 0) and full states at any of `snapshot_times`.
pub fn integrate_master(
    rho0: &DensityMatrix,
    ops: &OperatorSet,
    params: &ModelParams,
    times: &[f64],
    snapshot_times: &[f64],
    opts: &MasterOptions,
) -> Result<MasterRun> {
    if rho0.dim() != ops.dim() {
        return Err(Error::Dimension(format!("state dim {} vs operators {}", rho0.dim(), ops.dim())));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("record times must be ascending and >= 0".into()));
    }
    let liouv = Liouvillian::new(ops, params);
    let mut rhs = |_t: f64, y: &DMatrix<C64>, dy: &mut DMatrix<C64>| *dy = liouv.apply(y);
    let mut stepper = Dopri5::new(0.0, rho0.matrix().clone(), opts.tolerances);
    let mut run = MasterRun {
        times: Vec::with_capacity(times.len()),
        moments: Vec::with_capacity(times.len()),
        traces: Vec::with_capacity(times.len()),
        hermiticity: Vec::with_capacity(times.len()),
        snapshots: Vec::new(),
        min_eigenvalues: Vec::new(),
    };
    for &t in times {
        stepper.advance_to(t, &mut rhs)?;
        let rho = DensityMatrix(stepper.state().clone());
        check_leak(&rho, &ops.fock, t, opts.leak_threshold)?;
        let herm = rho.hermiticity_error();
        if herm > opts.hermiticity_tol {
            return Err(Error::NonHermitian);
        }
        run.times.push(t);
        run.moments.push(density_moments(rho.matrix(), ops));
        run.traces.push(rho.trace());
        run.hermiticity.push(herm);
        if snapshot_times.iter().any(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0)) {
            run.min_eigenvalues.push(rho.min_eigenvalue());
            run.snapshots.push((t, rho));
        }
    }
    Ok(run)
}

/// Two-time correlator `⟨O(τ)O(τ+δτ)⟩` by quantum regression: the seed `Oρ(τ)`
/// is propagated with the same generator and `tr(O·seed(δτ))` returned at each lag.
pub fn two_time_correlation(
    rho_tau: &DMatrix<C64>,
    ops: &OperatorSet,
    params: &ModelParams,
    op: &Operator,
    lags: &[f64],
    opts: &MasterOptions,
) -> Result<Vec<C64>> {
    let seed = op.left_mul(rho_tau);
    propagate_seed(seed, ops, params, op, lags, opts)
}

/// Propagates an arbitrary seed matrix and returns `tr(O·seed(δτ))` per lag.
pub fn propagate_seed(
    seed: DMatrix<C64>,
    ops: &OperatorSet,
    params: &ModelParams,
    op: &Operator,
    lags: &[f64],
    opts: &MasterOptions,
) -> Result<Vec<C64>> {
    if lags.windows(2).any(|w| w[1] < w[0]) || lags.first().is_some_and(|&l| l < 0.0) {
        return Err(Error::InvalidParameter("lags must be ascending and >= 0".into()));
    }
    let liouv = Liouvillian::new(ops, params);
    let mut rhs = |_t: f64, y: &DMatrix<C64>, dy: &mut DMatrix<C64>| *dy = liouv.apply(y);
    // Seeds are not unit-trace; scale the absolute tolerance to the seed size.
    let scale = max_abs(&seed).max(1e-300);
    let mut tol = opts.tolerances;
    tol.atol *= scale;
    let mut stepper = Dopri5::new(0.0, seed, tol);
    let csr = op.to_csr();
    let mut out = Vec::with_capacity(lags.len());
    for &lag in lags {
        stepper.advance_to(lag, &mut rhs)?;
        out.push(trace_product(stepper.state(), &csr));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_operators, coherent_state, product_state};
    use proptest::prelude::*;

    fn vacuum(dim: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[0] = C64::new(1.0, 0.0);
        v
    }

    fn random_matrix(n: usize, seed: &[f64]) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| {
            let k = (i * n + j) % seed.len();
            C64::new(seed[k], seed[(k + 3) % seed.len()] * 0.7)
        })
    }

    #[test]
    fn undriven_vacuum_is_dark() {
        let p = ModelParams::new(-0.4, 0.0, 0.5);
        let ops = build_operators(FockConfig::new(3, 3), 0.5, 0.0, p.detuning).unwrap();
        let rho = DensityMatrix::pure(&vacuum(9));
        assert!(max_abs(&lindblad_rhs(rho.matrix(), &ops, &p)) < 1e-15);
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let run = integrate_master(&rho, &ops, &p, &times, &[10.0], &MasterOptions::default()).unwrap();
        let last = run.snapshot(10.0).unwrap();
        assert!(max_abs(&(last.matrix() - rho.matrix())) < 1e-14);
    }

    #[test]
    fn cavity_amplitude_decays_at_kappa() {
        // H = 0: only the cavity dissipator acts on a coherent cavity state.
        let fock = FockConfig::new(12, 2);
        let ops = build_operators(fock, 0.0, 0.0, 0.0).unwrap();
        let p = ModelParams {
            detuning: 0.0,
            pump: 0.0,
            sigma: 0.0,
            kappa: 0.5,
            gamma: 5e-4,
        };
        let zero = Operator::Sparse(CsrMatrix::from_triplets(24, 24, vec![]));
        let mut ops0 = ops.clone();
        ops0.hamiltonian = zero;
        let psi = product_state(
            &coherent_state(C64::new(1.0, 0.5), 12).unwrap(),
            &coherent_state(C64::new(0.0, 0.0), 2).unwrap(),
        );
        let rho = DensityMatrix::pure(&psi);
        let d = lindblad_rhs(rho.matrix(), &ops0, &p);
        let mean_a = expectation(rho.matrix(), &ops.a);
        let dmean = expectation(&d, &ops.a);
        assert!((dmean + p.kappa * mean_a).norm() < 1e-6, "{dmean} vs {}", -p.kappa * mean_a);
    }

    #[test]
    fn driven_cavity_reaches_classical_fixed_point() {
        // g = 0: ⟨a⟩ → 2ε·α* with α* = (i/2)/(iΔ − κ̄).
        let eps = 0.6;
        let p = ModelParams::new(-0.4, 0.0, 0.0);
        let fock = FockConfig::new(14, 2);
        let ops = build_operators(fock, 0.0, eps, p.detuning).unwrap();
        let rho = DensityMatrix::pure(&vacuum(fock.dim()));
        let run = integrate_master(&rho, &ops, &p, &[40.0], &[], &MasterOptions::default()).unwrap();
        let alpha = C64::new(0.0, 0.5) / C64::new(-p.kappa, p.detuning);
        let want = alpha * (2.0 * eps);
        assert!((run.moments[0].a - want).norm() < 1e-6, "{} vs {want}", run.moments[0].a);
    }

    #[test]
    fn vacuum_moments() {
        let g = 0.3;
        let ops = build_operators(FockConfig::new(2, 4), g, 1.0, 0.0).unwrap();
        let rho = DensityMatrix::pure(&vacuum(8));
        assert!(expectation(rho.matrix(), &ops.x).norm() < 1e-15);
        let s = uncertainty(rho.matrix(), &ops.x).unwrap();
        assert!((s - g / 2f64.sqrt()).abs() < 1e-14);
        assert!(matches!(uncertainty(rho.matrix(), &ops.a), Err(Error::NonHermitian)));
    }

    #[test]
    fn coherent_and_number_state_expectations() {
        let g = 0.2;
        let fock = FockConfig::new(2, 30);
        let ops = build_operators(fock, g, 1.0, 0.0).unwrap();
        let b0 = C64::new(1.2, -0.4);
        let psi = product_state(&vacuum(2), &coherent_state(b0, 30).unwrap());
        let rho = DensityMatrix::pure(&psi);
        let x = expectation(rho.matrix(), &ops.x).re;
        assert!((x - 2f64.sqrt() * g * b0.re).abs() < 1e-9);

        let mut one = vec![C64::new(0.0, 0.0); fock.dim()];
        one[fock.index(0, 1)] = C64::new(1.0, 0.0);
        let rho = DensityMatrix::pure(&one);
        assert_eq!(expectation(rho.matrix(), &ops.n_mech), C64::new(1.0, 0.0));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let fock = FockConfig::new(3, 4);
        let cav = coherent_state(C64::new(0.3, 0.1), 3).unwrap_or_else(|_| vec![
            C64::new(0.8, 0.0),
            C64::new(0.6, 0.0),
            C64::new(0.0, 0.0),
        ]);
        let mech = [C64::new(0.5, 0.0), C64::new(0.0, 0.5), C64::new(0.5, 0.0), C64::new(0.0, -0.5)];
        let psi = product_state(&cav, &mech);
        let norm: f64 = cav.iter().map(|c| c.norm_sqr()).sum();
        let rho_m = partial_trace_mech(DensityMatrix::pure(&psi).matrix(), &fock);
        let want = DMatrix::from_fn(4, 4, |i, j| mech[i] * mech[j].conj() * norm);
        assert!(max_abs(&(rho_m.clone() - want)) < 1e-14);
        assert!(max_abs(&(reduced_mech_pure(&psi, &fock) - rho_m)) < 1e-14);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let fock = FockConfig::new(2, 2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = vec![C64::new(0.0, 0.0); 4];
        psi[fock.index(0, 0)] = C64::new(s, 0.0);
        psi[fock.index(1, 1)] = C64::new(s, 0.0);
        let rho_m = partial_trace_mech(DensityMatrix::pure(&psi).matrix(), &fock);
        let half = DMatrix::from_diagonal_element(2, 2, C64::new(0.5, 0.0));
        assert!(max_abs(&(rho_m - half)) < 1e-15);
    }

    #[test]
    fn regression_at_zero_lag_is_second_moment() {
        let p = ModelParams::new(-0.4, 0.05, 1.0);
        let ops = OperatorSet::from_params(&p, FockConfig::new(4, 4)).unwrap();
        let psi = ops.coherent_product(C64::new(0.1, 0.0), C64::new(0.3, 0.2)).unwrap_or_else(|_| vacuum(16));
        let rho = DensityMatrix::pure(&psi);
        let c = two_time_correlation(rho.matrix(), &ops, &p, &ops.x, &[0.0], &MasterOptions::default()).unwrap();
        let x = expectation(rho.matrix(), &ops.x).re;
        let x2 = expectation(rho.matrix(), &ops.x2).re;
        assert!((c[0].re - x2).abs() < 1e-14);
        assert!(c[0].im.abs() < 1e-14);
        assert!(c[0].re >= x * x);
    }

    #[test]
    fn regression_damped_oscillator_closed_form() {
        // Free mechanical oscillator (no cavity drive or coupling), coherent init:
        // ⟨x(τ)x(τ+δ)⟩ = x̄(τ) x̄(τ+δ) + (g²/2) e^{−iδ − Γ̄δ}.
        let g = 0.5;
        let p = ModelParams {
            detuning: 0.0,
            pump: 0.0,
            sigma: 0.5,
            kappa: 0.5,
            gamma: 0.05,
        };
        let fock = FockConfig::new(2, 16);
        let ops = build_operators(fock, g, 0.0, 0.0).unwrap();
        let b0 = C64::new(1.0, 0.3);
        let psi = product_state(&vacuum(2), &coherent_state(b0, 16).unwrap());
        let rho = DensityMatrix::pure(&psi);
        let lags: Vec<f64> = (0..=20).map(|k| k as f64 * 0.3).collect();
        let c = two_time_correlation(rho.matrix(), &ops, &p, &ops.x, &lags, &MasterOptions::default()).unwrap();
        for (lag, val) in lags.iter().zip(&c) {
            let b_lag = b0 * C64::new(-p.gamma * lag, -lag).exp();
            let xbar = |b: C64| 2f64.sqrt() * g * b.re;
            let want = xbar(b0) * xbar(b_lag) + 0.5 * g * g * C64::new(-p.gamma * lag, -lag).exp();
            assert!((val - want).norm() < 1e-6, "lag {lag}: {val} vs {want}");
        }
    }

    #[test]
    fn leak_monitor_aborts() {
        let p = ModelParams::new(0.0, 1.5, 1.0);
        // Strong drive into a 3-level cavity overflows the top level.
        let ops = build_operators(FockConfig::new(3, 2), 0.0, 3.0, 0.0).unwrap();
        let rho = DensityMatrix::pure(&vacuum(6));
        let err = integrate_master(&rho, &ops, &p, &[1.0, 2.0], &[], &MasterOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TruncationLeak { mode: "cavity", .. }));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(DMatrix::from_element(2, 3, C64::new(0.0, 0.0))).is_err());
        let mut m = DMatrix::from_diagonal_element(2, 2, C64::new(0.5, 0.0));
        m[(0, 1)] = C64::new(0.1, 0.1);
        assert!(matches!(DensityMatrix::new(m.clone()), Err(Error::NonHermitian)));
        m[(1, 0)] = C64::new(0.1, -0.1);
        let rho = DensityMatrix::new(m).unwrap();
        assert!(rho.min_eigenvalue() > 0.0);
    }

    proptest! {
        #[test]
        fn dissipator_is_traceless(vals in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let n = 4;
            let l = random_matrix(n, &vals);
            let rho = random_matrix(n, &vals[3..]);
            let d = dissipator(&l, &rho);
            prop_assert!(d.trace().norm() < 1e-12);
        }

        #[test]
        fn lindblad_rhs_traceless(vals in proptest::collection::vec(-1.0f64..1.0, 12)) {
            let p = ModelParams::new(-0.4, 0.5, 0.7);
            let ops = OperatorSet::from_params(&p, FockConfig::new(3, 2)).unwrap();
            let a = random_matrix(6, &vals);
            let rho = (&a + a.adjoint()) * C64::new(0.5, 0.0);
            let d = lindblad_rhs(&rho, &ops, &p);
            prop_assert!(d.trace().norm() < 1e-12);
            // Hermiticity preserved
            prop_assert!(max_abs(&(&d - d.adjoint())) < 1e-12);
        }

        #[test]
        fn generator_matches_dense_construction(vals in proptest::collection::vec(-1.0f64..1.0, 10)) {
            let p = ModelParams::new(-0.85, 0.3, 0.4);
            let ops = OperatorSet::from_params(&p, FockConfig::new(3, 3)).unwrap();
            let rho = random_matrix(9, &vals);
            let h = ops.hamiltonian.to_dense();
            let i = C64::new(0.0, 1.0);
            let want = (&h * &rho - &rho * &h) * (-i)
                + dissipator(&ops.a.to_dense(), &rho) * C64::new(2.0 * p.kappa, 0.0)
                + dissipator(&ops.b.to_dense(), &rho) * C64::new(2.0 * p.gamma, 0.0);
            prop_assert!(max_abs(&(lindblad_rhs(&rho, &ops, &p) - want)) < 1e-12);
        }
    }
}
