//! Quantum state diffusion: stochastic pure-state trajectories whose projector
//! mean obeys the master equation.
//!
//! Each trajectory solves the Itô equation
//!
//! ```text
//! dψ = [−iH + Σ(⟨L⟩*L − ½L†L − ½|⟨L⟩|²)]ψ dτ + Σ(L − ⟨L⟩)ψ dξ
//! ```
//!
//! with `L₁ = √(2Γ̄)·b`, `L₂ = √(2κ̄)·a` and complex increments satisfying
//! `E[dξ dξ*] = dτ`, `E[dξ²] = 0`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::reduced_mech_pure;
use crate::model::{normalize, ModelParams, OperatorSet};
use crate::observables::Moments;
use crate::sparse::Operator;

/// Time discretization of the stochastic equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QsdScheme {
    /// Drift and noise evaluated at the start of the step.
    EulerMaruyama,
    /// Classical RK4 for the drift, Euler increment for the noise.
    #[default]
    Rk4Drift,
}

/// Default stability bound on the step, `10⁻³·2π`.
pub const DEFAULT_MAX_DT: f64 = 2e-3 * std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub t_end: f64,
    pub dt: f64,
    /// Record moments every this many steps (and at the final step).
    pub record_stride: usize,
    /// Times at which reduced mechanical states are kept.
    pub snapshot_times: Vec<f64>,
    pub scheme: QsdScheme,
    pub max_dt: f64,
    /// Abort when a top Fock level holds more than this population.
    pub leak_threshold: f64,
    /// Abort when the pre-renormalization norm drops below this.
    pub norm_floor: f64,
    /// Keep full product-space states at the snapshot times.
    pub store_states: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            dt: 1e-3,
            record_stride: 10,
            snapshot_times: Vec::new(),
            scheme: QsdScheme::default(),
            max_dt: DEFAULT_MAX_DT,
            leak_threshold: 1e-4,
            norm_floor: 1e-6,
            store_states: false,
        }
    }
}

impl Schedule {
    pub fn new(t_end: f64, dt: f64, record_stride: usize) -> Self {
        Self {
            t_end,
            dt,
            record_stride,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end = {} must be > 0", self.t_end)));
        }
        if !(self.dt > 0.0) || self.dt > self.max_dt * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} must lie in (0, {}]",
                self.dt, self.max_dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be >= 1".into()));
        }
        let n = self.t_end / self.dt;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end = {} is not a whole number of steps dt = {}",
                self.t_end, self.dt
            )));
        }
        for &s in &self.snapshot_times {
            if !(0.0..=self.t_end * (1.0 + 1e-12)).contains(&s) {
                return Err(Error::InvalidParameter(format!("snapshot time {s} outside [0, t_end]")));
            }
        }
        if !(self.leak_threshold > 0.0) || !(self.norm_floor > 0.0) {
            return Err(Error::InvalidParameter("leak_threshold and norm_floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn snapshot_steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.snapshot_times.iter().map(|t| (t / self.dt).round() as usize).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    fn is_record_step(&self, i: usize) -> bool {
        i.is_multiple_of(self.record_stride) || i == self.steps()
    }

    /// Recording times `i·dt`.
    pub fn record_times(&self) -> Vec<f64> {
        (0..=self.steps())
            .filter(|&i| self.is_record_step(i))
            .map(|i| i as f64 * self.dt)
            .collect()
    }
}

/// A trajectory in flight: state, clock and its private random stream.
#[derive(Clone, Debug)]
pub struct TrajectoryState {
    pub psi: Vec<C64>,
    pub tau: f64,
    pub seed: u64,
    pub stream: u64,
    rng: ChaCha8Rng,
}

impl TrajectoryState {
    /// Normalizes `psi` and opens stream `stream` of generator `seed`.
    pub fn new(mut psi: Vec<C64>, seed: u64, stream: u64) -> Result<Self> {
        if normalize(&mut psi) == 0.0 {
            return Err(Error::InvalidParameter("initial state has zero norm".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            psi,
            tau: 0.0,
            seed,
            stream,
            rng,
        })
    }

    fn draw(&mut self, dt: f64, out: &mut [C64]) {
        let s = (0.5 * dt).sqrt();
        for d in out.iter_mut() {
            let re: f64 = self.rng.sample(StandardNormal);
            let im: f64 = self.rng.sample(StandardNormal);
            *d = C64::new(re * s, im * s);
        }
    }
}

/// Per-trajectory output.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub stream: u64,
    pub times: Vec<f64>,
    pub moments: Vec<Moments>,
    /// Reduced mechanical states at the snapshot times.
    pub snapshots: Vec<(f64, DMatrix<C64>)>,
    /// Full states at the snapshot times, when requested.
    pub states: Vec<(f64, Vec<C64>)>,
}

impl TrajectoryRecord {
    pub fn xs(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.x).collect()
    }

    pub fn sigma_xs(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.sigma_x()).collect()
    }
}

/// Standard errors of the ensemble means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentErrors {
    pub x: f64,
    pub p: f64,
    pub n_cav: f64,
    pub n_mech: f64,
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub base_seed: u64,
    pub requested: usize,
    pub times: Vec<f64>,
    pub mean: Vec<Moments>,
    pub stderr: Vec<MomentErrors>,
    /// Mean reduced mechanical state at each snapshot time.
    pub mean_reduced: Vec<(f64, DMatrix<C64>)>,
    /// Successful trajectories in index order, without snapshots.
    pub records: Vec<TrajectoryRecord>,
    /// Excluded trajectories `(index, error)`.
    pub failures: Vec<(usize, String)>,
}

/// Largest fraction of failed trajectories an ensemble may drop.
pub const FAILURE_BUDGET: f64 = 0.01;

/// Trajectory engine with the effective operator `K = −iH − ½ΣL†L` precomputed.
#[derive(Clone, Debug)]
pub struct QsdEngine {
    ops: OperatorSet,
    effective: Operator,
    channels: Vec<Operator>,
}

struct Workspace {
    k: Vec<C64>,
    l: Vec<Vec<C64>>,
    means: Vec<C64>,
    stage: [Vec<C64>; 4],
    tmp: Vec<C64>,
    dxi: Vec<C64>,
}

impl Workspace {
    fn new(dim: usize, channels: usize) -> Self {
        let z = || vec![C64::new(0.0, 0.0); dim];
        Self {
            k: z(),
            l: (0..channels).map(|_| z()).collect(),
            means: vec![C64::new(0.0, 0.0); channels],
            stage: [z(), z(), z(), z()],
            tmp: z(),
            dxi: vec![C64::new(0.0, 0.0); channels],
        }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

impl QsdEngine {
    pub fn new(ops: OperatorSet, params: &ModelParams) -> Self {
        let b = ops.b.clone();
        let a = ops.a.clone();
        Self::with_channels(ops, &[(2.0 * params.gamma, &b), (2.0 * params.kappa, &a)])
    }

    /// Engine with explicit `(rate, L)` channels; `L` is scaled by `√rate`.
    pub fn with_channels(ops: OperatorSet, channels: &[(f64, &Operator)]) -> Self {
        // matvecs dominate; the operators are banded so CSR wins at every size
        let mut k = ops.hamiltonian.to_csr().scale(C64::new(0.0, -1.0));
        let mut ls = Vec::new();
        for &(rate, l) in channels {
            let l = l.to_csr().scale(C64::new(rate.sqrt(), 0.0));
            k = k.add(&l.adjoint().matmul(&l), C64::new(1.0, 0.0), C64::new(-0.5, 0.0));
            ls.push(Operator::Sparse(l));
        }
        Self {
            effective: Operator::Sparse(k),
            channels: ls,
            ops,
        }
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn channels(&self) -> usize {
        self.channels.len()
    }

    /// Fills `ws.k`, `ws.l` and `ws.means` for `psi` (not necessarily normalized).
    fn prepare(&self, psi: &[C64], ws: &mut Workspace) {
        self.effective.apply(psi, &mut ws.k);
        let norm2 = dot(psi, psi).re;
        for (m, l) in self.channels.iter().enumerate() {
            l.apply(psi, &mut ws.l[m]);
            ws.means[m] = dot(psi, &ws.l[m]) / norm2;
        }
    }

    /// Drift from prepared buffers into `out`.
    fn drift_prepared(&self, psi: &[C64], ws: &Workspace, out: &mut [C64]) {
        out.copy_from_slice(&ws.k);
        for (m, lpsi) in ws.l.iter().enumerate() {
            let c = ws.means[m];
            let cc = c.conj();
            let half = 0.5 * c.norm_sqr();
            for ((o, lp), p) in out.iter_mut().zip(lpsi).zip(psi) {
                *o += cc * lp - p * half;
            }
        }
    }

    /// Drift per unit `τ`.
    pub fn drift(&self, psi: &[C64]) -> Vec<C64> {
        let mut ws = Workspace::new(psi.len(), self.channels.len());
        self.prepare(psi, &mut ws);
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        self.drift_prepared(psi, &ws, &mut out);
        out
    }

    /// Noise increment `Σ(L_m − ⟨L_m⟩)ψ dξ_m`.
    pub fn noise(&self, psi: &[C64], dxi: &[C64]) -> Vec<C64> {
        assert_eq!(dxi.len(), self.channels.len());
        let mut ws = Workspace::new(psi.len(), self.channels.len());
        self.prepare(psi, &mut ws);
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        add_noise(psi, &ws, dxi, &mut out);
        out
    }

    /// Per-channel noise directions `(L_m − ⟨L_m⟩)ψ`.
    pub fn noise_directions(&self, psi: &[C64]) -> Vec<Vec<C64>> {
        let mut ws = Workspace::new(psi.len(), self.channels.len());
        self.prepare(psi, &mut ws);
        ws.l.iter()
            .zip(&ws.means)
            .map(|(lp, &c)| lp.iter().zip(psi).map(|(l, p)| l - c * p).collect())
            .collect()
    }

    /// Advances by `dt` with the supplied increments, without renormalizing.
    /// Returns the norm of the raw update.
    pub fn increment(&self, psi: &mut [C64], dt: f64, dxi: &[C64], scheme: QsdScheme) -> f64 {
        let mut ws = Workspace::new(psi.len(), self.channels.len());
        ws.dxi.copy_from_slice(dxi);
        self.increment_ws(psi, dt, scheme, &mut ws)
    }

    fn increment_ws(&self, psi: &mut [C64], dt: f64, scheme: QsdScheme, ws: &mut Workspace) -> f64 {
        self.prepare(psi, ws);
        // noise at the start of the step
        let mut noise = std::mem::take(&mut ws.tmp);
        noise.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        let dxi = std::mem::take(&mut ws.dxi);
        add_noise(psi, ws, &dxi, &mut noise);
        ws.dxi = dxi;
        match scheme {
            QsdScheme::EulerMaruyama => {
                let mut d = std::mem::take(&mut ws.stage[0]);
                self.drift_prepared(psi, ws, &mut d);
                for ((p, dv), n) in psi.iter_mut().zip(&d).zip(&noise) {
                    *p += dv * dt + n;
                }
                ws.stage[0] = d;
            }
            QsdScheme::Rk4Drift => {
                let mut st = std::mem::take(&mut ws.stage);
                let mut y = psi.to_vec();
                self.drift_prepared(psi, ws, &mut st[0]);
                for s in 1..4 {
                    let h = if s == 3 { dt } else { 0.5 * dt };
                    for ((yv, p), k) in y.iter_mut().zip(psi.iter()).zip(&st[s - 1]) {
                        *yv = p + k * h;
                    }
                    self.prepare(&y, ws);
                    self.drift_prepared(&y, ws, &mut st[s]);
                }
                let w = dt / 6.0;
                for (i, p) in psi.iter_mut().enumerate() {
                    *p += (st[0][i] + st[1][i] * 2.0 + st[2][i] * 2.0 + st[3][i]) * w + noise[i];
                }
                ws.stage = st;
            }
        }
        ws.tmp = noise;
        psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// One renormalized step, drawing increments from the trajectory's stream.
    pub fn step(&self, state: &mut TrajectoryState, dt: f64, scheme: QsdScheme, norm_floor: f64) -> Result<()> {
        let mut ws = Workspace::new(state.psi.len(), self.channels.len());
        self.step_ws(state, dt, scheme, norm_floor, &mut ws)
    }

    fn step_ws(
        &self,
        state: &mut TrajectoryState,
        dt: f64,
        scheme: QsdScheme,
        norm_floor: f64,
        ws: &mut Workspace,
    ) -> Result<()> {
        state.draw(dt, &mut ws.dxi);
        let norm = self.increment_ws(&mut state.psi, dt, scheme, ws);
        if !(norm >= norm_floor) {
            return Err(Error::NormCollapse {
                tau: state.tau + dt,
                norm,
            });
        }
        let inv = 1.0 / norm;
        state.psi.iter_mut().for_each(|c| *c *= inv);
        Ok(())
    }

    fn check_leak(&self, psi: &[C64], tau: f64, threshold: f64) -> Result<()> {
        let f = &self.ops.fock;
        let cav: f64 = psi[f.index(f.cavity - 1, 0)..].iter().map(|c| c.norm_sqr()).sum();
        if cav > threshold {
            return Err(Error::TruncationLeak {
                tau,
                mode: "cavity",
                population: cav,
            });
        }
        let mech: f64 = (0..f.cavity).map(|c| psi[f.index(c, f.mech - 1)].norm_sqr()).sum();
        if mech > threshold {
            return Err(Error::TruncationLeak {
                tau,
                mode: "mechanical",
                population: mech,
            });
        }
        Ok(())
    }

    /// Integrates one trajectory; bit-identical for identical inputs.
    pub fn run_trajectory(&self, psi0: &[C64], seed: u64, stream: u64, schedule: &Schedule) -> Result<TrajectoryRecord> {
        schedule.validate()?;
        if psi0.len() != self.ops.dim() {
            return Err(Error::Dimension(format!("state dim {} vs operators {}", psi0.len(), self.ops.dim())));
        }
        let mut state = TrajectoryState::new(psi0.to_vec(), seed, stream)?;
        let n = schedule.steps();
        let snaps = schedule.snapshot_steps();
        let mut rec = TrajectoryRecord {
            seed,
            stream,
            times: Vec::new(),
            moments: Vec::new(),
            snapshots: Vec::new(),
            states: Vec::new(),
        };
        let mut ws = Workspace::new(psi0.len(), self.channels.len());
        let mut next_snap = 0;
        for i in 0..=n {
            if i > 0 {
                self.step_ws(&mut state, schedule.dt, schedule.scheme, schedule.norm_floor, &mut ws)?;
                state.tau = i as f64 * schedule.dt;
            }
            self.check_leak(&state.psi, state.tau, schedule.leak_threshold)?;
            if schedule.is_record_step(i) {
                rec.times.push(state.tau);
                rec.moments.push(Moments::from_pure(&state.psi, &self.ops));
            }
            if next_snap < snaps.len() && snaps[next_snap] == i {
                rec.snapshots.push((state.tau, reduced_mech_pure(&state.psi, &self.ops.fock)));
                if schedule.store_states {
                    rec.states.push((state.tau, state.psi.clone()));
                }
                next_snap += 1;
            }
        }
        Ok(rec)
    }

    /// Runs trajectories `0..k` on streams of `base_seed` and reduces them in
    /// index order, so results do not depend on scheduling.
    pub fn run_ensemble(&self, psi0: &[C64], base_seed: u64, k: usize, schedule: &Schedule) -> Result<Ensemble> {
        if k == 0 {
            return Err(Error::InvalidParameter("ensemble needs at least one trajectory".into()));
        }
        schedule.validate()?;
        let times = schedule.record_times();
        let nt = times.len();
        let nm = self.ops.fock.mech;
        let mut sum = vec![Moments::default(); nt];
        let mut reduced: Vec<(f64, DMatrix<C64>)> = Vec::new();
        let mut records = Vec::with_capacity(k);
        let mut failures = Vec::new();
        let mut first_kind = None;
        // bounded batches keep snapshot memory in check
        let batch = (rayon::current_num_threads() * 8).max(16);
        let mut start = 0;
        while start < k {
            let end = (start + batch).min(k);
            let results: Vec<Result<TrajectoryRecord>> = (start..end)
                .into_par_iter()
                .map(|i| self.run_trajectory(psi0, base_seed, i as u64, schedule))
                .collect();
            for (i, res) in (start..end).zip(results) {
                match res {
                    Ok(mut rec) => {
                        for (s, m) in sum.iter_mut().zip(&rec.moments) {
                            s.accumulate(m, 1.0);
                        }
                        if reduced.is_empty() {
                            reduced = rec.snapshots.iter().map(|(t, _)| (*t, DMatrix::zeros(nm, nm))).collect();
                        }
                        for ((_, acc), (_, r)) in reduced.iter_mut().zip(&rec.snapshots) {
                            *acc += r;
                        }
                        rec.snapshots = Vec::new();
                        records.push(rec);
                    }
                    Err(e) => {
                        log::warn!("trajectory {i} failed: {e}");
                        first_kind.get_or_insert(e.kind());
                        failures.push((i, e.to_string()));
                    }
                }
            }
            log::debug!("{end}/{k} trajectories done, {} failed", failures.len());
            start = end;
        }
        if failures.len() as f64 > FAILURE_BUDGET * k as f64 || records.is_empty() {
            return Err(Error::EnsembleFailure {
                failed: failures.len(),
                total: k,
                first: failures[0].1.clone(),
                cause: first_kind.unwrap_or(crate::error::ErrorKind::Numerical),
            });
        }
        let ok = records.len() as f64;
        let mean: Vec<Moments> = sum
            .into_iter()
            .map(|s| {
                let mut m = Moments::default();
                m.accumulate(&s, 1.0 / ok);
                m
            })
            .collect();
        let stderr = (0..nt)
            .map(|j| {
                let se = |f: &dyn Fn(&Moments) -> f64, mu: f64| {
                    if records.len() < 2 {
                        return 0.0;
                    }
                    let ss: f64 = records.iter().map(|r| (f(&r.moments[j]) - mu).powi(2)).sum();
                    (ss / (ok - 1.0) / ok).sqrt()
                };
                let mu = &mean[j];
                MomentErrors {
                    x: se(&|m| m.x, mu.x),
                    p: se(&|m| m.p, mu.p),
                    n_cav: se(&|m| m.n_cav, mu.n_cav),
                    n_mech: se(&|m| m.n_mech, mu.n_mech),
                }
            })
            .collect();
        let mean_reduced = reduced
            .into_iter()
            .map(|(t, m)| (t, m * C64::new(1.0 / ok, 0.0)))
            .collect();
        Ok(Ensemble {
            base_seed,
            requested: k,
            times,
            mean,
            stderr,
            mean_reduced,
            records,
            failures,
        })
    }
}

fn add_noise(psi: &[C64], ws: &Workspace, dxi: &[C64], out: &mut [C64]) {
    for (m, lpsi) in ws.l.iter().enumerate() {
        let c = ws.means[m];
        let d = dxi[m];
        for ((o, lp), p) in out.iter_mut().zip(lpsi).zip(psi) {
            *o += (lp - c * p) * d;
        }
    }
}

/// Drift of the model's stochastic equation at `psi`.
pub fn qsd_drift(psi: &[C64], ops: &OperatorSet, params: &ModelParams) -> Vec<C64> {
    QsdEngine::new(ops.clone(), params).drift(psi)
}

/// Noise increment for increments `(dξ₁, dξ₂)` on the mechanical and cavity channels.
pub fn qsd_noise(psi: &[C64], ops: &OperatorSet, params: &ModelParams, dxi: [C64; 2]) -> Vec<C64> {
    QsdEngine::new(ops.clone(), params).noise(psi, &dxi)
}
