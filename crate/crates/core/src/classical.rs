//! Mean-field dynamics in the classical limit, attractor classification and
//! the power-balance amplitude chart.
//!
//! The equations of motion in scaled variables are
//!
//! ```text
//! ∂τ α = (iΔ − κ̄) α − i(β + β*) α − i/2
//! ∂τ β = (−i − Γ̄) β − (i/2) P |α|²
//! ```
//!
//! with cantilever coordinates `x = (β + β*)/√2` and `p = i(β* − β)/√2`.

use std::f64::consts::{SQRT_2, TAU};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::{Dopri5, Tolerances};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub alpha: C64,
    pub beta: C64,
}

impl ClassicalState {
    pub fn new(alpha: C64, beta: C64) -> Self {
        Self { alpha, beta }
    }

    pub fn origin() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Cantilever position `x = √2 Re β`.
    pub fn x(&self) -> f64 {
        SQRT_2 * self.beta.re
    }

    /// Cantilever momentum `p = √2 Im β`.
    pub fn p(&self) -> f64 {
        SQRT_2 * self.beta.im
    }

    pub fn beta_from_xp(x: f64, p: f64) -> C64 {
        C64::new(x, p) / SQRT_2
    }

    fn to_vec(self) -> Vec<f64> {
        vec![self.alpha.re, self.alpha.im, self.beta.re, self.beta.im]
    }

    fn from_slice(y: &[f64]) -> Self {
        Self::new(C64::new(y[0], y[1]), C64::new(y[2], y[3]))
    }
}

/// Time derivative `(∂τα, ∂τβ)` packed as a state.
pub fn classical_rhs(state: &ClassicalState, params: &ModelParams) -> ClassicalState {
    let ClassicalState { alpha, beta } = *state;
    let dalpha = (I * params.detuning - params.kappa) * alpha - I * (2.0 * beta.re) * alpha - 0.5 * I;
    let dbeta = (-I - params.gamma) * beta - 0.5 * I * params.pump * alpha.norm_sqr();
    ClassicalState::new(dalpha, dbeta)
}

fn rhs_real(params: &ModelParams) -> impl FnMut(f64, &Vec<f64>, &mut Vec<f64>) + '_ {
    move |_t, y, dy| {
        let d = classical_rhs(&ClassicalState::from_slice(y), params);
        dy[0] = d.alpha.re;
        dy[1] = d.alpha.im;
        dy[2] = d.beta.re;
        dy[3] = d.beta.im;
    }
}

/// Sampled classical trajectory.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClassicalSeries {
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
}

impl ClassicalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.states.iter().map(ClassicalState::x).collect()
    }

    pub fn last(&self) -> Option<&ClassicalState> {
        self.states.last()
    }

    /// Linear interpolation of the state at `t` inside the sampled range.
    pub fn interpolate(&self, t: f64) -> Option<ClassicalState> {
        let i = self.times.partition_point(|&s| s < t);
        if i < self.times.len() && (self.times[i] - t).abs() <= 1e-9 * t.abs().max(1.0) {
            return Some(self.states[i]);
        }
        if i == 0 || i >= self.times.len() {
            return None;
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        let (s0, s1) = (self.states[i - 1], self.states[i]);
        Some(ClassicalState::new(
            s0.alpha * (1.0 - w) + s1.alpha * w,
            s0.beta * (1.0 - w) + s1.beta * w,
        ))
    }
}

/// Integrates the mean-field equations, sampling every `sample_dt` up to `tau_end`.
pub fn integrate_classical(
    state0: ClassicalState,
    params: &ModelParams,
    tau_end: f64,
    sample_dt: f64,
    tol: Tolerances,
) -> Result<ClassicalSeries> {
    if !(tau_end > 0.0) || !(sample_dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need tau_end > 0 and sample_dt > 0, got {tau_end} and {sample_dt}"
        )));
    }
    let n = (tau_end / sample_dt).round().max(1.0) as usize;
    let mut series = ClassicalSeries {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
    };
    series.times.push(0.0);
    series.states.push(state0);
    let mut stepper = Dopri5::new(0.0, state0.to_vec(), tol);
    let mut rhs = rhs_real(params);
    for k in 1..=n {
        let t = if k == n { tau_end } else { k as f64 * sample_dt };
        stepper.advance_to(t, &mut rhs)?;
        series.times.push(t);
        series.states.push(ClassicalState::from_slice(stepper.state()));
    }
    Ok(series)
}

/// One stroboscopic phase-space point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrobePoint {
    pub tau: f64,
    pub x: f64,
    pub p: f64,
}

/// Samples `(x, p)` at `τ = offset + k·period` for every such time inside the series.
pub fn stroboscopic_samples(series: &ClassicalSeries, period: f64, offset: f64) -> Result<Vec<StrobePoint>> {
    strobe_generic(&series.times, offset, period, |t| series.interpolate(t).map(|s| (s.x(), s.p())))
}

pub(crate) fn strobe_generic(
    times: &[f64],
    offset: f64,
    period: f64,
    mut at: impl FnMut(f64) -> Option<(f64, f64)>,
) -> Result<Vec<StrobePoint>> {
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Err(Error::SeriesTooShort("empty series".into()));
    };
    let start = offset.max(t0);
    let span = t1 - start;
    if span < 10.0 * period {
        return Err(Error::SeriesTooShort(format!(
            "stroboscope needs at least 10 periods after tau = {start:.3}, have {:.2}",
            span / period
        )));
    }
    let k0 = ((start - offset) / period - 1e-9).ceil().max(0.0) as usize;
    let mut out = Vec::new();
    let mut k = k0;
    loop {
        let tau = offset + k as f64 * period;
        if tau > t1 + 1e-9 {
            break;
        }
        if let Some((x, p)) = at(tau.min(t1)) {
            out.push(StrobePoint { tau, x, p });
        }
        k += 1;
    }
    Ok(out)
}

/// Returns of the orbit to the section `p = 0` with `p` turning negative,
/// i.e. the successive maxima of `x`.
///
/// Crossings are located on the cubic Hermite interpolant built from the
/// samples and the vector field, so the section is accurate well beyond the
/// sampling step.
pub fn poincare_section(series: &ClassicalSeries, params: &ModelParams, from: f64) -> Vec<StrobePoint> {
    let start = series.times.partition_point(|&t| t < from);
    let mut out = Vec::new();
    for i in start.max(1)..series.len() {
        let (s0, s1) = (series.states[i - 1], series.states[i]);
        if !(s0.p() > 0.0 && s1.p() <= 0.0) {
            continue;
        }
        let (t0, t1) = (series.times[i - 1], series.times[i]);
        let h = t1 - t0;
        let (d0, d1) = (classical_rhs(&s0, params), classical_rhs(&s1, params));
        let herm = |y0: f64, y1: f64, m0: f64, m1: f64, u: f64| {
            let u2 = u * u;
            let u3 = u2 * u;
            (2.0 * u3 - 3.0 * u2 + 1.0) * y0
                + (u3 - 2.0 * u2 + u) * h * m0
                + (-2.0 * u3 + 3.0 * u2) * y1
                + (u3 - u2) * h * m1
        };
        let sq = SQRT_2;
        let p_at = |u: f64| herm(s0.p(), s1.p(), sq * d0.beta.im, sq * d1.beta.im, u);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if p_at(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        out.push(StrobePoint {
            tau: t0 + u * h,
            x: herm(s0.x(), s1.x(), sq * d0.beta.re, sq * d1.beta.re, u),
            p: 0.0,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "period", rename_all = "kebab-case")]
pub enum AttractorKind {
    FixedPoint,
    Periodic(usize),
    Chaotic,
    Unclassified,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttractorReport {
    pub kind: AttractorKind,
    /// `(max x − min x)/2` after the transient.
    pub amplitude: f64,
    /// `(max x + min x)/2` after the transient.
    pub offset: f64,
    pub lyapunov: f64,
    /// `2π` stroboscope after the transient.
    pub strobe: Vec<StrobePoint>,
    /// Returns to the `p = 0` section after the transient.
    pub section: Vec<StrobePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyOptions {
    /// Leading fraction of the series treated as transient.
    pub transient_fraction: f64,
    /// Stroboscopic points closer than this (in x and p) belong to one cluster.
    pub cluster_tol: f64,
    /// Exponents above this (per unit τ) mark chaos.
    pub lyapunov_threshold: f64,
    /// Longest period searched for.
    pub max_period: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            transient_fraction: 0.5,
            cluster_tol: 1e-2,
            lyapunov_threshold: 1e-3,
            max_period: 32,
        }
    }
}

/// Classifies the post-transient part of `series` given its largest Lyapunov exponent.
///
/// Periodicity is read from the returns to the `p = 0` section rather than a
/// fixed-`2π` stroboscope: the self-sustained oscillation runs at a shifted
/// frequency, so a `2π` stroboscope of a period-1 orbit traces the whole ring.
pub fn classify_attractor(
    series: &ClassicalSeries,
    params: &ModelParams,
    lyapunov: f64,
    opts: &ClassifyOptions,
) -> Result<AttractorReport> {
    let (Some(&t0), Some(&t1)) = (series.times.first(), series.times.last()) else {
        return Err(Error::SeriesTooShort("empty series".into()));
    };
    let t_cut = t0 + opts.transient_fraction * (t1 - t0);
    let start = series.times.partition_point(|&t| t < t_cut);
    let xs: Vec<f64> = series.states[start..].iter().map(ClassicalState::x).collect();
    if xs.len() < 2 {
        return Err(Error::SeriesTooShort("no samples after the transient".into()));
    }
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let amplitude = 0.5 * (hi - lo);
    let offset = 0.5 * (hi + lo);

    let strobe = stroboscopic_samples(series, TAU, t_cut.max(0.0))?;
    let section = poincare_section(series, params, t_cut);
    let kind = if lyapunov > opts.lyapunov_threshold {
        AttractorKind::Chaotic
    } else if amplitude < opts.cluster_tol {
        AttractorKind::FixedPoint
    } else {
        match strobe_period(&section, opts.cluster_tol, opts.max_period) {
            Some(n) => AttractorKind::Periodic(n),
            None => AttractorKind::Unclassified,
        }
    };
    Ok(AttractorReport {
        kind,
        amplitude: if kind == AttractorKind::FixedPoint { 0.0 } else { amplitude },
        offset,
        lyapunov,
        strobe,
        section,
    })
}

/// Smallest `n` such that every stroboscopic point returns within `tol` after `n` samples.
pub fn strobe_period(points: &[StrobePoint], tol: f64, max_period: usize) -> Option<usize> {
    (1..=max_period).find(|&n| {
        points.len() >= 2 * n + 2
            && points
                .iter()
                .zip(&points[n..])
                .all(|(a, b)| (a.x - b.x).abs() < tol && (a.p - b.p).abs() < tol)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovOptions {
    /// Length of the transient integrated before the estimate starts.
    pub transient: f64,
    /// Time between tangent renormalizations.
    pub renorm_interval: f64,
    /// Maximal spread of the running estimate over the final quarter for convergence.
    pub convergence_spread: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self {
            transient: 0.0,
            renorm_interval: TAU,
            convergence_spread: 2e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// Running estimate after each renormalization.
    pub running: Vec<f64>,
    pub converged: bool,
}

/// Largest Lyapunov exponent from the linearized flow, renormalizing the
/// tangent vector every `renorm_interval`.
pub fn largest_lyapunov(
    params: &ModelParams,
    state0: ClassicalState,
    tau_end: f64,
    tol: Tolerances,
    opts: &LyapunovOptions,
) -> Result<LyapunovEstimate> {
    let mut start = state0;
    if opts.transient > 0.0 {
        let mut s = Dopri5::new(0.0, state0.to_vec(), tol);
        s.advance_to(opts.transient, &mut rhs_real(params))?;
        start = ClassicalState::from_slice(s.state());
    }
    let mut y = start.to_vec();
    // unit tangent along a generic direction
    y.extend_from_slice(&[0.5, 0.5, 0.5, 0.5]);
    let mut rhs = |_t: f64, y: &Vec<f64>, dy: &mut Vec<f64>| {
        let s = ClassicalState::from_slice(&y[..4]);
        let d = classical_rhs(&s, params);
        let da = C64::new(y[4], y[5]);
        let db = C64::new(y[6], y[7]);
        let (alpha, beta) = (s.alpha, s.beta);
        let dda = (I * (params.detuning - 2.0 * beta.re) - params.kappa) * da - I * (2.0 * db.re) * alpha;
        let ddb = (-I - params.gamma) * db - I * params.pump * (alpha.conj() * da).re;
        dy.copy_from_slice(&[
            d.alpha.re, d.alpha.im, d.beta.re, d.beta.im, dda.re, dda.im, ddb.re, ddb.im,
        ]);
    };
    let mut stepper = Dopri5::new(0.0, y, tol);
    let n = (tau_end / opts.renorm_interval).floor() as usize;
    if n < 4 {
        return Err(Error::SeriesTooShort(format!(
            "Lyapunov estimate needs tau_end >= 4 renormalization intervals, got {tau_end}"
        )));
    }
    let mut sum_log = 0.0;
    let mut running = Vec::with_capacity(n);
    for k in 1..=n {
        let t = k as f64 * opts.renorm_interval;
        stepper.advance_to(t, &mut rhs)?;
        let y = stepper.state_mut();
        let norm = y[4..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NoConvergence {
                what: "tangent renormalization",
                iterations: k,
            });
        }
        sum_log += norm.ln();
        y[4..].iter_mut().for_each(|v| *v /= norm);
        running.push(sum_log / t);
    }
    let exponent = *running.last().unwrap();
    let tail = &running[3 * running.len() / 4..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    Ok(LyapunovEstimate {
        exponent,
        converged: hi - lo <= opts.convergence_spread,
        running,
    })
}

/// Period-averaged power input and loss for the forced oscillation ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBalance {
    pub amplitude: f64,
    /// Radiation-pressure gain `−(P/2)⟨|α|² Im β⟩`.
    pub radiation: f64,
    /// Friction loss `Γ̄⟨|β|²⟩`.
    pub friction: f64,
    /// Self-consistent offset `x₀`.
    pub offset: f64,
}

impl PowerBalance {
    pub fn net(&self) -> f64 {
        self.radiation - self.friction
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceOptions {
    /// RK4 steps per mechanical period.
    pub steps_per_period: usize,
    /// Successive-period deviation of the cavity field at convergence.
    pub periodic_tol: f64,
    pub max_periods: usize,
    /// Convergence threshold for `|Δx₀|`.
    pub offset_tol: f64,
    pub max_iterations: usize,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self {
            steps_per_period: 256,
            periodic_tol: 1e-8,
            max_periods: 400,
            offset_tol: 1e-8,
            max_iterations: 200,
        }
    }
}

/// Period averages of the cavity response to `x(τ) = x₀ + A cos τ`.
struct CavityAverages {
    mean_intensity: f64,
    intensity_im_beta: f64,
    beta_sq: f64,
}

fn cavity_response(amplitude: f64, offset: f64, params: &ModelParams, opts: &BalanceOptions) -> Result<CavityAverages> {
    let n = opts.steps_per_period;
    let h = TAU / n as f64;
    let x_of = |t: f64| offset + amplitude * t.cos();
    let f = |t: f64, a: C64| (I * params.detuning - params.kappa) * a - I * SQRT_2 * x_of(t) * a - 0.5 * I;
    let step = |t: f64, a: C64| {
        let k1 = f(t, a);
        let k2 = f(t + 0.5 * h, a + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, a + 0.5 * h * k2);
        let k4 = f(t + h, a + h * k3);
        a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    // start from the adiabatic response at τ = 0
    let mut alpha = 0.5 * I / (I * (params.detuning - SQRT_2 * x_of(0.0)) - params.kappa);
    let mut converged = false;
    for _ in 0..opts.max_periods {
        let start = alpha;
        for k in 0..n {
            alpha = step(k as f64 * h, alpha);
        }
        if (alpha - start).norm() < opts.periodic_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "periodic cavity response",
            iterations: opts.max_periods,
        });
    }
    // One more period with the averages; the integrands are periodic, so the
    // plain rectangle sum is the trapezoid rule.
    let mut avg = CavityAverages {
        mean_intensity: 0.0,
        intensity_im_beta: 0.0,
        beta_sq: 0.0,
    };
    for k in 0..n {
        let t = k as f64 * h;
        let x = x_of(t);
        let p = -amplitude * t.sin();
        let beta = ClassicalState::beta_from_xp(x, p);
        let i = alpha.norm_sqr();
        avg.mean_intensity += i;
        avg.intensity_im_beta += i * beta.im;
        avg.beta_sq += beta.norm_sqr();
        alpha = step(t, alpha);
    }
    let inv = 1.0 / n as f64;
    avg.mean_intensity *= inv;
    avg.intensity_im_beta *= inv;
    avg.beta_sq *= inv;
    Ok(avg)
}

/// Power balance for oscillation amplitude `amplitude` at `params.detuning`.
///
/// The offset solves `x₀ = −(P/√2)⟨|α|²⟩/(1 + Γ̄²)`, the period average of the
/// mechanical equation, by damped fixed-point iteration with a bisection
/// safeguard on the bracket `[−P/√2·max|α|², 0]`.
pub fn power_balance(amplitude: f64, params: &ModelParams, opts: &BalanceOptions) -> Result<PowerBalance> {
    if !(amplitude >= 0.0) {
        return Err(Error::InvalidParameter(format!("amplitude {amplitude} must be >= 0")));
    }
    params.validate()?;
    let map = |x0: f64| -> Result<f64> {
        let avg = cavity_response(amplitude, x0, params, opts)?;
        Ok(-params.pump / SQRT_2 * avg.mean_intensity / (1.0 + params.gamma * params.gamma))
    };
    let offset = solve_offset(map, params, opts)?;
    let avg = cavity_response(amplitude, offset, params, opts)?;
    Ok(PowerBalance {
        amplitude,
        radiation: -0.5 * params.pump * avg.intensity_im_beta,
        friction: params.gamma * avg.beta_sq,
        offset,
    })
}

fn solve_offset(map: impl Fn(f64) -> Result<f64>, params: &ModelParams, opts: &BalanceOptions) -> Result<f64> {
    // |α|² is bounded by 1/(4κ̄²) at resonance, which brackets x₀.
    let lower = -params.pump / SQRT_2 / (4.0 * params.kappa * params.kappa) - 1e-3;
    let residual = |x0: f64| map(x0).map(|m| m - x0);

    let mut x0 = 0.0;
    let mut damping = 0.5;
    let mut prev_step = f64::INFINITY;
    for _ in 0..opts.max_iterations / 2 {
        let next = map(x0)?;
        let step = next - x0;
        if step.abs() < opts.offset_tol {
            return Ok(next);
        }
        if step.abs() > prev_step {
            damping *= 0.5;
        }
        prev_step = step.abs();
        x0 += damping * step;
    }

    // bisection on residual over [lower, 0]: residual(0) ≤ 0 < residual(lower)
    let (mut lo, mut hi) = (lower, 0.0);
    let mut r_lo = residual(lo)?;
    if r_lo <= 0.0 {
        return Err(Error::NoConvergence {
            what: "offset bracket",
            iterations: opts.max_iterations,
        });
    }
    for _ in 0..opts.max_iterations {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid)?;
        if (hi - lo) < opts.offset_tol {
            return Ok(mid);
        }
        if (r > 0.0) == (r_lo > 0.0) {
            lo = mid;
            r_lo = r;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        what: "offset fixed point",
        iterations: opts.max_iterations,
    })
}

/// Power balance over a `(Δ, A)` grid with extracted stable branches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudeChart {
    pub detunings: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// `cells[i][j]` is the balance at `detunings[i]`, `amplitudes[j]`.
    pub cells: Vec<Vec<PowerBalance>>,
    /// Stable amplitudes per detuning, ascending.
    pub branches: Vec<Vec<f64>>,
}

impl AmplitudeChart {
    pub fn net(&self, i: usize, j: usize) -> f64 {
        self.cells[i][j].net()
    }
}

fn check_monotone(v: &[f64], name: &str) -> Result<()> {
    if v.is_empty() || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!("{name} grid must be non-empty and strictly increasing")));
    }
    Ok(())
}

/// Stable amplitudes at fixed detuning: sign changes of the net power from
/// positive to negative with increasing `A`, refined by bisection.
pub fn stable_amplitudes(
    cells: &[PowerBalance],
    params: &ModelParams,
    opts: &BalanceOptions,
    refine_tol: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for w in cells.windows(2) {
        if w[0].net() > 0.0 && w[1].net() <= 0.0 {
            let (mut lo, mut hi) = (w[0].amplitude, w[1].amplitude);
            while hi - lo > refine_tol {
                let mid = 0.5 * (lo + hi);
                if power_balance(mid, params, opts)?.net() > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
    }
    Ok(out)
}

pub fn amplitude_chart(
    detunings: &[f64],
    amplitudes: &[f64],
    params: &ModelParams,
    opts: &BalanceOptions,
) -> Result<AmplitudeChart> {
    check_monotone(detunings, "detuning")?;
    check_monotone(amplitudes, "amplitude")?;
    if amplitudes[0] < 0.0 {
        return Err(Error::InvalidParameter("amplitudes must be >= 0".into()));
    }
    let columns: Vec<Result<(Vec<PowerBalance>, Vec<f64>)>> = detunings
        .par_iter()
        .map(|&delta| {
            let p = params.with_detuning(delta);
            let cells = amplitudes
                .iter()
                .map(|&a| power_balance(a, &p, opts))
                .collect::<Result<Vec<_>>>()?;
            let branches = stable_amplitudes(&cells, &p, opts, 1e-4)?;
            Ok((cells, branches))
        })
        .collect();
    let mut chart = AmplitudeChart {
        detunings: detunings.to_vec(),
        amplitudes: amplitudes.to_vec(),
        cells: Vec::with_capacity(detunings.len()),
        branches: Vec::with_capacity(detunings.len()),
    };
    for col in columns {
        let (cells, branches) = col?;
        chart.cells.push(cells);
        chart.branches.push(branches);
    }
    Ok(chart)
}

/// Net power `−(P/2)⟨|α|² Im β⟩ − Γ̄⟨|β|²⟩` measured on a sampled trajectory,
/// averaged over the sample window.
pub fn measured_power_balance(series: &ClassicalSeries, from: f64, params: &ModelParams) -> f64 {
    let start = series.times.partition_point(|&t| t < from);
    let window = &series.states[start..];
    let n = window.len().max(1) as f64;
    window
        .iter()
        .map(|s| -0.5 * params.pump * s.alpha.norm_sqr() * s.beta.im - params.gamma * s.beta.norm_sqr())
        .sum::<f64>()
        / n
}

/// Default chart axes: `Δ ∈ [−1.3, −0.2]`, `A ∈ [0, 4]`.
pub fn default_chart_axes() -> (Vec<f64>, Vec<f64>) {
    let deltas = (0..=44).map(|k| -1.3 + k as f64 * 0.025).collect();
    let amps = (0..=80).map(|k| k as f64 * 0.05).collect();
    (deltas, amps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> Tolerances {
        Tolerances::new(1e-12, 1e-10)
    }

    #[test]
    fn rhs_at_origin() {
        let d = classical_rhs(&ClassicalState::origin(), &ModelParams::default());
        assert_eq!(d.alpha, C64::new(0.0, -0.5));
        assert_eq!(d.beta, C64::new(0.0, 0.0));
    }

    #[test]
    fn rhs_undriven_fixed_point() {
        let p = ModelParams {
            detuning: 0.0,
            pump: 0.0,
            ..ModelParams::default()
        };
        let d = classical_rhs(&ClassicalState::new(C64::new(0.0, -1.0), C64::new(0.0, 0.0)), &p);
        assert!(d.alpha.norm() < 1e-15 && d.beta.norm() < 1e-15);
    }

    #[test]
    fn xp_round_trip() {
        let s = ClassicalState::new(C64::new(0.1, 0.2), C64::new(-0.7, 1.3));
        let beta = ClassicalState::beta_from_xp(s.x(), s.p());
        assert!((beta - s.beta).norm() < 1e-15);
    }

    #[test]
    fn fixed_point_stays_put() {
        let p = ModelParams {
            detuning: 0.0,
            pump: 0.0,
            ..ModelParams::default()
        };
        let s0 = ClassicalState::new(C64::new(0.0, -1.0), C64::new(0.0, 0.0));
        let series = integrate_classical(s0, &p, 100.0, 1.0, tight()).unwrap();
        for s in &series.states {
            assert!((s.alpha - s0.alpha).norm() < 1e-9);
            assert!(s.beta.norm() < 1e-9);
        }
    }

    #[test]
    fn undriven_cavity_closed_form() {
        let p = ModelParams {
            detuning: -0.4,
            pump: 0.0,
            ..ModelParams::default()
        };
        let lambda = C64::new(-p.kappa, p.detuning);
        let fixed = 0.5 * I / lambda;
        let series = integrate_classical(ClassicalState::origin(), &p, 20.0, 0.5, tight()).unwrap();
        for (t, s) in series.times.iter().zip(&series.states) {
            let want = fixed * (1.0 - (lambda * *t).exp());
            assert!((s.alpha - want).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn undamped_free_oscillator_conserves_beta() {
        let p = ModelParams {
            detuning: 0.0,
            pump: 0.0,
            sigma: 0.0,
            kappa: 1e-300,
            gamma: 1e-300,
        };
        let s0 = ClassicalState::new(C64::new(0.3, 0.0), C64::new(1.0, 0.5));
        let series = integrate_classical(s0, &p, 50.0, 1.0, tight()).unwrap();
        for s in &series.states {
            assert!((s.beta.norm_sqr() - 1.25).abs() < 1e-8);
        }
    }

    #[test]
    fn nonpositive_horizon_rejected() {
        assert!(integrate_classical(ClassicalState::origin(), &ModelParams::default(), 0.0, 0.1, tight()).is_err());
    }

    #[test]
    fn stroboscope_of_fixed_point_is_constant() {
        let p = ModelParams {
            detuning: 0.0,
            pump: 0.0,
            ..ModelParams::default()
        };
        let s0 = ClassicalState::new(C64::new(0.0, -1.0), C64::new(0.0, 0.0));
        let series = integrate_classical(s0, &p, 30.0 * TAU, TAU / 16.0, tight()).unwrap();
        let pts = stroboscopic_samples(&series, TAU, 0.0).unwrap();
        assert!(pts.len() >= 30);
        assert!(pts.iter().all(|q| q.x == pts[0].x && q.p == pts[0].p));
        let rep = classify_attractor(&series, &p, -0.5, &ClassifyOptions::default()).unwrap();
        assert_eq!(rep.kind, AttractorKind::FixedPoint);
        assert_eq!(rep.amplitude, 0.0);
    }

    #[test]
    fn stroboscope_needs_ten_periods() {
        let series = integrate_classical(ClassicalState::origin(), &ModelParams::default(), 5.0 * TAU, 0.1, tight())
            .unwrap();
        assert!(matches!(stroboscopic_samples(&series, TAU, 0.0), Err(Error::SeriesTooShort(_))));
    }

    #[test]
    fn period_detection_on_synthetic_points() {
        let pts: Vec<StrobePoint> = (0..40)
            .map(|k| StrobePoint {
                tau: k as f64,
                x: if k % 2 == 0 { 1.0 } else { 1.3 },
                p: 0.0,
            })
            .collect();
        assert_eq!(strobe_period(&pts, 1e-2, 8), Some(2));
        let one: Vec<StrobePoint> = pts.iter().map(|q| StrobePoint { x: 1.0, ..*q }).collect();
        assert_eq!(strobe_period(&one, 1e-2, 8), Some(1));
        let drift: Vec<StrobePoint> = (0..40).map(|k| StrobePoint { tau: 0.0, x: k as f64 * 0.1, p: 0.0 }).collect();
        assert_eq!(strobe_period(&drift, 1e-2, 8), None);
    }

    #[test]
    fn lyapunov_negative_at_undriven_fixed_point() {
        let p = ModelParams {
            pump: 0.0,
            ..ModelParams::default()
        };
        let est = largest_lyapunov(&p, ClassicalState::origin(), 200.0 * TAU, tight(), &LyapunovOptions::default())
            .unwrap();
        assert!(est.exponent < 0.0, "{}", est.exponent);
        // slowest contraction is the mechanical damping
        assert!((est.exponent + p.gamma).abs() < 2e-3, "{}", est.exponent);
    }

    #[test]
    fn balance_at_zero_amplitude() {
        let p = ModelParams::default();
        let b = power_balance(0.0, &p, &BalanceOptions::default()).unwrap();
        assert!(b.radiation.abs() < 1e-14);
        assert!((b.friction - p.gamma * b.offset * b.offset / 2.0).abs() < 1e-12);
        assert!(b.offset < 0.0);
    }

    #[test]
    fn balance_without_pump() {
        let p = ModelParams {
            pump: 0.0,
            ..ModelParams::default()
        };
        for a in [0.0, 0.5, 1.7, 3.0] {
            let b = power_balance(a, &p, &BalanceOptions::default()).unwrap();
            assert_eq!(b.radiation, 0.0);
            assert_eq!(b.offset, 0.0);
        }
        let chart = amplitude_chart(&[-1.0, -0.5], &[0.0, 1.0, 2.0, 3.0], &p, &BalanceOptions::default()).unwrap();
        assert!(chart.branches.iter().all(Vec::is_empty));
    }

    #[test]
    fn static_offset_is_self_consistent() {
        // At A = 0 the offset solves x₀ = −(P/√2)|α|²/(1+Γ̄²) with the static cavity response.
        let p = ModelParams::default();
        let b = power_balance(0.0, &p, &BalanceOptions::default()).unwrap();
        let eff = p.detuning - SQRT_2 * b.offset;
        let intensity = 0.25 / (eff * eff + p.kappa * p.kappa);
        let want = -p.pump / SQRT_2 * intensity / (1.0 + p.gamma * p.gamma);
        assert!((b.offset - want).abs() < 1e-7, "{} vs {}", b.offset, want);
    }

    #[test]
    fn chart_rejects_unsorted_grid() {
        let p = ModelParams::default();
        assert!(amplitude_chart(&[-0.4, -0.5], &[0.0, 1.0], &p, &BalanceOptions::default()).is_err());
    }
}
