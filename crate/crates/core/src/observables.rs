//! Phase-space and correlation diagnostics for the mechanical mode.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::classical::{strobe_generic, StrobePoint};
use crate::error::{Error, Result};
use crate::master::{clip_variance, propagate_seed, DensityMatrix, MasterOptions};
use crate::model::{ModelParams, OperatorSet};
use crate::ode::Dopri5;

/// First and second moments recorded along a trajectory or a master run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub x: f64,
    pub p: f64,
    pub x2: f64,
    pub p2: f64,
    pub n_cav: f64,
    pub n_mech: f64,
    pub a: C64,
    pub b: C64,
}

impl Moments {
    /// Moments of a normalized pure state, using `⟨O²⟩ = ‖Oψ‖²` for Hermitian `O`.
    pub fn from_pure(psi: &[C64], ops: &OperatorSet) -> Self {
        let mut tmp = vec![C64::new(0.0, 0.0); psi.len()];
        let mut moment = |op: &crate::sparse::Operator| {
            op.apply(psi, &mut tmp);
            let mean: C64 = psi.iter().zip(&tmp).map(|(a, b)| a.conj() * b).sum();
            let sq: f64 = tmp.iter().map(|c| c.norm_sqr()).sum();
            (mean, sq)
        };
        let (x, x2) = moment(&ops.x);
        let (p, p2) = moment(&ops.p);
        let (a, n_cav) = moment(&ops.a);
        let (b, n_mech) = moment(&ops.b);
        Self {
            x: x.re,
            p: p.re,
            x2,
            p2,
            n_cav,
            n_mech,
            a,
            b,
        }
    }

    pub fn var_x(&self) -> f64 {
        self.x2 - self.x * self.x
    }

    pub fn var_p(&self) -> f64 {
        self.p2 - self.p * self.p
    }

    pub fn sigma_x(&self) -> f64 {
        self.var_x().max(0.0).sqrt()
    }

    pub fn sigma_p(&self) -> f64 {
        self.var_p().max(0.0).sqrt()
    }

    pub fn uncertainty_product(&self) -> f64 {
        self.sigma_x() * self.sigma_p()
    }

    /// Linear combination used for ensemble means.
    pub(crate) fn accumulate(&mut self, other: &Moments, w: f64) {
        self.x += w * other.x;
        self.p += w * other.p;
        self.x2 += w * other.x2;
        self.p2 += w * other.p2;
        self.n_cav += w * other.n_cav;
        self.n_mech += w * other.n_mech;
        self.a += other.a * w;
        self.b += other.b * w;
    }
}

/// Minimal uncertainty product `½g²` of the scaled quadratures.
pub fn uncertainty_floor(params: &ModelParams) -> Result<f64> {
    let g = params.couplings()?.coupling;
    Ok(0.5 * g * g)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyPoint {
    pub tau: f64,
    pub product: f64,
    /// Product within a factor 2 of the floor.
    pub localized: bool,
}

pub fn uncertainty_series(times: &[f64], moments: &[Moments], floor: f64) -> Vec<UncertaintyPoint> {
    times
        .iter()
        .zip(moments)
        .map(|(&tau, m)| {
            let product = m.uncertainty_product();
            UncertaintyPoint {
                tau,
                product,
                localized: product < 2.0 * floor,
            }
        })
        .collect()
}

/// Stroboscopic `(x_k, p_k)` samples of a recorded trajectory.
pub fn stroboscopic_quantum(times: &[f64], moments: &[Moments], period: f64, offset: f64) -> Result<Vec<StrobePoint>> {
    strobe_generic(times, offset, period, |t| {
        let m = interp(times, |i| moments[i].x, t)?;
        let p = interp(times, |i| moments[i].p, t)?;
        Some((m, p))
    })
}

/// Mean `√(x² + p²)` of a stroboscopic point set.
pub fn strobe_radius(points: &[StrobePoint]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    Some(points.iter().map(|s| s.x.hypot(s.p)).sum::<f64>() / points.len() as f64)
}

/// Linear interpolation of `f(i)` sampled on ascending `times`.
fn interp(times: &[f64], f: impl Fn(usize) -> f64, t: f64) -> Option<f64> {
    let n = times.len();
    if n == 0 || t < times[0] - 1e-12 || t > times[n - 1] + 1e-12 {
        return None;
    }
    let j = times.partition_point(|&s| s <= t);
    if j == 0 {
        return Some(f(0));
    }
    if j >= n {
        return Some(f(n - 1));
    }
    let (t0, t1) = (times[j - 1], times[j]);
    let w = (t - t0) / (t1 - t0);
    Some((1.0 - w) * f(j - 1) + w * f(j))
}

// ---------------------------------------------------------------------------
// Wigner function

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let h = self.step();
        (0..self.points).map(|i| self.min + h * i as f64).collect()
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points.max(2) - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.min < self.max) || self.points < 2 || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid axis [{}, {}] with {} points",
                self.min, self.max, self.points
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// Row-major, `values[i * p.len() + j] = W(x[i], p[j])`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p.len() + j]
    }

    /// Riemann sum of W over the grid.
    pub fn integral(&self) -> f64 {
        let dx = self.x[1] - self.x[0];
        let dp = self.p[1] - self.p[0];
        self.values.iter().sum::<f64>() * dx * dp
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∫W dp` at each `x`.
    pub fn marginal_x(&self) -> Vec<f64> {
        let dp = self.p[1] - self.p[0];
        self.values.chunks(self.p.len()).map(|row| row.iter().sum::<f64>() * dp).collect()
    }

    /// `∫W dx` at each `p`.
    pub fn marginal_p(&self) -> Vec<f64> {
        let dx = self.x[1] - self.x[0];
        let np = self.p.len();
        (0..np).map(|j| (0..self.x.len()).map(|i| self.values[i * np + j]).sum::<f64>() * dx).collect()
    }
}

/// Mean and standard deviation of the scaled quadratures of a single-mode state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureStats {
    pub mean_x: f64,
    pub mean_p: f64,
    pub sigma_x: f64,
    pub sigma_p: f64,
}

pub fn quadrature_stats(rho: &DMatrix<C64>, coupling: f64) -> Result<QuadratureStats> {
    let n = rho.nrows();
    let mut b = C64::new(0.0, 0.0);
    let mut b2 = C64::new(0.0, 0.0);
    let mut num = 0.0;
    for k in 0..n {
        num += k as f64 * rho[(k, k)].re;
        if k + 1 < n {
            b += rho[(k + 1, k)] * ((k + 1) as f64).sqrt();
        }
        if k + 2 < n {
            b2 += rho[(k + 2, k)] * (((k + 1) * (k + 2)) as f64).sqrt();
        }
    }
    let g2 = coupling * coupling;
    let mean_x = SQRT_2 * coupling * b.re;
    let mean_p = SQRT_2 * coupling * b.im;
    let x2 = 0.5 * g2 * (2.0 * b2.re + 2.0 * num + 1.0);
    let p2 = 0.5 * g2 * (-2.0 * b2.re + 2.0 * num + 1.0);
    Ok(QuadratureStats {
        mean_x,
        mean_p,
        sigma_x: clip_variance(x2 - mean_x * mean_x)?.sqrt(),
        sigma_p: clip_variance(p2 - mean_p * mean_p)?.sqrt(),
    })
}

/// Largest probability mass a Wigner grid may leave outside its extent.
pub const WIGNER_MASS_DEFICIT: f64 = 1e-4;

/// Normalized oscillator eigenfunctions `φ₀..φ_{n−1}` at `x` (standard units).
fn hermite_functions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = SQRT_2 * x * out[0];
    }
    for k in 2..out.len() {
        let kf = k as f64;
        out[k] = (2.0 / kf).sqrt() * x * out[k - 1] - ((kf - 1.0) / kf).sqrt() * out[k - 2];
    }
}

/// Probability of a quadrature landing in `[lo, hi]` (standard units); `phase`
/// selects position (false) or momentum (true) representation.
fn band_probability(rho: &DMatrix<C64>, lo: f64, hi: f64, momentum: bool) -> f64 {
    let n = rho.nrows();
    // resolve the fastest Fock-state oscillation
    let h_max = (0.25 * PI / (2.0 * n as f64 + 1.0).sqrt()).min(0.05);
    let mut intervals = ((hi - lo) / h_max).ceil() as usize;
    intervals += intervals % 2;
    let h = (hi - lo) / intervals as f64;
    // rotate to the momentum representation: ⟨p|n⟩ = (−i)ⁿφₙ(p)
    let rot: Vec<C64> = (0..n)
        .map(|k| if momentum { C64::new(0.0, -1.0).powu(k as u32) } else { C64::new(1.0, 0.0) })
        .collect();
    let mut phi = vec![0.0; n];
    let mut v = vec![C64::new(0.0, 0.0); n];
    let mut total = 0.0;
    for i in 0..=intervals {
        let x = lo + h * i as f64;
        hermite_functions(x, &mut phi);
        for k in 0..n {
            v[k] = rot[k] * phi[k];
        }
        // Σ ⟨q|m⟩ ρ_mn ⟨n|q⟩ with v_k = ⟨q|k⟩
        let mut dens = C64::new(0.0, 0.0);
        for c in 0..n {
            if v[c] == C64::new(0.0, 0.0) {
                continue;
            }
            let mut col = C64::new(0.0, 0.0);
            for r in 0..n {
                col += v[r] * rho[(r, c)];
            }
            dens += col * v[c].conj();
        }
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += w * dens.re;
    }
    total * h / 3.0
}

/// Probability mass outside the rectangle, bounded by the two marginal deficits.
pub fn mass_outside(rho: &DMatrix<C64>, coupling: f64, x_axis: &GridAxis, p_axis: &GridAxis) -> f64 {
    let tr = rho.trace().re;
    let inside_x = band_probability(rho, x_axis.min / coupling, x_axis.max / coupling, false);
    let inside_p = band_probability(rho, p_axis.min / coupling, p_axis.max / coupling, true);
    (1.0 - inside_x / tr).max(0.0) + (1.0 - inside_p / tr).max(0.0)
}

/// Axes centred on the state's mean spanning `k` standard deviations plus one
/// vacuum width.
pub fn covering_axes(rho: &DMatrix<C64>, coupling: f64, k: f64, points: usize) -> Result<(GridAxis, GridAxis)> {
    let s = quadrature_stats(rho, coupling)?;
    let pad = coupling;
    let hx = k * s.sigma_x + pad;
    let hp = k * s.sigma_p + pad;
    Ok((
        GridAxis::new(s.mean_x - hx, s.mean_x + hx, points),
        GridAxis::new(s.mean_p - hp, s.mean_p + hp, points),
    ))
}

/// Wigner function of a single-mode state in scaled units `x̂ = (g/√2)(b + b†)`.
///
/// Evaluated in standard quadratures as
/// `W₀(x, p) = (1/π)∫⟨x−y|ρ|x+y⟩e^{2ipy}dy`, with the position representation
/// built from Hermite functions on a lattice aligned with the x axis, then
/// rescaled, `W(x, p) = W₀(x/g, p/g)/g²`.
pub fn wigner(rho: &DMatrix<C64>, coupling: f64, x_axis: &GridAxis, p_axis: &GridAxis) -> Result<WignerGrid> {
    x_axis.validate()?;
    p_axis.validate()?;
    if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
        return Err(Error::Dimension(format!("state is {}x{}", rho.nrows(), rho.ncols())));
    }
    if !(coupling > 0.0) {
        return Err(Error::InvalidParameter(format!("coupling {coupling} must be > 0")));
    }
    let deficit = mass_outside(rho, coupling, x_axis, p_axis);
    if deficit > WIGNER_MASS_DEFICIT {
        return Err(Error::GridExtent(format!(
            "grid x [{:.4}, {:.4}] p [{:.4}, {:.4}] misses {deficit:.2e} of the state's mass",
            x_axis.min, x_axis.max, p_axis.min, p_axis.max
        )));
    }

    let xs = x_axis.values();
    let ps = p_axis.values();
    let xs0: Vec<f64> = xs.iter().map(|x| x / coupling).collect();
    let ps0: Vec<f64> = ps.iter().map(|p| p / coupling).collect();
    let w0 = wigner_standard(rho, &xs0, &ps0);
    let scale = 1.0 / (coupling * coupling);
    Ok(WignerGrid {
        x: xs,
        p: ps,
        values: w0.into_iter().map(|w| w * scale).collect(),
    })
}

/// Standard-units Wigner function on a uniform x grid and arbitrary p values.
fn wigner_standard(rho: &DMatrix<C64>, xs: &[f64], ps: &[f64]) -> Vec<f64> {
    let n = rho.nrows();
    // every Fock state up to n−1 is negligible beyond this radius
    let reach = (2.0 * n as f64 + 1.0).sqrt() + 8.0;
    let p_max = ps.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    // sample spacing keeping the p-periodic images of the state off the grid
    let h_max = 0.9 * PI / (reach + p_max);
    let dx = xs[1] - xs[0];
    let q = (dx / h_max).ceil().max(1.0) as i64;
    let h = dx / q as f64;
    let x0 = xs[0];
    let l_lo = ((-reach - x0) / h).ceil() as i64;
    let l_hi = ((reach - x0) / h).floor() as i64;
    let mut values = vec![0.0; xs.len() * ps.len()];
    if l_hi < l_lo {
        return values;
    }
    let m = (l_hi - l_lo + 1) as usize;
    let mut phi = DMatrix::<C64>::zeros(m, n);
    let mut buf = vec![0.0; n];
    for r in 0..m {
        hermite_functions(x0 + (l_lo + r as i64) as f64 * h, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            phi[(r, c)] = C64::new(*v, 0.0);
        }
    }
    // ⟨u|ρ|v⟩ on the lattice
    let pos = &phi * rho * phi.transpose();
    let np = ps.len();
    let mut f = Vec::new();
    for (i, out) in values.chunks_mut(np).enumerate() {
        let c = i as i64 * q - l_lo;
        if c < 0 || c >= m as i64 {
            continue;
        }
        let c = c as usize;
        let kmax = c.min(m - 1 - c);
        f.clear();
        f.extend((0..=kmax).map(|k| pos[(c - k, c + k)]));
        for (o, &p) in out.iter_mut().zip(ps) {
            let step = C64::from_polar(1.0, 2.0 * p * h);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = 0.0;
            for fk in &f[1..] {
                phase *= step;
                acc += (fk * phase).re;
            }
            *o = (f[0].re + 2.0 * acc) * h / PI;
        }
    }
    values
}

// ---------------------------------------------------------------------------
// Autocorrelation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrelationSeries {
    pub tau: f64,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    /// Window integral of `mean_k σ_x,k(τ′)σ_x,k(τ′+δτ)`, bounding the omitted term.
    pub residual_bound: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Minimum samples per `2π` for the window quadrature.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 32.0;

/// Recorded `x_k` and `σ_x,k` of one trajectory on a shared time grid.
#[derive(Clone, Copy, Debug)]
pub struct TrajectorySamples<'a> {
    pub x: &'a [f64],
    pub sigma_x: &'a [f64],
}

/// Quadrature nodes and trapezoid weights for `[lo, hi]` on a recorded grid.
fn window_nodes(times: &[f64], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut nodes = vec![lo];
    nodes.extend(times.iter().copied().filter(|&t| t > lo + 1e-12 && t < hi - 1e-12));
    nodes.push(hi);
    let mut out: Vec<(f64, f64)> = nodes.iter().map(|&t| (t, 0.0)).collect();
    for i in 0..nodes.len() - 1 {
        let h = 0.5 * (nodes[i + 1] - nodes[i]);
        out[i].1 += h;
        out[i + 1].1 += h;
    }
    out
}

fn check_sampling(times: &[f64], lo: f64, hi: f64) -> Result<()> {
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        return Err(Error::InsufficientSampling("empty record".into()));
    };
    if lo < t0 - 1e-9 || hi > t1 + 1e-9 {
        return Err(Error::InsufficientSampling(format!(
            "record covers [{t0:.4}, {t1:.4}] but the window needs [{lo:.4}, {hi:.4}]"
        )));
    }
    let max_gap = 2.0 * PI / MIN_SAMPLES_PER_PERIOD * (1.0 + 1e-9);
    let i0 = times.partition_point(|&t| t < lo).saturating_sub(1);
    let i1 = (times.partition_point(|&t| t <= hi) + 1).min(times.len());
    for w in times[i0..i1].windows(2) {
        if w[1] - w[0] > max_gap {
            return Err(Error::InsufficientSampling(format!(
                "gap {:.4} at tau = {:.4} exceeds 2pi/{MIN_SAMPLES_PER_PERIOD}",
                w[1] - w[0],
                w[0]
            )));
        }
    }
    Ok(())
}

/// Trajectory estimator of `R_τ(δτ) = ∫_{τ−π}^{τ+π} mean_k x_k(τ′)x_k(τ′+δτ) dτ′`.
pub fn autocorrelation_trajectories(
    times: &[f64],
    trajectories: &[TrajectorySamples<'_>],
    tau: f64,
    lags: &[f64],
) -> Result<AutocorrelationSeries> {
    if trajectories.is_empty() {
        return Err(Error::InsufficientSampling("no trajectories".into()));
    }
    if lags.iter().any(|&l| l < 0.0) {
        return Err(Error::InvalidParameter("lags must be >= 0".into()));
    }
    for t in trajectories {
        if t.x.len() != times.len() || t.sigma_x.len() != times.len() {
            return Err(Error::Dimension("trajectory samples do not match the time grid".into()));
        }
    }
    let (lo, hi) = (tau - PI, tau + PI);
    let max_lag = lags.iter().cloned().fold(0.0, f64::max);
    check_sampling(times, lo, hi + max_lag)?;
    let nodes = window_nodes(times, lo, hi);
    let k = trajectories.len() as f64;

    let mut values = Vec::with_capacity(lags.len());
    let mut residual = Vec::with_capacity(lags.len());
    let mut stderr = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut bound = 0.0;
        for tr in trajectories {
            let mut ik = 0.0;
            let mut bk = 0.0;
            for &(t, w) in &nodes {
                let x0 = interp(times, |i| tr.x[i], t).unwrap_or(0.0);
                let x1 = interp(times, |i| tr.x[i], t + lag).unwrap_or(0.0);
                let s0 = interp(times, |i| tr.sigma_x[i], t).unwrap_or(0.0);
                let s1 = interp(times, |i| tr.sigma_x[i], t + lag).unwrap_or(0.0);
                ik += w * x0 * x1;
                bk += w * s0 * s1;
            }
            sum += ik;
            sum_sq += ik * ik;
            bound += bk;
        }
        let mean = sum / k;
        let var = if k > 1.0 {
            ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0)
        } else {
            0.0
        };
        values.push(mean);
        residual.push(bound / k);
        stderr.push((var / k).sqrt());
    }
    Ok(AutocorrelationSeries {
        tau,
        lags: lags.to_vec(),
        values,
        residual_bound: residual,
        stderr,
    })
}

/// Regression estimator of `R_τ(δτ)` from the master equation.
///
/// The window integral commutes with the linear propagation, so the state is
/// averaged over `[τ−π, τ+π]` first and a single seed `x̂ρ̄` is evolved.
pub fn autocorrelation_regression(
    rho0: &DensityMatrix,
    ops: &OperatorSet,
    params: &ModelParams,
    tau: f64,
    lags: &[f64],
    samples_per_period: usize,
    opts: &MasterOptions,
) -> Result<AutocorrelationSeries> {
    let lo = tau - PI;
    if lo < 0.0 {
        return Err(Error::InvalidParameter(format!("window start {lo:.4} precedes tau = 0")));
    }
    if (samples_per_period as f64) < MIN_SAMPLES_PER_PERIOD {
        return Err(Error::InsufficientSampling(format!(
            "{samples_per_period} samples per period, need {MIN_SAMPLES_PER_PERIOD}"
        )));
    }
    let liouv = crate::master::Liouvillian::new(ops, params);
    let mut rhs = |_t: f64, y: &DMatrix<C64>, dy: &mut DMatrix<C64>| *dy = liouv.apply(y);
    let mut stepper = Dopri5::new(0.0, rho0.matrix().clone(), opts.tolerances);
    let h = 2.0 * PI / samples_per_period as f64;
    let mut avg = DMatrix::zeros(ops.dim(), ops.dim());
    for i in 0..=samples_per_period {
        stepper.advance_to(lo + i as f64 * h, &mut rhs)?;
        let w = if i == 0 || i == samples_per_period { 0.5 * h } else { h };
        avg += stepper.state() * C64::new(w, 0.0);
    }
    let seed = ops.x.left_mul(&avg);
    let vals = propagate_seed(seed, ops, params, &ops.x, lags, opts)?;
    Ok(AutocorrelationSeries {
        tau,
        lags: lags.to_vec(),
        values: vals.iter().map(|c| c.re).collect(),
        residual_bound: vec![0.0; lags.len()],
        stderr: vec![0.0; lags.len()],
    })
}
