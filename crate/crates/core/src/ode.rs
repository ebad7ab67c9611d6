//! Adaptive Dormand–Prince 5(4) integration over generic vector states.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vector-space operations required by the integrator.
pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    /// `self += a·x`
    fn axpy(&mut self, a: f64, x: &Self);
    /// RMS of `err_i / (atol + rtol·max(|y0_i|, |y1_i|))`.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
}

impl OdeState for Vec<f64> {
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(s, v)| *s += a * v);
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let sum: f64 = err
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(e, (a, b))| {
                let sc = atol + rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum();
        (sum / err.len().max(1) as f64).sqrt()
    }
}

fn complex_error_norm<'a>(
    err: impl Iterator<Item = &'a C64>,
    y0: impl Iterator<Item = &'a C64>,
    y1: impl Iterator<Item = &'a C64>,
    atol: f64,
    rtol: f64,
) -> f64 {
    let mut n = 0usize;
    let sum: f64 = err
        .zip(y0.zip(y1))
        .map(|(e, (a, b))| {
            n += 1;
            let sc = atol + rtol * a.norm().max(b.norm());
            e.norm_sqr() / (sc * sc)
        })
        .sum();
    (sum / n.max(1) as f64).sqrt()
}

impl OdeState for Vec<C64> {
    fn zeros_like(&self) -> Self {
        vec![C64::new(0.0, 0.0); self.len()]
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(s, v)| *s += v * a);
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        complex_error_norm(err.iter(), y0.iter(), y1.iter(), atol, rtol)
    }
}

impl OdeState for DMatrix<C64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x.iter()).for_each(|(s, v)| *s += v * a);
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        complex_error_norm(err.iter(), y0.iter(), y1.iter(), atol, rtol)
    }
}

/// Error control settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    /// Steps smaller than this abort the integration.
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-8,
            min_step: 1e-12,
            max_step: 1.0,
            max_steps: 50_000_000,
        }
    }
}

impl Tolerances {
    pub fn new(atol: f64, rtol: f64) -> Self {
        Self {
            atol,
            rtol,
            ..Self::default()
        }
    }
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b̂ (fifth minus embedded fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Stepper that advances a state to requested times with local error control.
///
/// Steps are clipped to land exactly on each requested time, so callers
/// sample the solution by repeatedly calling [`Dopri5::advance_to`].
#[derive(Clone, Debug)]
pub struct Dopri5<Y: OdeState> {
    t: f64,
    y: Y,
    h: f64,
    tol: Tolerances,
    k1: Option<Y>,
    steps: usize,
    rejected: usize,
}

impl<Y: OdeState> Dopri5<Y> {
    pub fn new(t0: f64, y0: Y, tol: Tolerances) -> Self {
        Self {
            t: t0,
            y: y0,
            h: 0.0,
            tol,
            k1: None,
            steps: 0,
            rejected: 0,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &Y {
        &self.y
    }

    pub fn state_mut(&mut self) -> &mut Y {
        self.k1 = None;
        &mut self.y
    }

    pub fn accepted_steps(&self) -> usize {
        self.steps
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    pub fn advance_to<F>(&mut self, t_end: f64, rhs: &mut F) -> Result<()>
    where
        F: FnMut(f64, &Y, &mut Y),
    {
        if t_end <= self.t {
            return Ok(());
        }
        if self.k1.is_none() {
            let mut k1 = self.y.zeros_like();
            rhs(self.t, &self.y, &mut k1);
            self.k1 = Some(k1);
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(rhs).min(t_end - self.t);
        }

        let mut k2 = self.y.zeros_like();
        let mut k3 = self.y.zeros_like();
        let mut k4 = self.y.zeros_like();
        let mut k5 = self.y.zeros_like();
        let mut k6 = self.y.zeros_like();
        let mut k7 = self.y.zeros_like();

        while self.t < t_end {
            if self.steps + self.rejected >= self.tol.max_steps {
                return Err(Error::TooManySteps(self.tol.max_steps));
            }
            let remaining = t_end - self.t;
            let proposed = self.h.min(self.tol.max_step);
            let last = proposed >= remaining * (1.0 - 1e-12);
            let h = if last { remaining } else { proposed };
            let k1 = self.k1.as_ref().expect("k1 initialised");
            let t = self.t;

            let mut stage = self.y.clone();
            stage.axpy(h * A21, k1);
            rhs(t + C2 * h, &stage, &mut k2);

            let mut stage = self.y.clone();
            stage.axpy(h * A31, k1);
            stage.axpy(h * A32, &k2);
            rhs(t + C3 * h, &stage, &mut k3);

            let mut stage = self.y.clone();
            stage.axpy(h * A41, k1);
            stage.axpy(h * A42, &k2);
            stage.axpy(h * A43, &k3);
            rhs(t + C4 * h, &stage, &mut k4);

            let mut stage = self.y.clone();
            stage.axpy(h * A51, k1);
            stage.axpy(h * A52, &k2);
            stage.axpy(h * A53, &k3);
            stage.axpy(h * A54, &k4);
            rhs(t + C5 * h, &stage, &mut k5);

            let mut stage = self.y.clone();
            stage.axpy(h * A61, k1);
            stage.axpy(h * A62, &k2);
            stage.axpy(h * A63, &k3);
            stage.axpy(h * A64, &k4);
            stage.axpy(h * A65, &k5);
            rhs(t + h, &stage, &mut k6);

            let mut y_new = self.y.clone();
            y_new.axpy(h * B1, k1);
            y_new.axpy(h * B3, &k3);
            y_new.axpy(h * B4, &k4);
            y_new.axpy(h * B5, &k5);
            y_new.axpy(h * B6, &k6);
            rhs(t + h, &y_new, &mut k7);

            let mut err = k1.zeros_like();
            err.axpy(h * E1, k1);
            err.axpy(h * E3, &k3);
            err.axpy(h * E4, &k4);
            err.axpy(h * E5, &k5);
            err.axpy(h * E6, &k6);
            err.axpy(h * E7, &k7);
            let en = Y::error_norm(&err, &self.y, &y_new, self.tol.atol, self.tol.rtol);

            if en <= 1.0 {
                self.t = if last { t_end } else { t + h };
                self.y = y_new;
                std::mem::swap(self.k1.as_mut().unwrap(), &mut k7);
                self.steps += 1;
                let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                // a clipped final step keeps the controller's proposal
                if !(last && h < self.h) {
                    self.h = h * factor;
                }
            } else {
                self.rejected += 1;
                let factor = if en.is_finite() { (0.9 * en.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                self.h = h * factor;
                if self.h < self.tol.min_step {
                    return Err(Error::StepUnderflow { t, h: self.h });
                }
            }
        }
        Ok(())
    }

    fn initial_step<F>(&self, rhs: &mut F) -> f64
    where
        F: FnMut(f64, &Y, &mut Y),
    {
        let k1 = self.k1.as_ref().unwrap();
        let zero = self.y.zeros_like();
        let d0 = Y::error_norm(&self.y, &zero, &self.y, self.tol.atol, self.tol.rtol);
        let d1 = Y::error_norm(k1, &zero, &self.y, self.tol.atol, self.tol.rtol);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let mut y1 = self.y.clone();
        y1.axpy(h0, k1);
        let mut f1 = self.y.zeros_like();
        rhs(self.t + h0, &y1, &mut f1);
        let mut diff = f1;
        diff.axpy(-1.0, k1);
        let d2 = Y::error_norm(&diff, &zero, &self.y, self.tol.atol, self.tol.rtol) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.tol.max_step).max(self.tol.min_step)
    }
}

/// One classical fourth-order Runge–Kutta step of fixed size.
pub fn rk4_step<Y: OdeState, F: FnMut(f64, &Y, &mut Y)>(t: f64, y: &mut Y, h: f64, rhs: &mut F) {
    let mut k1 = y.zeros_like();
    let mut k2 = y.zeros_like();
    let mut k3 = y.zeros_like();
    let mut k4 = y.zeros_like();
    rhs(t, y, &mut k1);
    let mut s = y.clone();
    s.axpy(0.5 * h, &k1);
    rhs(t + 0.5 * h, &s, &mut k2);
    let mut s = y.clone();
    s.axpy(0.5 * h, &k2);
    rhs(t + 0.5 * h, &s, &mut k3);
    let mut s = y.clone();
    s.axpy(h, &k3);
    rhs(t + h, &s, &mut k4);
    y.axpy(h / 6.0, &k1);
    y.axpy(h / 3.0, &k2);
    y.axpy(h / 3.0, &k3);
    y.axpy(h / 6.0, &k4);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut f = |_t: f64, y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = -y[0];
        let mut s = Dopri5::new(0.0, vec![1.0], Tolerances::new(1e-12, 1e-10));
        for k in 1..=10 {
            let t = k as f64 * 0.5;
            s.advance_to(t, &mut f).unwrap();
            assert!((s.time() - t).abs() == 0.0);
            assert!((s.state()[0] - (-t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator_complex() {
        // dz/dt = -i z
        let mut f = |_t: f64, y: &Vec<C64>, dy: &mut Vec<C64>| dy[0] = C64::new(0.0, -1.0) * y[0];
        let mut s = Dopri5::new(0.0, vec![C64::new(1.0, 0.0)], Tolerances::new(1e-12, 1e-10));
        s.advance_to(100.0, &mut f).unwrap();
        let want = C64::new(0.0, -100.0).exp();
        assert!((s.state()[0] - want).norm() < 1e-7);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = cos t, y = sin t
        let mut f = |t: f64, _y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = t.cos();
        let mut s = Dopri5::new(0.0, vec![0.0], Tolerances::new(1e-12, 1e-12));
        s.advance_to(7.3, &mut f).unwrap();
        assert!((s.state()[0] - 7.3f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn blowup_underflows() {
        // y' = y² from y=1 blows up at t=1
        let mut f = |_t: f64, y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = y[0] * y[0];
        let mut tol = Tolerances::new(1e-10, 1e-10);
        tol.max_steps = 100_000;
        let mut s = Dopri5::new(0.0, vec![1.0], tol);
        assert!(s.advance_to(2.0, &mut f).is_err());
    }

    #[test]
    fn rk4_fourth_order() {
        let err = |h: f64| {
            let mut y = vec![1.0];
            let n = (1.0 / h).round() as usize;
            let mut f = |_t: f64, y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = -2.0 * y[0];
            for k in 0..n {
                rk4_step(k as f64 * h, &mut y, h, &mut f);
            }
            (y[0] - (-2.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }
}
