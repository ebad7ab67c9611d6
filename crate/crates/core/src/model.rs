//! Dimensionless parameters, Fock-space truncation and operator construction.
//!
//! Time is measured as `τ = Ωt`. The quantum engines share the Hamiltonian
//!
//! ```text
//! H = [−Δ + g(b† + b)] a†a + b†b + ε(a† + a)
//! ```
//!
//! with `g = g_rad/Ω = 2σκ̄` and `ε = α_las/Ω = √(P/8)/g`, and the damping
//! channels `√(2κ̄)·a` and `√(2Γ̄)·b`. Basis states `|n_cav, n_mech⟩` are
//! stored cavity-major: `index = n_cav · N_mech + n_mech`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, Operator};
#[cfg(test)]
use crate::sparse::max_abs;

/// The five dimensionless model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Laser-cavity detuning `Δ = (Ω_las − Ω_cav)/Ω`.
    pub detuning: f64,
    /// Pump power `P`.
    pub pump: f64,
    /// Quantum-classical scaling parameter `σ = g_rad/κ`.
    pub sigma: f64,
    /// Cavity damping `κ̄ = κ/(2Ω)`.
    pub kappa: f64,
    /// Mechanical damping `Γ̄ = Γ/(2Ω)`.
    pub gamma: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            detuning: -0.4,
            pump: 1.5,
            sigma: 0.0,
            kappa: 0.5,
            gamma: 5e-4,
        }
    }
}

impl ModelParams {
    pub fn new(detuning: f64, pump: f64, sigma: f64) -> Self {
        Self {
            detuning,
            pump,
            sigma,
            ..Self::default()
        }
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        Self { detuning, ..self }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.detuning, self.pump, self.sigma, self.kappa, self.gamma]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if self.pump < 0.0 {
            return Err(Error::InvalidParameter(format!("pump power P = {} must be >= 0", self.pump)));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma = {} must be >= 0", self.sigma)));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidParameter(format!("cavity damping kappa = {} must be > 0", self.kappa)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!("mechanical damping gamma = {} must be > 0", self.gamma)));
        }
        Ok(())
    }

    pub fn couplings(&self) -> Result<DerivedCouplings> {
        derive_couplings(self)
    }
}

/// Couplings and rates in units of the mechanical frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedCouplings {
    /// `g = g_rad/Ω`.
    pub coupling: f64,
    /// `κ/Ω = 2κ̄`.
    pub cavity_rate: f64,
    /// `Γ/Ω = 2Γ̄`.
    pub mech_rate: f64,
    pump: f64,
}

impl DerivedCouplings {
    /// Scaled drive `ε = α_las/Ω`. Undefined in the classical limit.
    pub fn drive(&self) -> Result<f64> {
        if self.coupling <= 0.0 {
            return Err(Error::ClassicalLimit);
        }
        Ok((self.pump / 8.0).sqrt() / self.coupling)
    }

    /// Recovers `P = 8ε²g²`.
    pub fn pump(&self) -> Result<f64> {
        let eps = self.drive()?;
        Ok(8.0 * eps * eps * self.coupling * self.coupling)
    }

    /// Converts a classical cavity amplitude `α` into `⟨a⟩ = 2εα`.
    pub fn cavity_amplitude(&self, alpha: C64) -> Result<C64> {
        Ok(alpha * (2.0 * self.drive()?))
    }

    /// Converts a classical mechanical amplitude `β` into `⟨b⟩ = β/g`.
    pub fn mech_amplitude(&self, beta: C64) -> Result<C64> {
        if self.coupling <= 0.0 {
            return Err(Error::ClassicalLimit);
        }
        Ok(beta / self.coupling)
    }
}

pub fn derive_couplings(params: &ModelParams) -> Result<DerivedCouplings> {
    params.validate()?;
    Ok(DerivedCouplings {
        coupling: 2.0 * params.sigma * params.kappa,
        cavity_rate: 2.0 * params.kappa,
        mech_rate: 2.0 * params.gamma,
        pump: params.pump,
    })
}

/// Truncation of the two bosonic modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    /// Number of cavity Fock levels.
    pub cavity: usize,
    /// Number of mechanical Fock levels.
    pub mech: usize,
    /// Largest admissible product-space dimension.
    pub max_dim: usize,
    /// Operators on spaces up to this dimension are stored dense.
    pub dense_threshold: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self {
            cavity: 6,
            mech: 6,
            max_dim: 250_000,
            dense_threshold: 16,
        }
    }
}

impl FockConfig {
    pub fn new(cavity: usize, mech: usize) -> Self {
        Self {
            cavity,
            mech,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.cavity * self.mech
    }

    pub fn validate(&self) -> Result<()> {
        if self.cavity < 2 || self.mech < 2 {
            return Err(Error::InvalidTruncation(format!(
                "need at least 2 levels per mode, got cavity={} mech={}",
                self.cavity, self.mech
            )));
        }
        if self.dim() > self.max_dim {
            return Err(Error::InvalidTruncation(format!(
                "dimension {} exceeds the memory budget of {}",
                self.dim(),
                self.max_dim
            )));
        }
        Ok(())
    }

    /// Picks truncations so that coherent states with the given mode amplitudes
    /// (`⟨a⟩`, `⟨b⟩` magnitudes) keep a Poisson tail mass below `tail`.
    pub fn for_amplitudes(cavity_amp: f64, mech_amp: f64, tail: f64) -> Self {
        Self {
            cavity: levels_for_tail(cavity_amp, tail),
            mech: levels_for_tail(mech_amp, tail),
            ..Self::default()
        }
    }

    /// Index of `|n_cav, n_mech⟩`.
    #[inline]
    pub fn index(&self, n_cav: usize, n_mech: usize) -> usize {
        n_cav * self.mech + n_mech
    }
}

/// Poisson mass of levels `n ≥ dim` for a coherent state of amplitude `|z|`.
pub fn poisson_tail(amplitude: f64, dim: usize) -> f64 {
    let mean = amplitude * amplitude;
    if mean == 0.0 {
        return 0.0;
    }
    // Sum the head in log space and subtract; exact enough for tails above 1e-15.
    let mut log_p = -mean;
    let mut head = 0.0;
    for n in 0..dim {
        if n > 0 {
            log_p += mean.ln() - (n as f64).ln();
        }
        head += log_p.exp();
    }
    (1.0 - head).max(0.0)
}

/// Smallest truncation whose Poisson tail beyond the last level is below `tail`.
pub fn levels_for_tail(amplitude: f64, tail: f64) -> usize {
    let mut dim = 2;
    while poisson_tail(amplitude, dim) >= tail {
        dim += 1;
    }
    dim
}

/// Largest Poisson tail mass a truncated coherent state may drop.
pub const COHERENT_TAIL: f64 = 1e-6;

/// Coherent state `|z⟩` truncated to `dim` levels and renormalized.
pub fn coherent_state(z: C64, dim: usize) -> Result<Vec<C64>> {
    const TAIL: f64 = COHERENT_TAIL;
    if dim == 0 || poisson_tail(z.norm(), dim) >= TAIL {
        return Err(Error::TruncationTail {
            amplitude: z.norm(),
            dim,
            required: levels_for_tail(z.norm(), TAIL),
        });
    }
    let mut c = Vec::with_capacity(dim);
    let mut cur = C64::new((-0.5 * z.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        if n > 0 {
            cur *= z / (n as f64).sqrt();
        }
        c.push(cur);
    }
    normalize(&mut c);
    Ok(c)
}

pub(crate) fn normalize(v: &mut [C64]) -> f64 {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        let inv = 1.0 / norm;
        v.iter_mut().for_each(|c| *c *= inv);
    }
    norm
}

/// Normalized superposition `|z₁⟩ + |z₂⟩` of two coherent states.
pub fn cat_state(z1: C64, z2: C64, dim: usize) -> Result<Vec<C64>> {
    let a = coherent_state(z1, dim)?;
    let b = coherent_state(z2, dim)?;
    let mut v: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    if normalize(&mut v) < 1e-12 {
        return Err(Error::InvalidParameter("cat components cancel".into()));
    }
    Ok(v)
}

/// Tensor product `|cav⟩ ⊗ |mech⟩` in the cavity-major layout.
pub fn product_state(cav: &[C64], mech: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(cav.len() * mech.len());
    for c in cav {
        for m in mech {
            out.push(c * m);
        }
    }
    out
}

/// All operators used by the quantum engines.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub fock: FockConfig,
    pub coupling: f64,
    pub drive: f64,
    pub detuning: f64,
    /// Cavity annihilation operator `a`.
    pub a: Operator,
    /// Mechanical annihilation operator `b`.
    pub b: Operator,
    /// `a†a` (diagonal).
    pub n_cav: Operator,
    /// `b†b` (diagonal).
    pub n_mech: Operator,
    pub hamiltonian: Operator,
    /// `x̂ = (g/√2)(b† + b)`.
    pub x: Operator,
    /// `p̂ = (i g/√2)(b† − b)`.
    pub p: Operator,
    /// `x̂²` in the truncated space.
    pub x2: Operator,
    /// `p̂²` in the truncated space.
    pub p2: Operator,
}

/// Ladder operator of one mode lifted to the product space.
fn ladder(fock: &FockConfig, cavity: bool) -> CsrMatrix {
    let dim = fock.dim();
    let mut trips = Vec::with_capacity(dim);
    for nc in 0..fock.cavity {
        for nm in 0..fock.mech {
            let row = fock.index(nc, nm);
            if cavity && nc + 1 < fock.cavity {
                trips.push((row, fock.index(nc + 1, nm), C64::new(((nc + 1) as f64).sqrt(), 0.0)));
            }
            if !cavity && nm + 1 < fock.mech {
                trips.push((row, fock.index(nc, nm + 1), C64::new(((nm + 1) as f64).sqrt(), 0.0)));
            }
        }
    }
    CsrMatrix::from_triplets(dim, dim, trips)
}

fn number(fock: &FockConfig, cavity: bool) -> CsrMatrix {
    let dim = fock.dim();
    let mut trips = Vec::with_capacity(dim);
    for nc in 0..fock.cavity {
        for nm in 0..fock.mech {
            let n = if cavity { nc } else { nm };
            if n > 0 {
                let i = fock.index(nc, nm);
                trips.push((i, i, C64::new(n as f64, 0.0)));
            }
        }
    }
    CsrMatrix::from_triplets(dim, dim, trips)
}

/// Builds `a`, `b`, the Hamiltonian and the scaled quadratures.
pub fn build_operators(fock: FockConfig, coupling: f64, drive: f64, detuning: f64) -> Result<OperatorSet> {
    fock.validate()?;
    let a = ladder(&fock, true);
    let b = ladder(&fock, false);
    let ad = a.adjoint();
    let bd = b.adjoint();
    let n_cav = number(&fock, true);
    let n_mech = number(&fock, false);

    let one = C64::new(1.0, 0.0);
    let position = bd.add(&b, one, one);
    // [−Δ + g(b† + b)] a†a + b†b + ε(a† + a)
    let hamiltonian = n_cav
        .scale(C64::new(-detuning, 0.0))
        .add(&position.matmul(&n_cav), one, C64::new(coupling, 0.0))
        .add(&n_mech, one, one)
        .add(&ad.add(&a, one, one), one, C64::new(drive, 0.0));

    let s = coupling / std::f64::consts::SQRT_2;
    let x = position.scale(C64::new(s, 0.0));
    let p = bd.add(&b, one, -one).scale(C64::new(0.0, s));
    let x2 = x.matmul(&x);
    let p2 = p.matmul(&p);

    let t = fock.dense_threshold;
    Ok(OperatorSet {
        fock,
        coupling,
        drive,
        detuning,
        a: Operator::with_threshold(a, t),
        b: Operator::with_threshold(b, t),
        n_cav: Operator::with_threshold(n_cav, t),
        n_mech: Operator::with_threshold(n_mech, t),
        hamiltonian: Operator::with_threshold(hamiltonian, t),
        x: Operator::with_threshold(x, t),
        p: Operator::with_threshold(p, t),
        x2: Operator::with_threshold(x2, t),
        p2: Operator::with_threshold(p2, t),
    })
}

impl OperatorSet {
    /// Operators for `params` at the given truncation. Requires `σ > 0`.
    pub fn from_params(params: &ModelParams, fock: FockConfig) -> Result<Self> {
        let c = derive_couplings(params)?;
        build_operators(fock, c.coupling, c.drive()?, params.detuning)
    }

    pub fn dim(&self) -> usize {
        self.fock.dim()
    }

    pub fn hamiltonian_dense(&self) -> DMatrix<C64> {
        self.hamiltonian.to_dense()
    }

    /// Product state of coherent states with mode amplitudes `⟨a⟩ = za`, `⟨b⟩ = zb`.
    pub fn coherent_product(&self, za: C64, zb: C64) -> Result<Vec<C64>> {
        Ok(product_state(
            &coherent_state(za, self.fock.cavity)?,
            &coherent_state(zb, self.fock.mech)?,
        ))
    }
}
