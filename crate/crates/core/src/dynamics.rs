//! Single-excitation amplitude dynamics of two atoms in a leaky cavity.
//!
//! With one excitation shared between the atoms, the cavity mode and a
//! Lorentzian bath, the state is `C1|eg,0⟩ + C2|ge,0⟩ + C3|gg,1⟩ + C4|gg,0⟩`
//! plus bath amplitudes. The bath is eliminated exactly through the memory
//! variable `I(t) = ∫_0^t (Γ_Q γ_Q / 2) e^{-γ_Q (t-s)} C3(s) ds`, giving
//!
//! ```text
//! dC1/dt = -i G1 C3
//! dC2/dt = -i G2 C3
//! dC3/dt = -i G1 C1 - i G2 C2 - I
//! dC4/dt = 0
//! dI/dt  = -γ_Q I + (Γ_Q γ_Q / 2) C3
//! ```
//!
//! with couplings `G_i = G_0i sin(κ (x_0i + s ξ(t)))`. Units are ω = Ω = 1.

use std::f64::consts::FRAC_PI_2;
use std::ops::{Add, Mul};

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::noise::SampledPath;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance on the initial norm `Σ|C_i|² ≤ 1`.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Γ_Q, global dissipation rate of the cavity bath.
    pub dissipation: f64,
    /// γ_Q, width of the bath Lorentzian (inverse memory time).
    pub memory_rate: f64,
    /// G_0i, peak atom-cavity coupling of each atom.
    pub g0: [f64; 2],
    /// κ, standing-wave wave number.
    pub kappa: f64,
    /// x_0i, balanced position of each atom.
    pub x0: [f64; 2],
    /// Multiplier applied to ξ(t) before it displaces the atoms.
    pub noise_scale: f64,
}

impl Default for SystemParams {
    /// Both atoms at the antinode with unit coupling, Γ_Q = γ_Q = 1.
    fn default() -> Self {
        Self {
            dissipation: 1.0,
            memory_rate: 1.0,
            g0: [1.0, 1.0],
            kappa: 1.0,
            x0: [FRAC_PI_2, FRAC_PI_2],
            noise_scale: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.dissipation, self.memory_rate, self.kappa, self.noise_scale]
            .iter()
            .chain(&self.g0)
            .chain(&self.x0)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("system parameters must be finite"));
        }
        if self.dissipation < 0.0 {
            return Err(Error::param(format!("Gamma_Q must be non-negative, got {}", self.dissipation)));
        }
        if !(self.memory_rate > 0.0) {
            return Err(Error::param(format!("gamma_Q must be positive, got {}", self.memory_rate)));
        }
        if self.g0.iter().any(|&g| g < 0.0) {
            return Err(Error::param("coupling amplitudes G0 must be non-negative"));
        }
        Ok(())
    }

    /// Same system with atoms 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            g0: [self.g0[1], self.g0[0]],
            x0: [self.x0[1], self.x0[0]],
            ..*self
        }
    }

    /// Source strength `Γ_Q γ_Q / 2` of the memory variable.
    fn kernel_weight(&self) -> f64 {
        self.dissipation * self.memory_rate / 2.0
    }
}

/// `G_0i sin(κ (x_0i + s ξ))` for atom 1 or 2.
pub fn coupling_at(params: &SystemParams, xi: f64, atom: usize) -> f64 {
    assert!(atom == 1 || atom == 2, "atom index must be 1 or 2, got {atom}");
    let k = atom - 1;
    params.g0[k] * (params.kappa * (params.x0[k] + params.noise_scale * xi)).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeState {
    pub c1: Complex64,
    pub c2: Complex64,
    pub c3: Complex64,
    pub c4: Complex64,
    /// Memory variable I(t).
    pub memory: Complex64,
}

impl AmplitudeState {
    pub const ZERO: Self = Self {
        c1: Complex64::ZERO,
        c2: Complex64::ZERO,
        c3: Complex64::ZERO,
        c4: Complex64::ZERO,
        memory: Complex64::ZERO,
    };

    /// `(|eg⟩ + |ge⟩)/√2` with empty cavity and bath.
    pub fn bell() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { c1: a, c2: a, ..Self::ZERO }
    }

    pub fn atomic(c1: Complex64, c2: Complex64) -> Self {
        Self { c1, c2, ..Self::ZERO }
    }

    /// `|C1|² + |C2|² + |C3|² + |C4|²`; the bath holds the rest.
    pub fn norm_sqr(&self) -> f64 {
        self.c1.norm_sqr() + self.c2.norm_sqr() + self.c3.norm_sqr() + self.c4.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        [self.c1, self.c2, self.c3, self.c4, self.memory]
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.c1 - other.c1,
            self.c2 - other.c2,
            self.c3 - other.c3,
            self.c4 - other.c4,
            self.memory - other.memory,
        ]
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
    }
}

impl Add for AmplitudeState {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            c1: self.c1 + o.c1,
            c2: self.c2 + o.c2,
            c3: self.c3 + o.c3,
            c4: self.c4 + o.c4,
            memory: self.memory + o.memory,
        }
    }
}

impl Mul<f64> for AmplitudeState {
    type Output = Self;

    fn mul(self, k: f64) -> Self {
        Self {
            c1: self.c1 * k,
            c2: self.c2 * k,
            c3: self.c3 * k,
            c4: self.c4 * k,
            memory: self.memory * k,
        }
    }
}

impl Mul<AmplitudeState> for Complex64 {
    type Output = AmplitudeState;

    fn mul(self, s: AmplitudeState) -> AmplitudeState {
        AmplitudeState {
            c1: self * s.c1,
            c2: self * s.c2,
            c3: self * s.c3,
            c4: self * s.c4,
            memory: self * s.memory,
        }
    }
}

/// Time derivative of the amplitudes for frozen couplings `g1`, `g2`.
pub fn rhs(state: &AmplitudeState, g1: f64, g2: f64, params: &SystemParams) -> AmplitudeState {
    AmplitudeState {
        c1: -I * g1 * state.c3,
        c2: -I * g2 * state.c3,
        c3: -I * (g1 * state.c1 + g2 * state.c2) - state.memory,
        c4: Complex64::ZERO,
        memory: -params.memory_rate * state.memory + params.kernel_weight() * state.c3,
    }
}

/// One classical RK4 step with the couplings held over the whole step.
pub fn step_rk4(state: &AmplitudeState, dt: f64, g1: f64, g2: f64, params: &SystemParams) -> AmplitudeState {
    let k1 = rhs(state, g1, g2, params);
    let k2 = rhs(&(*state + k1 * (dt / 2.0)), g1, g2, params);
    let k3 = rhs(&(*state + k2 * (dt / 2.0)), g1, g2, params);
    let k4 = rhs(&(*state + k3 * dt), g1, g2, params);
    *state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Grid indices recorded with a given stride: `0, s, 2s, …` plus the final index.
pub fn record_indices(n_steps: usize, stride: usize) -> Vec<usize> {
    let last = n_steps - 1;
    let mut idx: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if *idx.last().unwrap() != last {
        idx.push(last);
    }
    idx
}

/// Integrate one trajectory, calling `record(slot, state)` at every recorded grid point.
///
/// Step `n → n+1` uses the couplings evaluated from `ξ(t_n)`.
pub fn integrate_with<F>(
    params: &SystemParams,
    path: &SampledPath,
    init: &AmplitudeState,
    stride: usize,
    mut record: F,
) -> Result<()>
where
    F: FnMut(usize, &AmplitudeState),
{
    params.validate()?;
    if stride == 0 {
        return Err(Error::param("stride must be at least 1"));
    }
    if !init.is_finite() || init.norm_sqr() > 1.0 + NORM_TOLERANCE {
        return Err(Error::param(format!(
            "initial state must be normalized (norm² = {})",
            init.norm_sqr()
        )));
    }
    let grid = path.grid();
    let dt = grid.dt();
    let last = grid.n_steps() - 1;

    let mut state = *init;
    let mut slot = 0;
    record(slot, &state);
    slot += 1;
    for (n, &xi) in path.values()[..last].iter().enumerate() {
        let g1 = coupling_at(params, xi, 1);
        let g2 = coupling_at(params, xi, 2);
        state = step_rk4(&state, dt, g1, g2, params);
        let step = n + 1;
        if !state.is_finite() {
            return Err(Error::Divergence { step, time: grid.time(step) });
        }
        if step % stride == 0 || step == last {
            record(slot, &state);
            slot += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub grid: TimeGrid,
    pub indices: Vec<usize>,
    pub states: Vec<AmplitudeState>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.indices.iter().map(|&i| self.grid.time(i))
    }

    pub fn last(&self) -> &AmplitudeState {
        self.states.last().expect("record always holds the initial state")
    }
}

/// Integrate one noise realization over its whole grid.
pub fn run_trajectory(
    params: &SystemParams,
    path: &SampledPath,
    init: &AmplitudeState,
    stride: usize,
) -> Result<TrajectoryRecord> {
    let indices = record_indices(path.grid().n_steps(), stride.max(1));
    let mut states = Vec::with_capacity(indices.len());
    integrate_with(params, path, init, stride, |_, s| states.push(*s))?;
    Ok(TrajectoryRecord { grid: *path.grid(), indices, states })
}

/// Generator of the linear system for `(C1, C2, C3, I)` at fixed couplings.
fn generator(params: &SystemParams, g1: f64, g2: f64) -> Matrix4<Complex64> {
    let z = Complex64::ZERO;
    let mg1 = -I * g1;
    let mg2 = -I * g2;
    let w = Complex64::new(params.kernel_weight(), 0.0);
    let r = Complex64::new(-params.memory_rate, 0.0);
    Matrix4::new(
        z, z, mg1, z, //
        z, z, mg2, z, //
        mg1, mg2, z, -Complex64::ONE, //
        z, z, w, r,
    )
}

/// Exact solution at time `t` (measured from `init`) with ξ ≡ 0, via the
/// matrix exponential of the 4×4 generator.
pub fn analytic_constant_g(params: &SystemParams, t: f64, init: &AmplitudeState) -> Result<AmplitudeState> {
    params.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(*init);
    }
    let g1 = coupling_at(params, 0.0, 1);
    let g2 = coupling_at(params, 0.0, 2);
    let propagator = (generator(params, g1, g2) * Complex64::new(t, 0.0)).exp();
    let v = propagator * Vector4::new(init.c1, init.c2, init.c3, init.memory);
    Ok(AmplitudeState { c1: v[0], c2: v[1], c3: v[2], c4: init.c4, memory: v[3] })
}
