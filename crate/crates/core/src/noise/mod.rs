//! Classical noise processes ξ(t) that displace the atoms along the cavity
//! standing wave, and their analytic statistics.
//!
//! Spectral densities use the two-sided convention: the autocorrelation is
//! `K(τ) = ∫_{-∞}^{∞} J(ω) e^{iωτ} dω`, so the stationary variance equals the
//! integral of `J` over the symmetric band, i.e. twice the area on `ω > 0`.

mod flicker;
mod ou;
mod telegraph;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::RngStream;

pub use flicker::{flicker_band_variance, sample_flicker, sample_flicker_scaled};
pub use ou::sample_ou;
pub use telegraph::sample_telegraph;

/// Maximum mixture nesting depth.
pub const MAX_MIXTURE_DEPTH: usize = 2;

/// A classical stochastic process driving the atom displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Ornstein-Uhlenbeck noise with correlation `(Γ_ξ γ_ξ / 2) e^{-γ_ξ |τ|}`.
    Ou {
        /// γ_ξ, the inverse correlation time.
        rate: f64,
        /// Γ_ξ, the zero-frequency strength (`J(0) = Γ_ξ / 2π`).
        strength: f64,
    },
    /// Power-law noise `J(ω) = A ω^η`, band-limited to the grid's resolvable band.
    Flicker {
        amplitude: f64,
        exponent: f64,
        /// When set, the amplitude is replaced by the one giving this band variance.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_variance: Option<f64>,
    },
    /// ±1 process flipping sign with probability `p_jump` at each grid step.
    Telegraph { p_jump: f64 },
    /// Pointwise convex combination `p ξ_a + (1 - p) ξ_b` of independent paths.
    Mixture {
        a: Box<NoiseModel>,
        b: Box<NoiseModel>,
        p: f64,
    },
}

impl NoiseModel {
    pub fn ou(rate: f64, strength: f64) -> Self {
        NoiseModel::Ou { rate, strength }
    }

    pub fn flicker(amplitude: f64, exponent: f64) -> Self {
        NoiseModel::Flicker { amplitude, exponent, target_variance: None }
    }

    /// Power-law noise normalized to a fixed band variance on whatever grid it is sampled on.
    pub fn flicker_with_variance(exponent: f64, variance: f64) -> Self {
        NoiseModel::Flicker { amplitude: 1.0, exponent, target_variance: Some(variance) }
    }

    pub fn telegraph(p_jump: f64) -> Self {
        NoiseModel::Telegraph { p_jump }
    }

    pub fn mixture(a: NoiseModel, b: NoiseModel, p: f64) -> Self {
        NoiseModel::Mixture { a: Box::new(a), b: Box::new(b), p }
    }

    pub fn depth(&self) -> usize {
        match self {
            NoiseModel::Mixture { a, b, .. } => 1 + a.depth().max(b.depth()),
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() > MAX_MIXTURE_DEPTH {
            return Err(Error::param(format!(
                "mixture nesting depth {} exceeds {MAX_MIXTURE_DEPTH}",
                self.depth()
            )));
        }
        self.validate_node()
    }

    fn validate_node(&self) -> Result<()> {
        match *self {
            NoiseModel::Ou { rate, strength } => ou::check(rate, strength),
            NoiseModel::Flicker { amplitude, exponent, target_variance } => {
                flicker::check(amplitude, exponent)?;
                if let Some(v) = target_variance {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::param(format!("target variance must be positive, got {v}")));
                    }
                }
                Ok(())
            }
            NoiseModel::Telegraph { p_jump } => telegraph::check(p_jump),
            NoiseModel::Mixture { ref a, ref b, p } => {
                check_weight(p)?;
                a.validate_node()?;
                b.validate_node()
            }
        }
    }

    /// Number of leaf processes; each leaf draws from its own stream slot.
    pub fn leaf_count(&self) -> u64 {
        match self {
            NoiseModel::Mixture { a, b, .. } => a.leaf_count() + b.leaf_count(),
            _ => 1,
        }
    }

    /// Draw one realization. Leaf `k` (depth-first, `a` before `b`) uses
    /// `stream.component(k)`, so the two halves of a plain mixture for
    /// trajectory `j` use stream indices `j` and `j + 2^32`.
    pub fn sample(&self, grid: &TimeGrid, stream: RngStream) -> Result<SampledPath> {
        self.validate()?;
        let mut slot = 0;
        self.sample_slots(grid, stream, &mut slot)
    }

    fn sample_slots(&self, grid: &TimeGrid, stream: RngStream, slot: &mut u64) -> Result<SampledPath> {
        match *self {
            NoiseModel::Mixture { ref a, ref b, p } => {
                let pa = a.sample_slots(grid, stream, slot)?;
                let pb = b.sample_slots(grid, stream, slot)?;
                mix(&pa, &pb, p)
            }
            _ => {
                let leaf_stream = stream.component(*slot);
                *slot += 1;
                match *self {
                    NoiseModel::Ou { rate, strength } => sample_ou(rate, strength, grid, leaf_stream),
                    NoiseModel::Telegraph { p_jump } => sample_telegraph(p_jump, grid, leaf_stream),
                    NoiseModel::Flicker { amplitude, exponent, target_variance } => match target_variance {
                        Some(v) => sample_flicker_scaled(exponent, v, grid, leaf_stream),
                        None => sample_flicker(amplitude, exponent, grid, leaf_stream),
                    },
                    NoiseModel::Mixture { .. } => unreachable!(),
                }
            }
        }
    }

    /// Apply `f` to every O-U leaf.
    pub fn map_ou(&mut self, f: &mut impl FnMut(&mut f64, &mut f64)) {
        match self {
            NoiseModel::Ou { rate, strength } => f(rate, strength),
            NoiseModel::Mixture { a, b, .. } => {
                a.map_ou(f);
                b.map_ou(f);
            }
            _ => {}
        }
    }

    pub fn has_divergent_flicker(&self) -> bool {
        match self {
            NoiseModel::Flicker { exponent, .. } => *exponent < 0.0,
            NoiseModel::Mixture { a, b, .. } => a.has_divergent_flicker() || b.has_divergent_flicker(),
            _ => false,
        }
    }

    /// Short label used in file names and reports.
    pub fn label(&self) -> String {
        match self {
            NoiseModel::Ou { rate, .. } => format!("ou(gamma_xi={rate})"),
            NoiseModel::Flicker { exponent, .. } => format!("{}(eta={exponent})", flicker::color_name(*exponent)),
            NoiseModel::Telegraph { p_jump } => format!("telegraph(p_jump={p_jump})"),
            NoiseModel::Mixture { a, b, p } => format!("mix(p={p}; {}; {})", a.label(), b.label()),
        }
    }
}

pub(crate) fn check_weight(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("mixing weight must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// One realization ξ(t_n) on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() {
            return Err(Error::param(format!(
                "path has {} samples but the grid has {} points",
                values.len(),
                grid.n_steps()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite sample at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// All-zero path, the no-classical-noise baseline.
    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.n_steps()] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population variance (divides by N).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }
}

/// Pointwise `p ξ_a + (1 - p) ξ_b`.
pub fn mix(path_a: &SampledPath, path_b: &SampledPath, p: f64) -> Result<SampledPath> {
    check_weight(p)?;
    if !path_a.grid.same_as(&path_b.grid) {
        return Err(Error::IncompatiblePaths(format!(
            "grids differ: {:?} vs {:?}",
            path_a.grid, path_b.grid
        )));
    }
    let q = 1.0 - p;
    let values = path_a
        .values
        .iter()
        .zip(&path_b.values)
        .map(|(a, b)| p * a + q * b)
        .collect();
    Ok(SampledPath { grid: path_a.grid, values })
}

/// Two-sided spectral density `J(ω)` of `model`.
///
/// `reference` supplies the step of the telegraph chain and the band used to
/// normalize flicker noise with a target variance. Mixtures assume independent
/// components: `p² J_a + (1-p)² J_b`.
///
/// Flicker noise with `η < 0` returns `+∞` at `ω = 0`; callers must band-limit.
pub fn analytic_psd(model: &NoiseModel, omega: f64, reference: &TimeGrid) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::param(format!("frequency must be non-negative, got {omega}")));
    }
    model.validate()?;
    Ok(psd_unchecked(model, omega, reference))
}

pub(crate) fn psd_unchecked(model: &NoiseModel, omega: f64, reference: &TimeGrid) -> f64 {
    match *model {
        NoiseModel::Ou { rate, strength } => lorentzian(strength, rate, omega),
        NoiseModel::Telegraph { p_jump } => {
            // Sign chain with lag-k correlation ρ^k sampled every dt; reduces to a
            // Lorentzian of width 2r, r = p_jump/dt, for small p_jump.
            let dt = reference.dt();
            let rho = 1.0 - 2.0 * p_jump;
            if p_jump == 0.0 {
                return if omega == 0.0 { f64::INFINITY } else { 0.0 };
            }
            let den = 1.0 - 2.0 * rho * (omega * dt).cos() + rho * rho;
            if den <= 0.0 {
                return 0.0;
            }
            dt / (2.0 * PI) * (1.0 - rho * rho) / den
        }
        NoiseModel::Flicker { amplitude, exponent, target_variance } => {
            let a = flicker::effective_amplitude(amplitude, exponent, target_variance, reference);
            if omega == 0.0 {
                return match exponent {
                    e if e < 0.0 => f64::INFINITY,
                    0.0 => a,
                    _ => 0.0,
                };
            }
            a * omega.powf(exponent)
        }
        NoiseModel::Mixture { ref a, ref b, p } => {
            let q = 1.0 - p;
            let ja = if p == 0.0 { 0.0 } else { p * p * psd_unchecked(a, omega, reference) };
            let jb = if q == 0.0 { 0.0 } else { q * q * psd_unchecked(b, omega, reference) };
            ja + jb
        }
    }
}

/// `(1/2π) Γ γ² / (ω² + γ²)`, shared by the classical O-U noise and the cavity bath.
pub fn lorentzian(strength: f64, rate: f64, omega: f64) -> f64 {
    strength * rate * rate / (2.0 * PI * (omega * omega + rate * rate))
}

/// Stationary variance `K(0)`. Flicker noise needs the grid that fixes its band.
pub fn stationary_variance(model: &NoiseModel, grid: Option<&TimeGrid>) -> Result<f64> {
    model.validate()?;
    variance_node(model, grid)
}

fn variance_node(model: &NoiseModel, grid: Option<&TimeGrid>) -> Result<f64> {
    Ok(match *model {
        NoiseModel::Ou { rate, strength } => strength * rate / 2.0,
        NoiseModel::Telegraph { .. } => 1.0,
        NoiseModel::Flicker { amplitude, exponent, target_variance } => match target_variance {
            Some(v) => v,
            None => amplitude * flicker_band_variance(exponent, grid.ok_or(Error::MissingGrid)?),
        },
        NoiseModel::Mixture { ref a, ref b, p } => {
            let q = 1.0 - p;
            let va = if p == 0.0 { 0.0 } else { p * p * variance_node(a, grid)? };
            let vb = if q == 0.0 { 0.0 } else { q * q * variance_node(b, grid)? };
            va + vb
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, dt: f64) -> TimeGrid {
        TimeGrid::new(0.0, dt, n).unwrap()
    }

    #[test]
    fn ou_variance_matches_closed_form() {
        let v = stationary_variance(&NoiseModel::ou(15.0, 2.0), None).unwrap();
        assert_relative_eq!(v, 15.0);
    }

    #[test]
    fn telegraph_variance_is_one() {
        assert_eq!(stationary_variance(&NoiseModel::telegraph(0.35), None).unwrap(), 1.0);
    }

    #[test]
    fn mixture_variance_weights_are_squared() {
        let m = NoiseModel::mixture(NoiseModel::ou(15.0, 2.0), NoiseModel::telegraph(0.2), 0.5);
        assert_relative_eq!(stationary_variance(&m, None).unwrap(), 4.0);
    }

    #[test]
    fn flicker_variance_needs_grid() {
        let m = NoiseModel::flicker(1.0, -1.0);
        assert!(matches!(stationary_variance(&m, None), Err(Error::MissingGrid)));
        assert!(stationary_variance(&m, Some(&grid(1024, 0.01))).unwrap() > 0.0);
        let fixed = NoiseModel::flicker_with_variance(2.0, 3.0);
        assert_eq!(stationary_variance(&fixed, None).unwrap(), 3.0);
    }

    #[test]
    fn ou_psd_at_zero_and_half_width() {
        let g = grid(16, 0.01);
        let m = NoiseModel::ou(7.0, 2.0);
        let j0 = analytic_psd(&m, 0.0, &g).unwrap();
        assert_relative_eq!(j0, 1.0 / PI, epsilon = 1e-15);
        assert_relative_eq!(analytic_psd(&m, 7.0, &g).unwrap(), j0 / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_of_identical_models_halves_psd() {
        let g = grid(16, 0.01);
        let ou = NoiseModel::ou(3.0, 2.0);
        let m = NoiseModel::mixture(ou.clone(), ou.clone(), 0.5);
        for w in [0.0, 1.0, 3.0, 40.0] {
            assert_relative_eq!(
                analytic_psd(&m, w, &g).unwrap(),
                0.5 * analytic_psd(&ou, w, &g).unwrap(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn telegraph_psd_limits() {
        let g = grid(16, 1e-3);
        let p: f64 = 1e-4;
        let r = p / 1e-3;
        for w in [0.0, 0.1, 0.5] {
            let lorentz = (2.0 * r / PI) / (w * w + 4.0 * r * r);
            assert_relative_eq!(analytic_psd(&NoiseModel::telegraph(p), w, &g).unwrap(), lorentz, max_relative = 1e-3);
        }
        assert_eq!(analytic_psd(&NoiseModel::telegraph(0.5), 7.0, &g).unwrap(), 1e-3 / (2.0 * PI));
    }

    #[test]
    fn telegraph_psd_carries_unit_power() {
        let g = grid(16, 1e-3);
        let m = NoiseModel::telegraph(0.35);
        let n = 200_000;
        let h = g.nyquist() / n as f64;
        let total: f64 = (0..n).map(|k| 2.0 * h * psd_unchecked(&m, (k as f64 + 0.5) * h, &g)).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn flicker_psd_at_zero() {
        let g = grid(16, 0.01);
        assert_eq!(analytic_psd(&NoiseModel::flicker(1.0, -1.0), 0.0, &g).unwrap(), f64::INFINITY);
        assert_eq!(analytic_psd(&NoiseModel::flicker(1.0, 2.0), 0.0, &g).unwrap(), 0.0);
        assert_eq!(analytic_psd(&NoiseModel::flicker(0.5, 0.0), 0.0, &g).unwrap(), 0.5);
        assert!(analytic_psd(&NoiseModel::flicker(1.0, 0.0), -1.0, &g).is_err());
    }

    #[test]
    fn depth_limit_enforced() {
        let leaf = NoiseModel::telegraph(0.1);
        let d2 = NoiseModel::mixture(NoiseModel::mixture(leaf.clone(), leaf.clone(), 0.5), leaf.clone(), 0.5);
        assert!(d2.validate().is_ok());
        let d3 = NoiseModel::mixture(d2, leaf, 0.5);
        assert!(d3.validate().is_err());
    }

    #[test]
    fn mix_endpoints_and_grid_check() {
        let g = grid(100, 0.01);
        let a = sample_ou(1.0, 2.0, &g, RngStream::new(1, 0)).unwrap();
        let b = sample_telegraph(0.3, &g, RngStream::new(1, 1)).unwrap();
        assert_eq!(mix(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mix(&a, &b, 0.0).unwrap(), b);
        assert!(mix(&a, &b, 1.5).is_err());
        let other = SampledPath::zeros(grid(100, 0.02));
        assert!(matches!(mix(&a, &other, 0.5), Err(Error::IncompatiblePaths(_))));
    }

    #[test]
    fn mix_of_constant_ones_is_ones() {
        let g = grid(50, 0.01);
        let ones = SampledPath::new(g, vec![1.0; 50]).unwrap();
        let m = mix(&ones, &ones, 0.5).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mixture_streams_are_separate_slots() {
        let g = grid(64, 0.01);
        let a = NoiseModel::telegraph(0.5);
        let b = NoiseModel::ou(2.0, 1.0);
        let s = RngStream::new(9, 4);
        let mixed = NoiseModel::mixture(a.clone(), b.clone(), 0.25).sample(&g, s).unwrap();
        let pa = a.sample(&g, s).unwrap();
        let pb = b.sample(&g, s.component(1)).unwrap();
        assert_eq!(mixed, mix(&pa, &pb, 0.25).unwrap());
    }

    #[test]
    fn path_rejects_nonfinite() {
        let g = grid(3, 0.1);
        assert!(SampledPath::new(g, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(SampledPath::new(g, vec![0.0, 0.0]).is_err());
    }
}
