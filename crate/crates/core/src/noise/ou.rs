use rand_distr::{Distribution, StandardNormal};

use super::SampledPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::RngStream;

pub(super) fn check(rate: f64, strength: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param(format!("O-U rate gamma_xi must be positive, got {rate}")));
    }
    if !(strength > 0.0 && strength.is_finite()) {
        return Err(Error::param(format!("O-U strength Gamma_xi must be positive, got {strength}")));
    }
    Ok(())
}

/// Stationary O-U path sampled with the exact one-step transition
///
/// `ξ_{n+1} = ξ_n e^{-γ dt} + s N(0,1)`, `s² = (Γγ/2)(1 - e^{-2γ dt})`,
///
/// starting from the stationary law `N(0, Γγ/2)`.
pub fn sample_ou(rate: f64, strength: f64, grid: &TimeGrid, stream: RngStream) -> Result<SampledPath> {
    check(rate, strength)?;
    let variance = strength * rate / 2.0;
    let decay = (-rate * grid.dt()).exp();
    let kick = (variance * -(-2.0 * rate * grid.dt()).exp_m1()).sqrt();

    let mut rng = stream.rng();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut values = Vec::with_capacity(grid.n_steps());
    let mut x = variance.sqrt() * normal();
    values.push(x);
    for _ in 1..grid.n_steps() {
        x = x * decay + kick * normal();
        values.push(x);
    }
    SampledPath::new(*grid, values)
}
