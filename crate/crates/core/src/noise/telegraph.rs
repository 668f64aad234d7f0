use rand::Rng;

use super::SampledPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::RngStream;

pub(super) fn check(p_jump: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_jump) {
        return Err(Error::param(format!("p_jump must lie in [0, 1], got {p_jump}")));
    }
    Ok(())
}

/// ±1 path starting from a fair coin; each step flips sign with probability `p_jump`.
pub fn sample_telegraph(p_jump: f64, grid: &TimeGrid, stream: RngStream) -> Result<SampledPath> {
    check(p_jump)?;
    let mut rng = stream.rng();
    let mut x = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut values = Vec::with_capacity(grid.n_steps());
    values.push(x);
    for _ in 1..grid.n_steps() {
        if rng.random::<f64>() < p_jump {
            x = -x;
        }
        values.push(x);
    }
    SampledPath::new(*grid, values)
}
