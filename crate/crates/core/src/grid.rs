use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_n = t0 + n dt`, `n = 0..n_steps`. Times are in units of 1/ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::param(format!("t0 must be finite, got {t0}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param(format!("dt must be positive, got {dt}")));
        }
        if n_steps < 2 {
            return Err(Error::param(format!("n_steps must be at least 2, got {n_steps}")));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid covering `[t0, t_end]`; `t_end - t0` is rounded to a whole number of steps.
    pub fn spanning(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > t0) {
            return Err(Error::param(format!("t_end ({t_end}) must exceed t0 ({t0})")));
        }
        if !(dt > 0.0) {
            return Err(Error::param(format!("dt must be positive, got {dt}")));
        }
        let steps = ((t_end - t0) / dt).round() as usize;
        Self::new(t0, dt, steps + 1)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps - 1)
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.n_steps - 1) as f64
    }

    /// Index of the grid point closest to `t`, if `t` lies on the grid span.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        if x < -0.5 || x > (self.n_steps - 1) as f64 + 0.5 {
            return None;
        }
        Some((x.round().max(0.0) as usize).min(self.n_steps - 1))
    }

    /// Same span at half the step size.
    pub fn refined(&self) -> Self {
        Self {
            t0: self.t0,
            dt: self.dt / 2.0,
            n_steps: 2 * (self.n_steps - 1) + 1,
        }
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.dt
    }

    /// Frequency band `(2π/(n dt), π/dt)` spanned by the discrete Fourier bins of the grid.
    pub fn resolvable_band(&self) -> (f64, f64) {
        (2.0 * PI / (self.n_steps as f64 * self.dt), self.nyquist())
    }

    pub(crate) fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && self.dt.to_bits() == other.dt.to_bits()
            && self.t0.to_bits() == other.t0.to_bits()
    }
}
