//! Power-law noise by spectral synthesis.
//!
//! Each positive Fourier bin `k` of the grid receives an independent complex
//! Gaussian coefficient whose variance is the band power of `A ω^η` over
//! `[ω_k, ω_{k+1}]`, capped at the Nyquist frequency. The spectrum is
//! Hermitian-symmetrized and inverse-transformed; the DC bin is zero. Summed
//! over bins this reproduces the band-limited variance exactly.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use super::SampledPath;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::RngStream;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(super) fn check(amplitude: f64, exponent: f64) -> Result<()> {
    if !(-2.0..=2.0).contains(&exponent) {
        return Err(Error::UnsupportedExponent(exponent));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::param(format!("flicker amplitude must be positive, got {amplitude}")));
    }
    Ok(())
}

pub(super) fn color_name(exponent: f64) -> &'static str {
    match exponent {
        -2.0 => "red",
        -1.0 => "pink",
        0.0 => "white",
        1.0 => "blue",
        2.0 => "violet",
        _ => "flicker",
    }
}

/// `∫_lo^hi ω^η dω`.
fn power_law_integral(exponent: f64, lo: f64, hi: f64) -> f64 {
    let e1 = exponent + 1.0;
    if e1.abs() < 1e-12 {
        (hi / lo).ln()
    } else {
        (hi.powf(e1) - lo.powf(e1)) / e1
    }
}

/// Variance of unit-amplitude power-law noise on `grid`: `2 ∫ ω^η dω` over the resolvable band.
pub fn flicker_band_variance(exponent: f64, grid: &TimeGrid) -> f64 {
    let (lo, hi) = grid.resolvable_band();
    2.0 * power_law_integral(exponent, lo, hi)
}

pub(super) fn effective_amplitude(
    amplitude: f64,
    exponent: f64,
    target_variance: Option<f64>,
    grid: &TimeGrid,
) -> f64 {
    match target_variance {
        Some(v) => v / flicker_band_variance(exponent, grid),
        None => amplitude,
    }
}

/// Real zero-mean path with one-sided periodogram following `A ω^η` over the resolvable band.
pub fn sample_flicker(amplitude: f64, exponent: f64, grid: &TimeGrid, stream: RngStream) -> Result<SampledPath> {
    check(amplitude, exponent)?;
    synthesize(amplitude, exponent, grid, stream)
}

/// As [`sample_flicker`], with the amplitude chosen so the band variance equals `variance`.
pub fn sample_flicker_scaled(exponent: f64, variance: f64, grid: &TimeGrid, stream: RngStream) -> Result<SampledPath> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param(format!("target variance must be positive, got {variance}")));
    }
    check(1.0, exponent)?;
    let amplitude = effective_amplitude(1.0, exponent, Some(variance), grid);
    synthesize(amplitude, exponent, grid, stream)
}

fn synthesize(amplitude: f64, exponent: f64, grid: &TimeGrid, stream: RngStream) -> Result<SampledPath> {
    let n = grid.n_steps();
    let d_omega = 2.0 * PI / (n as f64 * grid.dt());
    let nyquist = grid.nyquist();
    // Highest bin strictly below Nyquist; for even n the Nyquist bin itself has no band.
    let k_max = (n - 1) / 2;

    let mut rng = stream.rng();
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..=k_max {
        let lo = k as f64 * d_omega;
        let hi = ((k + 1) as f64 * d_omega).min(nyquist);
        let power = 2.0 * amplitude * power_law_integral(exponent, lo, hi);
        // E|X_k|² = power / 2, and the mirror bin carries the other half.
        let scale = (power / 4.0).sqrt();
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let c = Complex64::new(scale * re, scale * im);
        spectrum[k] = c;
        spectrum[n - k] = c.conj();
    }

    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    fft.process(&mut spectrum);
    SampledPath::new(*grid, spectrum.into_iter().map(|c| c.re).collect())
}
