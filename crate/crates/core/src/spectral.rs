//! Spectral estimates, autocorrelations and the high-frequency share of a
//! noise spectrum.
//!
//! Densities are one-sided throughout this module: a [`SpectrumEstimate`]
//! integrates over `[0, π/dt]` to the sample variance, and the analytic
//! reports double the two-sided [`analytic_psd`](crate::noise::analytic_psd)
//! so both land on the same scale.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::noise::{psd_unchecked, NoiseModel, SampledPath};

/// Shortest segment the Welch estimator accepts.
pub const MIN_SEGMENT: usize = 64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub frequencies: Vec<f64>,
    pub densities: Vec<f64>,
    pub n_segments: usize,
    pub resolution: f64,
}

impl SpectrumEstimate {
    /// Rectangle-rule integral; equals the windowed sample variance.
    pub fn total_power(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.resolution
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Welch estimate: Hann window, 50% overlap, one-sided.
///
/// The path mean is removed first. Segment length is the largest that fits
/// `n_segments` half-overlapping windows into the path.
pub fn periodogram(path: &SampledPath, n_segments: usize) -> Result<SpectrumEstimate> {
    if n_segments == 0 {
        return Err(Error::param("n_segments must be at least 1"));
    }
    let n = path.len();
    let seg_len = 2 * n / (n_segments + 1);
    if seg_len < MIN_SEGMENT {
        return Err(Error::PathTooShort { len: n, segments: n_segments });
    }
    let hop = seg_len / 2;
    let dt = path.grid().dt();
    let mean = path.mean();
    let values = path.values();

    let window: Vec<f64> =
        (0..seg_len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg_len as f64).cos()).collect();
    let u: f64 = window.iter().map(|w| w * w).sum();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(seg_len));

    let n_bins = seg_len / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    for s in 0..n_segments {
        let start = s * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new((values[start + i] - mean) * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
    }

    let d_omega = 2.0 * PI / (seg_len as f64 * dt);
    let norm = 1.0 / (n_segments as f64 * seg_len as f64 * u * d_omega);
    let densities = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let fold = if k == 0 || (seg_len.is_multiple_of(2) && k == seg_len / 2) { 1.0 } else { 2.0 };
            fold * a * norm
        })
        .collect();
    let frequencies = (0..n_bins).map(|k| k as f64 * d_omega).collect();
    Ok(SpectrumEstimate { frequencies, densities, n_segments, resolution: d_omega })
}

/// Biased autocovariance `K(k) = (1/N) Σ ξ_n ξ_{n+k}` of the mean-removed path, `k = 0..=max_lag`.
pub fn empirical_autocorr(path: &SampledPath, max_lag: usize) -> Result<Vec<f64>> {
    let n = path.len();
    let limit = n / 10;
    if max_lag >= limit {
        return Err(Error::LagTooLarge { max_lag, limit });
    }
    let mean = path.mean();
    let x: Vec<f64> = path.values().iter().map(|v| v - mean).collect();
    Ok((0..=max_lag)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect())
}

/// Least-squares slope of `log density` against `log ω` over `[lo, hi]`.
pub fn log_log_slope(estimate: &SpectrumEstimate, lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = estimate
        .frequencies
        .iter()
        .zip(&estimate.densities)
        .filter(|(w, d)| **w >= lo && **w <= hi && **d > 0.0)
        .map(|(w, d)| (w.ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::param(format!("fewer than two bins in [{lo}, {hi}]")));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfReport {
    pub omega_c: f64,
    pub hf_fraction: f64,
    pub total_power: f64,
    /// Power above `omega_c`, `hf_fraction * total_power`.
    pub hf_power: f64,
}

impl HfReport {
    fn from_parts(omega_c: f64, hf: f64, total: f64) -> Result<Self> {
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::param(format!("spectrum has no power in band (total {total})")));
        }
        Ok(Self { omega_c, hf_fraction: (hf / total).clamp(0.0, 1.0), total_power: total, hf_power: hf })
    }

    pub fn score(&self, metric: HfMetric) -> f64 {
        match metric {
            HfMetric::Fraction => self.hf_fraction,
            HfMetric::Power => self.hf_power,
        }
    }
}

/// What a ranking compares: the normalized share above the boundary, or the
/// absolute power there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HfMetric {
    Fraction,
    #[default]
    Power,
}

impl std::str::FromStr for HfMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fraction" => Ok(HfMetric::Fraction),
            "power" => Ok(HfMetric::Power),
            other => Err(Error::config(format!("unknown hf metric '{other}' (fraction | power)"))),
        }
    }
}

/// Lowest frequency the analytic integral starts from: `0⁺`, or `2π/T` when a
/// flicker component diverges at zero.
pub fn lower_band_edge(model: &NoiseModel, reference: &TimeGrid) -> f64 {
    if model.has_divergent_flicker() {
        reference.resolvable_band().0
    } else {
        0.0
    }
}

/// High-frequency share of an analytic model on `[omega_c, band_max]`.
///
/// `reference` fixes the telegraph flip rate, the flicker normalization band
/// and the lowest resolvable frequency.
pub fn hf_fraction(model: &NoiseModel, omega_c: f64, band_max: f64, reference: &TimeGrid) -> Result<HfReport> {
    model.validate()?;
    let lo = lower_band_edge(model, reference);
    check_band(omega_c, band_max, lo, reference)?;
    let j = |w: f64| 2.0 * psd_unchecked(model, w, reference);
    let hf = integrate(&j, omega_c, band_max);
    let total = integrate(&j, lo, omega_c) + hf;
    HfReport::from_parts(omega_c, hf, total)
}

/// As [`hf_fraction`] for an estimated spectrum, by trapezoid sums over its bins.
pub fn hf_fraction_estimate(estimate: &SpectrumEstimate, omega_c: f64, band_max: f64) -> Result<HfReport> {
    let lo = estimate.frequencies.first().copied().unwrap_or(0.0);
    let hi = estimate.frequencies.last().copied().unwrap_or(0.0);
    if !(omega_c > lo && omega_c < band_max && omega_c < hi) {
        return Err(Error::OutOfBand { omega: omega_c, lo, hi: band_max.min(hi) });
    }
    let top = band_max.min(hi);
    let hf = trapezoid(estimate, omega_c, top);
    let total = trapezoid(estimate, lo, top);
    HfReport::from_parts(omega_c, hf, total)
}

/// Indices of `models` by descending score; ties keep input order.
pub fn rank_models(
    models: &[NoiseModel],
    omega_c: f64,
    band_max: f64,
    reference: &TimeGrid,
    metric: HfMetric,
) -> Result<(Vec<usize>, Vec<HfReport>)> {
    if models.len() < 2 {
        return Err(Error::param("ranking needs at least two models"));
    }
    let reports = models
        .iter()
        .map(|m| hf_fraction(m, omega_c, band_max, reference))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| reports[b].score(metric).total_cmp(&reports[a].score(metric)));
    Ok((order, reports))
}

pub fn rank_by_hf_fraction(
    models: &[NoiseModel],
    omega_c: f64,
    band_max: f64,
    reference: &TimeGrid,
) -> Result<Vec<usize>> {
    rank_models(models, omega_c, band_max, reference, HfMetric::Fraction).map(|r| r.0)
}

fn check_band(omega_c: f64, band_max: f64, lo: f64, reference: &TimeGrid) -> Result<()> {
    let hi = reference.nyquist();
    if !(band_max > 0.0 && band_max <= hi * (1.0 + 1e-12)) {
        return Err(Error::OutOfBand { omega: band_max, lo, hi });
    }
    if !(omega_c > lo && omega_c < band_max) {
        return Err(Error::OutOfBand { omega: omega_c, lo, hi: band_max });
    }
    Ok(())
}

fn trapezoid(est: &SpectrumEstimate, lo: f64, hi: f64) -> f64 {
    let interp = |w: f64| {
        let i = est.frequencies.partition_point(|&f| f <= w).clamp(1, est.len() - 1);
        let (f0, f1) = (est.frequencies[i - 1], est.frequencies[i]);
        let (d0, d1) = (est.densities[i - 1], est.densities[i]);
        d0 + (d1 - d0) * (w - f0) / (f1 - f0)
    };
    let mut xs = vec![lo];
    xs.extend(est.frequencies.iter().copied().filter(|&f| f > lo && f < hi));
    xs.push(hi);
    xs.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (interp(w[0]) + interp(w[1]))).sum()
}

/// Adaptive Simpson over log-spaced panels, so narrow features near the low
/// edge get the same relative resolution as the broad tail.
pub(crate) fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut edges = vec![a];
    let mut x = if a > 0.0 { a } else { (b * 1e-9).min(1e-6) };
    if a == 0.0 {
        edges.push(x);
    }
    while x * 2.0 < b {
        x *= 2.0;
        edges.push(x);
    }
    edges.push(b);
    edges
        .windows(2)
        .map(|w| {
            let (l, r) = (w[0], w[1]);
            let m = 0.5 * (l + r);
            let (fl, fm, fr) = (f(l), f(m), f(r));
            let whole = (r - l) / 6.0 * (fl + 4.0 * fm + fr);
            simpson(f, l, r, fl, fm, fr, whole, 1e-12 * whole.abs().max(1e-300), 48)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{analytic_psd, stationary_variance};
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn white(n: usize, seed: u64) -> SampledPath {
        let g = TimeGrid::new(0.0, 0.01, n).unwrap();
        let mut rng = RngStream::new(seed, 0).rng();
        let v = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        SampledPath::new(g, v).unwrap()
    }

    #[test]
    fn constant_path_has_no_power() {
        let g = TimeGrid::new(0.0, 0.1, 1024).unwrap();
        let est = periodogram(&SampledPath::new(g, vec![3.5; 1024]).unwrap(), 4).unwrap();
        assert_eq!(est.total_power(), 0.0);
    }

    #[test]
    fn rejects_short_paths() {
        let g = TimeGrid::new(0.0, 0.1, 100).unwrap();
        let p = SampledPath::zeros(g);
        assert!(matches!(periodogram(&p, 4), Err(Error::PathTooShort { .. })));
        assert!(periodogram(&p, 1).is_ok());
        assert!(periodogram(&p, 0).is_err());
    }

    #[test]
    fn single_segment_power_tracks_variance() {
        let p = white(4096, 1);
        let est = periodogram(&p, 1).unwrap();
        assert!((est.total_power() - p.variance()).abs() / p.variance() < 0.05);
        assert_eq!(est.frequencies[0], 0.0);
        assert!(est.frequencies.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn welch_power_within_two_percent() {
        let p = white(1 << 16, 2);
        let est = periodogram(&p, 31).unwrap();
        assert!((est.total_power() - p.variance()).abs() / p.variance() < 0.02);
    }

    #[test]
    fn independent_white_paths_add() {
        let (a, b) = (white(1 << 16, 3), white(1 << 16, 4));
        let sum: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
        let est = periodogram(&SampledPath::new(*a.grid(), sum).unwrap(), 31).unwrap();
        assert!((est.total_power() - 2.0).abs() < 0.1, "{}", est.total_power());
    }

    #[test]
    fn autocorr_lag_zero_is_variance() {
        let p = white(1000, 5);
        let k = empirical_autocorr(&p, 5).unwrap();
        assert_relative_eq!(k[0], p.variance(), max_relative = 1e-12);
        assert!(matches!(empirical_autocorr(&p, 100), Err(Error::LagTooLarge { limit: 100, .. })));
    }

    #[test]
    fn white_fraction_is_band_ratio() {
        let g = TimeGrid::new(0.0, 1e-3, 1001).unwrap();
        let bm = g.nyquist();
        let r = hf_fraction(&NoiseModel::flicker(1.0, 0.0), 100.0, bm, &g).unwrap();
        assert_relative_eq!(r.hf_fraction, (bm - 100.0) / bm, max_relative = 1e-9);
    }

    #[test]
    fn violet_half_band_is_seven_eighths() {
        let g = TimeGrid::new(0.0, 1e-3, 1001).unwrap();
        let bm = g.nyquist();
        let r = hf_fraction(&NoiseModel::flicker(1.0, 2.0), bm / 2.0, bm, &g).unwrap();
        assert_relative_eq!(r.hf_fraction, 7.0 / 8.0, max_relative = 1e-9);
    }

    #[test]
    fn ou_fraction_closed_form() {
        let g = TimeGrid::new(0.0, 1e-3, 1001).unwrap();
        let bm = g.nyquist();
        let gamma = 15.0;
        let r = hf_fraction(&NoiseModel::ou(gamma, 2.0), gamma, bm, &g).unwrap();
        let full = (bm / gamma).atan();
        assert_relative_eq!(r.hf_fraction, (full - 1f64.atan()) / full, max_relative = 1e-9);
        assert_relative_eq!(r.total_power, 2.0 * gamma / 2.0 * full * 2.0 / PI, max_relative = 1e-9);
    }

    #[test]
    fn band_checks() {
        let g = TimeGrid::new(0.0, 1e-3, 1001).unwrap();
        let m = NoiseModel::ou(1.0, 1.0);
        assert!(matches!(hf_fraction(&m, 0.0, 10.0, &g), Err(Error::OutOfBand { .. })));
        assert!(matches!(hf_fraction(&m, 20.0, 10.0, &g), Err(Error::OutOfBand { .. })));
        assert!(matches!(hf_fraction(&m, 1.0, 1e6, &g), Err(Error::OutOfBand { .. })));
        let pink = NoiseModel::flicker(1.0, -1.0);
        let lo = g.resolvable_band().0;
        assert!(hf_fraction(&pink, lo * 0.5, 100.0, &g).is_err());
        assert!(hf_fraction(&pink, lo * 2.0, 100.0, &g).is_ok());
    }

    #[test]
    fn ranking_and_ties() {
        let g = TimeGrid::new(0.0, 1e-3, 1001).unwrap();
        let bm = g.nyquist();
        let models = [NoiseModel::flicker(1.0, 0.0), NoiseModel::flicker(1.0, 2.0)];
        assert_eq!(rank_by_hf_fraction(&models, bm / 2.0, bm, &g).unwrap(), vec![1, 0]);
        let same = [NoiseModel::ou(3.0, 1.0), NoiseModel::ou(3.0, 1.0), NoiseModel::ou(3.0, 1.0)];
        assert_eq!(rank_by_hf_fraction(&same, 1.0, bm, &g).unwrap(), vec![0, 1, 2]);
        assert!(rank_by_hf_fraction(&models[..1], 1.0, bm, &g).is_err());
    }

    #[test]
    fn total_power_matches_variance() {
        let g = TimeGrid::new(0.0, 1e-3, 20001).unwrap();
        let bm = g.nyquist();
        for m in [
            NoiseModel::telegraph(0.35),
            NoiseModel::flicker_with_variance(2.0, 7.0),
            NoiseModel::flicker_with_variance(-1.0, 2.0),
            NoiseModel::mixture(NoiseModel::ou(90.0, 0.9), NoiseModel::flicker_with_variance(2.0, 7.0), 0.5),
        ] {
            let r = hf_fraction(&m, 1.0, bm, &g).unwrap();
            let v = stationary_variance(&m, Some(&g)).unwrap();
            assert!((r.total_power - v).abs() / v < 0.05, "{} {} {}", m.label(), r.total_power, v);
        }
    }

    #[test]
    fn estimate_fraction_of_white_path() {
        let p = white(1 << 16, 6);
        let est = periodogram(&p, 31).unwrap();
        let bm = p.grid().nyquist();
        let r = hf_fraction_estimate(&est, bm / 4.0, bm).unwrap();
        assert!((r.hf_fraction - 0.75).abs() < 0.02, "{}", r.hf_fraction);
        assert!(hf_fraction_estimate(&est, 2.0 * bm, bm).is_err());
    }

    #[test]
    fn analytic_psd_is_two_sided() {
        let g = TimeGrid::new(0.0, 1e-3, 11).unwrap();
        let j = analytic_psd(&NoiseModel::ou(2.0, 3.0), 0.0, &g).unwrap();
        assert_relative_eq!(j, 3.0 / (2.0 * PI));
    }

    #[test]
    fn slope_of_exact_power_law() {
        let frequencies: Vec<f64> = (1..100).map(|k| k as f64).collect();
        let densities = frequencies.iter().map(|w: &f64| 3.0 * w.powf(-1.5)).collect();
        let est = SpectrumEstimate { frequencies, densities, n_segments: 1, resolution: 1.0 };
        assert_relative_eq!(log_log_slope(&est, 2.0, 50.0).unwrap(), -1.5, max_relative = 1e-12);
    }
}
