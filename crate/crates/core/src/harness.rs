//! Experiments: sweeps over γ_ξ and γ_Q, mixing-ratio scans,
//! spectral reports and the built-in validation suite.
//!
//! Every `run_*` function is pure apart from the ensemble work; [`execute`]
//! dispatches on the experiment kind and writes the output directory.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentKind, ExperimentSpec};
use crate::dynamics::SystemParams;
use crate::ensemble::{run_ensemble, EnsemblePoint, EnsembleResult};
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::io::{self, fmt_f64, Provenance};
use crate::noise::{lorentzian, psd_unchecked, NoiseModel};
use crate::rng::RngStream;
use crate::spectral::{self, HfMetric, HfReport};

/// Gap, in pooled standard errors, above which an ordering is asserted.
pub const RESOLVE_SIGMA: f64 = 3.0;

/// One ensemble of a sweep.
#[derive(Debug, Clone)]
pub struct Cell {
    pub axis: f64,
    /// `None` for the no-classical-noise baseline.
    pub p: Option<f64>,
    pub label: String,
    pub noise: NoiseModel,
    pub params: SystemParams,
    pub concurrence: f64,
    pub stderr: f64,
    pub result: EnsembleResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub axis: f64,
    pub p: Option<f64>,
    pub label: String,
    pub concurrence: f64,
    pub stderr: f64,
    pub dir: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub label: String,
    pub p: f64,
    pub concurrence: f64,
    pub stderr: f64,
    pub hf: HfReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Pair {
    pub better: String,
    pub worse: String,
    pub gap: f64,
    pub sigma: f64,
    pub resolved: bool,
    /// For resolved pairs: whether the HF score ranks them the same way.
    pub hf_agrees: Option<bool>,
}

/// Concurrence ranking of the cells at one checkpoint, best first.
#[derive(Debug, Clone, Serialize)]
pub struct Ordering {
    pub axis: f64,
    pub omega_c: f64,
    pub hf_metric: HfMetric,
    pub ranking: Vec<String>,
    pub status: String,
    pub entries: Vec<Entry>,
    pub pairs: Vec<Pair>,
    pub hf_ranking: Vec<String>,
    pub hf_consistent: bool,
}

impl Ordering {
    /// Labels ranked best to worst if every adjacent gap is resolved.
    pub fn resolved_ranking(&self) -> Option<&[String]> {
        (self.status == "resolved").then_some(&self.ranking[..])
    }

    pub fn entry(&self, p: f64) -> Option<&Entry> {
        self.entries.iter().find(|e| e.p == p)
    }

    /// Whether the entry at `a` beats the one at `b` by more than the resolution threshold.
    pub fn beats(&self, a: f64, b: f64) -> Option<bool> {
        let (x, y) = (self.entry(a)?, self.entry(b)?);
        Some(x.concurrence - y.concurrence > RESOLVE_SIGMA * pooled(x.stderr, y.stderr))
    }
}

fn pooled(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Rank `entries` by concurrence and compare every pair against the HF score.
pub fn order_entries(axis: f64, omega_c: f64, metric: HfMetric, mut entries: Vec<Entry>) -> Ordering {
    entries.sort_by(|a, b| b.concurrence.total_cmp(&a.concurrence));
    let mut pairs = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (a, b) = (&entries[i], &entries[j]);
            let gap = a.concurrence - b.concurrence;
            let sigma = pooled(a.stderr, b.stderr);
            let resolved = gap > RESOLVE_SIGMA * sigma;
            let hf_agrees = resolved.then(|| a.hf.score(metric) > b.hf.score(metric));
            pairs.push(Pair { better: a.label.clone(), worse: b.label.clone(), gap, sigma, resolved, hf_agrees });
        }
    }
    let adjacent: Vec<bool> = entries
        .windows(2)
        .map(|w| w[0].concurrence - w[1].concurrence > RESOLVE_SIGMA * pooled(w[0].stderr, w[1].stderr))
        .collect();
    let status = if adjacent.iter().all(|&r| r) {
        "resolved"
    } else if adjacent.iter().any(|&r| r) {
        "partial"
    } else {
        "unresolved"
    };
    let mut hf_sorted: Vec<&Entry> = entries.iter().collect();
    hf_sorted.sort_by(|a, b| b.hf.score(metric).total_cmp(&a.hf.score(metric)));
    Ordering {
        axis,
        omega_c,
        hf_metric: metric,
        ranking: entries.iter().map(|e| e.label.clone()).collect(),
        status: status.to_string(),
        hf_ranking: hf_sorted.iter().map(|e| e.label.clone()).collect(),
        hf_consistent: pairs.iter().all(|p| p.hf_agrees != Some(false)),
        entries,
        pairs,
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis_name: &'static str,
    pub axis: Vec<f64>,
    pub cells: Vec<Cell>,
    pub orderings: Vec<Ordering>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn cell(&self, axis: f64, p: Option<f64>) -> Option<&Cell> {
        self.cells.iter().find(|c| c.axis == axis && c.p == p)
    }

    pub fn ordering_at(&self, axis: f64) -> Option<&Ordering> {
        self.orderings.iter().find(|o| o.axis == axis)
    }
}

fn with_ou_rate(mut noise: NoiseModel, rate: f64) -> NoiseModel {
    noise.map_ou(&mut |r, _| *r = rate);
    noise
}

fn run_cell(spec: &ExperimentSpec, params: SystemParams, noise: NoiseModel, workers: usize) -> Result<EnsembleResult> {
    let point = EnsemblePoint {
        n_traj: spec.n_traj,
        master_seed: spec.seed,
        stride: spec.stride,
        init: spec.init,
        ..EnsemblePoint::new(params, noise, spec.grid()?)
    };
    run_ensemble(&point, workers)
}

fn make_cell(
    spec: &ExperimentSpec,
    axis: f64,
    p: Option<f64>,
    params: SystemParams,
    noise: NoiseModel,
    workers: usize,
) -> Result<Cell> {
    let result = run_cell(spec, params, noise.clone(), workers)?;
    let (concurrence, stderr) = result.concurrence_at(spec.t_eval);
    let label = match p {
        None => "no_noise".to_string(),
        Some(_) => noise.label(),
    };
    Ok(Cell { axis, p, label, noise, params, concurrence, stderr, result })
}

fn checkpoint_ordering(spec: &ExperimentSpec, axis: f64, cells: &[&Cell]) -> Result<Ordering> {
    let grid = spec.grid()?;
    let band_max = grid.nyquist();
    let omega_c = spec.omega_c_factor * cells[0].params.memory_rate;
    let entries = cells
        .iter()
        .map(|c| {
            Ok(Entry {
                label: c.label.clone(),
                p: c.p.unwrap_or(f64::NAN),
                concurrence: c.concurrence,
                stderr: c.stderr,
                hf: spectral::hf_fraction(&c.noise, omega_c, band_max, &grid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(order_entries(axis, omega_c, spec.hf_metric, entries))
}

fn is_checkpoint(spec: &ExperimentSpec, v: f64) -> bool {
    spec.checkpoints.iter().any(|c| (c - v).abs() <= 1e-12 * v.abs().max(1.0))
}

/// γ_ξ sweep: every O-U leaf takes each swept rate, for each mixing ratio.
pub fn run_fig2_style(spec: &ExperimentSpec, workers: usize) -> Result<SweepResult> {
    let mut cells = Vec::new();
    let mut orderings = Vec::new();
    for &g in &spec.sweep {
        let start = cells.len();
        for &p in &spec.p_values {
            let noise = with_ou_rate(spec.noise_at(p), g);
            cells.push(make_cell(spec, g, Some(p), spec.system, noise, workers)?);
        }
        if is_checkpoint(spec, g) {
            let row: Vec<&Cell> = cells[start..].iter().collect();
            orderings.push(checkpoint_ordering(spec, g, &row)?);
        }
    }
    let warnings = unresolved_warnings(&orderings);
    Ok(SweepResult { axis_name: "gamma_xi", axis: spec.sweep.clone(), cells, orderings, warnings })
}

/// γ_Q sweep: each mixing ratio plus a no-classical-noise baseline per value.
pub fn run_fig4_style(spec: &ExperimentSpec, workers: usize) -> Result<SweepResult> {
    let mut cells = Vec::new();
    let mut orderings = Vec::new();
    for &gq in &spec.sweep {
        let params = SystemParams { memory_rate: gq, ..spec.system };
        let start = cells.len();
        for &p in &spec.p_values {
            cells.push(make_cell(spec, gq, Some(p), params, spec.noise_at(p), workers)?);
        }
        if is_checkpoint(spec, gq) {
            let row: Vec<&Cell> = cells[start..].iter().collect();
            orderings.push(checkpoint_ordering(spec, gq, &row)?);
        }
        let quiet = SystemParams { noise_scale: 0.0, ..params };
        cells.push(make_cell(spec, gq, None, quiet, spec.noise_a.clone(), workers)?);
    }
    let warnings = unresolved_warnings(&orderings);
    Ok(SweepResult { axis_name: "gamma_q", axis: spec.sweep.clone(), cells, orderings, warnings })
}

fn unresolved_warnings(orderings: &[Ordering]) -> Vec<String> {
    let mut w = Vec::new();
    for o in orderings {
        if o.status != "resolved" {
            w.push(format!(
                "ordering at {} is {} at {RESOLVE_SIGMA} sigma; raise n_traj or rescan noise amplitudes",
                o.axis, o.status
            ));
        }
        if !o.hf_consistent {
            w.push(format!("ordering at {} disagrees with the HF ranking on a resolved pair", o.axis));
        }
    }
    w
}

#[derive(Debug, Clone, Serialize)]
pub struct PminRow {
    pub gamma_xi: f64,
    /// Smallest p whose concurrence is within 3 pooled sigma of the minimum.
    pub p_min: f64,
    /// Exact argmin (ties to the smallest p).
    pub p_argmin: f64,
    pub c_min: f64,
    pub stderr: f64,
    /// Mixing ratios statistically tied with the minimum.
    pub tied: Vec<f64>,
    pub flagged: bool,
    pub flat: bool,
}

#[derive(Debug, Clone)]
pub struct PminResult {
    pub rows: Vec<PminRow>,
    pub cells: Vec<Cell>,
    pub non_increasing: bool,
    pub warnings: Vec<String>,
}

/// Minimum of `C(t_eval; p)` over the p grid, per swept γ_ξ.
pub fn run_pmin_scan(spec: &ExperimentSpec, workers: usize) -> Result<PminResult> {
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &g in &spec.sweep {
        let start = cells.len();
        for &p in &spec.p_values {
            let noise = with_ou_rate(spec.noise_at(p), g);
            cells.push(make_cell(spec, g, Some(p), spec.system, noise, workers)?);
        }
        let row = pmin_row(g, &cells[start..]);
        if row.flat {
            warnings.push(format!("C(t_eval; p) is flat within {RESOLVE_SIGMA} sigma at gamma_xi = {g}"));
        } else if row.flagged {
            warnings.push(format!(
                "p_min at gamma_xi = {g} tied with p in {:?}; reporting the smallest",
                row.tied
            ));
        }
        rows.push(row);
    }
    let non_increasing = rows.windows(2).all(|w| w[1].p_min <= w[0].p_min);
    if !non_increasing {
        warnings.push("p_min is not non-increasing across the sweep".to_string());
    }
    Ok(PminResult { rows, cells, non_increasing, warnings })
}

fn pmin_row(g: f64, cells: &[Cell]) -> PminRow {
    let mut best = &cells[0];
    for c in &cells[1..] {
        if c.concurrence < best.concurrence {
            best = c;
        }
    }
    let tied: Vec<f64> = cells
        .iter()
        .filter(|c| c.concurrence - best.concurrence <= RESOLVE_SIGMA * pooled(c.stderr, best.stderr))
        .filter_map(|c| c.p)
        .collect();
    let top = cells.iter().fold(&cells[0], |a, c| if c.concurrence > a.concurrence { c } else { a });
    let flat = cells.len() > 1 && top.concurrence - best.concurrence <= RESOLVE_SIGMA * pooled(top.stderr, best.stderr);
    PminRow {
        gamma_xi: g,
        p_min: tied.iter().copied().fold(f64::INFINITY, f64::min),
        p_argmin: best.p.unwrap_or(f64::NAN),
        c_min: best.concurrence,
        stderr: best.stderr,
        flagged: tied.len() > 1,
        tied,
        flat,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PsdModelReport {
    pub axis: f64,
    pub p: f64,
    pub label: String,
    pub hf: HfReport,
    pub estimated: HfReport,
}

#[derive(Debug, Clone)]
pub struct PsdReport {
    pub omega_c: f64,
    pub band_max: f64,
    pub models: Vec<PsdModelReport>,
    /// Per swept value: labels best-first by the configured metric.
    pub rankings: Vec<(f64, Vec<String>)>,
    pub curves: Vec<PsdCurves>,
}

#[derive(Debug, Clone)]
pub struct PsdCurves {
    pub name: String,
    pub analytic: Vec<(f64, f64)>,
    pub estimate: spectral::SpectrumEstimate,
}

/// Analytic and estimated spectra of each configured model with HF reports.
pub fn run_psd_report(spec: &ExperimentSpec) -> Result<PsdReport> {
    let grid = spec.grid()?;
    let band_max = grid.nyquist();
    let omega_c = spec.omega_c_factor * spec.system.memory_rate;
    let est_grid = TimeGrid::new(0.0, spec.dt, spec.psd_samples.max(2))?;
    let freqs = log_frequencies(est_grid.resolvable_band().0, band_max, 400);

    let mut models = Vec::new();
    let mut rankings = Vec::new();
    let mut curves = Vec::new();
    for (gi, &g) in spec.sweep.iter().enumerate() {
        let mut row = Vec::new();
        for (pi, &p) in spec.p_values.iter().enumerate() {
            let noise = with_ou_rate(spec.noise_at(p), g);
            let hf = spectral::hf_fraction(&noise, omega_c, band_max, &grid)?;
            let stream = RngStream::new(spec.seed, (gi * spec.p_values.len() + pi) as u64);
            let path = noise.sample(&est_grid, stream)?;
            let estimate = spectral::periodogram(&path, spec.psd_segments)?;
            let estimated = spectral::hf_fraction_estimate(&estimate, omega_c, band_max)?;
            let analytic = freqs.iter().map(|&w| (w, 2.0 * psd_unchecked(&noise, w, &grid))).collect();
            curves.push(PsdCurves { name: format!("psd_g{}_p{}", g, p), analytic, estimate });
            row.push((noise.label(), hf.score(spec.hf_metric)));
            models.push(PsdModelReport { axis: g, p, label: noise.label(), hf, estimated });
        }
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].1.total_cmp(&row[a].1));
        rankings.push((g, order.into_iter().map(|i| row[i].0.clone()).collect()));
    }
    Ok(PsdReport { omega_c, band_max, models, rankings, curves })
}

fn log_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, value: f64, tolerance: f64, pass: bool, detail: String) -> Check {
    Check { name: name.to_string(), pass, value, tolerance, detail }
}

/// Fast self-checks on the configured system and grid.
pub fn validate(spec: &ExperimentSpec, workers: usize) -> Result<ValidationReport> {
    use crate::dynamics::{analytic_constant_g, run_trajectory};
    use crate::noise::SampledPath;

    let grid = spec.grid()?;
    let mut checks = Vec::new();

    let quiet = SystemParams { noise_scale: 0.0, ..spec.system };
    let still = SampledPath::zeros(grid);
    let rec = run_trajectory(&quiet, &still, &spec.init, 1);
    let oracle_err = match &rec {
        Ok(rec) => rec
            .states
            .iter()
            .zip(rec.times())
            .map(|(s, t)| analytic_constant_g(&quiet, t - grid.t0(), &spec.init).map(|o| s.max_abs_diff(&o)))
            .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))?,
        Err(_) => f64::INFINITY,
    };
    checks.push(check(
        "oracle_equivalence",
        oracle_err,
        1e-6,
        oracle_err < 1e-6,
        "max amplitude error of RK4 against the matrix exponential, constant coupling".into(),
    ));

    let lossless = SystemParams { dissipation: 0.0, ..quiet };
    let drift = match run_trajectory(&lossless, &still, &spec.init, 1) {
        Ok(rec) => {
            let n0 = atom_cavity_norm(&rec.states[0]);
            rec.states.iter().map(|s| (atom_cavity_norm(s) - n0).abs()).fold(0.0, f64::max)
        }
        Err(_) => f64::INFINITY,
    };
    checks.push(check(
        "norm_conservation",
        drift,
        1e-8,
        drift < 1e-8,
        "drift of |C1|^2+|C2|^2+|C3|^2 with Gamma_Q = 0".into(),
    ));

    let point = EnsemblePoint {
        n_traj: 1,
        stride: spec.stride,
        init: spec.init,
        ..EnsemblePoint::new(quiet, NoiseModel::telegraph(0.0), grid)
    };
    let conv = crate::ensemble::step_refinement_check(&point, workers, 1e-6);
    let (v, detail) = match conv {
        Ok(r) => (r.max_abs_diff, format!("dt vs dt/2 concurrence, worst at t = {}", r.at_time)),
        Err(e) => (f64::INFINITY, e.to_string()),
    };
    checks.push(check("dt_convergence", v, 1e-6, v < 1e-6, detail));

    let ou_err = ou_autocorr_error(spec.seed)?;
    checks.push(check(
        "ou_autocorrelation",
        ou_err,
        0.05,
        ou_err < 0.05,
        "relative L2 error on [0, 3/gamma_xi], 1e6 samples at dt = 0.05".into(),
    ));

    let z = telegraph_lag_z(0.35, spec.seed)?;
    checks.push(check("telegraph_autocorrelation", z, 3.0, z <= 3.0, "worst lag-k deviation in sigma, k <= 20, p_jump = 0.35".into()));

    let mut worst = 0.0f64;
    for eta in [-2.0, -1.0, 1.0, 2.0] {
        worst = worst.max((flicker_slope(eta, spec.seed)? - eta).abs());
    }
    checks.push(check("flicker_slope", worst, 0.15, worst <= 0.15, "worst |slope - eta| over eta in {-2,-1,1,2}".into()));

    let xs = concurrence_formula_gap(spec.seed)?;
    checks.push(check("concurrence_formulas", xs, 1e-12, xs < 1e-12, "Wootters vs X-state closed form".into()));

    Ok(ValidationReport { pass: checks.iter().all(|c| c.pass), checks })
}

fn atom_cavity_norm(s: &crate::dynamics::AmplitudeState) -> f64 {
    s.c1.norm_sqr() + s.c2.norm_sqr() + s.c3.norm_sqr()
}

/// Relative L2 error of the empirical O-U autocovariance on `[0, 3/γ]`.
pub fn ou_autocorr_error(seed: u64) -> Result<f64> {
    // A coarse step keeps 60 lags inside 3/γ while lengthening the record.
    let (gamma, strength, dt) = (1.0, 2.0, 0.05);
    let grid = TimeGrid::new(0.0, dt, 1_000_000)?;
    let path = NoiseModel::ou(gamma, strength).sample(&grid, RngStream::new(seed, 0))?;
    let max_lag = (3.0 / (gamma * dt)).round() as usize;
    let k = spectral::empirical_autocorr(&path, max_lag)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (lag, kh) in k.iter().enumerate() {
        let exact = strength * gamma / 2.0 * (-gamma * lag as f64 * dt).exp();
        num += (kh - exact).powi(2);
        den += exact * exact;
    }
    Ok((num / den).sqrt())
}

/// Worst `|r_k - (1-2p)^k| / σ_k` over `k <= 20` for a 10^6-step telegraph
/// chain, with Bartlett's large-sample variance for a geometric correlation.
pub fn telegraph_lag_z(p_jump: f64, seed: u64) -> Result<f64> {
    let n = 1_000_000;
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let path = NoiseModel::telegraph(p_jump).sample(&grid, RngStream::new(seed, 50))?;
    let k = spectral::empirical_autocorr(&path, 20)?;
    let rho = 1.0 - 2.0 * p_jump;
    let r2 = rho * rho;
    let mut worst = 0.0f64;
    for lag in 1..=20 {
        let exact = rho.powi(lag as i32);
        let var = ((1.0 + r2) * (1.0 - r2.powi(lag as i32)) / (1.0 - r2) - 2.0 * lag as f64 * r2.powi(lag as i32))
            / n as f64;
        worst = worst.max((k[lag] / k[0] - exact).abs() / var.max(1.0 / n as f64).sqrt());
    }
    Ok(worst)
}

/// Mid-band log-log slope of the Welch estimate of one 2^20-sample flicker path.
pub fn flicker_slope(eta: f64, seed: u64) -> Result<f64> {
    let grid = TimeGrid::new(0.0, 1e-3, 1 << 20)?;
    let path = NoiseModel::flicker(1.0, eta).sample(&grid, RngStream::new(seed, 100))?;
    let est = spectral::periodogram(&path, 63)?;
    let nyq = grid.nyquist();
    spectral::log_log_slope(&est, nyq * 1e-2, nyq * 0.5)
}

/// Largest Wootters vs closed-form disagreement over 1000 random X-states.
pub fn concurrence_formula_gap(seed: u64) -> Result<f64> {
    use crate::observables::{concurrence_wootters, concurrence_xstate, x_state};
    use num_complex::Complex64;
    use rand::Rng;

    let mut rng = RngStream::new(seed, 7).rng();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let total: f64 = rng.random();
        let split: f64 = rng.random();
        let (p1, p2) = (total * split, total * (1.0 - split));
        let r = rng.random::<f64>() * (p1 * p2).sqrt();
        let phase = rng.random::<f64>() * 2.0 * PI;
        let rho = x_state(p1, p2, Complex64::from_polar(r, phase))?;
        worst = worst.max((concurrence_wootters(&rho)? - concurrence_xstate(&rho)?).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
struct GridMeta {
    t0: f64,
    dt: f64,
    n_steps: usize,
    stride: usize,
    t_eval: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ResultDoc<'a, X: Serialize> {
    experiment: &'static str,
    config_digest: &'a str,
    seed: u64,
    n_traj: u64,
    grid: GridMeta,
    checkpoints: &'a [f64],
    orderings: &'a [Ordering],
    warnings: &'a [String],
    #[serde(flatten)]
    extra: X,
}

/// Outcome of [`execute`], used by the CLI to pick an exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub validation_failed: bool,
    pub warnings: Vec<String>,
}

/// Run the experiment named by `spec.kind` and write its files under `out`.
pub fn execute(spec: &ExperimentSpec, workers: usize, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let digest = spec.digest();
    let prov = Provenance::new(digest.clone(), spec.seed);
    let grid = spec.grid()?;
    let meta = GridMeta { t0: spec.t0, dt: spec.dt, n_steps: grid.n_steps(), stride: spec.stride, t_eval: spec.t_eval };

    let mut outcome = Outcome { validation_failed: false, warnings: Vec::new() };
    match spec.kind {
        ExperimentKind::Single => {
            let p = spec.p_values[0];
            let noise = spec.noise_at(p);
            let cell = make_cell(spec, 0.0, Some(p), spec.system, noise.clone(), workers)?;
            io::write_ensemble_dir(out, &cell.result, &single_meta(spec, &digest, &meta, &cell))?;
            let path = if cell.params.noise_scale != 0.0 {
                noise.sample(&grid, RngStream::new(spec.seed, 0))?
            } else {
                crate::noise::SampledPath::zeros(grid)
            };
            io::write_path_csv(&out.join("path.csv"), &prov, &path)?;
            let rec = crate::dynamics::run_trajectory(&spec.system, &path, &spec.init, spec.stride)?;
            io::write_trajectory_csv(&out.join("trajectory.csv"), &prov, &rec)?;
            io::write_gnuplot(&out.join("plot.gp"), &prov, SINGLE_PLOT)?;
        }
        ExperimentKind::GammaXiSweep | ExperimentKind::GammaQSweep => {
            let sweep = if spec.kind == ExperimentKind::GammaXiSweep {
                run_fig2_style(spec, workers)?
            } else {
                run_fig4_style(spec, workers)?
            };
            let summaries = write_cells(out, spec, &sweep.cells, sweep.axis_name)?;
            write_scalars(&out.join("scalars.csv"), &prov, sweep.axis_name, &sweep.cells)?;
            let doc = ResultDoc {
                experiment: spec.kind.name(),
                config_digest: &digest,
                seed: spec.seed,
                n_traj: spec.n_traj,
                grid: meta,
                checkpoints: &spec.checkpoints,
                orderings: &sweep.orderings,
                warnings: &sweep.warnings,
                extra: serde_json::json!({ "axis": sweep.axis_name, "cells": summaries }),
            };
            io::write_json(&out.join("result.json"), &prov, &doc)?;
            io::write_gnuplot(&out.join("plot.gp"), &prov, &sweep_plot(sweep.axis_name, &spec.p_values))?;
            outcome.warnings = sweep.warnings;
        }
        ExperimentKind::PminScan => {
            let scan = run_pmin_scan(spec, workers)?;
            let summaries = write_cells(out, spec, &scan.cells, "gamma_xi")?;
            write_scalars(&out.join("scalars.csv"), &prov, "gamma_xi", &scan.cells)?;
            let rows = scan.rows.iter().map(|r| {
                vec![fmt_f64(r.gamma_xi), fmt_f64(r.p_min), fmt_f64(r.p_argmin), fmt_f64(r.c_min), fmt_f64(r.stderr), r.flagged.to_string()]
            });
            io::write_csv(&out.join("pmin.csv"), &prov, &["gamma_xi", "p_min", "p_argmin", "c_min", "stderr", "flagged"], rows)?;
            let doc = ResultDoc {
                experiment: spec.kind.name(),
                config_digest: &digest,
                seed: spec.seed,
                n_traj: spec.n_traj,
                grid: meta,
                checkpoints: &spec.checkpoints,
                orderings: &[],
                warnings: &scan.warnings,
                extra: serde_json::json!({ "p_min": scan.rows, "non_increasing": scan.non_increasing, "cells": summaries }),
            };
            io::write_json(&out.join("result.json"), &prov, &doc)?;
            io::write_gnuplot(&out.join("plot.gp"), &prov, PMIN_PLOT)?;
            outcome.warnings = scan.warnings;
        }
        ExperimentKind::PsdReport => {
            let rep = run_psd_report(spec)?;
            for c in &rep.curves {
                let rows = c.analytic.iter().map(|(w, d)| vec![fmt_f64(*w), fmt_f64(*d)]);
                io::write_csv(&out.join(format!("{}_analytic.csv", c.name)), &prov, &["omega", "density"], rows)?;
                io::write_spectrum_csv(&out.join(format!("{}_estimate.csv", c.name)), &prov, &c.estimate)?;
            }
            let freqs = &rep.curves.first().map(|c| c.analytic.iter().map(|p| p.0).collect::<Vec<_>>()).unwrap_or_default();
            let q = freqs.iter().map(|&w| {
                vec![fmt_f64(w), fmt_f64(2.0 * lorentzian(spec.system.dissipation, spec.system.memory_rate, w))]
            });
            io::write_csv(&out.join("quantum_psd.csv"), &prov, &["omega", "density"], q)?;
            let rankings: Vec<_> =
                rep.rankings.iter().map(|(g, r)| serde_json::json!({ "gamma_xi": g, "ranking": r })).collect();
            let doc = ResultDoc {
                experiment: spec.kind.name(),
                config_digest: &digest,
                seed: spec.seed,
                n_traj: spec.n_traj,
                grid: meta,
                checkpoints: &spec.checkpoints,
                orderings: &[],
                warnings: &[],
                extra: serde_json::json!({
                    "omega_c": rep.omega_c,
                    "band_max": rep.band_max,
                    "hf_metric": spec.hf_metric,
                    "reports": rep.models,
                    "rankings": rankings,
                }),
            };
            io::write_json(&out.join("result.json"), &prov, &doc)?;
            for m in &rep.models {
                let name = format!("hf_g{}_p{}.json", m.axis, m.p);
                io::write_json(&out.join(name), &prov, &m.hf)?;
            }
            io::write_gnuplot(&out.join("plot.gp"), &prov, &psd_plot(&rep))?;
        }
        ExperimentKind::Validate => {
            let rep = validate(spec, workers)?;
            io::write_json(&out.join("validation.json"), &prov, &rep)?;
            outcome.validation_failed = !rep.pass;
        }
    }
    Ok(outcome)
}

fn single_meta(spec: &ExperimentSpec, digest: &str, meta: &GridMeta, cell: &Cell) -> serde_json::Value {
    serde_json::json!({
        "experiment": spec.kind.name(),
        "config_digest": digest,
        "seed": spec.seed,
        "n_traj": spec.n_traj,
        "grid": meta,
        "noise": cell.noise,
        "system": cell.params,
        "concurrence_at_t_eval": cell.concurrence,
        "stderr_at_t_eval": cell.stderr,
    })
}

fn cell_dir_name(axis_name: &str, c: &Cell) -> String {
    match c.p {
        Some(p) => format!("{axis_name}={}_p={p}", c.axis),
        None => format!("{axis_name}={}_no_noise", c.axis),
    }
}

fn write_cells(out: &Path, spec: &ExperimentSpec, cells: &[Cell], axis_name: &str) -> Result<Vec<CellSummary>> {
    let grid = spec.grid()?;
    let meta = GridMeta { t0: spec.t0, dt: spec.dt, n_steps: grid.n_steps(), stride: spec.stride, t_eval: spec.t_eval };
    let digest = spec.digest();
    cells
        .iter()
        .map(|c| {
            let name = cell_dir_name(axis_name, c);
            io::write_ensemble_dir(&out.join("cells").join(&name), &c.result, &single_meta(spec, &digest, &meta, c))?;
            Ok(CellSummary {
                axis: c.axis,
                p: c.p,
                label: c.label.clone(),
                concurrence: c.concurrence,
                stderr: c.stderr,
                dir: format!("cells/{name}"),
            })
        })
        .collect()
}

fn write_scalars(path: &Path, prov: &Provenance, axis_name: &str, cells: &[Cell]) -> Result<()> {
    let rows = cells.iter().map(|c| {
        vec![
            fmt_f64(c.axis),
            c.p.map(fmt_f64).unwrap_or_default(),
            c.label.clone(),
            fmt_f64(c.concurrence),
            fmt_f64(c.stderr),
        ]
    });
    io::write_csv(path, prov, &[axis_name, "p", "label", "concurrence", "stderr"], rows)
}

const SINGLE_PLOT: &str = "set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set ylabel 'C(t)'
plot 'concurrence.csv' using 1:2:3 with yerrorlines title 'ensemble', \\
     'norm.csv' using 1:2 with lines title 'mean norm'
pause -1
";

const PMIN_PLOT: &str = "set datafile separator ','
set xlabel 'gamma_xi'
set ylabel 'p_min'
plot 'pmin.csv' using 1:2 with linespoints title 'p_min'
pause -1
";

fn sweep_plot(axis_name: &str, p_values: &[f64]) -> String {
    let mut s = format!(
        "set datafile separator ','\nset logscale x\nset xlabel '{axis_name}'\nset ylabel 'C(t_eval)'\nplot "
    );
    let parts: Vec<String> = p_values
        .iter()
        .map(|p| {
            format!("'scalars.csv' using 1:($2=={p} ? $4 : 1/0):5 with yerrorlines title 'p = {p}'")
        })
        .collect();
    s += &parts.join(", \\\n     ");
    s += "\npause -1\n";
    s
}

fn psd_plot(rep: &PsdReport) -> String {
    let mut s = String::from("set datafile separator ','\nset logscale xy\nset xlabel 'omega'\nset ylabel 'J(omega)'\n");
    s += &format!("set arrow from {0},graph 0 to {0},graph 1 nohead dashtype 2\nplot ", rep.omega_c);
    let mut parts: Vec<String> = rep
        .curves
        .iter()
        .map(|c| format!("'{}_analytic.csv' using 1:2 with lines title '{}'", c.name, c.name))
        .collect();
    parts.push("'quantum_psd.csv' using 1:2 with lines dashtype 3 title 'quantum noise'".to_string());
    s += &parts.join(", \\\n     ");
    s += "\npause -1\n";
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(label: &str, p: f64, c: f64, s: f64, hf: f64) -> Entry {
        Entry {
            label: label.into(),
            p,
            concurrence: c,
            stderr: s,
            hf: HfReport { omega_c: 1.0, hf_fraction: hf, total_power: 1.0, hf_power: hf },
        }
    }

    #[test]
    fn ordering_resolution() {
        let o = order_entries(
            1.0,
            1.0,
            HfMetric::Power,
            vec![entry("a", 1.0, 0.5, 0.01, 0.2), entry("b", 0.0, 0.9, 0.01, 0.9), entry("c", 0.5, 0.49, 0.01, 0.1)],
        );
        assert_eq!(o.ranking, vec!["b", "a", "c"]);
        assert_eq!(o.status, "partial");
        assert!(o.hf_consistent);
        assert_eq!(o.beats(0.0, 1.0), Some(true));
        assert_eq!(o.beats(1.0, 0.5), Some(false));
        assert!(o.resolved_ranking().is_none());
    }

    #[test]
    fn hf_disagreement_on_resolved_pair() {
        let o = order_entries(
            1.0,
            1.0,
            HfMetric::Power,
            vec![entry("a", 1.0, 0.9, 0.01, 0.1), entry("b", 0.0, 0.1, 0.01, 0.9)],
        );
        assert_eq!(o.status, "resolved");
        assert!(!o.hf_consistent);
        let tied = order_entries(
            1.0,
            1.0,
            HfMetric::Power,
            vec![entry("a", 1.0, 0.5, 0.1, 0.1), entry("b", 0.0, 0.52, 0.1, 0.9)],
        );
        assert_eq!(tied.status, "unresolved");
        assert!(tied.hf_consistent);
    }

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec::parse(
            "[experiment]
kind = pmin_scan
n_traj = 40
t_end = 2
dt = 1e-2
stride = 10
t_eval = 2
p_values = 0.5
sweep = 10

[noise.a]
type = ou
rate = 10
strength = 1

[noise.b]
type = flicker
exponent = 2
variance = 2
",
        )
        .unwrap()
    }

    #[test]
    fn singleton_p_grid() {
        let scan = run_pmin_scan(&tiny_spec(), 1).unwrap();
        assert_eq!(scan.rows[0].p_min, 0.5);
        assert_eq!(scan.rows[0].p_argmin, 0.5);
        assert!(!scan.rows[0].flat);
    }

    #[test]
    fn identical_components_are_flat() {
        let mut spec = tiny_spec();
        spec.noise_b = Some(spec.noise_a.clone());
        spec.p_values = vec![0.3, 0.5, 0.7];
        spec.n_traj = 200;
        spec.system.noise_scale = 0.0;
        let scan = run_pmin_scan(&spec, 1).unwrap();
        assert!(scan.rows[0].flat && scan.rows[0].flagged);
        assert_eq!(scan.rows[0].p_min, 0.3);
        assert!(!scan.warnings.is_empty());
    }

    #[test]
    fn noiseless_sweep_collapses_to_baseline() {
        let mut spec = tiny_spec();
        spec.kind = ExperimentKind::GammaXiSweep;
        spec.system.noise_scale = 0.0;
        spec.p_values = vec![0.0, 0.5, 1.0];
        spec.checkpoints = vec![10.0];
        let sweep = run_fig2_style(&spec, 1).unwrap();
        let c: Vec<f64> = sweep.cells.iter().map(|c| c.concurrence).collect();
        assert!(c.iter().all(|&x| x == c[0]));
        assert_eq!(sweep.orderings[0].status, "unresolved");
    }

    #[test]
    fn validate_flags_coarse_step() {
        let mut spec = ExperimentSpec::parse("[experiment]\nkind = validate\n").unwrap();
        spec.dt = 0.5;
        spec.stride = 1;
        let names_failed: Vec<String> = validate(&spec, 1)
            .unwrap()
            .checks
            .into_iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect();
        assert!(names_failed.contains(&"dt_convergence".to_string()), "{names_failed:?}");
    }
}
