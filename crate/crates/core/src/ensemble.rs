//! Monte Carlo over noise realizations for one parameter point.
//!
//! Trajectory `j` draws its noise from `RngStream(master_seed, j)` (mixture
//! components at `j + k·2^32`). Per-trajectory observables are folded into
//! batch accumulators strictly in ascending `j`, which makes the result
//! bit-identical for any number of workers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{integrate_with, record_indices, AmplitudeState, SystemParams};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::grid::TimeGrid;
use crate::noise::{NoiseModel, SampledPath};
use crate::observables::{pure_state_concurrence, x_state, AtomicMoments, ConcurrenceSeries, DensityMatrixSnapshot};
use crate::rng::RngStream;

/// Number of batches used for standard errors.
pub const N_BATCHES: u64 = 20;

/// Trajectories integrated per parallel chunk before folding.
const CHUNK: u64 = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePoint {
    pub params: SystemParams,
    pub noise: NoiseModel,
    pub n_traj: u64,
    pub master_seed: u64,
    pub grid: TimeGrid,
    pub stride: usize,
    pub init: AmplitudeState,
}

impl EnsemblePoint {
    pub fn new(params: SystemParams, noise: NoiseModel, grid: TimeGrid) -> Self {
        Self {
            params,
            noise,
            n_traj: 1000,
            master_seed: 0,
            grid,
            stride: 1,
            init: AmplitudeState::bell(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::param("n_traj must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::param("stride must be at least 1"));
        }
        self.params.validate()?;
        self.noise.validate()
    }

    /// SHA-256 of the point's canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("ensemble point serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn record_times(&self) -> Vec<f64> {
        record_indices(self.grid.n_steps(), self.stride)
            .into_iter()
            .map(|i| self.grid.time(i))
            .collect()
    }

    /// Whether ξ(t) can influence the couplings at all.
    fn noise_enters(&self) -> bool {
        self.params.noise_scale != 0.0 && self.params.kappa != 0.0
    }
}

/// Averaged `(ρ_22, ρ_33, Re ρ_23, Im ρ_23)` at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEntries {
    pub rho22: f64,
    pub rho33: f64,
    pub rho23_re: f64,
    pub rho23_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub concurrence: ConcurrenceSeries,
    pub rho_entries: Vec<RhoEntries>,
    pub mean_norm: Vec<f64>,
    /// Average of the per-trajectory concurrences `2|C1||C2|`.
    pub mean_trajectory_concurrence: Vec<f64>,
    pub n_traj: u64,
    pub master_seed: u64,
    pub config_digest: String,
}

impl EnsembleResult {
    pub fn times(&self) -> &[f64] {
        &self.concurrence.times
    }

    /// `(C, stderr)` at the recorded time closest to `t`.
    pub fn concurrence_at(&self, t: f64) -> (f64, f64) {
        self.concurrence.at(t).expect("result has at least one point")
    }
}

/// How trajectory noise paths are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathMode {
    /// Sample directly on the point's grid.
    #[default]
    Native,
    /// Sample on the grid with twice the step and hold each value for two
    /// steps. With a refined grid this reruns the same realizations at dt/2.
    HeldFromCoarse,
}

#[derive(Clone)]
struct Accumulator {
    moments: Vec<AtomicMoments>,
    norm: Vec<f64>,
    pure: Vec<f64>,
}

impl Accumulator {
    fn new(points: usize) -> Self {
        Self {
            moments: vec![AtomicMoments::default(); points],
            norm: vec![0.0; points],
            pure: vec![0.0; points],
        }
    }

    fn fold(&mut self, traj: &[AmplitudeState]) {
        for (k, s) in traj.iter().enumerate() {
            self.moments[k].push(s.c1, s.c2);
            self.norm[k] += s.norm_sqr();
            self.pure[k] += pure_state_concurrence(s.c1, s.c2);
        }
    }
}

/// Batch index of trajectory `j` for `n` trajectories split into `b` contiguous batches.
fn batch_of(j: u64, n: u64, b: u64) -> usize {
    ((j as u128 * b as u128) / n as u128) as usize
}

fn trajectory_path(point: &EnsemblePoint, j: u64, mode: PathMode) -> Result<SampledPath> {
    if !point.noise_enters() {
        return Ok(SampledPath::zeros(point.grid));
    }
    let stream = RngStream::new(point.master_seed, j);
    match mode {
        PathMode::Native => point.noise.sample(&point.grid, stream),
        PathMode::HeldFromCoarse => {
            let n = point.grid.n_steps();
            if n.is_multiple_of(2) {
                return Err(Error::param("held paths need an odd number of grid points"));
            }
            let coarse = TimeGrid::new(point.grid.t0(), 2.0 * point.grid.dt(), n.div_ceil(2))?;
            let c = point.noise.sample(&coarse, stream)?;
            let values = (0..n).map(|i| c.values()[i / 2]).collect();
            SampledPath::new(point.grid, values)
        }
    }
}

fn run_one(point: &EnsemblePoint, j: u64, mode: PathMode, points: usize) -> Result<Vec<AmplitudeState>> {
    let path = trajectory_path(point, j, mode)?;
    let mut states = Vec::with_capacity(points);
    integrate_with(&point.params, &path, &point.init, point.stride, |_, s| states.push(*s)).map_err(|e| match e {
        Error::Divergence { step, .. } => Error::TrajectoryDivergence { index: j, seed: point.master_seed, step },
        other => other,
    })?;
    Ok(states)
}

/// Run all trajectories of `point` and average the atomic observables.
///
/// `workers = 0` uses all available cores. The result does not depend on `workers`.
pub fn run_ensemble(point: &EnsemblePoint, workers: usize) -> Result<EnsembleResult> {
    run_ensemble_with(point, workers, PathMode::Native)
}

pub fn run_ensemble_with(point: &EnsemblePoint, workers: usize, mode: PathMode) -> Result<EnsembleResult> {
    point.validate()?;
    let times = point.record_times();
    let points = times.len();
    let n = point.n_traj;
    // A noiseless ensemble is one deterministic trajectory repeated.
    let distinct = if point.noise_enters() { n } else { 1 };
    let n_batches = N_BATCHES.min(distinct);

    let exec = Executor::new(workers);
    let mut batches = vec![Accumulator::new(points); n_batches as usize];
    let mut start = 0;
    while start < distinct {
        let end = (start + CHUNK).min(distinct);
        let chunk = exec.map(start..end, |j| run_one(point, j, mode, points));
        for (offset, traj) in chunk.into_iter().enumerate() {
            let j = start + offset as u64;
            batches[batch_of(j, distinct, n_batches)].fold(&traj?);
        }
        start = end;
    }

    let mut total = Accumulator::new(points);
    for b in &batches {
        for k in 0..points {
            total.moments[k].merge(&b.moments[k]);
            total.norm[k] += b.norm[k];
            total.pure[k] += b.pure[k];
        }
    }

    let count = distinct as f64;
    let mut values = Vec::with_capacity(points);
    let mut stderr = Vec::with_capacity(points);
    let mut rho_entries = Vec::with_capacity(points);
    for k in 0..points {
        let m = &total.moments[k];
        let (p1, p2, coh) = m.means().expect("at least one trajectory");
        values.push(m.concurrence());
        stderr.push(batch_stderr(batches.iter().map(|b| b.moments[k].concurrence())));
        rho_entries.push(RhoEntries { rho22: p1, rho33: p2, rho23_re: coh.re, rho23_im: coh.im });
    }

    Ok(EnsembleResult {
        concurrence: ConcurrenceSeries { times, values, stderr },
        rho_entries,
        mean_norm: total.norm.iter().map(|v| v / count).collect(),
        mean_trajectory_concurrence: total.pure.iter().map(|v| v / count).collect(),
        n_traj: n,
        master_seed: point.master_seed,
        config_digest: point.digest(),
    })
}

/// Standard error of the mean from batch means.
fn batch_stderr(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let b = v.len() as f64;
    let mean = v.iter().sum::<f64>() / b;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// The averaged coherence `M[C1 C2*]` at each recorded time.
pub fn coherence(result: &EnsembleResult) -> Vec<Complex64> {
    result
        .rho_entries
        .iter()
        .map(|r| Complex64::new(r.rho23_re, r.rho23_im))
        .collect()
}

/// Averaged atomic density matrix at the last recorded time.
pub fn final_density_matrix(result: &EnsembleResult) -> Result<Option<DensityMatrixSnapshot>> {
    match result.rho_entries.last() {
        None => Ok(None),
        Some(r) => Ok(Some(x_state(r.rho22, r.rho33, Complex64::new(r.rho23_re, r.rho23_im))?.snapshot())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub max_abs_diff: f64,
    pub at_time: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Largest pointwise concurrence difference between two results on the same record times.
pub fn convergence_check(r1: &EnsembleResult, r2: &EnsembleResult, tol: f64) -> Result<ConvergenceReport> {
    let (t1, t2) = (r1.times(), r2.times());
    if t1.len() != t2.len() || t1.iter().zip(t2).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
        return Err(Error::GridMismatch(format!(
            "record times differ ({} vs {} points)",
            t1.len(),
            t2.len()
        )));
    }
    let (idx, max) = r1
        .concurrence
        .values
        .iter()
        .zip(&r2.concurrence.values)
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    Ok(ConvergenceReport { max_abs_diff: max, at_time: t1[idx], tol, pass: max < tol })
}

/// Rerun `point` at half the step, holding each noise sample over two
/// half-steps so both runs see the same realizations, and compare.
pub fn step_refinement_check(point: &EnsemblePoint, workers: usize, tol: f64) -> Result<ConvergenceReport> {
    let coarse = run_ensemble(point, workers)?;
    let fine_point = EnsemblePoint {
        grid: point.grid.refined(),
        stride: point.stride * 2,
        ..point.clone()
    };
    let fine = run_ensemble_with(&fine_point, workers, PathMode::HeldFromCoarse)?;
    convergence_check(&coarse, &fine, tol)
}
