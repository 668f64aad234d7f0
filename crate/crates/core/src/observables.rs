//! Reduced two-atom density matrix and its concurrence.
//!
//! Basis order is `{|ee⟩, |eg⟩, |ge⟩, |gg⟩}`. Tracing the single-excitation
//! state over cavity and bath leaves an X-state with `ρ_ee,ee = 0`.

use nalgebra::{Matrix4, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues down to `-PSD_TOL` are clipped to zero; anything lower is rejected.
pub const PSD_TOL: f64 = 1e-10;
const X_STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitDensityMatrix {
    m: Matrix4<Complex64>,
}

/// Serialized form: row-major `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityMatrixSnapshot {
    pub basis: [String; 4],
    pub entries: Vec<[f64; 2]>,
}

impl TwoQubitDensityMatrix {
    /// Validate and wrap a matrix; slightly negative eigenvalues are repaired.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self> {
        let herm = (m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidDensityMatrix(format!("not Hermitian (deviation {herm:e})")));
        }
        let trace = m.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {trace} differs from 1")));
        }
        let m = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(m);
        let min = eig.eigenvalues.min();
        if min < -PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min:e}")));
        }
        if min >= 0.0 {
            return Ok(Self { m });
        }
        let mut vals = eig.eigenvalues.map(|v| v.max(0.0));
        let total = vals.sum();
        vals /= total;
        Ok(Self { m: eig.recompose_with(vals) })
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.m
    }

    /// Entry `(row, col)` with 0-based indices.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.m[(row, col)]
    }

    pub fn snapshot(&self) -> DensityMatrixSnapshot {
        let mut entries = Vec::with_capacity(16);
        for r in 0..4 {
            for c in 0..4 {
                let z = self.m[(r, c)];
                entries.push([z.re, z.im]);
            }
        }
        DensityMatrixSnapshot {
            basis: ["ee", "eg", "ge", "gg"].map(String::from),
            entries,
        }
    }
}

trait Recompose {
    fn recompose_with(&self, vals: nalgebra::Vector4<f64>) -> Matrix4<Complex64>;
}

impl Recompose for SymmetricEigen<Complex64, nalgebra::U4> {
    fn recompose_with(&self, vals: nalgebra::Vector4<f64>) -> Matrix4<Complex64> {
        let u = &self.eigenvectors;
        let d = Matrix4::from_diagonal(&vals.map(|v| Complex64::new(v, 0.0)));
        u * d * u.adjoint()
    }
}

/// Running sums of the atomic amplitudes needed for the averaged X-state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AtomicMoments {
    pub count: u64,
    pub pop1: f64,
    pub pop2: f64,
    pub coherence: Complex64,
}

impl AtomicMoments {
    pub fn push(&mut self, c1: Complex64, c2: Complex64) {
        self.count += 1;
        self.pop1 += c1.norm_sqr();
        self.pop2 += c2.norm_sqr();
        self.coherence += c1 * c2.conj();
    }

    pub fn merge(&mut self, other: &AtomicMoments) {
        self.count += other.count;
        self.pop1 += other.pop1;
        self.pop2 += other.pop2;
        self.coherence += other.coherence;
    }

    /// Averages `(M|C1|², M|C2|², M[C1 C2*])`.
    pub fn means(&self) -> Option<(f64, f64, Complex64)> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some((self.pop1 / n, self.pop2 / n, self.coherence / n))
    }

    pub fn density_matrix(&self) -> Result<TwoQubitDensityMatrix> {
        let (p1, p2, coh) = self.means().ok_or(Error::EmptySamples)?;
        x_state(p1, p2, coh)
    }

    /// `2 |M[C1 C2*]|`, the X-state concurrence of the averaged state.
    pub fn concurrence(&self) -> f64 {
        self.means().map_or(0.0, |(_, _, coh)| 2.0 * coh.norm())
    }
}

/// Single-excitation X-state with populations `ρ22`, `ρ33` and coherence `ρ23`.
pub fn x_state(pop1: f64, pop2: f64, coherence: Complex64) -> Result<TwoQubitDensityMatrix> {
    let z = Complex64::ZERO;
    let r = |x: f64| Complex64::new(x, 0.0);
    let m = Matrix4::new(
        z, z, z, z, //
        z, r(pop1), coherence, z, //
        z, coherence.conj(), r(pop2), z, //
        z, z, z, r(1.0 - pop1 - pop2),
    );
    TwoQubitDensityMatrix::new(m)
}

/// Uniformly weighted average of `|ψ_j⟩⟨ψ_j|` traced down to the atoms.
pub fn reduced_density_matrix(samples: &[(Complex64, Complex64)]) -> Result<TwoQubitDensityMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut acc = AtomicMoments::default();
    for (j, &(c1, c2)) in samples.iter().enumerate() {
        let n = c1.norm_sqr() + c2.norm_sqr();
        if n > 1.0 + TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("sample {j} has atomic population {n}")));
        }
        acc.push(c1, c2);
    }
    acc.density_matrix()
}

/// Wootters concurrence `max(0, λ1 - λ2 - λ3 - λ4)`.
///
/// The `λ_i` are the singular values of `√ρ Y (√ρ)* Y` with `Y = σy⊗σy`,
/// which equal the square roots of the eigenvalues of `ρ Y ρ* Y` but avoid
/// taking square roots of round-off-sized eigenvalues.
pub fn concurrence_wootters(rho: &TwoQubitDensityMatrix) -> Result<f64> {
    let eig = SymmetricEigen::new(rho.m);
    let scale = eig.eigenvalues.abs().max();
    let roots = eig.eigenvalues.map(|v| {
        if v < -PSD_TOL {
            f64::NAN
        } else if v <= 1e-14 * scale {
            0.0
        } else {
            v.sqrt()
        }
    });
    if roots.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidDensityMatrix("not positive semidefinite".into()));
    }
    let sqrt_rho = eig.recompose_with(roots);
    let y = spin_flip();
    let m = sqrt_rho * y * sqrt_rho.conjugate() * y;
    let mut sv: Vec<f64> = SVD::new(m, false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok((sv[0] - sv[1] - sv[2] - sv[3]).clamp(0.0, 1.0))
}

fn spin_flip() -> Matrix4<Complex64> {
    let z = Complex64::ZERO;
    let o = Complex64::ONE;
    Matrix4::new(
        z, z, z, -o, //
        z, z, o, z, //
        z, o, z, z, //
        -o, z, z, z,
    )
}

/// Closed form `2 max(0, |ρ_23| - √(ρ_11 ρ_44))` for states whose only
/// nonzero entries are the diagonal and `ρ_23`, `ρ_32` (1-based indices).
pub fn concurrence_xstate(rho: &TwoQubitDensityMatrix) -> Result<f64> {
    let m = &rho.m;
    for r in 0..4 {
        for c in 0..4 {
            let allowed = r == c || (r, c) == (1, 2) || (r, c) == (2, 1);
            let magnitude = m[(r, c)].norm();
            if !allowed && magnitude > X_STRUCTURE_TOL {
                return Err(Error::NotXState { row: r + 1, col: c + 1, magnitude });
            }
        }
    }
    let outer = (m[(0, 0)].re.max(0.0) * m[(3, 3)].re.max(0.0)).sqrt();
    Ok((2.0 * (m[(1, 2)].norm() - outer)).clamp(0.0, 1.0))
}

/// Concurrence `2 |C1| |C2|` of the atoms along a single trajectory.
pub fn pure_state_concurrence(c1: Complex64, c2: Complex64) -> f64 {
    2.0 * c1.norm() * c2.norm()
}

/// Concurrence time series of an ensemble-averaged state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrenceSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ConcurrenceSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the recorded time closest to `t`.
    pub fn index_near(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
    }

    /// `(C, stderr)` at the recorded time closest to `t`.
    pub fn at(&self, t: f64) -> Option<(f64, f64)> {
        self.index_near(t).map(|i| (self.values[i], self.stderr[i]))
    }
}
