//! Sector diagonalization: dense full spectra or a Lanczos ground state.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::hamiltonian::{FciHamiltonian, Sector};
use crate::error::{Error, Result};
use crate::linalg::sorted_eigh;

pub const FULL_SPECTRUM_MAX_ORBITALS: usize = 8;
const LANCZOS_RESTARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    FullSpectrum,
    GroundLanczos,
    /// Full spectrum up to 8 orbitals, Lanczos above.
    Auto,
}

#[derive(Debug, Clone)]
pub struct SectorSpectrum {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub energies: DVector<f64>,
    /// Eigenvectors as columns, ascending energies.
    pub vectors: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub n_alpha: usize,
    pub n_beta: usize,
    pub energy: f64,
    pub vector: Vec<f64>,
    /// `||H psi - E psi||`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum SpectralSolution {
    /// Every sector with `N - 1 <= N_alpha + N_beta <= N + 1`.
    Full { n_orb: usize, n_electrons: usize, sectors: Vec<SectorSpectrum> },
    Ground { n_orb: usize, n_electrons: usize, state: GroundState },
}

impl SpectralSolution {
    pub fn n_orb(&self) -> usize {
        match self {
            SpectralSolution::Full { n_orb, .. } | SpectralSolution::Ground { n_orb, .. } => *n_orb,
        }
    }

    pub fn n_electrons(&self) -> usize {
        match self {
            SpectralSolution::Full { n_electrons, .. } | SpectralSolution::Ground { n_electrons, .. } => *n_electrons,
        }
    }

    /// Lowest energy among `N`-electron states (including the core constant).
    pub fn ground_energy(&self) -> f64 {
        match self {
            SpectralSolution::Full { n_electrons, sectors, .. } => sectors
                .iter()
                .filter(|s| s.n_alpha + s.n_beta == *n_electrons)
                .map(|s| s.energies[0])
                .fold(f64::INFINITY, f64::min),
            SpectralSolution::Ground { state, .. } => state.energy,
        }
    }

    pub fn sector(&self, n_alpha: usize, n_beta: usize) -> Option<&SectorSpectrum> {
        match self {
            SpectralSolution::Full { sectors, .. } => {
                sectors.iter().find(|s| s.n_alpha == n_alpha && s.n_beta == n_beta)
            }
            SpectralSolution::Ground { .. } => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal Krylov basis with the projected Hamiltonian, grown one vector
/// application at a time with full (twice repeated) Gram-Schmidt.
pub(crate) struct Krylov {
    pub q: Vec<Vec<f64>>,
    /// `t[i][j] = q_i . H q_j` for applied `j`.
    t: Vec<Vec<f64>>,
    pub applied: usize,
    deflation: f64,
}

impl Krylov {
    /// Orthonormalizes `start`; returns the basis and the coefficients
    /// `r[k][i] = q_k . start_i`.
    pub fn new(start: &[Vec<f64>], deflation: f64) -> (Self, Vec<Vec<f64>>) {
        let mut kr = Krylov { q: Vec::new(), t: Vec::new(), applied: 0, deflation };
        let scale = start.iter().map(|s| norm(s)).fold(0.0, f64::max);
        for s in start {
            kr.push(s.clone(), scale);
        }
        let r = kr.q.iter().map(|q| start.iter().map(|s| dot(q, s)).collect()).collect();
        (kr, r)
    }

    fn push(&mut self, mut w: Vec<f64>, scale: f64) -> bool {
        for _ in 0..2 {
            for q in &self.q {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let nw = norm(&w);
        if nw <= self.deflation * scale.max(f64::MIN_POSITIVE) || nw == 0.0 {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        self.q.push(w);
        self.t.push(Vec::new());
        true
    }

    pub fn exhausted(&self) -> bool {
        self.applied == self.q.len()
    }

    /// Applies `H` to the next unapplied vector.
    pub fn step(&mut self, apply: &dyn Fn(&[f64]) -> Result<Vec<f64>>) -> Result<()> {
        let j = self.applied;
        let w = apply(&self.q[j])?;
        let col: Vec<f64> = self.q.iter().map(|q| dot(q, &w)).collect();
        self.t[j] = col;
        self.applied += 1;
        let scale = norm(&w);
        self.push(w, scale);
        Ok(())
    }

    /// Projected Hamiltonian on the applied vectors.
    pub fn projected(&self) -> DMatrix<f64> {
        let m = self.applied;
        let t = DMatrix::from_fn(m, m, |i, j| if i <= j { self.t[j][i] } else { self.t[i][j] });
        (&t + t.transpose()) * 0.5
    }

    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q[0].len()];
        for (c, q) in coeffs.iter().zip(&self.q) {
            axpy(*c, q, &mut out);
        }
        out
    }
}

/// Lanczos ground state of one sector.
pub fn lanczos_ground(
    h: &FciHamiltonian,
    sector: &Sector,
    tolerance: f64,
    max_iterations: usize,
    seed: u64,
) -> Result<GroundState> {
    let dim = sector.dim();
    let (na, nb) = sector.space.sector();
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let apply = |x: &[f64]| sector.apply(h, x);
    for restart in 0..=LANCZOS_RESTARTS {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        let start: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut kr, _) = Krylov::new(&[start], 1e-14);
        let mut previous = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iterations.min(dim) && !kr.exhausted() {
            kr.step(&apply)?;
            iterations += 1;
            let check = kr.exhausted() || iterations % 10 == 0 || iterations == dim;
            if !check {
                continue;
            }
            let (vals, vecs) = sorted_eigh(&kr.projected());
            let energy = vals[0];
            let coeffs: Vec<f64> = vecs.column(0).iter().copied().collect();
            if (energy - previous).abs() < tolerance || kr.exhausted() {
                let vector = kr.combine(&coeffs);
                let hv = apply(&vector)?;
                let residual = hv.iter().zip(&vector).map(|(a, b)| (a - energy * b).powi(2)).sum::<f64>().sqrt();
                if residual < 1e-8 {
                    return Ok(GroundState { n_alpha: na, n_beta: nb, energy, vector, residual, iterations });
                }
                if kr.exhausted() {
                    break;
                }
            }
            previous = energy;
        }
        log::debug!("Lanczos restart {} in sector ({na},{nb})", restart + 1);
    }
    Err(Error::LanczosBreakdown(LANCZOS_RESTARTS))
}

/// Seed of the random Lanczos start vector unless one is given.
pub const DEFAULT_LANCZOS_SEED: u64 = 0x5eed;

/// Diagonalizes `h` for `n_electrons` (closed shell, `N_alpha = N_beta`).
pub fn solve_spectrum(h: &FciHamiltonian, n_electrons: usize, mode: SolveMode) -> Result<SpectralSolution> {
    solve_spectrum_seeded(h, n_electrons, mode, DEFAULT_LANCZOS_SEED)
}

pub fn solve_spectrum_seeded(
    h: &FciHamiltonian,
    n_electrons: usize,
    mode: SolveMode,
    seed: u64,
) -> Result<SpectralSolution> {
    let n = h.n;
    if n_electrons % 2 != 0 {
        return Err(Error::OpenShell(n_electrons));
    }
    let mode = match mode {
        SolveMode::Auto if n <= FULL_SPECTRUM_MAX_ORBITALS => SolveMode::FullSpectrum,
        SolveMode::Auto => SolveMode::GroundLanczos,
        m => m,
    };
    let half = n_electrons / 2;
    match mode {
        SolveMode::FullSpectrum => {
            if n > FULL_SPECTRUM_MAX_ORBITALS {
                return Err(Error::DimensionOverBudget(n, "full-spectrum FCI"));
            }
            let mut sectors = Vec::new();
            for total in n_electrons.saturating_sub(1)..=(n_electrons + 1).min(2 * n) {
                for na in 0..=total.min(n) {
                    let nb = total - na;
                    if nb > n {
                        continue;
                    }
                    let sec = Sector::new(n, na, nb)?;
                    let dense = h.dense_matrix(&sec.space, &sec.tables);
                    let (energies, vectors) = sorted_eigh(&dense);
                    sectors.push(SectorSpectrum { n_alpha: na, n_beta: nb, energies, vectors });
                }
            }
            Ok(SpectralSolution::Full { n_orb: n, n_electrons, sectors })
        }
        _ => {
            let sec = Sector::new(n, half, half)?;
            let state = lanczos_ground(h, &sec, 1e-10, 2000, seed)?;
            Ok(SpectralSolution::Ground { n_orb: n, n_electrons, state })
        }
    }
}
