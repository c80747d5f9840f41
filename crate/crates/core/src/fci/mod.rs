//! Exact diagonalization in a determinant basis, standing in for the
//! correlated solver of the fictitious Hamiltonian.

mod greens;
mod hamiltonian;
mod solver;
mod space;

pub use greens::{extract_sigma, fci_greens_function, FciGreensFunction, PoleSet};
pub use hamiltonian::{FciHamiltonian, Sector, SectorTables};
pub use solver::{
    lanczos_ground, solve_spectrum, solve_spectrum_seeded, GroundState, SectorSpectrum, SolveMode, SpectralSolution,
    FULL_SPECTRUM_MAX_ORBITALS, DEFAULT_LANCZOS_SEED,
};
pub use space::{binomial, DeterminantSpace, StringSpace};

use std::sync::Arc;

use crate::dsem::{FictitiousHamiltonian, FictitiousSolver};
use crate::error::Result;
use crate::grid::{ImagGrid, MatsubaraFunction};

/// Summary of the most recent fictitious solve.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FciRun {
    pub ground_energy: f64,
    pub mu: f64,
    pub n_poles: usize,
}

/// Exact solver for the fictitious Hamiltonian.
#[derive(Debug, Clone)]
pub struct FciSolver {
    pub mode: SolveMode,
    pub seed: u64,
    pub last: Option<FciRun>,
}

impl Default for FciSolver {
    fn default() -> Self {
        FciSolver { mode: SolveMode::Auto, seed: DEFAULT_LANCZOS_SEED, last: None }
    }
}

impl FictitiousSolver for FciSolver {
    fn self_energy(&mut self, fic: &FictitiousHamiltonian, grid: &Arc<ImagGrid>) -> Result<MatsubaraFunction> {
        let h = FciHamiltonian::new(fic.f_tilde.matrix(), &fic.v_tilde, 0.0)?;
        let sol = solve_spectrum_seeded(&h, fic.n_electrons, self.mode, self.seed)?;
        let gf = fci_greens_function(&h, &sol, grid, None)?;
        self.last = Some(FciRun { ground_energy: sol.ground_energy(), mu: gf.mu, n_poles: gf.poles.len() });
        extract_sigma(&gf, fic.f_tilde.matrix(), &fic.v_tilde)
    }
}
