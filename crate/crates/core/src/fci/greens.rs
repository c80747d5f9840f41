//! Green's function of an exactly solved Hamiltonian as a sum of poles, and
//! the self-energy obtained by inverting the Dyson equation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::sync::Arc;

use super::hamiltonian::{FciHamiltonian, Sector};
use super::solver::{Krylov, SpectralSolution};
use crate::error::{Error, Result};
use crate::gf2::mean_field;
use crate::grid::{ImagGrid, MatsubaraFunction};
use crate::hamiltonian::TwoBodyTensor;
use crate::linalg::{fermi, invert_complex, sorted_eigh};

const WEIGHT_CUTOFF: f64 = 1e-15;
const KRYLOV_MAX: usize = 600;
const KRYLOV_TOLERANCE: f64 = 1e-10;

/// `G(iw) = sum_m x_m x_m^T / (iw - eps_m)` with `eps_m` measured from `mu`.
#[derive(Debug, Clone)]
pub struct PoleSet {
    pub n: usize,
    pub energies: Vec<f64>,
    pub residues: Vec<DVector<f64>>,
}

impl PoleSet {
    fn new(n: usize) -> Self {
        PoleSet { n, energies: Vec::new(), residues: Vec::new() }
    }

    fn push(&mut self, eps: f64, x: DVector<f64>) {
        if x.norm_squared() > 0.0 {
            self.energies.push(eps);
            self.residues.push(x);
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// `sum_m eps_m^k x_m x_m^T`.
    pub fn moment(&self, k: i32) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (e, x) in self.energies.iter().zip(&self.residues) {
            out += x * x.transpose() * e.powi(k);
        }
        out
    }

    pub fn at(&self, z: Complex64) -> DMatrix<Complex64> {
        let n = self.n;
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        for (e, x) in self.energies.iter().zip(&self.residues) {
            let f = 1.0 / (z - e);
            for j in 0..n {
                let fx = f * x[j];
                for i in 0..n {
                    out[(i, j)] += fx * x[i];
                }
            }
        }
        out
    }

    pub fn evaluate(&self, grid: &Arc<ImagGrid>) -> MatsubaraFunction {
        let data = grid.omega().iter().map(|&w| self.at(Complex64::new(0.0, w))).collect();
        MatsubaraFunction { grid: grid.clone(), data, tail: vec![self.moment(0), self.moment(1), self.moment(2)] }
    }

    /// Spin-summed one-body density `2 sum_m f(eps_m) x_m x_m^T`.
    pub fn density(&self, beta: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (e, x) in self.energies.iter().zip(&self.residues) {
            out += x * x.transpose() * (2.0 * fermi(beta, *e));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FciGreensFunction {
    pub g: MatsubaraFunction,
    pub mu: f64,
    /// Spin-summed density of the solved state.
    pub gamma: DMatrix<f64>,
    pub poles: PoleSet,
}

fn column(m: &DMatrix<f64>, c: usize) -> Vec<f64> {
    m.column(c).iter().copied().collect()
}

fn lehmann(solution: &SpectralSolution, beta: f64, mu: f64) -> Result<PoleSet> {
    let SpectralSolution::Full { n_orb: n, n_electrons, sectors } = solution else { unreachable!() };
    let n = *n;
    // Thermal weight sits on the N-electron states only; N +- 1 enter as pole partners.
    let in_ensemble = |s: &super::solver::SectorSpectrum| s.n_alpha + s.n_beta == *n_electrons;
    let k_of = |s: &super::solver::SectorSpectrum, e: f64| e - mu * (s.n_alpha + s.n_beta) as f64;
    let k_min = sectors
        .iter()
        .filter(|s| in_ensemble(s))
        .flat_map(|s| s.energies.iter().map(move |&e| k_of(s, e)))
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<Vec<f64>> = sectors
        .iter()
        .map(|s| {
            s.energies.iter().map(|&e| if in_ensemble(s) { (-beta * (k_of(s, e) - k_min)).exp() } else { 0.0 }).collect()
        })
        .collect();
    let z: f64 = weights.iter().flatten().sum();
    let mut poles = PoleSet::new(n);
    for (ia, sa) in sectors.iter().enumerate() {
        let Some(ib) = sectors.iter().position(|s| s.n_alpha == sa.n_alpha + 1 && s.n_beta == sa.n_beta) else {
            continue;
        };
        let sb = &sectors[ib];
        let spa = Sector::new(n, sa.n_alpha, sa.n_beta)?;
        let spb = Sector::new(n, sb.n_alpha, sb.n_beta)?;
        let (wa, wb) = (&weights[ia], &weights[ib]);
        let sig_a: Vec<usize> = (0..wa.len()).filter(|&a| wa[a] > WEIGHT_CUTOFF).collect();
        let sig_b: Vec<usize> = (0..wb.len()).filter(|&b| wb[b] > WEIGHT_CUTOFF).collect();
        // x[(b, a)][j] = <b| a+_j |a>
        let mut amps: std::collections::BTreeMap<(usize, usize), DVector<f64>> = Default::default();
        for &a in &sig_a {
            let va = column(&sa.vectors, a);
            for j in 0..n {
                let cv = DVector::from_vec(spa.space.create_alpha(&spb.space, j, &va)?);
                let proj = sb.vectors.tr_mul(&cv);
                for b in 0..proj.len() {
                    amps.entry((b, a)).or_insert_with(|| DVector::zeros(n))[j] = proj[b];
                }
            }
        }
        for &b in &sig_b {
            let vb = column(&sb.vectors, b);
            for j in 0..n {
                let av = DVector::from_vec(spb.space.annihilate_alpha(&spa.space, j, &vb)?);
                let proj = sa.vectors.tr_mul(&av);
                for a in 0..proj.len() {
                    if wa[a] > WEIGHT_CUTOFF {
                        continue;
                    }
                    amps.entry((b, a)).or_insert_with(|| DVector::zeros(n))[j] = proj[a];
                }
            }
        }
        for ((b, a), x) in amps {
            let w = (wa[a] + wb[b]) / z;
            let eps = k_of(sb, sb.energies[b]) - k_of(sa, sa.energies[a]);
            poles.push(eps, x * w.sqrt());
        }
    }
    Ok(poles)
}

/// Block Krylov representation of `start^T (z - s (H - shift))^{-1} start`.
fn krylov_poles(
    h: &FciHamiltonian,
    sector: &Sector,
    start: Vec<Vec<f64>>,
    grid: &Arc<ImagGrid>,
    to_pole: &dyn Fn(f64) -> f64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>, Vec<f64>)> {
    let n = start.len();
    let (mut kr, r) = Krylov::new(&start, 1e-10);
    let k0 = kr.q.len();
    let apply = |x: &[f64]| sector.apply(h, x);
    let probes: Vec<f64> = [0usize, 2, 8, 32].iter().map(|&k| grid.omega()[k.min(grid.n_omega() - 1)]).collect();
    let ritz = |kr: &Krylov| -> (Vec<f64>, Vec<DVector<f64>>) {
        let (vals, vecs) = sorted_eigh(&kr.projected());
        let xs = (0..vals.len())
            .map(|m| DVector::from_fn(n, |i, _| (0..k0).map(|k| vecs[(k, m)] * r[k][i]).sum::<f64>()))
            .collect();
        (vals.iter().copied().collect(), xs)
    };
    let probe_values = |vals: &[f64], xs: &[DVector<f64>]| -> Vec<DMatrix<Complex64>> {
        let mut ps = PoleSet::new(n);
        for (v, x) in vals.iter().zip(xs) {
            ps.push(to_pole(*v), x.clone());
        }
        probes.iter().map(|&w| ps.at(Complex64::new(0.0, w))).collect()
    };
    let mut previous: Option<Vec<DMatrix<Complex64>>> = None;
    loop {
        let block = k0.max(1);
        for _ in 0..block {
            if kr.exhausted() {
                break;
            }
            kr.step(&apply)?;
        }
        if kr.applied < k0 {
            continue;
        }
        let (vals, xs) = ritz(&kr);
        let current = probe_values(&vals, &xs);
        let converged = previous.as_ref().is_some_and(|p| {
            p.iter().zip(&current).all(|(a, b)| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max) < KRYLOV_TOLERANCE)
        });
        if converged || kr.exhausted() || kr.applied >= KRYLOV_MAX.min(sector.dim()) {
            if !converged && !kr.exhausted() {
                log::warn!("Krylov Green's function stopped at {} vectors before converging", kr.applied);
            }
            return Ok((vals.clone(), xs, vals));
        }
        previous = Some(current);
    }
}

/// Green's function of the spin-up electron for the solved Hamiltonian.
/// `mu = None` places the chemical potential midway between the lowest
/// addition and removal energies.
pub fn fci_greens_function(
    h: &FciHamiltonian,
    solution: &SpectralSolution,
    grid: &Arc<ImagGrid>,
    mu: Option<f64>,
) -> Result<FciGreensFunction> {
    let n = solution.n_orb();
    if h.n != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.n });
    }
    let ne = solution.n_electrons();
    let beta = grid.beta();
    let poles = match solution {
        SpectralSolution::Full { sectors, .. } => {
            let lowest = |total: usize| {
                sectors
                    .iter()
                    .filter(|s| s.n_alpha + s.n_beta == total)
                    .map(|s| s.energies[0])
                    .fold(f64::INFINITY, f64::min)
            };
            let mu = mu.unwrap_or_else(|| 0.5 * (lowest(ne + 1) - lowest(ne.saturating_sub(1))));
            let mu = if mu.is_finite() { mu } else { 0.0 };
            (lehmann(solution, beta, mu)?, mu)
        }
        SpectralSolution::Ground { state, .. } => {
            let e0 = state.energy;
            let here = Sector::new(n, state.n_alpha, state.n_beta)?;
            let mut particle = (vec![], vec![], vec![]);
            if state.n_alpha < n {
                let up = Sector::new(n, state.n_alpha + 1, state.n_beta)?;
                let start = (0..n)
                    .map(|j| here.space.create_alpha(&up.space, j, &state.vector))
                    .collect::<Result<Vec<_>>>()?;
                particle = krylov_poles(h, &up, start, grid, &|t| t - e0)?;
            }
            let mut hole = (vec![], vec![], vec![]);
            if state.n_alpha > 0 {
                let down = Sector::new(n, state.n_alpha - 1, state.n_beta)?;
                let start = (0..n)
                    .map(|j| here.space.annihilate_alpha(&down.space, j, &state.vector))
                    .collect::<Result<Vec<_>>>()?;
                hole = krylov_poles(h, &down, start, grid, &|t| e0 - t)?;
            }
            let add = particle.2.iter().copied().fold(f64::INFINITY, f64::min) - e0;
            let remove = e0 - hole.2.iter().copied().fold(f64::INFINITY, f64::min);
            let mu = mu.unwrap_or(0.5 * (add + remove));
            let mu = if mu.is_finite() { mu } else { 0.0 };
            let mut ps = PoleSet::new(n);
            for (t, x) in particle.0.iter().zip(particle.1) {
                ps.push(t - e0 - mu, x);
            }
            for (t, x) in hole.0.iter().zip(hole.1) {
                ps.push(e0 - t - mu, x);
            }
            (ps, mu)
        }
    };
    let (poles, mu) = poles;
    let g = poles.evaluate(grid);
    let gamma = poles.density(beta);
    Ok(FciGreensFunction { g, mu, gamma, poles })
}

/// `Sigma(iw) = (iw + mu) - F~ - G(iw)^{-1} - MF(v~, gamma)`, the purely
/// dynamical part; its tail follows from the pole moments of `G`.
pub fn extract_sigma(gf: &FciGreensFunction, f_tilde: &DMatrix<f64>, v_tilde: &TwoBodyTensor) -> Result<MatsubaraFunction> {
    let n = f_tilde.nrows();
    if gf.g.n() != n || v_tilde.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gf.g.n() });
    }
    let statics = f_tilde + mean_field(&v_tilde.to_dense(), n, &gf.gamma);
    let a = statics.map(|x| Complex64::new(x - 0.0, 0.0));
    let grid = gf.g.grid.clone();
    let mut data = Vec::with_capacity(grid.n_omega());
    for (&w, gw) in grid.omega().iter().zip(&gf.g.data) {
        let inv = invert_complex(gw.clone()).ok_or(Error::Singular("FCI Green's function"))?;
        let z = Complex64::new(gf.mu, w);
        data.push(DMatrix::from_diagonal_element(n, n, z) - &a - inv);
    }
    // G = w sum_k p_k w^k with w = 1/z; G^{-1} = z d0 + d1 + d2 / z + d3 / z^2 + d4 / z^3.
    let p: Vec<DMatrix<f64>> = (0..5).map(|k| gf.poles.moment(k)).collect();
    let p0_inv = p[0].clone().try_inverse().ok_or(Error::Singular("Green's function moments"))?;
    let mut d = vec![p0_inv.clone()];
    for k in 1..5 {
        let mut acc = DMatrix::zeros(n, n);
        for j in 1..=k {
            acc += &p[j] * &d[k - j];
        }
        d.push(-&p0_inv * acc);
    }
    let tail = vec![-&d[2], -&d[3], -&d[4]];
    Ok(MatsubaraFunction { grid, data, tail })
}
