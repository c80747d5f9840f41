//! Restricted Hartree-Fock, the second-order self-energy, the Dyson equation,
//! chemical-potential search and the self-consistent finite-temperature GF2
//! loop.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{evaluate_g0, omega_to_tau, tau_to_omega, value_at_tau, GridParams, ImagGrid, MatsubaraFunction, TauFunction};
use crate::hamiltonian::{MolecularSystem, OneBodyTensor, TwoBodyTensor};
use crate::linalg::{fermi, gemm, generalized_eigh, invert_complex};

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `sum_kl gamma_kl (v_ijkl - 0.5 v_ilkj)` on a dense row-major tensor.
pub(crate) fn mean_field(dense: &[f64], n: usize, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in 0..n {
                for l in 0..n {
                    acc += gamma[(k, l)] * (dense[idx(i, j, k, l)] - 0.5 * dense[idx(i, l, k, j)]);
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

/// Fock matrix `F_ij = t_ij + sum_kl gamma_kl (v_ijkl - 0.5 v_ilkj)`.
pub fn build_fock(t: &OneBodyTensor, v: &TwoBodyTensor, gamma: &DMatrix<f64>) -> Result<OneBodyTensor> {
    let n = t.n();
    check_dim(n, v.n())?;
    check_dim(n, gamma.nrows())?;
    check_dim(n, gamma.ncols())?;
    OneBodyTensor::from_matrix(t.matrix() + mean_field(&v.to_dense(), n, gamma))
}

/// `E_1b = 1/2 sum_ij gamma_ij (t_ij + F_ij)`.
pub fn energy_1b(gamma: &DMatrix<f64>, t: &DMatrix<f64>, fock: &DMatrix<f64>) -> Result<f64> {
    check_dim(t.nrows(), gamma.nrows())?;
    check_dim(t.nrows(), fock.nrows())?;
    Ok(0.5 * gamma.component_mul(&(t + fock)).sum())
}

#[derive(Debug, Clone, Copy)]
pub struct RhfOptions {
    pub max_iterations: usize,
    pub energy_tolerance: f64,
    pub commutator_tolerance: f64,
    pub diis_size: usize,
}

impl Default for RhfOptions {
    fn default() -> Self {
        RhfOptions { max_iterations: 200, energy_tolerance: 1e-12, commutator_tolerance: 1e-9, diis_size: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct RhfResult {
    pub coefficients: DMatrix<f64>,
    pub orbital_energies: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub fock: DMatrix<f64>,
    /// Electronic plus nuclear energy.
    pub energy: f64,
    pub iterations: usize,
}

fn occupied_density(c: &DMatrix<f64>, n_occ: usize) -> DMatrix<f64> {
    let occ = c.columns(0, n_occ);
    &occ * occ.transpose() * 2.0
}

fn diis_extrapolate(focks: &[DMatrix<f64>], errors: &[DMatrix<f64>]) -> Option<DMatrix<f64>> {
    let m = focks.len();
    let mut b = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    for i in 0..m {
        for j in 0..m {
            b[(i, j)] = errors[i].dot(&errors[j]);
        }
        b[(i, m)] = -1.0;
        b[(m, i)] = -1.0;
    }
    rhs[m] = -1.0;
    let coef = b.lu().solve(&rhs)?;
    let mut out = DMatrix::zeros(focks[0].nrows(), focks[0].ncols());
    for (f, c) in focks.iter().zip(coef.iter()) {
        out += f * *c;
    }
    Some(out)
}

pub fn rhf(system: &MolecularSystem) -> Result<RhfResult> {
    rhf_with(system, &RhfOptions::default())
}

/// Roothaan SCF with Pulay DIIS, starting from the core Hamiltonian.
pub fn rhf_with(system: &MolecularSystem, options: &RhfOptions) -> Result<RhfResult> {
    system.validate()?;
    let n = system.n_orbitals();
    let n_occ = system.n_electrons / 2;
    let t = system.t.matrix();
    let s = system.s.matrix();
    let dense = system.v.to_dense();
    let (mut e, mut c) = generalized_eigh(t, s);
    let mut gamma = occupied_density(&c, n_occ);
    let mut energy = f64::INFINITY;
    let mut focks: Vec<DMatrix<f64>> = Vec::new();
    let mut errors: Vec<DMatrix<f64>> = Vec::new();
    for it in 1..=options.max_iterations {
        let fock = t + mean_field(&dense, n, &gamma);
        let new_energy = energy_1b(&gamma, t, &fock)? + system.e_nuc;
        let comm = &fock * &gamma * s - s * &gamma * &fock;
        let comm_norm = comm.amax();
        if (new_energy - energy).abs() < options.energy_tolerance && comm_norm < options.commutator_tolerance {
            return Ok(RhfResult { coefficients: c, orbital_energies: e, gamma, fock, energy: new_energy, iterations: it });
        }
        energy = new_energy;
        focks.push(fock.clone());
        errors.push(comm);
        if focks.len() > options.diis_size {
            focks.remove(0);
            errors.remove(0);
        }
        let f_use = if options.diis_size > 1 && focks.len() > 1 {
            diis_extrapolate(&focks, &errors).unwrap_or(fock)
        } else {
            fock
        };
        (e, c) = generalized_eigh(&f_use, s);
        gamma = occupied_density(&c, n_occ);
    }
    Err(Error::NotConverged { what: "RHF", iterations: options.max_iterations })
}

/// Factorized evaluation of the second-order self-energy
/// `Sigma_ij(tau) = -sum G_kl(tau) G_mn(tau) G_pq(-tau) v_imqk (2 v_lpnj - v_nplj)`.
#[derive(Debug, Clone)]
pub struct SecondOrderKernel {
    n: usize,
    v: Vec<f64>,
    /// `w[n,p,l,j] = 2 v_lpnj - v_nplj`.
    w: Vec<f64>,
    /// `wf[l,p,n,j] = w[n,p,l,j]`.
    wf: Vec<f64>,
}

impl SecondOrderKernel {
    pub fn new(v: &TwoBodyTensor) -> Self {
        let n = v.n();
        let dense = v.to_dense();
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        let mut w = vec![0.0; n * n * n * n];
        for a in 0..n {
            for p in 0..n {
                for l in 0..n {
                    for j in 0..n {
                        w[idx(a, p, l, j)] = 2.0 * dense[idx(l, p, a, j)] - dense[idx(a, p, l, j)];
                    }
                }
            }
        }
        let mut wf = vec![0.0; n * n * n * n];
        for a in 0..n {
            for p in 0..n {
                for l in 0..n {
                    for j in 0..n {
                        wf[idx(l, p, a, j)] = w[idx(a, p, l, j)];
                    }
                }
            }
        }
        SecondOrderKernel { n, v: dense, w, wf }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `g` is `G(tau)`, `gm` is `G(-tau)`.
    pub fn evaluate(&self, g: &DMatrix<f64>, gm: &DMatrix<f64>) -> DMatrix<f64> {
        self.contract_w(&self.t_intermediate(g, gm))
    }

    fn row_major(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n;
        (0..n * n).map(|x| m[(x / n, x % n)]).collect()
    }

    /// `T[i,n,p,l] = sum_{mqk} v[i,m,q,k] G[k,l] G[m,n] G(-tau)[p,q]`.
    pub(crate) fn t_intermediate(&self, g: &DMatrix<f64>, gm: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n;
        let n2 = n * n;
        let n3 = n2 * n;
        let g_row = self.row_major(g);
        let gt_row = self.row_major(&g.transpose());
        let gm_row = self.row_major(gm);
        // X1[i,m,q,l] = sum_k v[i,m,q,k] G[k,l]
        let mut x1 = vec![0.0; n3 * n];
        gemm(n3, n, n, &self.v, &g_row, &mut x1, 0.0);
        // X2[i,n,q,l] = sum_m G[m,n] X1[i,m,q,l]
        let mut x2 = vec![0.0; n3 * n];
        for i in 0..n {
            gemm(n, n, n2, &gt_row, &x1[i * n3..(i + 1) * n3], &mut x2[i * n3..(i + 1) * n3], 0.0);
        }
        let mut tt = vec![0.0; n3 * n];
        for block in 0..n2 {
            gemm(n, n, n, &gm_row, &x2[block * n2..(block + 1) * n2], &mut tt[block * n2..(block + 1) * n2], 0.0);
        }
        tt
    }

    /// Symmetrized `-sum_{n,p,l} T[i,n,p,l] w[n,p,l,j]`.
    pub(crate) fn contract_w(&self, tt: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut sig = vec![0.0; n * n];
        gemm(n, n * n * n, n, tt, &self.w, &mut sig, 0.0);
        DMatrix::from_fn(n, n, |i, j| -0.5 * (sig[i * n + j] + sig[j * n + i]))
    }

    /// `Y[k,q,m,j] = sum_{lnp} G[k,l] G[m,n] G(-tau)[p,q] wf[l,p,n,j]`, the
    /// factor multiplying the first integral of the kernel.
    pub(crate) fn y_intermediate(&self, g: &DMatrix<f64>, gm: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n;
        let n2 = n * n;
        let n3 = n2 * n;
        let g_row = self.row_major(g);
        let gmt_row = self.row_major(&gm.transpose());
        // s1[l,q,n,j] = sum_p G(-tau)[p,q] wf[l,p,n,j]
        let mut s1 = vec![0.0; n3 * n];
        for l in 0..n {
            gemm(n, n, n2, &gmt_row, &self.wf[l * n3..(l + 1) * n3], &mut s1[l * n3..(l + 1) * n3], 0.0);
        }
        // s2[l,q,m,j] = sum_n G[m,n] s1[l,q,n,j]
        let mut s2 = vec![0.0; n3 * n];
        for block in 0..n2 {
            gemm(n, n, n, &g_row, &s1[block * n2..(block + 1) * n2], &mut s2[block * n2..(block + 1) * n2], 0.0);
        }
        let mut y = vec![0.0; n3 * n];
        gemm(n, n, n3, &g_row, &s2, &mut y, 0.0);
        y
    }

    /// Self-energy at the selected tau indices.
    pub fn evaluate_points(&self, g_tau: &TauFunction, indices: &[usize]) -> Vec<DMatrix<f64>> {
        let grid = &g_tau.grid;
        indices
            .iter()
            .map(|&k| {
                let gm = -&g_tau.data[grid.reflect(k)];
                self.evaluate(&g_tau.data[k], &gm)
            })
            .collect()
    }
}

/// Second-order self-energy on the full tau mesh.
pub fn gf2_sigma(g_tau: &TauFunction, v: &TwoBodyTensor) -> Result<TauFunction> {
    check_dim(g_tau.n(), v.n())?;
    let kernel = SecondOrderKernel::new(v);
    let all: Vec<usize> = (0..g_tau.grid.n_tau()).collect();
    Ok(TauFunction { grid: g_tau.grid.clone(), data: kernel.evaluate_points(g_tau, &all) })
}

/// `Sigma_1 = -(Sigma(0+) + Sigma(beta-))`.
pub fn sigma1_extract(sigma_tau: &TauFunction) -> OneBodyTensor {
    let d = -sigma_tau.discontinuity();
    OneBodyTensor::from_matrix((&d + d.transpose()) * 0.5).expect("symmetrized")
}

/// `G(iw) = [(iw + mu) S - F - Sigma(iw)]^{-1}` with three tail moments.
pub fn dyson(fock: &DMatrix<f64>, s: &DMatrix<f64>, sigma: &MatsubaraFunction, mu: f64) -> Result<MatsubaraFunction> {
    let n = fock.nrows();
    check_dim(n, sigma.n())?;
    let grid = sigma.grid.clone();
    let a = fock - s * mu;
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let sc = s.map(|x| Complex64::new(x, 0.0));
    let mut data = Vec::with_capacity(grid.n_omega());
    for (w, &om) in grid.omega().iter().enumerate() {
        let m = &sc * Complex64::new(0.0, om) - &ac - &sigma.data[w];
        data.push(invert_complex(m).ok_or(Error::Singular("Dyson equation"))?);
    }
    let s_inv = s.clone().try_inverse().ok_or(Error::Singular("overlap"))?;
    let c2 = &s_inv * &a * &s_inv;
    let mut inner = &a * &s_inv * &a;
    if let Some(s1) = sigma.tail.first() {
        inner += s1;
    }
    let c3 = &s_inv * inner * &s_inv;
    Ok(MatsubaraFunction { grid, data, tail: vec![s_inv, c2, c3] })
}

/// Inverse of [`dyson`]: `Sigma(iw) = (iw + mu) S - F - G(iw)^{-1}`.
pub fn sigma_from_dyson(fock: &DMatrix<f64>, s: &DMatrix<f64>, g: &MatsubaraFunction, mu: f64) -> Result<Vec<DMatrix<Complex64>>> {
    let a = (fock - s * mu).map(|x| Complex64::new(x, 0.0));
    let sc = s.map(|x| Complex64::new(x, 0.0));
    g.grid
        .omega()
        .iter()
        .zip(&g.data)
        .map(|(&om, gw)| {
            let inv = invert_complex(gw.clone()).ok_or(Error::Singular("G inverse"))?;
            Ok(&sc * Complex64::new(0.0, om) - &a - inv)
        })
        .collect()
}

/// `gamma = -2 G(beta-)`.
pub fn density_from_g(g: &MatsubaraFunction) -> Result<OneBodyTensor> {
    let gb = value_at_tau(g, g.grid.beta())?;
    let gamma = gb * -2.0;
    OneBodyTensor::from_matrix((&gamma + gamma.transpose()) * 0.5)
}

/// Galitskii-Migdal two-body energy `(2/beta) sum_ij Re sum_w G_ij(w) Sigma_ij(w)`
/// over the positive frequencies, plus the analytic `-c1 s1 / w^2` remainder
/// beyond the grid.
pub fn energy_2b_gm(g: &MatsubaraFunction, sigma: &MatsubaraFunction) -> Result<f64> {
    let grid = &g.grid;
    if g.tail.is_empty() || sigma.tail.is_empty() {
        return Err(Error::MissingTail(f64::NAN));
    }
    let beta = grid.beta();
    let mut acc = 0.0;
    for (gw, sw) in g.data.iter().zip(&sigma.data) {
        acc += gw.iter().zip(sw.iter()).map(|(a, b)| (a * b).re).sum::<f64>();
    }
    let nw = grid.n_omega();
    let partial: f64 = (0..nw).map(|k| 1.0 / ((2 * k + 1) as f64).powi(2)).sum();
    let remainder = (beta / PI).powi(2) * (PI * PI / 8.0 - partial);
    acc -= g.tail[0].component_mul(&sigma.tail[0]).sum() * remainder;
    Ok(2.0 / beta * acc)
}

/// Density of `G = [(iw + mu) S - F - Sigma]^{-1}`, summing only `G - G0` on the
/// frequency grid. `G0(beta-)` is taken in closed form from the eigenpairs of
/// `(F, S)`, which removes the truncation error of the non-interacting part.
pub fn density_with_reference(
    g: &MatsubaraFunction,
    fock: &DMatrix<f64>,
    s: &DMatrix<f64>,
    sigma: &MatsubaraFunction,
    mu: f64,
) -> Result<DMatrix<f64>> {
    let grid = &g.grid;
    let (e, c) = generalized_eigh(fock, s);
    let n = e.len();
    let occ = DMatrix::from_diagonal(&e.map(|x| 2.0 * fermi(grid.beta(), x - mu)));
    let mut gamma = &c * occ * c.transpose();
    let sigma_zero = sigma.data.iter().all(|m| m.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    if !sigma_zero {
        let cc = c.map(|x| Complex64::new(x, 0.0));
        let data = grid
            .omega()
            .iter()
            .zip(&g.data)
            .map(|(&om, gw)| {
                let d = DMatrix::from_diagonal(&e.map(|x| Complex64::new(1.0, 0.0) / Complex64::new(mu - x, om)));
                gw - &cc * d * cc.transpose()
            })
            .collect();
        let s_inv = s.clone().try_inverse().ok_or(Error::Singular("overlap"))?;
        let c3 = match sigma.tail.first() {
            Some(s1) => &s_inv * s1 * &s_inv,
            None => DMatrix::zeros(n, n),
        };
        let diff = MatsubaraFunction { grid: grid.clone(), data, tail: vec![DMatrix::zeros(n, n), DMatrix::zeros(n, n), c3] };
        gamma -= value_at_tau(&diff, grid.beta())? * 2.0;
    }
    Ok((&gamma + gamma.transpose()) * 0.5)
}

#[derive(Debug, Clone)]
pub struct MuSearch {
    pub mu: f64,
    pub gamma: DMatrix<f64>,
    pub g: MatsubaraFunction,
    pub n_electrons: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MuSearchOptions {
    pub tolerance: f64,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl Default for MuSearchOptions {
    fn default() -> Self {
        MuSearchOptions { tolerance: 1e-7, mu_min: -10.0, mu_max: 10.0 }
    }
}

/// Midpoint between the highest occupied and lowest unoccupied level of `(F, S)`.
pub fn midgap_mu(fock: &DMatrix<f64>, s: &DMatrix<f64>, n_electrons: usize) -> f64 {
    let (e, _) = generalized_eigh(fock, s);
    let n_occ = n_electrons / 2;
    let n = e.len();
    match (n_occ, n_occ < n) {
        (0, _) => e[0] - 1.0,
        (k, true) => 0.5 * (e[k - 1] + e[k]),
        (k, false) => e[k - 1] + 1.0,
    }
}

/// Bisection on `N(mu) = tr(gamma S)` with `gamma` from the Dyson Green's function.
pub fn chemical_potential_search(
    fock: &DMatrix<f64>,
    s: &DMatrix<f64>,
    sigma: &MatsubaraFunction,
    n_target: usize,
    options: &MuSearchOptions,
) -> Result<MuSearch> {
    let target = n_target as f64;
    let mut evaluations = 0;
    let mut eval = |mu: f64| -> Result<MuSearch> {
        evaluations += 1;
        let g = dyson(fock, s, sigma, mu)?;
        let gamma = density_with_reference(&g, fock, s, sigma, mu)?;
        let n_electrons = gamma.component_mul(s).sum();
        Ok(MuSearch { mu, gamma, g, n_electrons, evaluations })
    };
    let mu0 = midgap_mu(fock, s, n_target).clamp(options.mu_min, options.mu_max);
    let first = eval(mu0)?;
    if (first.n_electrons - target).abs() < options.tolerance {
        return Ok(first);
    }
    let up = first.n_electrons < target;
    let (mut lo, mut hi) = if up { (mu0, mu0) } else { (mu0, mu0) };
    let mut step = 0.05;
    let mut found = None;
    for _ in 0..64 {
        let probe = if up { (mu0 + step).min(options.mu_max) } else { (mu0 - step).max(options.mu_min) };
        let r = eval(probe)?;
        if (r.n_electrons - target).abs() < options.tolerance {
            return Ok(r);
        }
        if (r.n_electrons > target) == up {
            if up {
                hi = probe;
            } else {
                lo = probe;
            }
            found = Some(());
            break;
        }
        if up {
            lo = probe;
        } else {
            hi = probe;
        }
        if probe == options.mu_max || probe == options.mu_min {
            break;
        }
        step *= 2.0;
    }
    if found.is_none() {
        return Err(Error::BracketNotFound(options.mu_min, options.mu_max));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        if (r.n_electrons - target).abs() < options.tolerance {
            return Ok(r);
        }
        if r.n_electrons < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Err(Error::NotConverged { what: "chemical potential search", iterations: 200 })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Gf2Options {
    pub grid: GridParams,
    /// Weight of the new density in the damped update.
    pub damping: f64,
    pub energy_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for Gf2Options {
    fn default() -> Self {
        Gf2Options { grid: GridParams::default(), damping: 0.7, energy_tolerance: 1e-7, max_iterations: 100 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mu: f64,
    pub e_1b: f64,
    pub e_2b: f64,
    pub e_total: f64,
}

#[derive(Debug, Clone)]
pub struct GF2State {
    pub fock: OneBodyTensor,
    pub gamma: OneBodyTensor,
    pub mu: f64,
    pub g_tau: TauFunction,
    pub g_omega: MatsubaraFunction,
    pub sigma_tau: TauFunction,
    pub sigma_omega: MatsubaraFunction,
    pub e_1b: f64,
    pub e_2b: f64,
    pub e_nuc: f64,
    pub e_total: f64,
    pub e_hf: f64,
    pub e_corr: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

pub fn gf2_scf(system: &MolecularSystem, options: &Gf2Options) -> Result<GF2State> {
    let hf = rhf(system)?;
    let grid = ImagGrid::new(options.grid)?;
    gf2_scf_from(system, &hf, &grid, options)
}

/// Self-consistent GF2 starting from a converged RHF reference.
pub fn gf2_scf_from(system: &MolecularSystem, hf: &RhfResult, grid: &Arc<ImagGrid>, options: &Gf2Options) -> Result<GF2State> {
    let n = system.n_orbitals();
    let t = system.t.matrix();
    let s = system.s.matrix();
    let dense = system.v.to_dense();
    let kernel = SecondOrderKernel::new(&system.v);
    let all: Vec<usize> = (0..grid.n_tau()).collect();

    let mut gamma = hf.gamma.clone();
    let mut fock = hf.fock.clone();
    let mut mu = midgap_mu(&fock, s, system.n_electrons);
    let mut g_omega = evaluate_g0(&fock, s, mu, grid)?;
    let mut g_tau = omega_to_tau(&g_omega)?;
    let mut e_prev = hf.energy;
    let mut calm = 0;
    let mut trace = Vec::new();
    for it in 1..=options.max_iterations {
        let sigma_tau = TauFunction { grid: grid.clone(), data: kernel.evaluate_points(&g_tau, &all) };
        let sigma_omega = tau_to_omega(&sigma_tau)?;
        let search = chemical_potential_search(&fock, s, &sigma_omega, system.n_electrons, &MuSearchOptions::default())?;
        mu = search.mu;
        g_omega = search.g;
        let gamma_new = search.gamma;
        let fock_new = t + mean_field(&dense, n, &gamma_new);
        let e_1b = energy_1b(&gamma_new, t, &fock_new)?;
        let e_2b = energy_2b_gm(&g_omega, &sigma_omega)?;
        let e_total = e_1b + e_2b + system.e_nuc;
        trace.push(IterationRecord { iteration: it, mu, e_1b, e_2b, e_total });
        log::debug!("GF2 iteration {it}: E = {e_total:.10}, mu = {mu:.6}");

        let d_gamma = (&gamma_new - &gamma).amax();
        let d_e = (e_total - e_prev).abs();
        calm = if d_e < options.energy_tolerance { calm + 1 } else { 0 };
        let done = calm >= 2 || (calm >= 1 && d_gamma < 1e-8);
        if done {
            g_tau = omega_to_tau(&g_omega)?;
            return Ok(GF2State {
                fock: OneBodyTensor::from_matrix(fock_new)?,
                gamma: OneBodyTensor::from_matrix(gamma_new)?,
                mu,
                g_tau,
                g_omega,
                sigma_tau,
                sigma_omega,
                e_1b,
                e_2b,
                e_nuc: system.e_nuc,
                e_total,
                e_hf: hf.energy,
                e_corr: e_total - hf.energy,
                iterations: it,
                converged: true,
                trace,
            });
        }
        e_prev = e_total;
        gamma = &gamma_new * options.damping + &gamma * (1.0 - options.damping);
        fock = t + mean_field(&dense, n, &gamma);
        g_tau = omega_to_tau(&g_omega)?;
    }
    Err(Error::NotConverged { what: "GF2", iterations: options.max_iterations })
}
