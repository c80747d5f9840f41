//! Matrix-free action of a one- plus two-body Hamiltonian on a sector.

use nalgebra::DMatrix;
use std::collections::HashMap;

use super::space::{DeterminantSpace, Single};
use crate::error::{Error, Result};
use crate::hamiltonian::{BasisFrame, MolecularSystem, TwoBodyTensor};
use crate::linalg::gemm;

/// `H = e_core + sum h_pq E_pq + 1/2 sum (pq|rs) (E_pq E_rs - delta_qr E_ps)`,
/// evaluated as `sum k_pq E_pq + 1/2 sum (pq|rs) E_pq E_rs` with
/// `k_pq = h_pq - 1/2 sum_r (pr|rq)`.
#[derive(Debug, Clone)]
pub struct FciHamiltonian {
    pub n: usize,
    pub e_core: f64,
    pub h: DMatrix<f64>,
    k: Vec<f64>,
    /// Compound indices `p*n+q` that carry two-body terms.
    pairs: Vec<usize>,
    pair_pos: Vec<Option<usize>>,
    /// `1/2 (pq|rs)` on `pairs x pairs`, row-major.
    m: Vec<f64>,
}

impl FciHamiltonian {
    pub fn new(h: &DMatrix<f64>, v: &TwoBodyTensor, e_core: f64) -> Result<Self> {
        let n = h.nrows();
        if v.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.n() });
        }
        let mut k = vec![0.0; n * n];
        for p in 0..n {
            for q in 0..n {
                k[p * n + q] = h[(p, q)] - 0.5 * (0..n).map(|r| v.get(p, r, r, q)).sum::<f64>();
            }
        }
        let pairs: Vec<usize> =
            (0..n * n).filter(|&pq| (0..n * n).any(|rs| v.get(pq / n, pq % n, rs / n, rs % n) != 0.0)).collect();
        let mut pair_pos = vec![None; n * n];
        for (i, &pq) in pairs.iter().enumerate() {
            pair_pos[pq] = Some(i);
        }
        let np = pairs.len();
        let mut m = vec![0.0; np * np];
        for (a, &pq) in pairs.iter().enumerate() {
            for (b, &rs) in pairs.iter().enumerate() {
                m[a * np + b] = 0.5 * v.get(pq / n, pq % n, rs / n, rs % n);
            }
        }
        Ok(FciHamiltonian { n, e_core, h: h.clone(), k, pairs, pair_pos, m })
    }

    /// The system's Hamiltonian; requires an orthonormal orbital frame.
    pub fn from_system(system: &MolecularSystem) -> Result<Self> {
        if system.frame == BasisFrame::Ao {
            return Err(Error::Config("FCI needs orthonormal orbitals (SAO or MO frame)".into()));
        }
        Self::new(system.t.matrix(), &system.v, system.e_nuc)
    }

    pub fn two_body_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// `sigma = H c`.
    pub fn apply(&self, space: &DeterminantSpace, tables: &SectorTables, c: &[f64]) -> Result<Vec<f64>> {
        let dim = space.dim();
        if c.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
        }
        let nb = space.beta.len();
        let np = self.pairs.len();
        let mut sigma: Vec<f64> = c.iter().map(|x| self.e_core * x).collect();
        let mut g = vec![0.0; dim * np];
        if np > 0 {
            // D[K][rs] = <K| E_rs |c>
            let mut d = vec![0.0; dim * np];
            for (ia, sa) in tables.alpha.iter().enumerate() {
                for ib in 0..nb {
                    let x = c[ia * nb + ib];
                    if x == 0.0 {
                        continue;
                    }
                    for e in sa {
                        if let Some(pi) = self.pair_pos[e.pq as usize] {
                            d[(e.target as usize * nb + ib) * np + pi] += e.sign * x;
                        }
                    }
                    for e in &tables.beta[ib] {
                        if let Some(pi) = self.pair_pos[e.pq as usize] {
                            d[(ia * nb + e.target as usize) * np + pi] += e.sign * x;
                        }
                    }
                }
            }
            gemm(dim, np, np, &d, &self.m, &mut g, 0.0);
        }
        for (ka, sa) in tables.alpha.iter().enumerate() {
            for kb in 0..nb {
                let kk = ka * nb + kb;
                let ck = c[kk];
                let row = &g[kk * np..(kk + 1) * np];
                for e in sa {
                    let pq = e.pq as usize;
                    let mut val = self.k[pq] * ck;
                    if let Some(pi) = self.pair_pos[pq] {
                        val += row[pi];
                    }
                    sigma[e.target as usize * nb + kb] += e.sign * val;
                }
                for e in &tables.beta[kb] {
                    let pq = e.pq as usize;
                    let mut val = self.k[pq] * ck;
                    if let Some(pi) = self.pair_pos[pq] {
                        val += row[pi];
                    }
                    sigma[ka * nb + e.target as usize] += e.sign * val;
                }
            }
        }
        Ok(sigma)
    }

    /// Dense sector matrix, built column by column from sparse intermediates.
    pub fn dense_matrix(&self, space: &DeterminantSpace, tables: &SectorTables) -> DMatrix<f64> {
        let dim = space.dim();
        let nb = space.beta.len();
        let np = self.pairs.len();
        let mut out = DMatrix::zeros(dim, dim);
        let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
        for i in 0..dim {
            let (ia, ib) = (i / nb, i % nb);
            rows.clear();
            for e in &tables.alpha[ia] {
                if let Some(pi) = self.pair_pos[e.pq as usize] {
                    rows.entry(e.target as usize * nb + ib).or_insert_with(|| vec![0.0; np])[pi] += e.sign;
                }
            }
            for e in &tables.beta[ib] {
                if let Some(pi) = self.pair_pos[e.pq as usize] {
                    rows.entry(ia * nb + e.target as usize).or_insert_with(|| vec![0.0; np])[pi] += e.sign;
                }
            }
            let mut col = vec![0.0; dim];
            col[i] += self.e_core;
            let mut push = |kk: usize, weights: &dyn Fn(usize) -> f64| {
                let (ka, kb) = (kk / nb, kk % nb);
                for e in &tables.alpha[ka] {
                    let w = weights(e.pq as usize);
                    if w != 0.0 {
                        col[e.target as usize * nb + kb] += e.sign * w;
                    }
                }
                for e in &tables.beta[kb] {
                    let w = weights(e.pq as usize);
                    if w != 0.0 {
                        col[ka * nb + e.target as usize] += e.sign * w;
                    }
                }
            };
            push(i, &|pq| self.k[pq]);
            for (&kk, drow) in &rows {
                let mut grow = vec![0.0; np];
                for a in 0..np {
                    grow[a] = (0..np).map(|b| self.m[a * np + b] * drow[b]).sum();
                }
                push(kk, &|pq| self.pair_pos[pq].map_or(0.0, |pi| grow[pi]));
            }
            out.set_column(i, &nalgebra::DVector::from_vec(col));
        }
        (&out + out.transpose()) * 0.5
    }
}

/// Single-excitation tables of both spin strings of a sector.
#[derive(Debug, Clone)]
pub struct SectorTables {
    pub alpha: Vec<Vec<Single>>,
    pub beta: Vec<Vec<Single>>,
}

impl SectorTables {
    pub fn new(space: &DeterminantSpace) -> Self {
        SectorTables { alpha: space.alpha.singles(), beta: space.beta.singles() }
    }
}

/// A sector with its tables, ready for repeated application of `H`.
#[derive(Debug, Clone)]
pub struct Sector {
    pub space: DeterminantSpace,
    pub tables: SectorTables,
}

impl Sector {
    pub fn new(n_orb: usize, n_alpha: usize, n_beta: usize) -> Result<Self> {
        let space = DeterminantSpace::new(n_orb, n_alpha, n_beta)?;
        let tables = SectorTables::new(&space);
        Ok(Sector { space, tables })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn apply(&self, h: &FciHamiltonian, c: &[f64]) -> Result<Vec<f64>> {
        h.apply(&self.space, &self.tables, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_h(n: usize, seed: u64) -> FciHamiltonian {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = (&m + m.transpose()) * 0.5;
        let mut v = TwoBodyTensor::zeros(n);
        for (i, j, k, l) in v.unique_indices() {
            v.set(i, j, k, l, rng.random_range(-0.5..0.5)).unwrap();
        }
        FciHamiltonian::new(&h, &v, 0.3).unwrap()
    }

    /// Spin-orbital `<pq||rs>` with spin orbitals `2p + s` unpacked to
    /// spatial index and spin.
    fn antisym(h: &FciHamiltonian, v: &TwoBodyTensor, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let sp = |x: usize| (x / 2, x % 2);
        let (p, ps) = sp(p);
        let (q, qs) = sp(q);
        let (r, rs) = sp(r);
        let (s, ss) = sp(s);
        let _ = h;
        let direct = if ps == rs && qs == ss { v.get(p, r, q, s) } else { 0.0 };
        let exch = if ps == ss && qs == rs { v.get(p, s, q, r) } else { 0.0 };
        direct - exch
    }

    /// Slater-Condon matrix element between spin-orbital occupation lists
    /// (ascending, alpha orbitals before beta in operator order).
    fn slater_condon(h: &FciHamiltonian, v: &TwoBodyTensor, bra: &[usize], ket: &[usize]) -> f64 {
        let one = |a: usize, b: usize| if a % 2 == b % 2 { h.h[(a / 2, b / 2)] } else { 0.0 };
        let holes: Vec<usize> = ket.iter().copied().filter(|x| !bra.contains(x)).collect();
        let parts: Vec<usize> = bra.iter().copied().filter(|x| !ket.contains(x)).collect();
        // Sign: bring the differing orbitals to matching positions.
        let perm_sign = |list: &[usize], moved: &[usize]| -> f64 {
            let mut sgn = 1.0;
            let mut l = list.to_vec();
            for (target, &m) in moved.iter().enumerate() {
                let pos = l.iter().position(|&x| x == m).unwrap();
                if (pos - target) % 2 == 1 {
                    sgn = -sgn;
                }
                l.remove(pos);
                l.insert(target, m);
            }
            sgn
        };
        match holes.len() {
            0 => {
                let mut e = h.e_core;
                for &i in ket {
                    e += one(i, i);
                }
                for &i in ket {
                    for &j in ket {
                        e += 0.5 * antisym(h, v, i, j, i, j);
                    }
                }
                e
            }
            1 => {
                let sign = perm_sign(ket, &holes) * perm_sign(bra, &parts);
                let (i, a) = (holes[0], parts[0]);
                let mut e = one(a, i);
                for &j in ket {
                    if j != i {
                        e += antisym(h, v, a, j, i, j);
                    }
                }
                sign * e
            }
            2 => {
                let sign = perm_sign(ket, &holes) * perm_sign(bra, &parts);
                sign * antisym(h, v, parts[0], parts[1], holes[0], holes[1])
            }
            _ => 0.0,
        }
    }

    /// Spin-orbital list in operator order: alpha orbitals (2p) then beta (2p+1).
    fn occupation(n: usize, a: u64, b: u64) -> Vec<usize> {
        let mut out: Vec<usize> = (0..n).filter(|p| a & (1 << p) != 0).map(|p| 2 * p).collect();
        out.extend((0..n).filter(|p| b & (1 << p) != 0).map(|p| 2 * p + 1));
        out
    }

    #[test]
    fn matches_slater_condon_rules() {
        let n = 3;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let hm = (&m + m.transpose()) * 0.5;
        let mut v = TwoBodyTensor::zeros(n);
        for (i, j, k, l) in v.unique_indices() {
            v.set(i, j, k, l, rng.random_range(-0.5..0.5)).unwrap();
        }
        let h = FciHamiltonian::new(&hm, &v, 0.7).unwrap();
        for (na, nb) in [(1, 1), (2, 1), (2, 2), (1, 2), (3, 1)] {
            let sec = Sector::new(n, na, nb).unwrap();
            let dim = sec.dim();
            let dense = h.dense_matrix(&sec.space, &sec.tables);
            for i in 0..dim {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                let col = sec.apply(&h, &e).unwrap();
                let (ia, ib) = sec.space.determinant(i);
                let ket = occupation(n, ia, ib);
                for j in 0..dim {
                    let (ja, jb) = sec.space.determinant(j);
                    let bra = occupation(n, ja, jb);
                    let sc = slater_condon(&h, &v, &bra, &ket);
                    assert!((col[j] - sc).abs() < 1e-12, "({na},{nb}) {i},{j}: {} vs {sc}", col[j]);
                    assert!((dense[(j, i)] - sc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hermitian_action() {
        let h = random_h(4, 5);
        let sec = Sector::new(4, 2, 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let x: Vec<f64> = (0..sec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..sec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hx = sec.apply(&h, &x).unwrap();
        let hy = sec.apply(&h, &y).unwrap();
        let a: f64 = x.iter().zip(&hy).map(|(a, b)| a * b).sum();
        let b: f64 = hx.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn number_operator_eigenvalues() {
        let n = 4;
        let h = FciHamiltonian::new(&DMatrix::identity(n, n), &TwoBodyTensor::zeros(n), 0.0).unwrap();
        let sec = Sector::new(n, 2, 1).unwrap();
        for i in 0..sec.dim() {
            let mut e = vec![0.0; sec.dim()];
            e[i] = 1.0;
            let out = sec.apply(&h, &e).unwrap();
            for (j, x) in out.iter().enumerate() {
                assert_eq!(*x, if i == j { 3.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn dimension_checked() {
        let h = random_h(3, 1);
        let sec = Sector::new(3, 1, 1).unwrap();
        assert!(sec.apply(&h, &[1.0]).is_err());
    }
}
