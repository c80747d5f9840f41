//! Second-quantized Hamiltonian data: one- and two-body tensors, the
//! molecular system container and orbital-frame transformations.
//!
//! Two-body integrals are kept in chemists' notation, `(ij|kl) = v[i,j,k,l]`,
//! and stored once per 8-fold permutation orbit of a real orbital basis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real symmetric `n x n` matrix (one-body integrals, overlap, Fock, density).
#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyTensor(DMatrix<f64>);

impl OneBodyTensor {
    pub fn zeros(n: usize) -> Self {
        OneBodyTensor(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        OneBodyTensor(DMatrix::identity(n, n))
    }

    /// Validates symmetry (1e-12, scaled by the largest element) and finiteness,
    /// then stores the exactly symmetrized matrix.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("one-body tensor"));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(OneBodyTensor((&m + m.transpose()) * 0.5))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// Packed pair index for `i >= j`.
#[inline]
fn pair(i: usize, j: usize) -> usize {
    if i >= j {
        i * (i + 1) / 2 + j
    } else {
        j * (j + 1) / 2 + i
    }
}

/// Two-electron integrals `(ij|kl)` with 8-fold permutational symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBodyTensor {
    n: usize,
    values: Vec<f64>,
}

impl TwoBodyTensor {
    pub fn zeros(n: usize) -> Self {
        let np = n * (n + 1) / 2;
        TwoBodyTensor { n, values: vec![0.0; np * (np + 1) / 2] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of symmetry-unique elements.
    pub fn unique_len(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Canonical packed key shared by all 8 permutations of `(i,j,k,l)`.
    pub fn canonical_key(&self, i: usize, j: usize, k: usize, l: usize) -> Result<usize> {
        let n = self.n;
        if i >= n || j >= n || k >= n || l >= n {
            return Err(Error::IndexOutOfRange(i, j, k, l, n));
        }
        Ok(Self::key_unchecked(i, j, k, l))
    }

    #[inline]
    fn key_unchecked(i: usize, j: usize, k: usize, l: usize) -> usize {
        pair(pair(i, j), pair(k, l))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.values[Self::key_unchecked(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, value: f64) -> Result<()> {
        let key = self.canonical_key(i, j, k, l)?;
        self.values[key] = value;
        Ok(())
    }

    /// Representative index tuple `(i >= j, k >= l, ij >= kl)` for every packed key.
    pub fn unique_indices(&self) -> Vec<(usize, usize, usize, usize)> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.values.len());
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
        for (a, &(i, j)) in pairs.iter().enumerate() {
            for &(k, l) in pairs.iter().take(a + 1) {
                out.push((i, j, k, l));
            }
        }
        out
    }

    /// Iterator over non-zero unique elements.
    pub fn nonzeros(&self, tol: f64) -> impl Iterator<Item = ((usize, usize, usize, usize), f64)> + '_ {
        self.unique_indices()
            .into_iter()
            .map(|(i, j, k, l)| ((i, j, k, l), self.get(i, j, k, l)))
            .filter(move |(_, v)| v.abs() > tol)
    }

    /// Dense row-major `n^4` copy, index `((i*n + j)*n + k)*n + l`.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        d[((i * n + j) * n + k) * n + l] = self.get(i, j, k, l);
                    }
                }
            }
        }
        d
    }

    /// Packs a dense tensor, averaging over each symmetry orbit.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n * n * n {
            return Err(Error::DimensionMismatch { expected: n * n * n * n, got: dense.len() });
        }
        let mut t = TwoBodyTensor::zeros(n);
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        for (key, (i, j, k, l)) in t.unique_indices().into_iter().enumerate() {
            let perms = [
                idx(i, j, k, l),
                idx(j, i, k, l),
                idx(i, j, l, k),
                idx(j, i, l, k),
                idx(k, l, i, j),
                idx(l, k, i, j),
                idx(k, l, j, i),
                idx(l, k, j, i),
            ];
            let s: f64 = perms.iter().map(|&p| dense[p]).sum();
            t.values[key] = s / 8.0;
        }
        if t.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("two-body tensor"));
        }
        Ok(t)
    }

    /// `v'_pqrs = sum C_ip C_jq C_kr C_ls v_ijkl` by four quarter transforms.
    pub fn rotate(&self, c: &DMatrix<f64>) -> Result<TwoBodyTensor> {
        let n = self.n;
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.nrows().max(c.ncols()) });
        }
        let n3 = n * n * n;
        let mut cur = self.to_dense();
        let mut next = vec![0.0; cur.len()];
        for _ in 0..4 {
            // next[(j,k,l), p] = sum_i cur[i, (j,k,l)] * C[i, p]; cycles the index order.
            unsafe {
                matrixmultiply::dgemm(
                    n3,
                    n,
                    n,
                    1.0,
                    cur.as_ptr(),
                    1,
                    n3 as isize,
                    c.as_ptr(),
                    1,
                    n as isize,
                    0.0,
                    next.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            std::mem::swap(&mut cur, &mut next);
        }
        TwoBodyTensor::from_dense(n, &cur)
    }
}

/// Frame in which the orbital-basis tensors are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisFrame {
    /// Raw atomic orbitals (non-orthogonal).
    Ao,
    /// Symmetrically (Löwdin) orthogonalized atomic orbitals.
    Sao,
    /// Canonical molecular orbitals.
    Mo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub charge: f64,
    /// Position in bohr.
    pub position: [f64; 3],
}

/// Full molecular Hamiltonian plus the metadata needed to interpret it.
#[derive(Debug, Clone)]
pub struct MolecularSystem {
    pub atoms: Vec<Atom>,
    pub n_electrons: usize,
    pub t: OneBodyTensor,
    pub v: TwoBodyTensor,
    pub s: OneBodyTensor,
    pub e_nuc: f64,
    pub frame: BasisFrame,
}

impl MolecularSystem {
    pub fn n_orbitals(&self) -> usize {
        self.t.n()
    }

    /// Checks the closed-shell and dimension invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.t.n();
        if self.v.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.v.n() });
        }
        if self.s.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.s.n() });
        }
        if self.n_electrons % 2 != 0 {
            return Err(Error::OpenShell(self.n_electrons));
        }
        Ok(())
    }

    /// Applies `X = S^{-1/2}` to all tensors, yielding the SAO frame.
    pub fn lowdin_transform(&self) -> Result<MolecularSystem> {
        let x = lowdin_matrix(self.s.matrix())?;
        let t = &x.transpose() * self.t.matrix() * &x;
        let s = &x.transpose() * self.s.matrix() * &x;
        Ok(MolecularSystem {
            atoms: self.atoms.clone(),
            n_electrons: self.n_electrons,
            t: OneBodyTensor::from_matrix(symmetrize(t))?,
            v: self.v.rotate(&x)?,
            s: OneBodyTensor::from_matrix(symmetrize(s))?,
            e_nuc: self.e_nuc,
            frame: BasisFrame::Sao,
        })
    }

    /// Rotates every tensor into a new orthonormal-or-not frame given by the
    /// columns of `c`.
    pub fn rotate(&self, c: &DMatrix<f64>, frame: BasisFrame) -> Result<MolecularSystem> {
        let t = c.transpose() * self.t.matrix() * c;
        let s = c.transpose() * self.s.matrix() * c;
        Ok(MolecularSystem {
            atoms: self.atoms.clone(),
            n_electrons: self.n_electrons,
            t: OneBodyTensor::from_matrix(symmetrize(t))?,
            v: self.v.rotate(c)?,
            s: OneBodyTensor::from_matrix(symmetrize(s))?,
            e_nuc: self.e_nuc,
            frame,
        })
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `S^{-1/2}` through the eigendecomposition `U diag(lambda^{-1/2}) U^T`.
pub fn lowdin_matrix(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(s.clone());
    let min = eig.eigenvalues.min();
    if min < 1e-10 {
        return Err(Error::DegenerateBasis(min));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(symmetrize(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}
