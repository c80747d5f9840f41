//! Fermion-to-qubit encodings of second-quantized Hamiltonians.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::pauli::{PauliString, QubitOperator};
use crate::error::{Error, Result};
use crate::hamiltonian::{BasisFrame, MolecularSystem, TwoBodyTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Encoding {
    #[serde(rename = "JW")]
    JordanWigner,
    #[serde(rename = "BK")]
    BravyiKitaev,
}

impl Encoding {
    pub const ALL: [Encoding; 2] = [Encoding::JordanWigner, Encoding::BravyiKitaev];
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::JordanWigner => "JW",
            Encoding::BravyiKitaev => "BK",
        })
    }
}

impl FromStr for Encoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jw" | "jordan-wigner" => Ok(Encoding::JordanWigner),
            "bk" | "bravyi-kitaev" => Ok(Encoding::BravyiKitaev),
            _ => Err(Error::Config(format!("unknown encoding '{s}'"))),
        }
    }
}

/// Interleaved ordering: alpha of orbital p on qubit 2p, beta on 2p + 1.
pub fn spin_orbital(p: usize, beta: bool) -> usize {
    2 * p + beta as usize
}

fn lowbit(i: usize) -> usize {
    i & i.wrapping_neg()
}

/// Bravyi-Kitaev index sets for mode `j` of `n`. Qubit `i` stores the
/// parity of modes `i + 1 - lowbit(i + 1) ..= i` (a Fenwick tree, i.e. the
/// binary-tree matrix of the next power of two truncated to `n`).
pub(crate) struct BkSets {
    pub update: u64,
    pub parity: u64,
    pub flip: u64,
}

pub(crate) fn bk_sets(j: usize, n: usize) -> BkSets {
    let mut update = 0u64;
    let mut i = j + 1 + lowbit(j + 1);
    while i <= n {
        update |= 1 << (i - 1);
        i += lowbit(i);
    }
    let mut parity = 0u64;
    let mut i = j;
    while i > 0 {
        parity |= 1 << (i - 1);
        i -= lowbit(i);
    }
    let start = j + 1 - lowbit(j + 1);
    let mut flip = 0u64;
    let mut i = j;
    while i > start {
        flip |= 1 << (i - 1);
        i -= lowbit(i);
    }
    BkSets { update, parity, flip }
}

/// `a_j^dagger` (or `a_j`) as `1/2 X_U (X_j Z_P -/+ i Y_j Z_R)`.
pub fn ladder(encoding: Encoding, j: usize, n_qubits: usize, dagger: bool) -> Result<QubitOperator> {
    let mut op = QubitOperator::new(n_qubits)?;
    if j >= n_qubits {
        return Err(Error::IndexOutOfRange(j, 0, 0, 0, n_qubits));
    }
    let (update, parity, remainder) = match encoding {
        Encoding::JordanWigner => (0, (1u64 << j) - 1, (1u64 << j) - 1),
        Encoding::BravyiKitaev => {
            let s = bk_sets(j, n_qubits);
            (s.update, s.parity, s.parity & !s.flip)
        }
    };
    let bit = 1u64 << j;
    let sign = if dagger { -0.5 } else { 0.5 };
    op.add(update | bit, parity, Complex64::new(0.5, 0.0));
    op.add(update | bit, remainder | bit, Complex64::new(0.0, sign));
    Ok(op)
}

/// Product of ladder operators, left to right; `(mode, dagger)`.
pub fn ladder_product(encoding: Encoding, n_qubits: usize, ops: &[(usize, bool)]) -> Result<QubitOperator> {
    let mut acc = QubitOperator::new(n_qubits)?;
    acc.add_scalar(1.0);
    for &(j, dagger) in ops {
        acc = acc.product(&ladder(encoding, j, n_qubits, dagger)?);
    }
    Ok(acc)
}

/// `e_core + sum h_pq a+_p a_q + 1/2 sum (pq|rs) a+_p a+_r a_s a_q` over
/// spin orbitals, in an orthonormal spatial basis.
pub fn encode_hamiltonian(
    h: &DMatrix<f64>,
    v: &TwoBodyTensor,
    e_core: f64,
    encoding: Encoding,
) -> Result<Vec<PauliString>> {
    let n = h.nrows();
    if v.n() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.n() });
    }
    let nq = 2 * n;
    let mut lad = Vec::with_capacity(2 * nq);
    for j in 0..nq {
        lad.push([ladder(encoding, j, nq, false)?, ladder(encoding, j, nq, true)?]);
    }
    let mut op = QubitOperator::new(nq)?;
    op.add_scalar(e_core);
    for p in 0..n {
        for q in 0..n {
            let c = h[(p, q)];
            if c == 0.0 {
                continue;
            }
            for spin in [false, true] {
                let t = lad[spin_orbital(p, spin)][1].product(&lad[spin_orbital(q, spin)][0]);
                op.add_operator(&t, Complex64::new(c, 0.0));
            }
        }
    }
    // a+_i a_j products, reused across the two-body loop
    let mut pair = vec![None; nq * nq];
    for i in 0..nq {
        for j in 0..nq {
            pair[i * nq + j] = Some(lad[i][1].product(&lad[j][0]));
        }
    }
    let pair = |i: usize, j: usize| pair[i * nq + j].as_ref().expect("filled above");
    let dense = v.to_dense();
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    let c = dense[((p * n + q) * n + r) * n + s];
                    if c == 0.0 {
                        continue;
                    }
                    for s1 in [false, true] {
                        for s2 in [false, true] {
                            let (i, j) = (spin_orbital(p, s1), spin_orbital(q, s1));
                            let (k, l) = (spin_orbital(r, s2), spin_orbital(s, s2));
                            if i == k || j == l {
                                continue;
                            }
                            // a+_i a+_k a_l a_j = a+_i a_j a+_k a_l - delta_jk a+_i a_l
                            let t = pair(i, j).product(pair(k, l));
                            op.add_operator(&t, Complex64::new(0.5 * c, 0.0));
                            if j == k {
                                op.add_operator(pair(i, l), Complex64::new(-0.5 * c, 0.0));
                            }
                        }
                    }
                }
            }
        }
    }
    op.into_strings()
}

fn system_terms(system: &MolecularSystem, encoding: Encoding) -> Result<Vec<PauliString>> {
    if system.frame == BasisFrame::Ao {
        return Err(Error::Config("qubit encoding needs an orthonormal basis (SAO or MO)".into()));
    }
    encode_hamiltonian(system.t.matrix(), &system.v, system.e_nuc, encoding)
}

pub fn jordan_wigner(system: &MolecularSystem) -> Result<Vec<PauliString>> {
    system_terms(system, Encoding::JordanWigner)
}

pub fn bravyi_kitaev(system: &MolecularSystem) -> Result<Vec<PauliString>> {
    system_terms(system, Encoding::BravyiKitaev)
}

/// Total number operator.
pub fn number_operator(n_qubits: usize, encoding: Encoding) -> Result<Vec<PauliString>> {
    let mut op = QubitOperator::new(n_qubits)?;
    for j in 0..n_qubits {
        op.add_operator(&ladder_product(encoding, n_qubits, &[(j, true), (j, false)])?, Complex64::new(1.0, 0.0));
    }
    op.into_strings()
}

#[cfg(test)]
mod tests {
    use super::super::pauli::dense_matrix;
    use super::*;
    use crate::fci::{DeterminantSpace, FciHamiltonian, SectorTables};
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(ops: &[PauliString]) -> Vec<(String, f64)> {
        ops.iter().map(|s| (s.label(), s.coefficient)).collect()
    }

    fn as_strings(op: QubitOperator) -> Vec<PauliString> {
        op.into_strings().unwrap()
    }

    #[test]
    fn number_and_hopping_identities() {
        for enc in Encoding::ALL {
            let n0 = as_strings(ladder_product(enc, 1, &[(0, true), (0, false)]).unwrap());
            assert_eq!(labels(&n0), vec![("I".to_string(), 0.5), ("Z".to_string(), -0.5)]);
        }
        let mut hop = ladder_product(Encoding::JordanWigner, 2, &[(0, true), (1, false)]).unwrap();
        hop.add_operator(
            &ladder_product(Encoding::JordanWigner, 2, &[(1, true), (0, false)]).unwrap(),
            Complex64::new(1.0, 0.0),
        );
        assert_eq!(labels(&as_strings(hop)), vec![("XX".to_string(), 0.5), ("YY".to_string(), 0.5)]);
    }

    #[test]
    fn bk_sets_for_eight_modes() {
        // reference sets for n = 8 from the binary-tree construction
        let want_update = [0b1000_1010u64, 0b1000_1000, 0b1000_1000, 0b1000_0000, 0b1010_0000, 0b1000_0000, 0b1000_0000, 0];
        let want_parity = [0u64, 0b1, 0b10, 0b110, 0b1000, 0b1_1000, 0b10_1000, 0b110_1000];
        let want_flip = [0u64, 0b1, 0, 0b110, 0, 0b1_0000, 0, 0b110_1000];
        for j in 0..8 {
            let s = bk_sets(j, 8);
            assert_eq!(s.update, want_update[j], "update {j}");
            assert_eq!(s.parity, want_parity[j], "parity {j}");
            assert_eq!(s.flip, want_flip[j], "flip {j}");
        }
    }

    /// Canonical anticommutation relations on the full Fock space.
    #[test]
    fn ladder_operators_anticommute() {
        for enc in Encoding::ALL {
            for nq in [3usize, 5, 6] {
                let mats: Vec<[DMatrix<Complex64>; 2]> = (0..nq)
                    .map(|j| [false, true].map(|d| ladder(enc, j, nq, d).unwrap().dense().unwrap()))
                    .collect();
                let id = DMatrix::<Complex64>::identity(1 << nq, 1 << nq);
                for i in 0..nq {
                    for j in 0..nq {
                        let (ai, aj_dag) = (&mats[i][0], &mats[j][1]);
                        let acomm = ai * aj_dag + aj_dag * ai;
                        let want = if i == j { id.clone() } else { id.clone() * Complex64::new(0.0, 0.0) };
                        assert!((acomm - want).camax() < 1e-12, "{enc} {i} {j}");
                        let aa = ai * &mats[j][0] + &mats[j][0] * ai;
                        assert!(aa.camax() < 1e-12);
                    }
                }
            }
        }
    }

    fn random_hamiltonian(n: usize, seed: u64) -> (DMatrix<f64>, TwoBodyTensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = (&h + h.transpose()) * 0.5;
        let mut v = TwoBodyTensor::zeros(n);
        for (i, j, k, l) in v.unique_indices() {
            v.set(i, j, k, l, rng.random_range(-0.5..0.5)).unwrap();
        }
        (h, v)
    }

    fn sorted_spectrum(strings: &[PauliString]) -> Vec<f64> {
        let m = dense_matrix(strings).unwrap();
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    fn fci_spectrum(h: &DMatrix<f64>, v: &TwoBodyTensor, e_core: f64) -> Vec<f64> {
        let n = h.nrows();
        let ham = FciHamiltonian::new(h, v, e_core).unwrap();
        let mut e = Vec::new();
        for na in 0..=n {
            for nb in 0..=n {
                let space = DeterminantSpace::new(n, na, nb).unwrap();
                let tables = SectorTables::new(&space);
                let m = ham.dense_matrix(&space, &tables);
                e.extend(SymmetricEigen::new(m).eigenvalues.iter().copied());
            }
        }
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn spectra_match_fci_on_four_spin_orbitals() {
        let (h, v) = random_hamiltonian(2, 7);
        let reference = fci_spectrum(&h, &v, 0.3);
        for enc in Encoding::ALL {
            let e = sorted_spectrum(&encode_hamiltonian(&h, &v, 0.3, enc).unwrap());
            assert_eq!(e.len(), 16);
            for (a, b) in e.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-10, "{enc}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn spectra_match_on_eight_spin_orbitals() {
        let (h, v) = random_hamiltonian(4, 11);
        let reference = fci_spectrum(&h, &v, 0.0);
        let jw = encode_hamiltonian(&h, &v, 0.0, Encoding::JordanWigner).unwrap();
        let bk = encode_hamiltonian(&h, &v, 0.0, Encoding::BravyiKitaev).unwrap();
        for e in [sorted_spectrum(&jw), sorted_spectrum(&bk)] {
            let err = e.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{err}");
        }
    }

    #[test]
    fn hamiltonian_conserves_particle_number() {
        let (h, v) = random_hamiltonian(3, 3);
        for enc in Encoding::ALL {
            let hm = dense_matrix(&encode_hamiltonian(&h, &v, 0.0, enc).unwrap()).unwrap();
            let nm = dense_matrix(&number_operator(6, enc).unwrap()).unwrap();
            assert!((&hm * &nm - &nm * &hm).camax() < 1e-10);
        }
    }

    #[test]
    fn ao_frame_is_rejected() {
        let (h, v) = random_hamiltonian(2, 1);
        let sys = MolecularSystem {
            atoms: vec![],
            n_electrons: 2,
            t: crate::hamiltonian::OneBodyTensor::from_matrix(h).unwrap(),
            v,
            s: crate::hamiltonian::OneBodyTensor::identity(2),
            e_nuc: 0.0,
            frame: BasisFrame::Ao,
        };
        assert!(jordan_wigner(&sys).is_err());
    }
}
