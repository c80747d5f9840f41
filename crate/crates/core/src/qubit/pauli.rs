//! Pauli strings and sums of them.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Terms with |c| below this are dropped after combination.
pub const PRUNE_TOLERANCE: f64 = 1e-12;
/// Widest register the bitmask representation handles.
pub const MAX_QUBITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A real multiple of a tensor product of Pauli letters; qubit 0 first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PauliString {
    pub n_qubits: usize,
    pub letters: Vec<Pauli>,
    pub coefficient: f64,
}

impl PauliString {
    pub fn identity(n_qubits: usize, coefficient: f64) -> Self {
        PauliString { n_qubits, letters: vec![Pauli::I; n_qubits], coefficient }
    }

    /// Parses e.g. `"XIZY"`.
    pub fn parse(letters: &str, coefficient: f64) -> Option<Self> {
        let letters: Option<Vec<Pauli>> = letters
            .chars()
            .map(|c| match c {
                'I' => Some(Pauli::I),
                'X' => Some(Pauli::X),
                'Y' => Some(Pauli::Y),
                'Z' => Some(Pauli::Z),
                _ => None,
            })
            .collect();
        letters.map(|l| PauliString { n_qubits: l.len(), letters: l, coefficient })
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn count(&self, letter: Pauli) -> usize {
        self.letters.iter().filter(|&&p| p == letter).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    pub fn label(&self) -> String {
        self.letters.iter().map(|p| p.symbol()).collect()
    }

    fn masks(&self) -> (u64, u64) {
        let mut x = 0u64;
        let mut z = 0u64;
        for (q, p) in self.letters.iter().enumerate() {
            if matches!(p, Pauli::X | Pauli::Y) {
                x |= 1 << q;
            }
            if matches!(p, Pauli::Y | Pauli::Z) {
                z |= 1 << q;
            }
        }
        (x, z)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.15e} {}", self.coefficient, self.label())
    }
}

/// `i^k`.
fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Product of the strings `(x1, z1)` and `(x2, z2)`, each read as
/// `i^{|x&z|} X^x Z^z`. Returns the phase and the resulting masks.
pub(crate) fn multiply(x1: u64, z1: u64, x2: u64, z2: u64) -> (Complex64, u64, u64) {
    let x = x1 ^ x2;
    let z = z1 ^ z2;
    let k = (x1 & z1).count_ones() + (x2 & z2).count_ones() + 2 * (z1 & x2).count_ones() + 4 * 64
        - (x & z).count_ones();
    (i_pow(k), x, z)
}

/// Complex-coefficient sum of Pauli strings keyed by `(x, z)` masks.
#[derive(Debug, Clone, Default)]
pub struct QubitOperator {
    pub n_qubits: usize,
    terms: HashMap<(u64, u64), Complex64>,
}

impl QubitOperator {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(Error::DimensionOverBudget(n_qubits, "qubit register"));
        }
        Ok(QubitOperator { n_qubits, terms: HashMap::new() })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub(crate) fn add(&mut self, x: u64, z: u64, c: Complex64) {
        *self.terms.entry((x, z)).or_default() += c;
    }

    pub fn add_scalar(&mut self, c: f64) {
        self.add(0, 0, Complex64::new(c, 0.0));
    }

    pub fn add_operator(&mut self, other: &QubitOperator, scale: Complex64) {
        for (&(x, z), &c) in &other.terms {
            self.add(x, z, c * scale);
        }
    }

    pub fn product(&self, other: &QubitOperator) -> QubitOperator {
        let mut out = QubitOperator { n_qubits: self.n_qubits.max(other.n_qubits), terms: HashMap::new() };
        for (&(x1, z1), &c1) in &self.terms {
            for (&(x2, z2), &c2) in &other.terms {
                let (phase, x, z) = multiply(x1, z1, x2, z2);
                out.add(x, z, phase * c1 * c2);
            }
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn terms(&self) -> impl Iterator<Item = (&(u64, u64), &Complex64)> {
        self.terms.iter()
    }

    /// Prunes, checks hermiticity and returns strings in canonical order.
    pub fn into_strings(self) -> Result<Vec<PauliString>> {
        let mut out = Vec::with_capacity(self.terms.len());
        for ((x, z), c) in self.terms {
            if c.norm() < PRUNE_TOLERANCE {
                continue;
            }
            if c.im.abs() > 1e-10 * c.re.abs().max(1.0) {
                return Err(Error::NotSymmetric(c.im.abs()));
            }
            if !c.re.is_finite() {
                return Err(Error::NonFinite("Pauli coefficient"));
            }
            let letters = (0..self.n_qubits).map(|q| Pauli::from_bits(x >> q & 1 == 1, z >> q & 1 == 1)).collect();
            out.push(PauliString { n_qubits: self.n_qubits, letters, coefficient: c.re });
        }
        out.sort_by(|a, b| a.letters.cmp(&b.letters));
        Ok(out)
    }
}

fn dense_budget(n: usize) -> Result<DMatrix<Complex64>> {
    if n > 14 {
        return Err(Error::DimensionOverBudget(1 << n, "dense Pauli matrix"));
    }
    Ok(DMatrix::zeros(1 << n, 1 << n))
}

fn add_dense(m: &mut DMatrix<Complex64>, x: u64, z: u64, c: Complex64) {
    let base = i_pow((x & z).count_ones()) * c;
    for b in 0..m.nrows() as u64 {
        let sign = if (z & b).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        m[((b ^ x) as usize, b as usize)] += base * sign;
    }
}

impl QubitOperator {
    /// Dense matrix on the full register (small registers only).
    pub fn dense(&self) -> Result<DMatrix<Complex64>> {
        let mut m = dense_budget(self.n_qubits)?;
        for (&(x, z), &c) in &self.terms {
            add_dense(&mut m, x, z, c);
        }
        Ok(m)
    }
}

/// Dense matrix of `sum_k c_k P_k`; basis state `b` has qubit `q` in bit `q`.
pub fn dense_matrix(strings: &[PauliString]) -> Result<DMatrix<Complex64>> {
    let n = strings.first().map_or(0, |s| s.n_qubits);
    let mut m = dense_budget(n)?;
    for s in strings {
        if s.n_qubits != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.n_qubits });
        }
        let (x, z) = s.masks();
        add_dense(&mut m, x, z, Complex64::new(s.coefficient, 0.0));
    }
    Ok(m)
}

/// Text export, one `coefficient letters` line per string.
pub fn write_terms<W: std::io::Write>(mut w: W, strings: &[PauliString]) -> std::io::Result<()> {
    for s in strings {
        writeln!(w, "{s}")?;
    }
    Ok(())
}
