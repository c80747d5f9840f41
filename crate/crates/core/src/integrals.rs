//! Molecular integrals over contracted s-type Gaussians.
//!
//! Only s shells are supported, which covers hydrogen rings and chains in the
//! STO-6G and Dunning DZ bases. Anything with higher angular momentum comes in
//! through FCIDUMP files instead.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::hamiltonian::{Atom, BasisFrame, MolecularSystem, OneBodyTensor, TwoBodyTensor};

pub const ANGSTROM_TO_BOHR: f64 = 1.8897259886;

/// Hydrogen STO-6G (exponent, coefficient) pairs.
const STO6G_H: [(f64, f64); 6] = [
    (35.52322122, 0.00916359628),
    (6.513143725, 0.04936149294),
    (1.822142904, 0.16853830490),
    (0.625955266, 0.37056279970),
    (0.243076747, 0.41649152980),
    (0.100112428, 0.13033408410),
];

/// Hydrogen Dunning double-zeta, contracted (4s)/[2s].
const DZ_H_INNER: [(f64, f64); 3] = [(19.2406, 0.032828), (2.8992, 0.231208), (0.6534, 0.817238)];
const DZ_H_OUTER: [(f64, f64); 1] = [(0.1776, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisName {
    #[serde(rename = "sto-6g")]
    Sto6g,
    Dz,
}

impl std::str::FromStr for BasisName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sto-6g" | "sto6g" => Ok(BasisName::Sto6g),
            "dz" => Ok(BasisName::Dz),
            other => Err(Error::UnsupportedBasis(other.to_string())),
        }
    }
}

/// Contracted s Gaussian; coefficients multiply normalized primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractedSGaussian {
    pub center: [f64; 3],
    /// (exponent, coefficient including primitive normalization)
    pub primitives: Vec<(f64, f64)>,
}

impl ContractedSGaussian {
    /// Builds a normalized contraction from (exponent, coefficient) pairs
    /// given with respect to normalized primitives.
    pub fn new(center: [f64; 3], prims: &[(f64, f64)]) -> Result<Self> {
        if prims.is_empty() {
            return Err(Error::UnsupportedBasis("empty contraction".into()));
        }
        if prims.iter().any(|&(a, _)| !(a > 0.0)) {
            return Err(Error::UnsupportedBasis("non-positive exponent".into()));
        }
        let mut g = ContractedSGaussian {
            center,
            primitives: prims.iter().map(|&(a, c)| (a, c * (2.0 * a / PI).powf(0.75))).collect(),
        };
        let norm = overlap(&g, &g).sqrt();
        for p in g.primitives.iter_mut() {
            p.1 /= norm;
        }
        Ok(g)
    }
}

/// Shell description accepted by [`compute_integrals`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShellKind {
    S,
    P,
    D,
}

/// Basis functions placed on every atom, hydrogen only.
pub fn hydrogen_basis(positions: &[[f64; 3]], basis: BasisName) -> Result<Vec<ContractedSGaussian>> {
    let mut out = Vec::new();
    for &c in positions {
        match basis {
            BasisName::Sto6g => out.push(ContractedSGaussian::new(c, &STO6G_H)?),
            BasisName::Dz => {
                out.push(ContractedSGaussian::new(c, &DZ_H_INNER)?);
                out.push(ContractedSGaussian::new(c, &DZ_H_OUTER)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Ring,
    Chain,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    pub n_atoms: usize,
    /// Nearest-neighbour spacing in angstrom (ring/chain).
    #[serde(default)]
    pub spacing: f64,
    /// Explicit coordinates in angstrom.
    #[serde(default)]
    pub coordinates: Vec<[f64; 3]>,
}

impl GeometrySpec {
    pub fn ring(n_atoms: usize, spacing: f64) -> Self {
        GeometrySpec { kind: GeometryKind::Ring, n_atoms, spacing, coordinates: vec![] }
    }

    pub fn chain(n_atoms: usize, spacing: f64) -> Self {
        GeometrySpec { kind: GeometryKind::Chain, n_atoms, spacing, coordinates: vec![] }
    }
}

/// Nuclear positions in angstrom.
pub fn build_geometry(spec: &GeometrySpec) -> Result<Vec<[f64; 3]>> {
    match spec.kind {
        GeometryKind::Ring => {
            if spec.n_atoms < 3 {
                return Err(Error::InvalidGeometry(format!("ring needs >= 3 atoms, got {}", spec.n_atoms)));
            }
            if !(spec.spacing > 0.0) {
                return Err(Error::InvalidGeometry("spacing must be positive".into()));
            }
            let n = spec.n_atoms as f64;
            let radius = spec.spacing / (2.0 * (PI / n).sin());
            Ok((0..spec.n_atoms)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n;
                    [radius * a.cos(), radius * a.sin(), 0.0]
                })
                .collect())
        }
        GeometryKind::Chain => {
            if spec.n_atoms < 1 {
                return Err(Error::InvalidGeometry("chain needs >= 1 atom".into()));
            }
            if !(spec.spacing > 0.0) {
                return Err(Error::InvalidGeometry("spacing must be positive".into()));
            }
            Ok((0..spec.n_atoms).map(|k| [0.0, 0.0, spec.spacing * k as f64]).collect())
        }
        GeometryKind::Explicit => {
            if spec.coordinates.is_empty() || spec.coordinates.len() != spec.n_atoms {
                return Err(Error::InvalidGeometry(format!(
                    "expected {} explicit coordinates, got {}",
                    spec.n_atoms,
                    spec.coordinates.len()
                )));
            }
            Ok(spec.coordinates.clone())
        }
    }
}

/// `F0(x) = int_0^1 exp(-x u^2) du`.
pub fn boys_f0(x: f64) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(Error::NegativeBoysArgument(x));
    }
    Ok(boys_f0_unchecked(x))
}

#[inline]
fn boys_f0_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // sum_k (-x)^k / (k! (2k+1))
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum {
                break;
            }
        }
        sum
    } else {
        let r = x.sqrt();
        0.5 * (PI / x).sqrt() * libm::erf(r)
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn overlap(a: &ContractedSGaussian, b: &ContractedSGaussian) -> f64 {
    let r2 = dist2(&a.center, &b.center);
    let mut s = 0.0;
    for &(ea, ca) in &a.primitives {
        for &(eb, cb) in &b.primitives {
            let p = ea + eb;
            s += ca * cb * (PI / p).powf(1.5) * (-ea * eb / p * r2).exp();
        }
    }
    s
}

fn kinetic(a: &ContractedSGaussian, b: &ContractedSGaussian) -> f64 {
    let r2 = dist2(&a.center, &b.center);
    let mut t = 0.0;
    for &(ea, ca) in &a.primitives {
        for &(eb, cb) in &b.primitives {
            let p = ea + eb;
            let mu = ea * eb / p;
            let s = (PI / p).powf(1.5) * (-mu * r2).exp();
            t += ca * cb * mu * (3.0 - 2.0 * mu * r2) * s;
        }
    }
    t
}

fn gaussian_center(ea: f64, a: &[f64; 3], eb: f64, b: &[f64; 3]) -> [f64; 3] {
    let p = ea + eb;
    [
        (ea * a[0] + eb * b[0]) / p,
        (ea * a[1] + eb * b[1]) / p,
        (ea * a[2] + eb * b[2]) / p,
    ]
}

fn nuclear(a: &ContractedSGaussian, b: &ContractedSGaussian, atoms: &[Atom]) -> f64 {
    let r2 = dist2(&a.center, &b.center);
    let mut v = 0.0;
    for &(ea, ca) in &a.primitives {
        for &(eb, cb) in &b.primitives {
            let p = ea + eb;
            let pc = gaussian_center(ea, &a.center, eb, &b.center);
            let pre = ca * cb * 2.0 * PI / p * (-ea * eb / p * r2).exp();
            for atom in atoms {
                v -= atom.charge * pre * boys_f0_unchecked(p * dist2(&pc, &atom.position));
            }
        }
    }
    v
}

fn eri(a: &ContractedSGaussian, b: &ContractedSGaussian, c: &ContractedSGaussian, d: &ContractedSGaussian) -> f64 {
    let rab = dist2(&a.center, &b.center);
    let rcd = dist2(&c.center, &d.center);
    let mut v = 0.0;
    for &(ea, ca) in &a.primitives {
        for &(eb, cb) in &b.primitives {
            let p = ea + eb;
            let pc = gaussian_center(ea, &a.center, eb, &b.center);
            let kab = ca * cb * (-ea * eb / p * rab).exp();
            for &(ec, cc) in &c.primitives {
                for &(ed, cd) in &d.primitives {
                    let q = ec + ed;
                    let qc = gaussian_center(ec, &c.center, ed, &d.center);
                    let kcd = cc * cd * (-ec * ed / q * rcd).exp();
                    let pref = 2.0 * PI.powf(2.5) / (p * q * (p + q).sqrt());
                    v += kab * kcd * pref * boys_f0_unchecked(p * q / (p + q) * dist2(&pc, &qc));
                }
            }
        }
    }
    v
}

pub fn nuclear_repulsion(atoms: &[Atom]) -> f64 {
    let mut e = 0.0;
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[..i] {
            e += a.charge * b.charge / dist2(&a.position, &b.position).sqrt();
        }
    }
    e
}

/// Hydrogen atoms at `positions_angstrom` with the requested basis, AO frame.
pub fn compute_integrals(positions_angstrom: &[[f64; 3]], basis: BasisName) -> Result<MolecularSystem> {
    let atoms: Vec<Atom> = positions_angstrom
        .iter()
        .map(|p| Atom { charge: 1.0, position: p.map(|x| x * ANGSTROM_TO_BOHR) })
        .collect();
    let centers: Vec<[f64; 3]> = atoms.iter().map(|a| a.position).collect();
    let functions = hydrogen_basis(&centers, basis)?;
    integrals_for_functions(atoms, &functions, positions_angstrom.len())
}

/// Rejects anything but s shells before building integrals.
pub fn check_shells(shells: &[ShellKind]) -> Result<()> {
    match shells.iter().find(|s| **s != ShellKind::S) {
        Some(s) => Err(Error::UnsupportedBasis(format!("{s:?} shells are not supported by the s-type engine"))),
        None => Ok(()),
    }
}

pub fn integrals_for_functions(
    atoms: Vec<Atom>,
    functions: &[ContractedSGaussian],
    n_electrons: usize,
) -> Result<MolecularSystem> {
    let n = functions.len();
    let mut s = DMatrix::zeros(n, n);
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let sij = overlap(&functions[i], &functions[j]);
            let tij = kinetic(&functions[i], &functions[j]) + nuclear(&functions[i], &functions[j], &atoms);
            s[(i, j)] = sij;
            s[(j, i)] = sij;
            t[(i, j)] = tij;
            t[(j, i)] = tij;
        }
    }
    let mut v = TwoBodyTensor::zeros(n);
    for (i, j, k, l) in v.unique_indices() {
        let val = eri(&functions[i], &functions[j], &functions[k], &functions[l]);
        v.set(i, j, k, l, val)?;
    }
    let e_nuc = nuclear_repulsion(&atoms);
    Ok(MolecularSystem {
        atoms,
        n_electrons,
        t: OneBodyTensor::from_matrix(t)?,
        v,
        s: OneBodyTensor::from_matrix(s)?,
        e_nuc,
        frame: BasisFrame::Ao,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson_boys(x: f64, panels: usize) -> f64 {
        let h = 1.0 / panels as f64;
        let f = |u: f64| (-x * u * u).exp();
        let mut s = f(0.0) + f(1.0);
        for k in 1..panels {
            let u = k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        s * h / 3.0
    }

    #[test]
    fn boys_values() {
        assert_eq!(boys_f0(0.0).unwrap(), 1.0);
        let oracle = simpson_boys(1.0, 1_000_000);
        assert!((boys_f0(1.0).unwrap() - oracle).abs() < 1e-12);
        assert!(boys_f0(2.0).unwrap() < boys_f0(1.0).unwrap());
        for x in [1e-8, 0.1, 0.49, 0.51, 3.0, 30.0] {
            let o = simpson_boys(x, 200_000);
            assert!(((boys_f0(x).unwrap() - o) / o).abs() < 1e-12, "x={x}");
        }
        assert!(matches!(boys_f0(-1.0), Err(Error::NegativeBoysArgument(_))));
    }

    #[test]
    fn ring_and_chain_geometry() {
        let ring = build_geometry(&GeometrySpec::ring(6, 0.95)).unwrap();
        for k in 0..6 {
            let d = dist2(&ring[k], &ring[(k + 1) % 6]).sqrt();
            assert!((d - 0.95).abs() < 1e-12);
            let r = dist2(&ring[k], &[0.0; 3]).sqrt();
            assert!((r - 0.95).abs() < 1e-12);
        }
        let chain = build_geometry(&GeometrySpec::chain(6, 0.95)).unwrap();
        assert!((dist2(&chain[0], &chain[5]).sqrt() - 4.75).abs() < 1e-12);
        let sq = build_geometry(&GeometrySpec::ring(4, 1.0)).unwrap();
        assert!((dist2(&sq[0], &[0.0; 3]).sqrt() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(build_geometry(&GeometrySpec::ring(2, 1.0)).is_err());
        assert!(build_geometry(&GeometrySpec::chain(3, -1.0)).is_err());
    }

    #[test]
    fn single_hydrogen_is_normalized() {
        let sys = compute_integrals(&[[0.0; 3]], BasisName::Sto6g).unwrap();
        assert!((sys.s.matrix()[(0, 0)] - 1.0).abs() < 1e-10);
        // STO-6G hydrogen energy is close to -0.4710 hartree.
        assert!((sys.t.matrix()[(0, 0)] + 0.47103).abs() < 1e-4);
    }

    #[test]
    fn non_s_shells_are_rejected() {
        assert!(check_shells(&[ShellKind::S, ShellKind::S]).is_ok());
        assert!(matches!(check_shells(&[ShellKind::S, ShellKind::P]), Err(Error::UnsupportedBasis(_))));
    }

    #[test]
    fn translation_invariance_and_schwarz() {
        let geo = build_geometry(&GeometrySpec::chain(3, 0.9)).unwrap();
        let a = compute_integrals(&geo, BasisName::Dz).unwrap();
        let shifted: Vec<[f64; 3]> = geo.iter().map(|p| [p[0] + 0.3, p[1] - 1.1, p[2] + 2.0]).collect();
        let b = compute_integrals(&shifted, BasisName::Dz).unwrap();
        assert!((a.t.matrix() - b.t.matrix()).amax() < 1e-10);
        assert!((a.s.matrix() - b.s.matrix()).amax() < 1e-10);
        for (x, y) in a.v.values().iter().zip(b.v.values()) {
            assert!((x - y).abs() < 1e-10);
        }
        let n = a.n_orbitals();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let bound = (a.v.get(i, j, i, j) * a.v.get(k, l, k, l)).sqrt();
                        assert!(a.v.get(i, j, k, l).abs() <= bound + 1e-12);
                    }
                }
            }
        }
        let eig = nalgebra::SymmetricEigen::new(a.s.matrix().clone());
        assert!(eig.eigenvalues.min() > 0.0);
    }
}
