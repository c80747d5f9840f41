//! Molpro-style FCIDUMP reading and writing.
//!
//! Integral lines are `value i j k l` with 1-based orbital indices in chemists'
//! notation. `k = l = 0` marks a one-body element and `i = j = k = l = 0` the
//! core (nuclear repulsion) energy.

use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, FcidumpErrorKind, Result};
use crate::hamiltonian::{BasisFrame, MolecularSystem, OneBodyTensor, TwoBodyTensor};

fn err(line: usize, kind: FcidumpErrorKind) -> Error {
    Error::Fcidump { line, kind }
}

struct Header {
    norb: usize,
    nelec: usize,
    /// Line number of the first integral line (1-based).
    body_start: usize,
}

fn parse_header(lines: &[&str]) -> Result<Header> {
    let mut text = String::new();
    let mut end = None;
    for (idx, line) in lines.iter().enumerate() {
        let trimmed = line.trim();
        text.push_str(trimmed);
        text.push(' ');
        let upper = trimmed.to_ascii_uppercase();
        if upper.starts_with("&END") || upper == "/" || upper.ends_with("&END") || (idx > 0 && upper.ends_with('/')) {
            end = Some(idx);
            break;
        }
    }
    let end = end.ok_or_else(|| err(1, FcidumpErrorKind::MalformedHeader("missing &END terminator".into())))?;
    let upper = text.to_ascii_uppercase();
    if !upper.trim_start().starts_with("&FCI") {
        return Err(err(1, FcidumpErrorKind::MalformedHeader("expected &FCI".into())));
    }
    let find = |key: &str| -> Result<usize> {
        let pos = upper
            .match_indices(key)
            .find(|(p, _)| {
                let before = upper[..*p].chars().last();
                !matches!(before, Some(c) if c.is_ascii_alphanumeric())
            })
            .map(|(p, _)| p)
            .ok_or_else(|| err(1, FcidumpErrorKind::MalformedHeader(format!("missing {key}"))))?;
        let rest = upper[pos + key.len()..].trim_start();
        let rest = rest
            .strip_prefix('=')
            .ok_or_else(|| err(1, FcidumpErrorKind::MalformedHeader(format!("{key} without '='"))))?;
        let digits: String = rest.trim_start().chars().take_while(|c| c.is_ascii_digit()).collect();
        digits
            .parse()
            .map_err(|_| err(1, FcidumpErrorKind::MalformedHeader(format!("{key} is not an integer"))))
    };
    Ok(Header { norb: find("NORB")?, nelec: find("NELEC")?, body_start: end + 2 })
}

fn parse_index(tok: &str, line: usize, norb: usize) -> Result<usize> {
    let v: usize = tok.parse().map_err(|_| err(line, FcidumpErrorKind::NonNumeric(tok.to_string())))?;
    if v > norb {
        return Err(err(line, FcidumpErrorKind::IndexOutOfRange(v)));
    }
    Ok(v)
}

/// Parses FCIDUMP text. Orbitals are treated as orthonormal (S = I, MO frame).
pub fn parse_fcidump(text: &str) -> Result<MolecularSystem> {
    let lines: Vec<&str> = text.lines().collect();
    let header = parse_header(&lines)?;
    let n = header.norb;
    let mut t = DMatrix::zeros(n, n);
    let mut v = TwoBodyTensor::zeros(n);
    let mut e_nuc = 0.0;
    for (offset, raw) in lines.iter().enumerate().skip(header.body_start - 1) {
        let line_no = offset + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(line_no, FcidumpErrorKind::FieldCount(fields.len())));
        }
        let value: f64 = fields[0]
            .replace(['D', 'd'], "e")
            .parse()
            .map_err(|_| err(line_no, FcidumpErrorKind::NonNumeric(fields[0].to_string())))?;
        let i = parse_index(fields[1], line_no, n)?;
        let j = parse_index(fields[2], line_no, n)?;
        let k = parse_index(fields[3], line_no, n)?;
        let l = parse_index(fields[4], line_no, n)?;
        match (i, j, k, l) {
            (0, 0, 0, 0) => e_nuc = value,
            (i, j, 0, 0) if i > 0 && j > 0 => {
                t[(i - 1, j - 1)] = value;
                t[(j - 1, i - 1)] = value;
            }
            (i, j, k, l) if i > 0 && j > 0 && k > 0 && l > 0 => v.set(i - 1, j - 1, k - 1, l - 1, value)?,
            // Orbital energies (i 0 0 0) carry no Hamiltonian information.
            (_, 0, 0, 0) => {}
            _ => return Err(err(line_no, FcidumpErrorKind::IndexOutOfRange(0))),
        }
    }
    Ok(MolecularSystem {
        atoms: vec![],
        n_electrons: header.nelec,
        t: OneBodyTensor::from_matrix(t)?,
        v,
        s: OneBodyTensor::identity(n),
        e_nuc,
        frame: BasisFrame::Mo,
    })
}

pub fn read_fcidump(path: impl AsRef<Path>) -> Result<MolecularSystem> {
    let text = std::fs::read_to_string(path)?;
    parse_fcidump(&text)
}

/// Serializes with 17 significant digits so that parsing reproduces every bit.
pub fn format_fcidump(system: &MolecularSystem) -> String {
    let n = system.n_orbitals();
    let mut out = String::new();
    let orbsym = vec!["1"; n].join(",");
    let _ = writeln!(out, "&FCI NORB={},NELEC={},MS2=0,", n, system.n_electrons);
    let _ = writeln!(out, " ORBSYM={orbsym},");
    let _ = writeln!(out, " ISYM=1,");
    let _ = writeln!(out, "&END");
    for ((i, j, k, l), val) in system.v.nonzeros(0.0) {
        let _ = writeln!(out, "{:24.16e} {:4} {:4} {:4} {:4}", val, i + 1, j + 1, k + 1, l + 1);
    }
    let t = system.t.matrix();
    for i in 0..n {
        for j in 0..=i {
            if t[(i, j)] != 0.0 {
                let _ = writeln!(out, "{:24.16e} {:4} {:4} {:4} {:4}", t[(i, j)], i + 1, j + 1, 0, 0);
            }
        }
    }
    let _ = writeln!(out, "{:24.16e} {:4} {:4} {:4} {:4}", system.e_nuc, 0, 0, 0, 0);
    out
}

pub fn write_fcidump(system: &MolecularSystem, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_fcidump(system))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_system(n: usize, seed: u64) -> MolecularSystem {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rng.random_range(-2.0..2.0);
                t[(i, j)] = x;
                t[(j, i)] = x;
            }
        }
        let mut v = TwoBodyTensor::zeros(n);
        for (i, j, k, l) in v.unique_indices() {
            v.set(i, j, k, l, rng.random_range(-1.0..1.0)).unwrap();
        }
        MolecularSystem {
            atoms: vec![],
            n_electrons: 4,
            t: OneBodyTensor::from_matrix(t).unwrap(),
            v,
            s: OneBodyTensor::identity(n),
            e_nuc: rng.random_range(0.0..10.0),
            frame: BasisFrame::Mo,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let sys = random_system(4, 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("FCIDUMP");
        write_fcidump(&sys, &path).unwrap();
        let back = read_fcidump(&path).unwrap();
        assert_eq!(back.n_electrons, 4);
        assert_eq!(back.e_nuc.to_bits(), sys.e_nuc.to_bits());
        assert_eq!(back.v.values(), sys.v.values());
        assert_eq!(back.t.matrix(), sys.t.matrix());
    }

    #[test]
    fn core_energy_only() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n ORBSYM=1,1,\n ISYM=1,\n&END\n  1.5  0 0 0 0\n";
        let sys = parse_fcidump(text).unwrap();
        assert_eq!(sys.e_nuc, 1.5);
        assert!(sys.t.matrix().iter().all(|&x| x == 0.0));
        assert!(sys.v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn distinct_parse_errors_with_line_numbers() {
        let bad_header = "&FCI NELEC=2,\n&END\n";
        assert!(matches!(
            parse_fcidump(bad_header),
            Err(Error::Fcidump { kind: FcidumpErrorKind::MalformedHeader(_), .. })
        ));
        let out_of_range = "&FCI NORB=2,NELEC=2,\n&END\n 0.5 1 1 3 1\n";
        match parse_fcidump(out_of_range) {
            Err(Error::Fcidump { line: 3, kind: FcidumpErrorKind::IndexOutOfRange(3) }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let non_numeric = "&FCI NORB=2,NELEC=2,\n&END\n 0.5 1 1 1 1\n abc 1 1 0 0\n";
        match parse_fcidump(non_numeric) {
            Err(Error::Fcidump { line: 4, kind: FcidumpErrorKind::NonNumeric(_) }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fortran_exponents_and_slash_terminator() {
        let text = " &FCI NORB=1,NELEC=2,MS2=0,\n  ORBSYM=1,\n  ISYM=1\n /\n 0.5D+00 1 1 1 1\n -1.0D0 1 1 0 0\n";
        let sys = parse_fcidump(text).unwrap();
        assert_eq!(sys.v.get(0, 0, 0, 0), 0.5);
        assert_eq!(sys.t.matrix()[(0, 0)], -1.0);
    }
}
