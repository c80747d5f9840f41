//! Gate counts for one first-order Trotter step.

use serde::Serialize;

use super::encode::Encoding;
use super::pauli::{Pauli, PauliString};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GateCountReport {
    pub transform: Encoding,
    pub sqg: usize,
    pub cnot: usize,
    /// Non-identity strings, i.e. exponentials in the step.
    pub n_terms: usize,
    pub n_qubits: usize,
}

/// Each string of weight `w` is exponentiated by a CNOT ladder (2(w - 1)
/// CNOTs), one Rz, and a basis change in and out for every X and Y letter.
/// No cancellation between neighbouring exponentials.
pub fn count_trotter_gates(terms: &[PauliString], transform: Encoding) -> Result<GateCountReport> {
    let first = terms.first().ok_or(Error::EmptyTerms)?;
    let mut report = GateCountReport { transform, sqg: 0, cnot: 0, n_terms: 0, n_qubits: first.n_qubits };
    for s in terms {
        let w = s.weight();
        if w == 0 {
            continue;
        }
        report.n_terms += 1;
        report.cnot += 2 * (w - 1);
        report.sqg += 1 + 2 * (s.count(Pauli::X) + s.count(Pauli::Y));
    }
    Ok(report)
}

/// Full over fictitious counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsityRatio {
    pub transform: Encoding,
    pub sqg: f64,
    pub cnot: f64,
    pub terms: f64,
}

pub fn sparsity_report(full: &GateCountReport, fictitious: &GateCountReport) -> Result<SparsityRatio> {
    if full.transform != fictitious.transform {
        return Err(Error::Config(format!("cannot compare {} with {} counts", full.transform, fictitious.transform)));
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::INFINITY } else { a as f64 / b as f64 };
    Ok(SparsityRatio {
        transform: full.transform,
        sqg: ratio(full.sqg, fictitious.sqg),
        cnot: ratio(full.cnot, fictitious.cnot),
        terms: ratio(full.n_terms, fictitious.n_terms),
    })
}
