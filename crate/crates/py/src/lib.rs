//! Python module `dsem`: thin wrappers returning plain Python values.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dsem_core::fci::{solve_spectrum, FciHamiltonian, SolveMode};
use dsem_core::pipeline::{run_pipeline, BuiltinSystem, RunConfig};
use dsem_core::qubit::{count_trotter_gates, encode_hamiltonian, Encoding, PauliString};

fn err(e: dsem_core::Error) -> PyErr {
    match e {
        dsem_core::Error::Config(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyfunction]
fn builtin_systems() -> Vec<&'static str> {
    BuiltinSystem::ALL.iter().map(|s| s.name()).collect()
}

/// Runs the pipeline for a TOML configuration and returns the report as JSON.
#[pyfunction]
fn run(config_toml: &str) -> PyResult<String> {
    let config = RunConfig::from_toml(config_toml).map_err(err)?;
    let artifacts = run_pipeline(&config).map_err(err)?;
    match artifacts.report {
        Some(r) => serde_json::to_string(&r).map_err(|e| PyRuntimeError::new_err(e.to_string())),
        None => Ok("null".into()),
    }
}

/// Total (electronic plus nuclear) FCI ground-state energy of a built-in system.
#[pyfunction]
#[pyo3(signature = (system, mode = "auto"))]
fn fci_energy(system: &str, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "auto" => SolveMode::Auto,
        "full" => SolveMode::FullSpectrum,
        "lanczos" => SolveMode::GroundLanczos,
        m => return Err(PyValueError::new_err(format!("unknown mode '{m}'"))),
    };
    let sys = BuiltinSystem::from_name(system).and_then(|b| b.build()).map_err(err)?;
    let h = FciHamiltonian::from_system(&sys).map_err(err)?;
    Ok(solve_spectrum(&h, sys.n_electrons, mode).map_err(err)?.ground_energy())
}

/// `(coefficient, letters)` pairs of the qubit Hamiltonian of a built-in system.
#[pyfunction]
#[pyo3(signature = (system, encoding = "jw"))]
fn qubit_terms(system: &str, encoding: &str) -> PyResult<Vec<(f64, String)>> {
    let enc: Encoding = encoding.parse().map_err(err)?;
    let sys = BuiltinSystem::from_name(system).and_then(|b| b.build()).map_err(err)?;
    let terms = encode_hamiltonian(sys.t.matrix(), &sys.v, sys.e_nuc, enc).map_err(err)?;
    Ok(terms.iter().map(|t| (t.coefficient, t.label())).collect())
}

/// `(sqg, cnot)` for one Trotter step over the given strings.
#[pyfunction]
#[pyo3(signature = (terms, encoding = "jw"))]
fn gate_counts(terms: Vec<(f64, String)>, encoding: &str) -> PyResult<(usize, usize)> {
    let enc: Encoding = encoding.parse().map_err(err)?;
    let strings = terms
        .iter()
        .map(|(c, l)| PauliString::parse(l, *c).ok_or_else(|| PyValueError::new_err(format!("bad Pauli string '{l}'"))))
        .collect::<PyResult<Vec<_>>>()?;
    let r = count_trotter_gates(&strings, enc).map_err(err)?;
    Ok((r.sqg, r.cnot))
}

#[pymodule]
fn dsem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(builtin_systems, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(fci_energy, m)?)?;
    m.add_function(wrap_pyfunction!(qubit_terms, m)?)?;
    m.add_function(wrap_pyfunction!(gate_counts, m)?)?;
    Ok(())
}
