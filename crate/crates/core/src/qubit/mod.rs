//! Qubit encodings of the fermionic Hamiltonians and Trotter gate counts.

mod encode;
mod gates;
mod pauli;

pub use encode::{
    bravyi_kitaev, encode_hamiltonian, jordan_wigner, ladder, ladder_product, number_operator, spin_orbital, Encoding,
};
pub use gates::{count_trotter_gates, sparsity_report, GateCountReport, SparsityRatio};
pub use pauli::{dense_matrix, write_terms, Pauli, PauliString, QubitOperator, MAX_QUBITS, PRUNE_TOLERANCE};
