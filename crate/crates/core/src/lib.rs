pub mod error;
pub mod fci;
pub mod fcidump;
pub mod gf2;
pub mod grid;
pub mod hamiltonian;
pub mod integrals;
pub mod linalg;
pub mod lm;
pub mod pipeline;
pub mod qubit;
pub mod dsem;

pub use error::{Error, Result};
