//! Exact-diagonalization laboratory for replacing the zero-mode operator of a
//! truncated Bose gas by a complex number.
//!
//! The crate builds gas Hamiltonians on finite Fock spaces, the substituted
//! operators obtained from lower and upper symbols, and checks the chain of
//! partition-function bounds relating them by quadrature over the complex
//! plane.

pub mod coherent;
pub mod error;
pub mod exec;
pub mod fock;
pub mod gas;
pub mod griffiths;
pub mod linalg;
pub mod magnet;
pub mod order;
pub mod quadrature;
pub mod suite;
pub mod thermo;

pub use error::{Error, Result};
pub use exec::Execution;
pub use fock::{FockBasis, MatrixOperator, ModeSet, Truncation, ZeroMode, C64};
