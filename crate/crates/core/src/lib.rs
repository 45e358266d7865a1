//! Berry phases and holonomies of coherent and squeezed-coherent Landau-level
//! states, computed from closed-form connections and checked against
//! independent numerical routes: finite-difference connections of embedded
//! states, path-ordered products, brute-force time evolution and real-space
//! quadrature.

pub mod adiabatic;
pub mod connection;
pub mod error;
pub mod flux;
pub mod fock;
pub mod holonomy;
pub mod linalg;
pub mod operators;
pub mod scenario;

pub use error::{Error, Result};
pub use fock::{FockBasis, OperatorMatrix, ParameterPoint, Role, StateVector};
