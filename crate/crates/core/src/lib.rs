//! Density-density response functions of discretized one-dimensional
//! quantum models.
//!
//! The crate covers the whole pipeline from a finite-difference one-body
//! Hamiltonian to the poles of the RPA response:
//!
//! * [`grid`] builds grids, Hamiltonians and orbitals,
//! * [`kernels`] assembles the interaction kernel and its square root,
//! * [`response`] holds the non-interacting response in both domains,
//! * [`exact`] is the exact two-fermion reference with TDSE propagation,
//! * [`dyson`] solves the time-domain Dyson equation and its inverse,
//! * [`poles`] locates and ranks the RPA poles in frequency space.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dyson;
pub mod error;
pub mod exact;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod poles;
pub mod response;
pub mod suite;

pub use error::{Error, Result};
