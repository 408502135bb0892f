//! Harmonic oscillator networks whose first particle is kicked by random
//! collisions with an external medium.
//!
//! The crate covers the exact free flow, the collision jump maps, the
//! resulting piecewise-deterministic process, its first and second moment
//! equations, Gibbs-invariance checks and the dissipative-subspace
//! (Krylov completeness) analysis of the stiffness matrix.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

// `!(x > 0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collisions;
pub mod covariance;
pub mod dissipative;
pub mod error;
pub mod hamiltonian;
pub mod laws;
pub mod linalg;
pub mod pdmp;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stationarity;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network = hamiltonian::OscillatorNetwork<f64>;
pub type State = hamiltonian::PhaseState<f64>;
pub type Symmetric = linalg::SymmetricMatrix<f64>;
pub type Model = collisions::CollisionModel<f64>;
