//! Numerical chain closing for partially hyperbolic skew products of `T^3`.
//!
//! The pipeline runs: box-graph search for ε-pseudo-orbits
//! ([`chain_engine`]), upgrade to center pseudo-orbits ([`center_shadowing`]),
//! lifting to the center lines and sign-ordering of the jumps
//! ([`center_lift`]), and finally the search for the perturbation parameter
//! that closes or connects the chain with a genuine orbit
//! ([`closing_solver`]). [`lab`] wires the stages into reproducible scenarios.

pub mod center_lift;
pub mod center_shadowing;
pub mod chain_engine;
pub mod closing_solver;
pub mod lab;
pub mod models;
pub mod numerics;

pub use models::{SkewProductSystem, TorusPoint};
