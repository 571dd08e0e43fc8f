//! Numerical model of a single cavity mode thermalized by a stream of
//! identically prepared two-level systems.
//!
//! The field lives on a truncated Fock space ([`fock`]). Each transit of an
//! atom ([`reservoir`]) applies a Jaynes-Cummings map ([`injection`]); with
//! Poisson arrivals and cavity loss this becomes a master equation
//! ([`master`]) whose diagonal ([`diagonal`]) and coherent
//! ([`coherent`]) limits have closed forms. [`trajectory`] simulates the
//! underlying random process and [`circuit`] maps device parameters of a
//! superconducting implementation onto the model.

pub mod circuit;
pub mod coherent;
pub mod diagonal;
pub mod error;
pub mod fock;
pub mod injection;
pub mod master;
pub mod reservoir;
pub mod sparse;
pub mod trajectory;

pub use error::{Error, Result, Warning};
pub use fock::{DensityMatrix, TruncationPolicy, C64};
pub use master::{GeneratorMatrix, MaserParams};
pub use reservoir::{AtomState, BathParams};
