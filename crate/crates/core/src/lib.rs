//! Stein's method for normal, Poisson and Poisson-process approximation,
//! with every error bound certified against exactly computed distances.
//!
//! The crate is organised by route:
//!
//! * [`dist`] is the exact distribution engine and distance oracle;
//! * [`stein_normal`] and [`stein_poisson`] hold the Stein operators and
//!   exact equation solvers, plus the classical bounds they yield;
//! * [`generator`] derives operators from Markov generators and solves
//!   Poisson equations on finite chains;
//! * [`exchangeable`] builds exact exchangeable pairs and checks their
//!   identities and the resulting Kolmogorov bound;
//! * [`concentration`] implements the K-function concentration argument;
//! * [`point_process`] handles Poisson process approximation on a finite
//!   carrier space.

pub mod certificate;
pub mod concentration;
pub mod dist;
pub mod error;
pub mod exchangeable;
pub mod functions;
pub mod generator;
pub mod point_process;
pub mod stein_normal;
pub mod stein_poisson;

pub use certificate::{BoundCertificate, ChainCheck, Scale};
pub use dist::{DistanceInterval, FiniteRv, LatticePmf};
pub use error::{Error, Result};
pub use functions::{Polynomial, Smooth, TestFunction, C1, C2};
