//! Numerical laboratory for linear transport systems with finitely many
//! speeds: a density vector `f(x, t)` whose components travel with fixed
//! velocities and exchange mass through a Markov switching graph.
//!
//! The crate computes the drift velocity and diffusion matrix of the
//! large-time parabolic limit by three independent routes (principal minors
//! of the transition matrix, two-tree spanning forests, and numerical
//! differentiation of the slow dispersion branch), propagates the system
//! exactly per Fourier mode on a periodic box, measures algebraic decay
//! rates against the limiting heat kernel, and cross-checks everything with
//! a Monte Carlo particle ensemble of the underlying correlated random walk.

pub mod cli;
pub mod config;
pub mod dispersion;
pub mod error;
pub mod forests;
pub mod linalg;
pub mod model;
pub mod par;
pub mod particles;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{build_transition_matrix, TransitionMatrix, VelocityModel};
