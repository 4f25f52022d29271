//! Stochastic particle solvers for the Landau collision equation.
//!
//! Collisions are modelled pairwise: in every collision window the particles
//! are randomly paired and each pair's relative velocity performs a
//! time-changed spherical Brownian motion while the pair's centre of mass
//! stays fixed. Sampling that motion exactly (instead of discretising the
//! SDE) gives a scheme that conserves momentum and kinetic energy to round-off
//! and costs `O(N)` per step.
//!
//! Module map:
//!
//! * [`kernels`]: Landau kernel `A`, drift `K = div A`, `sqrt(A)`, projector.
//! * [`sphere`]: spherical Brownian motion samplers on S¹ and S².
//! * [`collision`]: pairing, the SBM and Euler–Maruyama collision steps, and
//!   the homogeneous simulation driver.
//! * [`analytic`]: BKW solutions and the initial conditions used for testing.
//! * [`diagnostics`]: mollified densities, relative L2 error, entropy, moments.
//! * [`vpl`]: 1D-2V particle-in-cell Vlasov–Poisson–Landau solver.
//! * [`stats`]: goodness-of-fit statistics and line fits used by the checks.

pub mod analytic;
pub mod collision;
pub mod diagnostics;
pub mod kernels;
pub mod rng;
pub mod sphere;
pub mod stats;
pub mod vpl;

mod error;

pub use error::{Error, Result};

/// Velocity (or relative velocity) in `D` dimensions.
pub type Velocity<const D: usize> = nalgebra::SVector<f64, D>;

/// `D x D` matrix, used for the collision kernel and its square root.
pub type Mat<const D: usize> = nalgebra::SMatrix<f64, D, D>;

/// Only two- and three-dimensional velocity spaces are supported.
pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}
