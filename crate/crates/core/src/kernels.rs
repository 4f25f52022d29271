//! Landau collision kernel and the coefficients derived from it.
//!
//! For a relative velocity `z` the kernel is
//! `A(z) = lambda |z|^gamma (|z|^2 I - z z^T)`, which is `lambda |z|^(gamma+2)`
//! times the orthogonal projector onto `z^perp`. Everything here is a pure
//! function of `z` and the [`KernelParams`].

use serde::{Deserialize, Serialize};

use crate::{Error, Mat, Result, Velocity};

/// Relative velocities shorter than this are treated as a coincident pair.
///
/// The collision steppers leave such pairs untouched; the kernel functions
/// report [`Error::DegenerateRelativeVelocity`] where the value would be
/// singular.
pub const Z_FLOOR: f64 = 1e-14;

/// Collision strength `lambda` and kernel exponent `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl KernelParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(
                "lambda",
                format!("must be finite and >= 0, got {lambda}"),
            ));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be finite"));
        }
        Ok(Self { lambda, gamma })
    }

    /// Maxwell molecules (`gamma = 0`) with the strength used by the BKW
    /// solutions: `1/8` in 2D and `1/12` in 3D.
    pub fn maxwell_bkw(dim: usize) -> Self {
        let lambda = if dim == 2 { 1.0 / 8.0 } else { 1.0 / 12.0 };
        Self { lambda, gamma: 0.0 }
    }

    /// Whether `gamma` lies in the admissible range `(-dim-1, 1]`.
    pub fn is_admissible(&self, dim: usize) -> bool {
        self.gamma > -(dim as f64) - 1.0 && self.gamma <= 1.0
    }

    /// Logs a warning when `gamma` is outside `(-dim-1, 1]`. Such exponents
    /// (e.g. `gamma = -3` in 2D) are still simulated.
    pub fn warn_if_inadmissible(&self, dim: usize) {
        if !self.is_admissible(dim) {
            log::warn!(
                "gamma = {} is outside the admissible range (-{}, 1] for dimension {dim}",
                self.gamma,
                dim + 1
            );
        }
    }

    /// `|z|^gamma`, failing only when `gamma < 0` and `z` is degenerate.
    fn radial_power(&self, r: f64) -> Result<f64> {
        if self.gamma == 0.0 {
            Ok(1.0)
        } else if self.gamma < 0.0 && r < Z_FLOOR {
            Err(Error::DegenerateRelativeVelocity { norm: r })
        } else {
            Ok(r.powf(self.gamma))
        }
    }
}

fn nondegenerate_norm<const D: usize>(z: &Velocity<D>) -> Result<f64> {
    let r = z.norm();
    if r < Z_FLOOR || !r.is_finite() {
        Err(Error::DegenerateRelativeVelocity { norm: r })
    } else {
        Ok(r)
    }
}

/// `A(z) = lambda |z|^gamma (|z|^2 I - z z^T)`.
pub fn kernel_a<const D: usize>(z: &Velocity<D>, p: &KernelParams) -> Result<Mat<D>> {
    let r2 = z.norm_squared();
    let scale = p.lambda * p.radial_power(r2.sqrt())?;
    Ok((Mat::<D>::identity() * r2 - z * z.transpose()) * scale)
}

/// Drift `K(z) = div A(z) = (1 - d) lambda |z|^gamma z`.
pub fn kernel_k<const D: usize>(z: &Velocity<D>, p: &KernelParams) -> Result<Velocity<D>> {
    let scale = (1.0 - D as f64) * p.lambda * p.radial_power(z.norm())?;
    Ok(z * scale)
}

/// Closed-form square root of `A`:
/// `sigma(z) = sqrt(lambda) |z|^(gamma/2 + 1) (I - z z^T / |z|^2)`.
pub fn kernel_sigma<const D: usize>(z: &Velocity<D>, p: &KernelParams) -> Result<Mat<D>> {
    let r = nondegenerate_norm(z)?;
    let scale = p.lambda.sqrt() * r.powf(0.5 * p.gamma + 1.0);
    Ok(projection(z)? * scale)
}

/// Orthogonal projector onto the plane perpendicular to `z`.
pub fn projection<const D: usize>(z: &Velocity<D>) -> Result<Mat<D>> {
    let r = nondegenerate_norm(z)?;
    let e = z / r;
    Ok(Mat::<D>::identity() - e * e.transpose())
}

/// Time change of the relative-velocity direction: within a collision window
/// `z / |z|` is a standard spherical Brownian motion run at speed
/// `k = 4 lambda |z|^gamma`.
pub fn time_scale_k<const D: usize>(z: &Velocity<D>, p: &KernelParams) -> Result<f64> {
    Ok(4.0 * p.lambda * p.radial_power(z.norm())?)
}
