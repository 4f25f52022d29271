//! Periodic 1D grid, linear-hat deposition/interpolation and the spectral
//! Poisson solver.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

const DEPOSIT_CHUNKS: usize = 16;
const DEPOSIT_MIN_CHUNK: usize = 8192;

/// `n` cells of width `dx` on the periodic interval `[0, length)`; cell `k`
/// covers `[k dx, (k+1) dx)` and has centre `(k + 1/2) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicGrid {
    length: f64,
    n: usize,
}

impl PicGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid("length", format!("must be positive, got {length}")));
        }
        if n < 2 {
            return Err(Error::invalid("cells", format!("need at least 2 cells, got {n}")));
        }
        Ok(Self { length, n })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dx()
    }

    /// Maps `x` into `[0, length)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let y = x.rem_euclid(self.length);
        // rem_euclid can round up to exactly `length` for tiny negative x.
        if y >= self.length {
            0.0
        } else {
            y
        }
    }

    /// Cell containing `x` (assumed wrapped).
    pub fn cell_of(&self, x: f64) -> usize {
        ((x / self.dx()) as usize).min(self.n - 1)
    }

    /// The two cells whose hats overlap `x`, with their weights. Distances use
    /// the minimal periodic image, so the weights always sum to one.
    pub fn hat_weights(&self, x: f64) -> [(usize, f64); 2] {
        let s = x / self.dx() - 0.5;
        let k0 = s.floor();
        let frac = s - k0;
        let n = self.n as i64;
        let left = (k0 as i64).rem_euclid(n) as usize;
        let right = (left + 1) % self.n;
        [(left, 1.0 - frac), (right, frac)]
    }

    /// `S(x - x_k)` for the linear hat of half-width `dx`, minimal image.
    pub fn shape(&self, x: f64, k: usize) -> f64 {
        let mut d = (x - self.center(k)).rem_euclid(self.length);
        if d > 0.5 * self.length {
            d -= self.length;
        }
        (1.0 - d.abs() / self.dx()).max(0.0)
    }
}

/// `sum_i w_i S(x_k - x_i)` on every cell, accumulated over fixed chunks that
/// are merged in order.
fn deposit(grid: &PicGrid, positions: &[f64], weight: impl Fn(usize) -> f64 + Sync) -> Vec<f64> {
    let chunk = positions.len().div_ceil(DEPOSIT_CHUNKS).max(DEPOSIT_MIN_CHUNK);
    let partials: Vec<Vec<f64>> = positions
        .par_chunks(chunk)
        .enumerate()
        .map(|(c, xs)| {
            let mut acc = vec![0.0; grid.cells()];
            for (j, &x) in xs.iter().enumerate() {
                let w = weight(c * chunk + j);
                for (k, s) in grid.hat_weights(x) {
                    acc[k] += w * s;
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; grid.cells()];
    for p in &partials {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    out
}

/// `rho_k = (q/dx) sum_i S(x_i - x_k) - rho_0`, with `rho_0` the mean of the
/// first term (neutralising background).
pub fn deposit_charge(grid: &PicGrid, positions: &[f64], q: f64) -> Vec<f64> {
    let scale = q / grid.dx();
    let mut rho = deposit(grid, positions, |_| scale);
    let mean = rho.iter().sum::<f64>() / grid.cells() as f64;
    rho.iter_mut().for_each(|r| *r -= mean);
    rho
}

/// `J_k = (q/dx) sum_i S(x_k - x_i) v_i` and its mean over cells.
pub fn deposit_current(grid: &PicGrid, positions: &[f64], vx: &[f64], q: f64) -> (Vec<f64>, f64) {
    let scale = q / grid.dx();
    let j = deposit(grid, positions, |i| scale * vx[i]);
    let mean = j.iter().sum::<f64>() / grid.cells() as f64;
    (j, mean)
}

/// `E(x) = sum_k E_k S(x_k - x)`.
pub fn interpolate_field(grid: &PicGrid, field: &[f64], x: f64) -> f64 {
    grid.hat_weights(x).iter().map(|&(k, w)| field[k] * w).sum()
}

/// Spectral solve of `-phi'' = rho` on the periodic grid.
pub struct PoissonSolver {
    grid: PicGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver").field("grid", &self.grid).finish()
    }
}

impl PoissonSolver {
    pub fn new(grid: PicGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.cells()),
            inverse: planner.plan_fft_inverse(grid.cells()),
        }
    }

    /// Returns `(phi, E)` at the cell centres with `E = -phi'` taken
    /// spectrally. The mean mode is dropped; the Nyquist mode of `E` is zero.
    pub fn solve(&self, rho: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.grid.cells();
        if rho.len() != n {
            return Err(Error::GridMismatch(format!(
                "{} charge values for {n} cells",
                rho.len()
            )));
        }
        let mut hat: Vec<Complex<f64>> = rho.iter().map(|&r| Complex::new(r, 0.0)).collect();
        self.forward.process(&mut hat);
        let base = 2.0 * std::f64::consts::PI / self.grid.length();
        let mut phi_hat = vec![Complex::new(0.0, 0.0); n];
        let mut e_hat = vec![Complex::new(0.0, 0.0); n];
        for m in 1..n {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            let kappa = base * signed;
            phi_hat[m] = hat[m] / (kappa * kappa);
            if 2 * m != n {
                e_hat[m] = Complex::new(0.0, -kappa) * phi_hat[m];
            }
        }
        self.inverse.process(&mut phi_hat);
        self.inverse.process(&mut e_hat);
        let inv_n = 1.0 / n as f64;
        Ok((
            phi_hat.iter().map(|c| c.re * inv_n).collect(),
            e_hat.iter().map(|c| c.re * inv_n).collect(),
        ))
    }
}
