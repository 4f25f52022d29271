//! Mollified densities, relative L2 error, entropy and moments.

mod grid;

pub use grid::{DensityGrid, GridSpec};

use rayon::prelude::*;

use crate::{Error, Result, Velocity};

/// Default mollifier variance.
pub const DEFAULT_EPS: f64 = 0.01;

/// Gaussian tails beyond this many standard deviations are dropped.
pub const TRUNCATION_SIGMAS: f64 = 6.0;

const KDE_CHUNKS: usize = 16;
const KDE_MIN_CHUNK: usize = 4096;

/// Diagnostics recorded at one checkpoint.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub momentum: Vec<f64>,
    pub kinetic_energy: f64,
    pub entropy: Option<f64>,
    pub rel_l2_error: Option<f64>,
}

/// Total momentum and kinetic energy, plus per-particle values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<const D: usize> {
    pub momentum: Velocity<D>,
    pub kinetic_energy: f64,
    pub mean_velocity: Velocity<D>,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `p = sum v_i` and `E = 1/2 sum |v_i|^2`, with compensated summation.
pub fn moments<const D: usize>(velocities: &[Velocity<D>]) -> Moments<D> {
    let mut p = [Neumaier::default(); D];
    let mut e = Neumaier::default();
    for v in velocities {
        for (acc, x) in p.iter_mut().zip(v.iter()) {
            acc.add(*x);
        }
        e.add(0.5 * v.norm_squared());
    }
    let momentum = Velocity::<D>::from_fn(|a, _| p[a].value());
    let kinetic_energy = e.value();
    let n = velocities.len().max(1) as f64;
    Moments {
        momentum,
        kinetic_energy,
        mean_velocity: momentum / n,
        mean_energy: kinetic_energy / n,
    }
}

/// `f_eps(v_l) = (1/N) sum_i psi_eps(v_l - v_i)`, `psi_eps` the centred
/// Gaussian with covariance `eps I`, evaluated at every cell centre of `spec`.
///
/// Particles are split into a fixed number of contiguous chunks whose partial
/// grids are added in chunk order, so the result does not depend on the
/// thread count.
pub fn mollified_density<const D: usize>(velocities: &[Velocity<D>], eps: f64, spec: &GridSpec) -> Result<DensityGrid> {
    if velocities.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
    }
    if spec.dim() != D {
        return Err(Error::GridMismatch(format!("{D}D particles on a {}D grid", spec.dim())));
    }

    let chunk_len = velocities.len().div_ceil(KDE_CHUNKS).max(KDE_MIN_CHUNK);
    let partials: Vec<Vec<f64>> = velocities
        .par_chunks(chunk_len)
        .map(|chunk| {
            let mut acc = vec![0.0; spec.num_cells()];
            let mut weights: [Vec<f64>; D] = std::array::from_fn(|_| Vec::new());
            let mut starts = [0usize; D];
            for v in chunk {
                if axis_weights(v, eps, spec, &mut starts, &mut weights) {
                    scatter(&mut acc, spec.n, &starts, &weights);
                }
            }
            acc
        })
        .collect();

    let mut values = vec![0.0; spec.num_cells()];
    for partial in &partials {
        for (out, x) in values.iter_mut().zip(partial) {
            *out += x;
        }
    }
    let inv_n = 1.0 / velocities.len() as f64;
    values.iter_mut().for_each(|x| *x *= inv_n);
    DensityGrid::from_values(spec.clone(), values)
}

/// One-dimensional Gaussian factors of a particle on each axis. Returns false
/// when the truncated support misses the grid.
fn axis_weights<const D: usize>(
    v: &Velocity<D>,
    eps: f64,
    spec: &GridSpec,
    starts: &mut [usize; D],
    weights: &mut [Vec<f64>; D],
) -> bool {
    let cut = TRUNCATION_SIGMAS * eps.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * eps).sqrt();
    for axis in 0..D {
        let h = spec.spacing(axis);
        let lo = spec.lo[axis];
        let first = ((v[axis] - cut - lo) / h - 0.5).ceil().max(0.0);
        let last = ((v[axis] + cut - lo) / h - 0.5).floor().min(spec.n as f64 - 1.0);
        if !(first <= last) {
            return false;
        }
        let (first, last) = (first as usize, last as usize);
        starts[axis] = first;
        let w = &mut weights[axis];
        w.clear();
        w.extend((first..=last).map(|l| {
            let d = spec.center(axis, l) - v[axis];
            norm * (-0.5 * d * d / eps).exp()
        }));
    }
    true
}

fn scatter<const D: usize>(acc: &mut [f64], n: usize, starts: &[usize; D], weights: &[Vec<f64>; D]) {
    match D {
        2 => {
            for (i, wi) in weights[0].iter().enumerate() {
                let row = (starts[0] + i) * n + starts[1];
                for (cell, wj) in acc[row..row + weights[1].len()].iter_mut().zip(&weights[1]) {
                    *cell += wi * wj;
                }
            }
        }
        3 => {
            for (i, wi) in weights[0].iter().enumerate() {
                for (j, wj) in weights[1].iter().enumerate() {
                    let wij = wi * wj;
                    let row = ((starts[0] + i) * n + starts[1] + j) * n + starts[2];
                    for (cell, wk) in acc[row..row + weights[2].len()].iter_mut().zip(&weights[2]) {
                        *cell += wij * wk;
                    }
                }
            }
        }
        _ => unreachable!("grid dimension is checked on construction"),
    }
}

/// `||ref - est||_2 / ||ref||_2` with the cell-volume weighted discrete norm.
pub fn relative_l2_error(reference: &DensityGrid, estimate: &DensityGrid) -> Result<f64> {
    if !reference.spec.is_congruent(&estimate.spec) {
        return Err(Error::GridMismatch(format!(
            "reference {:?} vs estimate {:?}",
            reference.spec, estimate.spec
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (r, e) in reference.values.iter().zip(&estimate.values) {
        num += (r - e) * (r - e);
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::invalid("reference", "density grid is identically zero"));
    }
    Ok((num / den).sqrt())
}

/// `sum h^d f log f`, with `0 log 0 = 0`.
pub fn entropy(grid: &DensityGrid) -> f64 {
    let s: f64 = grid.values.iter().filter(|&&f| f > 0.0).map(|&f| f * f.ln()).sum();
    s * grid.spec.cell_volume()
}
